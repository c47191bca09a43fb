// Resolve ICD-9 codes against a maps directory and summarize the outcomes.

use std::path::Path;

use clinicode::snomed::{mapping_stats, ResolveOptions, SnomedMapper};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let maps = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/maps");
    let mapper = SnomedMapper::load_dir(&maps)?;
    let predicted = ["427.31", "719.46", "480.8", "38.93", "999.99"];
    let resolutions = mapper.resolve_all(&predicted, ResolveOptions { parent_first: true });
    for r in &resolutions {
        println!("{:>7} {}", r.icd_code, r.summary());
    }
    print!("{}", mapping_stats(&resolutions)?.to_table());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
