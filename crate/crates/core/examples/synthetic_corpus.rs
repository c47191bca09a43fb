// Generate a MIMIC-shaped synthetic corpus, write its tables and ingest them.

use clinicode::corpus::{build_labeled_notes, code_frequencies, generate_synthetic_corpus, SyntheticConfig, SyntheticCorpus, DISCHARGE_SUMMARY};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let config = SyntheticConfig {
        n_docs: 40,
        n_labels: 15,
        mean_labels_per_doc: 4.0,
        mean_tokens_per_doc: 80.0,
        nursing_notes: 3,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&config)?;
    let dir = tempfile::tempdir()?;
    corpus.write_tables(dir.path())?;
    let (notes, codes) = SyntheticCorpus::read_tables(dir.path())?;
    let (labeled, report) = build_labeled_notes(&notes, &codes, DISCHARGE_SUMMARY);
    println!("{} notes read back, {} filtered by category", labeled.len(), report.wrong_category);
    for (code, n) in code_frequencies(&labeled).iter().take(5) {
        println!("{code:>7} {n}");
    }
    assert_eq!(labeled.len(), 40);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
