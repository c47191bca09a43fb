// Micro/macro F1 and precision@k on hand-made predictions.

use clinicode::metrics::{aggregate_f1, confusion_counts, precision_at_k, MacroScope};

fn codes(c: &[&str]) -> Vec<String> {
    c.iter().map(|s| s.to_string()).collect()
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let gold = vec![codes(&["427.31", "401.9", "428.0"]), codes(&["486"])];
    let predicted = vec![codes(&["427.31", "401.9", "584.9"]), codes(&[])];
    let ranked = vec![codes(&["427.31", "401.9", "584.9", "428.0"]), codes(&["486", "038.9"])];

    let totals = confusion_counts(&predicted, &gold)?;
    println!("pooled {:?}", totals.pooled);
    let space = codes(&["427.31", "401.9", "428.0", "486", "584.9", "038.9"]);
    for scope in [MacroScope::Present, MacroScope::All] {
        let s = aggregate_f1(&totals, &space, scope);
        println!(
            "{scope:?}: micro F1 {:.4}, macro F1 {:.4}, P {:.4}, R {:.4}",
            s.micro_f1, s.macro_f1, s.precision, s.recall
        );
    }
    for k in [1, 2, 4] {
        println!("P@{k} = {:.4}", precision_at_k(&ranked, &gold, k)?);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
