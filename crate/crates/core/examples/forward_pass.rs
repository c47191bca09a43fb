// One forward pass in both modes: probabilities plus attention maps.

use clinicode::model::{forward, predict_codes, ModelDims, ModelParams, Mode};
use clinicode::text::{structure_document, Vocabulary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = Vocabulary::from_tokens(
        ["atrial", "fibrillation", "rate", "control", "warfarin"].map(String::from).to_vec(),
        1,
    );
    let labels: Vec<String> = ["427.31", "401.9", "428.0"].map(String::from).to_vec();
    let dims = ModelDims {
        vocab_size: vocab.len(),
        embed_dim: 8,
        hidden: 6,
        attention: 6,
        n_labels: labels.len(),
    };
    let doc = structure_document("atrial fibrillation rate control with warfarin", &vocab, 3, 4);

    for mode in [Mode::Han, Mode::Hlan] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ModelParams::init(mode, dims, labels.clone(), &mut rng)?;
        let (pred, attention) = forward(&doc, &params)?;
        println!("{mode:?}: {} parameters, {} attention map(s)", params.n_parameters(), attention.n_groups());
        for (code, p) in pred.ranked() {
            println!("  {code:>7} {p:.4}");
        }
        let label = (mode == Mode::Hlan).then_some("427.31");
        let g = attention.group(label)?;
        let sentence_sum: f64 = attention.sentence[g].iter().sum();
        assert!((sentence_sum - 1.0).abs() < 1e-12);
        println!("  top-2: {:?}", predict_codes(&pred, 0.5, Some(2)));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
