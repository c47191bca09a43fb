// Save a checkpoint, inspect its header and reload it bit for bit.

use clinicode::model::{forward, ModelDims, ModelParams, Mode};
use clinicode::text::{structure_document, Vocabulary};
use clinicode::train::{Checkpoint, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = Vocabulary::from_tokens(["sepsis", "lactate", "fluids"].map(String::from).to_vec(), 1);
    let dims = ModelDims {
        vocab_size: vocab.len(),
        embed_dim: 4,
        hidden: 3,
        attention: 3,
        n_labels: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = ModelParams::init(Mode::Hlan, dims, vec!["038.9".into(), "995.92".into()], &mut rng)?;
    let ckpt = Checkpoint::new(params, vocab, TrainConfig::default());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.ckpt");
    ckpt.save(&path)?;
    let bytes = std::fs::read(&path)?;
    let header_len = u64::from_le_bytes(bytes[12..20].try_into()?) as usize;
    let header: serde_json::Value = serde_json::from_slice(&bytes[20..20 + header_len])?;
    println!("{} bytes, format {}", bytes.len(), u32::from_le_bytes(bytes[8..12].try_into()?));
    for t in header["tensors"].as_array().unwrap().iter().take(4) {
        println!("  {} {}x{}", t["name"], t["rows"], t["cols"]);
    }

    let back = Checkpoint::load(&path)?;
    let doc = structure_document("sepsis lactate fluids", &back.vocab, 2, 3);
    let (a, _) = forward(&doc, &ckpt.params)?;
    let (b, _) = forward(&doc, &back.params)?;
    assert_eq!(a, b);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
