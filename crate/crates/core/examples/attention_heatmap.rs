// Render a letter's per-label attention as HTML and TSV.

use clinicode::model::{forward, ModelDims, ModelParams, Mode};
use clinicode::text::{structure_document, Vocabulary};
use clinicode::viz::{render_tsv, write_html, VizCode, VizDocument};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let text = "patient with palpitations ecg shows atrial fibrillation started on diltiazem";
    let vocab = Vocabulary::from_tokens(text.split(' ').map(String::from).collect(), 1);
    let dims = ModelDims {
        vocab_size: vocab.len(),
        embed_dim: 6,
        hidden: 4,
        attention: 4,
        n_labels: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = ModelParams::init(Mode::Hlan, dims, vec!["427.31".into(), "401.9".into()], &mut rng)?;
    let doc = structure_document(text, &vocab, 3, 5);
    let (pred, map) = forward(&doc, &params)?;

    let codes = pred
        .ranked()
        .into_iter()
        .map(|(code, probability)| VizCode {
            code,
            probability,
            resolution: None,
        })
        .collect();
    let viz = VizDocument::build(text, &map, Some("427.31"), codes)?;
    let dir = tempfile::tempdir()?;
    let html = dir.path().join("attention.html");
    write_html(&viz, &html)?;
    println!("{} bytes of HTML", std::fs::metadata(&html)?.len());
    print!("{}", render_tsv(&viz));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
