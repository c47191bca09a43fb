// Skip-gram word vectors and label co-occurrence vectors.

use clinicode::corpus::LabeledNote;
use clinicode::linalg::cosine;
use clinicode::text::{label_space_of, train_label_embeddings, train_skipgram, SkipGramConfig, Vocabulary};

fn note(text: &str, labels: &[&str]) -> LabeledNote {
    LabeledNote {
        subject_id: 1,
        hadm_id: 1,
        text: text.into(),
        labels: labels.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut notes = Vec::new();
    for _ in 0..30 {
        notes.push(note("chest pain troponin elevated cardiology consult", &["410.71", "414.01"]));
        notes.push(note("cough fever sputum chest xray infiltrate", &["486", "038.9"]));
    }
    let vocab = Vocabulary::build(&notes, 1)?;
    let cfg = SkipGramConfig {
        dim: 16,
        window: 2,
        epochs: 20,
        ..Default::default()
    };
    let words = train_skipgram(&notes, &vocab, &cfg)?;
    let v = |t: &str| words.vector(vocab.id(t)).to_vec();
    println!("cos(troponin, cardiology) = {:.3}", cosine(&v("troponin"), &v("cardiology")));
    println!("cos(troponin, sputum)     = {:.3}", cosine(&v("troponin"), &v("sputum")));

    let labels = label_space_of(&notes);
    let label_vectors = train_label_embeddings(&notes, &labels, &cfg)?;
    let l = |c: &str| label_vectors.vector(c).unwrap().to_vec();
    println!("cos(410.71, 414.01) = {:.3}", cosine(&l("410.71"), &l("414.01")));
    println!("cos(410.71, 486)    = {:.3}", cosine(&l("410.71"), &l("486")));

    let dir = tempfile::tempdir()?;
    words.save(&dir.path().join("words.vec"), &vocab)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
