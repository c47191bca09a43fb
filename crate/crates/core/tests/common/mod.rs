#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clinicode::model::{ModelDims, ModelParams, Mode};
use clinicode::service::{AppState, Pipeline, Store};
use clinicode::snomed::SnomedMapper;
use clinicode::text::Vocabulary;
use clinicode::train::{Checkpoint, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn maps_dir() -> PathBuf {
    fixture_dir().join("maps")
}

/// Labels and their output biases; the first four clear a 0.5 threshold in
/// this order, the last never does.
pub const FIXTURE_LABELS: [(&str, f64); 5] = [
    ("427.31", 6.0),
    ("719.46", 5.0),
    ("480.8", 4.0),
    ("999.99", 3.0),
    ("401.9", -8.0),
];

/// Small random model whose predictions are pinned by its output biases.
pub fn fixture_checkpoint(mode: Mode) -> Checkpoint {
    let vocab = Vocabulary::from_tokens(
        ["patient", "fever", "atrial", "fibrillation", "knee", "pain", "pneumonia"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        1,
    );
    let labels: Vec<String> = FIXTURE_LABELS.iter().map(|(l, _)| l.to_string()).collect();
    let dims = ModelDims {
        vocab_size: vocab.len(),
        embed_dim: 4,
        hidden: 3,
        attention: 3,
        n_labels: labels.len(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut params = ModelParams::init(mode, dims, labels, &mut rng).unwrap();
    params.out_w.fill(0.0);
    for (i, (_, b)) in FIXTURE_LABELS.iter().enumerate() {
        params.out_b.data[i] = *b;
    }
    let config = TrainConfig {
        mode,
        hidden_size: 3,
        attention_size: 3,
        max_sentences: 4,
        max_tokens: 5,
        ..Default::default()
    };
    Checkpoint::new(params, vocab, config)
}

pub fn fixture_mapper() -> SnomedMapper {
    SnomedMapper::load_dir(&maps_dir()).unwrap()
}

pub fn app_state(data_dir: &Path, with_model: bool) -> AppState {
    let pipeline = with_model.then(|| Arc::new(Pipeline::new(fixture_checkpoint(Mode::Hlan), fixture_mapper(), None)));
    AppState {
        pipeline,
        store: Arc::new(Store::open(data_dir).unwrap()),
    }
}
