// Train an HLAN model on a synthetic corpus and score it.

use clinicode::corpus::{generate_synthetic_corpus, split_dataset, SyntheticConfig};
use clinicode::metrics::{evaluate_run, EvalOptions};
use clinicode::text::{label_space_of, EmbeddingTable, Vocabulary};
use clinicode::train::{encode_examples, train_with_history, TrainConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_synthetic_corpus(&SyntheticConfig {
        n_docs: 48,
        n_labels: 8,
        mean_labels_per_doc: 3.0,
        mean_tokens_per_doc: 60.0,
        ..Default::default()
    })?;
    let split = split_dataset(&corpus.labeled_notes(), 0.75, 1)?;
    let vocab = Vocabulary::build(&split.train, 1)?;
    let labels = label_space_of(&split.train);
    let config = TrainConfig {
        learning_rate: 0.01,
        hidden_size: 12,
        attention_size: 12,
        max_sentences: 8,
        max_tokens: 12,
        epochs: 25,
        ..Default::default()
    };
    let embeddings = EmbeddingTable::random(vocab.len(), 12, config.seed);
    let examples = encode_examples(&split.train, &vocab, &labels, config.max_sentences, config.max_tokens);
    let outcome = train_with_history(&examples, &config, &vocab, &labels, &embeddings, None)?;
    println!(
        "loss {:.3} -> {:.3}",
        outcome.epoch_losses[0],
        outcome.epoch_losses.last().unwrap()
    );

    let opts = EvalOptions {
        ks: vec![1, 3],
        ..Default::default()
    };
    let train_report = evaluate_run(&outcome.checkpoint, &split.train, &opts)?;
    let test_report = evaluate_run(&outcome.checkpoint, &split.test, &opts)?;
    println!("train\n{}", train_report.to_table());
    println!("test\n{}", test_report.to_table());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
