macro_rules! example_test {
    ($module:ident, $file:literal, $test:ident) => {
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $test() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example_test!(clean_and_split, "clean_and_split.rs", clean_and_split_runs);
example_test!(synthetic_corpus, "synthetic_corpus.rs", synthetic_corpus_runs);
example_test!(word_embeddings, "word_embeddings.rs", word_embeddings_runs);
example_test!(forward_pass, "forward_pass.rs", forward_pass_runs);
example_test!(train_and_evaluate, "train_and_evaluate.rs", train_and_evaluate_runs);
example_test!(gradient_check, "gradient_check.rs", gradient_check_runs);
example_test!(checkpoint_roundtrip, "checkpoint_roundtrip.rs", checkpoint_roundtrip_runs);
example_test!(evaluation_metrics, "evaluation_metrics.rs", evaluation_metrics_runs);
example_test!(snomed_lookup, "snomed_lookup.rs", snomed_lookup_runs);
example_test!(attention_heatmap, "attention_heatmap.rs", attention_heatmap_runs);
example_test!(review_service, "review_service.rs", review_service_runs);
