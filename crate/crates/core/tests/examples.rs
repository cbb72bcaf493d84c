//! Runs every example's `main` so the examples keep compiling and working.

macro_rules! example {
    ($name:ident, $file:literal) => {
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));

            #[test]
            fn runs() {
                main().unwrap();
            }
        }
    };
}

example!(parse_datasets, "parse_datasets.rs");
example!(encode_sequence, "encode_sequence.rs");
example!(enhance_augment, "enhance_augment.rs");
example!(train_toy, "train_toy.rs");
example!(fine_tune, "fine_tune.rs");
example!(benchmark, "benchmark.rs");
example!(cli_pipeline, "cli_pipeline.rs");
