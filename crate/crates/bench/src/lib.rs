//! Fixtures shared by the benchmarks in `benches/`.

use rasg_core::corpus::{build_vocabulary, encode_example, make_synthetic_corpus, EncodedExample, SyntheticConfig};
use rasg_core::{Example, Model, ModelConfig, Variant};

/// A freshly initialised desk-scale model and a few synthetic examples.
pub fn desk_fixture(variant: Variant, examples: usize) -> (Model, Vec<Example>, Vec<EncodedExample>) {
    let corpus = make_synthetic_corpus(7, examples, &SyntheticConfig::default()).expect("valid corpus config");
    let vocab = build_vocabulary(&corpus, 5000).expect("non-empty corpus");
    let encoded = corpus.iter().map(|e| encode_example(e, &vocab)).collect();
    let config = ModelConfig {
        variant,
        ..ModelConfig::default()
    };
    let model = Model::new(config, vocab, 7).expect("valid model config");
    (model, corpus, encoded)
}
