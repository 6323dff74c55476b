//! Fixtures shared by the criterion benchmarks in `benches/`.

use privse_core::{generate, Corpus, MessageGraph, PrivacyParams, SynthConfig};

/// Well-separated labeled corpus with `events * per_event` messages.
pub fn corpus(events: usize, per_event: usize) -> Corpus {
    let mut config = SynthConfig::new(events, per_event, 32, 7);
    config.intra_concentration = 10.0;
    generate(&config).expect("valid generator config")
}

/// Released graph of the pooled corpus at `epsilon = 15`.
pub fn graph(corpus: &Corpus) -> MessageGraph {
    let params = PrivacyParams::new(privse_core::Epsilon::Budget(15.0), 7);
    privse_core::build_block_graph(&corpus.pooled(), &params, privse_core::DEFAULT_K_MAX)
        .and_then(|b| b.graph().cloned())
        .expect("graph builds")
}
