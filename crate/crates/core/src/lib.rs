//! Differentially private message graphs and two-dimensional
//! structural-entropy clustering.
//!
//! A [`Corpus`] of embedded messages is split into blocks. Each block's
//! pairwise cosine similarities are perturbed with Laplace noise calibrated
//! to a [`SensitivityReport`], a kNN graph is grown while its one-dimensional
//! entropy keeps falling, and the released [`MessageGraph`] is clustered by
//! greedily minimizing two-dimensional structural entropy over subgraphs.

pub mod corpus;
pub mod entropy;
pub mod error;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod partition;
pub mod pipeline;
pub mod privacy;

pub use corpus::{generate, BlockView, Corpus, MessageRecord, PointsPerEvent, SynthConfig};
pub use entropy::{two_dim_se, vanilla_minimize, CommunityState, Partition};
pub use error::{Error, Result};
pub use graph::{one_dim_se, Edge, KnnTrace, MessageGraph, Provenance, DEFAULT_K_MAX};
pub use metrics::{ami, ari};
pub use partition::{
    cluster, cluster_with, ClusterOptions, ClusterRun, Grouping, DEFAULT_Q0, DEFAULT_Q0_POOLED,
};
pub use pipeline::{
    build_block_graph, cluster_graph, evaluate, run_block, BlockGraph, BlockOutcome, Evaluation,
};
pub use privacy::{Epsilon, PrivacyParams, SensitivityMode, SensitivityReport, SimilarityOracle};
