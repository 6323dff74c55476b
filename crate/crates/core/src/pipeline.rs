//! Per-block glue from records to a released graph and a clustering.

use serde::{Deserialize, Serialize};

use crate::corpus::BlockView;
use crate::entropy::Partition;
use crate::error::{Error, Result};
use crate::graph::{
    build_attribute_edges, build_knn_edges, synthesize_graph, KnnTrace, MessageGraph,
};
use crate::metrics;
use crate::partition::{cluster_with, ClusterOptions, ClusterRun};
use crate::privacy::{sensitivity_report, PrivacyParams, SensitivityReport, SimilarityOracle};

/// A released message graph and how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGraph {
    pub block: Option<u32>,
    pub name: String,
    /// Record id of each node, in node order.
    pub ids: Vec<String>,
    pub trace: KnnTrace,
    pub report: SensitivityReport,
    #[serde(skip)]
    pub graph: Option<MessageGraph>,
}

impl BlockGraph {
    pub fn graph(&self) -> Result<&MessageGraph> {
        self.graph.as_ref().ok_or(Error::EmptyGraph)
    }
}

/// Computes sensitivities, perturbs similarities and builds `E_s ∪ E_a`.
pub fn build_block_graph(
    block: &BlockView<'_>,
    params: &PrivacyParams,
    k_max: usize,
) -> Result<BlockGraph> {
    let mut report = sensitivity_report(block, params)?;
    let oracle = SimilarityOracle::from_report(*block, params, &report);
    let (knn, trace) = build_knn_edges(&oracle, k_max)?;
    let attribute = build_attribute_edges(&oracle);
    let graph = synthesize_graph(block.len(), &knn, &attribute)?;
    report.perturbed_queries = Some(oracle.cache_len() as u64);
    log::info!(
        "{}: n={} k={} edges={} chosen={:?} scale={:.3e}",
        block.name(),
        block.len(),
        trace.chosen_k,
        graph.edge_count(),
        report.chosen,
        report.noise_scale
    );
    Ok(BlockGraph {
        block: block.block(),
        name: block.name(),
        ids: block.ids(),
        trace,
        report,
        graph: Some(graph),
    })
}

/// Clusters from singletons.
pub fn cluster_graph(graph: &MessageGraph, options: &ClusterOptions) -> Result<ClusterRun> {
    cluster_with(graph, options, &Partition::singletons(graph.node_count()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n: usize,
    pub true_classes: usize,
    pub clusters: usize,
    pub ami: f64,
    pub ari: f64,
}

pub fn evaluate(truth: &[String], partition: &Partition) -> Result<Evaluation> {
    let pred = partition.assignment();
    let true_classes = Partition::from_labels(truth.iter()).num_communities();
    Ok(Evaluation {
        n: truth.len(),
        true_classes,
        clusters: partition.num_communities(),
        ami: metrics::ami(truth, pred)?,
        ari: metrics::ari(truth, pred)?,
    })
}

/// Graph, clustering and scores for one block in a single call.
#[derive(Debug, Clone)]
pub struct BlockOutcome {
    pub graph: BlockGraph,
    pub run: ClusterRun,
    pub evaluation: Option<Evaluation>,
}

pub fn run_block(
    block: &BlockView<'_>,
    params: &PrivacyParams,
    k_max: usize,
    options: &ClusterOptions,
) -> Result<BlockOutcome> {
    let graph = build_block_graph(block, params, k_max)?;
    let run = cluster_graph(graph.graph()?, options)?;
    let evaluation = match block.labels() {
        Some(labels) => Some(evaluate(&labels, &run.partition)?),
        None => None,
    };
    Ok(BlockOutcome {
        graph,
        run,
        evaluation,
    })
}
