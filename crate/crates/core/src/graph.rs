//! Private message graph synthesis.
//!
//! The released graph is the union of two edge sets, both weighted by the
//! perturbed similarity oracle:
//!
//! * `E_s`: symmetrized k-nearest-neighbor edges, where `k` grows from 1 and
//!   stops at the first value whose one-dimensional structural entropy fails
//!   to strictly improve;
//! * `E_a`: every pair of messages sharing an attribute token.
//!
//! Weights are clipped into `[W_FLOOR, 1]` so the entropy terms stay defined.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::SimilarityOracle;

/// Smallest released edge weight.
pub const W_FLOOR: f64 = 1e-6;

/// Default upper bound on the neighbor count.
pub const DEFAULT_K_MAX: usize = 40;

pub fn clip_weight(w: f64) -> f64 {
    w.clamp(W_FLOOR, 1.0)
}

/// Undirected edges keyed by `(u, v)` with `u < v`.
pub type EdgeSet = BTreeMap<(usize, usize), f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "SE")]
    Se,
    #[serde(rename = "ATTR")]
    Attr,
    #[serde(rename = "BOTH")]
    Both,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Se => "SE",
            Provenance::Attr => "ATTR",
            Provenance::Both => "BOTH",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "SE" => Some(Provenance::Se),
            "ATTR" => Some(Provenance::Attr),
            "BOTH" => Some(Provenance::Both),
            _ => None,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub provenance: Provenance,
}

/// Undirected weighted graph without self-loops or parallel edges.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageGraph {
    n: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
    degrees: Vec<f64>,
    volume: f64,
}

impl MessageGraph {
    /// Builds a graph over nodes `0..n`. Endpoints are reordered so `u < v`;
    /// edges end up sorted by `(u, v)`.
    pub fn new(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut edges: Vec<Edge> = edges
            .into_iter()
            .map(|mut e| {
                if e.u > e.v {
                    std::mem::swap(&mut e.u, &mut e.v);
                }
                e
            })
            .collect();
        edges.sort_by_key(|e| (e.u, e.v));
        for pair in edges.windows(2) {
            if (pair[0].u, pair[0].v) == (pair[1].u, pair[1].v) {
                return Err(Error::Validation(format!(
                    "duplicate edge ({}, {})",
                    pair[0].u, pair[0].v
                )));
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        let mut degrees = vec![0.0; n];
        for e in &edges {
            if e.u == e.v {
                return Err(Error::Validation(format!("self-loop on node {}", e.u)));
            }
            if e.v >= n {
                return Err(Error::Validation(format!(
                    "edge endpoint {} out of range",
                    e.v
                )));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.u, e.v, e.weight
                )));
            }
            adjacency[e.u].push((e.v, e.weight));
            adjacency[e.v].push((e.u, e.weight));
            degrees[e.u] += e.weight;
            degrees[e.v] += e.weight;
        }
        let volume = degrees.iter().sum();
        Ok(MessageGraph {
            n,
            edges,
            adjacency,
            degrees,
            volume,
        })
    }

    /// Convenience constructor; every edge is tagged [`Provenance::Se`].
    pub fn from_weighted_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        Self::new(
            n,
            edges.iter().map(|&(u, v, weight)| Edge {
                u,
                v,
                weight,
                provenance: Provenance::Se,
            }),
        )
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> f64 {
        self.degrees[node]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Sum of weighted degrees, i.e. twice the total edge weight.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }
}

/// Entropy of the stationary degree distribution, in bits.
pub fn one_dim_se(graph: &MessageGraph) -> Result<f64> {
    degree_entropy(graph.degrees())
}

pub(crate) fn degree_entropy(degrees: &[f64]) -> Result<f64> {
    let volume: f64 = degrees.iter().sum();
    if volume <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    Ok(-degrees
        .iter()
        .filter(|&&d| d > 0.0)
        .map(|&d| {
            let p = d / volume;
            p * p.log2()
        })
        .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnStep {
    pub k: usize,
    pub one_dim_se: f64,
}

/// Every evaluated neighbor count with its entropy, and the count kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnTrace {
    pub steps: Vec<KnnStep>,
    pub chosen_k: usize,
    pub k_max: usize,
}

/// Grows `k` from 1, each node linking to its `k` most similar peers (ties
/// by ascending id), and keeps the last `k` whose entropy strictly dropped.
pub fn build_knn_edges(oracle: &SimilarityOracle<'_>, k_max: usize) -> Result<(EdgeSet, KnnTrace)> {
    let n = oracle.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if k_max == 0 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    let k_max = if k_max >= n {
        log::warn!(
            "k_max {k_max} exceeds block size {n}; clamping to {}",
            n - 1
        );
        n - 1
    } else {
        k_max
    };

    let ranked: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| top_neighbors(oracle, i, k_max))
        .collect();

    // Edges only accumulate as k grows, so E_s(k) is a prefix of `added`.
    let mut present: HashSet<(usize, usize)> = HashSet::with_capacity(n * 2);
    let mut added: Vec<(usize, usize, f64)> = Vec::with_capacity(n * 2);
    let mut degrees = vec![0.0; n];
    let mut steps = Vec::new();
    let mut best = f64::INFINITY;
    let mut chosen = (0, 0);

    for k in 1..=k_max {
        for (i, ranks) in ranked.iter().enumerate() {
            let j = ranks[k - 1];
            let key = (i.min(j), i.max(j));
            if present.insert(key) {
                let w = clip_weight(oracle.get(key.0, key.1));
                degrees[key.0] += w;
                degrees[key.1] += w;
                added.push((key.0, key.1, w));
            }
        }
        let se = degree_entropy(&degrees)?;
        steps.push(KnnStep { k, one_dim_se: se });
        if se < best {
            best = se;
            chosen = (k, added.len());
        } else {
            break;
        }
    }

    let edges = added[..chosen.1]
        .iter()
        .map(|&(u, v, w)| ((u, v), w))
        .collect();
    Ok((
        edges,
        KnnTrace {
            steps,
            chosen_k: chosen.0,
            k_max,
        },
    ))
}

fn top_neighbors(oracle: &SimilarityOracle<'_>, i: usize, k: usize) -> Vec<usize> {
    let mut candidates: Vec<(f64, usize)> = (0..oracle.len())
        .filter(|&j| j != i)
        .map(|j| (oracle.get(i, j), j))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(order);
    candidates.into_iter().map(|(_, j)| j).collect()
}

/// Links every pair of nodes that share a token within some attribute category.
pub fn build_attribute_edges(oracle: &SimilarityOracle<'_>) -> EdgeSet {
    let block = oracle.block();
    let mut postings: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
    for (node, record) in block.records().enumerate() {
        for (category, tokens) in &record.attributes {
            for token in tokens {
                postings
                    .entry((category.as_str(), token.as_str()))
                    .or_default()
                    .push(node);
            }
        }
    }

    let mut pairs = BTreeSet::new();
    for nodes in postings.values() {
        for (a, &u) in nodes.iter().enumerate() {
            for &v in &nodes[a + 1..] {
                pairs.insert((u.min(v), u.max(v)));
            }
        }
    }
    pairs
        .into_iter()
        .map(|(u, v)| ((u, v), clip_weight(oracle.get(u, v))))
        .collect()
}

/// Union of the two edge sets; pairs in both are tagged [`Provenance::Both`].
pub fn synthesize_graph(n: usize, knn: &EdgeSet, attribute: &EdgeSet) -> Result<MessageGraph> {
    let mut merged: BTreeMap<(usize, usize), (f64, Provenance)> = knn
        .iter()
        .map(|(&key, &w)| (key, (w, Provenance::Se)))
        .collect();
    for (&key, &w) in attribute {
        merged
            .entry(key)
            .and_modify(|entry| entry.1 = Provenance::Both)
            .or_insert((w, Provenance::Attr));
    }
    MessageGraph::new(
        n,
        merged
            .into_iter()
            .map(|((u, v), (weight, provenance))| Edge {
                u,
                v,
                weight,
                provenance,
            }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, MessageRecord};

    fn corpus(vectors: &[Vec<f64>], attrs: &[&[&str]]) -> Corpus {
        Corpus::new(
            vectors
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let mut attributes = BTreeMap::new();
                    if let Some(tokens) = attrs.get(i) {
                        for t in *tokens {
                            attributes
                                .entry("entity".to_string())
                                .or_insert_with(BTreeSet::new)
                                .insert(t.to_string());
                        }
                    }
                    MessageRecord {
                        id: format!("m{i}"),
                        block: 0,
                        embedding: v.clone(),
                        attributes,
                        label: None,
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn one_dim_se_closed_forms() {
        let triangle =
            MessageGraph::from_weighted_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        assert!((one_dim_se(&triangle).unwrap() - 3f64.log2()).abs() < 1e-12);

        let edge = MessageGraph::from_weighted_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert!((one_dim_se(&edge).unwrap() - 1.0).abs() < 1e-12);

        let path = MessageGraph::from_weighted_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert!((one_dim_se(&path).unwrap() - 1.5).abs() < 1e-12);

        let empty = MessageGraph::new(3, []).unwrap();
        assert!(matches!(one_dim_se(&empty), Err(Error::EmptyGraph)));
    }

    #[test]
    fn graph_rejects_malformed_edges() {
        assert!(MessageGraph::from_weighted_edges(2, &[(0, 0, 1.0)]).is_err());
        assert!(MessageGraph::from_weighted_edges(2, &[(0, 1, 1.0), (1, 0, 0.5)]).is_err());
        assert!(MessageGraph::from_weighted_edges(2, &[(0, 1, 0.0)]).is_err());
        assert!(MessageGraph::from_weighted_edges(2, &[(0, 2, 1.0)]).is_err());
        let g = MessageGraph::from_weighted_edges(3, &[(2, 0, 0.5), (0, 1, 0.25)]).unwrap();
        assert_eq!((g.edges()[1].u, g.edges()[1].v), (0, 2));
        assert!((g.volume() - 2.0 * g.total_weight()).abs() < 1e-12);
    }

    #[test]
    fn knn_two_nodes() {
        let c = corpus(&[vec![1.0, 0.0], vec![0.6, 0.8]], &[]);
        let oracle = SimilarityOracle::exact(c.pooled());
        let (edges, trace) = build_knn_edges(&oracle, 5).unwrap();
        assert_eq!(trace.chosen_k, 1);
        assert_eq!(trace.k_max, 1);
        assert_eq!(edges.len(), 1);
        assert!((edges[&(0, 1)] - 0.6).abs() < 1e-12);
    }

    /// Degree entropy of the symmetrized top-k graph, computed by brute force.
    fn knn_entropy_by_enumeration(sim: &[Vec<f64>], k: usize) -> f64 {
        let n = sim.len();
        let mut set = BTreeSet::new();
        for (i, row) in sim.iter().enumerate() {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
            for &j in &others[..k] {
                set.insert((i.min(j), i.max(j)));
            }
        }
        let mut deg = vec![0.0; n];
        for &(u, v) in &set {
            let w = sim[u][v].clamp(1e-6, 1.0);
            deg[u] += w;
            deg[v] += w;
        }
        let vol: f64 = deg.iter().sum();
        -deg.iter()
            .map(|d| (d / vol) * (d / vol).log2())
            .sum::<f64>()
    }

    #[test]
    fn knn_two_separated_pairs() {
        let vectors = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.8, 0.6, 0.0],
        ];
        let c = corpus(&vectors, &[]);
        let sim: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| c.pooled().cosine(i, j)).collect())
            .collect();
        let expected: Vec<f64> = (1..=3)
            .map(|k| knn_entropy_by_enumeration(&sim, k))
            .collect();
        assert!(expected[1] >= expected[0]);

        let oracle = SimilarityOracle::exact(c.pooled());
        let (edges, trace) = build_knn_edges(&oracle, 3).unwrap();
        assert_eq!(trace.chosen_k, 1);
        assert_eq!(trace.steps.len(), 2);
        assert!((trace.steps[0].one_dim_se - expected[0]).abs() < 1e-12);
        assert!((trace.steps[1].one_dim_se - expected[1]).abs() < 1e-12);
        assert_eq!(
            edges.keys().copied().collect::<Vec<_>>(),
            vec![(0, 1), (2, 3)]
        );
    }

    #[test]
    fn knn_duplicates_terminate_at_one() {
        let c = corpus(&vec![vec![0.3, 0.7, 0.1]; 12], &[]);
        let oracle = SimilarityOracle::exact(c.pooled());
        let (edges, trace) = build_knn_edges(&oracle, 8).unwrap();
        assert_eq!(trace.chosen_k, 1);
        // node 0 picks node 1, everyone else picks node 0
        assert_eq!(edges.len(), 11);
        assert!(edges.keys().all(|&(u, _)| u == 0));
    }

    #[test]
    fn knn_trace_strictly_decreases_up_to_choice() {
        let vectors: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.cos(), t.sin(), (t * 1.7).cos(), 0.2]
            })
            .collect();
        let c = corpus(&vectors, &[]);
        let oracle = SimilarityOracle::new(c.pooled(), 5, 0.05);
        let (_, trace) = build_knn_edges(&oracle, 10).unwrap();
        let kept = &trace.steps[..trace.chosen_k];
        assert!(kept.windows(2).all(|w| w[1].one_dim_se < w[0].one_dim_se));
        assert!(trace.chosen_k <= trace.k_max);
    }

    #[test]
    fn attribute_edges() {
        let vectors = vec![vec![1.0, 0.0]; 4];
        let none = corpus(&vectors, &[]);
        assert!(build_attribute_edges(&SimilarityOracle::exact(none.pooled())).is_empty());

        let shared = corpus(&vectors, &[&["x"], &["x", "y"], &["x"], &["z"]]);
        let oracle = SimilarityOracle::new(shared.pooled(), 1, 0.1);
        let edges = build_attribute_edges(&oracle);
        assert_eq!(
            edges.keys().copied().collect::<Vec<_>>(),
            vec![(0, 1), (0, 2), (1, 2)]
        );
        for (&(u, v), &w) in &edges {
            assert_eq!(w, clip_weight(oracle.noisy_similarity(u, v).unwrap()));
        }
    }

    #[test]
    fn synthesis_union_and_provenance() {
        let knn: EdgeSet = [((0, 1), 0.9), ((1, 2), 0.5)].into_iter().collect();
        let attr: EdgeSet = [((1, 2), 0.5), ((0, 3), 0.2)].into_iter().collect();
        let g = synthesize_graph(4, &knn, &attr).unwrap();
        assert_eq!(g.edge_count(), 3);
        let both = g.edges().iter().find(|e| (e.u, e.v) == (1, 2)).unwrap();
        assert_eq!(both.provenance, Provenance::Both);
        assert_eq!(both.weight, 0.5);

        let only_knn = synthesize_graph(4, &knn, &EdgeSet::new()).unwrap();
        assert_eq!(only_knn.edge_count(), 2);
        assert!(only_knn
            .edges()
            .iter()
            .all(|e| e.provenance == Provenance::Se));
    }
}
