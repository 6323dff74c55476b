//! Entropy minimization over optimal subgraphs.
//!
//! Each round contracts the current communities into a super-graph, carves
//! it into groups of at most `q` super-nodes grown greedily around the
//! heaviest remaining edge, and runs the greedy merge inside every group.
//! When a round changes nothing, `q` doubles; once a stable round covers the
//! whole super-graph in a single group, the run ends.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use ordered::Weight;
use serde::{Deserialize, Serialize};

use crate::entropy::{two_dim_se, CommunityState, Partition};
use crate::error::{Error, Result};
use crate::graph::MessageGraph;

/// Upper bound on clustering rounds.
pub const MAX_ROUNDS: usize = 64;

/// Default subgraph size for open-set (per-block) runs.
pub const DEFAULT_Q0: usize = 400;

/// Default subgraph size for closed-set (pooled) runs.
pub const DEFAULT_Q0_POOLED: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperNode {
    pub members: Vec<usize>,
    /// Sum of member degrees in the original graph.
    pub volume: f64,
    /// Total weight of original edges inside the community.
    pub self_weight: f64,
}

/// Contraction of a graph by a partition: one node per community, edge
/// weights summed across communities.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperGraph {
    nodes: Vec<SuperNode>,
    edges: BTreeMap<(usize, usize), f64>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SuperGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[SuperNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.edges
    }

    pub fn edge_weight(&self, a: usize, b: usize) -> f64 {
        self.edges
            .get(&(a.min(b), a.max(b)))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    /// Cross-community plus internal weight; equals the original total.
    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum::<f64>() + self.nodes.iter().map(|n| n.self_weight).sum::<f64>()
    }
}

pub fn build_supergraph(graph: &MessageGraph, partition: &Partition) -> Result<SuperGraph> {
    if partition.len() != graph.node_count() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} nodes, graph has {}",
            partition.len(),
            graph.node_count()
        )));
    }
    let mut nodes: Vec<SuperNode> = partition
        .members()
        .into_iter()
        .map(|members| SuperNode {
            volume: members.iter().map(|&i| graph.degree(i)).sum(),
            members,
            self_weight: 0.0,
        })
        .collect();
    let mut edges = BTreeMap::new();
    for e in graph.edges() {
        let (a, b) = (partition.community_of(e.u), partition.community_of(e.v));
        if a == b {
            nodes[a].self_weight += e.weight;
        } else {
            *edges.entry((a.min(b), a.max(b))).or_insert(0.0) += e.weight;
        }
    }
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for (&(a, b), &w) in &edges {
        adjacency[a].push((b, w));
        adjacency[b].push((a, w));
    }
    Ok(SuperGraph {
        nodes,
        edges,
        adjacency,
    })
}

/// `⌈m / q⌉`, the nominal number of subgraphs.
pub fn subgraph_count(super_nodes: usize, q: usize) -> usize {
    super_nodes.div_ceil(q)
}

mod ordered {
    use std::cmp::Ordering;

    /// Finite non-negative weight with a total order.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Weight(pub f64);

    impl Eq for Weight {}

    impl PartialOrd for Weight {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }

    impl Ord for Weight {
        fn cmp(&self, other: &Self) -> Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}

/// Groups super-nodes into subgraphs of at most `q` members.
///
/// Each group is seeded with both endpoints of the heaviest remaining edge
/// and grown by the outside node with the largest total weight into the
/// group (ties by smallest id) until it holds `q` nodes or has no connected
/// candidates. Groups are extracted until no edge remains; nodes left
/// without edges become singleton groups.
pub fn extract_subgraphs(sg: &SuperGraph, q: usize) -> Result<Vec<Vec<usize>>> {
    if q < 2 {
        return Err(Error::Config(format!(
            "subgraph size q must be at least 2, got {q}"
        )));
    }
    let m = sg.len();
    let mut taken = vec![false; m];
    let mut by_weight: Vec<((usize, usize), f64)> =
        sg.edges.iter().map(|(&k, &w)| (k, w)).collect();
    by_weight.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));

    let mut groups = Vec::new();
    let mut cursor = 0;
    loop {
        while cursor < by_weight.len() {
            let (a, b) = by_weight[cursor].0;
            if !taken[a] && !taken[b] {
                break;
            }
            cursor += 1;
        }
        let Some(&((a, b), _)) = by_weight.get(cursor) else {
            break;
        };

        let mut group = Vec::with_capacity(q.min(m));
        let mut gain: HashMap<usize, f64> = HashMap::new();
        let mut frontier = BinaryHeap::new();
        let absorb = |node: usize,
                      group: &mut Vec<usize>,
                      taken: &mut [bool],
                      gain: &mut HashMap<usize, f64>,
                      frontier: &mut BinaryHeap<(Weight, Reverse<usize>)>| {
            taken[node] = true;
            group.push(node);
            gain.remove(&node);
            for &(x, w) in sg.neighbors(node) {
                if !taken[x] {
                    let g = gain.entry(x).or_insert(0.0);
                    *g += w;
                    frontier.push((Weight(*g), Reverse(x)));
                }
            }
        };
        absorb(a, &mut group, &mut taken, &mut gain, &mut frontier);
        absorb(b, &mut group, &mut taken, &mut gain, &mut frontier);
        while group.len() < q {
            let Some((Weight(g), Reverse(x))) = frontier.pop() else {
                break;
            };
            if taken[x] || gain.get(&x).is_none_or(|&cur| cur != g) {
                continue;
            }
            absorb(x, &mut group, &mut taken, &mut gain, &mut frontier);
        }
        group.sort_unstable();
        groups.push(group);
    }

    groups.extend((0..m).filter(|&i| !taken[i]).map(|i| vec![i]));
    Ok(groups)
}

/// Contiguous id-order chunks of size `q` (the naive split, for comparison).
pub fn sequential_subgraphs(sg: &SuperGraph, q: usize) -> Result<Vec<Vec<usize>>> {
    if q < 2 {
        return Err(Error::Config(format!(
            "subgraph size q must be at least 2, got {q}"
        )));
    }
    Ok((0..sg.len())
        .collect::<Vec<_>>()
        .chunks(q)
        .map(<[usize]>::to_vec)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    #[default]
    OptimalSubgraphs,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub q0: usize,
    pub max_rounds: usize,
    pub grouping: Grouping,
}

impl ClusterOptions {
    pub fn new(q0: usize) -> Self {
        ClusterOptions {
            q0,
            max_rounds: MAX_ROUNDS,
            grouping: Grouping::OptimalSubgraphs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub q: usize,
    /// Nominal subgraph count `⌈m / q⌉`.
    pub k_max: usize,
    /// Groups actually extracted, including singleton leftovers.
    pub groups: usize,
    pub communities: usize,
    pub h2: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRun {
    pub q0: usize,
    /// Subgraph size when the run ended.
    pub q: usize,
    pub initial_h2: f64,
    pub final_h2: f64,
    pub rounds: Vec<RoundLog>,
    /// False if the round cap was hit before a stable single-group round.
    pub converged: bool,
    pub partition: Partition,
}

pub fn cluster(graph: &MessageGraph, q0: usize, init: &Partition) -> Result<ClusterRun> {
    cluster_with(graph, &ClusterOptions::new(q0), init)
}

pub fn cluster_with(
    graph: &MessageGraph,
    options: &ClusterOptions,
    init: &Partition,
) -> Result<ClusterRun> {
    if options.q0 < 2 {
        return Err(Error::Config(format!(
            "q0 must be at least 2, got {}",
            options.q0
        )));
    }
    let mut current = init.canonical();
    let initial_h2 = two_dim_se(graph, &current)?;
    let mut q = options.q0;
    let mut rounds = Vec::new();
    let mut converged = false;

    for round in 0..options.max_rounds {
        let sg = build_supergraph(graph, &current)?;
        let k_max = subgraph_count(sg.len(), q);
        let groups = match options.grouping {
            Grouping::OptimalSubgraphs => extract_subgraphs(&sg, q)?,
            Grouping::Sequential => sequential_subgraphs(&sg, q)?,
        };
        let mut group_of = vec![0; sg.len()];
        for (g, members) in groups.iter().enumerate() {
            for &node in members {
                group_of[node] = g;
            }
        }

        let mut state = CommunityState::new(graph, &current)?;
        state.greedy_merge(|a, b| group_of[a] == group_of[b]);
        let next = state.partition();
        let stable = next == current;
        rounds.push(RoundLog {
            round,
            q,
            k_max,
            groups: groups.len(),
            communities: next.num_communities(),
            h2: two_dim_se(graph, &next)?,
            stable,
        });
        log::debug!(
            "round {round}: q={q} k_max={k_max} communities={}",
            next.num_communities()
        );

        if stable {
            if k_max <= 1 {
                converged = true;
                break;
            }
            q = q.saturating_mul(2);
        }
        current = next;
    }

    Ok(ClusterRun {
        q0: options.q0,
        q,
        initial_h2,
        final_h2: two_dim_se(graph, &current)?,
        rounds,
        converged,
        partition: current,
    })
}
