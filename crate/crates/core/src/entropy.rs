//! Two-dimensional structural entropy and greedy merge minimization.
//!
//! For a partition `P` of a graph with total volume `vol = Σ d_i`, each
//! community `j` with volume `V_j`, cut weight `g_j` and member degrees `d_i`
//! contributes
//!
//! ```text
//! -(V_j/vol) Σ_i (d_i/V_j) log2(d_i/V_j)  -  (g_j/vol) log2(V_j/vol)
//! ```
//!
//! which rewrites as `((V_j log2 V_j - Σ_i d_i log2 d_i) - g_j log2(V_j/vol)) / vol`.
//! [`CommunityState`] caches `V_j`, `g_j` and `Σ d_i log2 d_i` so the change
//! caused by merging two communities is O(1) once their shared weight is known.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MessageGraph;

/// A merge must lower the entropy by more than this to be applied.
pub const MERGE_TOLERANCE: f64 = 1e-12;

/// Total assignment of nodes to dense community ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<usize>,
    count: usize,
}

impl Partition {
    /// Requires every id in `0..k` to be used, where `k - 1` is the largest id.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let count = assignment.iter().max().map_or(0, |&m| m + 1);
        let mut used = vec![false; count];
        for &c in &assignment {
            used[c] = true;
        }
        if let Some(empty) = used.iter().position(|&u| !u) {
            return Err(Error::InvalidPartition(format!(
                "community {empty} is empty"
            )));
        }
        Ok(Partition { assignment, count })
    }

    /// Relabels arbitrary labels to dense ids in order of first appearance.
    pub fn from_labels<T: Hash + Eq>(labels: impl IntoIterator<Item = T>) -> Self {
        let mut ids = HashMap::new();
        let assignment = labels
            .into_iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(l).or_insert(next)
            })
            .collect();
        Partition {
            assignment,
            count: ids.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            assignment: (0..n).collect(),
            count: n,
        }
    }

    pub fn single(n: usize) -> Self {
        Partition {
            assignment: vec![0; n],
            count: usize::from(n > 0),
        }
    }

    /// Same grouping, ids renumbered by first appearance.
    pub fn canonical(&self) -> Partition {
        Partition::from_labels(self.assignment.iter().copied())
    }

    /// True if both describe the same grouping, regardless of ids.
    pub fn same_grouping(&self, other: &Partition) -> bool {
        self.canonical() == other.canonical()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn community_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn num_communities(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Members of each community, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.count];
        for (node, &c) in self.assignment.iter().enumerate() {
            members[c].push(node);
        }
        members
    }
}

fn xlog2(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Contribution of one community to the two-dimensional entropy.
fn community_term(volume: f64, cut: f64, inner_dlog: f64, total: f64) -> f64 {
    if volume <= 0.0 {
        return 0.0;
    }
    ((xlog2(volume) - inner_dlog) - cut * (volume / total).log2()) / total
}

fn check_sizes(graph: &MessageGraph, partition: &Partition) -> Result<()> {
    if partition.len() != graph.node_count() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} nodes, graph has {}",
            partition.len(),
            graph.node_count()
        )));
    }
    if graph.volume() <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    Ok(())
}

/// Two-dimensional structural entropy of `graph` under `partition`, in bits.
pub fn two_dim_se(graph: &MessageGraph, partition: &Partition) -> Result<f64> {
    check_sizes(graph, partition)?;
    let k = partition.num_communities();
    let mut volume = vec![0.0; k];
    let mut cut = vec![0.0; k];
    let mut dlog = vec![0.0; k];
    for (node, &c) in partition.assignment().iter().enumerate() {
        let d = graph.degree(node);
        volume[c] += d;
        dlog[c] += xlog2(d);
    }
    for e in graph.edges() {
        let (cu, cv) = (partition.community_of(e.u), partition.community_of(e.v));
        if cu != cv {
            cut[cu] += e.weight;
            cut[cv] += e.weight;
        }
    }
    let total = graph.volume();
    Ok((0..k)
        .map(|c| community_term(volume[c], cut[c], dlog[c], total))
        .sum())
}

#[derive(Debug, Clone)]
struct Community {
    members: Vec<usize>,
    volume: f64,
    cut: f64,
    inner_dlog: f64,
    /// Total edge weight to each adjacent community.
    links: HashMap<usize, f64>,
    version: u64,
}

impl Community {
    fn term(&self, total: f64) -> f64 {
        community_term(self.volume, self.cut, self.inner_dlog, total)
    }
}

/// Cached per-community statistics for incremental merging.
///
/// Community ids start as the ids of the initial partition; a merge keeps the
/// smaller id and retires the larger one.
#[derive(Debug, Clone)]
pub struct CommunityState {
    total: f64,
    communities: Vec<Option<Community>>,
    node_community: Vec<usize>,
}

impl CommunityState {
    pub fn new(graph: &MessageGraph, partition: &Partition) -> Result<Self> {
        check_sizes(graph, partition)?;
        let mut communities: Vec<Option<Community>> = partition
            .members()
            .into_iter()
            .map(|members| {
                let volume = members.iter().map(|&i| graph.degree(i)).sum();
                let inner_dlog = members.iter().map(|&i| xlog2(graph.degree(i))).sum();
                Some(Community {
                    members,
                    volume,
                    cut: 0.0,
                    inner_dlog,
                    links: HashMap::new(),
                    version: 0,
                })
            })
            .collect();
        for e in graph.edges() {
            let (cu, cv) = (partition.community_of(e.u), partition.community_of(e.v));
            if cu == cv {
                continue;
            }
            for (a, b) in [(cu, cv), (cv, cu)] {
                let c = communities[a].as_mut().expect("fresh state");
                c.cut += e.weight;
                *c.links.entry(b).or_insert(0.0) += e.weight;
            }
        }
        Ok(CommunityState {
            total: graph.volume(),
            communities,
            node_community: partition.assignment().to_vec(),
        })
    }

    fn get(&self, id: usize) -> Result<&Community> {
        self.communities
            .get(id)
            .and_then(Option::as_ref)
            .ok_or(Error::UnknownCommunity(id))
    }

    /// Ids of the communities still alive, ascending.
    pub fn community_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.communities
            .iter()
            .enumerate()
            .filter_map(|(id, c)| c.as_ref().map(|_| id))
    }

    pub fn num_communities(&self) -> usize {
        self.community_ids().count()
    }

    pub fn volume(&self, id: usize) -> Result<f64> {
        Ok(self.get(id)?.volume)
    }

    pub fn cut(&self, id: usize) -> Result<f64> {
        Ok(self.get(id)?.cut)
    }

    pub fn members(&self, id: usize) -> Result<&[usize]> {
        Ok(&self.get(id)?.members)
    }

    /// Total edge weight between two communities.
    pub fn link_weight(&self, a: usize, b: usize) -> Result<f64> {
        self.get(b)?;
        Ok(self.get(a)?.links.get(&b).copied().unwrap_or(0.0))
    }

    /// Adjacent communities of `id` with their shared weight.
    pub fn links(&self, id: usize) -> Result<impl Iterator<Item = (usize, f64)> + '_> {
        Ok(self.get(id)?.links.iter().map(|(&k, &w)| (k, w)))
    }

    /// Entropy of the current partition from cached statistics.
    pub fn entropy(&self) -> f64 {
        self.communities
            .iter()
            .flatten()
            .map(|c| c.term(self.total))
            .sum()
    }

    /// Entropy change if `a` and `b` were merged; negative is an improvement.
    pub fn merge_delta(&self, a: usize, b: usize) -> Result<f64> {
        if a == b {
            return Err(Error::Validation(format!(
                "cannot merge community {a} with itself"
            )));
        }
        let (ca, cb) = (self.get(a)?, self.get(b)?);
        let shared = ca.links.get(&b).copied().unwrap_or(0.0);
        Ok(self.delta_with(ca, cb, shared))
    }

    fn delta_with(&self, ca: &Community, cb: &Community, shared: f64) -> f64 {
        let merged = community_term(
            ca.volume + cb.volume,
            (ca.cut + cb.cut - 2.0 * shared).max(0.0),
            ca.inner_dlog + cb.inner_dlog,
            self.total,
        );
        merged - ca.term(self.total) - cb.term(self.total)
    }

    /// Merges `a` and `b`; returns the surviving id, `min(a, b)`.
    pub fn merge(&mut self, a: usize, b: usize) -> Result<usize> {
        if a == b {
            return Err(Error::Validation(format!(
                "cannot merge community {a} with itself"
            )));
        }
        self.get(a)?;
        self.get(b)?;
        let (keep, gone) = (a.min(b), a.max(b));
        let retired = self.communities[gone].take().expect("checked above");

        for (&x, &w) in &retired.links {
            if x == keep {
                continue;
            }
            let neighbor = self.communities[x]
                .as_mut()
                .expect("links point at live communities");
            neighbor.links.remove(&gone);
            *neighbor.links.entry(keep).or_insert(0.0) += w;
        }

        let survivor = self.communities[keep].as_mut().expect("checked above");
        let shared = survivor.links.remove(&gone).unwrap_or(0.0);
        for (x, w) in retired.links {
            if x == keep {
                continue;
            }
            match survivor.links.entry(x) {
                Entry::Occupied(mut o) => *o.get_mut() += w,
                Entry::Vacant(v) => {
                    v.insert(w);
                }
            }
        }
        survivor.volume += retired.volume;
        survivor.cut = (survivor.cut + retired.cut - 2.0 * shared).max(0.0);
        survivor.inner_dlog += retired.inner_dlog;
        survivor.version += 1;
        for &node in &retired.members {
            self.node_community[node] = keep;
        }
        survivor.members.extend(retired.members);
        survivor.members.sort_unstable();
        Ok(keep)
    }

    /// Current grouping with canonical ids.
    pub fn partition(&self) -> Partition {
        Partition::from_labels(self.node_community.iter().copied())
    }

    /// Repeatedly applies the most negative merge among edge-connected pairs
    /// accepted by `allowed` (ties: smallest id pair) until no merge lowers
    /// the entropy by more than [`MERGE_TOLERANCE`]. Returns the entropy
    /// after each applied merge.
    pub fn greedy_merge(&mut self, allowed: impl Fn(usize, usize) -> bool) -> Vec<f64> {
        let mut heap = BinaryHeap::new();
        let ids: Vec<usize> = self.community_ids().collect();
        for &a in &ids {
            self.push_candidates(a, &allowed, &mut heap);
        }

        let mut entropy = self.entropy();
        let mut history = Vec::new();
        while let Some(Candidate {
            delta,
            a,
            b,
            va,
            vb,
        }) = heap.pop()
        {
            let fresh = matches!(
                (&self.communities[a], &self.communities[b]),
                (Some(ca), Some(cb)) if ca.version == va && cb.version == vb
            );
            if !fresh {
                continue;
            }
            if delta >= -MERGE_TOLERANCE {
                break;
            }
            let keep = self
                .merge(a, b)
                .expect("fresh candidates reference live communities");
            entropy += delta;
            history.push(entropy);
            self.push_candidates(keep, &allowed, &mut heap);
        }
        history
    }

    fn push_candidates(
        &self,
        id: usize,
        allowed: &impl Fn(usize, usize) -> bool,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        let c = self.communities[id].as_ref().expect("live community");
        for (&other, &shared) in &c.links {
            let (a, b) = (id.min(other), id.max(other));
            if !allowed(a, b) {
                continue;
            }
            let o = self.communities[other].as_ref().expect("live neighbor");
            let delta = self.delta_with(c, o, shared);
            if delta < -MERGE_TOLERANCE {
                let (va, vb) = if a == id {
                    (c.version, o.version)
                } else {
                    (o.version, c.version)
                };
                heap.push(Candidate {
                    delta,
                    a,
                    b,
                    va,
                    vb,
                });
            }
        }
    }
}

/// Max-heap entry ordered so the most negative delta, then the smallest
/// `(a, b)`, pops first.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    delta: f64,
    a: usize,
    b: usize,
    va: u64,
    vb: u64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .delta
            .total_cmp(&self.delta)
            .then_with(|| (other.a, other.b).cmp(&(self.a, self.b)))
            .then_with(|| (other.va, other.vb).cmp(&(self.va, self.vb)))
    }
}

/// Greedy agglomerative minimization over all edge-connected community pairs.
pub fn vanilla_minimize(graph: &MessageGraph, init: &Partition) -> Result<Partition> {
    let mut state = CommunityState::new(graph, init)?;
    state.greedy_merge(|_, _| true);
    Ok(state.partition())
}
