//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use privse_core::MessageGraph;
use rand::Rng;

/// Random graph with weights in (0, 1] and at least one edge.
pub fn random_graph(rng: &mut impl Rng, n: usize, density: f64) -> MessageGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random_bool(density) {
                edges.push((u, v, 1.0 - rng.random::<f64>()));
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, 1, 1.0 - rng.random::<f64>()));
    }
    MessageGraph::from_weighted_edges(n, &edges).unwrap()
}

/// Weighted degrees recomputed from the edge list.
pub fn degrees(graph: &MessageGraph) -> Vec<f64> {
    let mut d = vec![0.0; graph.node_count()];
    for e in graph.edges() {
        d[e.u] += e.weight;
        d[e.v] += e.weight;
    }
    d
}

/// `-Σ p log2 p` over degree shares.
pub fn direct_h1(graph: &MessageGraph) -> f64 {
    let d = degrees(graph);
    let vol: f64 = d.iter().sum();
    d.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -(x / vol) * (x / vol).log2())
        .sum()
}

/// Two-level encoding-tree entropy, term by term:
/// leaves `-(d_i/vol) log2(d_i/V_j)` and communities `-(g_j/vol) log2(V_j/vol)`.
pub fn direct_h2(graph: &MessageGraph, assignment: &[usize]) -> f64 {
    let d = degrees(graph);
    let vol: f64 = d.iter().sum();
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut v = vec![0.0; k];
    let mut g = vec![0.0; k];
    for (i, &c) in assignment.iter().enumerate() {
        v[c] += d[i];
    }
    for e in graph.edges() {
        if assignment[e.u] != assignment[e.v] {
            g[assignment[e.u]] += e.weight;
            g[assignment[e.v]] += e.weight;
        }
    }
    let mut h = 0.0;
    for (i, &c) in assignment.iter().enumerate() {
        if d[i] > 0.0 {
            h -= (d[i] / vol) * (d[i] / v[c]).log2();
        }
    }
    for c in 0..k {
        if v[c] > 0.0 && g[c] > 0.0 {
            h -= (g[c] / vol) * (v[c] / vol).log2();
        }
    }
    h
}

/// Every set partition of `0..n` as a restricted growth string.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for c in 0..=max + 1 {
            prefix.push(c);
            grow(prefix, max.max(c), n, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut prefix = vec![0];
    grow(&mut prefix, 0, n, &mut out);
    out
}

/// ARI by counting agreements over every unordered pair.
pub fn pair_counting_ari(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len();
    let (mut both, mut only_t, mut only_p, mut neither) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in (i + 1)..n {
            match (truth[i] == truth[j], pred[i] == pred[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_t += 1.0,
                (false, true) => only_p += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let total = both + only_t + only_p + neither;
    let same_t = both + only_t;
    let same_p = both + only_p;
    let expected = same_t * same_p / total;
    let max = 0.5 * (same_t + same_p);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// `E[MI]` from exact integer hypergeometric probabilities (small n only).
pub fn exact_emi(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len() as u64;
    let count = |labels: &[usize]| {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut c = vec![0u64; k];
        for &l in labels {
            c[l] += 1;
        }
        c.retain(|&x| x > 0);
        c
    };
    let (rows, cols) = (count(truth), count(pred));
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &rows {
        for &b in &cols {
            let denom = binomial(n, b);
            for x in 1..=a.min(b) {
                let ways = binomial(a, x) * binomial(n - a, b - x);
                if ways == 0 {
                    continue;
                }
                let p = ways as f64 / denom as f64;
                let xf = x as f64;
                emi += p * (xf / nf) * (nf * xf / (a as f64 * b as f64)).ln();
            }
        }
    }
    emi
}

/// Builds a graph from arbitrary triples, dropping self-loops and repeated
/// pairs and always keeping edge (0, 1).
pub fn graph_from_triples(n: usize, triples: &[(usize, usize, f64)]) -> MessageGraph {
    let mut seen = std::collections::BTreeMap::new();
    seen.insert((0, 1), 0.5);
    for &(u, v, w) in triples {
        let (u, v) = (u % n, v % n);
        if u != v {
            seen.entry((u.min(v), u.max(v))).or_insert(w);
        }
    }
    let edges: Vec<_> = seen.into_iter().map(|((u, v), w)| (u, v, w)).collect();
    MessageGraph::from_weighted_edges(n, &edges).unwrap()
}
