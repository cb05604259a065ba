#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use fairdag::discrete::{Cpt, DiscreteModel};
use fairdag::graph::{Dag, NodeId};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random DAG on `n` nodes. A hidden random order decides which edges are
/// allowed, and node names, node declaration order and edge declaration
/// order are all shuffled, so ids carry no topological information.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize, edge_prob: f64) -> Dag {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < edge_prob {
                edges.push((format!("N{}", order[i]), format!("N{}", order[j])));
            }
        }
    }
    edges.shuffle(rng);
    let mut names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
    names.shuffle(rng);
    let nodes: Vec<(String, bool)> = names.into_iter().map(|s| (s, true)).collect();
    Dag::build(&nodes, &edges).unwrap()
}

/// Dag from a topological permutation and one bit per ordered pair.
pub fn dag_from_bits(perm: &[usize], bits: &[bool]) -> Dag {
    let n = perm.len();
    let mut edges = Vec::new();
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            if bits[k] {
                edges.push((format!("N{}", perm[i]), format!("N{}", perm[j])));
            }
            k += 1;
        }
    }
    let nodes: Vec<(String, bool)> = (0..n).map(|i| (format!("N{i}"), true)).collect();
    Dag::build(&nodes, &edges).unwrap()
}

pub fn arb_dag(max_nodes: usize) -> impl Strategy<Value = Dag> {
    (1..=max_nodes).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        (Just((0..n).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec(prop::bool::weighted(0.35), pairs))
            .prop_map(|(perm, bits)| dag_from_bits(&perm, &bits))
    })
}

pub fn dirichlet_row(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random CPTs with each node's cardinality drawn from `2..=max_card`.
pub fn random_model(rng: &mut ChaCha8Rng, dag: Dag, max_card: usize) -> DiscreteModel {
    let cards: Vec<usize> = dag.nodes().map(|_| rng.random_range(2..=max_card)).collect();
    let domains = cards.iter().map(|&k| (0..k).map(|s| s.to_string()).collect()).collect();
    let cpts = dag
        .nodes()
        .map(|v| {
            let rows: usize = dag.parents(v).iter().map(|p| cards[p.0]).product();
            Cpt::new((0..rows).map(|_| dirichlet_row(rng, cards[v.0])).collect())
        })
        .collect();
    DiscreteModel::new(dag, domains, cpts).unwrap()
}

/// Every subset of `nodes` as a set.
pub fn subsets(nodes: &[NodeId]) -> Vec<BTreeSet<NodeId>> {
    (0u32..1 << nodes.len()).map(|mask| nodes.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &v)| v).collect()).collect()
}

/// Every (x, y, s) with x < y and s disjoint from both.
pub fn all_triples(dag: &Dag) -> Vec<(NodeId, NodeId, BTreeSet<NodeId>)> {
    let nodes: Vec<NodeId> = dag.nodes().collect();
    let mut out = Vec::new();
    for &x in &nodes {
        for &y in &nodes {
            if x >= y {
                continue;
            }
            let rest: Vec<NodeId> = nodes.iter().copied().filter(|&v| v != x && v != y).collect();
            for s in subsets(&rest) {
                out.push((x, y, s));
            }
        }
    }
    out
}

pub fn ids(dag: &Dag, names: &[&str]) -> BTreeSet<NodeId> {
    names.iter().map(|n| dag.id(n).unwrap()).collect()
}

/// Separation in the moral graph of the ancestral set of {x, y} ∪ s once
/// `s` is removed. Equivalent to d-separation and shares no code with it.
pub fn moral_separated(dag: &Dag, x: NodeId, y: NodeId, s: &BTreeSet<NodeId>) -> bool {
    let mut keep: BTreeSet<NodeId> = s.clone();
    keep.insert(x);
    keep.insert(y);
    let mut stack: Vec<NodeId> = keep.iter().copied().collect();
    while let Some(v) = stack.pop() {
        for &p in dag.parents(v) {
            if keep.insert(p) {
                stack.push(p);
            }
        }
    }
    let n = dag.len();
    let mut adj = vec![BTreeSet::new(); n];
    for &v in &keep {
        let ps = dag.parents(v);
        for &p in ps {
            adj[v.0].insert(p.0);
            adj[p.0].insert(v.0);
        }
        for (i, &p) in ps.iter().enumerate() {
            for &q in &ps[i + 1..] {
                adj[p.0].insert(q.0);
                adj[q.0].insert(p.0);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut stack = vec![x.0];
    seen[x.0] = true;
    while let Some(u) = stack.pop() {
        if u == y.0 {
            return false;
        }
        for &w in &adj[u] {
            if !seen[w] && !s.contains(&NodeId(w)) {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    true
}
