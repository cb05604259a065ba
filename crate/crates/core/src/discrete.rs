//! Finite-domain Bayesian networks evaluated exactly by enumeration.
//!
//! The joint law is the Markov factorization: every cell is the product of
//! each node's conditional probability given its parents. Tables are dense
//! and laid out row-major, the first variable being the most significant.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Column, Dataset};
use crate::error::{Error, Result};
use crate::graph::{Dag, NodeId};

pub const DEFAULT_SIZE_CAP: usize = 10_000_000;
pub const DEFAULT_TOL: f64 = 1e-9;
/// Largest graph for which every (x, y, s) triple is enumerated.
pub const FAITHFULNESS_NODE_CAP: usize = 8;

const ROW_SUM_TOL: f64 = 1e-9;

/// Conditional probability table. Row `k` is the distribution of the node
/// for the `k`-th parent configuration (mixed radix over parents in
/// declaration order, first parent most significant).
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    rows: Vec<Vec<f64>>,
}

impl Cpt {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    dag: Dag,
    domains: Vec<Vec<String>>,
    cpts: Vec<Cpt>,
    size_cap: usize,
}

impl DiscreteModel {
    /// `domains` and `cpts` are indexed by node id.
    pub fn new(dag: Dag, domains: Vec<Vec<String>>, cpts: Vec<Cpt>) -> Result<Self> {
        if domains.len() != dag.len() || cpts.len() != dag.len() {
            return Err(Error::InvalidModel(format!("expected {} domains and CPTs, got {} and {}", dag.len(), domains.len(), cpts.len())));
        }
        for v in dag.nodes() {
            let name = dag.name(v);
            let dom = &domains[v.0];
            if dom.len() < 2 {
                return Err(Error::InvalidModel(format!("domain of `{name}` needs at least 2 labels")));
            }
            if dom.iter().collect::<BTreeSet<_>>().len() != dom.len() {
                return Err(Error::InvalidModel(format!("domain of `{name}` repeats a label")));
            }
            let expected_rows: usize = dag.parents(v).iter().map(|p| domains[p.0].len()).product();
            let rows = cpts[v.0].rows();
            if rows.len() != expected_rows {
                return Err(Error::InvalidModel(format!(
                    "CPT of `{name}` has {} rows, parent configurations number {expected_rows}",
                    rows.len()
                )));
            }
            for (k, row) in rows.iter().enumerate() {
                if row.len() != dom.len() {
                    return Err(Error::InvalidModel(format!("CPT row {k} of `{name}` has wrong width")));
                }
                if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::InvalidModel(format!("CPT row {k} of `{name}` has a negative entry")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidModel(format!("CPT row {k} of `{name}` sums to {sum}")));
                }
            }
        }
        Ok(Self { dag, domains, cpts, size_cap: DEFAULT_SIZE_CAP })
    }

    pub fn with_size_cap(mut self, cap: usize) -> Self {
        self.size_cap = cap;
        self
    }

    pub fn size_cap(&self) -> usize {
        self.size_cap
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn domain(&self, v: NodeId) -> &[String] {
        &self.domains[v.0]
    }

    pub fn domains(&self) -> &[Vec<String>] {
        &self.domains
    }

    pub fn cpt(&self, v: NodeId) -> &Cpt {
        &self.cpts[v.0]
    }

    pub fn state_index(&self, v: NodeId, label: &str) -> Result<usize> {
        self.dag.check(v)?;
        self.domains[v.0]
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Domain(format!("`{label}` is not a value of `{}`", self.dag.name(v))))
    }

    /// Row index of `v`'s CPT for a full assignment of states.
    fn row_index(&self, v: NodeId, states: &[usize]) -> usize {
        self.dag.parents(v).iter().fold(0, |acc, p| acc * self.domains[p.0].len() + states[p.0])
    }

    /// Row index for a configuration given as parent states in parent order.
    pub fn row_for_parent_states(&self, v: NodeId, parent_states: &[usize]) -> usize {
        self.dag.parents(v).iter().zip(parent_states).fold(0, |acc, (p, &s)| acc * self.domains[p.0].len() + s)
    }

    /// Replaces one node's parents and CPT. Used by graph surgery.
    pub(crate) fn with_parts(&self, dag: Dag, cpts: Vec<Cpt>) -> Result<Self> {
        Ok(Self::new(dag, self.domains.clone(), cpts)?.with_size_cap(self.size_cap))
    }

    /// Adds a child node with the given parents and CPT.
    pub fn with_node(&self, name: &str, observed: bool, parents: &[NodeId], domain: Vec<String>, cpt: Cpt) -> Result<Self> {
        let dag = self.dag.with_node(name, observed, parents)?;
        let mut domains = self.domains.clone();
        domains.push(domain);
        let mut cpts = self.cpts.clone();
        cpts.push(cpt);
        Ok(Self::new(dag, domains, cpts)?.with_size_cap(self.size_cap))
    }

    pub fn joint_cells(&self) -> u128 {
        self.domains.iter().map(|d| d.len() as u128).product()
    }

    /// The full joint law over all nodes, in node order.
    pub fn joint_distribution(&self) -> Result<JointTable> {
        let cells = self.joint_cells();
        if cells > self.size_cap as u128 {
            return Err(Error::SizeCap { cells, cap: self.size_cap });
        }
        let n = self.dag.len();
        let cards: Vec<usize> = self.domains.iter().map(Vec::len).collect();
        let mut probs = Vec::with_capacity(cells as usize);
        let mut states = vec![0usize; n];
        for _ in 0..cells {
            let p = self.dag.nodes().map(|v| self.cpts[v.0].rows[self.row_index(v, &states)][states[v.0]]).product();
            probs.push(p);
            advance(&mut states, &cards);
        }
        Ok(JointTable {
            vars: self.dag.nodes().collect(),
            names: self.dag.nodes().map(|v| self.dag.name(v).to_string()).collect(),
            labels: self.domains.clone(),
            probs,
        })
    }

    /// Exact test of `x ⊥ y | s` on the model's joint law.
    pub fn conditional_independent(&self, x: NodeId, y: NodeId, s: &BTreeSet<NodeId>, tol: f64) -> Result<bool> {
        Ok(self.ci_gap(x, y, s)? <= tol)
    }

    /// Largest cell-wise |P(x,y|s) − P(x|s)P(y|s)| over positive-mass `s`.
    pub fn ci_gap(&self, x: NodeId, y: NodeId, s: &BTreeSet<NodeId>) -> Result<f64> {
        self.dag.check(x)?;
        self.dag.check(y)?;
        if x == y || s.contains(&x) || s.contains(&y) {
            return Err(Error::Overlap("x, y and s must be disjoint".into()));
        }
        let joint = self.joint_distribution()?;
        let s: Vec<NodeId> = s.iter().copied().collect();
        joint.ci_gap(&[x], &[y], &s)
    }

    /// Every d-connected triple `(x, y, s)` with `x < y` whose variables are
    /// nonetheless independent at `tol`.
    pub fn faithfulness_report(&self, tol: f64) -> Result<Vec<FaithfulnessViolation>> {
        let n = self.dag.len();
        if n > FAITHFULNESS_NODE_CAP {
            return Err(Error::SizeCap { cells: n as u128, cap: FAITHFULNESS_NODE_CAP });
        }
        let joint = self.joint_distribution()?;
        let mut out = Vec::new();
        for x in 0..n {
            for y in (x + 1)..n {
                let rest: Vec<NodeId> = (0..n).filter(|&v| v != x && v != y).map(NodeId).collect();
                for mask in 0u32..(1 << rest.len()) {
                    let s: Vec<NodeId> = rest.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, &v)| v).collect();
                    let s_set: BTreeSet<NodeId> = s.iter().copied().collect();
                    if self.dag.is_d_separated(NodeId(x), NodeId(y), &s_set)? {
                        continue;
                    }
                    if joint.ci_gap(&[NodeId(x)], &[NodeId(y)], &s)? <= tol {
                        out.push(FaithfulnessViolation { x: NodeId(x), y: NodeId(y), s: s_set });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Ancestral sampling into categorical columns, one per node.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Param("sample size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.dag.len();
        let mut codes: Vec<Vec<u32>> = vec![Vec::with_capacity(n); k];
        let mut states = vec![0usize; k];
        for _ in 0..n {
            for &v in self.dag.topological_order() {
                let row = &self.cpts[v.0].rows[self.row_index(v, &states)];
                states[v.0] = draw_categorical(row, rng.random::<f64>());
            }
            for v in 0..k {
                codes[v].push(states[v] as u32);
            }
        }
        let mut data = Dataset::new();
        for (v, c) in codes.into_iter().enumerate() {
            data.push(self.dag.name(NodeId(v)), Column::Categorical { labels: self.domains[v].clone(), codes: c })?;
        }
        Ok(data)
    }
}

pub(crate) fn draw_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the last cumulative sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaithfulnessViolation {
    pub x: NodeId,
    pub y: NodeId,
    pub s: BTreeSet<NodeId>,
}

/// Mixed-radix increment, last position fastest.
fn advance(states: &mut [usize], cards: &[usize]) {
    for i in (0..states.len()).rev() {
        states[i] += 1;
        if states[i] < cards[i] {
            return;
        }
        states[i] = 0;
    }
}

/// Dense probability table over an ordered list of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    vars: Vec<NodeId>,
    names: Vec<String>,
    labels: Vec<Vec<String>>,
    probs: Vec<f64>,
}

impl JointTable {
    /// Builds a table from raw parts; variables get ids `0..k`.
    pub fn from_parts(names: Vec<String>, labels: Vec<Vec<String>>, probs: Vec<f64>) -> Result<Self> {
        let cells: usize = labels.iter().map(Vec::len).product();
        if names.len() != labels.len() || probs.len() != cells {
            return Err(Error::InvalidModel("table shape does not match its labels".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidModel("negative probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("table mass is {total}")));
        }
        Ok(Self { vars: (0..names.len()).map(NodeId).collect(), names, labels, probs })
    }

    pub fn vars(&self) -> &[NodeId] {
        &self.vars
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> &[Vec<String>] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cards(&self) -> Vec<usize> {
        self.labels.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    fn position(&self, v: NodeId) -> Result<usize> {
        self.vars.iter().position(|&u| u == v).ok_or_else(|| Error::UnknownNode(v.to_string()))
    }

    /// Probability of one cell, states in table variable order.
    pub fn prob(&self, states: &[usize]) -> f64 {
        let cards = self.cards();
        let idx = states.iter().zip(&cards).fold(0, |acc, (&s, &c)| acc * c + s);
        self.probs[idx]
    }

    /// Marginal over `vars`, in the order given.
    pub fn marginal(&self, vars: &[NodeId]) -> Result<JointTable> {
        let pos: Vec<usize> = vars.iter().map(|&v| self.position(v)).collect::<Result<_>>()?;
        if pos.iter().collect::<BTreeSet<_>>().len() != pos.len() {
            return Err(Error::Overlap("variable listed twice".into()));
        }
        let cards = self.cards();
        let out_cards: Vec<usize> = pos.iter().map(|&p| cards[p]).collect();
        let mut out = vec![0.0; out_cards.iter().product()];
        let mut states = vec![0usize; cards.len()];
        for &p in &self.probs {
            let idx = pos.iter().zip(&out_cards).fold(0, |acc, (&q, &c)| acc * c + states[q]);
            out[idx] += p;
            advance(&mut states, &cards);
        }
        Ok(JointTable {
            vars: vars.to_vec(),
            names: pos.iter().map(|&p| self.names[p].clone()).collect(),
            labels: pos.iter().map(|&p| self.labels[p].clone()).collect(),
            probs: out,
        })
    }

    /// Normalized law of `targets` given the evidence `given` (variable, state).
    pub fn query(&self, targets: &[NodeId], given: &[(NodeId, usize)]) -> Result<JointTable> {
        for (v, _) in given {
            if targets.contains(v) {
                return Err(Error::Overlap("targets and evidence must be disjoint".into()));
            }
        }
        let given_vars: Vec<NodeId> = given.iter().map(|(v, _)| *v).collect();
        let mut vars = given_vars.clone();
        vars.extend_from_slice(targets);
        let sub = self.marginal(&vars)?;
        let cards = sub.cards();
        for (i, (v, s)) in given.iter().enumerate() {
            if *s >= cards[i] {
                return Err(Error::Domain(format!("state {s} of {v}")));
            }
        }
        let block: usize = cards[given.len()..].iter().product();
        let offset = given.iter().zip(&cards).fold(0, |acc, ((_, s), &c)| acc * c + s) * block;
        let slice = &sub.probs[offset..offset + block];
        let mass: f64 = slice.iter().sum();
        if mass <= 0.0 {
            return Err(Error::ZeroProbabilityEvidence);
        }
        Ok(JointTable {
            vars: targets.to_vec(),
            names: sub.names[given.len()..].to_vec(),
            labels: sub.labels[given.len()..].to_vec(),
            probs: slice.iter().map(|p| p / mass).collect(),
        })
    }

    /// Largest cell-wise |P(x,y|s) − P(x|s)P(y|s)| over configurations of `s`
    /// with positive mass. `xs`, `ys`, `s` are variable groups.
    pub fn ci_gap(&self, xs: &[NodeId], ys: &[NodeId], s: &[NodeId]) -> Result<f64> {
        let mut order = s.to_vec();
        order.extend_from_slice(xs);
        order.extend_from_slice(ys);
        let sub = self.marginal(&order)?;
        let cards = sub.cards();
        let ns: usize = cards[..s.len()].iter().product();
        let nx: usize = cards[s.len()..s.len() + xs.len()].iter().product();
        let ny: usize = cards[s.len() + xs.len()..].iter().product();
        let mut worst = 0.0f64;
        for k in 0..ns {
            let block = &sub.probs[k * nx * ny..(k + 1) * nx * ny];
            let mass: f64 = block.iter().sum();
            if mass <= 0.0 {
                continue;
            }
            let px: Vec<f64> = (0..nx).map(|i| block[i * ny..(i + 1) * ny].iter().sum::<f64>() / mass).collect();
            let py: Vec<f64> = (0..ny).map(|j| (0..nx).map(|i| block[i * ny + j]).sum::<f64>() / mass).collect();
            for i in 0..nx {
                for j in 0..ny {
                    worst = worst.max((block[i * ny + j] / mass - px[i] * py[j]).abs());
                }
            }
        }
        Ok(worst)
    }
}
