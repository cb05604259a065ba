//! Linear-Gaussian structural models with categorical roots.
//!
//! Each continuous node is `intercept + Σ coef·parent + noise`, where the
//! intercept, coefficients and noise variance may change with the states of
//! the node's categorical parents. Categorical nodes must be roots, so for a
//! fixed assignment of the categorical roots the continuous nodes are jointly
//! Gaussian, with moments given by linear propagation in topological order.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Column, Dataset};
use crate::discrete::draw_categorical;
use crate::error::{Error, Result};
use crate::graph::{Dag, NodeId};

/// Conditioning blocks with a determinant at or below this are singular.
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRoot {
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub intercept: f64,
    /// Coefficients on continuous parents; absent parents weigh zero.
    pub coefficients: Vec<(NodeId, f64)>,
    pub noise_variance: f64,
}

impl Mechanism {
    pub fn constant(value: f64) -> Self {
        Self { intercept: value, coefficients: Vec::new(), noise_variance: 0.0 }
    }

    fn coefficient(&self, p: NodeId) -> f64 {
        self.coefficients.iter().filter(|(q, _)| *q == p).map(|(_, c)| c).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLinearModel {
    dag: Dag,
    discrete: Vec<Option<DiscreteRoot>>,
    // Continuous nodes: one mechanism per configuration of categorical parents.
    mechanisms: Vec<Vec<Mechanism>>,
}

/// Assignment of states to categorical roots.
pub type DiscreteConfig = BTreeMap<NodeId, usize>;

impl GaussianLinearModel {
    pub fn new(dag: Dag, discrete: Vec<Option<DiscreteRoot>>, mechanisms: Vec<Vec<Mechanism>>) -> Result<Self> {
        if discrete.len() != dag.len() || mechanisms.len() != dag.len() {
            return Err(Error::InvalidModel("one entry per node required".into()));
        }
        let model = Self { dag, discrete, mechanisms };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        for v in self.dag.nodes() {
            let name = self.dag.name(v);
            match &self.discrete[v.0] {
                Some(root) => {
                    if !self.dag.parents(v).is_empty() {
                        return Err(Error::InvalidModel(format!("categorical node `{name}` must be a root")));
                    }
                    if root.labels.is_empty() || root.labels.len() != root.probs.len() {
                        return Err(Error::InvalidModel(format!("`{name}`: labels and probs differ in length")));
                    }
                    if root.probs.iter().any(|&p| !(p >= 0.0)) || (root.probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidModel(format!("`{name}`: probabilities must sum to 1")));
                    }
                    if !self.mechanisms[v.0].is_empty() {
                        return Err(Error::InvalidModel(format!("categorical node `{name}` has a mechanism")));
                    }
                }
                None => {
                    let expected: usize = self.discrete_parents(v).iter().map(|&p| self.cardinality(p)).product();
                    let mechs = &self.mechanisms[v.0];
                    if mechs.len() != expected {
                        return Err(Error::InvalidModel(format!("`{name}` needs {expected} mechanisms, has {}", mechs.len())));
                    }
                    for m in mechs {
                        if !(m.noise_variance >= 0.0) || !m.intercept.is_finite() {
                            return Err(Error::InvalidModel(format!("`{name}`: bad intercept or noise variance")));
                        }
                        for (p, c) in &m.coefficients {
                            if !self.dag.parents(v).contains(p) || self.discrete[p.0].is_some() {
                                return Err(Error::InvalidModel(format!(
                                    "`{name}` has a coefficient on non-parent or categorical node {p}"
                                )));
                            }
                            if !c.is_finite() {
                                return Err(Error::InvalidModel(format!("`{name}`: non-finite coefficient")));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn is_discrete(&self, v: NodeId) -> bool {
        self.discrete[v.0].is_some()
    }

    pub fn discrete_root(&self, v: NodeId) -> Option<&DiscreteRoot> {
        self.discrete[v.0].as_ref()
    }

    pub fn discrete_roots(&self) -> Vec<NodeId> {
        self.dag.nodes().filter(|&v| self.is_discrete(v)).collect()
    }

    pub fn continuous_nodes(&self) -> Vec<NodeId> {
        self.dag.nodes().filter(|&v| !self.is_discrete(v)).collect()
    }

    fn cardinality(&self, v: NodeId) -> usize {
        self.discrete[v.0].as_ref().map_or(0, |r| r.labels.len())
    }

    pub fn discrete_parents(&self, v: NodeId) -> Vec<NodeId> {
        self.dag.parents(v).iter().copied().filter(|p| self.discrete[p.0].is_some()).collect()
    }

    pub fn mechanisms(&self, v: NodeId) -> &[Mechanism] {
        &self.mechanisms[v.0]
    }

    pub fn state_index(&self, v: NodeId, label: &str) -> Result<usize> {
        let root = self.discrete_root(v).ok_or_else(|| Error::Domain(format!("`{}` is continuous", self.dag.name(v))))?;
        root.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Domain(format!("`{label}` is not a value of `{}`", self.dag.name(v))))
    }

    fn mechanism_index(&self, v: NodeId, states: impl Fn(NodeId) -> usize) -> usize {
        self.discrete_parents(v).iter().fold(0, |acc, &p| acc * self.cardinality(p) + states(p))
    }

    pub(crate) fn with_parts(&self, dag: Dag, discrete: Vec<Option<DiscreteRoot>>, mechanisms: Vec<Vec<Mechanism>>) -> Result<Self> {
        Self::new(dag, discrete, mechanisms)
    }

    pub(crate) fn parts(&self) -> (&[Option<DiscreteRoot>], &[Vec<Mechanism>]) {
        (&self.discrete, &self.mechanisms)
    }

    /// Adds a continuous node with a single mechanism per categorical-parent
    /// configuration.
    pub fn with_node(&self, name: &str, observed: bool, parents: &[NodeId], mechanisms: Vec<Mechanism>) -> Result<Self> {
        let dag = self.dag.with_node(name, observed, parents)?;
        let mut discrete = self.discrete.clone();
        discrete.push(None);
        let mut mechs = self.mechanisms.clone();
        mechs.push(mechanisms);
        Self::new(dag, discrete, mechs)
    }

    /// Every full assignment of the categorical roots with its probability.
    pub fn discrete_configs(&self) -> Vec<(DiscreteConfig, f64)> {
        let roots = self.discrete_roots();
        let mut out = vec![(DiscreteConfig::new(), 1.0)];
        for r in roots {
            let root = self.discrete[r.0].as_ref().unwrap();
            out = out
                .into_iter()
                .flat_map(|(cfg, p)| {
                    root.probs.iter().enumerate().map(move |(s, &q)| {
                        let mut c = cfg.clone();
                        c.insert(r, s);
                        (c, p * q)
                    })
                })
                .collect();
        }
        out
    }

    /// Exact mean and covariance of the continuous nodes (declaration order)
    /// for one assignment of the categorical roots.
    pub fn joint_gaussian(&self, config: &DiscreteConfig) -> Result<GaussianJoint> {
        for r in self.discrete_roots() {
            match config.get(&r) {
                Some(&s) if s < self.cardinality(r) => {}
                Some(_) => return Err(Error::Domain(format!("bad state for `{}`", self.dag.name(r)))),
                None => return Err(Error::Param(format!("configuration misses `{}`", self.dag.name(r)))),
            }
        }
        let nodes = self.continuous_nodes();
        let mut pos = vec![usize::MAX; self.dag.len()];
        for (i, v) in nodes.iter().enumerate() {
            pos[v.0] = i;
        }
        let m = nodes.len();
        let mut mean = DVector::zeros(m);
        let mut cov = DMatrix::zeros(m, m);
        let mut done: Vec<usize> = Vec::with_capacity(m);
        for &v in self.dag.topological_order() {
            if self.is_discrete(v) {
                continue;
            }
            let mech = &self.mechanisms[v.0][self.mechanism_index(v, |p| config[&p])];
            let i = pos[v.0];
            let parents: Vec<(usize, f64)> =
                self.dag.parents(v).iter().filter(|p| !self.is_discrete(**p)).map(|&p| (pos[p.0], mech.coefficient(p))).collect();
            mean[i] = mech.intercept + parents.iter().map(|&(j, c)| c * mean[j]).sum::<f64>();
            for &u in &done {
                let c: f64 = parents.iter().map(|&(j, c)| c * cov[(j, u)]).sum();
                cov[(i, u)] = c;
                cov[(u, i)] = c;
            }
            cov[(i, i)] = mech.noise_variance + parents.iter().map(|&(j, c)| c * cov[(j, i)]).sum::<f64>();
            done.push(i);
        }
        Ok(GaussianJoint { names: nodes.iter().map(|&v| self.dag.name(v).to_string()).collect(), nodes, mean, cov })
    }

    /// Ancestral sampling; one column per node, categorical roots as
    /// categorical columns.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Param("sample size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.dag.len();
        let mut states = vec![0usize; k];
        let mut values = vec![0.0f64; k];
        let mut codes: Vec<Vec<u32>> = vec![Vec::new(); k];
        let mut reals: Vec<Vec<f64>> = vec![Vec::new(); k];
        for v in self.dag.nodes() {
            if self.is_discrete(v) {
                codes[v.0].reserve(n);
            } else {
                reals[v.0].reserve(n);
            }
        }
        for _ in 0..n {
            for &v in self.dag.topological_order() {
                if let Some(root) = &self.discrete[v.0] {
                    states[v.0] = draw_categorical(&root.probs, rng.random::<f64>());
                    codes[v.0].push(states[v.0] as u32);
                } else {
                    let mech = &self.mechanisms[v.0][self.mechanism_index(v, |p| states[p.0])];
                    let mut x = mech.intercept;
                    for (p, c) in &mech.coefficients {
                        x += c * values[p.0];
                    }
                    if mech.noise_variance > 0.0 {
                        let z: f64 = rng.sample(StandardNormal);
                        x += mech.noise_variance.sqrt() * z;
                    }
                    values[v.0] = x;
                    reals[v.0].push(x);
                }
            }
        }
        let mut data = Dataset::new();
        for v in self.dag.nodes() {
            let column = match &self.discrete[v.0] {
                Some(root) => Column::Categorical { labels: root.labels.clone(), codes: std::mem::take(&mut codes[v.0]) },
                None => Column::Real(std::mem::take(&mut reals[v.0])),
            };
            data.push(self.dag.name(v), column)?;
        }
        Ok(data)
    }
}

/// Mean vector and covariance matrix over a list of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianJoint {
    pub nodes: Vec<NodeId>,
    pub names: Vec<String>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianJoint {
    fn positions(&self, vs: &[NodeId]) -> Result<Vec<usize>> {
        vs.iter().map(|v| self.nodes.iter().position(|u| u == v).ok_or_else(|| Error::UnknownNode(v.to_string()))).collect()
    }

    pub fn index_of(&self, v: NodeId) -> Option<usize> {
        self.nodes.iter().position(|&u| u == v)
    }

    pub fn mean_of(&self, v: NodeId) -> Result<f64> {
        Ok(self.mean[self.positions(&[v])?[0]])
    }

    pub fn cov_of(&self, u: NodeId, v: NodeId) -> Result<f64> {
        let p = self.positions(&[u, v])?;
        Ok(self.cov[(p[0], p[1])])
    }

    pub fn marginal(&self, vs: &[NodeId]) -> Result<GaussianJoint> {
        let p = self.positions(vs)?;
        Ok(GaussianJoint {
            nodes: vs.to_vec(),
            names: p.iter().map(|&i| self.names[i].clone()).collect(),
            mean: DVector::from_iterator(p.len(), p.iter().map(|&i| self.mean[i])),
            cov: DMatrix::from_fn(p.len(), p.len(), |a, b| self.cov[(p[a], p[b])]),
        })
    }

    /// Law of `targets` given observed values of other nodes (Schur complement).
    pub fn condition(&self, targets: &[NodeId], given: &[(NodeId, f64)]) -> Result<GaussianJoint> {
        let given_nodes: Vec<NodeId> = given.iter().map(|(v, _)| *v).collect();
        if targets.iter().any(|t| given_nodes.contains(t)) {
            return Err(Error::Overlap("targets and evidence must be disjoint".into()));
        }
        let t = self.positions(targets)?;
        let g = self.positions(&given_nodes)?;
        if g.is_empty() {
            return self.marginal(targets);
        }
        let s_tt = DMatrix::from_fn(t.len(), t.len(), |a, b| self.cov[(t[a], t[b])]);
        let s_tg = DMatrix::from_fn(t.len(), g.len(), |a, b| self.cov[(t[a], g[b])]);
        let s_gg = DMatrix::from_fn(g.len(), g.len(), |a, b| self.cov[(g[a], g[b])]);
        let det = s_gg.determinant();
        if det.abs() <= SINGULAR_DET {
            return Err(Error::SingularConditioning(det));
        }
        let inv = s_gg.try_inverse().ok_or(Error::SingularConditioning(det))?;
        let resid = DVector::from_iterator(g.len(), given.iter().zip(&g).map(|((_, x), &i)| x - self.mean[i]));
        let gain = &s_tg * inv;
        let mean_t = DVector::from_iterator(t.len(), t.iter().map(|&i| self.mean[i])) + &gain * resid;
        let mut cov = s_tt - &gain * s_tg.transpose();
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(GaussianJoint { nodes: targets.to_vec(), names: t.iter().map(|&i| self.names[i].clone()).collect(), mean: mean_t, cov })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.cov.nrows() == 0 {
            return 0.0;
        }
        self.cov.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Free function form of [`GaussianJoint::condition`].
pub fn conditional_gaussian(joint: &GaussianJoint, targets: &[NodeId], given: &[(NodeId, f64)]) -> Result<GaussianJoint> {
    joint.condition(targets, given)
}

/// Builds a [`GaussianLinearModel`] by node name, with mechanism keys given
/// as comma-joined categorical-parent labels.
/// Intercept, named coefficients and noise variance of one keyed mechanism.
type MechanismSpecEntry = (f64, Vec<(String, f64)>, f64);

#[derive(Debug, Clone)]
pub struct GaussianBuilder {
    dag: Dag,
    discrete: Vec<Option<DiscreteRoot>>,
    keyed: Vec<BTreeMap<String, MechanismSpecEntry>>,
}

impl GaussianBuilder {
    pub fn new(dag: Dag) -> Self {
        let n = dag.len();
        Self { dag, discrete: vec![None; n], keyed: vec![BTreeMap::new(); n] }
    }

    pub fn discrete(mut self, node: &str, labels: &[&str], probs: &[f64]) -> Result<Self> {
        let v = self.dag.id(node)?;
        self.discrete[v.0] = Some(DiscreteRoot { labels: labels.iter().map(|s| s.to_string()).collect(), probs: probs.to_vec() });
        Ok(self)
    }

    pub fn mechanism(mut self, node: &str, key: &str, intercept: f64, coefficients: &[(&str, f64)], noise_variance: f64) -> Result<Self> {
        let v = self.dag.id(node)?;
        let coefs = coefficients.iter().map(|(p, c)| (p.to_string(), *c)).collect();
        if self.keyed[v.0].insert(key.to_string(), (intercept, coefs, noise_variance)).is_some() {
            return Err(Error::Duplicate(format!("mechanism `{key}` of `{node}`")));
        }
        Ok(self)
    }

    pub fn build(self) -> Result<GaussianLinearModel> {
        let dag = &self.dag;
        let mut mechanisms = vec![Vec::new(); dag.len()];
        for v in dag.nodes() {
            if self.discrete[v.0].is_some() {
                if !self.keyed[v.0].is_empty() {
                    return Err(Error::InvalidModel(format!("categorical `{}` has mechanisms", dag.name(v))));
                }
                continue;
            }
            let dparents: Vec<NodeId> = dag.parents(v).iter().copied().filter(|p| self.discrete[p.0].is_some()).collect();
            let mut keys = vec![Vec::<String>::new()];
            for p in &dparents {
                let labels = &self.discrete[p.0].as_ref().unwrap().labels;
                keys = keys.into_iter().flat_map(|k| labels.iter().map(move |l| [k.clone(), vec![l.clone()]].concat())).collect();
            }
            let mut table = self.keyed[v.0].clone();
            for key in keys {
                let key = key.join(",");
                let (intercept, coefs, noise) = table
                    .remove(&key)
                    .ok_or_else(|| Error::InvalidModel(format!("`{}` lacks a mechanism for configuration `{key}`", dag.name(v))))?;
                let coefficients = coefs.iter().map(|(p, c)| Ok((dag.id(p)?, *c))).collect::<Result<Vec<_>>>()?;
                mechanisms[v.0].push(Mechanism { intercept, coefficients, noise_variance: noise });
            }
            if let Some(extra) = table.keys().next() {
                return Err(Error::InvalidModel(format!("`{}` has unknown configuration `{extra}`", dag.name(v))));
            }
        }
        GaussianLinearModel::new(self.dag, self.discrete, mechanisms)
    }
}
