//! Interventions as graph mutilation, and the causal fairness criteria
//! built on them (controlled direct effect and total effect equality).

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::criteria::{Criterion, CriterionReport, Method};
use crate::discrete::{Cpt, DiscreteModel, JointTable};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianLinearModel, Mechanism};
use crate::graph::{Dag, NodeId};

/// Either kind of model the toolkit evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum CausalModel {
    Discrete(DiscreteModel),
    Gaussian(GaussianLinearModel),
}

impl CausalModel {
    pub fn dag(&self) -> &Dag {
        match self {
            CausalModel::Discrete(m) => m.dag(),
            CausalModel::Gaussian(m) => m.dag(),
        }
    }

    /// Whether `v` takes category labels rather than real values.
    pub fn is_categorical(&self, v: NodeId) -> bool {
        match self {
            CausalModel::Discrete(_) => true,
            CausalModel::Gaussian(m) => m.is_discrete(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Label(String),
    Real(f64),
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Label(s) => f.write_str(s),
            Value::Real(x) => write!(f, "{x:?}"),
        }
    }
}

/// Node assignments for `do(...)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Intervention {
    pub assignments: BTreeMap<NodeId, Value>,
}

impl Intervention {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, v: NodeId, value: Value) -> Self {
        self.assignments.insert(v, value);
        self
    }

    /// Parses `name = value` pairs against a model: categorical nodes take
    /// the value as a label, continuous ones parse it as a real.
    pub fn parse<S: AsRef<str>>(model: &CausalModel, pairs: &[(S, S)]) -> Result<Self> {
        let dag = model.dag();
        let mut iv = Intervention::new();
        for (name, raw) in pairs {
            let v = dag.id(name.as_ref())?;
            let raw = raw.as_ref();
            let value = if model.is_categorical(v) {
                Value::Label(raw.to_string())
            } else {
                Value::Real(raw.parse().map_err(|_| Error::Domain(format!("`{raw}` is not a number for `{}`", name.as_ref())))?)
            };
            if iv.assignments.insert(v, value).is_some() {
                return Err(Error::Duplicate(format!("assignment to `{}`", name.as_ref())));
            }
        }
        Ok(iv)
    }

    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.assignments.keys().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

fn label_of<'a>(dag: &Dag, v: NodeId, value: &'a Value) -> Result<&'a str> {
    match value {
        Value::Label(s) => Ok(s),
        Value::Real(x) => Err(Error::Domain(format!("`{}` is categorical; got {x:?}", dag.name(v)))),
    }
}

fn state_of(labels: &[String], dag: &Dag, v: NodeId, value: &Value) -> Result<usize> {
    let l = label_of(dag, v, value)?;
    labels.iter().position(|x| x == l).ok_or_else(|| Error::Domain(format!("`{l}` is not a state of `{}`", dag.name(v))))
}

fn point_mass(k: usize, at: usize) -> Vec<f64> {
    (0..k).map(|i| if i == at { 1.0 } else { 0.0 }).collect()
}

/// Models that support `do(...)`.
pub trait Intervene: Sized {
    /// Removes every edge into an assigned node and fixes the node at its
    /// assigned value. All other mechanisms are kept as they are.
    fn intervene(&self, iv: &Intervention) -> Result<Self>;
}

impl Intervene for DiscreteModel {
    fn intervene(&self, iv: &Intervention) -> Result<Self> {
        let dag = self.dag();
        let mut states = BTreeMap::new();
        for (&v, value) in &iv.assignments {
            dag.check(v)?;
            states.insert(v, state_of(self.domain(v), dag, v, value)?);
        }
        let mutilated = dag.without_incoming(&iv.nodes());
        let cpts = dag
            .nodes()
            .map(|v| match states.get(&v) {
                Some(&s) => Cpt::new(vec![point_mass(self.domain(v).len(), s)]),
                None => self.cpt(v).clone(),
            })
            .collect();
        self.with_parts(mutilated, cpts)
    }
}

impl Intervene for GaussianLinearModel {
    fn intervene(&self, iv: &Intervention) -> Result<Self> {
        let dag = self.dag();
        let (discrete, mechanisms) = self.parts();
        let mut discrete = discrete.to_vec();
        let mut mechanisms = mechanisms.to_vec();
        for (&v, value) in &iv.assignments {
            dag.check(v)?;
            if let Some(root) = &mut discrete[v.0] {
                let s = state_of(&root.labels, dag, v, value)?;
                root.probs = point_mass(root.labels.len(), s);
            } else {
                let x = match value {
                    Value::Real(x) if x.is_finite() => *x,
                    other => return Err(Error::Domain(format!("`{}` is continuous; got `{other}`", dag.name(v)))),
                };
                mechanisms[v.0] = vec![Mechanism::constant(x)];
            }
        }
        self.with_parts(dag.without_incoming(&iv.nodes()), discrete, mechanisms)
    }
}

impl Intervene for CausalModel {
    fn intervene(&self, iv: &Intervention) -> Result<Self> {
        Ok(match self {
            CausalModel::Discrete(m) => CausalModel::Discrete(m.intervene(iv)?),
            CausalModel::Gaussian(m) => CausalModel::Gaussian(m.intervene(iv)?),
        })
    }
}

/// Result of a do-query.
#[derive(Debug, Clone, PartialEq)]
pub enum DoOutcome<T> {
    Identified(T),
    Unidentifiable,
}

impl<T> DoOutcome<T> {
    pub fn identified(self) -> Option<T> {
        match self {
            DoOutcome::Identified(t) => Some(t),
            DoOutcome::Unidentifiable => None,
        }
    }

    pub fn is_unidentifiable(&self) -> bool {
        matches!(self, DoOutcome::Unidentifiable)
    }
}

/// Conservative identifiability check for `P(target | do(intervened))`.
///
/// The query is flagged when the target is unobserved, or when some
/// intervened node that still reaches the target in the mutilated graph is
/// unobserved itself or has a former parent d-connected to the target
/// (given the intervened nodes, in the mutilated graph) along a trail that
/// passes through an unobserved node. Intervened nodes with no directed
/// path to the target cannot change its law and are ignored.
pub fn is_identifiable(dag: &Dag, target: NodeId, intervened: &BTreeSet<NodeId>) -> Result<bool> {
    dag.check(target)?;
    for &v in intervened {
        dag.check(v)?;
    }
    if !dag.is_observed(target) {
        return Ok(false);
    }
    if intervened.contains(&target) {
        return Ok(true);
    }
    let mutilated = dag.without_incoming(intervened);
    let ancestors = mutilated.ancestors(target);
    let hidden = |u: NodeId| !dag.is_observed(u);
    let through_hidden = mutilated.d_connected_through(target, intervened, hidden);
    for &v in intervened.iter().filter(|v| ancestors.contains(v)) {
        if hidden(v) {
            return Ok(false);
        }
        if dag.parents(v).iter().any(|p| through_hidden.contains(p)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `P(target | do(iv))` by truncated factorization of the mutilated model.
pub fn do_distribution(model: &DiscreteModel, target: NodeId, iv: &Intervention) -> Result<DoOutcome<JointTable>> {
    do_distribution_of(model, &[target], iv)
}

/// Joint law of several targets under an intervention. Identifiable only
/// when every target is.
pub fn do_distribution_of(model: &DiscreteModel, targets: &[NodeId], iv: &Intervention) -> Result<DoOutcome<JointTable>> {
    let mutilated = model.intervene(iv)?;
    for &t in targets {
        if !is_identifiable(model.dag(), t, &iv.nodes())? {
            return Ok(DoOutcome::Unidentifiable);
        }
    }
    Ok(DoOutcome::Identified(mutilated.joint_distribution()?.marginal(targets)?))
}

/// One mixture component of a Gaussian do-distribution: the law of the
/// target for a single assignment of the categorical roots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianComponent {
    pub assignment: BTreeMap<String, String>,
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GaussianMarginal {
    Categorical { labels: Vec<String>, probs: Vec<f64> },
    Mixture { components: Vec<GaussianComponent> },
}

/// Law of `target` in a linear-Gaussian model under an intervention.
/// Continuous targets come back as a mixture over positive-probability
/// assignments of the categorical roots.
pub fn gaussian_do_distribution(model: &GaussianLinearModel, target: NodeId, iv: &Intervention) -> Result<DoOutcome<GaussianMarginal>> {
    let mutilated = model.intervene(iv)?;
    if !is_identifiable(model.dag(), target, &iv.nodes())? {
        return Ok(DoOutcome::Unidentifiable);
    }
    if let Some(root) = mutilated.discrete_root(target) {
        return Ok(DoOutcome::Identified(GaussianMarginal::Categorical { labels: root.labels.clone(), probs: root.probs.clone() }));
    }
    let dag = mutilated.dag();
    let mut components = Vec::new();
    for (config, weight) in mutilated.discrete_configs() {
        if weight <= 0.0 {
            continue;
        }
        let joint = mutilated.joint_gaussian(&config)?;
        components.push(GaussianComponent {
            assignment: config
                .iter()
                .map(|(&r, &s)| (dag.name(r).to_string(), mutilated.discrete_root(r).unwrap().labels[s].clone()))
                .collect(),
            weight,
            mean: joint.mean_of(target)?,
            variance: joint.cov_of(target, target)?,
        });
    }
    Ok(DoOutcome::Identified(GaussianMarginal::Mixture { components }))
}

fn max_pairwise_gap(tables: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, p) in tables.iter().enumerate() {
        for q in &tables[i + 1..] {
            for (x, y) in p.iter().zip(q) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Values at which a node is set when sweeping interventions: every label
/// of a categorical node, and 0 and 1 for a continuous one (the models are
/// affine in any intervened value, so two points determine the response).
fn sweep_values(model: &CausalModel, v: NodeId) -> Vec<Value> {
    match model {
        CausalModel::Discrete(m) => m.domain(v).iter().cloned().map(Value::Label).collect(),
        CausalModel::Gaussian(m) => match m.discrete_root(v) {
            Some(root) => root.labels.iter().cloned().map(Value::Label).collect(),
            None => vec![Value::Real(0.0), Value::Real(1.0)],
        },
    }
}

fn cartesian(model: &CausalModel, nodes: &[NodeId]) -> Vec<Vec<(NodeId, Value)>> {
    let mut out = vec![Vec::new()];
    for &v in nodes {
        let values = sweep_values(model, v);
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |x| {
                    let mut next = prefix.clone();
                    next.push((v, x.clone()));
                    next
                })
            })
            .collect();
    }
    out
}

/// Moments of a continuous node in each assignment of the categorical roots
/// other than `skip`, keyed by that assignment.
fn gaussian_moments(model: &GaussianLinearModel, r: NodeId, skip: NodeId) -> Result<BTreeMap<Vec<usize>, (f64, f64)>> {
    let mut out = BTreeMap::new();
    for (config, weight) in model.discrete_configs() {
        if weight <= 0.0 {
            continue;
        }
        let joint = model.joint_gaussian(&config)?;
        let key: Vec<usize> = config.iter().filter(|(v, _)| **v != skip).map(|(_, &s)| s).collect();
        out.insert(key, (joint.mean_of(r)?, joint.cov_of(r, r)?));
    }
    Ok(out)
}

/// Compares the law of `r` across every value of `a`, with the extra
/// assignments in `fixed` held in place. Returns `None` when unidentifiable.
fn effect_gaps(model: &CausalModel, r: NodeId, a: NodeId, fixed: &[(NodeId, Value)]) -> Result<Option<BTreeMap<String, f64>>> {
    let mut laws = Vec::new();
    let mut moments: Vec<BTreeMap<Vec<usize>, (f64, f64)>> = Vec::new();
    for x in sweep_values(model, a) {
        let mut iv = Intervention::new().set(a, x);
        for (v, val) in fixed {
            iv = iv.set(*v, val.clone());
        }
        if !is_identifiable(model.dag(), r, &iv.nodes())? {
            return Ok(None);
        }
        match model {
            CausalModel::Discrete(m) => {
                let mutilated = m.intervene(&iv)?;
                laws.push(mutilated.joint_distribution()?.marginal(&[r])?.probs().to_vec());
            }
            CausalModel::Gaussian(m) => {
                let mutilated = m.intervene(&iv)?;
                if mutilated.is_discrete(r) {
                    laws.push(mutilated.discrete_root(r).unwrap().probs.clone());
                } else {
                    moments.push(gaussian_moments(&mutilated, r, a)?);
                }
            }
        }
    }
    let mut gaps = BTreeMap::new();
    if moments.is_empty() {
        gaps.insert("max_cell_gap".to_string(), max_pairwise_gap(&laws));
    } else {
        let keys: BTreeSet<&Vec<usize>> = moments.iter().flat_map(|m| m.keys()).collect();
        let (mut mean_gap, mut var_gap) = (0.0f64, 0.0f64);
        for k in keys {
            let present: Vec<(f64, f64)> = moments.iter().filter_map(|m| m.get(k).copied()).collect();
            mean_gap = mean_gap.max(spread(present.iter().map(|p| p.0)));
            var_gap = var_gap.max(spread(present.iter().map(|p| p.1)));
        }
        gaps.insert("mean_gap".to_string(), mean_gap);
        gaps.insert("var_gap".to_string(), var_gap);
    }
    Ok(Some(gaps))
}

fn merge_max(into: &mut BTreeMap<String, f64>, from: BTreeMap<String, f64>) {
    for (k, v) in from {
        let e = into.entry(k).or_insert(0.0);
        *e = e.max(v);
    }
}

fn check_distinct(dag: &Dag, r: NodeId, a: NodeId, mediators: &BTreeSet<NodeId>) -> Result<()> {
    dag.check(r)?;
    dag.check(a)?;
    for &m in mediators {
        dag.check(m)?;
    }
    if r == a || mediators.contains(&r) || mediators.contains(&a) {
        return Err(Error::Overlap("r, a and the mediators must be distinct".into()));
    }
    Ok(())
}

/// Controlled direct effect equality: the law of `r` under
/// `do(a, mediators = x)` does not depend on `a`, for every `x`.
pub fn cde_equal(model: &CausalModel, r: NodeId, a: NodeId, mediators: &BTreeSet<NodeId>, tol: f64) -> Result<CriterionReport> {
    check_distinct(model.dag(), r, a, mediators)?;
    let mediators: Vec<NodeId> = mediators.iter().copied().collect();
    let mut gaps = BTreeMap::new();
    for fixed in cartesian(model, &mediators) {
        match effect_gaps(model, r, a, &fixed)? {
            Some(g) => merge_max(&mut gaps, g),
            None => return Ok(CriterionReport::undecidable(Criterion::CDEEqual, Method::Exact, tol)),
        }
    }
    Ok(CriterionReport::exact(Criterion::CDEEqual, gaps, tol))
}

/// Total effect equality: the law of `r` under `do(a)` does not depend on `a`.
pub fn te_equal(model: &CausalModel, r: NodeId, a: NodeId, tol: f64) -> Result<CriterionReport> {
    check_distinct(model.dag(), r, a, &BTreeSet::new())?;
    Ok(match effect_gaps(model, r, a, &[])? {
        Some(g) => CriterionReport::exact(Criterion::TEEqual, g, tol),
        None => CriterionReport::undecidable(Criterion::TEEqual, Method::Exact, tol),
    })
}
