//! JSON model files.
//!
//! A graph file has `nodes` and `edges`. A discrete model adds `domains`
//! and `cpts`, with CPT rows keyed by the comma-joined parent labels in
//! declared parent order ("" for roots). A linear-Gaussian model adds a
//! `gaussian` block keyed the same way over categorical parents only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::discrete::{Cpt, DiscreteModel, JointTable};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianBuilder, GaussianLinearModel};
use crate::graph::{Dag, NodeId};
use crate::surgery::CausalModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    #[serde(default = "yes")]
    pub observed: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSpec {
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    pub noise_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GaussianSpec {
    #[serde(default)]
    pub discrete_roots: BTreeMap<String, RootSpec>,
    #[serde(default)]
    pub mechanisms: BTreeMap<String, BTreeMap<String, MechanismSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domains: Option<BTreeMap<String, Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpts: Option<BTreeMap<String, BTreeMap<String, Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<GaussianSpec>,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn dag(&self) -> Result<Dag> {
        let nodes: Vec<(&str, bool)> = self.nodes.iter().map(|n| (n.name.as_str(), n.observed)).collect();
        let edges: Vec<(&str, &str)> = self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        Dag::build(&nodes, &edges)
    }

    /// The model the file describes: Gaussian when it has a `gaussian`
    /// block, discrete when it has `domains` and `cpts`.
    pub fn model(&self) -> Result<CausalModel> {
        let dag = self.dag()?;
        match (&self.gaussian, &self.domains, &self.cpts) {
            (Some(g), None, None) => Ok(CausalModel::Gaussian(gaussian_from_spec(dag, g)?)),
            (None, Some(d), Some(c)) => Ok(CausalModel::Discrete(discrete_from_spec(dag, d, c)?)),
            (None, None, None) => Err(Error::InvalidModel("file describes a graph only".into())),
            _ => Err(Error::InvalidModel("a model needs either `domains` with `cpts`, or a `gaussian` block".into())),
        }
    }
}

pub fn parse_graph(text: &str) -> Result<Dag> {
    ModelFile::parse(text)?.dag()
}

pub fn parse_model(text: &str) -> Result<CausalModel> {
    ModelFile::parse(text)?.model()
}

fn unknown_keys<'a>(dag: &Dag, keys: impl Iterator<Item = &'a String>, what: &str) -> Result<()> {
    for k in keys {
        if dag.id(k).is_err() {
            return Err(Error::UnknownNode(format!("`{k}` in {what}")));
        }
    }
    Ok(())
}

/// All parent-label keys of `v`, in row order.
fn row_keys(parents: &[NodeId], domain: impl Fn(NodeId) -> Vec<String>) -> Vec<String> {
    let mut keys = vec![Vec::<String>::new()];
    for &p in parents {
        let labels = domain(p);
        keys = keys
            .into_iter()
            .flat_map(|prefix| {
                labels.iter().map(move |l| {
                    let mut k = prefix.clone();
                    k.push(l.clone());
                    k
                })
            })
            .collect();
    }
    keys.into_iter().map(|k| k.join(",")).collect()
}

fn discrete_from_spec(
    dag: Dag,
    domains: &BTreeMap<String, Vec<String>>,
    cpts: &BTreeMap<String, BTreeMap<String, Vec<f64>>>,
) -> Result<DiscreteModel> {
    unknown_keys(&dag, domains.keys(), "domains")?;
    unknown_keys(&dag, cpts.keys(), "cpts")?;
    let doms: Vec<Vec<String>> = dag
        .nodes()
        .map(|v| domains.get(dag.name(v)).cloned().ok_or_else(|| Error::InvalidModel(format!("no domain for `{}`", dag.name(v)))))
        .collect::<Result<_>>()?;
    let mut tables = Vec::with_capacity(dag.len());
    for v in dag.nodes() {
        let name = dag.name(v);
        let table = cpts.get(name).ok_or_else(|| Error::InvalidModel(format!("no CPT for `{name}`")))?;
        let keys = row_keys(dag.parents(v), |p| doms[p.0].clone());
        if table.len() != keys.len() {
            return Err(Error::InvalidModel(format!(
                "CPT of `{name}` has {} rows, parent configurations number {}",
                table.len(),
                keys.len()
            )));
        }
        let rows = keys
            .iter()
            .map(|k| table.get(k).cloned().ok_or_else(|| Error::InvalidModel(format!("CPT of `{name}` lacks row `{k}`"))))
            .collect::<Result<_>>()?;
        tables.push(Cpt::new(rows));
    }
    DiscreteModel::new(dag, doms, tables)
}

fn gaussian_from_spec(dag: Dag, spec: &GaussianSpec) -> Result<GaussianLinearModel> {
    unknown_keys(&dag, spec.discrete_roots.keys(), "discrete_roots")?;
    unknown_keys(&dag, spec.mechanisms.keys(), "mechanisms")?;
    let mut b = GaussianBuilder::new(dag);
    for (node, root) in &spec.discrete_roots {
        let labels: Vec<&str> = root.labels.iter().map(String::as_str).collect();
        b = b.discrete(node, &labels, &root.probs)?;
    }
    for (node, keyed) in &spec.mechanisms {
        for (key, m) in keyed {
            let coefs: Vec<(&str, f64)> = m.coefficients.iter().map(|(p, c)| (p.as_str(), *c)).collect();
            b = b.mechanism(node, key, m.intercept, &coefs, m.noise_variance)?;
        }
    }
    b.build()
}

fn spec_nodes(dag: &Dag) -> (Vec<NodeSpec>, Vec<(String, String)>) {
    let nodes = dag.nodes().map(|v| NodeSpec { name: dag.name(v).to_string(), observed: dag.is_observed(v) }).collect();
    (nodes, dag.edge_names())
}

/// Inverse of [`ModelFile::model`].
pub fn model_file(model: &CausalModel) -> ModelFile {
    let dag = model.dag();
    let (nodes, edges) = spec_nodes(dag);
    match model {
        CausalModel::Discrete(m) => {
            let mut domains = BTreeMap::new();
            let mut cpts = BTreeMap::new();
            for v in dag.nodes() {
                domains.insert(dag.name(v).to_string(), m.domain(v).to_vec());
                let keys = row_keys(dag.parents(v), |p| m.domain(p).to_vec());
                cpts.insert(dag.name(v).to_string(), keys.into_iter().zip(m.cpt(v).rows().iter().cloned()).collect());
            }
            ModelFile { nodes, edges, domains: Some(domains), cpts: Some(cpts), gaussian: None }
        }
        CausalModel::Gaussian(m) => {
            let mut spec = GaussianSpec::default();
            for v in dag.nodes() {
                let name = dag.name(v).to_string();
                if let Some(root) = m.discrete_root(v) {
                    spec.discrete_roots.insert(name, RootSpec { labels: root.labels.clone(), probs: root.probs.clone() });
                    continue;
                }
                let keys = row_keys(&m.discrete_parents(v), |p| m.discrete_root(p).unwrap().labels.clone());
                let keyed = keys
                    .into_iter()
                    .zip(m.mechanisms(v))
                    .map(|(k, mech)| {
                        let mut coefficients = BTreeMap::new();
                        for (p, c) in &mech.coefficients {
                            *coefficients.entry(dag.name(*p).to_string()).or_insert(0.0) += c;
                        }
                        (k, MechanismSpec { intercept: mech.intercept, coefficients, noise_variance: mech.noise_variance })
                    })
                    .collect();
                spec.mechanisms.insert(name, keyed);
            }
            ModelFile { nodes, edges, domains: None, cpts: None, gaussian: Some(spec) }
        }
    }
}

pub fn model_to_json(model: &CausalModel) -> String {
    serde_json::to_string_pretty(&model_file(model)).expect("model files serialize")
}

/// `{"variables": [...], "rows": [{"states": [...], "p": x}, ...]}` in
/// row-major order.
pub fn joint_table_json(table: &JointTable) -> Json {
    let cards = table.cards();
    let mut states = vec![0usize; cards.len()];
    let mut rows = Vec::with_capacity(table.probs().len());
    for &p in table.probs() {
        let labels: Vec<&str> = states.iter().zip(table.labels()).map(|(&s, l)| l[s].as_str()).collect();
        rows.push(json!({ "states": labels, "p": p }));
        for i in (0..cards.len()).rev() {
            states[i] += 1;
            if states[i] < cards[i] {
                break;
            }
            states[i] = 0;
        }
    }
    json!({ "variables": table.names(), "rows": rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"{
        "nodes": [{"name": "A", "observed": true}, {"name": "B", "observed": true}, {"name": "C", "observed": false}],
        "edges": [["A", "C"], ["B", "C"]],
        "domains": {"A": ["x", "y"], "B": ["0", "1", "2"], "C": ["0", "1"]},
        "cpts": {
            "A": {"": [0.25, 0.75]},
            "B": {"": [0.2, 0.3, 0.5]},
            "C": {"x,0": [1, 0], "x,1": [0.5, 0.5], "x,2": [0.1, 0.9],
                  "y,0": [0, 1], "y,1": [0.4, 0.6], "y,2": [0.3, 0.7]}
        }
    }"#;

    #[test]
    fn discrete_round_trip() {
        let m = parse_model(CHAIN).unwrap();
        let CausalModel::Discrete(d) = &m else { panic!() };
        let c = d.dag().id("C").unwrap();
        // Row for A = y, B = 1: first parent most significant.
        assert_eq!(d.cpt(c).row(4), &[0.4, 0.6]);
        assert!(!d.dag().is_observed(c));
        let again = parse_model(&model_to_json(&m)).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn missing_row_and_unknown_node() {
        let bad = CHAIN.replace(r#""y,2": [0.3, 0.7]"#, r#""y,3": [0.3, 0.7]"#);
        assert!(matches!(parse_model(&bad), Err(Error::InvalidModel(_))));
        let bad = CHAIN.replace(r#""A": {"": [0.25, 0.75]}"#, r#""A": {"": [0.25, 0.75]}, "Q": {"": [1, 0]}"#);
        assert!(matches!(parse_model(&bad), Err(Error::UnknownNode(_))));
        assert!(matches!(parse_model("{\"nodes\": []"), Err(Error::Io(_))));
    }

    #[test]
    fn gaussian_round_trip() {
        let text = r#"{
            "nodes": [{"name": "A", "observed": true}, {"name": "X", "observed": true}, {"name": "Y", "observed": true}],
            "edges": [["A", "X"], ["X", "Y"], ["A", "Y"]],
            "gaussian": {
                "discrete_roots": {"A": {"labels": ["p", "q"], "probs": [0.4, 0.6]}},
                "mechanisms": {
                    "X": {"p": {"intercept": 1, "noise_variance": 2}, "q": {"intercept": -1, "noise_variance": 1}},
                    "Y": {"p": {"coefficients": {"X": 2}, "noise_variance": 1},
                          "q": {"coefficients": {"X": 0.5}, "noise_variance": 1}}
                }
            }
        }"#;
        let m = parse_model(text).unwrap();
        assert_eq!(parse_model(&model_to_json(&m)).unwrap(), m);
        assert!(parse_graph(text).is_ok());
    }

    #[test]
    fn graph_only_files_are_not_models() {
        let text = r#"{"nodes": [{"name": "A", "observed": true}], "edges": []}"#;
        assert_eq!(parse_graph(text).unwrap().len(), 1);
        assert!(parse_model(text).is_err());
    }
}
