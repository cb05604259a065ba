//! The four worked scenarios (loan repayment, job advertisement, college
//! admissions, insurance pricing), their predictors, and the unfaithful
//! fixtures.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::Serialize;

use crate::criteria::{self, CiTestOptions, Criterion, CriterionReport};
use crate::dataset::{format_real, Dataset};
use crate::discrete::{Cpt, DiscreteModel, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::gaussian::{DiscreteConfig, GaussianBuilder, GaussianLinearModel, Mechanism};
use crate::graph::{Dag, NodeId};
use crate::surgery::{self, CausalModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ScenarioId {
    #[serde(rename = "1")]
    Loan,
    #[serde(rename = "2")]
    JobAd,
    #[serde(rename = "2b")]
    JobAdHidden,
    #[serde(rename = "3")]
    College,
    #[serde(rename = "4")]
    Insurance,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] =
        [ScenarioId::Loan, ScenarioId::JobAd, ScenarioId::JobAdHidden, ScenarioId::College, ScenarioId::Insurance];
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(ScenarioId::Loan),
            "2" => Ok(ScenarioId::JobAd),
            "2b" => Ok(ScenarioId::JobAdHidden),
            "3" => Ok(ScenarioId::College),
            "4" => Ok(ScenarioId::Insurance),
            _ => Err(Error::Param(format!("unknown scenario `{s}` (expected 1, 2, 2b, 3 or 4)"))),
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioId::Loan => "1",
            ScenarioId::JobAd => "2",
            ScenarioId::JobAdHidden => "2b",
            ScenarioId::College => "3",
            ScenarioId::Insurance => "4",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupParams {
    pub label: String,
    pub prob: f64,
    /// Mean of the credit rating X2 in this group.
    pub mu: f64,
    /// Variance of the credit rating X2 in this group.
    pub var: f64,
    /// Mean of the hair-colour proxy X1 in this group.
    pub hair_mean: f64,
}

/// Loan repayment: Y = β·X2 + γ·X3 + e with e ~ N(0, σ²), X2 | A ~ N(μ_A, σ_A²).
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario1Params {
    pub groups: Vec<GroupParams>,
    pub beta: f64,
    pub sigma2: f64,
    pub x3_mean: f64,
    pub x3_var: f64,
    pub gamma: f64,
    /// Credit ratings biased by group: X2 = μ_A + σ_A·E with E an
    /// unobserved standard normal, and Y built from E instead of X2.
    pub biased_ratings: bool,
}

impl Default for Scenario1Params {
    fn default() -> Self {
        Self {
            groups: vec![
                GroupParams { label: "g1".into(), prob: 0.5, mu: 0.0, var: 4.0, hair_mean: 0.0 },
                GroupParams { label: "g2".into(), prob: 0.5, mu: 2.0, var: 1.0, hair_mean: 1.0 },
            ],
            beta: 1.0,
            sigma2: 1.0,
            x3_mean: 0.0,
            x3_var: 1.0,
            gamma: 1.0,
            biased_ratings: false,
        }
    }
}

impl Scenario1Params {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Param("at least one group is required".into()));
        }
        let total: f64 = self.groups.iter().map(|g| g.prob).sum();
        if self.groups.iter().any(|g| !(g.prob >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Param("group probabilities must be non-negative and sum to 1".into()));
        }
        for g in &self.groups {
            if g.var == 0.0 {
                return Err(Error::DegenerateGroup(format!("group `{}` has zero rating variance", g.label)));
            }
            if !(g.var > 0.0) || !g.mu.is_finite() || !g.hair_mean.is_finite() {
                return Err(Error::Param(format!("group `{}` has invalid parameters", g.label)));
            }
        }
        if !(self.sigma2 > 0.0) || !(self.x3_var > 0.0) {
            return Err(Error::Param("σ² and the X3 variance must be positive".into()));
        }
        if !self.beta.is_finite() || !self.gamma.is_finite() || !self.x3_mean.is_finite() {
            return Err(Error::Param("β, γ and the X3 mean must be finite".into()));
        }
        Ok(())
    }

    /// ρ_a = β²σ_a² / (β²σ_a² + σ²), the share of Var(Y | A = a) carried by X2.
    ///
    /// Given Y = y, X2 | A = a has mean (1 − ρ_a)μ_a + ρ_a·y/β and variance
    /// σ_a²(1 − ρ_a) = σ²ρ_a/β². The shorter form σ²ρ_a agrees only at β = 1.
    pub fn rho(&self, group: usize) -> f64 {
        let b2s = self.beta * self.beta * self.groups[group].var;
        b2s / (b2s + self.sigma2)
    }

    /// c = max_a 1/ρ_a.
    pub fn c(&self) -> f64 {
        (0..self.groups.len()).map(|g| 1.0 / self.rho(g)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Variance of the added noise Z for one group of the separation-enforcing predictor.
    pub fn z_variance(&self, group: usize) -> f64 {
        ((self.c() - 1.0 / self.rho(group)) * self.sigma2).max(0.0)
    }

    fn labels(&self) -> Vec<&str> {
        self.groups.iter().map(|g| g.label.as_str()).collect()
    }
}

/// Parameters for the discrete scenarios (2, 2b, 3, 4).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DiscreteCpts {
    /// Fixed binary CPTs with clearly visible dependencies.
    #[default]
    Fixed,
    /// Every CPT row drawn from a flat Dirichlet with this seed.
    Dirichlet(u64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioParams {
    pub loan: Scenario1Params,
    pub cpts: DiscreteCpts,
}

fn binary() -> Vec<String> {
    vec!["0".into(), "1".into()]
}

/// Binary CPT rows from P(child = 1 | parent configuration).
fn bernoulli_rows(p1: &[f64]) -> Cpt {
    Cpt::new(p1.iter().map(|&p| vec![1.0 - p, p]).collect())
}

fn dirichlet_rows(rng: &mut ChaCha8Rng, rows: usize, width: usize) -> Cpt {
    Cpt::new(
        (0..rows)
            .map(|_| {
                let raw: Vec<f64> = (0..width).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / total).collect()
            })
            .collect(),
    )
}

/// A binary model over `dag` with `fixed[v]` giving P(v = 1 | parents) per
/// parent configuration, or Dirichlet rows when asked.
fn binary_model(dag: Dag, fixed: &[&[f64]], cpts: DiscreteCpts) -> Result<DiscreteModel> {
    let n = dag.len();
    let cpts: Vec<Cpt> = match cpts {
        DiscreteCpts::Fixed => fixed.iter().map(|p| bernoulli_rows(p)).collect(),
        DiscreteCpts::Dirichlet(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            dag.nodes().map(|v| dirichlet_rows(&mut rng, 1 << dag.parents(v).len(), 2)).collect()
        }
    };
    DiscreteModel::new(dag, vec![binary(); n], cpts)
}

/// Builds a scenario's model. The graph matches the scenario's figure; the
/// loan scenario is linear-Gaussian and the others are binary.
pub fn build_scenario(id: ScenarioId, params: &ScenarioParams) -> Result<CausalModel> {
    Ok(match id {
        ScenarioId::Loan => CausalModel::Gaussian(scenario1_model(&params.loan)?),
        _ => CausalModel::Discrete(discrete_scenario(id, params.cpts)?),
    })
}

pub fn discrete_scenario(id: ScenarioId, cpts: DiscreteCpts) -> Result<DiscreteModel> {
    match id {
        ScenarioId::Loan => Err(Error::Param("scenario 1 is linear-Gaussian".into())),
        ScenarioId::JobAd => {
            let dag = Dag::build(&[("A", true), ("Y", true), ("X1", true), ("X2", true)], &[("A", "Y"), ("A", "X1"), ("Y", "X2")])?;
            binary_model(dag, &[&[0.5], &[0.3, 0.6], &[0.2, 0.7], &[0.1, 0.8]], cpts)
        }
        ScenarioId::JobAdHidden => {
            let dag = Dag::build(
                &[("A", true), ("U", false), ("X1", true), ("X2", true), ("Y", true), ("R2", true)],
                &[("A", "U"), ("A", "X1"), ("U", "X2"), ("U", "Y"), ("X2", "R2")],
            )?;
            binary_model(dag, &[&[0.5], &[0.3, 0.6], &[0.2, 0.7], &[0.1, 0.8], &[0.2, 0.7], &[0.1, 0.85]], cpts)
        }
        ScenarioId::College => {
            let dag = Dag::build(
                &[("A", true), ("X1", true), ("X2", true), ("Y", true)],
                &[("A", "X1"), ("X1", "X2"), ("X1", "Y"), ("X2", "Y")],
            )?;
            binary_model(dag, &[&[0.5], &[0.3, 0.7], &[0.2, 0.7], &[0.6, 0.35, 0.3, 0.1]], cpts)
        }
        ScenarioId::Insurance => {
            let dag = Dag::build(&[("U", false), ("A", true), ("Y", true), ("X", true)], &[("U", "A"), ("U", "Y"), ("U", "X")])?;
            binary_model(dag, &[&[0.5], &[0.3, 0.7], &[0.2, 0.6], &[0.1, 0.6]], cpts)
        }
    }
}

/// Adds a binary predictor node `name` on `parents`, using either a noisy
/// copy (single parent, fixed CPTs) or Dirichlet rows.
pub fn attach_binary_predictor(model: &DiscreteModel, name: &str, parents: &[&str], cpts: DiscreteCpts) -> Result<DiscreteModel> {
    let dag = model.dag();
    let ids: Vec<NodeId> = parents.iter().map(|p| dag.id(p)).collect::<Result<_>>()?;
    let rows = ids.iter().map(|&p| model.domain(p).len()).product();
    let cpt = match cpts {
        DiscreteCpts::Fixed if ids.len() == 1 && rows == 2 => bernoulli_rows(&[0.1, 0.85]),
        DiscreteCpts::Fixed => {
            // Deterministic spread of success rates over parent configurations.
            bernoulli_rows(&(0..rows).map(|k| 0.1 + 0.8 * k as f64 / (rows - 1).max(1) as f64).collect::<Vec<_>>())
        }
        DiscreteCpts::Dirichlet(seed) => dirichlet_rows(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed), rows, 2),
    };
    model.with_node(name, true, &ids, binary(), cpt)
}

pub fn scenario1_model(p: &Scenario1Params) -> Result<GaussianLinearModel> {
    p.validate()?;
    let labels = p.labels();
    let probs: Vec<f64> = p.groups.iter().map(|g| g.prob).collect();
    let mut nodes = vec![("A", true), ("X1", true), ("X2", true), ("X3", true), ("Y", true)];
    let mut edges = vec![("A", "X1"), ("A", "X2"), ("X2", "Y"), ("X3", "Y")];
    if p.biased_ratings {
        nodes.push(("EX2", false));
        edges = vec![("A", "X1"), ("A", "X2"), ("EX2", "X2"), ("EX2", "Y"), ("X3", "Y")];
    }
    let mut b = GaussianBuilder::new(Dag::build(&nodes, &edges)?).discrete("A", &labels, &probs)?;
    for g in &p.groups {
        b = b.mechanism("X1", &g.label, g.hair_mean, &[], 1.0)?;
        b = if p.biased_ratings {
            b.mechanism("X2", &g.label, g.mu, &[("EX2", g.var.sqrt())], 0.0)?
        } else {
            b.mechanism("X2", &g.label, g.mu, &[], g.var)?
        };
    }
    b = b.mechanism("X3", "", p.x3_mean, &[], p.x3_var)?;
    b = if p.biased_ratings {
        b.mechanism("EX2", "", 0.0, &[], 1.0)?.mechanism("Y", "", 0.0, &[("EX2", p.beta), ("X3", p.gamma)], p.sigma2)?
    } else {
        b.mechanism("Y", "", 0.0, &[("X2", p.beta), ("X3", p.gamma)], p.sigma2)?
    };
    b.build()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorForm {
    RawFeature,
    DemeanedFeature,
    Signal,
    SeparationEnforcing,
    DescendantOfY,
}

/// A loan-scenario predictor: per group a, R = c_a + s_a·X2 + γ_R·X3 + Z_a
/// with Z_a ~ N(0, v_a) independent of everything else.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub name: String,
    pub inputs: Vec<String>,
    pub form: PredictorForm,
    pub randomized: bool,
    group_labels: Vec<String>,
    intercept: Vec<f64>,
    x2_slope: Vec<f64>,
    x3_slope: f64,
    noise_var: Vec<f64>,
}

impl Predictor {
    fn group_index(&self, label: &str) -> Result<usize> {
        self.group_labels.iter().position(|l| l == label).ok_or_else(|| Error::Data(format!("unknown group `{label}`")))
    }

    /// Per-group (intercept, X2 slope, X3 slope, noise variance).
    pub fn coefficients(&self, group: &str) -> Result<(f64, f64, f64, f64)> {
        let g = self.group_index(group)?;
        Ok((self.intercept[g], self.x2_slope[g], self.x3_slope, self.noise_var[g]))
    }

    /// Evaluates the predictor on columns `A`, `X2` and `X3`.
    pub fn apply(&self, data: &Dataset, seed: u64) -> Result<Vec<f64>> {
        let (codes, labels) = data.categorical("A")?;
        let map: Vec<usize> = labels.iter().map(|l| self.group_index(l)).collect::<Result<_>>()?;
        let x2 = data.real("X2")?;
        let x3 = data.real("X3")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(codes
            .iter()
            .zip(x2.iter().zip(x3))
            .map(|(&c, (&a, &b))| {
                let g = map[c as usize];
                let mut r = self.intercept[g] + self.x2_slope[g] * a + self.x3_slope * b;
                if self.noise_var[g] > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    r += self.noise_var[g].sqrt() * z;
                }
                r
            })
            .collect())
    }

    /// Adds the predictor as a column named after it.
    pub fn register(&self, data: &mut Dataset, seed: u64) -> Result<()> {
        let r = self.apply(data, seed)?;
        data.push_real(&self.name, r)
    }

    /// Adds the predictor as a node of the loan model, with parents A, X2, X3.
    pub fn attach(&self, model: &GaussianLinearModel) -> Result<GaussianLinearModel> {
        let dag = model.dag();
        let [a, x2, x3] = [dag.id("A")?, dag.id("X2")?, dag.id("X3")?];
        let root = model.discrete_root(a).ok_or_else(|| Error::InvalidModel("`A` must be categorical".into()))?;
        let mechanisms = root
            .labels
            .iter()
            .map(|l| {
                let g = self.group_index(l)?;
                Ok(Mechanism {
                    intercept: self.intercept[g],
                    coefficients: vec![(x2, self.x2_slope[g]), (x3, self.x3_slope)],
                    noise_variance: self.noise_var[g],
                })
            })
            .collect::<Result<_>>()?;
        model.with_node(&self.name, true, &[a, x2, x3], mechanisms)
    }
}

/// The four loan-scenario predictors, keyed by name.
///
/// * `independence_demeaned`: β(X2 − μ_A)/σ_A + γX3, the standardized
///   rating residual plus the interest-rate term.
/// * `separation_enforcing`: β(X2 − (1 − ρ_A)μ_A)/ρ_A + γX3 + Z with
///   Z ~ N(0, (c − 1/ρ_A)σ²), so that R | Y, A ~ N(Y, cσ²).
/// * `sufficiency_signal`: βX2.
/// * `naive`: βX2 + γX3, ignoring groups.
pub fn scenario1_predictors(p: &Scenario1Params) -> Result<BTreeMap<String, Predictor>> {
    p.validate()?;
    let k = p.groups.len();
    let labels: Vec<String> = p.groups.iter().map(|g| g.label.clone()).collect();
    let make = |name: &str, inputs: &[&str], form, intercept: Vec<f64>, x2: Vec<f64>, x3: f64, noise: Vec<f64>| Predictor {
        name: name.to_string(),
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
        form,
        randomized: noise.iter().any(|&v| v > 0.0),
        group_labels: labels.clone(),
        intercept,
        x2_slope: x2,
        x3_slope: x3,
        noise_var: noise,
    };
    let (beta, gamma) = (p.beta, p.gamma);
    let sd: Vec<f64> = p.groups.iter().map(|g| g.var.sqrt()).collect();
    let rho: Vec<f64> = (0..k).map(|g| p.rho(g)).collect();
    let mut out = BTreeMap::new();
    for pred in [
        make(
            "independence_demeaned",
            &["A", "X2", "X3"],
            PredictorForm::DemeanedFeature,
            (0..k).map(|g| -beta * p.groups[g].mu / sd[g]).collect(),
            (0..k).map(|g| beta / sd[g]).collect(),
            gamma,
            vec![0.0; k],
        ),
        make(
            "separation_enforcing",
            &["A", "X2", "X3"],
            PredictorForm::SeparationEnforcing,
            (0..k).map(|g| -beta * (1.0 - rho[g]) * p.groups[g].mu / rho[g]).collect(),
            (0..k).map(|g| beta / rho[g]).collect(),
            gamma,
            (0..k).map(|g| p.z_variance(g)).collect(),
        ),
        make("sufficiency_signal", &["X2"], PredictorForm::Signal, vec![0.0; k], vec![beta; k], 0.0, vec![0.0; k]),
        make("naive", &["X2", "X3"], PredictorForm::RawFeature, vec![0.0; k], vec![beta; k], gamma, vec![0.0; k]),
    ] {
        out.insert(pred.name.clone(), pred);
    }
    Ok(out)
}

/// One row of the scatter-and-lines figure data. Point rows leave
/// `line_id` and the band empty; line rows may leave `group` empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureRow {
    pub x2: f64,
    pub y: f64,
    pub group: Option<String>,
    pub line_id: Option<String>,
    pub band_lo: Option<f64>,
    pub band_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FigureData {
    pub rows: Vec<FigureRow>,
}

pub const FIGURE_COLUMNS: [&str; 6] = ["x2", "y", "group", "line_id", "band_lo", "band_hi"];
pub const FIGURE_POINTS: usize = 200;
const FIGURE_GRID: usize = 41;

impl FigureData {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(FIGURE_COLUMNS)?;
        let opt = |x: Option<f64>| x.map(format_real).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                format_real(r.x2),
                format_real(r.y),
                r.group.clone().unwrap_or_default(),
                r.line_id.clone().unwrap_or_default(),
                opt(r.band_lo),
                opt(r.band_hi),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sampled points (X2, Y, group), the regression line of Y on X2, and per
/// group the separation-enforcing prediction line with ±2 standard
/// deviation bands wherever that group's prediction is randomized.
pub fn figure10_data(p: &Scenario1Params, points: usize, seed: u64) -> Result<FigureData> {
    let model = scenario1_model(p)?;
    let data = model.sample(points.max(1), seed)?;
    let (codes, labels) = data.categorical("A")?;
    let x2 = data.real("X2")?;
    let y = data.real("Y")?;
    let mut rows: Vec<FigureRow> = (0..data.len())
        .map(|i| FigureRow {
            x2: x2[i],
            y: y[i],
            group: Some(labels[codes[i] as usize].clone()),
            line_id: None,
            band_lo: None,
            band_hi: None,
        })
        .collect();
    let lo = x2.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let grid: Vec<f64> = (0..FIGURE_GRID).map(|i| lo + (hi - lo) * i as f64 / (FIGURE_GRID - 1) as f64).collect();
    let offset = p.gamma * p.x3_mean;
    for &x in &grid {
        rows.push(FigureRow { x2: x, y: p.beta * x + offset, group: None, line_id: Some("truth".into()), band_lo: None, band_hi: None });
    }
    let sep = &scenario1_predictors(p)?["separation_enforcing"];
    for g in &p.groups {
        let (c0, s2, _, v) = sep.coefficients(&g.label)?;
        let sd = v.sqrt();
        for &x in &grid {
            let r = c0 + s2 * x + offset;
            let band = (v > 0.0).then_some(2.0 * sd);
            rows.push(FigureRow {
                x2: x,
                y: r,
                group: Some(g.label.clone()),
                line_id: Some(format!("separation:{}", g.label)),
                band_lo: band.map(|b| r - b),
                band_hi: band.map(|b| r + b),
            });
        }
    }
    Ok(FigureData { rows })
}

/// A criterion report tagged with the predictor it was computed for.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorReport {
    pub predictor: String,
    pub report: CriterionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioEvaluation {
    pub scenario: ScenarioId,
    pub n: usize,
    pub seed: u64,
    pub reports: Vec<PredictorReport>,
    #[serde(skip)]
    pub figure_data: Option<FigureData>,
}

impl ScenarioEvaluation {
    pub fn find(&self, predictor: &str, criterion: Criterion) -> Option<&CriterionReport> {
        self.reports.iter().find(|r| r.predictor == predictor && r.report.criterion == criterion).map(|r| &r.report)
    }
}

pub const MIN_EVAL_N: usize = 1_000;

/// Samples a scenario, applies its predictors and runs the matching
/// criteria. Oblivious criteria are tested on the sample at `alpha`; the
/// causal criteria of scenarios 3 and 4 are decided exactly.
pub fn evaluate_scenario(id: ScenarioId, params: &ScenarioParams, n: usize, seed: u64, alpha: f64) -> Result<ScenarioEvaluation> {
    if n < MIN_EVAL_N {
        return Err(Error::Param(format!("n must be at least {MIN_EVAL_N}")));
    }
    let opts = CiTestOptions::with_alpha(alpha);
    let mut reports = Vec::new();
    let mut push = |predictor: &str, report: CriterionReport| {
        reports.push(PredictorReport { predictor: predictor.to_string(), report });
    };
    let mut figure_data = None;
    match id {
        ScenarioId::Loan => {
            let model = scenario1_model(&params.loan)?;
            let mut data = model.sample(n, seed)?;
            let predictors = scenario1_predictors(&params.loan)?;
            for (i, (name, pred)) in predictors.iter().enumerate() {
                pred.register(&mut data, stream_seed(seed, i as u64 + 1))?;
                push(name, criteria::test_independence(&data, name, "A", alpha)?);
            }
            for name in predictors.keys() {
                push(name, criteria::test_cond_independence(&data, name, "A", &["Y"], Criterion::Separation, opts)?);
                push(name, criteria::test_cond_independence(&data, "Y", "A", &[name], Criterion::Sufficiency, opts)?);
            }
            figure_data = Some(figure10_data(&params.loan, FIGURE_POINTS, seed)?);
        }
        ScenarioId::JobAd | ScenarioId::JobAdHidden => {
            let mut model = discrete_scenario(id, params.cpts)?;
            let mut names = vec!["R2"];
            if id == ScenarioId::JobAd {
                model = attach_binary_predictor(&model, "R1", &["X1"], params.cpts)?;
                model = attach_binary_predictor(&model, "R2", &["X2"], params.cpts)?;
                names.insert(0, "R1");
            }
            let data = model.sample(n, seed)?;
            for name in names {
                push(name, criteria::test_independence(&data, name, "A", alpha)?);
                push(name, criteria::test_cond_independence(&data, name, "A", &["Y"], Criterion::Separation, opts)?);
                push(name, criteria::test_cond_independence(&data, "Y", "A", &[name], Criterion::Sufficiency, opts)?);
            }
        }
        ScenarioId::College => {
            let model = attach_binary_predictor(&discrete_scenario(id, params.cpts)?, "R", &["X2"], params.cpts)?;
            let dag = model.dag();
            let [a, x2, r] = [dag.id("A")?, dag.id("X2")?, dag.id("R")?];
            let data = model.sample(n, seed)?;
            push("R", criteria::test_independence(&data, "R", "A", alpha)?);
            push("R", criteria::test_cond_independence(&data, "R", "A", &["X2"], Criterion::ConditionalIndependence, opts)?);
            let cm = CausalModel::Discrete(model.clone());
            push("R", surgery::cde_equal(&cm, r, a, &[x2].into(), DEFAULT_TOL)?);
            let joint = model.joint_distribution()?;
            push("R", criteria::exact_ci_report(&joint, Criterion::ConditionalIndependence, r, a, &[x2], DEFAULT_TOL)?);
        }
        ScenarioId::Insurance => {
            let model = attach_binary_predictor(&discrete_scenario(id, params.cpts)?, "R", &["X"], params.cpts)?;
            let dag = model.dag();
            let [a, r] = [dag.id("A")?, dag.id("R")?];
            let data = model.sample(n, seed)?;
            push("R", criteria::test_independence(&data, "R", "A", alpha)?);
            push("R", criteria::test_cond_independence(&data, "R", "A", &["Y"], Criterion::Separation, opts)?);
            push("R", surgery::te_equal(&CausalModel::Discrete(model), r, a, DEFAULT_TOL)?);
        }
    }
    Ok(ScenarioEvaluation { scenario: id, n, seed, reports, figure_data })
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.random()
}

/// Linear-Gaussian fixture whose two paths from V1 to V4 cancel:
/// V2 = 3V1 + e2, V3 = 2V1 + e3, V4 = −2V2 + 3V3 + e4, unit noises.
pub fn unfaithful_fixture() -> GaussianLinearModel {
    unfaithful_fixture_with(-2.0)
}

/// Same as [`unfaithful_fixture`] with the V2 → V4 coefficient replaced.
pub fn unfaithful_fixture_with(v2_to_v4: f64) -> GaussianLinearModel {
    let dag =
        Dag::build(&[("V1", true), ("V2", true), ("V3", true), ("V4", true)], &[("V1", "V2"), ("V1", "V3"), ("V2", "V4"), ("V3", "V4")])
            .expect("fixture graph is valid");
    GaussianBuilder::new(dag)
        .mechanism("V1", "", 0.0, &[], 1.0)
        .and_then(|b| b.mechanism("V2", "", 0.0, &[("V1", 3.0)], 1.0))
        .and_then(|b| b.mechanism("V3", "", 0.0, &[("V1", 2.0)], 1.0))
        .and_then(|b| b.mechanism("V4", "", 0.0, &[("V2", v2_to_v4), ("V3", 3.0)], 1.0))
        .and_then(GaussianBuilder::build)
        .expect("fixture parameters are valid")
}

/// Binary analogue: V2 and V3 are independent noisy copies of a uniform V1
/// and V4 is a noisy XOR of V2 and V3, so V4 ⊥ V1 although they are
/// d-connected.
pub fn unfaithful_discrete_fixture() -> DiscreteModel {
    let dag =
        Dag::build(&[("V1", true), ("V2", true), ("V3", true), ("V4", true)], &[("V1", "V2"), ("V1", "V3"), ("V2", "V4"), ("V3", "V4")])
            .expect("fixture graph is valid");
    let cpts =
        vec![bernoulli_rows(&[0.5]), bernoulli_rows(&[0.2, 0.8]), bernoulli_rows(&[0.2, 0.8]), bernoulli_rows(&[0.1, 0.9, 0.9, 0.1])];
    DiscreteModel::new(dag, vec![binary(); 4], cpts).expect("fixture parameters are valid")
}

/// Moments of `target` given `given = value` within one group of the loan
/// model (including any attached predictor nodes).
pub fn scenario1_conditional(model: &GaussianLinearModel, group: &str, target: &str, given: &str, value: f64) -> Result<(f64, f64)> {
    let dag = model.dag();
    let a = dag.id("A")?;
    let state = model.state_index(a, group)?;
    let joint = model.joint_gaussian(&DiscreteConfig::from([(a, state)]))?;
    let [t, g] = [dag.id(target)?, dag.id(given)?];
    let c = joint.condition(&[t], &[(g, value)])?;
    Ok((c.mean[0], c.cov[(0, 0)]))
}
