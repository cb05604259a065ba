//! Fairness criteria, decided exactly on discrete models and by hypothesis
//! tests on samples, plus a randomized search for tables that would break
//! the Separation/Sufficiency incompatibility.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset};
use crate::discrete::{DiscreteModel, JointTable, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::stats::{self, TableStat};

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    DemographicParity,
    Independence,
    EqualizedOdds,
    Separation,
    Calibration,
    CalibrationByGroup,
    PredictiveParity,
    Sufficiency,
    ParityBySignal,
    ParityByS,
    ConditionalIndependence,
    CDEEqual,
    TEEqual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Satisfied,
    Violated,
    Undecidable,
}

/// Outcome of one criterion evaluation.
///
/// Exact reports compare every gap to `threshold`; empirical reports carry
/// a p-value and use `threshold` as the significance level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: Criterion,
    pub method: Method,
    pub gaps: BTreeMap<String, f64>,
    pub p_value: Option<f64>,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl CriterionReport {
    pub fn exact(criterion: Criterion, gaps: BTreeMap<String, f64>, threshold: f64) -> Self {
        let verdict = if gaps.values().all(|&g| g <= threshold) { Verdict::Satisfied } else { Verdict::Violated };
        Self { criterion, method: Method::Exact, gaps, p_value: None, threshold, verdict }
    }

    pub fn empirical(criterion: Criterion, gaps: BTreeMap<String, f64>, p_value: f64, alpha: f64) -> Self {
        let verdict = if p_value >= alpha { Verdict::Satisfied } else { Verdict::Violated };
        Self { criterion, method: Method::Empirical, gaps, p_value: Some(p_value), threshold: alpha, verdict }
    }

    pub fn undecidable(criterion: Criterion, method: Method, threshold: f64) -> Self {
        Self { criterion, method, gaps: BTreeMap::new(), p_value: None, threshold, verdict: Verdict::Undecidable }
    }

    pub fn is_satisfied(&self) -> bool {
        self.verdict == Verdict::Satisfied
    }

    pub fn gap(&self, name: &str) -> Option<f64> {
        self.gaps.get(name).copied()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("reports serialize")
    }
}

fn gaps<const N: usize>(items: [(&str, f64); N]) -> BTreeMap<String, f64> {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Codes and level count of the sensitive attribute.
fn group_codes(data: &Dataset, a_col: &str) -> Result<(Vec<usize>, usize)> {
    let (codes, labels) = data.categorical(a_col)?;
    if labels.len() < 2 {
        return Err(Error::EmptyGroup(format!("`{a_col}` needs at least two levels")));
    }
    Ok((codes.iter().map(|&c| c as usize).collect(), labels.len()))
}

fn require_populated(groups: &[usize], k: usize, what: &str) -> Result<()> {
    let mut seen = vec![false; k];
    for &g in groups {
        seen[g] = true;
    }
    if seen.iter().all(|&s| s) {
        Ok(())
    } else {
        Err(Error::EmptyGroup(what.to_string()))
    }
}

/// Per-group counts of a binary outcome within one stratum:
/// `table[a] = [count(outcome = 0), count(outcome = 1)]`.
fn binary_table(groups: &[usize], k: usize, outcome: &[bool], keep: impl Fn(usize) -> bool) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; 2]; k];
    for (i, (&g, &o)) in groups.iter().zip(outcome).enumerate() {
        if keep(i) {
            t[g][o as usize] += 1.0;
        }
    }
    t
}

fn rates(table: &[Vec<f64>]) -> Vec<Option<f64>> {
    table
        .iter()
        .map(|r| {
            let n = r[0] + r[1];
            (n > 0.0).then(|| r[1] / n)
        })
        .collect()
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        0.0
    } else {
        max - min
    }
}

/// Outcome of comparing per-group success rates within one stratum.
enum StratumRates {
    /// Nobody in the stratum: conditioning event absent from the data.
    Absent,
    /// Some groups observed, others not.
    Partial,
    Full {
        gap: f64,
        stat: TableStat,
    },
}

fn stratum_rates(table: &[Vec<f64>]) -> StratumRates {
    let r = rates(table);
    let present = r.iter().filter(|x| x.is_some()).count();
    if present == 0 {
        StratumRates::Absent
    } else if present < r.len() {
        StratumRates::Partial
    } else {
        let vals: Vec<f64> = r.into_iter().flatten().collect();
        StratumRates::Full { gap: spread(&vals), stat: stats::pearson_chi2(table) }
    }
}

/// Gap-per-stratum criterion built from rate comparisons (Equalized Odds,
/// Predictive Parity).
fn stratified_rate_report(criterion: Criterion, strata: &[(&str, Vec<Vec<f64>>)], alpha: f64) -> CriterionReport {
    let mut g = BTreeMap::new();
    let mut total = TableStat::ZERO;
    for (name, table) in strata {
        match stratum_rates(table) {
            StratumRates::Absent => {}
            StratumRates::Partial => return CriterionReport::undecidable(criterion, Method::Empirical, alpha),
            StratumRates::Full { gap, stat } => {
                g.insert(name.to_string(), gap);
                total = total + stat;
            }
        }
    }
    CriterionReport::empirical(criterion, g, total.p_value(), alpha)
}

/// Demographic Parity, Equalized Odds, Predictive Parity and Calibration by
/// Group for a binary prediction `r_col` and binary response `y_col`.
pub fn audit_binary(data: &Dataset, a_col: &str, r_col: &str, y_col: &str, alpha: f64) -> Result<Vec<CriterionReport>> {
    let (groups, k) = group_codes(data, a_col)?;
    let r = data.binary(r_col)?;
    let y = data.binary(y_col)?;
    let mut out = Vec::with_capacity(4);

    // P(R = 1 | A = a) equal across a.
    let dp = if require_populated(&groups, k, a_col).is_err() {
        CriterionReport::undecidable(Criterion::DemographicParity, Method::Empirical, alpha)
    } else {
        let table = binary_table(&groups, k, &r, |_| true);
        match stratum_rates(&table) {
            StratumRates::Full { gap, stat } => {
                CriterionReport::empirical(Criterion::DemographicParity, gaps([("rate_gap", gap)]), stat.p_value(), alpha)
            }
            _ => CriterionReport::undecidable(Criterion::DemographicParity, Method::Empirical, alpha),
        }
    };
    out.push(dp);

    // P(R = 1 | Y = y, A = a) equal across a, for y = 0 (FPR) and y = 1 (TPR).
    let eo_strata = [("fpr_gap", binary_table(&groups, k, &r, |i| !y[i])), ("tpr_gap", binary_table(&groups, k, &r, |i| y[i]))];
    out.push(stratified_rate_report(Criterion::EqualizedOdds, &eo_strata, alpha));

    // P(Y = 1 | R = r, A = a) equal across a.
    let pp_strata = [("gap_r0", binary_table(&groups, k, &y, |i| !r[i])), ("gap_r1", binary_table(&groups, k, &y, |i| r[i]))];
    out.push(stratified_rate_report(Criterion::PredictiveParity, &pp_strata, alpha));

    // P(Y = 1 | R = r, A = a) = r. With r ∈ {0, 1}, a single response that
    // contradicts its prediction has probability zero under the null.
    let mut cal_gaps = BTreeMap::new();
    let mut contradicted = false;
    let mut decidable = true;
    for (name, stratum_r) in [("calib_gap_r0", false), ("calib_gap_r1", true)] {
        let table = binary_table(&groups, k, &y, |i| r[i] == stratum_r);
        let target = if stratum_r { 1.0 } else { 0.0 };
        match rates(&table).iter().filter(|x| x.is_some()).count() {
            0 => continue,
            c if c < k => decidable = false,
            _ => {}
        }
        let gap = rates(&table).into_iter().flatten().map(|p| (p - target).abs()).fold(0.0, f64::max);
        contradicted |= gap > 0.0;
        cal_gaps.insert(name.to_string(), gap);
    }
    out.push(if decidable {
        CriterionReport::empirical(Criterion::CalibrationByGroup, cal_gaps, if contradicted { 0.0 } else { 1.0 }, alpha)
    } else {
        CriterionReport::undecidable(Criterion::CalibrationByGroup, Method::Empirical, alpha)
    });
    Ok(out)
}

/// Binned calibration check of a predicted probability column `p_col`
/// against a binary response. With `a_col`, each (bin, group) cell is tested
/// separately (Calibration by Group). The statistic sums squared
/// standardized differences between observed and expected positives.
pub fn test_calibration(data: &Dataset, p_col: &str, y_col: &str, a_col: Option<&str>, bins: usize, alpha: f64) -> Result<CriterionReport> {
    let p = data.real(p_col)?;
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::Data(format!("`{p_col}` must hold probabilities")));
    }
    let y = data.binary(y_col)?;
    let (groups, criterion) = match a_col {
        Some(a) => (group_codes(data, a)?.0, Criterion::CalibrationByGroup),
        None => (vec![0; p.len()], Criterion::Calibration),
    };
    let bin = stats::equal_frequency_bins(p, bins.max(1));
    let mut cells: BTreeMap<(usize, usize), (f64, f64, f64, f64)> = BTreeMap::new();
    for i in 0..p.len() {
        let c = cells.entry((bin[i], groups[i])).or_default();
        c.0 += y[i] as u8 as f64;
        c.1 += p[i];
        c.2 += p[i] * (1.0 - p[i]);
        c.3 += 1.0;
    }
    let mut stat = 0.0;
    let mut df = 0.0;
    let mut worst = 0.0f64;
    let mut contradicted = false;
    for &(obs, exp, var, n) in cells.values() {
        worst = worst.max((obs - exp).abs() / n);
        if var > 0.0 {
            stat += (obs - exp).powi(2) / var;
            df += 1.0;
        } else if (obs - exp).abs() > 1e-9 {
            contradicted = true;
        }
    }
    let p_value = if contradicted { 0.0 } else { stats::chi2_sf(stat, df) };
    Ok(CriterionReport::empirical(criterion, gaps([("max_calibration_gap", worst)]), p_value, alpha))
}

/// Options for the conditional independence test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiTestOptions {
    pub alpha: f64,
    /// Equal-frequency bins per continuous conditioning column.
    pub bins: usize,
    /// Remove, within each stratum, the least-squares linear trend of a real
    /// target on the continuous conditioning columns before ranking.
    pub residualize: bool,
}

impl Default for CiTestOptions {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, bins: DEFAULT_BINS, residualize: true }
    }
}

impl CiTestOptions {
    pub fn with_alpha(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }
}

/// Location and scale comparison of a real variable across groups.
/// Returns the Bonferroni-combined p-value of the two rank tests, or `None`
/// when the data carry no information (fewer than two populated groups or
/// a constant variable).
fn location_scale(values: &[f64], groups: &[usize], k: usize) -> Option<(f64, f64)> {
    let loc = stats::kruskal_wallis(values, groups, k)?;
    let dev = stats::median_deviations(values, groups, k);
    let scale_p = stats::kruskal_wallis(&dev, groups, k).map_or(1.0, TableStat::p_value);
    Some((loc.p_value(), scale_p))
}

fn bonferroni(p_loc: f64, p_scale: f64) -> f64 {
    (2.0 * p_loc.min(p_scale)).min(1.0)
}

fn group_moment_gaps(values: &[f64], groups: &[usize], k: usize) -> (f64, f64) {
    let mut by_group: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (&v, &g) in values.iter().zip(groups) {
        by_group[g].push(v);
    }
    let populated: Vec<&Vec<f64>> = by_group.iter().filter(|g| !g.is_empty()).collect();
    let means: Vec<f64> = populated.iter().map(|g| stats::mean(g)).collect();
    let vars: Vec<f64> = populated.iter().filter(|g| g.len() > 1).map(|g| stats::variance(g)).collect();
    (spread(&means), spread(&vars))
}

/// Independence of a prediction and the sensitive attribute.
///
/// Categorical predictions use a G-test on the group × prediction table.
/// Real predictions use Kruskal–Wallis for location and a Brown–Forsythe
/// style Kruskal–Wallis on absolute median deviations for scale, combined
/// by Bonferroni. Differences in group means and variances are reported as
/// gaps.
pub fn test_independence(data: &Dataset, r_col: &str, a_col: &str, alpha: f64) -> Result<CriterionReport> {
    let (groups, k) = group_codes(data, a_col)?;
    if require_populated(&groups, k, a_col).is_err() {
        return Ok(CriterionReport::undecidable(Criterion::Independence, Method::Empirical, alpha));
    }
    match data.column(r_col)? {
        Column::Categorical { labels, codes } => {
            let table = count_table(&groups, k, codes, labels.len(), |_| true);
            let gap = categorical_rate_gap(&table);
            let p = stats::g_test(&table).p_value();
            Ok(CriterionReport::empirical(Criterion::Independence, gaps([("rate_gap", gap)]), p, alpha))
        }
        Column::Real(values) => {
            let (mean_gap, var_gap) = group_moment_gaps(values, &groups, k);
            let p = location_scale(values, &groups, k).map_or(1.0, |(l, s)| bonferroni(l, s));
            Ok(CriterionReport::empirical(Criterion::Independence, gaps([("mean_gap", mean_gap), ("var_gap", var_gap)]), p, alpha))
        }
    }
}

fn count_table(groups: &[usize], k: usize, codes: &[u32], levels: usize, keep: impl Fn(usize) -> bool) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; levels]; k];
    for (i, (&g, &c)) in groups.iter().zip(codes).enumerate() {
        if keep(i) {
            t[g][c as usize] += 1.0;
        }
    }
    t
}

/// Largest across-group spread of P(level | group) over levels, for the
/// populated groups of a table.
fn categorical_rate_gap(table: &[Vec<f64>]) -> f64 {
    let rows: Vec<(&Vec<f64>, f64)> = table.iter().map(|r| (r, r.iter().sum::<f64>())).filter(|(_, n)| *n > 0.0).collect();
    let levels = table.first().map_or(0, Vec::len);
    (0..levels).map(|j| spread(&rows.iter().map(|(r, n)| r[j] / n).collect::<Vec<_>>())).fold(0.0, f64::max)
}

/// Conditional independence of `target_col` and `a_col` given `cond_cols`.
///
/// One entry point backs Separation (target R, conditioning on Y),
/// Sufficiency (target Y, conditioning on R), Parity by Signal / by S and
/// Conditional Independence; `criterion` only labels the report.
///
/// Strata are the cross product of categorical conditioning levels and
/// equal-frequency bins of the continuous conditioning columns. A
/// categorical target is tested with G statistics summed over strata. A
/// real target is compared across groups within each stratum with the
/// location/scale rank tests used by [`test_independence`], and the
/// per-stratum p-values are pooled with Fisher's method.
pub fn test_cond_independence(
    data: &Dataset,
    target_col: &str,
    a_col: &str,
    cond_cols: &[&str],
    criterion: Criterion,
    opts: CiTestOptions,
) -> Result<CriterionReport> {
    let alpha = opts.alpha;
    if cond_cols.is_empty() {
        return Err(Error::InsufficientStrata("at least one conditioning column is required".into()));
    }
    let (groups, k) = group_codes(data, a_col)?;
    let n = data.len();
    let undecidable = || Ok(CriterionReport::undecidable(criterion, Method::Empirical, alpha));
    if require_populated(&groups, k, a_col).is_err() {
        return undecidable();
    }

    let mut stratum = vec![0usize; n];
    let mut continuous: Vec<&[f64]> = Vec::new();
    for &c in cond_cols {
        let (codes, levels): (Vec<usize>, usize) = match data.column(c)? {
            Column::Categorical { labels, codes } => (codes.iter().map(|&x| x as usize).collect(), labels.len()),
            Column::Real(v) => {
                continuous.push(v);
                let bins = opts.bins.max(1);
                (stats::equal_frequency_bins(v, bins), bins)
            }
        };
        for (s, c) in stratum.iter_mut().zip(codes) {
            *s = *s * levels + c;
        }
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in stratum.iter().enumerate() {
        members.entry(s).or_default().push(i);
    }

    let evaluable = |idx: &[usize]| idx.iter().map(|&i| groups[i]).collect::<BTreeSet<_>>().len() >= 2;

    match data.column(target_col)? {
        Column::Categorical { labels, codes } => {
            let mut total = TableStat::ZERO;
            let mut weighted_gap = 0.0;
            let mut weight = 0.0;
            let mut any = false;
            for idx in members.values().filter(|idx| evaluable(idx)) {
                any = true;
                let sub_groups: Vec<usize> = idx.iter().map(|&i| groups[i]).collect();
                let sub_codes: Vec<u32> = idx.iter().map(|&i| codes[i]).collect();
                let table = count_table(&sub_groups, k, &sub_codes, labels.len(), |_| true);
                total = total + stats::g_test(&table);
                weighted_gap += idx.len() as f64 * categorical_rate_gap(&table);
                weight += idx.len() as f64;
            }
            if !any {
                return undecidable();
            }
            Ok(CriterionReport::empirical(criterion, gaps([("rate_gap", weighted_gap / weight)]), total.p_value(), alpha))
        }
        Column::Real(values) => {
            let mut p_loc = Vec::new();
            let mut p_scale = Vec::new();
            let (mut mean_gap, mut var_gap, mut weight) = (0.0, 0.0, 0.0);
            let mut any = false;
            for idx in members.values().filter(|idx| evaluable(idx)) {
                any = true;
                let y: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
                let g: Vec<usize> = idx.iter().map(|&i| groups[i]).collect();
                let resid = if opts.residualize && !continuous.is_empty() {
                    let xs: Vec<Vec<f64>> = continuous.iter().map(|col| idx.iter().map(|&i| col[i]).collect()).collect();
                    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
                    stats::ols_residuals(&y, &refs)
                } else {
                    y.clone()
                };
                let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if resid.iter().all(|r| r.abs() <= 1e-9 * scale) {
                    // Target determined by the stratum: nothing left to compare.
                    weight += idx.len() as f64;
                    continue;
                }
                let (mg, vg) = group_moment_gaps(&resid, &g, k);
                mean_gap += idx.len() as f64 * mg;
                var_gap += idx.len() as f64 * vg;
                weight += idx.len() as f64;
                if let Some((l, s)) = location_scale(&resid, &g, k) {
                    p_loc.push(l);
                    p_scale.push(s);
                }
            }
            if !any {
                return undecidable();
            }
            let p = bonferroni(stats::fisher_combine(&p_loc), stats::fisher_combine(&p_scale));
            Ok(CriterionReport::empirical(criterion, gaps([("mean_gap", mean_gap / weight), ("var_gap", var_gap / weight)]), p, alpha))
        }
    }
}

/// Exact report for `x ⊥ y | s` from a joint table.
pub fn exact_ci_report(joint: &JointTable, criterion: Criterion, x: NodeId, y: NodeId, s: &[NodeId], tol: f64) -> Result<CriterionReport> {
    let gap = joint.ci_gap(&[x], &[y], s)?;
    Ok(CriterionReport::exact(criterion, gaps([("max_cell_gap", gap)]), tol))
}

/// Exact Independence (R ⊥ A), Separation (R ⊥ A | Y), Sufficiency
/// (Y ⊥ A | R) and, when `s` is given, Parity by S (R ⊥ A | S).
pub fn exact_criteria(model: &DiscreteModel, a: NodeId, r: NodeId, y: NodeId, s: Option<NodeId>) -> Result<Vec<CriterionReport>> {
    exact_criteria_at(model, a, r, y, s, DEFAULT_TOL)
}

pub fn exact_criteria_at(
    model: &DiscreteModel,
    a: NodeId,
    r: NodeId,
    y: NodeId,
    s: Option<NodeId>,
    tol: f64,
) -> Result<Vec<CriterionReport>> {
    let mut vars = vec![a, r, y];
    vars.extend(s);
    if vars.iter().collect::<BTreeSet<_>>().len() != vars.len() {
        return Err(Error::Overlap("a, r, y and s must be distinct nodes".into()));
    }
    for &v in &vars {
        model.dag().check(v)?;
    }
    let joint = model.joint_distribution()?.marginal(&vars)?;
    let mut out = vec![
        exact_ci_report(&joint, Criterion::Independence, r, a, &[], tol)?,
        exact_ci_report(&joint, Criterion::Separation, r, a, &[y], tol)?,
        exact_ci_report(&joint, Criterion::Sufficiency, y, a, &[r], tol)?,
    ];
    if let Some(s) = s {
        out.push(exact_ci_report(&joint, Criterion::ParityByS, r, a, &[s], tol)?);
    }
    Ok(out)
}

/// Criteria gaps of one joint table over (A, R, Y).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableAssessment {
    pub separation_gap: f64,
    pub sufficiency_gap: f64,
    /// max |P(a, y) − P(a)P(y)|.
    pub dependence_gap: f64,
    pub min_cell: f64,
    /// Largest A–Y dependence compatible with both criteria holding at
    /// `tol`, for this table's margins.
    pub dependence_bound: f64,
}

impl TableAssessment {
    pub fn both_hold(&self, tol: f64) -> bool {
        self.separation_gap <= tol && self.sufficiency_gap <= tol
    }

    /// Positivity: every cell carries at least `floor` mass.
    pub fn positive(&self, floor: f64) -> bool {
        self.min_cell >= floor
    }
}

/// Evaluates a table whose variables are, in order, A, R, Y.
///
/// The dependence bound follows from the cell-wise gaps: with
/// |P(r,a|y) − P(r|y)P(a|y)| ≤ t and |P(y,a|r) − P(y|r)P(a|r)| ≤ t,
/// |P(a|y) − P(a|r)| ≤ t/P(r|y) + t/P(y|r), and averaging over P(r) gives
/// |P(a,y) − P(a)P(y)| ≤ t · P(y) Σ_r P(r) (1/P(r|y) + 1/P(y|r)).
pub fn assess_table(table: &JointTable, tol: f64) -> Result<TableAssessment> {
    let [a, r, y]: [NodeId; 3] =
        table.vars().try_into().map_err(|_| Error::InvalidModel("table must have exactly three variables (A, R, Y)".into()))?;
    let separation_gap = table.ci_gap(&[r], &[a], &[y])?;
    let sufficiency_gap = table.ci_gap(&[y], &[a], &[r])?;
    let dependence_gap = table.ci_gap(&[a], &[y], &[])?;
    let min_cell = table.probs().iter().copied().fold(f64::INFINITY, f64::min);

    let ry = table.marginal(&[r, y])?;
    let cards = ry.cards();
    let (nr, ny) = (cards[0], cards[1]);
    let p_r: Vec<f64> = (0..nr).map(|i| (0..ny).map(|j| ry.prob(&[i, j])).sum()).collect();
    let p_y: Vec<f64> = (0..ny).map(|j| (0..nr).map(|i| ry.prob(&[i, j])).sum()).collect();
    let mut factor = 0.0f64;
    for (j, &py) in p_y.iter().enumerate() {
        let mut acc = 0.0;
        for (i, &pr) in p_r.iter().enumerate() {
            let joint = ry.prob(&[i, j]);
            if joint <= 0.0 {
                acc = f64::INFINITY;
                break;
            }
            let r_given_y = joint / py;
            let y_given_r = joint / pr;
            acc += pr * (1.0 / r_given_y + 1.0 / y_given_r);
        }
        factor = factor.max(py * acc);
    }
    Ok(TableAssessment { separation_gap, sufficiency_gap, dependence_gap, min_cell, dependence_bound: tol * factor })
}

/// Summary of a randomized incompatibility search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncompatibilityOutcome {
    pub trials: u64,
    pub tol: f64,
    /// Tables drawn (Dirichlet draws plus near-independent probes).
    pub tables: u64,
    /// Tables dropped for having a cell below the positivity floor.
    pub excluded_nonpositive: u64,
    /// Dropped tables that nonetheless satisfy both criteria at `tol`, and
    /// their largest A–Y dependence.
    pub excluded_both_satisfied: u64,
    pub max_dependence_when_both_excluded: f64,
    /// Tables satisfying both Separation and Sufficiency at `tol`.
    pub both_satisfied: u64,
    pub max_dependence_when_both: f64,
    pub max_bound_when_both: f64,
    pub counterexample: Option<Counterexample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub trial: u64,
    pub cards: [usize; 3],
    pub probs: Vec<f64>,
    pub assessment: TableAssessment,
}

fn abc_names() -> Vec<String> {
    vec!["A".into(), "R".into(), "Y".into()]
}

fn labels(k: usize) -> Vec<String> {
    (0..k).map(|i| i.to_string()).collect()
}

/// Builds an (A, R, Y) table from row-major cell probabilities.
pub fn ary_table(cards: [usize; 3], probs: Vec<f64>) -> Result<JointTable> {
    JointTable::from_parts(abc_names(), cards.iter().map(|&c| labels(c)).collect(), probs)
}

fn dirichlet_one(rng: &mut ChaCha8Rng, cells: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..cells).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Exactly A ⊥ (R, Y), then each cell jittered by a relative factor in
/// (1 − tol, 1 + tol): lands both criteria near the tolerance.
fn near_independent(rng: &mut ChaCha8Rng, cards: [usize; 3], tol: f64) -> Vec<f64> {
    let pa = dirichlet_one(rng, cards[0]);
    let pry = dirichlet_one(rng, cards[1] * cards[2]);
    let mut cells: Vec<f64> = pa
        .iter()
        .flat_map(|&a| pry.iter().map(move |&b| a * b))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|c| c * (1.0 + tol * (2.0 * rng.random::<f64>() - 1.0)))
        .collect();
    let total: f64 = cells.iter().sum();
    cells.iter_mut().for_each(|c| *c /= total);
    cells
}

#[derive(Debug, Clone, Default)]
struct SearchTally {
    tables: u64,
    excluded: u64,
    excluded_both: u64,
    excluded_max_dep: f64,
    both: u64,
    max_dep: f64,
    max_bound: f64,
    first: Option<Counterexample>,
}

impl SearchTally {
    fn merge(mut self, o: SearchTally) -> SearchTally {
        self.tables += o.tables;
        self.excluded += o.excluded;
        self.excluded_both += o.excluded_both;
        self.excluded_max_dep = self.excluded_max_dep.max(o.excluded_max_dep);
        self.both += o.both;
        self.max_dep = self.max_dep.max(o.max_dep);
        self.max_bound = self.max_bound.max(o.max_bound);
        self.first = match (self.first, o.first) {
            (Some(a), Some(b)) => Some(if a.trial <= b.trial { a } else { b }),
            (a, b) => a.or(b),
        };
        self
    }
}

/// Draws random strictly positive joint tables over (A, R, Y) with each
/// variable taking 2 or 3 values, and looks for one that satisfies
/// Separation and Sufficiency at `tol` while A and Y stay dependent beyond
/// what those tolerances allow.
///
/// Each trial draws one table from a symmetric Dirichlet(1) over all cells
/// and one probe built as an exact A ⊥ (R, Y) table with relative jitter
/// of size `tol`; the probes are what actually reach the both-satisfied
/// region and exercise the dependence bound. Tables with a cell under
/// `10·tol` are excluded (positivity). Trial `i` uses ChaCha stream `i` of
/// `seed`, so results do not depend on scheduling.
pub fn incompatibility_search(trials: u64, tol: f64, seed: u64) -> Result<IncompatibilityOutcome> {
    if trials == 0 {
        return Err(Error::Param("trials must be at least 1".into()));
    }
    let floor = 10.0 * tol;
    let tally = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<SearchTally> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            let cards = [2 + rng.random_range(0..2), 2 + rng.random_range(0..2), 2 + rng.random_range(0..2)];
            let cells = cards.iter().product();
            let mut t = SearchTally::default();
            let candidates = [dirichlet_one(&mut rng, cells), near_independent(&mut rng, cards, tol)];
            for probs in candidates {
                t.tables += 1;
                let table = ary_table(cards, probs)?;
                let assessment = assess_table(&table, tol)?;
                if !assessment.positive(floor) {
                    t.excluded += 1;
                    if assessment.both_hold(tol) {
                        t.excluded_both += 1;
                        t.excluded_max_dep = t.excluded_max_dep.max(assessment.dependence_gap);
                    }
                    continue;
                }
                if !assessment.both_hold(tol) {
                    continue;
                }
                t.both += 1;
                t.max_dep = t.max_dep.max(assessment.dependence_gap);
                t.max_bound = t.max_bound.max(assessment.dependence_bound);
                let allowed = assessment.dependence_bound.max(tol) * (1.0 + 1e-9) + 1e-15;
                if assessment.dependence_gap > allowed && t.first.is_none() {
                    t.first = Some(Counterexample { trial, cards, probs: table.probs().to_vec(), assessment });
                }
            }
            Ok(t)
        })
        .try_reduce(SearchTally::default, |a, b| Ok(a.merge(b)))?;
    Ok(IncompatibilityOutcome {
        trials,
        tol,
        tables: tally.tables,
        excluded_nonpositive: tally.excluded,
        excluded_both_satisfied: tally.excluded_both,
        max_dependence_when_both_excluded: tally.excluded_max_dep,
        both_satisfied: tally.both,
        max_dependence_when_both: tally.max_dep,
        max_bound_when_both: tally.max_bound,
        counterexample: tally.first,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_data(a: &[&str], r: &[f64], y: &[f64]) -> Dataset {
        let mut d = Dataset::new();
        d.push("A", Column::categorical_from_strings(a)).unwrap();
        d.push_real("R", r.to_vec()).unwrap();
        d.push_real("Y", y.to_vec()).unwrap();
        d
    }

    #[test]
    fn perfect_classifier_meets_equalized_odds_not_parity() {
        // Base rates 0.75 in g1 and 0.25 in g2, R = Y.
        let a: Vec<&str> = std::iter::repeat_n("g1", 400).chain(std::iter::repeat_n("g2", 400)).collect();
        let y: Vec<f64> = (0..800).map(|i| if i < 400 { (i % 4 != 0) as u8 as f64 } else { (i % 4 == 0) as u8 as f64 }).collect();
        let d = binary_data(&a, &y, &y);
        let reports = audit_binary(&d, "A", "R", "Y", 0.01).unwrap();
        let eo = &reports[1];
        assert_eq!(eo.criterion, Criterion::EqualizedOdds);
        assert_eq!(eo.gap("fpr_gap"), Some(0.0));
        assert_eq!(eo.gap("tpr_gap"), Some(0.0));
        assert!(eo.is_satisfied());
        assert_eq!(reports[0].verdict, Verdict::Violated);
        assert!((reports[0].gap("rate_gap").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_prediction() {
        let a = ["g1", "g1", "g1", "g1", "g2", "g2", "g2", "g2"];
        let y = [1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let d = binary_data(&a, &[1.0; 8], &y);
        let reports = audit_binary(&d, "A", "R", "Y", 0.01).unwrap();
        assert_eq!(reports[0].gap("rate_gap"), Some(0.0));
        assert!(reports[0].is_satisfied());
        let pp = &reports[2];
        assert_eq!(pp.criterion, Criterion::PredictiveParity);
        assert!((pp.gap("gap_r1").unwrap() - 0.5).abs() < 1e-12);
        assert!(pp.gap("gap_r0").is_none());
    }

    #[test]
    fn equal_base_rates_with_perfect_prediction_pass_everything() {
        let a = ["g1", "g1", "g2", "g2", "g1", "g2"];
        let y = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let d = binary_data(&a, &y, &y);
        for r in audit_binary(&d, "A", "R", "Y", 0.01).unwrap() {
            assert!(r.is_satisfied(), "{r:?}");
        }
    }

    #[test]
    fn empty_cell_makes_criterion_undecidable() {
        // No g2 row has Y = 0, but g1 does.
        let a = ["g1", "g1", "g2", "g2"];
        let y = [0.0, 1.0, 1.0, 1.0];
        let r = [0.0, 1.0, 1.0, 0.0];
        let d = binary_data(&a, &r, &y);
        let reports = audit_binary(&d, "A", "R", "Y", 0.01).unwrap();
        assert_eq!(reports[1].verdict, Verdict::Undecidable);
        assert_ne!(reports[0].verdict, Verdict::Undecidable);
    }

    #[test]
    fn independence_of_constant_and_shifted_predictions() {
        let a: Vec<&str> = (0..200).map(|i| if i % 2 == 0 { "g1" } else { "g2" }).collect();
        let mut d = Dataset::new();
        d.push("A", Column::categorical_from_strings(&a)).unwrap();
        d.push_real("C", vec![3.0; 200]).unwrap();
        d.push_real("S", (0..200).map(|i| (i % 2) as f64 * 100.0 + (i % 7) as f64).collect()).unwrap();
        let c = test_independence(&d, "C", "A", 0.01).unwrap();
        assert_eq!(c.p_value, Some(1.0));
        assert_eq!(c.gap("mean_gap"), Some(0.0));
        assert!(c.is_satisfied());
        assert_eq!(test_independence(&d, "S", "A", 0.01).unwrap().verdict, Verdict::Violated);
    }

    #[test]
    fn conditioning_on_itself_is_degenerate() {
        let a: Vec<&str> = (0..300).map(|i| if i % 3 == 0 { "g1" } else { "g2" }).collect();
        let mut d = Dataset::new();
        d.push("A", Column::categorical_from_strings(&a)).unwrap();
        let theta: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64 + if i % 3 == 0 { 50.0 } else { 0.0 }).collect();
        d.push_real("T", theta).unwrap();
        let r = test_cond_independence(&d, "T", "A", &["T"], Criterion::ParityBySignal, CiTestOptions::default()).unwrap();
        assert_eq!(r.p_value, Some(1.0));
        assert!(r.is_satisfied());
    }

    #[test]
    fn one_group_per_stratum_is_undecidable() {
        let mut d = Dataset::new();
        d.push("A", Column::categorical_from_strings(&["p", "p", "q", "q"])).unwrap();
        d.push("Y", Column::categorical_from_strings(&["0", "0", "1", "1"])).unwrap();
        d.push_real("R", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = test_cond_independence(&d, "R", "A", &["Y"], Criterion::Separation, CiTestOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Undecidable);
        assert!(test_cond_independence(&d, "R", "A", &[], Criterion::Separation, CiTestOptions::default()).is_err());
    }

    #[test]
    fn product_table_meets_both_criteria() {
        let pa = [0.3, 0.7];
        let pry = [0.1, 0.2, 0.3, 0.4];
        let probs: Vec<f64> = pa.iter().flat_map(|a| pry.iter().map(move |b| a * b)).collect();
        let t = ary_table([2, 2, 2], probs).unwrap();
        let s = assess_table(&t, 1e-9).unwrap();
        assert!(s.both_hold(1e-12));
        assert!(s.dependence_gap < 1e-15);
        assert!(s.positive(1e-3));
    }

    #[test]
    fn perfect_prediction_table_is_degenerate() {
        // A uniform, P(Y=1|a) = 0.3 / 0.7, R = Y. Cells (a, r, y):
        // a=0: (0,0,0)=0.35 (0,1,1)=0.15; a=1: (1,0,0)=0.15 (1,1,1)=0.35.
        let probs = vec![0.35, 0.0, 0.0, 0.15, 0.15, 0.0, 0.0, 0.35];
        let t = ary_table([2, 2, 2], probs).unwrap();
        let s = assess_table(&t, 1e-6).unwrap();
        // Both conditional independences hold because R determines Y and
        // vice versa, yet A and Y are dependent: |0.35 − 0.25| = 0.1.
        assert!(s.separation_gap < 1e-15 && s.sufficiency_gap < 1e-15);
        assert!((s.dependence_gap - 0.1).abs() < 1e-12);
        assert!(!s.positive(1e-5));
        assert!(s.dependence_bound.is_infinite());
    }

    #[test]
    fn short_search_finds_nothing_and_is_deterministic() {
        let a = incompatibility_search(2_000, 1e-6, 7).unwrap();
        let b = incompatibility_search(2_000, 1e-6, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.counterexample.is_none());
        assert_eq!(a.tables, 4_000);
        assert!(a.both_satisfied > 0);
        assert!(a.max_dependence_when_both <= a.max_bound_when_both);
    }

    #[test]
    fn report_json_shape() {
        let r = CriterionReport::exact(Criterion::Separation, gaps([("max_cell_gap", 0.0)]), 1e-9);
        let v = r.to_json();
        assert_eq!(v["criterion"], "Separation");
        assert_eq!(v["method"], "exact");
        assert_eq!(v["verdict"], "satisfied");
        assert!(v["p_value"].is_null());
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 6);
    }
}
