//! Command-line front end. `run` is the whole program minus process exit.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value as Json};

use crate::criteria::{self, CiTestOptions, Criterion, CriterionReport, Verdict};
use crate::dataset::Dataset;
use crate::discrete::{DEFAULT_SIZE_CAP, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::io::{self, ModelFile};
use crate::scenarios::{self, DiscreteCpts, ScenarioId, ScenarioParams};
use crate::surgery::{self, CausalModel, DoOutcome, Intervention};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_UNDECIDED: i32 = 2;

pub const SIZE_CAP_VAR: &str = "FAIRDAG_SIZE_CAP";

#[derive(Debug, Parser)]
#[command(name = "fairdag", version, about = "Causal-graph audits of fairness criteria")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide whether `given` d-separates two nodes.
    Dsep(DsepArgs),
    /// Test oblivious criteria on a CSV sample.
    Audit(AuditArgs),
    /// Decide Independence, Separation and Sufficiency on a discrete model.
    Exact(ExactArgs),
    /// Distribution of a node under an intervention.
    Intervene(InterveneArgs),
    /// Sample a built-in scenario and run its criteria.
    Scenario(ScenarioArgs),
    /// Search random joint tables for a Separation + Sufficiency counterexample.
    Incompat(IncompatArgs),
}

#[derive(Debug, Args)]
struct DsepArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    /// Conditioning nodes, comma-separated or repeated.
    #[arg(long, value_delimiter = ',')]
    given: Vec<String>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    a: String,
    #[arg(long)]
    r: String,
    #[arg(long)]
    y: String,
    #[arg(long, default_value_t = criteria::DEFAULT_ALPHA)]
    alpha: f64,
    /// Columns holding category labels; the sensitive attribute always does.
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    /// Equal-frequency bins per continuous conditioning column.
    #[arg(long, default_value_t = criteria::DEFAULT_BINS)]
    bins: usize,
}

#[derive(Debug, Args)]
struct ExactArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    a: String,
    #[arg(long)]
    r: String,
    #[arg(long)]
    y: String,
    /// Reference prediction for Parity by S.
    #[arg(long)]
    s: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct InterveneArgs {
    #[arg(long)]
    model: PathBuf,
    /// `node=value`, repeatable.
    #[arg(long = "do", value_name = "NODE=VALUE")]
    assignments: Vec<String>,
    #[arg(long)]
    target: Option<String>,
    /// JSON `{"do": {...}, "target": ...}`, inline or as a file path.
    #[arg(long, conflicts_with_all = ["assignments", "target"])]
    payload: Option<String>,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long)]
    id: String,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = criteria::DEFAULT_ALPHA)]
    alpha: f64,
    /// Draw the discrete scenario CPTs from a Dirichlet with this seed.
    #[arg(long)]
    cpt_seed: Option<u64>,
    /// Write the loan-scenario figure data as CSV.
    #[arg(long)]
    emit_figure: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IncompatArgs {
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, Deserialize)]
struct Payload {
    #[serde(rename = "do")]
    assignments: BTreeMap<String, Json>,
    target: String,
}

/// Parses `argv` (program name first), runs the command and writes its
/// result to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, S, O, E>(argv: I, out: &mut O, err: &mut E) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
    O: Write,
    E: Write,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INVALID
        }
    }
}

fn dispatch<O: Write>(command: Command, out: &mut O) -> Result<i32> {
    match command {
        Command::Dsep(a) => dsep(a, out),
        Command::Audit(a) => audit(a, out),
        Command::Exact(a) => exact(a, out),
        Command::Intervene(a) => intervene(a, out),
        Command::Scenario(a) => scenario(a, out),
        Command::Incompat(a) => incompat(a, out),
    }
}

fn read(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn size_cap() -> Result<usize> {
    match std::env::var(SIZE_CAP_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .ok()
            .filter(|&c: &usize| c > 0)
            .ok_or_else(|| Error::Param(format!("{SIZE_CAP_VAR} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_SIZE_CAP),
    }
}

fn load_model(path: &PathBuf) -> Result<CausalModel> {
    let model = io::parse_model(&read(path)?)?;
    Ok(match model {
        CausalModel::Discrete(m) => CausalModel::Discrete(m.with_size_cap(size_cap()?)),
        other => other,
    })
}

fn emit_json<O: Write>(out: &mut O, value: &Json) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn verdict_code<'a>(reports: impl IntoIterator<Item = &'a CriterionReport>) -> i32 {
    let mut any = false;
    for r in reports {
        if r.verdict != Verdict::Undecidable {
            return EXIT_OK;
        }
        any = true;
    }
    if any {
        EXIT_UNDECIDED
    } else {
        EXIT_OK
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Param(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn dsep<O: Write>(a: DsepArgs, out: &mut O) -> Result<i32> {
    let dag = ModelFile::parse(&read(&a.model)?)?.dag()?;
    let given: BTreeSet<NodeId> = a.given.iter().filter(|s| !s.is_empty()).map(|s| dag.id(s)).collect::<Result<_>>()?;
    let sep = dag.is_d_separated(dag.id(&a.x)?, dag.id(&a.y)?, &given)?;
    writeln!(out, "{sep}")?;
    Ok(EXIT_OK)
}

fn audit<O: Write>(a: AuditArgs, out: &mut O) -> Result<i32> {
    check_alpha(a.alpha)?;
    let mut categorical = a.categorical.clone();
    if !categorical.contains(&a.a) {
        categorical.push(a.a.clone());
    }
    let file = fs::File::open(&a.data).map_err(|e| Error::Io(format!("{}: {e}", a.data.display())))?;
    let data = Dataset::from_csv(file, &categorical)?;
    for col in [&a.r, &a.y] {
        data.column(col)?;
    }
    let reports = if data.binary(&a.r).is_ok() && data.binary(&a.y).is_ok() {
        criteria::audit_binary(&data, &a.a, &a.r, &a.y, a.alpha)?
    } else {
        let opts = CiTestOptions { alpha: a.alpha, bins: a.bins.max(1), ..CiTestOptions::default() };
        vec![
            criteria::test_independence(&data, &a.r, &a.a, a.alpha)?,
            criteria::test_cond_independence(&data, &a.r, &a.a, &[&a.y], Criterion::Separation, opts)?,
            criteria::test_cond_independence(&data, &a.y, &a.a, &[&a.r], Criterion::Sufficiency, opts)?,
        ]
    };
    emit_json(out, &serde_json::to_value(&reports)?)?;
    Ok(verdict_code(&reports))
}

fn exact<O: Write>(a: ExactArgs, out: &mut O) -> Result<i32> {
    let CausalModel::Discrete(model) = load_model(&a.model)? else {
        return Err(Error::InvalidModel("exact evaluation needs a discrete model".into()));
    };
    if !(a.tol >= 0.0) {
        return Err(Error::Param("tol must be non-negative".into()));
    }
    let dag = model.dag();
    let s = a.s.as_deref().map(|s| dag.id(s)).transpose()?;
    let reports = criteria::exact_criteria_at(&model, dag.id(&a.a)?, dag.id(&a.r)?, dag.id(&a.y)?, s, a.tol)?;
    emit_json(out, &serde_json::to_value(&reports)?)?;
    Ok(verdict_code(&reports))
}

fn payload_text(raw: &str) -> Result<String> {
    if raw.trim_start().starts_with('{') {
        Ok(raw.to_string())
    } else {
        read(&PathBuf::from(raw))
    }
}

fn intervene<O: Write>(a: InterveneArgs, out: &mut O) -> Result<i32> {
    let model = load_model(&a.model)?;
    let (pairs, target) = match &a.payload {
        Some(raw) => {
            let p: Payload = serde_json::from_str(&payload_text(raw)?)?;
            let pairs = p
                .assignments
                .into_iter()
                .map(|(k, v)| match v {
                    Json::String(s) => Ok((k, s)),
                    Json::Number(n) => Ok((k, n.to_string())),
                    Json::Bool(b) => Ok((k, b.to_string())),
                    other => Err(Error::Param(format!("bad value {other} for `{k}`"))),
                })
                .collect::<Result<Vec<_>>>()?;
            (pairs, p.target)
        }
        None => {
            let target = a.target.clone().ok_or_else(|| Error::Param("--target is required".into()))?;
            let pairs = a
                .assignments
                .iter()
                .map(|s| {
                    s.split_once('=')
                        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                        .ok_or_else(|| Error::Param(format!("`{s}` is not of the form node=value")))
                })
                .collect::<Result<Vec<_>>>()?;
            (pairs, target)
        }
    };
    if pairs.is_empty() {
        return Err(Error::Param("at least one assignment is required".into()));
    }
    let iv = Intervention::parse(&model, &pairs)?;
    let t = model.dag().id(&target)?;
    let assignments: BTreeMap<String, String> = pairs.into_iter().collect();
    let body = match &model {
        CausalModel::Discrete(m) => match surgery::do_distribution(m, t, &iv)? {
            DoOutcome::Identified(table) => Some(io::joint_table_json(&table)),
            DoOutcome::Unidentifiable => None,
        },
        CausalModel::Gaussian(m) => match surgery::gaussian_do_distribution(m, t, &iv)? {
            DoOutcome::Identified(law) => Some(serde_json::to_value(law)?),
            DoOutcome::Unidentifiable => None,
        },
    };
    match body {
        Some(dist) => {
            emit_json(out, &json!({ "target": target, "do": assignments, "distribution": dist }))?;
            Ok(EXIT_OK)
        }
        None => {
            emit_json(out, &json!("unidentifiable"))?;
            Ok(EXIT_UNDECIDED)
        }
    }
}

fn scenario<O: Write>(a: ScenarioArgs, out: &mut O) -> Result<i32> {
    check_alpha(a.alpha)?;
    let id: ScenarioId = a.id.parse()?;
    if a.emit_figure.is_some() && id != ScenarioId::Loan {
        return Err(Error::Param("--emit-figure applies to scenario 1 only".into()));
    }
    let params = ScenarioParams { cpts: a.cpt_seed.map_or(DiscreteCpts::Fixed, DiscreteCpts::Dirichlet), ..Default::default() };
    let eval = scenarios::evaluate_scenario(id, &params, a.n, a.seed, a.alpha)?;
    if let (Some(path), Some(fig)) = (&a.emit_figure, &eval.figure_data) {
        let file = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        fig.write_csv(file)?;
    }
    emit_json(out, &serde_json::to_value(&eval)?)?;
    Ok(verdict_code(eval.reports.iter().map(|r| &r.report)))
}

fn incompat<O: Write>(a: IncompatArgs, out: &mut O) -> Result<i32> {
    if !(a.tol > 0.0 && a.tol < 1e-2) {
        return Err(Error::Param("tol must lie in (0, 0.01)".into()));
    }
    let outcome = criteria::incompatibility_search(a.trials, a.tol, a.seed)?;
    let mut value = serde_json::to_value(&outcome)?;
    let result = if outcome.counterexample.is_some() { "counterexample" } else { "none" };
    value.as_object_mut().expect("outcome is an object").insert("result".into(), json!(result));
    emit_json(out, &value)?;
    Ok(EXIT_OK)
}
