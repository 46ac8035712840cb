//! Problem files, report documents and the subcommand drivers behind the
//! command-line tool.
//!
//! Both problem files and reports are JSON. Report numbers are rounded to 12
//! significant digits, and a report depends only on the problem file and the
//! flags, so reruns are byte-identical (wall-clock timings are opt-in).

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::asymptotics::{limit_expansion, sweep, LimitExpansion, SweepRow};
use crate::certificate::{certify, CertificateBounds, CertificateReport};
use crate::closed_form::{solve, ClosedFormSolution};
use crate::error::Error;
use crate::gaussian::{GaussianMeasure, UotProblem};
use crate::grid::{build_grid, solve_discrete_dual, SolverConfig};
use crate::linalg::SymMatrix;

pub const SCHEMA_VERSION: u32 = 1;
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SIGNIFICANT_DIGITS: usize = 12;

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_GRID_SIZES: [usize; 4] = [21, 31, 41, 51];
pub const DEFAULT_LAMBDAS: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub mass: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub bar_tau0: Option<f64>,
    #[serde(default)]
    pub bar_tau1: Option<f64>,
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
}

/// On-disk problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub alpha: MeasureSpec,
    pub beta: MeasureSpec,
    pub tau0: f64,
    pub tau1: f64,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub certify: Option<CertifySection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

/// A validated problem with every optional section resolved to a value.
#[derive(Debug, Clone)]
pub struct ParsedProblem {
    pub file: ProblemFile,
    pub problem: UotProblem,
    pub samples: usize,
    pub seed: u64,
    pub grid_sizes: Vec<usize>,
    pub bar_taus: (f64, f64),
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("computation failed: {0}")]
    Compute(#[from] Error),
    #[error("certificate failed: {}", .failures.join("; "))]
    CertificateFailed { report: Box<Value>, failures: Vec<String> },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Input(_) => 2,
            RunError::Compute(_) => 3,
            RunError::CertificateFailed { .. } => 4,
        }
    }
}

fn measure_from_spec(name: &str, spec: &MeasureSpec) -> Result<GaussianMeasure, RunError> {
    let field = |f: &str, msg: String| RunError::Input(format!("{name}.{f}: {msg}"));
    if !(spec.mass.is_finite() && spec.mass > 0.0) {
        return Err(field("mass", format!("must be finite and > 0, got {}", spec.mass)));
    }
    if spec.mean.is_empty() {
        return Err(field("mean", "must have at least one entry".into()));
    }
    if spec.mean.iter().any(|v| !v.is_finite()) {
        return Err(field("mean", "entries must be finite".into()));
    }
    if spec.cov.iter().flatten().any(|v| !v.is_finite()) {
        return Err(field("cov", "entries must be finite".into()));
    }
    let cov = SymMatrix::from_rows(&spec.cov).map_err(|e| field("cov", e.to_string()))?;
    if cov.dim() != spec.mean.len() {
        return Err(field(
            "cov",
            format!("is {0}x{0} but mean has {1} entries", cov.dim(), spec.mean.len()),
        ));
    }
    let check = cov.spd_check();
    if !check.is_spd {
        return Err(field("cov", Error::NotPositiveDefinite(check).to_string()));
    }
    GaussianMeasure::new(spec.mass, DVector::from_vec(spec.mean.clone()), cov)
        .map_err(|e| RunError::Input(format!("{name}: {e}")))
}

/// Validates a parsed problem document.
pub fn validate_problem(file: ProblemFile) -> Result<ParsedProblem, RunError> {
    let alpha = measure_from_spec("alpha", &file.alpha)?;
    let beta = measure_from_spec("beta", &file.beta)?;
    if alpha.dim() != beta.dim() {
        return Err(RunError::Input(format!(
            "beta: dimension {} does not match alpha dimension {}",
            beta.dim(),
            alpha.dim()
        )));
    }
    for (name, tau) in [("tau0", file.tau0), ("tau1", file.tau1)] {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(RunError::Input(format!("{name}: must be finite and > 0, got {tau}")));
        }
    }
    let problem = UotProblem::new(alpha, beta, file.tau0, file.tau1)
        .map_err(|e| RunError::Input(e.to_string()))?;

    let samples = file.certify.as_ref().and_then(|c| c.samples).unwrap_or(DEFAULT_SAMPLES);
    let seed = file.certify.as_ref().and_then(|c| c.seed).unwrap_or(DEFAULT_SEED);
    let grid_sizes = file
        .grid
        .as_ref()
        .map(|g| g.sizes.clone())
        .unwrap_or_else(|| DEFAULT_GRID_SIZES.to_vec());
    let sweep = file.sweep.clone();
    let bar_taus = (
        sweep.as_ref().and_then(|s| s.bar_tau0).unwrap_or(file.tau0),
        sweep.as_ref().and_then(|s| s.bar_tau1).unwrap_or(file.tau1),
    );
    let lambdas = sweep
        .and_then(|s| s.lambdas)
        .unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());

    let parsed = ParsedProblem {
        file,
        problem,
        samples,
        seed,
        grid_sizes,
        bar_taus,
        lambdas,
    };
    check_options(&parsed)?;
    Ok(parsed)
}

pub fn check_options(p: &ParsedProblem) -> Result<(), RunError> {
    if p.samples == 0 {
        return Err(RunError::Input("certify.samples: must be positive".into()));
    }
    if p.grid_sizes.is_empty() || p.grid_sizes.iter().any(|&n| n < 2) {
        return Err(RunError::Input("grid.sizes: every size must be at least 2".into()));
    }
    for (name, v) in [("sweep.bar_tau0", p.bar_taus.0), ("sweep.bar_tau1", p.bar_taus.1)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(RunError::Input(format!("{name}: must be finite and > 0, got {v}")));
        }
    }
    if p.lambdas.is_empty()
        || p.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0))
        || p.lambdas.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(RunError::Input(
            "sweep.lambdas: must be nonempty, positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

pub fn parse_problem_str(text: &str) -> Result<ParsedProblem, RunError> {
    let file: ProblemFile =
        serde_json::from_str(text).map_err(|e| RunError::Input(format!("malformed problem file: {e}")))?;
    validate_problem(file)
}

pub fn parse_problem(path: &Path) -> Result<ParsedProblem, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_problem_str(&text)
}

/// Rounds `x` to `digits` significant digits.
pub fn round_significant(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

/// Rounds every floating-point number in a JSON tree.
pub fn round_json(value: &mut Value, digits: usize) {
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_significant(x, digits)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|v| round_json(v, digits)),
        Value::Object(map) => map.values_mut().for_each(|v| round_json(v, digits)),
        _ => {}
    }
}

fn vec_json(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<_>>())
}

pub fn solution_json(sol: &ClosedFormSolution) -> Result<Value, RunError> {
    let min_eig_p_inv = sol.p_star.inv()?.spd_check().min_eigenvalue;
    Ok(json!({
        "value": sol.value,
        "m_star": sol.m_star,
        "a_star": sol.a_star,
        "p_star": sol.p_star.to_rows(),
        "q_star": sol.q_star.to_rows(),
        "u_star": vec_json(&sol.u_star),
        "v_star": vec_json(&sol.v_star),
        "h_star": vec_json(&sol.h_star),
        "map_linear": sol.map_linear.to_rows(),
        "map_offset": vec_json(&sol.map_offset),
        "riccati_residual": sol.riccati_residual,
        "min_eig_p_inv": min_eig_p_inv,
    }))
}

/// Assembles report sections in a fixed order.
#[derive(Debug)]
pub struct Report {
    command: String,
    sections: serde_json::Map<String, Value>,
    timings: Vec<(String, f64)>,
}

impl Report {
    pub fn new(command: &str, parsed: &ParsedProblem) -> Self {
        let mut sections = serde_json::Map::new();
        sections.insert("schema_version".into(), json!(SCHEMA_VERSION));
        sections.insert("library_version".into(), json!(LIBRARY_VERSION));
        sections.insert("command".into(), json!(command));
        sections.insert(
            "problem".into(),
            json!({
                "alpha": parsed.file.alpha,
                "beta": parsed.file.beta,
                "tau0": parsed.file.tau0,
                "tau1": parsed.file.tau1,
            }),
        );
        Report {
            command: command.to_string(),
            sections,
            timings: Vec::new(),
        }
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn insert(&mut self, key: &str, value: Value) {
        self.sections.insert(key.into(), value);
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.sections.get(key)
    }

    fn time<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push((label.to_string(), start.elapsed().as_secs_f64() * 1e3));
        out
    }

    /// The report as a JSON value, with numbers rounded. Timings are included
    /// only when requested.
    pub fn to_value(&self, with_timings: bool) -> Value {
        let mut sections = self.sections.clone();
        if with_timings {
            let t: serde_json::Map<String, Value> =
                self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
            sections.insert("timings_ms".into(), Value::Object(t));
        }
        let mut v = Value::Object(sections);
        round_json(&mut v, SIGNIFICANT_DIGITS);
        v
    }

    pub fn render(&self, with_timings: bool) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value(with_timings)).expect("report serializes");
        s.push('\n');
        s
    }
}

fn run_solution(parsed: &ParsedProblem, report: &mut Report) -> Result<ClosedFormSolution, RunError> {
    let sol = report.time("solve", || solve(&parsed.problem))?;
    report.insert("solution", solution_json(&sol)?);
    Ok(sol)
}

pub fn run_solve(parsed: &ParsedProblem) -> Result<Report, RunError> {
    let mut report = Report::new("solve", parsed);
    run_solution(parsed, &mut report)?;
    Ok(report)
}

/// Runs the certificate; a violated bound yields
/// [`RunError::CertificateFailed`] carrying the full report.
pub fn run_certify(parsed: &ParsedProblem, with_timings: bool) -> Result<Report, RunError> {
    let mut report = Report::new("certify", parsed);
    report.insert("options", json!({ "samples": parsed.samples, "seed": parsed.seed }));
    let sol = run_solution(parsed, &mut report)?;
    let cert: CertificateReport =
        report.time("certify", || certify(&sol, &parsed.problem, parsed.samples, parsed.seed))?;
    let bounds = CertificateBounds::default();
    let failures = bounds.failures(&cert, &sol, &parsed.problem)?;
    report.insert(
        "certificate",
        json!({
            "closed_form_value": sol.value,
            "optimal_mass": sol.m_star,
            "riccati_residual": cert.riccati_residual,
            "min_sampled_slack": cert.min_sampled_slack,
            "max_graph_equality_error": cert.max_graph_equality_error,
            "min_eig_p_inv": cert.min_eig_p_inv,
            "details": cert,
            "bounds": bounds,
            "passed": failures.is_empty(),
            "failures": failures,
        }),
    );
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(RunError::CertificateFailed {
            report: Box::new(report.to_value(with_timings)),
            failures,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub n: usize,
    pub dual_value: f64,
    pub absolute_gap: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub epsilon_final: f64,
}

pub fn grid_rows(problem: &UotProblem, closed_value: f64, sizes: &[usize]) -> Result<Vec<GridRow>, Error> {
    let cfg = SolverConfig::default();
    sizes
        .iter()
        .map(|&n| {
            let grid = build_grid(problem, n)?;
            let r = solve_discrete_dual(&grid, problem, &cfg)?;
            Ok(GridRow {
                n,
                dual_value: r.dual_value,
                absolute_gap: (r.dual_value - closed_value).abs(),
                max_violation: r.max_violation,
                iterations: r.iterations,
                epsilon_final: r.epsilon_final,
            })
        })
        .collect()
}

pub fn run_grid_bench(parsed: &ParsedProblem) -> Result<Report, RunError> {
    if parsed.problem.dim() != 1 {
        return Err(RunError::Input(format!(
            "grid-bench requires a one-dimensional problem, got dimension {}",
            parsed.problem.dim()
        )));
    }
    let mut report = Report::new("grid-bench", parsed);
    report.insert("options", json!({ "sizes": parsed.grid_sizes, "solver": SolverConfig::default() }));
    let sol = run_solution(parsed, &mut report)?;
    let rows = report.time("grid_bench", || grid_rows(&parsed.problem, sol.value, &parsed.grid_sizes))?;
    report.insert("grid_benchmark", json!(rows));
    Ok(report)
}

pub fn run_limit_sweep(parsed: &ParsedProblem) -> Result<Report, RunError> {
    let mut report = Report::new("limit-sweep", parsed);
    report.insert(
        "options",
        json!({
            "bar_tau0": parsed.bar_taus.0,
            "bar_tau1": parsed.bar_taus.1,
            "lambdas": parsed.lambdas,
        }),
    );
    run_solution(parsed, &mut report)?;
    let expansion: LimitExpansion = limit_expansion(&parsed.problem, parsed.bar_taus.0, parsed.bar_taus.1)?;
    let rows: Vec<SweepRow> =
        report.time("limit_sweep", || sweep(&parsed.problem, parsed.bar_taus, &parsed.lambdas))?;
    report.insert("limit_sweep", json!({ "expansion": expansion, "rows": rows }));
    Ok(report)
}
