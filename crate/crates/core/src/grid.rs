//! One-dimensional finite-grid verification.
//!
//! The inputs are discretized on a uniform grid covering six standard
//! deviations around both Gaussians. The discrete KL-UOT dual
//!
//! ```text
//! max  tau0 Σ_i α_i (1 - e^{-φ_i/τ0}) + tau1 Σ_j β_j (1 - e^{-ψ_j/τ1})
//! s.t. φ_i + ψ_j <= (x_i - x_j)^2
//! ```
//!
//! is solved with log-domain generalized Sinkhorn under a decreasing
//! regularization schedule, followed by a c-transform projection so the
//! returned pair is exactly feasible and its value is a certified lower bound.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gaussian::{gaussian_kl, w2_sq_gaussian, GaussianMeasure, UotProblem};
use crate::quadrature::simpson;

/// Half-width of the grid in standard deviations.
pub const GRID_HALF_WIDTH_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, Serialize)]
pub struct Grid1D {
    pub points: Vec<f64>,
    pub spacing: f64,
    pub alpha_weights: Vec<f64>,
    pub beta_weights: Vec<f64>,
}

impl Grid1D {
    /// Grid from explicit points and weights. A single-point grid gets unit
    /// spacing.
    pub fn from_parts(points: Vec<f64>, alpha_weights: Vec<f64>, beta_weights: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::invalid("points", "grid must be nonempty"));
        }
        if alpha_weights.len() != n || beta_weights.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: alpha_weights.len().min(beta_weights.len()),
            });
        }
        if alpha_weights.iter().chain(&beta_weights).any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("weights", "must be finite and nonnegative"));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("points", "must be strictly increasing"));
        }
        let spacing = if n > 1 { points[1] - points[0] } else { 1.0 };
        Ok(Grid1D {
            points,
            spacing,
            alpha_weights,
            beta_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn scalar_params(g: &GaussianMeasure) -> (f64, f64) {
    (g.mean()[0], g.cov().as_matrix()[(0, 0)].sqrt())
}

fn require_1d(prob: &UotProblem) -> Result<()> {
    if prob.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            found: prob.dim(),
        });
    }
    Ok(())
}

/// Uniform `n`-point grid on `[min(m_i - 6σ_i), max(m_i + 6σ_i)]` with
/// weights `mass * density(x_i) * spacing`.
pub fn build_grid(prob: &UotProblem, n: usize) -> Result<Grid1D> {
    require_1d(prob)?;
    if n < 2 {
        return Err(Error::invalid("n", format!("grid needs at least 2 points, got {n}")));
    }
    let (m0, s0) = scalar_params(&prob.alpha);
    let (m1, s1) = scalar_params(&prob.beta);
    let w = GRID_HALF_WIDTH_SIGMAS;
    let lo = (m0 - w * s0).min(m1 - w * s1);
    let hi = (m0 + w * s0).max(m1 + w * s1);
    let spacing = (hi - lo) / (n - 1) as f64;
    let points: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * spacing })
        .collect();
    let alpha = prob.alpha.log_density_fn()?;
    let beta = prob.beta.log_density_fn()?;
    let weights = |f: &crate::gaussian::LogDensity| -> Result<Vec<f64>> {
        points
            .iter()
            .map(|&x| Ok(f.eval(&DVector::from_element(1, x))?.exp() * spacing))
            .collect()
    };
    Ok(Grid1D {
        alpha_weights: weights(&alpha)?,
        beta_weights: weights(&beta)?,
        points,
        spacing,
    })
}

/// `c[i][j] = (x_i - x_j)^2`.
pub fn cost_matrix(grid: &Grid1D) -> DMatrix<f64> {
    let n = grid.len();
    DMatrix::from_fn(n, n, |i, j| (grid.points[i] - grid.points[j]).powi(2))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverConfig {
    pub epsilon_start: f64,
    pub epsilon_final: f64,
    /// Multiplier applied to epsilon between stages.
    pub epsilon_decay: f64,
    /// Relative change of the projected dual value that ends a stage.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon_start: 1.0,
            epsilon_final: 1e-5,
            epsilon_decay: 0.5,
            tolerance: 1e-8,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscreteDualResult {
    /// Feasible potentials after c-transform projection.
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub dual_value: f64,
    /// `max_{i,j} φ_i + ψ_j - c_ij`.
    pub max_violation: f64,
    pub iterations: usize,
    pub epsilon_final: f64,
    /// Unprojected Sinkhorn potentials at the final epsilon.
    #[serde(skip)]
    pub sinkhorn_phi: Vec<f64>,
    #[serde(skip)]
    pub sinkhorn_psi: Vec<f64>,
}

/// Objective of the discrete dual at `(phi, psi)`; feasibility is not
/// checked.
pub fn discrete_dual_objective(grid: &Grid1D, prob: &UotProblem, phi: &[f64], psi: &[f64]) -> f64 {
    let side = |w: &[f64], pot: &[f64], tau: f64| -> f64 {
        w.iter()
            .zip(pot)
            .map(|(&wi, &p)| if wi == 0.0 { 0.0 } else { wi * (-(-p / tau).exp_m1()) })
            .sum::<f64>()
            * tau
    };
    side(&grid.alpha_weights, phi, prob.tau0) + side(&grid.beta_weights, psi, prob.tau1)
}

pub fn max_violation(cost: &DMatrix<f64>, phi: &[f64], psi: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..phi.len() {
        for j in 0..psi.len() {
            worst = worst.max(phi[i] + psi[j] - cost[(i, j)]);
        }
    }
    worst
}

/// `ψ_j = min_i (c_ij - φ_i)`.
fn c_transform_cols(cost: &DMatrix<f64>, phi: &[f64]) -> Vec<f64> {
    (0..cost.ncols())
        .map(|j| (0..cost.nrows()).map(|i| cost[(i, j)] - phi[i]).fold(f64::INFINITY, f64::min))
        .collect()
}

/// `φ_i = min_j (c_ij - ψ_j)`.
fn c_transform_rows(cost: &DMatrix<f64>, psi: &[f64]) -> Vec<f64> {
    (0..cost.nrows())
        .map(|i| (0..cost.ncols()).map(|j| cost[(i, j)] - psi[j]).fold(f64::INFINITY, f64::min))
        .collect()
}

fn log_weights(w: &[f64]) -> Vec<f64> {
    w.iter().map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }).collect()
}

/// `log Σ_k exp(terms_k)`, skipping `-inf` terms.
fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Generalized Sinkhorn half-step: the potential on one side given the other.
fn sinkhorn_update(
    cost: &DMatrix<f64>,
    other: &[f64],
    other_log_w: &[f64],
    tau: f64,
    eps: f64,
    rows: bool,
) -> Vec<f64> {
    let factor = -tau * eps / (tau + eps);
    let n = if rows { cost.nrows() } else { cost.ncols() };
    (0..n)
        .map(|k| {
            let terms = (0..other.len()).map(|l| {
                let c = if rows { cost[(k, l)] } else { cost[(l, k)] };
                other_log_w[l] + (other[l] - c) / eps
            });
            let lse = log_sum_exp(terms);
            // A side with no reference mass pushes the potential to +inf; cap
            // it so the c-transform stays finite.
            if lse == f64::NEG_INFINITY { f64::MAX.sqrt() } else { factor * lse }
        })
        .collect()
}

/// Optimal `t` for the shift `(φ + t, ψ - t)`. The shift leaves every
/// `φ_i + ψ_j` unchanged, and the dual objective along it is concave with
/// this closed-form maximizer.
fn balancing_shift(la: &[f64], lb: &[f64], phi: &[f64], psi: &[f64], tau0: f64, tau1: f64) -> f64 {
    let lse_a = log_sum_exp(la.iter().zip(phi).map(|(&l, &p)| l - p / tau0));
    let lse_b = log_sum_exp(lb.iter().zip(psi).map(|(&l, &p)| l - p / tau1));
    if !(lse_a.is_finite() && lse_b.is_finite()) {
        return 0.0;
    }
    (lse_a - lse_b) / (1.0 / tau0 + 1.0 / tau1)
}

fn apply_shift(phi: &mut [f64], psi: &mut [f64], t: f64) {
    phi.iter_mut().for_each(|p| *p += t);
    psi.iter_mut().for_each(|p| *p -= t);
}

pub fn solve_discrete_dual(grid: &Grid1D, prob: &UotProblem, cfg: &SolverConfig) -> Result<DiscreteDualResult> {
    if !(prob.tau0 > 0.0 && prob.tau1 > 0.0) {
        return Err(Error::invalid("tau", "penalties must be positive"));
    }
    if !(cfg.epsilon_final > 0.0 && cfg.epsilon_start >= cfg.epsilon_final && cfg.epsilon_decay > 0.0 && cfg.epsilon_decay < 1.0) {
        return Err(Error::invalid("solver", "inconsistent epsilon schedule"));
    }
    let cost = cost_matrix(grid);
    let la = log_weights(&grid.alpha_weights);
    let lb = log_weights(&grid.beta_weights);
    let n = grid.len();
    let mut phi = vec![0.0; n];
    let mut psi = vec![0.0; n];
    let mut eps = cfg.epsilon_start;
    let mut iterations = 0;

    let projected_value = |phi: &[f64]| {
        let psi_c = c_transform_cols(&cost, phi);
        discrete_dual_objective(grid, prob, phi, &psi_c)
    };

    loop {
        let mut previous: Option<f64> = None;
        loop {
            if iterations >= cfg.max_iterations {
                let psi_c = c_transform_cols(&cost, &phi);
                return Err(Error::NotConverged(Box::new(DiscreteDualResult {
                    dual_value: discrete_dual_objective(grid, prob, &phi, &psi_c),
                    max_violation: max_violation(&cost, &phi, &psi_c),
                    phi: phi.clone(),
                    psi: psi_c,
                    iterations,
                    epsilon_final: eps,
                    sinkhorn_phi: phi,
                    sinkhorn_psi: psi,
                })));
            }
            phi = sinkhorn_update(&cost, &psi, &lb, prob.tau0, eps, true);
            psi = sinkhorn_update(&cost, &phi, &la, prob.tau1, eps, false);
            let t = balancing_shift(&la, &lb, &phi, &psi, prob.tau0, prob.tau1);
            apply_shift(&mut phi, &mut psi, t);
            iterations += 1;
            let value = projected_value(&phi);
            if let Some(prev) = previous {
                if (value - prev).abs() <= cfg.tolerance * value.abs().max(1.0) {
                    break;
                }
            }
            previous = Some(value);
        }
        if eps <= cfg.epsilon_final {
            break;
        }
        eps = (eps * cfg.epsilon_decay).max(cfg.epsilon_final);
    }

    let mut psi_feasible = c_transform_cols(&cost, &phi);
    let mut phi_feasible = c_transform_rows(&cost, &psi_feasible);
    let t = balancing_shift(&la, &lb, &phi_feasible, &psi_feasible, prob.tau0, prob.tau1);
    apply_shift(&mut phi_feasible, &mut psi_feasible, t);
    Ok(DiscreteDualResult {
        dual_value: discrete_dual_objective(grid, prob, &phi_feasible, &psi_feasible),
        max_violation: max_violation(&cost, &phi_feasible, &psi_feasible),
        phi: phi_feasible,
        psi: psi_feasible,
        iterations,
        epsilon_final: eps,
        sinkhorn_phi: phi,
        sinkhorn_psi: psi,
    })
}

/// Entropic plan `π_ij = α_i β_j exp((φ_i + ψ_j - c_ij) / ε)` for Sinkhorn
/// potentials at regularization `eps`.
pub fn entropic_plan(grid: &Grid1D, phi: &[f64], psi: &[f64], eps: f64) -> DMatrix<f64> {
    let cost = cost_matrix(grid);
    DMatrix::from_fn(grid.len(), grid.len(), |i, j| {
        let w = grid.alpha_weights[i] * grid.beta_weights[j];
        if w == 0.0 { 0.0 } else { w * ((phi[i] + psi[j] - cost[(i, j)]) / eps).exp() }
    })
}

/// Termwise generalized KL `Σ (ρ log(ρ/η) - ρ + η)`; `0 log 0 = 0`, and mass
/// on a zero reference weight gives `+inf`.
pub fn discrete_generalized_kl(rho: &[f64], eta: &[f64]) -> f64 {
    rho.iter()
        .zip(eta)
        .map(|(&r, &e)| match (r > 0.0, e > 0.0) {
            (false, _) => e,
            (true, false) => f64::INFINITY,
            (true, true) => r * (r / e).ln() - r + e,
        })
        .sum()
}

pub fn discrete_primal_value(grid: &Grid1D, prob: &UotProblem, plan: &DMatrix<f64>) -> Result<f64> {
    let n = grid.len();
    if plan.nrows() != n || plan.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            found: plan.nrows(),
        });
    }
    if plan.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::invalid("plan", "entries must be nonnegative"));
    }
    let cost = cost_matrix(grid);
    let transport = cost.component_mul(plan).sum();
    let rows: Vec<f64> = plan.row_iter().map(|r| r.sum()).collect();
    let cols: Vec<f64> = plan.column_iter().map(|c| c.sum()).collect();
    Ok(transport
        + prob.tau0 * discrete_generalized_kl(&rows, &grid.alpha_weights)
        + prob.tau1 * discrete_generalized_kl(&cols, &grid.beta_weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

/// A finite one-dimensional Gaussian mixture with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mixture1D {
    components: Vec<MixtureComponent>,
}

/// `log Φ(s)` for the standard normal CDF, accurate deep in the lower tail.
fn ln_std_normal_cdf(s: f64) -> f64 {
    (0.5 * erfc(-s / std::f64::consts::SQRT_2)).ln()
}

impl Mixture1D {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture", "needs at least one component"));
        }
        for c in &components {
            if !(c.weight > 0.0 && c.std > 0.0 && c.mean.is_finite() && c.std.is_finite()) {
                return Err(Error::invalid("mixture", format!("invalid component {c:?}")));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("mixture", format!("weights sum to {total}, not 1")));
        }
        Ok(Mixture1D { components })
    }

    pub fn single(mean: f64, std: f64) -> Self {
        Mixture1D {
            components: vec![MixtureComponent { weight: 1.0, mean, std }],
        }
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.std * c.std + (c.mean - m).powi(2)))
            .sum()
    }

    /// The Gaussian with the same mean and variance.
    pub fn moment_match(&self) -> Result<GaussianMeasure> {
        GaussianMeasure::scalar(1.0, self.mean(), self.variance().sqrt())
    }

    pub fn shifted(&self, t: f64) -> Mixture1D {
        Mixture1D {
            components: self.components.iter().map(|c| MixtureComponent { mean: c.mean + t, ..*c }).collect(),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let terms = self.components.iter().map(|c| {
            let z = (x - c.mean) / c.std;
            c.weight.ln() - c.std.ln() - 0.5 * (z * z + std::f64::consts::TAU.ln())
        });
        log_sum_exp(terms)
    }

    /// `log P(X <= x)` when `upper` is false, `log P(X > x)` otherwise.
    fn ln_tail(&self, x: f64, upper: bool) -> f64 {
        let terms = self.components.iter().map(|c| {
            let z = (x - c.mean) / c.std;
            c.weight.ln() + ln_std_normal_cdf(if upper { -z } else { z })
        });
        log_sum_exp(terms)
    }

    /// The `Φ(s)` quantile, solved by bisection on the tail probability that
    /// does not round to one.
    pub fn quantile_at_probit(&self, s: f64) -> f64 {
        let upper = s > 0.0;
        let target = ln_std_normal_cdf(-s.abs());
        let spread = self.components.iter().map(|c| c.std).fold(0.0, f64::max);
        let lo_mean = self.components.iter().map(|c| c.mean).fold(f64::INFINITY, f64::min);
        let hi_mean = self.components.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max);
        let mut lo = lo_mean - (s.abs() + 5.0) * spread;
        let mut hi = hi_mean + (s.abs() + 5.0) * spread;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = self.ln_tail(mid, upper);
            // Lower tail increases in x, upper tail decreases.
            if (v < target) != upper {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn support(&self, sigmas: f64) -> (f64, f64) {
        let lo = self.components.iter().map(|c| c.mean - sigmas * c.std).fold(f64::INFINITY, f64::min);
        let hi = self.components.iter().map(|c| c.mean + sigmas * c.std).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Number of quantile nodes used for the 1-D Wasserstein integral.
pub const QUANTILE_NODES: usize = 10_000;
const PROBIT_RANGE: f64 = 12.0;
const KL_SIGMAS: f64 = 12.0;
const KL_INTERVALS: usize = 20_000;

/// `W2^2(p, q) = ∫_0^1 (F_p^-1(t) - F_q^-1(t))^2 dt`, integrated in probit
/// coordinates `t = Φ(s)`.
pub fn w2_sq_mixtures(p: &Mixture1D, q: &Mixture1D, nodes: usize) -> f64 {
    let density = |s: f64| (-0.5 * s * s).exp() / std::f64::consts::TAU.sqrt();
    simpson(
        |s| (p.quantile_at_probit(s) - q.quantile_at_probit(s)).powi(2) * density(s),
        -PROBIT_RANGE,
        PROBIT_RANGE,
        nodes,
    )
}

/// `KL(p | mu)` for a mixture `p` and Gaussian probability `mu`.
pub fn kl_mixture_gaussian(p: &Mixture1D, mu: &GaussianMeasure, intervals: usize) -> Result<f64> {
    let reference = mu.normalized().log_density_fn()?;
    let (lo, hi) = p.support(KL_SIGMAS);
    let failure = std::cell::Cell::new(None);
    let value = simpson(
        |x| {
            let lp = p.ln_pdf(x);
            if lp < -700.0 {
                return 0.0;
            }
            match reference.eval(&DVector::from_element(1, x)) {
                Ok(lm) => lp.exp() * (lp - lm),
                Err(e) => {
                    failure.set(Some(e));
                    0.0
                }
            }
        },
        lo,
        hi,
        intervals,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    /// `A(p, q)` for the mixtures, by quadrature.
    pub mixture_cost: f64,
    /// `A(g0, g1)` for the moment-matched Gaussians, in closed form.
    pub gaussian_cost: f64,
    pub slack: f64,
    pub mixture_w2_sq: f64,
    pub gaussian_w2_sq: f64,
}

/// Compares `A(p, q) = W2^2(p, q) + τ0 KL(p|μ0) + τ1 KL(q|μ1)` for mixtures
/// against the same functional at their moment-matched Gaussians.
pub fn reduction_check(prob: &UotProblem, p: &Mixture1D, q: &Mixture1D) -> Result<ReductionReport> {
    require_1d(prob)?;
    let g0 = p.moment_match()?;
    let g1 = q.moment_match()?;
    let gaussian_w2_sq = w2_sq_gaussian(&g0, &g1)?;
    let gaussian_cost =
        gaussian_w2_sq + prob.tau0 * gaussian_kl(&g0, &prob.alpha)? + prob.tau1 * gaussian_kl(&g1, &prob.beta)?;

    let evaluate = |refine: usize| -> Result<(f64, f64)> {
        let w2 = w2_sq_mixtures(p, q, QUANTILE_NODES * refine);
        let kl0 = kl_mixture_gaussian(p, &prob.alpha, KL_INTERVALS * refine)?;
        let kl1 = kl_mixture_gaussian(q, &prob.beta, KL_INTERVALS * refine)?;
        Ok((w2, w2 + prob.tau0 * kl0 + prob.tau1 * kl1))
    };
    let (mixture_w2_sq, mixture_cost) = match evaluate(1)? {
        (w2, cost) if w2.is_finite() && cost.is_finite() => (w2, cost),
        _ => match evaluate(2)? {
            (w2, cost) if w2.is_finite() && cost.is_finite() => (w2, cost),
            _ => return Err(Error::Quadrature("non-finite mixture cost after refinement".into())),
        },
    };
    Ok(ReductionReport {
        mixture_cost,
        gaussian_cost,
        slack: mixture_cost - gaussian_cost,
        mixture_w2_sq,
        gaussian_w2_sq,
    })
}
