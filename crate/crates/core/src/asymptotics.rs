//! Large-relaxation behaviour: with `tau_i = lambda * bar_tau_i` and
//! `lambda -> inf`, the value expands as
//! `lambda [bar_tau0 a + bar_tau1 b - (bar_tau0 + bar_tau1) G] + G W2^2(mu0, mu1) + o(1)`
//! with `G = a^theta0 b^theta1`.

use serde::Serialize;

use crate::closed_form::solve;
use crate::error::{Error, Result};
use crate::gaussian::{w2_sq_gaussian, UotProblem};
use crate::linalg::frobenius;

/// Relative mass difference below which the masses count as equal.
pub const MASS_EQUALITY_TOL: f64 = 1e-12;

/// `e^x - 1 - x`, accurate for small `|x|`.
fn exp_remainder(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x2 * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)))
    } else {
        x.exp_m1() - x
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimitExpansion {
    pub theta0: f64,
    pub theta1: f64,
    /// Weighted geometric mean of the masses.
    pub g: f64,
    /// Coefficient of `lambda`; zero exactly when the masses agree.
    pub leading_coeff: f64,
    /// `G * W2^2(mu0, mu1)`.
    pub constant_term: f64,
}

impl LimitExpansion {
    pub fn predict(&self, lambda: f64) -> f64 {
        lambda * self.leading_coeff + self.constant_term
    }
}

pub fn limit_expansion(prob: &UotProblem, bar_tau0: f64, bar_tau1: f64) -> Result<LimitExpansion> {
    for (name, v) in [("bar_tau0", bar_tau0), ("bar_tau1", bar_tau1)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
        }
    }
    let (a, b) = (prob.alpha.mass(), prob.beta.mass());
    let total = bar_tau0 + bar_tau1;
    let theta0 = bar_tau0 / total;
    let theta1 = bar_tau1 / total;
    let g = (theta0 * a.ln() + theta1 * b.ln()).exp();
    let leading_coeff = if (a - b).abs() <= MASS_EQUALITY_TOL * (a + b) {
        0.0
    } else {
        // With delta = log(a / b): a = G e^{theta1 delta}, b = G e^{-theta0 delta}, so
        // theta0 a + theta1 b - G = G [theta0 e1(theta1 delta) + theta1 e1(-theta0 delta)]
        // where e1(x) = e^x - 1 - x >= 0. No first-order cancellation.
        let delta = (a / b).ln();
        total * g * (theta0 * exp_remainder(theta1 * delta) + theta1 * exp_remainder(-theta0 * delta))
    };
    let constant_term = g * w2_sq_gaussian(&prob.alpha, &prob.beta)?;
    Ok(LimitExpansion {
        theta0,
        theta1,
        g,
        leading_coeff,
        constant_term,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub value: f64,
    pub m_star: f64,
    /// `value - lambda * leading_coeff - constant_term`.
    pub residual: f64,
    pub p_star_error: f64,
    pub q_star_error: f64,
    pub u_star_error: f64,
    pub v_star_error: f64,
}

/// Solves the problem at `tau_i = lambda * bar_tau_i` for each `lambda`, in
/// the order given.
pub fn sweep(prob: &UotProblem, bar_taus: (f64, f64), lambdas: &[f64]) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() {
        return Err(Error::invalid("lambdas", "must be nonempty"));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::invalid("lambdas", "must be finite and positive"));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("lambdas", "must be strictly increasing"));
    }
    let expansion = limit_expansion(prob, bar_taus.0, bar_taus.1)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let scaled = UotProblem::new(
                prob.alpha.clone(),
                prob.beta.clone(),
                lambda * bar_taus.0,
                lambda * bar_taus.1,
            )?;
            let sol = solve(&scaled)?;
            Ok(SweepRow {
                lambda,
                value: sol.value,
                m_star: sol.m_star,
                residual: sol.value - expansion.predict(lambda),
                p_star_error: frobenius(&(sol.p_star.as_matrix() - prob.alpha.cov().as_matrix())),
                q_star_error: frobenius(&(sol.q_star.as_matrix() - prob.beta.cov().as_matrix())),
                u_star_error: (&sol.u_star - prob.alpha.mean()).norm(),
                v_star_error: (&sol.v_star - prob.beta.mean()).norm(),
            })
        })
        .collect()
}
