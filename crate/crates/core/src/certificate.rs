//! Quadratic KL-dual potentials and a numerical optimality certificate.
//!
//! The potentials are
//!
//! ```text
//! phi(x) = -tau0 log(M* p*(x) / alpha(x)) = X^T (I - L) X + 2 h^T X + c_phi,   X = x - u*
//! psi(y) = -tau1 log(M* q*(y) / beta(y))  = Y^T (I - L^-1) Y - 2 h^T Y + c_psi, Y = y - v*
//! ```
//!
//! and `|x - y|^2 - phi(x) - psi(y) = |L^1/2 X - L^-1/2 Y|^2`, which vanishes
//! exactly on the graph of the optimal map.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::closed_form::{derive_coefficients, primal_objective, zero_plan_value, ClosedFormSolution};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianMeasure, UotProblem};
use crate::linalg::{frobenius, SymMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `(x - center)^T quad (x - center) + 2 lin^T (x - center) + constant`.
#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    pub quad: SymMatrix,
    pub lin: DVector<f64>,
    pub constant: f64,
    pub center: DVector<f64>,
}

impl QuadraticPotential {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let dx = x - &self.center;
        Ok(self.quad.quad_form(&dx) + 2.0 * self.lin.dot(&dx) + self.constant)
    }

    /// `log ∫ exp(-phi / tau) d rho`, or a certificate error when the
    /// combined exponent is not negative definite.
    fn log_exp_integral(&self, tau: f64, rho: &GaussianMeasure) -> Result<f64> {
        let d = self.dim() as f64;
        let prec = rho.cov().inv()?;
        let delta = &self.center - rho.mean();
        let k = self.quad.scale(2.0 / tau).add(&prec);
        let check = k.spd_check();
        if !check.is_spd {
            return Err(Error::Certificate(format!(
                "Gaussian integral diverges (min eigenvalue of exponent {:.3e})",
                check.min_eigenvalue
            )));
        }
        let g = &self.lin * (2.0 / tau) + prec.mul_vec(&delta);
        let s = self.constant / tau + 0.5 * prec.quad_form(&delta) - rho.mass().ln()
            + 0.5 * (d * LN_2PI + rho.cov().logdet()?);
        let k_inv_g = k.solve(&g)?;
        Ok(0.5 * d * LN_2PI - 0.5 * k.logdet()? + 0.5 * g.dot(&k_inv_g) - s)
    }
}

/// `(tau / 2) log det(I + r Sigma^1/2 D Sigma^1/2)` with `tau = 2 / r`,
/// summed with `ln_1p` so that large `tau` does not amplify rounding.
fn half_logdet_ratio(sigma: &SymMatrix, d: &SymMatrix, r: f64) -> Result<f64> {
    let inner = SymMatrix::congruence(&sigma.sqrt()?, d);
    let eig = inner.as_matrix().symmetric_eigenvalues();
    if eig.iter().any(|&mu| r * mu <= -1.0) {
        return Err(Error::Certificate("adjusted covariance is not positive definite".into()));
    }
    Ok(eig.iter().map(|&mu| (r * mu).ln_1p()).sum::<f64>() / r)
}

/// Potentials of the optimality certificate. The constants expand
/// `-tau0 log(M* p*(u*) / alpha(u*))` and its `psi` analogue term by term:
/// `P*^-1 = A0 + r0 (I - L*)`, `u* - m0 = -r0 Sigma0 h*` and
/// `log(M*/a) = (tau1 log(b/a) - A*) / (tau0 + tau1)`.
pub fn build_potentials(
    sol: &ClosedFormSolution,
    prob: &UotProblem,
) -> Result<(QuadraticPotential, QuadraticPotential)> {
    let d = sol.dim();
    let id = SymMatrix::identity(d);
    let l_inv = sol.map_linear.inv()?;
    let r0 = 2.0 / prob.tau0;
    let r1 = 2.0 / prob.tau1;
    let (a, b) = (prob.alpha.mass(), prob.beta.mass());
    let total = prob.tau0 + prob.tau1;
    let log_m_over_a = (prob.tau1 * (b / a).ln() - sol.a_star) / total;
    let log_m_over_b = (prob.tau0 * (a / b).ln() - sol.a_star) / total;
    let c_phi = -prob.tau0 * log_m_over_a
        - half_logdet_ratio(prob.alpha.cov(), &id.sub(&sol.map_linear), r0)?
        - r0 * prob.alpha.cov().quad_form(&sol.h_star);
    let c_psi = -prob.tau1 * log_m_over_b
        - half_logdet_ratio(prob.beta.cov(), &id.sub(&l_inv), r1)?
        - r1 * prob.beta.cov().quad_form(&sol.h_star);

    let phi = QuadraticPotential {
        quad: id.sub(&sol.map_linear),
        lin: sol.h_star.clone(),
        constant: c_phi,
        center: sol.u_star.clone(),
    };
    let psi = QuadraticPotential {
        quad: id.sub(&l_inv),
        lin: -&sol.h_star,
        constant: c_psi,
        center: sol.v_star.clone(),
    };
    Ok((phi, psi))
}

/// `|x - y|^2 - phi(x) - psi(y)`; nonnegative for a feasible pair.
pub fn slack(
    phi: &QuadraticPotential,
    psi: &QuadraticPotential,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok((x - y).norm_squared() - phi.eval(x)? - psi.eval(y)?)
}

/// Dual objective `tau0 ∫(1 - e^{-phi/tau0}) d alpha + tau1 ∫(1 - e^{-psi/tau1}) d beta`,
/// with both integrals evaluated in closed form from the quadratic
/// coefficients.
pub fn dual_value(
    phi: &QuadraticPotential,
    psi: &QuadraticPotential,
    prob: &UotProblem,
) -> Result<f64> {
    let i0 = phi.log_exp_integral(prob.tau0, &prob.alpha)?.exp();
    let i1 = psi.log_exp_integral(prob.tau1, &prob.beta)?.exp();
    Ok(prob.tau0 * (prob.alpha.mass() - i0) + prob.tau1 * (prob.beta.mass() - i1))
}

/// Gap in the pointwise inequality
/// `tau (z log z - z + 1) + phi z >= tau (1 - e^{-phi/tau})`, `z >= 0`.
pub fn kl_young_gap(z: f64, phi: f64, tau: f64) -> f64 {
    let entropy = if z == 0.0 { 1.0 } else { z * z.ln() - z + 1.0 };
    tau * entropy + phi * z - tau * (1.0 - (-phi / tau).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub riccati_residual: f64,
    pub min_sampled_slack: f64,
    pub max_graph_equality_error: f64,
    pub constant_sum_residual: f64,
    pub marginal_density_residual: f64,
    pub dual_value: f64,
    pub primal_value: f64,
    /// `primal_value - dual_value`.
    pub primal_dual_gap: f64,
    pub min_eig_p_inv: f64,
    /// Largest `1 + |x|^2 + |y|^2` over all sampled pairs.
    pub sample_scale: f64,
    pub sample_count: usize,
    pub seed: u64,
}

fn standard_normal(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Measures every certificate quantity. Sample `i` draws from its own ChaCha
/// stream keyed by `(seed, i)`, so the report does not depend on evaluation
/// order.
pub fn certify(
    sol: &ClosedFormSolution,
    prob: &UotProblem,
    sample_count: usize,
    seed: u64,
) -> Result<CertificateReport> {
    if sample_count == 0 {
        return Err(Error::invalid("sample_count", "must be positive"));
    }
    let d = sol.dim();
    let (phi, psi) = build_potentials(sol, prob)?;
    let p_sqrt = sol.p_star.sqrt()?;
    let q_sqrt = sol.q_star.sqrt()?;
    let alpha = prob.alpha.log_density_fn()?;
    let beta = prob.beta.log_density_fn()?;
    let gamma0 = sol.p_measure().with_mass(sol.m_star).log_density_fn()?;
    let gamma1 = sol.q_measure().with_mass(sol.m_star).log_density_fn()?;

    let mut min_slack = f64::INFINITY;
    let mut max_graph = 0.0f64;
    let mut marginal = 0.0f64;
    let mut scale = 1.0f64;
    for i in 0..sample_count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let x = &sol.u_star + p_sqrt.mul_vec(&standard_normal(&mut rng, d));
        let y = &sol.v_star + q_sqrt.mul_vec(&standard_normal(&mut rng, d));
        let xg = &sol.u_star + p_sqrt.mul_vec(&standard_normal(&mut rng, d));
        let yg = sol.transport(&xg);

        min_slack = min_slack.min(slack(&phi, &psi, &x, &y)?);
        max_graph = max_graph.max(slack(&phi, &psi, &xg, &yg)?.abs());

        let r0 = (-phi.eval(&x)? / prob.tau0 + alpha.eval(&x)?) - gamma0.eval(&x)?;
        let r1 = (-psi.eval(&y)? / prob.tau1 + beta.eval(&y)?) - gamma1.eval(&y)?;
        marginal = marginal.max(r0.abs()).max(r1.abs());

        scale = scale
            .max(1.0 + x.norm_squared() + y.norm_squared())
            .max(1.0 + xg.norm_squared() + yg.norm_squared());
    }

    let dual = dual_value(&phi, &psi, prob)?;
    let primal = primal_objective(sol, prob)?;
    Ok(CertificateReport {
        riccati_residual: sol.riccati_residual,
        min_sampled_slack: min_slack,
        max_graph_equality_error: max_graph,
        constant_sum_residual: (phi.constant + psi.constant - sol.h_star.norm_squared()).abs(),
        marginal_density_residual: marginal,
        dual_value: dual,
        primal_value: primal,
        primal_dual_gap: primal - dual,
        min_eig_p_inv: sol.p_star.inv()?.spd_check().min_eigenvalue,
        sample_scale: scale,
        sample_count,
        seed,
    })
}

/// Pass/fail thresholds applied to a [`CertificateReport`]. Each threshold is
/// relative to the magnitude of the terms that cancel in the checked
/// quantity: the three Riccati terms, the potential constants, the sampled
/// `1 + |x|^2 + |y|^2`, or the zero-plan value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CertificateBounds {
    pub riccati_rel: f64,
    pub slack_rel: f64,
    pub graph_rel: f64,
    pub constant_sum_rel: f64,
    pub marginal_rel: f64,
    pub gap_rel: f64,
}

impl Default for CertificateBounds {
    fn default() -> Self {
        CertificateBounds {
            riccati_rel: 1e-12,
            slack_rel: 1e-10,
            graph_rel: 1e-12,
            constant_sum_rel: 1e-10,
            marginal_rel: 1e-10,
            gap_rel: 1e-10,
        }
    }
}

impl CertificateBounds {
    /// Descriptions of every bound the report violates; empty on success.
    pub fn failures(
        &self,
        report: &CertificateReport,
        sol: &ClosedFormSolution,
        prob: &UotProblem,
    ) -> Result<Vec<String>> {
        let c = derive_coefficients(prob)?;
        let l = &sol.map_linear;
        let riccati_scale = frobenius(c.c0.as_matrix())
            + frobenius(SymMatrix::congruence(l, &c.c1).as_matrix())
            + c.kappa.abs() * frobenius(l.as_matrix());
        let (phi, psi) = build_potentials(sol, prob)?;
        let constant_scale = 1.0 + phi.constant.abs() + psi.constant.abs() + sol.h_star.norm_squared();
        let gap_scale = 1.0 + sol.value.abs() + zero_plan_value(prob);
        let s = report.sample_scale;
        let graph_scale = s + phi.constant.abs() + psi.constant.abs();
        let checks = [
            (
                "riccati_residual",
                report.riccati_residual <= self.riccati_rel * riccati_scale,
                report.riccati_residual,
                self.riccati_rel * riccati_scale,
            ),
            (
                "min_sampled_slack",
                report.min_sampled_slack >= -self.slack_rel * graph_scale,
                report.min_sampled_slack,
                -self.slack_rel * graph_scale,
            ),
            (
                "max_graph_equality_error",
                report.max_graph_equality_error <= self.graph_rel * graph_scale,
                report.max_graph_equality_error,
                self.graph_rel * graph_scale,
            ),
            (
                "constant_sum_residual",
                report.constant_sum_residual <= self.constant_sum_rel * constant_scale,
                report.constant_sum_residual,
                self.constant_sum_rel * constant_scale,
            ),
            (
                "marginal_density_residual",
                report.marginal_density_residual <= self.marginal_rel * s,
                report.marginal_density_residual,
                self.marginal_rel * s,
            ),
            (
                "primal_dual_gap",
                report.primal_dual_gap.abs() <= self.gap_rel * gap_scale,
                report.primal_dual_gap,
                self.gap_rel * gap_scale,
            ),
            (
                "min_eig_p_inv",
                report.min_eig_p_inv > 0.0,
                report.min_eig_p_inv,
                0.0,
            ),
        ];
        Ok(checks
            .iter()
            .filter(|(_, ok, _, _)| !ok)
            .map(|(name, _, got, bound)| format!("{name} = {got:.3e} (bound {bound:.3e})"))
            .collect())
    }
}
