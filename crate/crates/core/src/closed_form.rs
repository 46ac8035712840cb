//! Closed-form minimizer of the KL-unbalanced transport problem between two
//! finite Gaussian measures.
//!
//! With `r_i = 2 / tau_i`, `A_i = Sigma_i^-1`, `C_i = A_i + r_i I` and
//! `kappa = r1 - r0`, the covariance map `L` is the SPD root of
//! `L C1 L - kappa L = C0`. The adjusted marginals are `p* = N(u*, P*)` and
//! `q* = N(v*, Q*)`, the transported mass is `M*`, and the optimal plan is
//! `M*` times the graph coupling `y = v* + L (x - u*)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{gaussian_kl, mass_kl_split, w2_sq_gaussian, GaussianMeasure, UotProblem};
use crate::linalg::{frobenius, SymMatrix};

#[derive(Debug, Clone)]
pub struct DerivedCoefficients {
    pub r0: f64,
    pub r1: f64,
    /// Precision of the first reference measure.
    pub a0: SymMatrix,
    pub a1: SymMatrix,
    pub c0: SymMatrix,
    pub c1: SymMatrix,
    pub kappa: f64,
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub s_star: SymMatrix,
    pub l_star: SymMatrix,
    /// `||L C1 L - kappa L - C0||_F`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct ClosedFormSolution {
    pub p_star: SymMatrix,
    pub q_star: SymMatrix,
    pub u_star: DVector<f64>,
    pub v_star: DVector<f64>,
    pub h_star: DVector<f64>,
    /// Normalized cost `W2^2(p*, q*) + tau0 KL(p*|mu0) + tau1 KL(q*|mu1)`.
    pub a_star: f64,
    pub m_star: f64,
    pub value: f64,
    /// Linear part of the optimal map; equals `L*`.
    pub map_linear: SymMatrix,
    /// Offset of the optimal map, `v* - L* u*`.
    pub map_offset: DVector<f64>,
    pub riccati_residual: f64,
}

impl ClosedFormSolution {
    pub fn dim(&self) -> usize {
        self.u_star.len()
    }

    /// `p* = N(u*, P*)`.
    pub fn p_measure(&self) -> GaussianMeasure {
        GaussianMeasure::probability(self.u_star.clone(), self.p_star.clone())
            .expect("P* is positive definite")
    }

    /// `q* = N(v*, Q*)`.
    pub fn q_measure(&self) -> GaussianMeasure {
        GaussianMeasure::probability(self.v_star.clone(), self.q_star.clone())
            .expect("Q* is positive definite")
    }

    /// The optimal map `T(x) = v* + L*(x - u*)`.
    pub fn transport(&self, x: &DVector<f64>) -> DVector<f64> {
        self.map_linear.mul_vec(x) + &self.map_offset
    }

    /// Covariance `[[P*, P* L*], [L* P*, Q*]]` of the graph coupling. It has
    /// rank `d`.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let p = self.p_star.as_matrix();
        let l = self.map_linear.as_matrix();
        let mut joint = DMatrix::zeros(2 * d, 2 * d);
        joint.view_mut((0, 0), (d, d)).copy_from(p);
        joint.view_mut((0, d), (d, d)).copy_from(&(p * l));
        joint.view_mut((d, 0), (d, d)).copy_from(&(l * p));
        joint.view_mut((d, d), (d, d)).copy_from(self.q_star.as_matrix());
        joint
    }
}

pub fn derive_coefficients(prob: &UotProblem) -> Result<DerivedCoefficients> {
    let r0 = 2.0 / prob.tau0;
    let r1 = 2.0 / prob.tau1;
    let a0 = prob.alpha.cov().inv()?;
    let a1 = prob.beta.cov().inv()?;
    let c0 = a0.shift(r0);
    let c1 = a1.shift(r1);
    Ok(DerivedCoefficients {
        r0,
        r1,
        a0,
        a1,
        c0,
        c1,
        kappa: r1 - r0,
    })
}

pub fn riccati_residual(c: &DerivedCoefficients, l: &SymMatrix) -> f64 {
    let lhs = SymMatrix::congruence(l, &c.c1).sub(&l.scale(c.kappa));
    frobenius(lhs.sub(&c.c0).as_matrix())
}

/// Positive root of `s^2 - kappa s = lambda` for `lambda > 0`, written to
/// avoid cancellation when `kappa < 0`.
fn positive_root(kappa: f64, lambda: f64) -> f64 {
    let disc = (kappa * kappa + 4.0 * lambda).sqrt();
    if kappa >= 0.0 {
        0.5 * (kappa + disc)
    } else {
        2.0 * lambda / (disc - kappa)
    }
}

/// `S* = [kappa I + (kappa^2 I + 4B)^1/2] / 2` with `B = C1^1/2 C0 C1^1/2`,
/// evaluated as a spectral function of `B`; then `L* = C1^-1/2 S* C1^-1/2`.
pub fn solve_riccati(c: &DerivedCoefficients) -> Result<RiccatiSolution> {
    let c1_sqrt = c.c1.sqrt()?;
    let c1_inv_sqrt = c.c1.inv_sqrt()?;
    let b = SymMatrix::congruence(&c1_sqrt, &c.c0);
    let kappa = c.kappa;
    let s_star = b.spectral_map(|lambda| positive_root(kappa, lambda))?;
    let l_star = SymMatrix::congruence(&c1_inv_sqrt, &s_star);
    let check = l_star.spd_check();
    if !check.is_spd {
        return Err(Error::NotPositiveDefinite(check));
    }
    let residual = riccati_residual(c, &l_star);
    Ok(RiccatiSolution {
        s_star,
        l_star,
        residual,
    })
}

/// `P* = [A0 + r0 (I - L*)]^-1` and `Q* = L* P* L*`.
///
/// When `r0 > r1` the equivalent back-substitution
/// `Q* = [A1 + r1 (I - L*^-1)]^-1`, `P* = L*^-1 Q* L*^-1` is used instead, so
/// the rounding error in `L*` is multiplied by the smaller rate.
pub fn adjusted_covariances(
    c: &DerivedCoefficients,
    r: &RiccatiSolution,
) -> Result<(SymMatrix, SymMatrix)> {
    let d = c.a0.dim();
    let id = SymMatrix::identity(d);
    let invert = |m: SymMatrix, what: &str| {
        m.inv()
            .map_err(|e| Error::Invariant(format!("{what} is not positive definite: {e}")))
    };
    if c.r0 <= c.r1 {
        let p_star = invert(c.a0.add(&id.sub(&r.l_star).scale(c.r0)), "A0 + r0 (I - L*)")?;
        let q_star = SymMatrix::congruence(&r.l_star, &p_star);
        Ok((p_star, q_star))
    } else {
        let l_inv = r.l_star.inv()?;
        let q_star = invert(c.a1.add(&id.sub(&l_inv).scale(c.r1)), "A1 + r1 (I - L*^-1)")?;
        let p_star = SymMatrix::congruence(&l_inv, &q_star);
        Ok((p_star, q_star))
    }
}

/// Returns `(h*, u*, v*)` where `(I + r0 Sigma0 + r1 Sigma1) h* = m0 - m1`.
pub fn adjusted_means(
    prob: &UotProblem,
    c: &DerivedCoefficients,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let s0 = prob.alpha.cov();
    let s1 = prob.beta.cov();
    let system = s0.scale(c.r0).add(&s1.scale(c.r1)).shift(1.0);
    let m0 = prob.alpha.mean();
    let m1 = prob.beta.mean();
    let h = system.solve(&(m0 - m1))?;
    let u = m0 - s0.mul_vec(&h) * c.r0;
    let v = m1 + s1.mul_vec(&h) * c.r1;
    Ok((h, u, v))
}

fn optimal_mass(prob: &UotProblem, a_star: f64) -> f64 {
    let total = prob.tau0 + prob.tau1;
    let log_m = (prob.tau0 * prob.alpha.mass().ln() + prob.tau1 * prob.beta.mass().ln() - a_star)
        / total;
    log_m.exp()
}

/// The zero-plan value `tau0 a + tau1 b`.
pub fn zero_plan_value(prob: &UotProblem) -> f64 {
    prob.tau0 * prob.alpha.mass() + prob.tau1 * prob.beta.mass()
}

fn finish(
    prob: &UotProblem,
    p_star: SymMatrix,
    q_star: SymMatrix,
    (h_star, u_star, v_star): (DVector<f64>, DVector<f64>, DVector<f64>),
    l_star: SymMatrix,
    a_star: f64,
    riccati_residual: f64,
) -> Result<ClosedFormSolution> {
    let m_star = optimal_mass(prob, a_star);
    let value = zero_plan_value(prob) - (prob.tau0 + prob.tau1) * m_star;
    // The empty plan is never optimal for non-degenerate inputs.
    if !(m_star > 0.0 && value < zero_plan_value(prob)) {
        return Err(Error::Invariant(format!(
            "optimal mass {m_star:e} does not improve on the empty plan"
        )));
    }
    let map_offset = &v_star - l_star.mul_vec(&u_star);
    Ok(ClosedFormSolution {
        p_star,
        q_star,
        u_star,
        v_star,
        h_star,
        a_star,
        m_star,
        value,
        map_linear: l_star,
        map_offset,
        riccati_residual,
    })
}

pub fn assemble(
    prob: &UotProblem,
    _c: &DerivedCoefficients,
    riccati: &RiccatiSolution,
    covs: (SymMatrix, SymMatrix),
    means: (DVector<f64>, DVector<f64>, DVector<f64>),
) -> Result<ClosedFormSolution> {
    let (p_star, q_star) = covs;
    let p = GaussianMeasure::probability(means.1.clone(), p_star.clone())?;
    let q = GaussianMeasure::probability(means.2.clone(), q_star.clone())?;
    let a_star = w2_sq_gaussian(&p, &q)?
        + prob.tau0 * gaussian_kl(&p, &prob.alpha)?
        + prob.tau1 * gaussian_kl(&q, &prob.beta)?;
    finish(
        prob,
        p_star,
        q_star,
        means,
        riccati.l_star.clone(),
        a_star,
        riccati.residual,
    )
}

pub fn solve(prob: &UotProblem) -> Result<ClosedFormSolution> {
    let c = derive_coefficients(prob)?;
    let riccati = solve_riccati(&c)?;
    let covs = adjusted_covariances(&c, &riccati)?;
    let means = adjusted_means(prob, &c)?;
    assemble(prob, &c, &riccati, covs, means)
}

/// Scalar path for one-dimensional problems.
pub fn solve_1d(prob: &UotProblem) -> Result<ClosedFormSolution> {
    if prob.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            found: prob.dim(),
        });
    }
    let (tau0, tau1) = (prob.tau0, prob.tau1);
    let var0 = prob.alpha.cov().as_matrix()[(0, 0)];
    let var1 = prob.beta.cov().as_matrix()[(0, 0)];
    let m0 = prob.alpha.mean()[0];
    let m1 = prob.beta.mean()[0];
    let (r0, r1) = (2.0 / tau0, 2.0 / tau1);
    let c0 = 1.0 / var0 + r0;
    let c1 = 1.0 / var1 + r1;
    let kappa = r1 - r0;

    // L = (kappa + sqrt(kappa^2 + 4 C0 C1)) / (2 C1)
    let l = positive_root(kappa, c0 * c1) / c1;
    let p_inv = 1.0 / var0 + r0 * (1.0 - l);
    if !(p_inv > 0.0) {
        return Err(Error::Invariant(format!("1 / P* = {p_inv:e} is not positive")));
    }
    let p = 1.0 / p_inv;
    let q = l * l * p;
    let h = (m0 - m1) / (1.0 + r0 * var0 + r1 * var1);
    let u = m0 - r0 * var0 * h;
    let v = m1 + r1 * var1 * h;

    let kl = |mean: f64, var: f64, ref_mean: f64, ref_var: f64| {
        0.5 * (var / ref_var + (mean - ref_mean).powi(2) / ref_var - 1.0 + (ref_var / var).ln())
    };
    let w2 = (u - v).powi(2) + (p.sqrt() - q.sqrt()).powi(2);
    let a_star = w2 + tau0 * kl(u, p, m0, var0) + tau1 * kl(v, q, m1, var1);
    let residual = (l * c1 * l - kappa * l - c0).abs();

    let vec1 = |x: f64| DVector::from_element(1, x);
    finish(
        prob,
        SymMatrix::scalar(p),
        SymMatrix::scalar(q),
        (vec1(h), vec1(u), vec1(v)),
        SymMatrix::scalar(l),
        a_star,
        residual,
    )
}

/// Primal objective of the plan `M* (Id, T)_# p*`, evaluated through the
/// graph-coupling transport cost and the mass-split KL terms.
pub fn primal_objective(sol: &ClosedFormSolution, prob: &UotProblem) -> Result<f64> {
    let d = sol.dim();
    let i_minus_l = SymMatrix::identity(d).sub(&sol.map_linear);
    let transport = sol.h_star.norm_squared() + SymMatrix::congruence(&i_minus_l, &sol.p_star).trace();
    let kl0 = mass_kl_split(sol.m_star, gaussian_kl(&sol.p_measure(), &prob.alpha)?, prob.alpha.mass())?;
    let kl1 = mass_kl_split(sol.m_star, gaussian_kl(&sol.q_measure(), &prob.beta)?, prob.beta.mass())?;
    Ok(sol.m_star * transport + prob.tau0 * kl0 + prob.tau1 * kl1)
}
