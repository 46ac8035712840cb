//! Finite Gaussian measures and the Gaussian functionals the closed form is
//! assembled from.
//!
//! KL divergences follow the generalized (unnormalized) convention
//! `KL(rho | eta) = ∫ (r log r - r + 1) d eta`. For probability measures it
//! reduces to the usual relative entropy; [`mass_kl_split`] handles the mass
//! factor.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `mass * N(mean, cov)` with `mass > 0` and `cov` positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mass: f64,
    mean: DVector<f64>,
    cov: SymMatrix,
}

impl GaussianMeasure {
    pub fn new(mass: f64, mean: DVector<f64>, cov: SymMatrix) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::invalid("mass", format!("must be finite and > 0, got {mass}")));
        }
        if mean.len() != cov.dim() {
            return Err(Error::Dimension {
                expected: cov.dim(),
                found: mean.len(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mean", "entries must be finite"));
        }
        let check = cov.spd_check();
        if !check.is_spd {
            return Err(Error::NotPositiveDefinite(check));
        }
        Ok(GaussianMeasure { mass, mean, cov })
    }

    /// A probability measure `N(mean, cov)`.
    pub fn probability(mean: DVector<f64>, cov: SymMatrix) -> Result<Self> {
        Self::new(1.0, mean, cov)
    }

    /// One-dimensional `mass * N(mean, std^2)`.
    pub fn scalar(mass: f64, mean: f64, std: f64) -> Result<Self> {
        Self::new(
            mass,
            DVector::from_element(1, mean),
            SymMatrix::scalar(std * std),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }

    pub fn normalized(&self) -> GaussianMeasure {
        self.with_mass(1.0)
    }

    pub fn with_mass(&self, mass: f64) -> GaussianMeasure {
        GaussianMeasure {
            mass,
            ..self.clone()
        }
    }

    /// Precomputes what is needed for repeated density evaluation.
    pub fn log_density_fn(&self) -> Result<LogDensity> {
        let precision = self.cov.inv()?;
        let logdet = self.cov.logdet()?;
        Ok(LogDensity {
            mean: self.mean.clone(),
            precision,
            offset: self.mass.ln() - 0.5 * (self.dim() as f64 * LN_2PI + logdet),
        })
    }
}

/// Log of the Lebesgue density of a [`GaussianMeasure`], including the mass.
#[derive(Debug, Clone)]
pub struct LogDensity {
    mean: DVector<f64>,
    precision: SymMatrix,
    offset: f64,
}

impl LogDensity {
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.mean.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                found: x.len(),
            });
        }
        let dx = x - &self.mean;
        Ok(self.offset - 0.5 * self.precision.quad_form(&dx))
    }
}

/// A pair of finite Gaussian measures with KL marginal penalties.
#[derive(Debug, Clone, PartialEq)]
pub struct UotProblem {
    pub alpha: GaussianMeasure,
    pub beta: GaussianMeasure,
    pub tau0: f64,
    pub tau1: f64,
}

impl UotProblem {
    pub fn new(alpha: GaussianMeasure, beta: GaussianMeasure, tau0: f64, tau1: f64) -> Result<Self> {
        if alpha.dim() != beta.dim() {
            return Err(Error::Dimension {
                expected: alpha.dim(),
                found: beta.dim(),
            });
        }
        for (name, tau) in [("tau0", tau0), ("tau1", tau1)] {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {tau}")));
            }
        }
        Ok(UotProblem {
            alpha,
            beta,
            tau0,
            tau1,
        })
    }

    pub fn dim(&self) -> usize {
        self.alpha.dim()
    }

    /// The same problem with the two sides exchanged.
    pub fn swapped(&self) -> UotProblem {
        UotProblem {
            alpha: self.beta.clone(),
            beta: self.alpha.clone(),
            tau0: self.tau1,
            tau1: self.tau0,
        }
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// Relative entropy between the normalized parts of `p` and `m`; masses are
/// ignored.
pub fn gaussian_kl(p: &GaussianMeasure, m: &GaussianMeasure) -> Result<f64> {
    check_dims(m.dim(), p.dim())?;
    let d = p.dim() as f64;
    let prec = m.cov.inv()?;
    let dm = &p.mean - &m.mean;
    let trace = (prec.as_matrix() * p.cov.as_matrix()).trace();
    let value = 0.5 * (trace + prec.quad_form(&dm) - d + m.cov.logdet()? - p.cov.logdet()?);
    Ok(value.max(0.0))
}

/// Generalized KL between two finite Gaussian measures.
pub fn generalized_kl(rho: &GaussianMeasure, eta: &GaussianMeasure) -> Result<f64> {
    mass_kl_split(rho.mass, gaussian_kl(rho, eta)?, eta.mass)
}

/// Squared Bures distance `tr(P + Q - 2 (P^1/2 Q P^1/2)^1/2)`.
pub fn bures_sq(p: &SymMatrix, q: &SymMatrix) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    let rp = p.sqrt()?;
    let cross = SymMatrix::congruence(&rp, q).sqrt()?;
    Ok((p.trace() + q.trace() - 2.0 * cross.trace()).max(0.0))
}

/// Squared 2-Wasserstein distance between the normalized parts.
pub fn w2_sq_gaussian(g0: &GaussianMeasure, g1: &GaussianMeasure) -> Result<f64> {
    check_dims(g0.dim(), g1.dim())?;
    Ok((&g0.mean - &g1.mean).norm_squared() + bures_sq(&g0.cov, &g1.cov)?)
}

/// The SPD matrix `L` with `L p L = q`: the linear optimal transport map from
/// `N(0, p)` to `N(0, q)`.
pub fn monge_map(p: &SymMatrix, q: &SymMatrix) -> Result<SymMatrix> {
    check_dims(p.dim(), q.dim())?;
    let rp = p.sqrt()?;
    let rp_inv = p.inv_sqrt()?;
    let mid = SymMatrix::congruence(&rp, q).sqrt()?;
    Ok(SymMatrix::congruence(&rp_inv, &mid))
}

/// `KL(M p | a mu) = M KL(p | mu) + M log(M / a) - M + a`.
pub fn mass_kl_split(mass: f64, unit_kl: f64, ref_mass: f64) -> Result<f64> {
    if !(mass > 0.0) {
        return Err(Error::invalid("mass", format!("must be > 0, got {mass}")));
    }
    if !(ref_mass > 0.0) {
        return Err(Error::invalid("ref_mass", format!("must be > 0, got {ref_mass}")));
    }
    Ok(mass * unit_kl + mass * (mass / ref_mass).ln() - mass + ref_mass)
}

pub fn log_density(g: &GaussianMeasure, x: &DVector<f64>) -> Result<f64> {
    g.log_density_fn()?.eval(x)
}
