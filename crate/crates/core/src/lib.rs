//! Closed-form KL-unbalanced optimal transport between Gaussian measures.
//!
//! The crate computes the optimal value, marginals and transport map of
//!
//! ```text
//! min_pi  int |x - y|^2 dpi + tau0 KL(pi_0 | alpha) + tau1 KL(pi_1 | beta)
//! ```
//!
//! for finite Gaussian measures `alpha`, `beta`, and checks every solution
//! against explicit quadratic dual potentials. A finite-grid discrete dual
//! solver and a large-relaxation expansion give independent cross-checks.
//!
//! ```
//! use gaussian_uot::{solve, GaussianMeasure, UotProblem};
//!
//! let alpha = GaussianMeasure::scalar(1.0, 0.2, 1.1)?;
//! let beta = GaussianMeasure::scalar(0.8, 1.3, 0.7)?;
//! let prob = UotProblem::new(alpha, beta, 1.4, 2.2)?;
//! let sol = solve(&prob)?;
//! assert!((sol.value - 0.395_206_446_101).abs() < 1e-9);
//! # Ok::<(), gaussian_uot::Error>(())
//! ```

pub mod asymptotics;
pub mod certificate;
pub mod closed_form;
pub mod error;
pub mod gaussian;
pub mod grid;
pub mod linalg;
pub mod quadrature;
pub mod report;

pub use asymptotics::{limit_expansion, sweep, LimitExpansion, SweepRow};
pub use certificate::{build_potentials, certify, dual_value, CertificateBounds, CertificateReport, QuadraticPotential};
pub use closed_form::{primal_objective, solve, solve_1d, ClosedFormSolution};
pub use error::{Error, Result};
pub use gaussian::{gaussian_kl, generalized_kl, w2_sq_gaussian, GaussianMeasure, UotProblem};
pub use grid::{build_grid, reduction_check, solve_discrete_dual, Grid1D, Mixture1D, MixtureComponent, SolverConfig};
pub use linalg::{SpdCheck, SymMatrix};
