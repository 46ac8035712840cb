#![allow(dead_code)]

use gaussian_uot::linalg::SymMatrix;
use gaussian_uot::{GaussianMeasure, Mixture1D, MixtureComponent, UotProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const PAPER_VALUE: f64 = 0.395_206_446_101;
pub const PAPER_MASS: f64 = 0.767_998_209_416;
pub const PAPER_MIN_EIG_P_INV: f64 = 1.125_456_389_751;
pub const TABLE2: [(usize, f64); 4] = [
    (21, 0.450_038_701_591),
    (31, 0.417_954_908_724),
    (41, 0.408_804_277_024),
    (51, 0.404_012_774_659),
];

pub fn paper_1d() -> UotProblem {
    UotProblem::new(
        GaussianMeasure::scalar(1.0, 0.2, 1.1).unwrap(),
        GaussianMeasure::scalar(0.8, 1.3, 0.7).unwrap(),
        1.4,
        2.2,
    )
    .unwrap()
}

/// The 2-D instance stored in `problems/noncommuting_2d.json`.
pub fn noncommuting_2d() -> UotProblem {
    let cov0 = SymMatrix::from_rows(&[vec![1.5, 0.6], vec![0.6, 0.8]]).unwrap();
    let cov1 = SymMatrix::from_rows(&[vec![0.5, -0.3], vec![-0.3, 1.2]]).unwrap();
    UotProblem::new(
        GaussianMeasure::new(1.0, DVector::from_vec(vec![0.0, 0.5]), cov0).unwrap(),
        GaussianMeasure::new(1.4, DVector::from_vec(vec![1.0, -0.5]), cov1).unwrap(),
        1.0,
        3.0,
    )
    .unwrap()
}

pub fn problem_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("problems").join(name)
}

pub fn random_orthogonal(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q()
}

pub fn random_spd(rng: &mut impl Rng, d: usize) -> SymMatrix {
    let q = random_orthogonal(rng, d);
    let diag: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..4.0)).collect();
    SymMatrix::from_diagonal(&diag).conjugate_by(&q.transpose())
}

pub fn random_measure(rng: &mut impl Rng, d: usize) -> GaussianMeasure {
    let mean = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
    GaussianMeasure::new(rng.random_range(0.3..3.0), mean, random_spd(rng, d)).unwrap()
}

pub fn random_problem(rng: &mut impl Rng, d: usize) -> UotProblem {
    let alpha = random_measure(rng, d);
    let beta = random_measure(rng, d);
    UotProblem::new(alpha, beta, rng.random_range(0.2..5.0), rng.random_range(0.2..5.0)).unwrap()
}

pub fn random_problem_1d(rng: &mut impl Rng) -> UotProblem {
    let mut measure = || {
        GaussianMeasure::scalar(
            rng.random_range(0.3..3.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.3..2.0),
        )
        .unwrap()
    };
    let (alpha, beta) = (measure(), measure());
    UotProblem::new(alpha, beta, rng.random_range(0.2..5.0), rng.random_range(0.2..5.0)).unwrap()
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Brute-force 1-D oracle. Minimizes `A(p, q)` over `(u, v, P, Q)` by
/// coordinate descent with golden-section line searches, then applies one
/// Newton step on a finite-difference model, and converts the minimum into
/// the optimal value through `M = G exp(-A / (tau0 + tau1))`.
pub mod oracle {
    use super::UotProblem;

    struct Params {
        m0: f64,
        var0: f64,
        m1: f64,
        var1: f64,
        tau0: f64,
        tau1: f64,
    }

    impl Params {
        fn from(prob: &UotProblem) -> Self {
            Params {
                m0: prob.alpha.mean()[0],
                var0: prob.alpha.cov().as_matrix()[(0, 0)],
                m1: prob.beta.mean()[0],
                var1: prob.beta.cov().as_matrix()[(0, 0)],
                tau0: prob.tau0,
                tau1: prob.tau1,
            }
        }

        fn kl(p_mean: f64, p_var: f64, mean: f64, var: f64) -> f64 {
            0.5 * ((p_var + (p_mean - mean).powi(2)) / var - 1.0 - (p_var / var).ln())
        }

        /// `A(p, q)` at `x = (u, v, P, Q)`; `+inf` outside `P, Q > 0`.
        fn objective(&self, x: &[f64; 4]) -> f64 {
            let [u, v, p, q] = *x;
            if !(p > 0.0 && q > 0.0) {
                return f64::INFINITY;
            }
            let w2 = (u - v).powi(2) + (p.sqrt() - q.sqrt()).powi(2);
            w2 + self.tau0 * Self::kl(u, p, self.m0, self.var0) + self.tau1 * Self::kl(v, q, self.m1, self.var1)
        }
    }

    const INV_PHI: f64 = 0.618_033_988_749_894_9;

    fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut x1 = hi - INV_PHI * (hi - lo);
        let mut x2 = lo + INV_PHI * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..300 {
            if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
                break;
            }
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - INV_PHI * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + INV_PHI * (hi - lo);
                f2 = f(x2);
            }
        }
        if f1 <= f2 { x1 } else { x2 }
    }

    /// Minimizes a convex function of one variable starting from `x`,
    /// expanding a bracket until both ends are no better than `x`.
    fn line_min(f: impl Fn(f64) -> f64, x: f64, positive: bool) -> f64 {
        let fx = f(x);
        let mut w = 0.5 * (1.0 + x.abs());
        let lower = |w: f64| if positive { (x - w).max(x * 1e-9) } else { x - w };
        for _ in 0..60 {
            if f(lower(w)) >= fx && f(x + w) >= fx {
                break;
            }
            w *= 2.0;
        }
        golden_section(&f, lower(w), x + w)
    }

    fn coordinate_descent(params: &Params, x: &mut [f64; 4]) {
        let mut value = params.objective(x);
        for _ in 0..100_000 {
            for k in 0..4 {
                let base = *x;
                x[k] = line_min(
                    |t| {
                        let mut y = base;
                        y[k] = t;
                        params.objective(&y)
                    },
                    base[k],
                    k >= 2,
                );
            }
            let next = params.objective(x);
            let change = value - next;
            value = next;
            if change.abs() < 1e-12 {
                break;
            }
        }
    }

    fn newton_polish(params: &Params, x: &mut [f64; 4]) {
        let h: Vec<f64> = x.iter().map(|v| 1e-4 * (1.0 + v.abs())).collect();
        let f = |y: &[f64; 4]| params.objective(y);
        let at = |i: usize, si: f64, j: usize, sj: f64| {
            let mut y = *x;
            y[i] += si * h[i];
            y[j] += sj * h[j];
            f(&y)
        };
        let f0 = f(x);
        let mut grad = nalgebra::Vector4::zeros();
        let mut hess = nalgebra::Matrix4::zeros();
        for i in 0..4 {
            let mut yp = *x;
            yp[i] += h[i];
            let mut ym = *x;
            ym[i] -= h[i];
            let (fp, fm) = (f(&yp), f(&ym));
            grad[i] = (fp - fm) / (2.0 * h[i]);
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
            for j in 0..i {
                let v = (at(i, 1.0, j, 1.0) - at(i, 1.0, j, -1.0) - at(i, -1.0, j, 1.0) + at(i, -1.0, j, -1.0))
                    / (4.0 * h[i] * h[j]);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        if let Some(chol) = hess.cholesky() {
            let step = chol.solve(&grad);
            let candidate = [x[0] - step[0], x[1] - step[1], x[2] - step[2], x[3] - step[3]];
            if f(&candidate) < f0 {
                *x = candidate;
            }
        }
    }

    /// Minimizer `(u, v, P, Q)` and the minimum of `A`.
    pub fn minimize(prob: &UotProblem) -> ([f64; 4], f64) {
        let params = Params::from(prob);
        let mut x = [params.m0, params.m1, params.var0, params.var1];
        coordinate_descent(&params, &mut x);
        newton_polish(&params, &mut x);
        (x, params.objective(&x))
    }

    pub fn value(prob: &UotProblem) -> f64 {
        let (_, a_min) = minimize(prob);
        let (a, b) = (prob.alpha.mass(), prob.beta.mass());
        let (t0, t1) = (prob.tau0, prob.tau1);
        let m = ((t0 * a.ln() + t1 * b.ln() - a_min) / (t0 + t1)).exp();
        t0 * a + t1 * b - (t0 + t1) * m
    }
}

/// One instance of the reduction corpus: a 1-D problem and a two-component
/// mixture for each side.
pub struct MixtureCase {
    pub problem: UotProblem,
    pub p: Mixture1D,
    pub q: Mixture1D,
}

fn random_mixture(rng: &mut impl Rng) -> Mixture1D {
    let w = rng.random_range(0.1..0.9);
    let mut component = |weight: f64| MixtureComponent {
        weight,
        mean: rng.random_range(-3.0..3.0),
        std: rng.random_range(0.3..1.5),
    };
    let first = component(w);
    let second = component(1.0 - w);
    Mixture1D::new(vec![first, second]).unwrap()
}

/// The fixed 25-instance corpus used for the reduction inequality.
pub fn mixture_corpus() -> Vec<MixtureCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..25)
        .map(|_| {
            let problem = random_problem_1d(&mut rng);
            let p = random_mixture(&mut rng);
            let q = random_mixture(&mut rng);
            MixtureCase { problem, p, q }
        })
        .collect()
}
