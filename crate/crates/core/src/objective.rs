//! Smooth finite-sum objectives `f(x) = (1/N) sum_i f_i(x)`.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Maximum of `|d^2/du^2 1/(1+e^u)|` over the real line, `1/(6*sqrt(3))`.
///
/// Checked against [`sigmoid_curvature_numeric`] in the tests.
pub const SIGMOID_CURVATURE: f64 = 0.096_225_044_864_937_63;

/// A finite sum whose per-sample gradients can be evaluated one at a time.
///
/// Every sum is reduced in index order so repeated evaluations are
/// bit-identical.
pub trait FiniteSum: Send + Sync {
    fn n_samples(&self) -> usize;

    fn dim(&self) -> usize;

    fn sample_value(&self, i: usize, x: &DVector<f64>) -> f64;

    /// `out += scale * grad f_i(x)`
    fn add_sample_grad(&self, i: usize, x: &DVector<f64>, scale: f64, out: &mut DVector<f64>);

    /// Lipschitz constant shared by every `grad f_i` (and therefore by `grad f`).
    fn lipschitz(&self) -> f64;

    fn value(&self, x: &DVector<f64>, index_set: &[usize]) -> Result<f64> {
        if index_set.is_empty() {
            return Err(Error::Domain("empty index set".into()));
        }
        let sum: f64 = index_set.iter().map(|&i| self.sample_value(i, x)).sum();
        Ok(sum / index_set.len() as f64)
    }

    fn grad(&self, x: &DVector<f64>, index_set: &[usize]) -> Result<DVector<f64>> {
        if index_set.is_empty() {
            return Err(Error::Domain("empty index set".into()));
        }
        let mut out = DVector::zeros(self.dim());
        let w = 1.0 / index_set.len() as f64;
        for &i in index_set {
            self.add_sample_grad(i, x, w, &mut out);
        }
        Ok(out)
    }

    fn sample_grad(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.add_sample_grad(i, x, 1.0, &mut out);
        out
    }

    fn full_value(&self, x: &DVector<f64>) -> f64 {
        let n = self.n_samples();
        (0..n).map(|i| self.sample_value(i, x)).sum::<f64>() / n as f64
    }

    fn full_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n_samples();
        let mut out = DVector::zeros(self.dim());
        let w = 1.0 / n as f64;
        for i in 0..n {
            self.add_sample_grad(i, x, w, &mut out);
        }
        out
    }
}

/// Nonconvex sigmoid loss `f_i(x) = 1 / (1 + exp(b_i a_i^T x))`.
#[derive(Debug, Clone)]
pub struct SigmoidLoss {
    dataset: Dataset,
    lipschitz: f64,
}

impl SigmoidLoss {
    pub fn new(dataset: Dataset) -> Self {
        let lipschitz = estimate_lipschitz(&dataset);
        SigmoidLoss { dataset, lipschitz }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    fn margin(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.dataset.label(i) * self.dataset.row(i).dot(x)
    }
}

/// `1/(1+e^u)` without overflow.
pub fn sigmoid_value(u: f64) -> f64 {
    if u >= 0.0 {
        let e = (-u).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + u.exp())
    }
}

/// `d/du 1/(1+e^u) = -e^u/(1+e^u)^2`, evaluated through `e^{-|u|}`.
pub fn sigmoid_slope(u: f64) -> f64 {
    let e = (-u.abs()).exp();
    -e / ((1.0 + e) * (1.0 + e))
}

/// `d^2/du^2 1/(1+e^u)`.
pub fn sigmoid_curvature(u: f64) -> f64 {
    // 1/(1+e^u) = 1 - s(u) with s the logistic function; s'' = s(1-s)(1-2s).
    let s = 1.0 - sigmoid_value(u);
    -s * (1.0 - s) * (1.0 - 2.0 * s)
}

/// Golden-section maximization of `|sigmoid_curvature|` on `[-10, 10]`.
/// The curvature is odd, so the search runs on `[0, 10]`.
pub fn sigmoid_curvature_numeric() -> f64 {
    let objective = |u: f64| sigmoid_curvature(u).abs();
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    while hi - lo > 1e-10 {
        if objective(c) > objective(d) {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - phi * (hi - lo);
        d = lo + phi * (hi - lo);
    }
    objective(0.5 * (lo + hi))
}

/// `c_sig * max_i ||a_i||^2`.
pub fn estimate_lipschitz(dataset: &Dataset) -> f64 {
    let max_sq = dataset
        .rows()
        .iter()
        .map(|r| r.norm_squared())
        .fold(0.0, f64::max);
    SIGMOID_CURVATURE * max_sq
}

impl FiniteSum for SigmoidLoss {
    fn n_samples(&self) -> usize {
        self.dataset.n_samples()
    }

    fn dim(&self) -> usize {
        self.dataset.n_features()
    }

    fn sample_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        sigmoid_value(self.margin(i, x))
    }

    fn add_sample_grad(&self, i: usize, x: &DVector<f64>, scale: f64, out: &mut DVector<f64>) {
        let u = self.margin(i, x);
        let coef = scale * sigmoid_slope(u) * self.dataset.label(i);
        if coef != 0.0 {
            self.dataset.row(i).axpy(coef, out);
        }
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Least-squares finite sum `f_i(x) = 0.5 (a_i^T x - t_i)^2`, used as a
/// convex test bed with exactly known curvature.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    rows: DMatrix<f64>,
    targets: DVector<f64>,
    lipschitz: f64,
}

impl LeastSquares {
    pub fn new(rows: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if rows.nrows() != targets.len() || rows.nrows() == 0 {
            return Err(Error::Dataset("rows/targets mismatch or empty".into()));
        }
        let lipschitz = rows
            .row_iter()
            .map(|r| r.norm_squared())
            .fold(0.0, f64::max);
        Ok(LeastSquares {
            rows,
            targets,
            lipschitz,
        })
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    /// Hessian of the full sum, `(1/N) A^T A`.
    pub fn hessian(&self) -> DMatrix<f64> {
        self.rows.transpose() * &self.rows / self.rows.nrows() as f64
    }
}

impl FiniteSum for LeastSquares {
    fn n_samples(&self) -> usize {
        self.rows.nrows()
    }

    fn dim(&self) -> usize {
        self.rows.ncols()
    }

    fn sample_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        let r = self.rows.row(i).dot(&x.transpose()) - self.targets[i];
        0.5 * r * r
    }

    fn add_sample_grad(&self, i: usize, x: &DVector<f64>, scale: f64, out: &mut DVector<f64>) {
        let row = self.rows.row(i);
        let r = row.dot(&x.transpose()) - self.targets[i];
        for (o, a) in out.iter_mut().zip(row.iter()) {
            *o += scale * r * a;
        }
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}
