//! Synthetic binary classification data with a planted separator.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sadmm_core::data::{Dataset, SparseRow};
use sadmm_core::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureKind {
    /// i.i.d. `N(0, 1/d)` entries.
    #[default]
    Gaussian,
    /// Normalized random walks, giving strongly correlated neighbouring
    /// coordinates.
    RandomWalk,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub planted: DVector<f64>,
}

/// Labels are `sign(a^T w* + noise * e)` with `e ~ N(0, 1)`; ties go to `+1`.
pub fn synth_data(n: usize, d: usize, seed: u64, noise: f64, features: FeatureKind) -> Result<Synthetic> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let scale = 1.0 / (d as f64).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut a: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
        if features == FeatureKind::RandomWalk {
            let mut acc = 0.0;
            for v in a.iter_mut() {
                acc += *v;
                *v = acc * scale;
            }
        }
        let margin: f64 = a.iter().zip(planted.iter()).map(|(u, w)| u * w).sum();
        let e: f64 = rng.sample(StandardNormal);
        labels.push(if margin + noise * e >= 0.0 { 1.0 } else { -1.0 });
        rows.push(SparseRow::from_dense(&a));
    }
    Ok(Synthetic {
        dataset: Dataset::new(d, rows, labels)?,
        planted,
    })
}

/// Fraction of samples with `sign(a_i^T x) = b_i`. A zero score is a miss.
pub fn accuracy(dataset: &Dataset, x: &DVector<f64>) -> f64 {
    let n = dataset.n_samples();
    if n == 0 {
        return 0.0;
    }
    let hits = dataset
        .rows()
        .iter()
        .zip(dataset.labels())
        .filter(|(row, &b)| {
            let u = row.dot(x);
            u != 0.0 && u.signum() == b
        })
        .count();
    hits as f64 / n as f64
}
