//! Stochastic gradient estimators for a finite sum: minibatch SGD, SVRG,
//! SPIDER/SARAH and the hybrid SARAH/SGD estimator.
//!
//! Every estimator owns a seeded ChaCha stream, so a fixed seed and a fixed
//! sequence of query points reproduce the outputs bit for bit. Batches are
//! drawn without replacement and summed in ascending index order.

use nalgebra::DVector;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::objective::FiniteSum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    Sgd,
    Svrg,
    /// Full gradient every `restart_q` calls, recursive differences otherwise.
    Spider { restart_q: usize },
    /// `alpha * (v_prev + grad(x; xi) - grad(x_prev; xi)) + (1 - alpha) * grad(x; zeta)`
    /// with `xi`, `zeta` independent batches of `pair_batch` samples.
    Hybrid { alpha: f64, pair_batch: usize },
}

#[derive(Debug, Clone)]
pub struct EstimatorState {
    kind: EstimatorKind,
    batch: usize,
    n_samples: usize,
    rng: ChaCha8Rng,
    snapshot_x: Option<DVector<f64>>,
    snapshot_grad: Option<DVector<f64>>,
    carried_v: Option<DVector<f64>>,
    prev_point: Option<DVector<f64>>,
    calls: usize,
    grad_calls: u64,
}

/// The hybrid update written out once, shared by the estimator and the
/// enumeration probes.
pub fn hybrid_combine(
    alpha: f64,
    carried: &DVector<f64>,
    grad_new_xi: &DVector<f64>,
    grad_old_xi: &DVector<f64>,
    grad_zeta: &DVector<f64>,
) -> DVector<f64> {
    if alpha == 0.0 {
        grad_zeta.clone()
    } else if alpha == 1.0 {
        carried + (grad_new_xi - grad_old_xi)
    } else {
        (carried + (grad_new_xi - grad_old_xi)) * alpha + grad_zeta * (1.0 - alpha)
    }
}

impl EstimatorState {
    pub fn new(kind: EstimatorKind, batch: usize, n_samples: usize, seed: u64) -> Result<Self> {
        if batch == 0 || batch > n_samples {
            return Err(Error::Config(format!(
                "batch size {batch} must lie in [1, {n_samples}]"
            )));
        }
        match kind {
            EstimatorKind::Spider { restart_q } if restart_q == 0 => {
                return Err(Error::Config("SPIDER restart period must be >= 1".into()))
            }
            EstimatorKind::Hybrid { alpha, pair_batch } => {
                check_alpha(alpha)?;
                if pair_batch == 0 || pair_batch > n_samples {
                    return Err(Error::Config(format!(
                        "pair batch {pair_batch} must lie in [1, {n_samples}]"
                    )));
                }
            }
            _ => {}
        }
        Ok(EstimatorState {
            kind,
            batch,
            n_samples,
            rng: ChaCha8Rng::seed_from_u64(seed),
            snapshot_x: None,
            snapshot_grad: None,
            carried_v: None,
            prev_point: None,
            calls: 0,
            grad_calls: 0,
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Per-sample gradient evaluations so far.
    pub fn grad_calls(&self) -> u64 {
        self.grad_calls
    }

    /// Number of `estimate`-style calls served.
    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn carried(&self) -> Option<&DVector<f64>> {
        self.carried_v.as_ref()
    }

    pub fn prev_point(&self) -> Option<&DVector<f64>> {
        self.prev_point.as_ref()
    }

    pub fn snapshot(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        self.snapshot_x.as_ref().zip(self.snapshot_grad.as_ref())
    }

    /// SVRG refresh period `ceil(N / M)`.
    pub fn epoch_length(&self) -> usize {
        self.n_samples.div_ceil(self.batch)
    }

    pub fn set_alpha(&mut self, new_alpha: f64) -> Result<()> {
        check_alpha(new_alpha)?;
        if let EstimatorKind::Hybrid { alpha, .. } = &mut self.kind {
            *alpha = new_alpha;
            Ok(())
        } else {
            Err(Error::State("alpha only applies to the hybrid estimator".into()))
        }
    }

    /// Sorted batch of `m` distinct indices.
    pub fn draw_batch(&mut self, m: usize) -> Vec<usize> {
        let mut idx = index::sample(&mut self.rng, self.n_samples, m).into_vec();
        idx.sort_unstable();
        idx
    }

    fn batch_grad(&mut self, obj: &dyn FiniteSum, x: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
        self.grad_calls += idx.len() as u64;
        obj.grad(x, idx).expect("batches are nonempty")
    }

    fn full_grad(&mut self, obj: &dyn FiniteSum, x: &DVector<f64>) -> DVector<f64> {
        self.grad_calls += self.n_samples as u64;
        obj.full_grad(x)
    }

    /// Cost in per-sample gradients of the next `estimate` call.
    pub fn next_cost(&self) -> u64 {
        let n = self.n_samples as u64;
        let m = self.batch as u64;
        match self.kind {
            EstimatorKind::Sgd => m,
            EstimatorKind::Svrg => {
                if self.snapshot_x.is_none() || (self.calls > 0 && self.calls % self.epoch_length() == 0) {
                    n + 2 * m
                } else {
                    2 * m
                }
            }
            EstimatorKind::Spider { restart_q } => {
                if self.calls % restart_q == 0 {
                    n
                } else {
                    2 * m
                }
            }
            EstimatorKind::Hybrid { alpha, pair_batch } => {
                if self.carried_v.is_none() {
                    m
                } else {
                    hybrid_cost(alpha, pair_batch as u64)
                }
            }
        }
    }

    /// Mean of `grad f_i(x)` over `M` indices drawn without replacement.
    pub fn sgd_estimate(&mut self, obj: &dyn FiniteSum, x: &DVector<f64>) -> DVector<f64> {
        self.calls += 1;
        let idx = self.draw_batch(self.batch);
        self.batch_grad(obj, x, &idx)
    }

    /// Takes a snapshot at `x`: stores `x` and the full gradient there.
    pub fn init_snapshot(&mut self, obj: &dyn FiniteSum, x: &DVector<f64>) {
        let g = self.full_grad(obj, x);
        self.snapshot_x = Some(x.clone());
        self.snapshot_grad = Some(g);
    }

    /// `grad f(x; xi) - grad f(x_snap; xi) + grad f(x_snap)`; the snapshot
    /// moves to `x` at call indices `ceil(N/M)`, `2 ceil(N/M)`, ...
    pub fn svrg_estimate(&mut self, obj: &dyn FiniteSum, x: &DVector<f64>) -> Result<DVector<f64>> {
        if self.snapshot_x.is_none() {
            return Err(Error::State("SVRG snapshot not initialized".into()));
        }
        if self.calls > 0 && self.calls % self.epoch_length() == 0 {
            self.init_snapshot(obj, x);
        }
        self.calls += 1;
        let idx = self.draw_batch(self.batch);
        let snap_x = self.snapshot_x.clone().unwrap();
        let g_new = self.batch_grad(obj, x, &idx);
        let g_old = self.batch_grad(obj, &snap_x, &idx);
        Ok(g_new - g_old + self.snapshot_grad.as_ref().unwrap())
    }

    /// Full gradient when `call mod q == 0`, otherwise
    /// `grad f(x; xi) - grad f(x_prev; xi) + v_prev`.
    pub fn spider_estimate(&mut self, obj: &dyn FiniteSum, x: &DVector<f64>) -> DVector<f64> {
        let restart_q = match self.kind {
            EstimatorKind::Spider { restart_q } => restart_q,
            _ => 1,
        };
        let restart = self.calls % restart_q == 0 || self.carried_v.is_none();
        self.calls += 1;
        let v = if restart {
            self.full_grad(obj, x)
        } else {
            let idx = self.draw_batch(self.batch);
            let prev = self.prev_point.clone().unwrap();
            let g_new = self.batch_grad(obj, x, &idx);
            let g_old = self.batch_grad(obj, &prev, &idx);
            g_new - g_old + self.carried_v.as_ref().unwrap()
        };
        self.carried_v = Some(v.clone());
        self.prev_point = Some(x.clone());
        v
    }

    /// Starts a hybrid recursion at `x0` with a batch-`M` gradient.
    pub fn init_hybrid(&mut self, obj: &dyn FiniteSum, x0: &DVector<f64>) -> DVector<f64> {
        let idx = self.draw_batch(self.batch);
        let v0 = self.batch_grad(obj, x0, &idx);
        self.carried_v = Some(v0.clone());
        self.prev_point = Some(x0.clone());
        v0
    }

    /// One hybrid step at `x_hat`. Draws `xi` then `zeta`; gradients that the
    /// extreme weights multiply by zero are not evaluated (or counted).
    pub fn hybrid_estimate(&mut self, obj: &dyn FiniteSum, x_hat: &DVector<f64>) -> Result<DVector<f64>> {
        let EstimatorKind::Hybrid { alpha, pair_batch } = self.kind else {
            return Err(Error::State("hybrid_estimate on a non-hybrid estimator".into()));
        };
        check_alpha(alpha)?;
        let (Some(carried), Some(prev)) = (self.carried_v.take(), self.prev_point.take()) else {
            return Err(Error::State("hybrid recursion not initialized".into()));
        };
        self.calls += 1;
        let xi = self.draw_batch(pair_batch);
        let zeta = self.draw_batch(pair_batch);
        let zero = DVector::zeros(x_hat.len());
        let (g_new, g_old) = if alpha != 0.0 {
            (self.batch_grad(obj, x_hat, &xi), self.batch_grad(obj, &prev, &xi))
        } else {
            (zero.clone(), zero.clone())
        };
        let g_zeta = if alpha != 1.0 {
            self.batch_grad(obj, x_hat, &zeta)
        } else {
            zero
        };
        let v = hybrid_combine(alpha, &carried, &g_new, &g_old, &g_zeta);
        self.carried_v = Some(v.clone());
        self.prev_point = Some(x_hat.clone());
        Ok(v)
    }

    /// Dispatches on the estimator kind. SVRG takes its first snapshot and
    /// the hybrid estimator its batch-`M` start on the first call.
    pub fn estimate(&mut self, obj: &dyn FiniteSum, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self.kind {
            EstimatorKind::Sgd => Ok(self.sgd_estimate(obj, x)),
            EstimatorKind::Svrg => {
                if self.snapshot_x.is_none() {
                    self.init_snapshot(obj, x);
                }
                self.svrg_estimate(obj, x)
            }
            EstimatorKind::Spider { .. } => Ok(self.spider_estimate(obj, x)),
            EstimatorKind::Hybrid { .. } => {
                if self.carried_v.is_none() {
                    self.calls += 1;
                    Ok(self.init_hybrid(obj, x))
                } else {
                    self.hybrid_estimate(obj, x)
                }
            }
        }
    }
}

fn hybrid_cost(alpha: f64, pair: u64) -> u64 {
    if alpha == 0.0 {
        pair
    } else if alpha == 1.0 {
        2 * pair
    } else {
        3 * pair
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("hybrid alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}
