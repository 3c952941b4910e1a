//! Accelerated hybrid stochastic solver for the x-subproblem
//!
//! ```text
//! Phi(x) = h(x) + phi(x)
//! h(x)   = f(x) + (beta w1 / 2) ||x - x_k||^2
//! phi(x) = p^T x + (beta / 2) ||x - x_k||^2_{A^T A}
//! p      = -A^T (lambda_k - beta (A x_k + B y_{k+1} - b))
//! ```
//!
//! Each inner step mixes an anchor point with momentum weight `beta_t`,
//! estimates `grad h` with the hybrid estimator and takes an exact proximal
//! step on the quadratic `phi`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::constraint::ConstraintSystem;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorState};
use crate::objective::FiniteSum;

/// How the hybrid weight `alpha` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    /// `alpha = 1 - c1 / sqrt(M (m + 1))`
    FromSchedule,
    Fixed(f64),
}

/// How the proximal weight `gamma_t` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaRule {
    /// `beta_t ((mu + 2 g(alpha)) / (2 tau - tau^2) - mu) (t + 1) / t`
    FromSchedule,
    /// `beta_t * Lambda * (t + 1) / t`, for the extremes `alpha = 0`, where
    /// `g(alpha)` vanishes, and `alpha = 1`, where it is infinite.
    Curvature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerOutput {
    Last,
    /// Anchor `x_hat_i` at a uniformly drawn `i` in `1..=m+1`.
    UniformAnchor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerConfig {
    /// Inner steps run for `t = 0..=m`.
    pub m: usize,
    /// Batch size `M` of the starting estimate.
    pub batch_m: usize,
    /// Samples per draw of `xi_t` and of `zeta_t`.
    pub pair_batch: usize,
    pub c1: f64,
    pub tau: f64,
    pub l3: f64,
    pub mu: f64,
    /// Upper curvature bound of `h`; `None` means `L + beta w1`.
    pub lambda_bound: Option<f64>,
    /// `false` pins `beta_t = 1` (no momentum).
    pub momentum: bool,
    pub alpha: AlphaRule,
    pub gamma: GammaRule,
    pub output: InnerOutput,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            m: 10,
            batch_m: 1,
            pair_batch: 1,
            c1: 1.0,
            tau: 0.8,
            l3: 8.0,
            mu: 0.0,
            lambda_bound: None,
            momentum: true,
            alpha: AlphaRule::FromSchedule,
            gamma: GammaRule::FromSchedule,
            output: InnerOutput::Last,
        }
    }
}

/// `max(2 / (t + 1), tau)`
pub fn beta_schedule(t: usize, tau: f64) -> f64 {
    (2.0 / (t as f64 + 1.0)).max(tau)
}

/// `alpha Lambda sqrt(2 l3 / (1 - alpha^2))`
pub fn g_of_alpha(alpha: f64, lambda: f64, l3: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("g(alpha) needs alpha in [0, 1), got {alpha}")));
    }
    Ok(alpha * lambda * (2.0 * l3 / (1.0 - alpha * alpha)).sqrt())
}

/// `beta_t ((mu + 2 g) / (2 tau - tau^2) - mu) (t + 1) / t` for `t >= 1`.
pub fn gamma_schedule(t: usize, beta_t: f64, mu: f64, g_alpha: f64, tau: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::Domain("gamma_t is defined for t >= 1".into()));
    }
    let denom = 2.0 * tau - tau * tau;
    if denom == 0.0 {
        return Err(Error::Domain(format!("tau (2 - tau) vanishes for tau = {tau}")));
    }
    let t = t as f64;
    Ok(beta_t * ((mu + 2.0 * g_alpha) / denom - mu) * (t + 1.0) / t)
}

/// Constants derived from an [`InnerConfig`] for one subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSchedule {
    pub m: usize,
    pub batch_m: usize,
    pub pair_batch: usize,
    pub tau: f64,
    pub mu: f64,
    pub lambda_bound: f64,
    pub alpha: f64,
    pub g_alpha: f64,
    pub momentum: bool,
    pub gamma_rule: GammaRule,
    pub output: InnerOutput,
}

impl InnerSchedule {
    pub fn new(config: &InnerConfig, lambda_bound: f64) -> Result<Self> {
        if !(config.tau > 0.0 && config.tau < 1.0) {
            return Err(Error::Config(format!("momentum tau {} outside (0, 1)", config.tau)));
        }
        if !(config.mu >= 0.0 && config.mu <= lambda_bound) {
            return Err(Error::Config(format!(
                "need 0 <= mu <= Lambda (mu = {}, Lambda = {lambda_bound})",
                config.mu
            )));
        }
        if config.batch_m == 0 || config.pair_batch == 0 {
            return Err(Error::Config("inner batch sizes must be >= 1".into()));
        }
        let alpha = match config.alpha {
            AlphaRule::FromSchedule => {
                let root = ((config.batch_m * (config.m + 1)) as f64).sqrt();
                if !(config.c1 > 0.0 && config.c1 < root) {
                    return Err(Error::Config(format!(
                        "c1 = {} must lie in (0, sqrt(M (m + 1)) = {root})",
                        config.c1
                    )));
                }
                1.0 - config.c1 / root
            }
            AlphaRule::Fixed(a) => a,
        };
        // alpha = 1 (pure SARAH) only makes sense when gamma does not need g(alpha)
        let alpha_max_ok = alpha < 1.0 || (alpha == 1.0 && config.gamma == GammaRule::Curvature);
        if !(alpha >= 0.0 && alpha_max_ok) {
            return Err(Error::Config(format!("alpha = {alpha} outside [0, 1)")));
        }
        let g_alpha = if alpha < 1.0 {
            g_of_alpha(alpha, lambda_bound, config.l3)?
        } else {
            f64::INFINITY
        };
        if config.gamma == GammaRule::FromSchedule && config.mu == 0.0 && g_alpha == 0.0 {
            return Err(Error::Config(
                "gamma_t vanishes for alpha = 0 and mu = 0; use the curvature rule".into(),
            ));
        }
        Ok(InnerSchedule {
            m: config.m,
            batch_m: config.batch_m,
            pair_batch: config.pair_batch,
            tau: config.tau,
            mu: config.mu,
            lambda_bound,
            alpha,
            g_alpha,
            momentum: config.momentum,
            gamma_rule: config.gamma,
            output: config.output,
        })
    }

    pub fn beta_t(&self, t: usize) -> f64 {
        if self.momentum {
            beta_schedule(t, self.tau)
        } else {
            1.0
        }
    }

    /// `gamma_t`, with `gamma_0` taken equal to `gamma_1`.
    pub fn gamma_t(&self, t: usize) -> f64 {
        let t = t.max(1);
        let beta_t = self.beta_t(t);
        match self.gamma_rule {
            GammaRule::FromSchedule => gamma_schedule(t, beta_t, self.mu, self.g_alpha, self.tau)
                .expect("tau validated in (0, 1)"),
            GammaRule::Curvature => beta_t * self.lambda_bound * (t as f64 + 1.0) / t as f64,
        }
    }

    /// Per-sample gradients spent on one subproblem.
    pub fn cost(&self) -> u64 {
        let pair = self.pair_batch as u64;
        let per_step = if self.alpha == 0.0 {
            pair
        } else if self.alpha == 1.0 {
            2 * pair
        } else {
            3 * pair
        };
        self.batch_m as u64 + self.m as u64 * per_step
    }

    pub fn estimator_kind(&self) -> EstimatorKind {
        EstimatorKind::Hybrid {
            alpha: self.alpha,
            pair_batch: self.pair_batch,
        }
    }
}

/// Solves `(gamma I + beta A^T A) x = r` for any `gamma > 0` from one
/// eigendecomposition of `A^T A`.
#[derive(Debug, Clone)]
pub struct ShiftedSolver {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
    beta: f64,
}

impl ShiftedSolver {
    pub fn new(a: &DMatrix<f64>, beta: f64) -> Self {
        let eig = SymmetricEigen::new(a.transpose() * a);
        ShiftedSolver {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues.map(|e| e.max(0.0)),
            beta,
        }
    }

    pub fn solve(&self, gamma: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if !(gamma > 0.0) {
            return Err(Error::LinearSolve(format!("gamma = {gamma} must be positive")));
        }
        let mut coeffs = self.vectors.tr_mul(rhs);
        for (c, e) in coeffs.iter_mut().zip(self.values.iter()) {
            *c /= gamma + self.beta * e;
        }
        Ok(&self.vectors * coeffs)
    }
}

/// The x-subproblem at outer iteration `k`.
#[derive(Debug, Clone)]
pub struct InnerProblem {
    pub anchor: DVector<f64>,
    pub p: DVector<f64>,
    pub beta: f64,
    pub w1: f64,
    /// `beta A^T A`
    pub curvature: DMatrix<f64>,
}

impl InnerProblem {
    pub fn new(
        x_k: &DVector<f64>,
        y_next: &DVector<f64>,
        lambda_k: &DVector<f64>,
        constraint: &ConstraintSystem,
        beta: f64,
        w1: f64,
    ) -> Self {
        let a = constraint.a();
        let r = constraint.residual(x_k, y_next);
        let p = -(a.tr_mul(&(lambda_k - r * beta)));
        InnerProblem {
            anchor: x_k.clone(),
            p,
            beta,
            w1,
            curvature: a.tr_mul(a) * beta,
        }
    }

    pub fn grad_phi(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p + &self.curvature * (x - &self.anchor)
    }

    pub fn phi(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.anchor;
        self.p.dot(x) + 0.5 * d.dot(&(&self.curvature * &d))
    }

    /// `beta w1 (x - x_k)`
    pub fn prox_term_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.anchor) * (self.beta * self.w1)
    }

    pub fn grad_h(&self, obj: &dyn FiniteSum, x: &DVector<f64>) -> DVector<f64> {
        obj.full_grad(x) + self.prox_term_grad(x)
    }

    pub fn grad_phi_total(&self, obj: &dyn FiniteSum, x: &DVector<f64>) -> DVector<f64> {
        self.grad_h(obj, x) + self.grad_phi(x)
    }

    pub fn value(&self, obj: &dyn FiniteSum, x: &DVector<f64>) -> f64 {
        obj.full_value(x) + 0.5 * self.beta * self.w1 * (x - &self.anchor).norm_squared() + self.phi(x)
    }
}

/// `argmin <v, x> + (gamma/2)||x - x_breve||^2 + phi(x)`, i.e. the solution of
/// `(gamma I + beta A^T A) x = gamma x_breve - v - p + beta A^T A x_k`.
pub fn inner_prox_step(
    v_tilde: &DVector<f64>,
    x_breve: &DVector<f64>,
    gamma: f64,
    problem: &InnerProblem,
    solver: &ShiftedSolver,
) -> Result<DVector<f64>> {
    let rhs = x_breve * gamma - v_tilde - &problem.p + &problem.curvature * &problem.anchor;
    solver.solve(gamma, &rhs)
}

/// Everything computed in one inner step, for observers.
#[derive(Debug, Clone)]
pub struct InnerStep {
    pub t: usize,
    pub beta_t: f64,
    pub gamma_t: f64,
    /// `x_t`
    pub x: DVector<f64>,
    /// `x_breve_t`
    pub x_breve: DVector<f64>,
    /// `x_hat_t`
    pub x_hat: DVector<f64>,
    /// `v_tilde_t`, the estimate of `grad h(x_hat_t)`
    pub v_tilde: DVector<f64>,
    /// hybrid estimate of `grad f(x_hat_t)` alone
    pub v_f: DVector<f64>,
    pub x_breve_next: DVector<f64>,
    pub x_next: DVector<f64>,
}

/// Runs `t = 0..=m` inner steps starting from `x_hat_0 = x_breve_0 = x_0 = x_k`.
///
/// `estimator` must be a hybrid estimator; it is restarted at `x_k` with a
/// batch-`M` gradient. `rng` is only used for the uniform output index.
pub fn solve_x_subproblem(
    obj: &dyn FiniteSum,
    problem: &InnerProblem,
    schedule: &InnerSchedule,
    estimator: &mut EstimatorState,
    solver: &ShiftedSolver,
    rng: &mut ChaCha8Rng,
    mut observer: Option<&mut dyn FnMut(&InnerStep)>,
) -> Result<DVector<f64>> {
    if !matches!(estimator.kind(), EstimatorKind::Hybrid { .. }) {
        return Err(Error::State("inner solver needs a hybrid estimator".into()));
    }
    let pick = match schedule.output {
        InnerOutput::Last => None,
        InnerOutput::UniformAnchor => Some(rng.random_range(1..=schedule.m + 1)),
    };

    let mut x = problem.anchor.clone();
    let mut x_breve = problem.anchor.clone();
    for t in 0..=schedule.m {
        let beta_t = schedule.beta_t(t);
        let gamma_t = schedule.gamma_t(t);
        let x_hat = &x_breve * beta_t + &x * (1.0 - beta_t);
        if pick == Some(t) {
            return Ok(x_hat);
        }
        let v_f = if t == 0 {
            estimator.init_hybrid(obj, &x_hat)
        } else {
            estimator.hybrid_estimate(obj, &x_hat)?
        };
        let v_tilde = &v_f + problem.prox_term_grad(&x_hat);
        let x_breve_next = inner_prox_step(&v_tilde, &x_breve, gamma_t, problem, solver)?;
        let x_next = &x_breve_next * beta_t + &x * (1.0 - beta_t);
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: t,
                reason: "non-finite inner iterate".into(),
            });
        }
        if let Some(obs) = observer.as_mut() {
            obs(&InnerStep {
                t,
                beta_t,
                gamma_t,
                x: x.clone(),
                x_breve: x_breve.clone(),
                x_hat: x_hat.clone(),
                v_tilde: v_tilde.clone(),
                v_f,
                x_breve_next: x_breve_next.clone(),
                x_next: x_next.clone(),
            });
        }
        x = x_next;
        x_breve = x_breve_next;
    }
    if pick.is_some() {
        // i = m + 1
        let beta = schedule.beta_t(schedule.m + 1);
        return Ok(&x_breve * beta + &x * (1.0 - beta));
    }
    Ok(x)
}
