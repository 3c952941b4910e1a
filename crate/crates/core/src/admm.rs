//! The unified inexact stochastic ADMM outer loop.
//!
//! Solves `min f(x) + g(y)` subject to `A x + B y = b` through the augmented
//! Lagrangian
//!
//! ```text
//! L_beta(x, y, lambda) = f(x) + g(y) - <lambda, r> + (beta/2) ||r||^2,   r = A x + B y - b
//! ```
//!
//! Each iteration updates `y` (proximal, weight `w2`), then `x` (a linearized
//! step with a stochastic gradient, or the accelerated inner solver), then the
//! dual variable with stepsize `s * beta`, `s` in `(0, 2)`.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::constraint::{BMatrix, ConstraintSystem};
use crate::diagnostics::{stationarity, xi_x_residual, StationarityReport};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorState};
use crate::inner::{solve_x_subproblem, InnerConfig, InnerProblem, InnerSchedule, ShiftedSolver};
use crate::objective::FiniteSum;
use crate::prox::{y_update, Regularizer};

/// `||x||` above which a run is declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e8;

/// Smooth loss, coupling constraint and regularizer.
#[derive(Clone)]
pub struct Problem {
    pub objective: Arc<dyn FiniteSum>,
    pub constraint: ConstraintSystem,
    pub regularizer: Regularizer,
}

impl Problem {
    pub fn new(
        objective: Arc<dyn FiniteSum>,
        constraint: ConstraintSystem,
        regularizer: Regularizer,
    ) -> Result<Self> {
        if objective.dim() != constraint.n_x() {
            return Err(Error::Config(format!(
                "loss dimension {} does not match A with {} columns",
                objective.dim(),
                constraint.n_x()
            )));
        }
        regularizer.validate()?;
        Ok(Problem {
            objective,
            constraint,
            regularizer,
        })
    }

    /// `f(x) + g(y)`
    pub fn loss(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.objective.full_value(x) + self.regularizer.value(y)
    }

    pub fn aug_lagrangian(&self, x: &DVector<f64>, y: &DVector<f64>, lambda: &DVector<f64>, beta: f64) -> f64 {
        let r = self.constraint.residual(x, y);
        self.loss(x, y) - lambda.dot(&r) + 0.5 * beta * r.norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum XUpdate {
    /// One linearized step with a stochastic gradient at `x_k`.
    Linearized { estimator: EstimatorKind, batch: usize },
    InnerAccel(InnerConfig),
}

/// Proximal weight `w1` over outer iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum W1Schedule {
    Constant,
    /// `w1_k = 1 / (beta eta_k)` with `eta_k = eta0 / (1 + decay * ceil(k / period))`.
    StepDecay { eta0: f64, decay: f64, period: usize },
}

impl W1Schedule {
    pub fn w1_at(&self, k: usize, base_w1: f64, beta: f64) -> f64 {
        match *self {
            W1Schedule::Constant => base_w1,
            W1Schedule::StepDecay { eta0, decay, period } => {
                let epochs = k.div_ceil(period.max(1)) as f64;
                1.0 / (beta * eta0 / (1.0 + decay * epochs))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub beta: f64,
    /// Dual stepsize factor in `(0, 2)`.
    pub s: f64,
    pub w1: f64,
    pub w2: f64,
    /// The `tau` of the potential function, not the inner momentum.
    pub tau_lemma: f64,
    /// Margin `w > 0` required by the feasibility check.
    pub w_margin: f64,
    /// Override for `c_x`; `None` means `sqrt(3) max(L / beta, w1)`.
    pub c_x_surrogate: Option<f64>,
    pub outer_iters: usize,
    pub x_update: XUpdate,
    pub w1_schedule: W1Schedule,
    pub seed: u64,
    /// Stationarity probes every this many iterations; 0 disables them.
    pub probe_every: usize,
    /// Stop before an iteration that would exceed this many sample gradients.
    pub grad_budget: Option<u64>,
    /// Run even when `(w1, w2)` fail the feasibility check (recorded as a warning).
    pub allow_infeasible: bool,
    pub record_wall_time: bool,
    /// Starting point; `None` draws `x0` from a standard normal.
    pub x0: Option<DVector<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            beta: 1.0,
            s: 1.0,
            w1: 1.0,
            w2: 1.0,
            tau_lemma: 0.5,
            w_margin: 1e-6,
            c_x_surrogate: None,
            outer_iters: 100,
            x_update: XUpdate::Linearized {
                estimator: EstimatorKind::Sgd,
                batch: 1,
            },
            w1_schedule: W1Schedule::Constant,
            seed: 0,
            probe_every: 10,
            grad_budget: None,
            allow_infeasible: false,
            record_wall_time: false,
            x0: None,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 2.0) {
            return Err(Error::Config(format!("dual stepsize s = {} outside (0, 2)", self.s)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta = {} must be positive", self.beta)));
        }
        if !(self.tau_lemma > 0.0 && self.tau_lemma < 1.0) {
            return Err(Error::Config(format!("tau_lemma = {} outside (0, 1)", self.tau_lemma)));
        }
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return Err(Error::Config("w1 and w2 must be nonnegative".into()));
        }
        if !(self.w_margin > 0.0) {
            return Err(Error::Config("w_margin must be positive".into()));
        }
        if let Some(c) = self.c_x_surrogate {
            if !(c > 0.0) {
                return Err(Error::Config("c_x surrogate must be positive".into()));
            }
        }
        if let W1Schedule::StepDecay { eta0, decay, .. } = self.w1_schedule {
            if !(eta0 > 0.0 && decay >= 0.0) {
                return Err(Error::Config("step decay needs eta0 > 0 and decay >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub lambda: DVector<f64>,
    pub d_x: DVector<f64>,
    pub d_y: DVector<f64>,
    pub d_lambda: DVector<f64>,
    /// `A x + B y - b`
    pub residual: DVector<f64>,
}

impl Iterate {
    /// Iterate at `(x, y, lambda)` with zero differences.
    pub fn start(x: DVector<f64>, y: DVector<f64>, lambda: DVector<f64>, constraint: &ConstraintSystem) -> Self {
        let residual = constraint.residual(&x, &y);
        Iterate {
            d_x: DVector::zeros(x.len()),
            d_y: DVector::zeros(y.len()),
            d_lambda: DVector::zeros(lambda.len()),
            x,
            y,
            lambda,
            residual,
        }
    }
}

/// `(max{1, s^2/(2-s)^2}, max{(1-s)/s, (s-1)/(2-s)})`
pub fn psi(s: f64) -> Result<(f64, f64)> {
    if !(s > 0.0 && s < 2.0) {
        return Err(Error::Domain(format!("s = {s} outside (0, 2)")));
    }
    let psi1 = (s * s / ((2.0 - s) * (2.0 - s))).max(1.0);
    let psi2 = ((1.0 - s) / s).max((s - 1.0) / (2.0 - s));
    Ok((psi1, psi2))
}

/// Constants of the potential function and the feasibility check.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialParams {
    pub a_hat: f64,
    pub b_hat: f64,
    pub psi1: f64,
    pub psi2: f64,
    /// `min{w, tau / (s beta)}`
    pub mu_floor: f64,
    pub w_margin: f64,
    pub c_x: f64,
    /// `(1 + tau) / (s beta sigma_A) * psi2`
    pub dual_weight: f64,
    pub min_w1: f64,
    pub min_w2: f64,
    pub feasible: bool,
}

/// Computes the potential constants and checks
/// `w1 >= (B_hat + A_hat + w) / (beta/2)` and `w2 >= (2 A_hat + w) / (beta/2)`.
///
/// With the default `c_x` (which grows with `w1`) the reported minimum is
/// the smallest `w1` satisfying the self-consistent inequality, or infinity
/// when no `w1` does at this `beta`.
pub fn potential_params(config: &SolverConfig, problem: &Problem) -> Result<PotentialParams> {
    config.check()?;
    let (psi1, psi2) = psi(config.s)?;
    let sigma = problem.constraint.sigma_a();
    if !(sigma > 0.0) {
        return Err(Error::Domain("A^T A has no positive eigenvalue".into()));
    }
    let (beta, s, tau, w) = (config.beta, config.s, config.tau_lemma, config.w_margin);
    let l = problem.objective.lipschitz();
    let k = (1.0 + tau) / (s * beta * sigma);
    let c_x = config
        .c_x_surrogate
        .unwrap_or_else(|| 3f64.sqrt() * (l / beta).max(config.w1));
    let a_hat = 4.0 * k * psi1 * c_x * c_x * beta * beta;
    let b_hat = k * psi1 * (2.0 * l * l + 4.0 * c_x * c_x * beta * beta);
    let min_w2 = (2.0 * a_hat + w) / (beta / 2.0);
    let min_w1 = match config.c_x_surrogate {
        Some(_) => (b_hat + a_hat + w) / (beta / 2.0),
        None => min_w1_default_surrogate(k * psi1, l, beta, w),
    };
    let feasible = config.w1 >= (b_hat + a_hat + w) / (beta / 2.0) && config.w2 >= min_w2;
    Ok(PotentialParams {
        a_hat,
        b_hat,
        psi1,
        psi2,
        mu_floor: w.min(tau / (s * beta)),
        w_margin: w,
        c_x,
        dual_weight: k * psi2,
        min_w1,
        min_w2,
        feasible,
    })
}

// With c_x = sqrt(3) max(L/beta, w1) the w1 condition is linear in w1 while
// w1 <= L/beta and quadratic beyond. `kp` is (1 + tau) psi1 / (s beta sigma_A).
fn min_w1_default_surrogate(kp: f64, l: f64, beta: f64, w: f64) -> f64 {
    // regime w1 <= L/beta: c_x^2 beta^2 = 3 L^2
    let flat = 2.0 * (kp * (2.0 * l * l + 12.0 * l * l) + 12.0 * kp * l * l + w) / beta;
    if flat <= l / beta {
        return flat;
    }
    // regime w1 >= L/beta: c_x^2 beta^2 = 3 w1^2 beta^2
    //   24 kp beta^2 w1^2 - (beta/2) w1 + 2 kp L^2 + w <= 0
    let qa = 24.0 * kp * beta * beta;
    let qb = -beta / 2.0;
    let qc = 2.0 * kp * l * l + w;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let lo = (-qb - disc.sqrt()) / (2.0 * qa);
    let hi = (-qb + disc.sqrt()) / (2.0 * qa);
    let cand = lo.max(l / beta);
    if cand <= hi {
        cand
    } else {
        f64::INFINITY
    }
}

/// Like [`potential_params`] but fails on infeasible `(w1, w2)`.
pub fn validate_params(config: &SolverConfig, problem: &Problem) -> Result<PotentialParams> {
    let p = potential_params(config, problem)?;
    if !p.feasible {
        return Err(Error::InfeasibleParams {
            w1: config.w1,
            w2: config.w2,
            min_w1: p.min_w1,
            min_w2: p.min_w2,
        });
    }
    Ok(p)
}

/// `L_beta(w^k) + A_hat ||d_x||^2 + A_hat ||d_y||^2 + dual_weight ||A^T d_lambda||^2`
pub fn potential(iterate: &Iterate, params: &PotentialParams, a: &DMatrix<f64>, aug_lagrangian: f64) -> f64 {
    aug_lagrangian
        + params.a_hat * (iterate.d_x.norm_squared() + iterate.d_y.norm_squared())
        + params.dual_weight * a.tr_mul(&iterate.d_lambda).norm_squared()
}

/// Cholesky factor of `w1 I + A^T A` for the linearized x-update.
pub struct XSystem {
    w1: f64,
    chol: Cholesky<f64, Dyn>,
}

impl XSystem {
    pub fn new(constraint: &ConstraintSystem, w1: f64) -> Result<Self> {
        let a = constraint.a();
        let mut m = a.tr_mul(a);
        for i in 0..m.nrows() {
            m[(i, i)] += w1;
        }
        let chol = Cholesky::new(m)
            .ok_or_else(|| Error::LinearSolve(format!("w1 I + A^T A is singular (w1 = {w1})")))?;
        Ok(XSystem { w1, chol })
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }
}

/// Minimizer of `<g, x - x_k> + (beta w1/2)||x - x_k||^2 + (beta/2)||A x + B y - b - lambda/beta||^2`.
pub fn x_update_linearized(
    x_k: &DVector<f64>,
    y_next: &DVector<f64>,
    lambda_k: &DVector<f64>,
    grad: &DVector<f64>,
    constraint: &ConstraintSystem,
    beta: f64,
    system: &XSystem,
) -> DVector<f64> {
    let shift = lambda_k / beta - constraint.b_mat().apply(y_next) + constraint.b();
    let rhs = x_k * system.w1 + constraint.a().tr_mul(&shift) - grad / beta;
    system.chol.solve(&rhs)
}

/// `lambda - s beta r`
pub fn dual_update(lambda_k: &DVector<f64>, residual: &DVector<f64>, s: f64, beta: f64) -> DVector<f64> {
    lambda_k - residual * (s * beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub loss: f64,
    pub aug_lagrangian: f64,
    pub potential: f64,
    pub residual_norm: f64,
    pub dx_norm: f64,
    pub dy_norm: f64,
    pub dlam_norm: f64,
    pub stationarity: Option<StationarityReport>,
    pub grad_calls: u64,
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub k: usize,
    pub stationarity: StationarityReport,
    pub xi_x: f64,
    pub bias_measured: Option<f64>,
    pub bias_predicted: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Iterations,
    Budget,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub probes: Vec<ProbeRecord>,
    pub initial: Iterate,
    pub initial_potential: f64,
    pub last: Iterate,
    /// Iterate at an index drawn uniformly from the completed iterations.
    pub sampled: Iterate,
    pub sampled_index: usize,
    pub params: PotentialParams,
    pub warnings: Vec<String>,
    pub grad_calls: u64,
    pub stop: StopReason,
}

enum XEngine {
    Linearized {
        estimator: EstimatorState,
        system: XSystem,
    },
    Inner {
        estimator: EstimatorState,
        config: InnerConfig,
        solver: ShiftedSolver,
    },
}

fn initial_point(config: &SolverConfig, problem: &Problem, rng: &mut ChaCha8Rng) -> Result<Iterate> {
    let c = &problem.constraint;
    let x = match &config.x0 {
        Some(x0) if x0.len() != c.n_x() => {
            return Err(Error::Config(format!("x0 has length {}, expected {}", x0.len(), c.n_x())))
        }
        Some(x0) => x0.clone(),
        None => DVector::from_fn(c.n_x(), |_, _| rng.sample::<f64, _>(StandardNormal)),
    };
    // feasible start: B y = b - A x
    let target = c.b() - c.a() * &x;
    let y = match c.b_mat() {
        BMatrix::NegIdentity => -target,
        BMatrix::Diagonal(d) => target.component_div(d),
    };
    let lambda = DVector::zeros(c.a().nrows());
    Ok(Iterate::start(x, y, lambda, c))
}

fn check_finite(it: &Iterate, k: usize) -> Result<()> {
    let finite = |v: &DVector<f64>| v.iter().all(|e| e.is_finite());
    if !(finite(&it.x) && finite(&it.y) && finite(&it.lambda)) {
        return Err(Error::Divergence {
            iteration: k,
            reason: "non-finite iterate".into(),
        });
    }
    let nx = it.x.norm();
    if nx > DIVERGENCE_BOUND {
        return Err(Error::Divergence {
            iteration: k,
            reason: format!("||x|| = {nx:.3e} exceeds {DIVERGENCE_BOUND:e}"),
        });
    }
    Ok(())
}

/// Runs the outer loop for `config.outer_iters` iterations or until the
/// gradient budget is spent.
pub fn run(problem: &Problem, config: &SolverConfig) -> Result<RunOutput> {
    run_with_observer(problem, config, &mut |_, _| {})
}

/// [`run`], calling `observer` with each trace row (and probe, when one was
/// taken) as it is produced. Rows seen before an error stay with the caller.
pub fn run_with_observer(
    problem: &Problem,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&TraceRecord, Option<&ProbeRecord>),
) -> Result<RunOutput> {
    config.check()?;
    let mut warnings: Vec<String> = problem.constraint.warnings().to_vec();
    let params = potential_params(config, problem)?;
    if !params.feasible {
        if !config.allow_infeasible {
            return Err(Error::InfeasibleParams {
                w1: config.w1,
                w2: config.w2,
                min_w1: params.min_w1,
                min_w2: params.min_w2,
            });
        }
        warnings.push(format!(
            "feasibility check overridden: w1 = {:e} (min {:e}), w2 = {:e} (min {:e})",
            config.w1, params.min_w1, config.w2, params.min_w2
        ));
    }

    let obj = problem.objective.as_ref();
    let c = &problem.constraint;
    let beta = config.beta;
    let n = obj.n_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = initial_point(config, problem, &mut rng)?;
    let estimator_seed = rng.next_u64();

    let mut w1 = config.w1_schedule.w1_at(0, config.w1, beta);
    let mut engine = match &config.x_update {
        XUpdate::Linearized { estimator, batch } => XEngine::Linearized {
            estimator: EstimatorState::new(*estimator, *batch, n, estimator_seed)?,
            system: XSystem::new(c, w1)?,
        },
        XUpdate::InnerAccel(inner) => {
            let lambda_bound = inner.lambda_bound.unwrap_or(obj.lipschitz() + beta * w1);
            let schedule = InnerSchedule::new(inner, lambda_bound)?;
            XEngine::Inner {
                estimator: EstimatorState::new(schedule.estimator_kind(), inner.batch_m, n, estimator_seed)?,
                config: inner.clone(),
                solver: ShiftedSolver::new(c.a(), beta),
            }
        }
    };

    let clock = config.record_wall_time.then(Instant::now);
    let initial_al = problem.aug_lagrangian(&start.x, &start.y, &start.lambda, beta);
    let mut it = start.clone();
    let mut sampled = start.clone();
    let mut sampled_index = 0;
    let mut trace = Vec::with_capacity(config.outer_iters);
    let mut probes = Vec::new();
    let mut grad_calls = 0u64;
    let mut stop = StopReason::Iterations;

    for k in 0..config.outer_iters {
        let w1_k = config.w1_schedule.w1_at(k, config.w1, beta);
        let cost = match &engine {
            XEngine::Linearized { estimator, .. } => estimator.next_cost(),
            XEngine::Inner { config: inner, .. } => {
                InnerSchedule::new(inner, inner.lambda_bound.unwrap_or(obj.lipschitz() + beta * w1_k))?.cost()
            }
        };
        if let Some(budget) = config.grad_budget {
            if grad_calls + cost > budget {
                stop = StopReason::Budget;
                break;
            }
        }

        let y_next = y_update(&it.y, &it.x, &it.lambda, c, &problem.regularizer, beta, config.w2)?;

        let x_next = match &mut engine {
            XEngine::Linearized { estimator, system } => {
                if w1_k != w1 {
                    *system = XSystem::new(c, w1_k)?;
                    w1 = w1_k;
                }
                let before = estimator.grad_calls();
                let g = estimator.estimate(obj, &it.x)?;
                grad_calls += estimator.grad_calls() - before;
                x_update_linearized(&it.x, &y_next, &it.lambda, &g, c, beta, system)
            }
            XEngine::Inner {
                estimator,
                config: inner,
                solver,
            } => {
                w1 = w1_k;
                let schedule =
                    InnerSchedule::new(inner, inner.lambda_bound.unwrap_or(obj.lipschitz() + beta * w1))?;
                let sub = InnerProblem::new(&it.x, &y_next, &it.lambda, c, beta, w1);
                let before = estimator.grad_calls();
                let x = solve_x_subproblem(obj, &sub, &schedule, estimator, solver, &mut rng, None)?;
                grad_calls += estimator.grad_calls() - before;
                x
            }
        };

        let residual = c.residual(&x_next, &y_next);
        let lambda_next = dual_update(&it.lambda, &residual, config.s, beta);
        let next = Iterate {
            d_x: &x_next - &it.x,
            d_y: &y_next - &it.y,
            d_lambda: -(&residual * (config.s * beta)),
            x: x_next,
            y: y_next,
            lambda: lambda_next,
            residual,
        };
        check_finite(&next, k + 1)?;

        let al = problem.aug_lagrangian(&next.x, &next.y, &next.lambda, beta);
        let probe_now = config.probe_every > 0 && (k + 1) % config.probe_every == 0;
        let probe = probe_now.then(|| ProbeRecord {
            k: k + 1,
            stationarity: stationarity(&next, problem),
            xi_x: xi_x_residual(&next.x, &next.y, &it.lambda, &it.x, problem, beta, w1),
            bias_measured: None,
            bias_predicted: None,
        });
        let record = TraceRecord {
            k: k + 1,
            loss: problem.loss(&next.x, &next.y),
            aug_lagrangian: al,
            potential: potential(&next, &params, c.a(), al),
            residual_norm: next.residual.norm(),
            dx_norm: next.d_x.norm(),
            dy_norm: next.d_y.norm(),
            dlam_norm: next.d_lambda.norm(),
            stationarity: probe.as_ref().map(|p| p.stationarity.clone()),
            grad_calls,
            wall_time: clock.map(|t| t.elapsed().as_secs_f64()),
        };
        observer(&record, probe.as_ref());
        trace.push(record);
        probes.extend(probe);
        it = next;
        // reservoir of size one: uniform over iterations 1..=k+1
        if rng.random_range(0..=k) == 0 {
            sampled = it.clone();
            sampled_index = k + 1;
        }
    }

    Ok(RunOutput {
        trace,
        probes,
        initial_potential: initial_al,
        initial: start,
        last: it,
        sampled,
        sampled_index,
        params,
        warnings,
        grad_calls,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{build_constraint, GraphSpec};
    use crate::objective::LeastSquares;

    fn quad_problem(n: usize, d: usize, seed: u64, reg: Regularizer) -> Problem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let t = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let loss = LeastSquares::new(rows, t).unwrap();
        let c = build_constraint(&GraphSpec::Identity(d)).unwrap();
        Problem::new(Arc::new(loss), c, reg).unwrap()
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(1.0).unwrap(), (1.0, 0.0));
        let (p1, p2) = psi(1.2).unwrap();
        assert!((p1 - 2.25).abs() < 1e-14 && (p2 - 0.25).abs() < 1e-15);
        assert_eq!(psi(0.5).unwrap(), (1.0, 1.0));
        assert!(psi(0.0).is_err() && psi(2.0).is_err());
    }

    #[test]
    fn dual_update_values() {
        let lam = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(dual_update(&lam, &DVector::zeros(2), 1.2, 1.01), lam);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let out = dual_update(&lam, &e1, 1.2, 1.01);
        assert!((out[0] - (1.0 - 1.212)).abs() < 1e-15 && out[1] == 2.0);
        let r = DVector::from_vec(vec![0.3, -0.7]);
        let twice = dual_update(&dual_update(&lam, &r, 0.5, 2.0), &r, 0.5, 2.0);
        assert!((twice - (&lam - &r * 2.0)).norm() < 1e-15);
    }

    #[test]
    fn linearized_update_stationary_point() {
        let p = quad_problem(5, 3, 1, Regularizer::none());
        let c = &p.constraint;
        let x = DVector::from_vec(vec![0.2, -0.1, 0.4]);
        let y = DVector::from_vec(vec![0.5, 0.3, -0.2]);
        let beta = 2.0;
        let lam = c.residual(&x, &y) * beta;
        let sys = XSystem::new(c, 0.7).unwrap();
        let out = x_update_linearized(&x, &y, &lam, &DVector::zeros(3), c, beta, &sys);
        assert!((out - &x).norm() < 1e-14);
    }

    #[test]
    fn linearized_update_identity_closed_form() {
        let c = build_constraint(&GraphSpec::Identity(2)).unwrap();
        let (beta, w1) = (1.5, 1.0);
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let y = DVector::from_vec(vec![0.3, 0.1]);
        let lam = DVector::from_vec(vec![-0.4, 0.9]);
        let g = DVector::from_vec(vec![2.0, 1.0]);
        let sys = XSystem::new(&c, w1).unwrap();
        let out = x_update_linearized(&x, &y, &lam, &g, &c, beta, &sys);
        let expected = (&x + &lam / beta + &y - &g / beta) / 2.0;
        assert!((out - expected).norm() < 1e-12);
    }

    #[test]
    fn linearized_update_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
            let c = ConstraintSystem::new(a.clone(), BMatrix::NegIdentity, DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0))).unwrap();
            let x = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let y = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let lam = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let g = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let (beta, w1) = (rng.random_range(0.5..3.0), rng.random_range(0.1..2.0));
            let sys = XSystem::new(&c, w1).unwrap();
            let out = x_update_linearized(&x, &y, &lam, &g, &c, beta, &sys);
            // gradient of the quadratic at the returned point
            let r = c.residual(&out, &y) - &lam / beta;
            let grad = &g + (&out - &x) * (beta * w1) + a.tr_mul(&r) * beta;
            assert!(grad.norm() < 1e-10);
        }
    }

    #[test]
    fn singular_x_system() {
        let c = build_constraint(&GraphSpec::ChainDifference(4)).unwrap();
        assert!(matches!(XSystem::new(&c, 0.0), Err(Error::LinearSolve(_))));
        assert!(XSystem::new(&c, 1e-3).is_ok());
    }

    #[test]
    fn potential_params_limits() {
        let p = quad_problem(10, 3, 2, Regularizer::none());
        let l = p.objective.lipschitz();
        let cfg = SolverConfig {
            s: 1.0,
            beta: 2.0,
            tau_lemma: 0.5,
            w_margin: 0.01,
            c_x_surrogate: Some(1e-12),
            w1: 1e6,
            w2: 1e6,
            ..Default::default()
        };
        let pp = validate_params(&cfg, &p).unwrap();
        assert_eq!(pp.psi2, 0.0);
        assert!(pp.a_hat < 1e-20);
        let b_lim = (1.5 / (2.0 * 1.0)) * 2.0 * l * l;
        assert!((pp.b_hat - b_lim).abs() < 1e-12 * b_lim.max(1.0));
        assert!((pp.min_w2 - 2.0 * 0.01 / 2.0).abs() < 1e-15);
        assert!((pp.mu_floor - 0.01f64.min(0.5 / 2.0)).abs() < 1e-18);
    }

    #[test]
    fn infeasible_w1_reports_minimum() {
        let p = quad_problem(10, 3, 2, Regularizer::none());
        let cfg = SolverConfig { w1: 1e-3, w2: 1e6, ..Default::default() };
        match validate_params(&cfg, &p) {
            Err(e @ Error::InfeasibleParams { .. }) => {
                assert!(e.to_string().contains("w1"));
                if let Error::InfeasibleParams { min_w1, .. } = e {
                    assert!(min_w1 > 1e-3);
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn default_surrogate_minimum_is_tight() {
        // the reported minimum passes, slightly less fails
        let p = quad_problem(10, 3, 5, Regularizer::none());
        for beta in [50.0, 200.0, 1000.0] {
            let base = SolverConfig { beta, w2: 1e12, ..Default::default() };
            let pp = potential_params(&base, &p).unwrap();
            if !pp.min_w1.is_finite() {
                continue;
            }
            let ok = SolverConfig { w1: pp.min_w1 * (1.0 + 1e-9), ..base.clone() };
            assert!(potential_params(&ok, &p).unwrap().feasible, "beta={beta}");
            let bad = SolverConfig { w1: pp.min_w1 * (1.0 - 1e-6), ..base.clone() };
            assert!(!potential_params(&bad, &p).unwrap().feasible, "beta={beta}");
        }
    }

    #[test]
    fn potential_matches_recomputation() {
        let p = quad_problem(8, 3, 3, Regularizer::l1(0.1).unwrap());
        let cfg = SolverConfig { s: 1.2, allow_infeasible: true, ..Default::default() };
        let pp = potential_params(&cfg, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut v = || DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let it = Iterate {
            x: v(),
            y: v(),
            lambda: v(),
            d_x: v(),
            d_y: v(),
            d_lambda: v(),
            residual: DVector::zeros(3),
        };
        let al = p.aug_lagrangian(&it.x, &it.y, &it.lambda, cfg.beta);
        let got = potential(&it, &pp, p.constraint.a(), al);
        let (psi1, psi2) = (2.25, 0.25);
        let k = (1.0 + cfg.tau_lemma) / (cfg.s * cfg.beta * p.constraint.sigma_a());
        let a_hat = 4.0 * k * psi1 * pp.c_x.powi(2) * cfg.beta.powi(2);
        let mut manual = al;
        for i in 0..3 {
            manual += a_hat * (it.d_x[i].powi(2) + it.d_y[i].powi(2)) + k * psi2 * it.d_lambda[i].powi(2);
        }
        assert!((got - manual).abs() < 1e-10 * manual.abs().max(1.0));

        let zero = Iterate::start(it.x.clone(), it.y.clone(), it.lambda.clone(), &p.constraint);
        assert_eq!(potential(&zero, &pp, p.constraint.a(), al), al);
    }

    #[test]
    fn zero_iterations_returns_start() {
        let p = quad_problem(6, 3, 1, Regularizer::none());
        let cfg = SolverConfig { outer_iters: 0, allow_infeasible: true, ..Default::default() };
        let out = run(&p, &cfg).unwrap();
        assert!(out.trace.is_empty());
        assert_eq!(out.last, out.initial);
        assert_eq!(out.sampled, out.initial);
        // feasible start
        assert!(out.initial.residual.norm() < 1e-14);
    }

    #[test]
    fn deterministic_runs_bit_identical() {
        let p = quad_problem(12, 3, 7, Regularizer::l1(0.05).unwrap());
        let cfg = SolverConfig {
            outer_iters: 40,
            allow_infeasible: true,
            x_update: XUpdate::Linearized { estimator: EstimatorKind::Sgd, batch: 12 },
            seed: 3,
            ..Default::default()
        };
        let a = run(&p, &cfg).unwrap();
        let b = run(&p, &cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.sampled_index, b.sampled_index);
    }

    #[test]
    fn dual_residual_identity_and_grad_calls() {
        let p = quad_problem(12, 3, 9, Regularizer::l1(0.05).unwrap());
        let cfg = SolverConfig {
            outer_iters: 30,
            s: 1.5,
            allow_infeasible: true,
            x_update: XUpdate::Linearized { estimator: EstimatorKind::Svrg, batch: 4 },
            ..Default::default()
        };
        let out = run(&p, &cfg).unwrap();
        let prev = run(&p, &SolverConfig { outer_iters: 29, ..cfg.clone() }).unwrap().last;
        let l = &out.last;
        assert_eq!(l.d_lambda, -(&l.residual * (cfg.s * cfg.beta)));
        assert_eq!(l.lambda, &prev.lambda + &l.d_lambda);
        assert!((p.constraint.residual(&l.x, &l.y) - &l.residual).norm() < 1e-12);
        assert!(out.trace.windows(2).all(|w| w[0].grad_calls <= w[1].grad_calls));
    }

    #[test]
    fn budget_stops_run() {
        let p = quad_problem(20, 3, 9, Regularizer::none());
        let cfg = SolverConfig {
            outer_iters: 1000,
            allow_infeasible: true,
            grad_budget: Some(100),
            x_update: XUpdate::Linearized { estimator: EstimatorKind::Sgd, batch: 7 },
            ..Default::default()
        };
        let out = run(&p, &cfg).unwrap();
        assert_eq!(out.stop, StopReason::Budget);
        assert_eq!(out.trace.len(), 14);
        assert_eq!(out.grad_calls, 98);
    }

    #[test]
    fn divergence_detected() {
        let p = quad_problem(20, 3, 9, Regularizer::none());
        let cfg = SolverConfig {
            outer_iters: 500,
            w1: 1e-9,
            beta: 1e-6,
            allow_infeasible: true,
            x_update: XUpdate::Linearized { estimator: EstimatorKind::Sgd, batch: 20 },
            ..Default::default()
        };
        let mut seen = Vec::new();
        let err = run_with_observer(&p, &cfg, &mut |r, _| seen.push(r.k)).unwrap_err();
        let Error::Divergence { iteration, .. } = err else { panic!("{err}") };
        // rows up to the failing iteration were delivered, in order
        assert_eq!(seen, (1..iteration).collect::<Vec<_>>());
    }

    #[test]
    fn observer_sees_every_row_and_probe() {
        let p = quad_problem(10, 3, 2, Regularizer::l1(0.01).unwrap());
        let cfg = SolverConfig { outer_iters: 25, probe_every: 5, allow_infeasible: true, ..Default::default() };
        let (mut rows, mut probes) = (Vec::new(), Vec::new());
        let out = run_with_observer(&p, &cfg, &mut |r, pr| {
            rows.push(r.clone());
            probes.extend(pr.cloned());
        })
        .unwrap();
        assert_eq!(rows, out.trace);
        assert_eq!(probes, out.probes);
        assert_eq!(probes.iter().map(|p| p.k).collect::<Vec<_>>(), vec![5, 10, 15, 20, 25]);
    }

    #[test]
    fn infeasible_without_override_is_error() {
        let p = quad_problem(6, 3, 1, Regularizer::none());
        let cfg = SolverConfig { w1: 1e-4, ..Default::default() };
        assert!(matches!(run(&p, &cfg), Err(Error::InfeasibleParams { .. })));
        let cfg = SolverConfig { w1: 1e-4, allow_infeasible: true, outer_iters: 1, ..Default::default() };
        let out = run(&p, &cfg).unwrap();
        assert!(out.warnings.iter().any(|w| w.contains("overridden")));
    }

    #[test]
    fn step_decay_schedule() {
        let s = W1Schedule::StepDecay { eta0: 0.05, decay: 1.0, period: 100 };
        let beta = 1.01;
        assert!((s.w1_at(0, 0.0, beta) - 1.0 / (beta * 0.05)).abs() < 1e-12);
        assert!((s.w1_at(100, 0.0, beta) - 1.0 / (beta * 0.025)).abs() < 1e-12);
        assert!((s.w1_at(101, 0.0, beta) - 1.0 / (beta * 0.05 / 3.0)).abs() < 1e-12);
    }
}
