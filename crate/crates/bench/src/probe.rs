//! Enumeration-scale checks of the hybrid estimator's bias recursion and
//! variance bound along real inner-solver trajectories.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use sadmm_core::admm::Problem;
use sadmm_core::diagnostics::{bias_probe, variance_bound_probe, ShiftedLoss};
use sadmm_core::estimators::EstimatorState;
use sadmm_core::inner::{solve_x_subproblem, AlphaRule, InnerConfig, InnerProblem, InnerSchedule, ShiftedSolver};
use sadmm_core::objective::SigmoidLoss;
use sadmm_core::{Error, Result};

use crate::config::ExperimentConfig;

/// Relative rounding slack in the variance comparison. At `alpha = 0` the
/// bound is attained exactly and the two sides differ only in summation order.
pub const VARIANCE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSuite {
    /// Samples kept for the bias checks.
    pub bias_n: usize,
    /// Trajectory length of the bias checks.
    pub bias_steps: usize,
    pub variance_n: usize,
    pub variance_t: usize,
    pub batch_m: usize,
    pub alphas: Vec<f64>,
    pub beta: f64,
    pub w1: f64,
    pub seed: u64,
    /// Largest `|measured - predicted|` accepted for the bias recursion.
    pub bias_tol: f64,
}

impl Default for ProbeSuite {
    fn default() -> Self {
        ProbeSuite {
            bias_n: 8,
            bias_steps: 5,
            variance_n: 10,
            variance_t: 3,
            batch_m: 2,
            alphas: vec![0.0, 0.25, 0.5, 0.9, 1.0],
            beta: 1.01,
            w1: 1.0,
            seed: 0,
            bias_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub check: &'static str,
    pub alpha: f64,
    pub t: usize,
    pub measured: f64,
    /// Predicted bias or variance bound.
    pub reference: f64,
    pub holds: bool,
}

/// Anchor points `x_hat_0..=x_hat_steps` of one inner solve started at a
/// standard normal `x_k`, with `y = A x_k` and `lambda = 0`.
pub fn inner_trajectory(
    problem: &Problem,
    suite: &ProbeSuite,
    alpha: f64,
    steps: usize,
) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let c = &problem.constraint;
    let obj = problem.objective.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed);
    let x_k = DVector::from_fn(c.n_x(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = -(c.b() - c.a() * &x_k);
    let lambda = DVector::zeros(c.a().nrows());
    let sub = InnerProblem::new(&x_k, &y, &lambda, c, suite.beta, suite.w1);
    // alpha = 1 would make the schedule's g(alpha) infinite; the path only
    // needs to be a plausible one, so it is generated at alpha = 0.5
    let path_alpha = if alpha < 1.0 && alpha > 0.0 { alpha } else { 0.5 };
    let inner = InnerConfig {
        m: steps,
        batch_m: suite.batch_m.min(obj.n_samples()),
        alpha: AlphaRule::Fixed(path_alpha),
        ..InnerConfig::default()
    };
    let schedule = InnerSchedule::new(&inner, obj.lipschitz() + suite.beta * suite.w1)?;
    let mut est = EstimatorState::new(schedule.estimator_kind(), inner.batch_m, obj.n_samples(), suite.seed)?;
    let solver = ShiftedSolver::new(c.a(), suite.beta);
    let mut path = Vec::with_capacity(steps + 1);
    solve_x_subproblem(obj, &sub, &schedule, &mut est, &solver, &mut rng, Some(&mut |s| path.push(s.x_hat.clone())))?;
    Ok((x_k, path))
}

fn restrict(problem: &Problem, data: &sadmm_core::data::Dataset, n: usize) -> Result<Problem> {
    if data.n_samples() < n {
        return Err(Error::Config(format!("probe needs {n} samples, dataset has {}", data.n_samples())));
    }
    let idx: Vec<usize> = (0..n).collect();
    let loss = SigmoidLoss::new(data.subset(&idx)?);
    Problem::new(std::sync::Arc::new(loss), problem.constraint.clone(), problem.regularizer.clone())
}

/// Bias and variance checks for every alpha on the first `bias_n` and
/// `variance_n` samples of `data`.
pub fn run_suite(problem: &Problem, data: &sadmm_core::data::Dataset, suite: &ProbeSuite) -> Result<Vec<ProbeRow>> {
    let mut rows = Vec::new();
    let small = restrict(problem, data, suite.bias_n)?;
    for &alpha in &suite.alphas {
        let (x_k, path) = inner_trajectory(&small, suite, alpha, suite.bias_steps)?;
        let f = small.objective.as_ref();
        let h = ShiftedLoss { f, anchor: x_k, coef: suite.beta * suite.w1 };
        let mut rng = ChaCha8Rng::seed_from_u64(suite.seed ^ 0x5eed);
        let idx = rand::seq::index::sample(&mut rng, f.n_samples(), suite.batch_m.min(f.n_samples())).into_vec();
        let v0 = f.grad(&path[0], &idx).expect("nonempty batch");
        for step in bias_probe(&h, &path, alpha, &v0, suite.seed)? {
            rows.push(ProbeRow {
                check: "bias",
                alpha,
                t: step.t,
                measured: step.measured,
                reference: step.predicted,
                holds: (step.measured - step.predicted).abs() <= suite.bias_tol,
            });
        }
    }
    let mid = restrict(problem, data, suite.variance_n)?;
    for &alpha in &suite.alphas {
        let (x_k, path) = inner_trajectory(&mid, suite, alpha, suite.variance_t)?;
        let f = mid.objective.as_ref();
        let h = ShiftedLoss { f, anchor: x_k, coef: suite.beta * suite.w1 };
        let lambda = f.lipschitz() + suite.beta * suite.w1;
        for step in variance_bound_probe(&h, &path, alpha, suite.batch_m, lambda, suite.variance_t)? {
            rows.push(ProbeRow {
                check: "variance",
                alpha,
                t: step.t,
                measured: step.measured,
                reference: step.bound,
                holds: step.measured <= step.bound * (1.0 + VARIANCE_SLACK),
            });
        }
    }
    Ok(rows)
}

pub fn run_suite_from_config(cfg: &ExperimentConfig, suite: &ProbeSuite) -> Result<Vec<ProbeRow>> {
    let (problem, data) = cfg.build_problem()?;
    run_suite(&problem, &data, suite)
}
