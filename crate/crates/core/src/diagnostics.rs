//! Full-gradient probes: stationarity residuals, the x-update residual,
//! exact bias/variance of the hybrid estimator by enumeration, and rate fits.
//!
//! Everything here reads snapshots and never touches solver state.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::admm::{Iterate, Problem, TraceRecord};
use crate::constraint::BMatrix;
use crate::error::{Error, Result};
use crate::estimators::hybrid_combine;
use crate::objective::FiniteSum;
use crate::prox::subgrad_distance;

/// Largest sample count `bias_probe` will enumerate.
pub const BIAS_PROBE_MAX_N: usize = 16;
/// Largest sample count and horizon `variance_bound_probe` will enumerate.
pub const VARIANCE_PROBE_MAX_N: usize = 10;
pub const VARIANCE_PROBE_MAX_T: usize = 3;
/// Added to gaps before taking logs in the linear rate fit.
pub const RATE_FLOOR: f64 = 1e-14;

/// Squared residuals of the three stationarity conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityReport {
    /// `||grad f(x) - A^T lambda||^2`
    pub stat_x: f64,
    /// `dist(B^T lambda, dg(y))^2`
    pub stat_y: f64,
    /// `||A x + B y - b||^2`
    pub stat_r: f64,
}

impl StationarityReport {
    pub fn epsilon_met(&self, eps: f64) -> bool {
        self.stat_x <= eps && self.stat_y <= eps && self.stat_r <= eps
    }
}

pub fn stationarity(iterate: &Iterate, problem: &Problem) -> StationarityReport {
    let c = &problem.constraint;
    let gx = problem.objective.full_grad(&iterate.x) - c.a().tr_mul(&iterate.lambda);
    let bt_lambda = match c.b_mat() {
        BMatrix::NegIdentity => -&iterate.lambda,
        BMatrix::Diagonal(d) => iterate.lambda.component_mul(d),
    };
    let dy = subgrad_distance(&problem.regularizer, &iterate.y, &bt_lambda);
    StationarityReport {
        stat_x: gx.norm_squared(),
        stat_y: dy * dy,
        stat_r: c.residual(&iterate.x, &iterate.y).norm_squared(),
    }
}

/// `||grad f(x+) + A^T(-lambda_k + beta r(x+, y+)) + beta w1 (x+ - x_k)||`
pub fn xi_x_residual(
    x_next: &DVector<f64>,
    y_next: &DVector<f64>,
    lambda_k: &DVector<f64>,
    x_k: &DVector<f64>,
    problem: &Problem,
    beta: f64,
    w1: f64,
) -> f64 {
    let c = &problem.constraint;
    let r = c.residual(x_next, y_next);
    let g = problem.objective.full_grad(x_next) + c.a().tr_mul(&(r * beta - lambda_k)) + (x_next - x_k) * (beta * w1);
    g.norm()
}

/// The smooth part `h(x) = f(x) + (coef/2) ||x - anchor||^2` seen by the
/// inner solver.
pub struct ShiftedLoss<'a> {
    pub f: &'a dyn FiniteSum,
    pub anchor: DVector<f64>,
    pub coef: f64,
}

impl ShiftedLoss<'_> {
    fn shift(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.anchor) * self.coef
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        self.f.full_grad(x) + self.shift(x)
    }

    fn sample_grads(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.f.n_samples()).map(|i| self.f.sample_grad(i, x)).collect()
    }

    /// Per-sample `grad h_i` variance `(1/N) sum ||grad h_i - grad h||^2`.
    pub fn sample_variance(&self, x: &DVector<f64>) -> f64 {
        let full = self.f.full_grad(x);
        let n = self.f.n_samples() as f64;
        self.sample_grads(x).iter().map(|g| (g - &full).norm_squared()).sum::<f64>() / n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasStep {
    pub t: usize,
    pub measured: f64,
    pub predicted: f64,
}

/// Exact conditional bias of the hybrid estimate along a fixed trajectory of
/// anchor points, with single-sample `xi` and `zeta`.
///
/// `v0` is the starting f-estimate at `trajectory[0]`. After measuring step
/// `t`, the recursion advances with one pair drawn from `seed`.
pub fn bias_probe(
    h: &ShiftedLoss,
    trajectory: &[DVector<f64>],
    alpha: f64,
    v0: &DVector<f64>,
    seed: u64,
) -> Result<Vec<BiasStep>> {
    let n = h.f.n_samples();
    if n > BIAS_PROBE_MAX_N {
        return Err(Error::Budget(format!(
            "bias probe enumerates N^2 pairs and allows N <= {BIAS_PROBE_MAX_N}, got N = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v_prev = v0.clone();
    let mut out = Vec::with_capacity(trajectory.len().saturating_sub(1));
    for t in 1..trajectory.len() {
        let (x_new, x_old) = (&trajectory[t], &trajectory[t - 1]);
        let g_new = h.sample_grads(x_new);
        let g_old = h.sample_grads(x_old);
        let mut mean = DVector::zeros(x_new.len());
        for i in 0..n {
            for j in 0..n {
                mean += hybrid_combine(alpha, &v_prev, &g_new[i], &g_old[i], &g_new[j]);
            }
        }
        mean /= (n * n) as f64;
        let err_now = (&mean + h.shift(x_new)) - h.grad(x_new);
        let err_prev = (&v_prev + h.shift(x_old)) - h.grad(x_old);
        out.push(BiasStep {
            t,
            measured: err_now.norm(),
            predicted: alpha * err_prev.norm(),
        });
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        v_prev = hybrid_combine(alpha, &v_prev, &g_new[i], &g_old[i], &g_new[j]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceStep {
    pub t: usize,
    /// `E ||v_t - grad h(x_hat_t)||^2` over every sample sequence
    pub measured: f64,
    pub bound: f64,
}

/// Exact mean squared error of the hybrid estimate along a fixed trajectory,
/// enumerating every batch-`M` start and every single-sample pair sequence,
/// against
///
/// ```text
/// alpha^(2t) E||e_0||^2 + Lambda^2 sum_{i<t} alpha^(2(t-i)) ||x_{i+1} - x_i||^2
///     + (1 - alpha)/(1 + alpha) sigma^2
/// ```
///
/// with `sigma^2` the largest single-sample variance over the trajectory.
pub fn variance_bound_probe(
    h: &ShiftedLoss,
    trajectory: &[DVector<f64>],
    alpha: f64,
    batch_m: usize,
    lambda_bound: f64,
    t_max: usize,
) -> Result<Vec<VarianceStep>> {
    let n = h.f.n_samples();
    if n > VARIANCE_PROBE_MAX_N || t_max > VARIANCE_PROBE_MAX_T {
        return Err(Error::Budget(format!(
            "variance probe enumerates N^(2t) sequences and allows N <= {VARIANCE_PROBE_MAX_N}, \
             t <= {VARIANCE_PROBE_MAX_T}, got N = {n}, t = {t_max}"
        )));
    }
    if trajectory.len() < t_max + 1 {
        return Err(Error::Config(format!(
            "trajectory has {} points, need t_max + 1 = {}",
            trajectory.len(),
            t_max + 1
        )));
    }
    if batch_m == 0 || batch_m > n {
        return Err(Error::Config(format!("batch M = {batch_m} outside 1..={n}")));
    }
    let grads: Vec<Vec<DVector<f64>>> = trajectory[..=t_max].iter().map(|x| h.sample_grads(x)).collect();
    let full: Vec<DVector<f64>> = trajectory[..=t_max].iter().map(|x| h.f.full_grad(x)).collect();

    let mut sums = vec![0.0; t_max + 1];
    let mut counts = vec![0u64; t_max + 1];
    for subset in combinations(n, batch_m) {
        let mut v0 = DVector::zeros(trajectory[0].len());
        for &i in &subset {
            v0 += &grads[0][i];
        }
        v0 /= batch_m as f64;
        enumerate(&grads, &full, alpha, 0, &v0, &mut sums, &mut counts);
    }
    let measured: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();

    let sigma2 = trajectory[..=t_max]
        .iter()
        .map(|x| h.sample_variance(x))
        .fold(0.0, f64::max);
    let a2 = alpha * alpha;
    let mut out = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        let mut drift = 0.0;
        for i in 0..t {
            drift += a2.powi((t - i) as i32) * (&trajectory[i + 1] - &trajectory[i]).norm_squared();
        }
        let bound = a2.powi(t as i32) * measured[0]
            + lambda_bound * lambda_bound * drift
            + (1.0 - alpha) / (1.0 + alpha) * sigma2;
        out.push(VarianceStep {
            t,
            measured: measured[t],
            bound,
        });
    }
    Ok(out)
}

// The shift term of grad h cancels in v - grad h, so errors use f alone.
fn enumerate(
    grads: &[Vec<DVector<f64>>],
    full: &[DVector<f64>],
    alpha: f64,
    t: usize,
    v: &DVector<f64>,
    sums: &mut [f64],
    counts: &mut [u64],
) {
    sums[t] += (v - &full[t]).norm_squared();
    counts[t] += 1;
    if t + 1 >= grads.len() {
        return;
    }
    let n = grads[t].len();
    if t + 2 == grads.len() {
        // leaves: sum_{i,j} ||a_i + b_j||^2 with a_i the recursive part minus
        // the true gradient and b_j the unbiased part, in O(N) instead of O(N^2)
        let (g_new, g_old, truth) = (&grads[t + 1], &grads[t], &full[t + 1]);
        let mut sum_a = DVector::zeros(v.len());
        let mut sum_b = DVector::zeros(v.len());
        let (mut sq_a, mut sq_b) = (0.0, 0.0);
        for i in 0..n {
            let a = hybrid_combine(alpha, v, &g_new[i], &g_old[i], &DVector::zeros(v.len())) - truth;
            let b = if alpha == 1.0 { DVector::zeros(v.len()) } else { &g_new[i] * (1.0 - alpha) };
            sq_a += a.norm_squared();
            sq_b += b.norm_squared();
            sum_a += a;
            sum_b += b;
        }
        let nf = n as f64;
        sums[t + 1] += nf * sq_a + 2.0 * sum_a.dot(&sum_b) + nf * sq_b;
        counts[t + 1] += (n * n) as u64;
        return;
    }
    for i in 0..n {
        for j in 0..n {
            let next = hybrid_combine(alpha, v, &grads[t + 1][i], &grads[t][i], &grads[t + 1][j]);
            enumerate(grads, full, alpha, t + 1, &next, sums, counts);
        }
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(pos) = (0..k).rev().find(|&p| cur[p] < n - k + p) else {
            return out;
        };
        cur[pos] += 1;
        for q in pos + 1..k {
            cur[q] = cur[q - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    Sublinear,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub kind: RateKind,
    /// log-log slope (sublinear) or slope of the log gap per iteration (linear)
    pub slope: f64,
    /// `exp(slope)` for linear fits
    pub ratio: Option<f64>,
    pub r_squared: f64,
    /// Inclusive range of `T` (sublinear) or iteration indices (linear).
    pub window: (usize, usize),
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Err(Error::Fit("need at least two points".into()));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok((slope, r2))
}

/// Slope of `log min_{k<=T} gap_k` against `log T` for `T` in `window`,
/// sampled at 64 log-spaced values of `T`. `gaps[k - 1]` is the gap at
/// iteration `k`.
pub fn rate_fit_sublinear(gaps: &[f64], window: (usize, usize)) -> Result<RateFit> {
    let (lo, hi) = window;
    if gaps.len() < 50 {
        return Err(Error::Fit(format!("trace has {} points, need >= 50", gaps.len())));
    }
    if lo < 1 || hi > gaps.len() || lo >= hi {
        return Err(Error::Fit(format!("window {window:?} invalid for {} points", gaps.len())));
    }
    let mut running = Vec::with_capacity(hi);
    let mut m = f64::INFINITY;
    for &g in &gaps[..hi] {
        m = m.min(g);
        running.push(m);
    }
    let mut ts: Vec<usize> = (0..64)
        .map(|j| {
            let f = j as f64 / 63.0;
            ((lo as f64) * (hi as f64 / lo as f64).powf(f)).round() as usize
        })
        .collect();
    ts.dedup();
    let mut xs = Vec::with_capacity(ts.len());
    let mut ys = Vec::with_capacity(ts.len());
    for &t in &ts {
        let v = running[t - 1];
        if !(v > 0.0) {
            return Err(Error::Fit(format!("nonpositive gap {v} at T = {t}")));
        }
        xs.push((t as f64).ln());
        ys.push(v.ln());
    }
    let (slope, r_squared) = least_squares(&xs, &ys)?;
    Ok(RateFit {
        kind: RateKind::Sublinear,
        slope,
        ratio: None,
        r_squared,
        window,
    })
}

/// Slope of `log(v_k - F* + floor)` against `k`. `F*` defaults to the
/// smallest observed value.
pub fn rate_fit_linear(values: &[f64], f_star: Option<f64>) -> Result<RateFit> {
    if values.len() < 50 {
        return Err(Error::Fit(format!("trace has {} points, need >= 50", values.len())));
    }
    let f_star = f_star.unwrap_or_else(|| values.iter().cloned().fold(f64::INFINITY, f64::min));
    let mut xs = Vec::with_capacity(values.len());
    let mut ys = Vec::with_capacity(values.len());
    for (k, v) in values.iter().enumerate() {
        let gap = v - f_star + RATE_FLOOR;
        if !(gap > 0.0) {
            return Err(Error::Fit(format!("nonpositive gap {gap} at k = {k}")));
        }
        xs.push(k as f64);
        ys.push(gap.ln());
    }
    let (slope, r_squared) = least_squares(&xs, &ys)?;
    Ok(RateFit {
        kind: RateKind::Linear,
        slope,
        ratio: Some(slope.exp()),
        r_squared,
        window: (0, values.len() - 1),
    })
}

/// Rate fit over a run trace: the sublinear fit uses
/// `||d_x||^2 + ||d_y||^2 + ||d_lambda||^2` over `T` in `[min(100, len/2), len]`,
/// the linear fit uses the potential.
pub fn rate_fit(trace: &[TraceRecord], kind: RateKind) -> Result<RateFit> {
    match kind {
        RateKind::Sublinear => {
            let gaps: Vec<f64> = trace
                .iter()
                .map(|r| r.dx_norm.powi(2) + r.dy_norm.powi(2) + r.dlam_norm.powi(2))
                .collect();
            let lo = 100.min(gaps.len() / 2).max(1);
            rate_fit_sublinear(&gaps, (lo, gaps.len()))
        }
        RateKind::Linear => {
            let p: Vec<f64> = trace.iter().map(|r| r.potential).collect();
            rate_fit_linear(&p, None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{build_constraint, GraphSpec};
    use crate::objective::LeastSquares;
    use crate::prox::Regularizer;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn ls(n: usize, d: usize, seed: u64) -> LeastSquares {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let t = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        LeastSquares::new(rows, t).unwrap()
    }

    #[test]
    fn kkt_point_of_l1_instance() {
        // Two samples e_1, e_2 with targets t: f(x) = ||x - t||^2 / 4, A = I,
        // B = -I, b = 0, g = lam1 ||y||_1. Stationary: y = x, lambda = (x - t)/2
        // and (t - x)/2 in lam1 d|x|, so x = soft(t, 2 lam1).
        let t = DVector::from_vec(vec![2.0, 0.3]);
        let lam1 = 0.5;
        let loss = LeastSquares::new(DMatrix::identity(2, 2), t.clone()).unwrap();
        let p = Problem::new(
            Arc::new(loss),
            build_constraint(&GraphSpec::Identity(2)).unwrap(),
            Regularizer::l1(lam1).unwrap(),
        )
        .unwrap();
        let x = t.map(|v| if v > 2.0 * lam1 { v - 2.0 * lam1 } else { 0.0 });
        let lambda = (&x - &t) / 2.0;
        let it = Iterate::start(x.clone(), x, lambda, &p.constraint);
        let rep = stationarity(&it, &p);
        assert!(rep.stat_x <= 1e-16 && rep.stat_y <= 1e-16 && rep.stat_r <= 1e-16, "{rep:?}");
        assert!(rep.epsilon_met(1e-12));
    }

    #[test]
    fn stat_x_is_projection_residual() {
        let loss = ls(6, 4, 3);
        let c = build_constraint(&GraphSpec::ChainDifference(4)).unwrap();
        let p = Problem::new(Arc::new(loss), c, Regularizer::none()).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1]);
        let g = p.objective.full_grad(&x);
        let a = p.constraint.a();
        // least-squares lambda: min ||A^T lambda - g||
        let lambda = (a * a.transpose()).cholesky().unwrap().solve(&(a * &g));
        let it = Iterate::start(x.clone(), a * &x, lambda.clone(), &p.constraint);
        let rep = stationarity(&it, &p);
        let resid = (&g - a.tr_mul(&lambda)).norm_squared();
        assert!((rep.stat_x - resid).abs() < 1e-14);
        assert!(rep.stat_x > 1e-6);
        assert_eq!(rep.stat_r, 0.0);
    }

    #[test]
    fn xi_x_for_quadratic_exact_solve() {
        use crate::admm::{x_update_linearized, XSystem};
        let loss = ls(9, 3, 5);
        let c = build_constraint(&GraphSpec::Identity(3)).unwrap();
        let p = Problem::new(Arc::new(loss), c, Regularizer::none()).unwrap();
        let (beta, w1) = (1.3, 0.8);
        let xk = DVector::from_vec(vec![0.5, 0.1, -0.4]);
        let y = DVector::from_vec(vec![0.2, 0.2, 0.0]);
        let lam = DVector::from_vec(vec![0.1, -0.3, 0.6]);
        let g = p.objective.full_grad(&xk);
        let sys = XSystem::new(&p.constraint, w1).unwrap();
        let xn = x_update_linearized(&xk, &y, &lam, &g, &p.constraint, beta, &sys);
        let xi = xi_x_residual(&xn, &y, &lam, &xk, &p, beta, w1);
        let exact = (p.objective.full_grad(&xn) - &g).norm();
        assert!((xi - exact).abs() < 1e-12);
        assert!(xi <= p.objective.lipschitz() * (&xn - &xk).norm() + 1e-10);
    }

    fn trajectory(d: usize, len: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn bias_extremes() {
        let loss = ls(6, 3, 1);
        let traj = trajectory(3, 5, 2);
        let h = ShiftedLoss { f: &loss, anchor: traj[0].clone(), coef: 0.7 };
        let v0 = loss.sample_grad(0, &traj[0]);
        for s in bias_probe(&h, &traj, 0.0, &v0, 1).unwrap() {
            assert!(s.measured < 1e-14);
        }
        for s in bias_probe(&h, &traj, 1.0, &v0, 1).unwrap() {
            assert!((s.measured - s.predicted).abs() < 1e-12);
        }
        let big = ls(17, 3, 1);
        let h = ShiftedLoss { f: &big, anchor: traj[0].clone(), coef: 0.0 };
        assert!(matches!(bias_probe(&h, &traj, 0.5, &v0, 1), Err(Error::Budget(_))));
    }

    #[test]
    fn variance_extremes() {
        let loss = ls(5, 2, 4);
        let x = DVector::from_vec(vec![0.2, -0.1]);
        let constant = vec![x.clone(); 3];
        let h = ShiftedLoss { f: &loss, anchor: x.clone(), coef: 0.0 };
        // exact start, constant anchor, alpha = 1: nothing random remains
        let steps = variance_bound_probe(&h, &constant, 1.0, 5, 1.0, 2).unwrap();
        assert!(steps.iter().all(|s| s.measured < 1e-28));
        let traj = trajectory(2, 4, 9);
        let lam = loss.lipschitz();
        for alpha in [0.0, 0.3, 1.0] {
            for s in variance_bound_probe(&h, &traj, alpha, 1, lam, 3).unwrap() {
                assert!(s.measured <= s.bound * (1.0 + 1e-12), "alpha={alpha} {s:?}");
            }
        }
        assert!(variance_bound_probe(&h, &traj, 0.5, 1, lam, 4).is_err());
    }

    #[test]
    fn variance_matches_brute_force_enumeration() {
        let loss = ls(4, 3, 6);
        let traj = trajectory(3, 3, 7);
        let h = ShiftedLoss { f: &loss, anchor: traj[0].clone(), coef: 0.4 };
        for alpha in [0.0, 0.35, 1.0] {
            let steps = variance_bound_probe(&h, &traj, alpha, 2, 1.0, 2).unwrap();
            // every 2-subset start, then every (i, j) at t = 1 and t = 2, written out flat
            let g = |t: usize, i: usize| loss.sample_grad(i, &traj[t]);
            let (mut e1, mut e2, mut c1, mut c2) = (0.0, 0.0, 0.0, 0.0);
            for s in combinations(4, 2) {
                let v0 = (g(0, s[0]) + g(0, s[1])) / 2.0;
                for i1 in 0..4 {
                    for j1 in 0..4 {
                        let v1 = (&v0 + g(1, i1) - g(0, i1)) * alpha + g(1, j1) * (1.0 - alpha);
                        e1 += (&v1 - loss.full_grad(&traj[1])).norm_squared();
                        c1 += 1.0;
                        for i2 in 0..4 {
                            for j2 in 0..4 {
                                let v2 = (&v1 + g(2, i2) - g(1, i2)) * alpha + g(2, j2) * (1.0 - alpha);
                                e2 += (&v2 - loss.full_grad(&traj[2])).norm_squared();
                                c2 += 1.0;
                            }
                        }
                    }
                }
            }
            assert!((steps[1].measured - e1 / c1).abs() <= 1e-12 * (e1 / c1), "alpha={alpha}");
            assert!((steps[2].measured - e2 / c2).abs() <= 1e-12 * (e2 / c2), "alpha={alpha}");
        }
    }

    #[test]
    fn combinations_count() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(4, 4), vec![vec![0, 1, 2, 3]]);
        assert_eq!(combinations(3, 1), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn rate_fit_synthetic() {
        let gaps: Vec<f64> = (1..=1000).map(|k| 1.0 / k as f64).collect();
        let fit = rate_fit_sublinear(&gaps, (10, 1000)).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-6 && fit.r_squared > 0.999_999);

        let geo: Vec<f64> = (0..200).map(|k| 0.9f64.powi(k)).collect();
        let fit = rate_fit_linear(&geo, Some(0.0)).unwrap();
        assert!((fit.ratio.unwrap() - 0.9).abs() < 1e-6);

        assert!(rate_fit_sublinear(&gaps[..40], (1, 40)).is_err());
        assert!(rate_fit_linear(&geo, Some(2.0)).is_err());
    }
}
