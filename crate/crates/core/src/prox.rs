//! Proximal maps for the separable regularizer `g` and the ADMM y-update.

use nalgebra::DVector;

use crate::constraint::ConstraintSystem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    None,
    L1,
    Scad,
}

/// `g(y) = lambda1 * sum_i p(|y_i|)` where `p` is `|.|` or SCAD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    pub lambda1: f64,
    pub scad_c: f64,
    pub scad_kappa: f64,
}

impl Regularizer {
    pub fn none() -> Self {
        Regularizer {
            kind: RegularizerKind::None,
            lambda1: 0.0,
            scad_c: 3.7,
            scad_kappa: 0.1,
        }
    }

    pub fn l1(lambda1: f64) -> Result<Self> {
        let r = Regularizer {
            kind: RegularizerKind::L1,
            lambda1,
            ..Regularizer::none()
        };
        r.validate()?;
        Ok(r)
    }

    pub fn scad(lambda1: f64, c: f64, kappa: f64) -> Result<Self> {
        let r = Regularizer {
            kind: RegularizerKind::Scad,
            lambda1,
            scad_c: c,
            scad_kappa: kappa,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0) {
            return Err(Error::Config(format!("lambda1 = {} must be >= 0", self.lambda1)));
        }
        if self.kind == RegularizerKind::Scad && !(self.scad_c > 2.0 && self.scad_kappa > 0.0) {
            return Err(Error::Config(format!(
                "SCAD needs c > 2 and kappa > 0 (got c = {}, kappa = {})",
                self.scad_c, self.scad_kappa
            )));
        }
        Ok(())
    }

    pub fn value(&self, y: &DVector<f64>) -> f64 {
        match self.kind {
            RegularizerKind::None => 0.0,
            RegularizerKind::L1 => self.lambda1 * y.iter().map(|v| v.abs()).sum::<f64>(),
            RegularizerKind::Scad => {
                self.lambda1
                    * y.iter()
                        .map(|v| scad_value(v.abs(), self.scad_kappa, self.scad_c))
                        .sum::<f64>()
            }
        }
    }

    /// Scalar prox: `argmin_y lambda1 p(|y|) + (y - q)^2 / (2v)`.
    pub fn prox_scalar(&self, q: f64, v: f64) -> Result<f64> {
        match self.kind {
            RegularizerKind::None => Ok(q),
            RegularizerKind::L1 => Ok(soft_threshold_scalar(q, self.lambda1 * v)),
            RegularizerKind::Scad => {
                if self.lambda1 == 0.0 {
                    return Ok(q);
                }
                let v = self.lambda1 * v;
                check_scad_weight(v, self.scad_c)?;
                Ok(scad_prox_scalar(q, v, self.scad_kappa, self.scad_c))
            }
        }
    }
}

/// Center `q` and weight `v` of `min penalty(y) + ||y - q||^2 / (2v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxQuery {
    pub q: DVector<f64>,
    pub v: f64,
}

impl ProxQuery {
    pub fn new(q: DVector<f64>, v: f64) -> Result<Self> {
        if !(v > 0.0) {
            return Err(Error::Config(format!("prox weight v = {v} must be positive")));
        }
        Ok(ProxQuery { q, v })
    }
}

fn scad_value(theta: f64, kappa: f64, c: f64) -> f64 {
    if theta <= kappa {
        kappa * theta
    } else if theta <= c * kappa {
        (-theta * theta + 2.0 * c * kappa * theta - kappa * kappa) / (2.0 * (c - 1.0))
    } else {
        (c + 1.0) * kappa * kappa / 2.0
    }
}

/// SCAD penalty `p_kappa(theta)` for `theta >= 0`.
pub fn scad_penalty(theta: f64, kappa: f64, c: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!("SCAD argument {theta} must be nonnegative")));
    }
    if !(c > 2.0 && kappa > 0.0) {
        return Err(Error::Config(format!("SCAD needs c > 2 and kappa > 0 (got {c}, {kappa})")));
    }
    Ok(scad_value(theta, kappa, c))
}

/// Derivative of the SCAD penalty for `theta >= 0` (right derivative at 0).
pub fn scad_derivative(theta: f64, kappa: f64, c: f64) -> f64 {
    if theta <= kappa {
        kappa
    } else if theta <= c * kappa {
        (c * kappa - theta) / (c - 1.0)
    } else {
        0.0
    }
}

fn check_scad_weight(v: f64, c: f64) -> Result<()> {
    if 1.0 + v > c {
        return Err(Error::Config(format!(
            "SCAD prox requires 1 + v <= c, got 1 + {v} > {c}"
        )));
    }
    Ok(())
}

pub fn soft_threshold_scalar(q: f64, t: f64) -> f64 {
    q.signum() * (q.abs() - t).max(0.0)
}

/// Closed-form SCAD prox for one coordinate; needs `1 + v <= c`.
pub fn scad_prox_scalar(q: f64, v: f64, kappa: f64, c: f64) -> f64 {
    let a = q.abs();
    if a <= (1.0 + v) * kappa {
        soft_threshold_scalar(q, kappa * v)
    } else if a <= c * kappa {
        ((c - 1.0) * q - q.signum() * c * kappa * v) / (c - 1.0 - v)
    } else {
        q
    }
}

/// `argmin_y sum_i p_kappa(|y_i|) + ||y - q||^2 / (2v)`.
pub fn scad_prox(query: &ProxQuery, kappa: f64, c: f64) -> Result<DVector<f64>> {
    if !(c > 2.0 && kappa > 0.0) {
        return Err(Error::Config(format!("SCAD needs c > 2 and kappa > 0 (got {c}, {kappa})")));
    }
    check_scad_weight(query.v, c)?;
    Ok(query.q.map(|q| scad_prox_scalar(q, query.v, kappa, c)))
}

/// `argmin_y lambda1 ||y||_1 + ||y - q||^2 / (2v)`.
pub fn soft_threshold(query: &ProxQuery, lambda1: f64) -> DVector<f64> {
    let t = lambda1 * query.v;
    query.q.map(|q| soft_threshold_scalar(q, t))
}

/// The ADMM y-step with `D_y = w2 I`:
///
/// `argmin_y g(y) + (beta/2)||A x + B y - b - lambda/beta||^2 + (beta w2 / 2)||y - y_k||^2`.
///
/// Each coordinate is a one-dimensional prox after completing the square.
pub fn y_update(
    y_k: &DVector<f64>,
    x_k: &DVector<f64>,
    lambda_k: &DVector<f64>,
    constraint: &ConstraintSystem,
    regularizer: &Regularizer,
    beta: f64,
    w2: f64,
) -> Result<DVector<f64>> {
    if !(beta > 0.0) || !(w2 >= 0.0) {
        return Err(Error::Config(format!("need beta > 0 and w2 >= 0 (got {beta}, {w2})")));
    }
    let ax = constraint.a() * x_k;
    let b = constraint.b();
    let mut y = DVector::zeros(y_k.len());
    for i in 0..y.len() {
        let d = constraint.b_mat().diag(i);
        let target = b[i] + lambda_k[i] / beta - ax[i];
        let curv = d * d + w2;
        let q = (d * target + w2 * y_k[i]) / curv;
        y[i] = regularizer.prox_scalar(q, 1.0 / (beta * curv))?;
    }
    Ok(y)
}

/// Distance from `z` to the Clarke subdifferential of `g` at `y`.
pub fn subgrad_distance(regularizer: &Regularizer, y: &DVector<f64>, z: &DVector<f64>) -> f64 {
    let l = regularizer.lambda1;
    let comp = |yi: f64, zi: f64| -> f64 {
        match regularizer.kind {
            RegularizerKind::None => zi.abs(),
            RegularizerKind::L1 => {
                if yi == 0.0 {
                    (zi.abs() - l).max(0.0)
                } else {
                    (zi - l * yi.signum()).abs()
                }
            }
            RegularizerKind::Scad => {
                let (kappa, c) = (regularizer.scad_kappa, regularizer.scad_c);
                if yi == 0.0 {
                    (zi.abs() - l * kappa).max(0.0)
                } else {
                    (zi - l * scad_derivative(yi.abs(), kappa, c) * yi.signum()).abs()
                }
            }
        }
    };
    y.iter()
        .zip(z.iter())
        .map(|(&yi, &zi)| {
            let d = comp(yi, zi);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{build_constraint, GraphSpec};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scad_penalty_values() {
        assert_eq!(scad_penalty(0.0, 0.1, 3.7).unwrap(), 0.0);
        // third branch: (c+1) kappa^2 / 2 = 4.7 * 0.01 / 2
        assert!((scad_penalty(1.0, 0.1, 3.7).unwrap() - 0.0235).abs() < 1e-15);
        let k: f64 = 0.1;
        let c = 3.7;
        let left = k * k;
        let right = (-k * k + 2.0 * c * k * k - k * k) / (2.0 * (c - 1.0));
        assert!((left - right).abs() < 1e-12);
        let at_ck = scad_penalty(c * k, k, c).unwrap();
        assert!((at_ck - (c + 1.0) * k * k / 2.0).abs() < 1e-12);
        assert!(matches!(scad_penalty(-1.0, 0.1, 3.7), Err(Error::Domain(_))));
    }

    #[test]
    fn scad_prox_examples() {
        let q0 = ProxQuery::new(DVector::zeros(3), 1.0).unwrap();
        assert_eq!(scad_prox(&q0, 0.1, 3.7).unwrap(), DVector::zeros(3));
        let q = ProxQuery::new(DVector::from_vec(vec![0.15, -0.15]), 1.0).unwrap();
        let y = scad_prox(&q, 0.1, 3.7).unwrap();
        assert!((y[0] - 0.05).abs() < 1e-15);
        assert!((y[1] + 0.05).abs() < 1e-15);
    }

    #[test]
    fn scad_prox_rejects_large_weight() {
        let q = ProxQuery::new(DVector::from_element(1, 1.0), 3.0).unwrap();
        match scad_prox(&q, 0.1, 3.7) {
            Err(Error::Config(msg)) => assert!(msg.contains("1 + v <= c")),
            other => panic!("{other:?}"),
        }
        assert!(ProxQuery::new(DVector::zeros(1), 0.0).is_err());
    }

    #[test]
    fn scad_prox_branches() {
        let (k, c, v) = (0.1, 3.7, 1.0);
        // middle branch: (2.7 * 0.3 - 0.37) / 1.7
        let y = scad_prox_scalar(0.3, v, k, c);
        assert!((y - (2.7 * 0.3 - 0.37) / 1.7).abs() < 1e-15);
        assert_eq!(scad_prox_scalar(0.5, v, k, c), 0.5);
        // boundaries take the left branch
        assert!((scad_prox_scalar(0.2, v, k, c) - 0.1).abs() < 1e-15);
        assert!((scad_prox_scalar(0.37, v, k, c) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn soft_threshold_examples() {
        let q = ProxQuery::new(DVector::from_vec(vec![3.0, -1.0]), 2.0).unwrap();
        assert_eq!(soft_threshold(&q, 1.0).as_slice(), &[1.0, 0.0]);
        assert_eq!(soft_threshold(&q, 0.0), q.q);
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn y_objective(
        y: &DVector<f64>,
        x: &DVector<f64>,
        lam: &DVector<f64>,
        c: &ConstraintSystem,
        g: &Regularizer,
        beta: f64,
    ) -> f64 {
        let r = c.residual(x, y) - lam / beta;
        g.value(y) + 0.5 * beta * r.norm_squared()
    }

    #[test]
    fn y_update_without_regularizer_is_center() {
        let c = build_constraint(&GraphSpec::ChainDifference(5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, lam, yk) = (random_state(&mut rng, 5), random_state(&mut rng, 4), random_state(&mut rng, 4));
        let (beta, w2) = (1.3, 0.7);
        let y = y_update(&yk, &x, &lam, &c, &Regularizer::none(), beta, w2).unwrap();
        let q = (c.a() * &x - c.b() - &lam / beta + &yk * w2) / (1.0 + w2);
        assert!((y - q).norm() < 1e-14);
    }

    #[test]
    fn y_update_reduces_to_soft_threshold() {
        let c = build_constraint(&GraphSpec::Identity(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (x, lam, yk) = (random_state(&mut rng, 4), random_state(&mut rng, 4), random_state(&mut rng, 4));
        let beta = 2.0;
        let g = Regularizer::l1(0.3).unwrap();
        let y = y_update(&yk, &x, &lam, &c, &g, beta, 0.0).unwrap();
        let q = ProxQuery::new(&x - &lam / beta, 1.0 / beta).unwrap();
        assert!((y - soft_threshold(&q, 0.3)).norm() < 1e-15);
    }

    #[test]
    fn y_update_descent_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = build_constraint(&GraphSpec::ChainDifference(6)).unwrap();
        let regs = [
            Regularizer::l1(0.2).unwrap(),
            Regularizer::scad(0.5, 3.7, 0.1).unwrap(),
            Regularizer::none(),
        ];
        for trial in 0..100 {
            let g = regs[trial % 3];
            let (x, lam, yk) = (random_state(&mut rng, 6), random_state(&mut rng, 5), random_state(&mut rng, 5));
            let beta = rng.random_range(0.5..3.0);
            let w2 = rng.random_range(0.0..2.0);
            let y = y_update(&yk, &x, &lam, &c, &g, beta, w2).unwrap();
            let lhs = y_objective(&y, &x, &lam, &c, &g, beta) + 0.5 * beta * w2 * (&y - &yk).norm_squared();
            let rhs = y_objective(&yk, &x, &lam, &c, &g, beta);
            assert!(lhs <= rhs + 1e-12, "trial {trial}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn y_update_diagonal_b_matches_objective_minimum() {
        use crate::constraint::BMatrix;
        let c = ConstraintSystem::new(
            DMatrix::identity(3, 3),
            BMatrix::Diagonal(DVector::from_vec(vec![2.0, -0.5, 1.0])),
            DVector::from_vec(vec![0.1, 0.2, -0.3]),
        )
        .unwrap();
        let g = Regularizer::l1(0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (x, lam, yk) = (random_state(&mut rng, 3), random_state(&mut rng, 3), random_state(&mut rng, 3));
        let (beta, w2) = (1.5, 0.4);
        let y = y_update(&yk, &x, &lam, &c, &g, beta, w2).unwrap();
        let obj = |y: &DVector<f64>| y_objective(y, &x, &lam, &c, &g, beta) + 0.5 * beta * w2 * (y - &yk).norm_squared();
        let base = obj(&y);
        for i in 0..3 {
            for h in [1e-4, -1e-4, 1e-2, -1e-2] {
                let mut p = y.clone();
                p[i] += h;
                assert!(obj(&p) >= base - 1e-14);
            }
        }
    }

    #[test]
    fn y_update_fixed_point_at_stationarity() {
        // Choose y with nonzero entries and set lambda so that
        // 0 in dg(y) - beta(Ax - y - b - lambda/beta) holds exactly.
        let c = build_constraint(&GraphSpec::Identity(3)).unwrap();
        let g = Regularizer::scad(1.0, 3.7, 0.1).unwrap();
        let x = DVector::from_vec(vec![0.5, -0.2, 0.05]);
        let y: DVector<f64> = DVector::from_vec(vec![0.4, -0.25, 0.0]);
        let beta = 1.0;
        let mut lam = DVector::zeros(3);
        for i in 0..3 {
            let sub = if y[i] == 0.0 { 0.0 } else { scad_derivative(y[i].abs(), 0.1, 3.7) * y[i].signum() };
            // sub = beta (Ax - y - b - lambda/beta)_i  =>  lambda = beta(x - y) - sub
            lam[i] = beta * (x[i] - y[i]) - sub;
        }
        // third coordinate needs |q| <= kappa v at y = 0: q = x - lam/beta = y + sub/beta = 0.
        let out = y_update(&y, &x, &lam, &c, &g, beta, 0.5).unwrap();
        assert!((out - y).norm() < 1e-10);
    }

    #[test]
    fn subgrad_distance_examples() {
        let z = DVector::from_vec(vec![3.0, -4.0]);
        let y = DVector::from_vec(vec![1.0, 0.0]);
        assert!((subgrad_distance(&Regularizer::none(), &y, &z) - 5.0).abs() < 1e-15);
        let l1 = Regularizer::l1(2.0).unwrap();
        let d = subgrad_distance(&l1, &DVector::zeros(1), &DVector::from_element(1, 1.0));
        assert_eq!(d, 0.0);
        // y=1 -> {2}: |3-2| = 1; y=0 -> [-2,2]: |-4| - 2 = 2
        assert!((subgrad_distance(&l1, &y, &z) - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn scad_subgrad_matches_sampling_oracle() {
        // Oracle: one-sided derivatives of the penalty at points just left and
        // right of y, convex hull [min, max]. The three-point formula is exact
        // on the quadratic pieces.
        let (k, c, l) = (0.1, 3.7, 0.8);
        let g = Regularizer::scad(l, c, k).unwrap();
        let pen = |t: f64| l * scad_value(t.abs(), k, c);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let points = [0.0, k, -k, c * k, -c * k, 0.05, 0.2, -0.3, 1.0];
        for &yi in &points {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for s in 1..=200 {
                for sign in [-1.0, 1.0] {
                    let p = yi + sign * s as f64 * 1e-11;
                    let h = sign * 1e-6;
                    let d = (-3.0 * pen(p) + 4.0 * pen(p + h) - pen(p + 2.0 * h)) / (2.0 * h);
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
            for _ in 0..20 {
                let zi: f64 = rng.random_range(-0.2..0.2);
                let oracle = if zi < lo { lo - zi } else if zi > hi { zi - hi } else { 0.0 };
                let got = subgrad_distance(&g, &DVector::from_element(1, yi), &DVector::from_element(1, zi));
                assert!((got - oracle).abs() < 1e-8, "y={yi} z={zi}: {got} vs {oracle}");
            }
        }
    }
}
