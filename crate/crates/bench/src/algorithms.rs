//! The six compared methods and their default solver settings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use sadmm_core::admm::{SolverConfig, W1Schedule, XUpdate};
use sadmm_core::estimators::EstimatorKind;
use sadmm_core::inner::{AlphaRule, GammaRule, InnerConfig, InnerOutput};
use sadmm_core::{Error, Result};

pub const DEFAULT_BETA: f64 = 1.01;
pub const DEFAULT_S: f64 = 1.2;
pub const SADMM_ETA0: f64 = 0.05;
pub const SADMM_DECAY: f64 = 1.0;
/// Inner steps per subproblem for the accelerated family.
pub const DEFAULT_INNER_M: usize = 2;
/// `c1` in `alpha = 1 - c1 / sqrt(M (m + 1))`; replaced by `0.9 sqrt(M (m + 1))`
/// when the root is smaller.
pub const DEFAULT_C1: f64 = 5.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "SADMM")]
    Sadmm,
    #[serde(rename = "SVRG-ADMM")]
    SvrgAdmm,
    #[serde(rename = "SPIDER-ADMM")]
    SpiderAdmm,
    #[serde(rename = "H-SADMM")]
    HSadmm,
    #[serde(rename = "ASADMM")]
    Asadmm,
    #[serde(rename = "AH-SADMM")]
    AhSadmm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Sadmm,
        Algorithm::SvrgAdmm,
        Algorithm::SpiderAdmm,
        Algorithm::HSadmm,
        Algorithm::Asadmm,
        Algorithm::AhSadmm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sadmm => "SADMM",
            Algorithm::SvrgAdmm => "SVRG-ADMM",
            Algorithm::SpiderAdmm => "SPIDER-ADMM",
            Algorithm::HSadmm => "H-SADMM",
            Algorithm::Asadmm => "ASADMM",
            Algorithm::AhSadmm => "AH-SADMM",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}

fn ceil_root(n: usize, p: f64) -> usize {
    let r = (n as f64).powf(p);
    // guard against 10000^(1/2) = 100.00000000000001
    let rounded = r.round();
    let c = if (r - rounded).abs() < 1e-9 { rounded } else { r.ceil() };
    (c as usize).max(1)
}

/// `ceil(sqrt(N))`
pub fn sqrt_batch(n: usize) -> usize {
    ceil_root(n, 0.5)
}

/// `ceil(N^(2/3))`
pub fn two_thirds_batch(n: usize) -> usize {
    ceil_root(n, 2.0 / 3.0)
}

/// `ceil(N^(1/3))`
pub fn cube_root_batch(n: usize) -> usize {
    ceil_root(n, 1.0 / 3.0)
}

/// Proximal weight giving a linearized step of length `eta`.
pub fn w1_from_eta(eta: f64, beta: f64) -> f64 {
    1.0 / (beta * eta)
}

/// Defaults for `algorithm` on a finite sum of `n` terms with smoothness `l`.
///
/// `w2` is 0 and the feasibility check is overridden: the literature
/// stepsizes do not satisfy it, and the run records a warning instead.
pub fn default_config(algorithm: Algorithm, n: usize, l: f64) -> Result<SolverConfig> {
    if n == 0 {
        return Err(Error::Config("empty problem".into()));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Config(format!("smoothness constant {l} must be positive")));
    }
    let beta = DEFAULT_BETA;
    let base = SolverConfig {
        beta,
        s: DEFAULT_S,
        w2: 0.0,
        allow_infeasible: true,
        ..SolverConfig::default()
    };
    let inner_batch = cube_root_batch(n);
    let root = ((inner_batch * (DEFAULT_INNER_M + 1)) as f64).sqrt();
    let accel = |momentum: bool, alpha: AlphaRule, gamma: GammaRule| InnerConfig {
        m: DEFAULT_INNER_M,
        batch_m: inner_batch,
        pair_batch: inner_batch,
        c1: if DEFAULT_C1 < root { DEFAULT_C1 } else { 0.9 * root },
        tau: 0.8,
        momentum,
        alpha,
        gamma,
        output: InnerOutput::Last,
        ..InnerConfig::default()
    };
    let cfg = match algorithm {
        Algorithm::Sadmm => SolverConfig {
            w1: w1_from_eta(SADMM_ETA0, beta),
            w1_schedule: W1Schedule::StepDecay {
                eta0: SADMM_ETA0,
                decay: SADMM_DECAY,
                period: n,
            },
            x_update: XUpdate::Linearized {
                estimator: EstimatorKind::Sgd,
                batch: sqrt_batch(n),
            },
            ..base
        },
        Algorithm::SvrgAdmm => SolverConfig {
            w1: w1_from_eta(1.0 / (3.0 * l), beta),
            x_update: XUpdate::Linearized {
                estimator: EstimatorKind::Svrg,
                batch: two_thirds_batch(n),
            },
            ..base
        },
        Algorithm::SpiderAdmm => {
            let b = sqrt_batch(n);
            SolverConfig {
                w1: w1_from_eta(1.0 / (2.0 * l), beta),
                x_update: XUpdate::Linearized {
                    estimator: EstimatorKind::Spider { restart_q: n.div_ceil(b) },
                    batch: b,
                },
                ..base
            }
        }
        Algorithm::AhSadmm => SolverConfig {
            w1: w1_from_eta(1.0 / (2.0 * l), beta),
            x_update: XUpdate::InnerAccel(accel(true, AlphaRule::FromSchedule, GammaRule::FromSchedule)),
            ..base
        },
        Algorithm::HSadmm => SolverConfig {
            w1: w1_from_eta(1.0 / (2.0 * l), beta),
            x_update: XUpdate::InnerAccel(accel(false, AlphaRule::FromSchedule, GammaRule::FromSchedule)),
            ..base
        },
        Algorithm::Asadmm => SolverConfig {
            w1: w1_from_eta(1.0 / (2.0 * l), beta),
            x_update: XUpdate::InnerAccel(accel(true, AlphaRule::Fixed(0.0), GammaRule::Curvature)),
            ..base
        },
    };
    Ok(cfg)
}

/// Per-algorithm settings a config file may change. Unset fields keep the
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub beta: Option<f64>,
    pub s: Option<f64>,
    /// Literature stepsize, mapped to `w1 = 1 / (beta eta)`.
    pub eta: Option<f64>,
    pub w1: Option<f64>,
    pub w2: Option<f64>,
    pub batch: Option<usize>,
    pub restart_q: Option<usize>,
    pub inner_m: Option<usize>,
    pub batch_m: Option<usize>,
    pub pair_batch: Option<usize>,
    pub c1: Option<f64>,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub uniform_output: Option<bool>,
    pub allow_infeasible: Option<bool>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut SolverConfig) -> Result<()> {
        if let Some(b) = self.beta {
            // keep the stepsize, not the weight, when beta moves
            cfg.w1 *= cfg.beta / b;
            cfg.beta = b;
        }
        if let Some(s) = self.s {
            cfg.s = s;
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return Err(Error::Config(format!("eta = {eta} must be positive")));
            }
            cfg.w1 = w1_from_eta(eta, cfg.beta);
            if let W1Schedule::StepDecay { eta0, .. } = &mut cfg.w1_schedule {
                *eta0 = eta;
            }
        }
        if let Some(w1) = self.w1 {
            cfg.w1 = w1;
            cfg.w1_schedule = W1Schedule::Constant;
        }
        if let Some(w2) = self.w2 {
            cfg.w2 = w2;
        }
        if let Some(flag) = self.allow_infeasible {
            cfg.allow_infeasible = flag;
        }
        match &mut cfg.x_update {
            XUpdate::Linearized { estimator, batch } => {
                if let Some(b) = self.batch {
                    *batch = b;
                }
                if let (Some(q), EstimatorKind::Spider { restart_q }) = (self.restart_q, estimator) {
                    *restart_q = q;
                }
                let inner_only = [self.inner_m, self.batch_m, self.pair_batch].iter().any(Option::is_some)
                    || [self.c1, self.tau, self.alpha].iter().any(Option::is_some)
                    || self.uniform_output.is_some();
                if inner_only {
                    return Err(Error::Config("inner-solver keys given for a linearized method".into()));
                }
            }
            XUpdate::InnerAccel(inner) => {
                if self.batch.is_some() || self.restart_q.is_some() {
                    return Err(Error::Config("'batch'/'restart_q' apply to linearized methods only".into()));
                }
                if let Some(m) = self.inner_m {
                    inner.m = m;
                }
                if let Some(b) = self.batch_m {
                    inner.batch_m = b;
                }
                if let Some(b) = self.pair_batch {
                    inner.pair_batch = b;
                }
                if let Some(c1) = self.c1 {
                    inner.c1 = c1;
                }
                if let Some(tau) = self.tau {
                    inner.tau = tau;
                }
                if let Some(a) = self.alpha {
                    inner.alpha = AlphaRule::Fixed(a);
                }
                if let Some(u) = self.uniform_output {
                    inner.output = if u { InnerOutput::UniformAnchor } else { InnerOutput::Last };
                }
            }
        }
        cfg.check()
    }
}
