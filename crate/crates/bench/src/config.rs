//! Experiment config files (TOML).
//!
//! ```toml
//! [problem]
//! kind = "scad_classification"      # or "fused_lasso"
//! graph = "identity"                # "chain", { edges = "g.txt" }, { matrix = "a.txt" }
//! lambda1 = 1e-5
//!
//! [problem.dataset]
//! kind = "synthetic"                # or "libsvm" with path = "..."
//! n = 2000
//! d = 50
//! seed = 7
//!
//! [algorithms.AH-SADMM]
//! inner_m = 1
//!
//! [algorithms.SADMM]
//!
//! [run]
//! epochs = 20
//! seeds = [1, 2, 3, 4, 5]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use sadmm_core::admm::Problem;
use sadmm_core::constraint::{build_constraint, GraphSpec};
use sadmm_core::data::{parse_libsvm, Dataset};
use sadmm_core::objective::SigmoidLoss;
use sadmm_core::prox::Regularizer;
use sadmm_core::{Error, Result};

use crate::algorithms::{Algorithm, Overrides};
use crate::synth::{synth_data, FeatureKind};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SADMM_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Sigmoid loss with a SCAD penalty on `y = x`.
    ScadClassification,
    /// Sigmoid loss with an l1 penalty on graph differences `y = A x`.
    FusedLasso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphConfig {
    Identity,
    Chain,
    #[serde(untagged)]
    Edges { edges: PathBuf },
    #[serde(untagged)]
    Matrix { matrix: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Features {
    #[default]
    Gaussian,
    RandomWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        n: usize,
        d: usize,
        seed: u64,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        features: Features,
    },
    Libsvm {
        path: PathBuf,
        n_features: Option<usize>,
    },
}

fn default_noise() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub dataset: DatasetConfig,
    /// Defaults to the identity for classification and the chain for the
    /// fused lasso.
    pub graph: Option<GraphConfig>,
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    #[serde(default = "default_scad_c")]
    pub scad_c: f64,
    #[serde(default = "default_scad_kappa")]
    pub scad_kappa: f64,
}

fn default_lambda1() -> f64 {
    1e-5
}
fn default_scad_c() -> f64 {
    3.7
}
fn default_scad_kappa() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPoint {
    #[default]
    Normal,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Gradient budget in passes over the data.
    pub epochs: u64,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_probe_every")]
    pub probe_every: usize,
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub start: StartPoint,
}

fn default_probe_every() -> usize {
    10
}

/// One parameter varied over a list of values, applied to every algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
}

impl SweepConfig {
    pub fn overrides(&self, value: f64) -> Result<Overrides> {
        let mut o = Overrides::default();
        let as_count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} must be a nonnegative integer, got {value}", self.parameter)))
            }
        };
        match self.parameter.as_str() {
            "beta" => o.beta = Some(value),
            "s" => o.s = Some(value),
            "eta" => o.eta = Some(value),
            "w1" => o.w1 = Some(value),
            "w2" => o.w2 = Some(value),
            "c1" => o.c1 = Some(value),
            "tau" => o.tau = Some(value),
            "alpha" => o.alpha = Some(value),
            "inner_m" => o.inner_m = Some(as_count()?),
            other => return Err(Error::Config(format!("cannot sweep over '{other}'"))),
        }
        Ok(o)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub algorithms: BTreeMap<Algorithm, Overrides>,
    pub run: RunConfig,
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let DatasetConfig::Libsvm { path, .. } = &mut self.problem.dataset {
            fix(path);
        }
        match &mut self.problem.graph {
            Some(GraphConfig::Edges { edges }) => fix(edges),
            Some(GraphConfig::Matrix { matrix }) => fix(matrix),
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        if self.run.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if let DatasetConfig::Synthetic { n, d, .. } = self.problem.dataset {
            if n == 0 || d == 0 {
                return Err(Error::Config("synthetic n and d must be >= 1".into()));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep has no values".into()));
            }
            for &v in &sweep.values {
                sweep.overrides(v)?;
            }
        }
        self.regularizer()?;
        Ok(())
    }

    pub fn regularizer(&self) -> Result<Regularizer> {
        let p = &self.problem;
        match p.kind {
            ProblemKind::ScadClassification => Regularizer::scad(p.lambda1, p.scad_c, p.scad_kappa),
            ProblemKind::FusedLasso => Regularizer::l1(p.lambda1),
        }
    }

    /// Output directory: the config value, then the environment, then `out`.
    pub fn output_dir(&self) -> PathBuf {
        self.run
            .output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.problem.dataset {
            DatasetConfig::Synthetic { n, d, seed, noise, features } => {
                let kind = match features {
                    Features::Gaussian => FeatureKind::Gaussian,
                    Features::RandomWalk => FeatureKind::RandomWalk,
                };
                Ok(synth_data(*n, *d, *seed, *noise, kind)?.dataset)
            }
            DatasetConfig::Libsvm { path, n_features } => {
                let file = std::fs::File::open(path)
                    .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
                parse_libsvm(std::io::BufReader::new(file), *n_features)
            }
        }
    }

    pub fn graph_spec(&self, d: usize) -> GraphSpec {
        let graph = self.problem.graph.clone().unwrap_or(match self.problem.kind {
            ProblemKind::ScadClassification => GraphConfig::Identity,
            ProblemKind::FusedLasso => GraphConfig::Chain,
        });
        match graph {
            GraphConfig::Identity => GraphSpec::Identity(d),
            GraphConfig::Chain => GraphSpec::ChainDifference(d),
            GraphConfig::Edges { edges } => GraphSpec::EdgeList { path: edges, n: Some(d) },
            GraphConfig::Matrix { matrix } => GraphSpec::Matrix(matrix),
        }
    }

    /// Loads the data and the coupling matrix. Every file the config names
    /// is read here, so a missing one fails before any run starts.
    pub fn build_problem(&self) -> Result<(Problem, Dataset)> {
        let data = self.load_dataset()?;
        let constraint = build_constraint(&self.graph_spec(data.n_features()))?;
        let loss = SigmoidLoss::new(data.clone());
        let problem = Problem::new(Arc::new(loss), constraint, self.regularizer()?)?;
        Ok((problem, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[problem]
kind = "scad_classification"
[problem.dataset]
kind = "synthetic"
n = 40
d = 5
seed = 3

[algorithms.SADMM]
[algorithms.AH-SADMM]
inner_m = 2

[run]
epochs = 2
seeds = [1, 2]
"#;

    #[test]
    fn parses_minimal() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.algorithms.len(), 2);
        assert_eq!(cfg.algorithms[&Algorithm::AhSadmm].inner_m, Some(2));
        assert_eq!(cfg.problem.lambda1, 1e-5);
        assert_eq!((cfg.problem.scad_c, cfg.problem.scad_kappa), (3.7, 0.1));
        assert_eq!(cfg.run.probe_every, 10);
        assert!(matches!(cfg.graph_spec(5), GraphSpec::Identity(5)));
        let (p, data) = cfg.build_problem().unwrap();
        assert_eq!(data.n_samples(), 40);
        assert_eq!(p.constraint.n_x(), 5);
    }

    #[test]
    fn graph_forms() {
        let with = |g: &str| MINIMAL.replace("kind = \"scad_classification\"", &format!("kind = \"fused_lasso\"\ngraph = {g}"));
        let cfg = ExperimentConfig::from_toml(&with("\"chain\"")).unwrap();
        assert!(matches!(cfg.graph_spec(5), GraphSpec::ChainDifference(5)));
        let cfg = ExperimentConfig::from_toml(&with("{ edges = \"g.txt\" }")).unwrap();
        assert_eq!(cfg.problem.graph, Some(GraphConfig::Edges { edges: "g.txt".into() }));
        let cfg = ExperimentConfig::from_toml(&with("{ matrix = \"a.txt\" }")).unwrap();
        assert_eq!(cfg.problem.graph, Some(GraphConfig::Matrix { matrix: "a.txt".into() }));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("epochs = 2", "epochs = 0")).is_err());
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("seeds = [1, 2]", "seeds = []")).is_err());
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("[algorithms.SADMM]", "[algorithms.ADAM]")).is_err());
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("inner_m = 2", "inner_n = 2")).is_err());
        let no_algos = MINIMAL.replace("[algorithms.SADMM]\n[algorithms.AH-SADMM]\ninner_m = 2", "");
        assert!(ExperimentConfig::from_toml(&no_algos).is_err());
        let sweep = format!("{MINIMAL}\n[sweep]\nparameter = \"inner_m\"\nvalues = [1.5]\n");
        assert!(ExperimentConfig::from_toml(&sweep).is_err());
    }

    #[test]
    fn missing_dataset_file_is_dataset_error() {
        let text = MINIMAL.replace(
            "kind = \"synthetic\"\nn = 40\nd = 5\nseed = 3",
            "kind = \"libsvm\"\npath = \"/nonexistent/file.svm\"",
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert!(matches!(cfg.build_problem(), Err(Error::Dataset(_))));
    }

    #[test]
    fn sweep_overrides() {
        let s = SweepConfig { parameter: "s".into(), values: vec![0.5] };
        assert_eq!(s.overrides(0.5).unwrap().s, Some(0.5));
        let s = SweepConfig { parameter: "inner_m".into(), values: vec![3.0] };
        assert_eq!(s.overrides(3.0).unwrap().inner_m, Some(3));
        let s = SweepConfig { parameter: "gamma".into(), values: vec![1.0] };
        assert!(s.overrides(1.0).is_err());
    }
}
