//! Runs every (algorithm, seed) pair of a config under a shared gradient
//! budget and writes one trace and one probe CSV per run plus a summary.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;

use sadmm_core::admm::{potential_params, run_with_observer, PotentialParams, Problem, SolverConfig};
use sadmm_core::data::Dataset;
use sadmm_core::{Error, Result};

use crate::algorithms::{default_config, Algorithm, Overrides};
use crate::config::{ExperimentConfig, StartPoint};
use crate::output::{write_probes, write_summary, write_trace, RunStatus, SummaryRow};
use crate::synth::accuracy;

#[derive(Debug, Clone)]
pub struct Job {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// `parameter=value` for sweep runs, empty otherwise.
    pub setting: String,
    pub overrides: Vec<Overrides>,
}

impl Job {
    /// Trace file stem, `{algo}_{seed}`.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.algorithm, self.seed)
    }

    /// Directory of this job's CSVs below the output root.
    pub fn dir(&self, root: &Path) -> PathBuf {
        if self.setting.is_empty() {
            root.to_path_buf()
        } else {
            root.join(&self.setting)
        }
    }
}

/// Jobs in file order: sweep value, then algorithm, then seed.
pub fn jobs(cfg: &ExperimentConfig) -> Result<Vec<Job>> {
    let settings: Vec<(String, Option<Overrides>)> = match &cfg.sweep {
        None => vec![(String::new(), None)],
        Some(sweep) => sweep
            .values
            .iter()
            .map(|&v| Ok((format!("{}={v}", sweep.parameter), Some(sweep.overrides(v)?))))
            .collect::<Result<_>>()?,
    };
    let mut out = Vec::new();
    for (setting, extra) in &settings {
        for (algorithm, overrides) in &cfg.algorithms {
            for &seed in &cfg.run.seeds {
                out.push(Job {
                    algorithm: *algorithm,
                    seed,
                    setting: setting.clone(),
                    overrides: std::iter::once(overrides.clone()).chain(extra.clone()).collect(),
                });
            }
        }
    }
    Ok(out)
}

/// Solver settings of one job: literature defaults, then overrides, then the
/// run section. The budget is `N * epochs` sample gradients.
pub fn solver_config(cfg: &ExperimentConfig, problem: &Problem, job: &Job) -> Result<SolverConfig> {
    let n = problem.objective.n_samples();
    let mut sc = default_config(job.algorithm, n, problem.objective.lipschitz())?;
    for o in &job.overrides {
        o.apply(&mut sc)?;
    }
    let budget = n as u64 * cfg.run.epochs;
    sc.seed = job.seed;
    sc.grad_budget = Some(budget);
    // every iteration costs at least one sample gradient
    sc.outer_iters = budget as usize;
    sc.probe_every = cfg.run.probe_every;
    sc.record_wall_time = cfg.run.record_wall_time;
    sc.x0 = match cfg.run.start {
        StartPoint::Normal => None,
        StartPoint::Zero => Some(DVector::zeros(problem.constraint.n_x())),
    };
    Ok(sc)
}

/// Runs one job and writes its two CSVs into `dir`. Solver failures end up
/// in the returned row; only I/O errors propagate.
pub fn run_job(
    cfg: &ExperimentConfig,
    problem: &Problem,
    data: &Dataset,
    job: &Job,
    root: &Path,
) -> Result<SummaryRow> {
    let dir = job.dir(root);
    std::fs::create_dir_all(&dir)?;
    let mut trace = Vec::new();
    let mut probes = Vec::new();
    let result = solver_config(cfg, problem, job).and_then(|sc| {
        run_with_observer(problem, &sc, &mut |r, p| {
            trace.push(r.clone());
            probes.extend(p.cloned());
        })
    });

    write_trace(BufWriter::new(File::create(dir.join(format!("{}.csv", job.stem())))?), &trace)?;
    write_probes(
        BufWriter::new(File::create(dir.join(format!("{}_probe.csv", job.stem())))?),
        &probes,
    )?;

    let last = trace.last();
    let (status, message, accuracy) = match &result {
        Ok(out) => (RunStatus::Ok, out.warnings.join("; "), Some(accuracy(data, &out.last.x))),
        Err(e @ Error::Divergence { .. }) => (RunStatus::Diverged, e.to_string(), None),
        Err(e) => (RunStatus::Failed, e.to_string(), None),
    };
    Ok(SummaryRow {
        algorithm: job.algorithm.to_string(),
        seed: job.seed,
        setting: job.setting.clone(),
        status,
        iterations: last.map_or(0, |r| r.k),
        grad_calls: last.map_or(0, |r| r.grad_calls),
        final_loss: last.map(|r| r.loss),
        final_accuracy: accuracy,
        wall_time_s: last.and_then(|r| r.wall_time),
        message,
    })
}

/// Runs all jobs and writes `summary.csv` into `root`. With `parallel`, jobs
/// run on the rayon pool; output files and row order do not depend on it.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path, parallel: bool) -> Result<Vec<SummaryRow>> {
    cfg.validate()?;
    // resolves every input file before the first run
    let (problem, data) = cfg.build_problem()?;
    let jobs = jobs(cfg)?;
    std::fs::create_dir_all(root)?;
    let rows: Vec<SummaryRow> = if parallel {
        jobs.par_iter()
            .map(|j| run_job(cfg, &problem, &data, j, root))
            .collect::<Result<_>>()?
    } else {
        jobs.iter()
            .map(|j| run_job(cfg, &problem, &data, j, root))
            .collect::<Result<_>>()?
    };
    write_summary(BufWriter::new(File::create(root.join("summary.csv"))?), &rows)?;
    Ok(rows)
}

/// Feasibility report for each configured algorithm at the first seed (and
/// first sweep value).
pub fn validate_params(cfg: &ExperimentConfig) -> Result<Vec<(Algorithm, SolverConfig, PotentialParams)>> {
    let (problem, _) = cfg.build_problem()?;
    let all = jobs(cfg)?;
    let first = all[0].setting.clone();
    let mut out = Vec::new();
    for job in all.into_iter().filter(|j| j.seed == cfg.run.seeds[0] && j.setting == first) {
        let sc = solver_config(cfg, &problem, &job)?;
        let params = potential_params(&sc, &problem)?;
        out.push((job.algorithm, sc, params));
    }
    Ok(out)
}

/// Median of the finite values, `None` when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}
