use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sadmm_bench::config::ExperimentConfig;
use sadmm_bench::experiment::{median, run_experiment, validate_params};
use sadmm_bench::output::{RunStatus, SummaryRow};
use sadmm_bench::probe::{run_suite_from_config, ProbeSuite};

#[derive(Parser)]
#[command(name = "sadmm-bench", about = "Stochastic ADMM experiment harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm and seed of a config, one after another.
    Run {
        config: PathBuf,
        /// Overrides `[run] output_dir` and $SADMM_OUTPUT_DIR.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Like `run`, but in parallel and expanding the `[sweep]` section.
    Sweep {
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(short, long)]
        jobs: Option<usize>,
    },
    /// Bias and variance enumeration checks on the config's data.
    Probe {
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Report whether each algorithm's (w1, w2) satisfy the potential-descent
    /// conditions.
    ValidateParams { config: PathBuf },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn print_summary(rows: &[SummaryRow]) {
    let mut groups: Vec<(String, String)> = rows.iter().map(|r| (r.setting.clone(), r.algorithm.clone())).collect();
    groups.dedup();
    println!("{:<16} {:<12} {:>5} {:>14} {:>10}", "setting", "algorithm", "ok", "median loss", "med. acc");
    for (setting, algo) in groups {
        let sel: Vec<&SummaryRow> = rows.iter().filter(|r| r.setting == setting && r.algorithm == algo).collect();
        let ok = sel.iter().filter(|r| r.status == RunStatus::Ok).count();
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
        println!(
            "{:<16} {:<12} {:>2}/{:<2} {:>14} {:>10}",
            if setting.is_empty() { "-" } else { &setting },
            algo,
            ok,
            sel.len(),
            fmt(median(sel.iter().filter_map(|r| r.final_loss))),
            fmt(median(sel.iter().filter_map(|r| r.final_accuracy))),
        );
    }
    for r in rows.iter().filter(|r| r.status != RunStatus::Ok) {
        eprintln!("{} seed {}: {:?}: {}", r.algorithm, r.seed, r.status, r.message);
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let root = out.unwrap_or_else(|| cfg.output_dir());
            let rows = run_experiment(&cfg, &root, false)?;
            print_summary(&rows);
            println!("wrote {}", root.display());
        }
        Command::Sweep { config, out, jobs } => {
            let cfg = load(&config)?;
            let root = out.unwrap_or_else(|| cfg.output_dir());
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
            let rows = pool.install(|| run_experiment(&cfg, &root, true))?;
            print_summary(&rows);
            println!("wrote {}", root.display());
        }
        Command::Probe { config, out, seed } => {
            let cfg = load(&config)?;
            let suite = ProbeSuite { seed, ..ProbeSuite::default() };
            let rows = run_suite_from_config(&cfg, &suite)?;
            let root = out.unwrap_or_else(|| cfg.output_dir());
            std::fs::create_dir_all(&root)?;
            let path = root.join("probe_suite.csv");
            let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            let failed: Vec<_> = rows.iter().filter(|r| !r.holds).collect();
            for r in &rows {
                println!(
                    "{:<8} alpha={:<5} t={} measured={:.3e} reference={:.3e} {}",
                    r.check,
                    r.alpha,
                    r.t,
                    r.measured,
                    r.reference,
                    if r.holds { "ok" } else { "VIOLATED" }
                );
            }
            println!("wrote {}", path.display());
            if !failed.is_empty() {
                bail!("{} probe checks failed", failed.len());
            }
        }
        Command::ValidateParams { config } => {
            let cfg = load(&config)?;
            let mut infeasible = 0;
            for (algo, sc, p) in validate_params(&cfg)? {
                println!(
                    "{algo:<12} beta={} s={} w1={:.4e} (min {:.4e}) w2={:.4e} (min {:.4e}) {}",
                    sc.beta,
                    sc.s,
                    sc.w1,
                    p.min_w1,
                    sc.w2,
                    p.min_w2,
                    if p.feasible { "feasible" } else { "INFEASIBLE" }
                );
                infeasible += usize::from(!p.feasible);
            }
            if infeasible > 0 {
                println!("{infeasible} configuration(s) violate the descent conditions; runs proceed with a warning");
            }
        }
    }
    Ok(())
}
