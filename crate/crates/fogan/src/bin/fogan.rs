use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fogan::corpus::{encode_lines, joint_alphabet};
use fogan::critic_solver::solve_optimal_critic;
use fogan::measures::EmpiricalMeasure;
use fogan::metrics::{ngram_jsd, NGramDistribution};

#[derive(Parser)]
#[command(
    name = "fogan",
    about = "Penalized Wasserstein divergences: solvers, training toys, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write trace/metrics/plots.
    Run {
        /// Path to a flat key = value config file.
        config: PathBuf,
        /// Moving-average window for the plotted metric curve.
        #[arg(long, default_value_t = 1)]
        smooth: usize,
    },
    /// Run the oracle/invariant suite and print one line per check.
    Check,
    /// Solve the optimal critic for two point-set CSV files.
    Solve {
        /// CSV of data points, one comma-separated point per line.
        #[arg(long)]
        p: PathBuf,
        /// CSV of generated points, one comma-separated point per line.
        #[arg(long)]
        q: PathBuf,
        /// Pair-penalty weight λ.
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
    },
    /// n-gram Jensen-Shannon divergence between two line corpora.
    Jsd {
        /// First corpus: UTF-8 text, one sequence per line.
        #[arg(long)]
        a: PathBuf,
        /// Second corpus, same format.
        #[arg(long)]
        b: PathBuf,
        /// n-gram order.
        #[arg(long)]
        n: usize,
    },
}

fn load_points(path: &PathBuf) -> Result<EmpiricalMeasure, fogan::Error> {
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let coords: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse()).collect();
        let coords = coords.map_err(|_| {
            fogan::Error::Config(format!(
                "{}:{}: not a comma-separated point",
                path.display(),
                lineno + 1
            ))
        })?;
        points.push(coords);
    }
    EmpiricalMeasure::uniform(points)
}

fn run() -> Result<(), fogan::Error> {
    match Cli::parse().command {
        Command::Run { config, smooth } => {
            let summary = fogan::experiment::run_experiment(&config, smooth)?;
            println!(
                "completed {} iterations; outputs in {}",
                summary.iters_run,
                summary.output_dir.display()
            );
            if let Some(bayes) = summary.bayes {
                println!(
                    "bayes limit for {}: {:.4} ± {:.4}",
                    summary.metric_name, bayes.mean, bayes.std
                );
                if bayes.degenerate {
                    eprintln!("warning: bayes limit std from a single repeat is meaningless");
                }
            }
            if let Some(m) = summary.final_metric() {
                println!("final {}: {}", summary.metric_name, m);
            }
            Ok(())
        }
        Command::Check => {
            let results = fogan::check::run_checks();
            let mut failed = 0;
            for r in &results {
                let status = if r.pass { "PASS" } else { "FAIL" };
                println!("{status}  {:<42} {}", r.name, r.detail);
                if !r.pass {
                    failed += 1;
                }
            }
            if failed > 0 {
                return Err(fogan::Error::Numeric(format!("{failed} checks failed")));
            }
            Ok(())
        }
        Command::Solve {
            p,
            q,
            lambda,
            tolerance,
            max_iters,
        } => {
            let pm = load_points(&p)?;
            let qm = load_points(&q)?;
            let (critic, report) = solve_optimal_critic(&pm, &qm, lambda, tolerance, max_iters)?;
            println!("# data-side critic values");
            for (point, value) in pm.points().iter().zip(critic.p_values()) {
                println!("{}  ->  {value:.12}", format_point(point));
            }
            println!("# generated-side critic values");
            for (point, value) in qm.points().iter().zip(critic.q_values()) {
                println!("{}  ->  {value:.12}", format_point(point));
            }
            let tau = fogan::critic_solver::tau_p_value(&critic, &pm, &qm, lambda)?;
            println!("tau_p = {tau:.12}");
            println!(
                "sweeps = {}, final_delta = {:.3e}, slope residuals = ({:.3e}, {:.3e})",
                report.iterations,
                report.final_delta,
                report.slope_residual_p,
                report.slope_residual_q
            );
            if let Some(rate) = report.contraction_rate {
                println!("contraction rate ~ {rate:.4}");
            }
            Ok(())
        }
        Command::Jsd { a, b, n } => {
            let ta = std::fs::read_to_string(&a)?;
            let tb = std::fs::read_to_string(&b)?;
            let alphabet = joint_alphabet(&[&ta, &tb]);
            let da = NGramDistribution::from_sequences(&encode_lines(&ta, &alphabet)?, n)?;
            let db = NGramDistribution::from_sequences(&encode_lines(&tb, &alphabet)?, n)?;
            println!("{}", ngram_jsd(&da, &db)?);
            Ok(())
        }
    }
}

fn format_point(point: &[f64]) -> String {
    point
        .iter()
        .map(|c| format!("{c:.6}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
