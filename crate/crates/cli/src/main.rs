use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wdro::classify::{evaluate, LfdClassifier};
use wdro::dist::Exponent;
use wdro::error::{Error, ErrorKind, Result};
use wdro::harness::{
    emit_results, learn, load_csv, load_distribution_csv, run_experiment, trial_data, write_distribution_csv,
    ExperimentConfig, Mode,
};
use wdro::lfd::{solve_lfd, solve_lfd_penalized, solve_lfd_separated, LfdSolution};
use wdro::par::Execution;
use wdro::transport::{barycenter, union_support, wasserstein};

#[derive(Parser)]
#[command(name = "wdro", version, about = "Wasserstein-robust least-favorable distributions and domain-generalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the Wasserstein distance between two distributions.
    Ot {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = parse_exponent)]
        exponent: u8,
    },
    /// Fixed-support W2 barycenter on the union of the source supports.
    Barycenter {
        #[arg(long, value_delimiter = ',', required = true)]
        sources: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Least-favorable pair for two centers and radii.
    Lfd {
        #[arg(long)]
        q1: PathBuf,
        #[arg(long)]
        q2: PathBuf,
        #[arg(long)]
        theta1: f64,
        #[arg(long)]
        theta2: f64,
        #[arg(long, conflicts_with = "lambda")]
        gamma_sep: Option<f64>,
        /// Weight of the transport penalty; solved by convex-concave iteration.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 1, value_parser = parse_exponent)]
        exponent: u8,
        #[arg(long, default_value_t = 50)]
        max_outer: usize,
        #[arg(long, default_value_t = 1e-8)]
        ccp_tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build class models from a config's sources and run the radius loop.
    LearnRadii {
        #[arg(long)]
        config: PathBuf,
        /// Samples per source domain; defaults to the config's first size.
        #[arg(long)]
        source_size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy and confusion matrix of a saved solution on labeled data.
    Classify {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Run every trial of a config and write per-trial and summary results.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `output.csv` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Defaults to `output.summary` of the config.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
}

fn parse_exponent(s: &str) -> std::result::Result<u8, String> {
    match s {
        "1" => Ok(1),
        "2" => Ok(2),
        _ => Err(format!("exponent must be 1 or 2, got {s}")),
    }
}

fn exponent(p: u8) -> Exponent {
    if p == 2 {
        Exponent::Two
    } else {
        Exponent::One
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_solution(path: &Path) -> Result<LfdSolution> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ot { a, b, exponent: p } => {
            let a = load_distribution_csv(&a)?;
            let b = load_distribution_csv(&b)?;
            println!("{}", wasserstein(&a, &b, exponent(p))?);
        }
        Command::Barycenter { sources, out } => {
            let sources = sources.iter().map(|p| load_distribution_csv(p)).collect::<Result<Vec<_>>>()?;
            let center = barycenter(&sources, &union_support(&sources))?;
            write_distribution_csv(&out, &center)?;
        }
        Command::Lfd {
            q1,
            q2,
            theta1,
            theta2,
            gamma_sep,
            lambda,
            exponent: p,
            max_outer,
            ccp_tol,
            out,
        } => {
            let q1 = load_distribution_csv(&q1)?;
            let q2 = load_distribution_csv(&q2)?;
            let p = exponent(p);
            let solution = match (gamma_sep, lambda) {
                (Some(g), _) => solve_lfd_separated(&q1, &q2, theta1, theta2, g, p)?,
                (None, Some(l)) => solve_lfd_penalized(&q1, &q2, theta1, theta2, l, p, max_outer, ccp_tol)?,
                (None, None) => solve_lfd(&q1, &q2, theta1, theta2, p)?,
            };
            write(&out, &solution.to_json()?)?;
            println!("objective {}", solution.objective);
        }
        Command::LearnRadii {
            config,
            source_size,
            trial,
            out,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let size = match config.mode {
                Mode::Synthetic => source_size.unwrap_or(config.source_sizes[0]),
                Mode::Files => 0,
            };
            let data = trial_data(&config, size, trial)?;
            let (_, trace) = learn(&config, &data.sources)?;
            write(&out, &trace.to_json()?)?;
            let last = trace.iterations.last().expect("at least one iteration");
            println!(
                "iterations {} accepted {} theta1 {} theta2 {}",
                trace.iterations.len(),
                trace.accepted,
                last.theta1,
                last.theta2
            );
        }
        Command::Classify { solution, test, k } => {
            let solution = read_solution(&solution)?;
            let test = load_csv(&test)?;
            let classifier = LfdClassifier::new(&solution, k)?;
            let e = evaluate(|x| classifier.predict(x), &test, Execution::Parallel)?;
            println!("accuracy {}", e.accuracy);
            println!("confusion (rows: true 1, 2; columns: predicted 1, 2)");
            for row in e.confusion {
                println!("{} {}", row[0], row[1]);
            }
        }
        Command::Synth {
            config,
            out,
            summary,
            sequential,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let csv = out
                .or_else(|| config.output.csv.clone())
                .ok_or_else(|| Error::Config("no output path: pass --out or set output.csv".into()))?;
            let summary = summary.or_else(|| config.output.summary.clone());
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let records = run_experiment(&config, exec)?;
            emit_results(&records, &csv, summary.as_deref())?;
            println!("{} rows written to {}", records.len(), csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Solver => 2,
                ErrorKind::Data => 3,
            })
        }
    }
}
