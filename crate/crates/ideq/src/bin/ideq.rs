//! Thin command-line front end over the experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ideq::error::Error;
use ideq::harness::{
    gen_data, grad_norms_from_csv, rate_fit, run_bench, run_solve, run_train, ExperimentConfig,
    GenKind,
};
use ideq::solver::Scheme;

#[derive(Parser)]
#[command(name = "ideq", about = "Inertial fixed-point solvers for imaging inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key=value experiment config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scheme override.
    #[arg(long)]
    scheme: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic image set.
    GenData {
        #[command(flatten)]
        common: Common,
        /// piecewise-constant | smooth-bump | shepp-like-phantom
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Reconstruct one instance and write estimate + trajectory.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Train the solver parameters and write log + checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Compare schemes over a shared instance set.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the decay exponent of a trajectory's gradient norms.
    RateFit {
        /// Trajectory CSV produced by `solve`.
        trajectory: PathBuf,
        /// 1-based window start (default: last decade).
        #[arg(long)]
        window_start: Option<usize>,
        /// 1-based window end (default: trajectory length).
        #[arg(long)]
        window_end: Option<usize>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::parse_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(scheme) = &common.scheme {
        cfg.scheme = Scheme::parse(scheme)?;
    }
    Ok(cfg)
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Diverged(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData {
            common,
            kind,
            count,
            size,
        } => {
            let cfg = load_config(&common)?;
            let kind = match kind {
                Some(k) => GenKind::parse(&k)?,
                None => cfg.gen_kind,
            };
            let paths = gen_data(
                kind,
                count.unwrap_or(cfg.gen_count),
                size.unwrap_or(cfg.gen_size),
                cfg.seed,
                &cfg.out_dir,
            )?;
            println!("wrote {} images to {}", paths.len(), cfg.out_dir.display());
        }
        Command::Solve { common } => {
            let cfg = load_config(&common)?;
            let summary = run_solve(&cfg)?;
            if summary.averaging_fallback {
                eprintln!("warning: averaging window empty, returned the final iterate");
            }
            println!("{}", summary.line());
        }
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            let summary = run_train(&cfg)?;
            println!(
                "best_epoch={} best_val_psnr={:.4} init_val_psnr={:.4} epochs_run={} diverged={}",
                summary.best_epoch,
                summary.best_psnr,
                summary.init_psnr,
                summary.epochs_run,
                summary.total_diverged
            );
        }
        Command::Bench { common } => {
            let cfg = load_config(&common)?;
            let report = run_bench(&cfg)?;
            print!("{}", report.csv);
        }
        Command::RateFit {
            trajectory,
            window_start,
            window_end,
        } => {
            let norms = grad_norms_from_csv(&trajectory)?;
            let end = window_end.unwrap_or(norms.len());
            let start = window_start.unwrap_or_else(|| (end / 10).max(1));
            let fit = rate_fit(&norms, (start, end))?;
            println!(
                "slope={:.6} intercept={:.6} r2={:.6} window={}..{}",
                fit.slope, fit.intercept, fit.r2, fit.window.0, fit.window.1
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
