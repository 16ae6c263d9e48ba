//! Thin command-line runner over `softlabel::experiment`.
//!
//! Exit codes: 0 ran to completion (attack failures are results, not
//! errors), 2 config or argument error, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use softlabel::experiment::{cmd_attack, cmd_gen, cmd_reconstruct, cmd_sweep, cmd_trace, ExperimentConfig};
use softlabel::Error;

#[derive(Parser)]
#[command(name = "softlabel", version, about = "Soft-label recovery from last-layer gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; omitted fields take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads (0 = one per core)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a victim and captured instances
    Gen(Common),
    /// Recover labels for every instance; writes report.json and per_instance.csv
    Attack(Common),
    /// Invert an unbiased FCN victim from recovered features
    Reconstruct(Common),
    /// PSO-only recovery under additive gradient noise; writes sweep.csv
    Sweep(Common),
    /// Sample the λ-loss landscape of one instance; writes trace.csv
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instance: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        lo: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        hi: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(o) = &common.out {
        config.out = o.clone();
    }
    if let Some(j) = common.jobs {
        config.jobs = j;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen(c) => {
            let m = cmd_gen(&load(&c)?)?;
            println!("generated {} instances", m.instances.len());
        }
        Command::Attack(c) => {
            let r = cmd_attack(&load(&c)?)?;
            let a = &r.aggregates;
            println!(
                "accuracy {:.4} ({}/{}), mean L_r {:e}, median L_r {:e}",
                a.accuracy, a.correct, a.instances, a.mean_lr, a.median_lr
            );
        }
        Command::Reconstruct(c) => {
            let r = cmd_reconstruct(&load(&c)?)?;
            let done = r.records.iter().filter(|x| x.reconstructed).count();
            println!(
                "reconstructed {done}/{}, mean PSNR {:.2} dB, mean SSIM {:.4}",
                r.records.len(),
                r.mean_psnr,
                r.mean_ssim
            );
        }
        Command::Sweep(c) => {
            print!("{}", cmd_sweep(&load(&c)?)?.to_csv());
        }
        Command::Trace { common, instance, lo, hi, steps } => {
            let mut config = load(&common)?;
            let t = &mut config.trace;
            t.instance = instance.unwrap_or(t.instance);
            t.lo = lo.unwrap_or(t.lo);
            t.hi = hi.unwrap_or(t.hi);
            t.steps = steps.unwrap_or(t.steps);
            println!("wrote {}", cmd_trace(&config)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } | Error::Json { .. } | Error::Format { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
