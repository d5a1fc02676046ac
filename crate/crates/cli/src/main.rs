use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tiltgp::harness::{cmd_all, cmd_collect, cmd_evaluate, cmd_report, cmd_train, Evaluation, ExperimentConfig};
use tiltgp::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_UNSTABLE: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

/// Learn actuation mismatch of a tilt-arm hexarotor and compensate it in
/// closed-loop simulation.
///
/// Any config value can be overridden with `--section.key=value`, e.g.
/// `--gp.subsample=60` or `--mismatch.preset=ideal`.
#[derive(Parser, Debug)]
#[command(name = "tiltgp", version)]
struct Cli {
    /// TOML config file. Without it, built-in defaults are used and
    /// `--seed` is required.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overrides the one in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run directory, overrides `output.directory`.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fly the training trajectory and write the subsampled training set.
    Collect,
    /// Fit the model to the training set.
    Train,
    /// Fly the evaluation trajectory with compensation off and on.
    Evaluate,
    /// Recompute the reports from stored logs.
    Report,
    /// Collect, train and evaluate.
    All,
}

/// Split `--section.key=value` overrides from the arguments clap handles.
fn split_overrides(args: impl Iterator<Item = String>) -> (Vec<String>, Vec<String>) {
    let (overrides, rest) = args.partition(|a| {
        a.strip_prefix("--")
            .and_then(|rest| rest.split_once('='))
            .is_some_and(|(key, _)| key.contains('.'))
    });
    (rest, overrides)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Unstable { .. } => EXIT_UNSTABLE,
        Error::NonFinite(_) | Error::Cholesky(_) | Error::Unfitted => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

fn finish(eval: Evaluation) -> ExitCode {
    println!("{}", eval.summary());
    if eval.unstable() > 0 {
        log::error!("{} evaluation episode(s) diverged", eval.unstable());
        return ExitCode::from(EXIT_UNSTABLE);
    }
    ExitCode::SUCCESS
}

fn run(cli: Cli, mut overrides: Vec<String>) -> Result<ExitCode, Error> {
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    if let Some(out) = cli.out {
        cfg.output.directory = out;
    }
    log::info!("config hash {}", cfg.config_hash()?);
    Ok(match cli.command {
        Command::Collect => {
            let set = cmd_collect(&cfg)?;
            println!("training set: {} pairs", set.len());
            ExitCode::SUCCESS
        }
        Command::Train => {
            let model = cmd_train(&cfg)?;
            for a in model.axes() {
                println!("axis {}: log marginal likelihood {:.4}", a.axis(), a.log_marginal_likelihood());
            }
            ExitCode::SUCCESS
        }
        Command::Evaluate => finish(cmd_evaluate(&cfg)?),
        Command::Report => finish(cmd_report(&cfg)?),
        Command::All => finish(cmd_all(&cfg)?),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (args, overrides) = split_overrides(std::env::args());
    let cli = Cli::parse_from(args);
    match run(cli, overrides) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_are_split_from_flags() {
        let argv = ["tiltgp", "--seed", "4", "--gp.subsample=20", "--out=x", "all", "--a.b=1"];
        let (args, overrides) = split_overrides(argv.iter().map(|s| s.to_string()));
        assert_eq!(args, ["tiltgp", "--seed", "4", "--out=x", "all"]);
        assert_eq!(overrides, ["--gp.subsample=20", "--a.b=1"]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Unstable { time: 1.0 }), EXIT_UNSTABLE);
        assert_eq!(exit_code(&Error::Cholesky("x".into())), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
    }
}
