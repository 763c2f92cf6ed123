use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bosonpair::config::{self, Experiment, RunConfig};
use bosonpair::run;
use bosonpair::{Error, Result};

#[derive(Parser)]
#[command(name = "bosonpair", version, about = "Hartree, pair-excitation and error-term experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Seed for every random input (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Mean-field evolution with conservation diagnostics.
    Hartree,
    /// Coupled condensate and pair-kernel evolution.
    Pair,
    /// Truncated Fock space checks and the dense error-term oracle.
    FockVerify,
    /// N-scaling of the cubic and quartic error norms.
    ErrorSweep,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Command::Hartree => Experiment::Hartree,
            Command::Pair => Experiment::Pair,
            Command::FockVerify => Experiment::FockVerify,
            Command::ErrorSweep => Experiment::ErrorSweep,
        }
    }
}

fn load(cli: &Cli) -> Result<(RunConfig, Option<String>, PathBuf)> {
    let want = cli.command.experiment();
    let (mut cfg, source, base) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let cfg = config::parse_config(path)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (cfg, Some(text), base)
        }
        None => (RunConfig::new(want), None, PathBuf::from(".")),
    };
    if cfg.experiment != want {
        return Err(Error::Config(format!(
            "config describes a {} experiment but the {} subcommand was given",
            cfg.experiment.name(),
            want.name()
        )));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok((cfg, source, base))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|(cfg, source, base)| run::run(&cfg, source.as_deref(), &base, cli.output.as_deref()));
    match result {
        Ok(out) => {
            if !cli.quiet {
                for c in &out.manifest.checks {
                    println!("{} {:<32} {:.3e} (tol {:.1e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
                }
                for w in &out.manifest.warnings {
                    println!("note: {w}");
                }
                println!("wrote {}", out.output_dir.display());
            }
            if out.manifest.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("bosonpair: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
