//! Drive an experiment from a TOML config, as the `bosonpair` binary does,
//! and print the checks recorded in its manifest.
//!
//! `cargo run --release --example run_config -- [config.toml] [output_dir]`

use std::path::{Path, PathBuf};

use bosonpair::config::{self, Experiment, RunConfig};
use bosonpair::run;

fn main() -> bosonpair::Result<()> {
    let mut args = std::env::args().skip(1);
    let (cfg, source, base) = match args.next() {
        Some(path) => {
            let path = PathBuf::from(path);
            let text = std::fs::read_to_string(&path)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (config::parse_config(&path)?, Some(text), base)
        }
        None => {
            let mut cfg = RunConfig::new(Experiment::Pair);
            cfg.t_end = 0.5;
            (cfg, None, std::env::temp_dir())
        }
    };
    let output = args.next().map(PathBuf::from);
    let out = run::run(&cfg, source.as_deref(), &base, output.as_deref())?;
    for c in &out.manifest.checks {
        println!("{} {:<32} {:.3e} (tol {:.1e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    for (file, digest) in &out.manifest.outputs {
        println!("{file}  sha256 {}", &digest[..16]);
    }
    println!("{} in {:.2}s -> {}", cfg.experiment.name(), out.manifest.wall_time_s, out.output_dir.display());
    Ok(())
}
