use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bosonpair::config;

fn bosonpair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bosonpair")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bosonpair-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            config::parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}

#[test]
fn short_pair_run_succeeds_and_is_reproducible() {
    let dir = scratch("pair");
    let cfg = write_config(&dir, "experiment = \"pair\"\nn = 32\nbox_length = 10.0\nt_end = 0.05\ndt = 0.01\nsample_every = 1\n");
    let digests: Vec<String> = ["a", "b"]
        .iter()
        .map(|sub| {
            let out_dir = dir.join(sub);
            let o = bosonpair(&["pair", "--config", &cfg, "--output", out_dir.to_str().unwrap(), "--quiet"]);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            assert!(o.stdout.is_empty());
            let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
            m["outputs"]["pair.csv"].as_str().unwrap().to_string()
        })
        .collect();
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn misspelled_key_is_a_config_error() {
    let dir = scratch("typo");
    let cfg = write_config(&dir, "experiment = \"pair\"\nbetta = 0.2\n");
    let o = bosonpair(&["pair", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("did you mean `beta`"));
}

#[test]
fn subcommand_must_match_experiment() {
    let dir = scratch("mismatch");
    let cfg = write_config(&dir, "experiment = \"pair\"\n");
    assert_eq!(bosonpair(&["hartree", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn oversized_sweep_trips_the_resource_guard() {
    let dir = scratch("guard");
    let cfg = write_config(&dir, "experiment = \"error-sweep\"\nn = 128\nbox_length = 40.0\n");
    assert_eq!(bosonpair(&["error-sweep", "--config", &cfg]).status.code(), Some(4));
}
