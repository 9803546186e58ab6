//! Command implementations behind the `netalloc` binary.
//!
//! All outputs are rendered in memory first and written only once every run
//! has finished, so a failing run leaves no partial files behind.

pub mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alloc_core::validate_scenario;
use crate::error::Error;
use crate::manager::PolicyKind;
use crate::sim::{compare_policies, run_scenario, ScenarioConfig, SimResult};

pub const CSV_HEADER: &str = "tick,policy,residual_inf,mean_regret,max_regret,realloc_cumulative";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid scenario: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("simulation failed: {0}")]
    Solver(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Solver(_) => 3,
        }
    }

    /// Diagnostics, one per line.
    pub fn diagnostics(&self) -> Vec<String> {
        match self {
            CliError::Config(d) => d.clone(),
            other => vec![other.to_string()],
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub mean_residual_after_prefix: f64,
    pub max_residual: f64,
    pub reallocations: usize,
}

impl PolicySummary {
    fn of(r: &SimResult) -> Self {
        Self {
            policy: r.policy,
            mean_residual_after_prefix: r.mean_residual_after_prefix,
            max_residual: r.residual_inf_series.iter().copied().fold(0.0, f64::max),
            reallocations: r.reallocation_ticks.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub outputs: BTreeMap<String, String>,
    pub summary: Vec<PolicySummary>,
}

/// SHA-256 over the canonical JSON form of the scenario.
pub fn config_digest(config: &ScenarioConfig) -> String {
    let canonical = serde_json::to_string(config).expect("scenario config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let config = ScenarioConfig::from_toml(&text).map_err(|e| CliError::Config(vec![e]))?;
    let validated = validate_scenario(config).map_err(CliError::Config)?;
    Ok(validated.config)
}

/// One row per tick, without header.
pub fn metrics_rows(result: &SimResult) -> String {
    let mut out = String::new();
    for tick in 0..result.n_ticks() {
        let _ = writeln!(
            out,
            "{tick},{},{},{},{},{}",
            result.policy,
            result.residual_inf_series[tick],
            result.mean_regret(tick),
            result.max_regret(tick),
            result.reallocations_through(tick)
        );
    }
    out
}

pub fn metrics_csv(results: &[SimResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&metrics_rows(r));
    }
    out
}

pub fn summary_text(results: &[SimResult], seed: u64) -> String {
    let mut out = format!("seed {seed}\n");
    let _ = writeln!(out, "{:<8} {:>14} {:>12} {:>14}", "policy", "mean_residual", "max_residual", "reallocations");
    for r in results {
        let s = PolicySummary::of(r);
        let _ = writeln!(
            out,
            "{:<8} {:>14.4} {:>12.4} {:>14}",
            s.policy.as_str(),
            s.mean_residual_after_prefix,
            s.max_residual,
            s.reallocations
        );
    }
    out
}

fn write_outputs(out_dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    for (name, contents) in files {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(io_err(&path))?;
    }
    Ok(())
}

fn manifest_json(manifest: &RunManifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}

fn outputs_map(out_dir: &Path, names: &[&str]) -> BTreeMap<String, String> {
    names
        .iter()
        .map(|n| (n.to_string(), out_dir.join(n).display().to_string()))
        .collect()
}

/// Runs one policy and writes `metrics.csv` and `manifest.json`.
pub fn cmd_simulate(
    scenario_path: &Path,
    policy: PolicyKind,
    seed: Option<u64>,
    out_dir: &Path,
    command: &str,
) -> Result<RunManifest, CliError> {
    let config = load_scenario(scenario_path)?;
    let seed = seed.unwrap_or(config.master_seed);
    let result = run_scenario(&config, policy, seed)?;

    let manifest = RunManifest {
        command: command.to_string(),
        config_digest: config_digest(&config),
        seed,
        outputs: outputs_map(out_dir, &["metrics.csv", "manifest.json"]),
        summary: vec![PolicySummary::of(&result)],
    };
    write_outputs(
        out_dir,
        &[
            ("metrics.csv".to_string(), metrics_csv(std::slice::from_ref(&result))),
            ("manifest.json".to_string(), manifest_json(&manifest)),
        ],
    )?;
    Ok(manifest)
}

/// Runs all four policies and writes the per-policy CSVs, the combined CSV,
/// the SVG chart, a text summary and the manifest.
pub fn cmd_compare(
    scenario_path: &Path,
    seed: Option<u64>,
    out_dir: &Path,
    command: &str,
) -> Result<(RunManifest, String), CliError> {
    let config = load_scenario(scenario_path)?;
    let seed = seed.unwrap_or(config.master_seed);
    let results = compare_policies(&config, seed)?;

    let mut files: Vec<(String, String)> = results
        .iter()
        .map(|r| (format!("metrics_{}.csv", r.policy), metrics_csv(std::slice::from_ref(r))))
        .collect();
    files.push(("comparison.csv".to_string(), metrics_csv(&results)));
    files.push((
        "comparison.svg".to_string(),
        svg::render_comparison(&results, f64::from(config.gap)),
    ));
    let summary = summary_text(&results, seed);
    files.push(("summary.txt".to_string(), summary.clone()));

    let mut names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    names.push("manifest.json");
    let manifest = RunManifest {
        command: command.to_string(),
        config_digest: config_digest(&config),
        seed,
        outputs: outputs_map(out_dir, &names),
        summary: results.iter().map(PolicySummary::of).collect(),
    };
    files.push(("manifest.json".to_string(), manifest_json(&manifest)));
    write_outputs(out_dir, &files)?;
    Ok((manifest, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_tracks_content() {
        let a = ScenarioConfig::default();
        let b = ScenarioConfig {
            n_ticks: 99,
            ..a.clone()
        };
        assert_eq!(config_digest(&a), config_digest(&a.clone()));
        assert_ne!(config_digest(&a), config_digest(&b));
        assert_eq!(config_digest(&a).len(), 64);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(vec![]).exit_code(), 1);
        let io = CliError::Io {
            path: PathBuf::from("x"),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
        };
        assert_eq!(io.exit_code(), 2);
        assert_eq!(CliError::Solver(Error::NonFinite { iteration: 3 }).exit_code(), 3);
    }
}
