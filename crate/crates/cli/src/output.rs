//! Run directories: CSV files, the config echo and the JSON manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use adaptmeas_core::{run_ensemble_with, run_sample_paths_with, CoupledState, EnsembleStats, PathRecord};
use serde::{Deserialize, Serialize};

use crate::plan::{OutputKind, RunPlan};
use crate::CliError;

pub const STATS_HEADER: &str = "t,mean_delta,std_delta,n";
pub const STATS_NOMINAL_COLUMNS: &str = ",mean_delta_nominal,std_delta_nominal";
pub const PATHS_HEADER: &str = "t,path_id,delta_true,delta_nominal";
pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.toml";

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_stats_csv(w: &mut impl Write, stats: &EnsembleStats) -> std::io::Result<()> {
    let nominal = stats.nominal.as_deref();
    writeln!(w, "{STATS_HEADER}{}", if nominal.is_some() { STATS_NOMINAL_COLUMNS } else { "" })?;
    for (i, (t, acc)) in stats.times.iter().zip(&stats.delta).enumerate() {
        write!(w, "{},{},{},{}", fmt_f64(*t), fmt_f64(acc.mean()), fmt_f64(acc.std()), acc.count())?;
        if let Some(nom) = nominal {
            write!(w, ",{},{}", fmt_f64(nom[i].mean()), fmt_f64(nom[i].std()))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_paths_csv(w: &mut impl Write, paths: &[PathRecord<CoupledState>]) -> std::io::Result<()> {
    writeln!(w, "{PATHS_HEADER}")?;
    for p in paths {
        for (t, s) in p.times.iter().zip(&p.states) {
            writeln!(w, "{},{},{},{}", fmt_f64(*t), p.path_id, fmt_f64(s.delta_true), fmt_f64(s.delta_nominal))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub run: String,
    pub kind: OutputKind,
    pub path: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub command: String,
    pub label: String,
    pub started_at: String,
    pub finished_at: String,
    /// Informational; outputs do not depend on it.
    pub workers: usize,
    pub seeds: BTreeMap<String, u64>,
    pub files: Vec<FileEntry>,
    pub config: RunPlan,
}

/// Headline numbers of a stats run, used by sweep indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub final_mean_delta: f64,
    /// Time average of the mean fidelity over the recorded grid.
    pub mean_fidelity: f64,
}

pub struct PlanOutcome {
    pub manifest: RunManifest,
    pub summaries: BTreeMap<String, RunSummary>,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn summarize(stats: &EnsembleStats) -> RunSummary {
    let fid = stats.fidelity.as_deref().unwrap_or(&[]);
    RunSummary {
        final_mean_delta: stats.delta.last().map_or(f64::NAN, |w| w.mean()),
        mean_fidelity: fid.iter().map(|w| w.mean()).sum::<f64>() / fid.len().max(1) as f64,
    }
}

/// Runs every entry of `plan` and writes `<name>.stats.csv` or
/// `<name>.paths.csv`, `config.toml` and `manifest.json` under `out`.
pub fn execute_plan(plan: &RunPlan, out: &Path, workers: usize, command: &str) -> Result<PlanOutcome, CliError> {
    plan.validate()?;
    let started_at = chrono::Utc::now().to_rfc3339();
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let echo = out.join(CONFIG_ECHO);
    std::fs::write(&echo, plan.to_toml()?).map_err(|e| CliError::io(&echo, e))?;

    let mut files = Vec::new();
    let mut summaries = BTreeMap::new();
    for run in &plan.runs {
        let (name, rows) = match run.output {
            OutputKind::Stats => {
                let stats = run_ensemble_with(&run.experiment, workers)?;
                let name = format!("{}.stats.csv", run.name);
                let path = out.join(&name);
                let mut w = create(&path)?;
                write_stats_csv(&mut w, &stats).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;
                summaries.insert(run.name.clone(), summarize(&stats));
                (name, stats.len())
            }
            OutputKind::Paths => {
                let n_show = usize::try_from(run.experiment.n_paths)
                    .map_err(|_| CliError::config("n_paths", "too many sample paths"))?;
                let paths = run_sample_paths_with(&run.experiment, n_show, workers)?;
                let name = format!("{}.paths.csv", run.name);
                let path = out.join(&name);
                let mut w = create(&path)?;
                write_paths_csv(&mut w, &paths).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;
                (name, paths.iter().map(PathRecord::len).sum())
            }
        };
        files.push(FileEntry { run: run.name.clone(), kind: run.output, path: name, rows });
    }

    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        label: plan.label.clone(),
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        workers,
        seeds: plan.runs.iter().map(|r| (r.name.clone(), r.experiment.seed)).collect(),
        files,
        config: plan.clone(),
    };
    let path = out.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::config("manifest", e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(PlanOutcome { manifest, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use adaptmeas_core::{ExperimentConfig, SchemeConfig, Tier};

    #[test]
    fn float_format_round_trips() {
        for x in [std::f64::consts::PI, 1e-300, -2.5e-3, 0.1 + 0.2, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn stats_csv_schema() {
        let c = ExperimentConfig {
            tier: Tier::ScalarCoupled,
            horizon: 0.01,
            n_paths: 3,
            stride: 50,
            ..ExperimentConfig::new(SchemeConfig::Robust { k: 4.0, alpha: 0.5 })
        };
        let stats = run_ensemble_with(&c, 1).unwrap();
        let mut buf = Vec::new();
        write_stats_csv(&mut buf, &stats).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,mean_delta,std_delta,n,mean_delta_nominal,std_delta_nominal");
        assert_eq!(lines.len(), 1 + 3);
        assert!(lines[1].starts_with("0.0000000000000000e0,3.1415926535897931e0,0.0000000000000000e0,3,"));
    }

    #[test]
    fn paths_csv_schema() {
        let rec = PathRecord { path_id: 7, times: vec![0.0, 0.5], states: vec![CoupledState::new(1.0, 2.0); 2] };
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,path_id,delta_true,delta_nominal\n\
             0.0000000000000000e0,7,1.0000000000000000e0,2.0000000000000000e0\n\
             5.0000000000000000e-1,7,1.0000000000000000e0,2.0000000000000000e0\n"
        );
    }
}
