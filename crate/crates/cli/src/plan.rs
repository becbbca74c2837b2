//! Run plans: named runs, each an experiment plus an output kind.
//!
//! A plan is stored as TOML, one `[[run]]` section per run:
//!
//! ```toml
//! label = "fig2"
//!
//! [[run]]
//! name = "robust"
//! output = "stats"
//!
//! [run.experiment]
//! tier = "scalar_closed_loop"
//! detuning = 0.0
//! horizon = 5.0
//! n_paths = 10000
//! seed = 1
//!
//! [run.experiment.scheme]
//! variant = "robust"
//! k = 4.0
//! alpha = 0.5
//! ```
//!
//! Omitted experiment fields take the library defaults.

use std::path::Path;

use adaptmeas_core::{ExperimentConfig, SchemeConfig, Tier};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Per-time ensemble statistics over `n_paths` paths.
    Stats,
    /// The first `n_paths` trajectories.
    Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub output: OutputKind,
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPlan {
    pub label: String,
    #[serde(rename = "run")]
    pub runs: Vec<RunSpec>,
}

/// Command-line overrides applied to every run of a plan.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub paths: Option<u64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub tier: Option<Tier>,
    pub stride: Option<usize>,
}

pub const PRESETS: [&str; 6] = ["fig2", "fig3", "fig4", "fig5", "fig6", "remark3-const-k"];

/// Default seed of every preset.
pub const PRESET_SEED: u64 = 1;

/// Sample-path presets run for this long; the figures do not state a horizon.
pub const PATH_HORIZON: f64 = 10.0;

const ROBUST: SchemeConfig = SchemeConfig::Robust { k: 4.0, alpha: 0.5 };
const JACOBS: SchemeConfig = SchemeConfig::Jacobs { kappa: 1.0 };

fn closed_loop(scheme: SchemeConfig, detuning: f64, horizon: f64) -> ExperimentConfig {
    ExperimentConfig { detuning, horizon, seed: PRESET_SEED, ..ExperimentConfig::new(scheme) }
}

fn coupled(scheme: SchemeConfig, detuning: f64, detuning_nominal: f64) -> ExperimentConfig {
    ExperimentConfig {
        tier: Tier::ScalarCoupled,
        detuning,
        detuning_nominal: Some(detuning_nominal),
        horizon: PATH_HORIZON,
        n_paths: 4,
        seed: PRESET_SEED,
        ..ExperimentConfig::new(scheme)
    }
}

fn run(name: impl Into<String>, output: OutputKind, experiment: ExperimentConfig) -> RunSpec {
    RunSpec { name: name.into(), output, experiment }
}

/// Compact value label for file names: `0.001` stays `0.001`, `1e-7` stays `1e-7`.
pub fn value_label(v: f64) -> String {
    format!("{v}")
}

pub fn preset(name: &str) -> Result<RunPlan, CliError> {
    use OutputKind::{Paths, Stats};
    let runs = match name {
        "fig2" => vec![
            run("robust", Stats, closed_loop(ROBUST, 0.0, 5.0)),
            run("jacobs", Stats, closed_loop(JACOBS, 0.0, 5.0)),
        ],
        "fig3" => [1.0, 0.1, 0.01, 0.001, 0.0]
            .into_iter()
            .map(|d| run(format!("robust_detuning={}", value_label(d)), Stats, closed_loop(ROBUST, d, 10.0)))
            .collect(),
        "fig4" => {
            vec![run("robust", Paths, coupled(ROBUST, 1e-2, 0.0)), run("jacobs", Paths, coupled(JACOBS, 1e-2, 0.0))]
        }
        "fig5" => [1e-3, 1e-2, 1e-1]
            .into_iter()
            .flat_map(|dn| {
                let tag = value_label(dn);
                [
                    run(format!("robust_detuning_nominal={tag}"), Paths, coupled(ROBUST, 1e-2, dn)),
                    run(format!("jacobs_detuning_nominal={tag}"), Paths, coupled(JACOBS, 1e-2, dn)),
                ]
            })
            .collect(),
        // The robust strength is 4 kappa: the same target-linearized diffusion
        // as kappa for the perpendicular law when beta = 1/2.
        "fig6" => [5.0, 50.0]
            .into_iter()
            .flat_map(|kappa: f64| {
                let tag = value_label(kappa);
                [
                    run(
                        format!("robust_kappa={tag}"),
                        Paths,
                        coupled(SchemeConfig::Robust { k: 4.0 * kappa, alpha: 0.5 }, 1e-2, 1e-3),
                    ),
                    run(format!("jacobs_kappa={tag}"), Paths, coupled(SchemeConfig::Jacobs { kappa }, 1e-2, 1e-3)),
                ]
            })
            .collect(),
        "remark3-const-k" => {
            vec![run("jacobs_constant", Stats, closed_loop(SchemeConfig::JacobsConstant { k: 4.0 }, 0.0, 5.0))]
        }
        other => {
            return Err(CliError::config(
                "preset",
                format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", ")),
            ))
        }
    };
    Ok(RunPlan { label: name.to_string(), runs })
}

impl RunPlan {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.runs.is_empty() {
            return Err(CliError::config("run", "a plan needs at least one run"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.runs {
            if r.name.is_empty() || r.name.contains(['/', '\\']) || r.name.starts_with('.') {
                return Err(CliError::config("name", format!("`{}` is not usable as a file name", r.name)));
            }
            if !seen.insert(&r.name) {
                return Err(CliError::config("name", format!("duplicate run name `{}`", r.name)));
            }
            r.experiment.validate().map_err(CliError::from)?;
            if r.output == OutputKind::Paths && !r.experiment.tier.is_coupled() {
                return Err(CliError::config(
                    "tier",
                    format!("run `{}` writes paths and needs a coupled tier", r.name),
                ));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        for r in &mut self.runs {
            let e = &mut r.experiment;
            if let Some(v) = o.paths {
                e.n_paths = v;
            }
            if let Some(v) = o.dt {
                e.dt = v;
            }
            if let Some(v) = o.horizon {
                e.horizon = v;
            }
            if let Some(v) = o.seed {
                e.seed = v;
            }
            if let Some(v) = o.tier {
                e.tier = v;
            }
            if let Some(v) = o.stride {
                e.stride = v;
            }
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::config("plan", e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(toml_field(&e), e.message().to_string()))
    }

    /// Reads a TOML plan, or the `config` echo of a JSON run manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if path.extension().is_some_and(|x| x == "json") {
            #[derive(Deserialize)]
            struct Echo {
                config: RunPlan,
            }
            let echo: Echo = serde_json::from_str(&text).map_err(|e| CliError::config("config", e.to_string()))?;
            return Ok(echo.config);
        }
        Self::from_toml(&text)
    }
}

/// Best-effort field name for a TOML error: the last key of the span.
fn toml_field(e: &toml::de::Error) -> String {
    let msg = e.message();
    for marker in ["unknown field `", "missing field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(field) = rest.split('`').next() {
                return field.to_string();
            }
        }
    }
    "config".to_string()
}
