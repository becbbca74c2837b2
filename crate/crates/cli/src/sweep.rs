//! One run directory per value of a numeric parameter, plus an index.

use std::io::Write;
use std::path::Path;

use adaptmeas_core::{ExperimentConfig, SchemeConfig};

use crate::output::{execute_plan, fmt_f64};
use crate::plan::{value_label, RunPlan};
use crate::CliError;

pub const INDEX: &str = "index.csv";
pub const INDEX_HEADER: &str = "param,value,dir,run,file,final_mean_delta,mean_fidelity";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Detuning,
    DetuningNominal,
    Delta0,
    Delta0Nominal,
    Dt,
    Horizon,
    NPaths,
    Stride,
    Seed,
    K,
    Alpha,
    Kappa,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        use SweepParam::*;
        Ok(match name {
            "detuning" | "Delta" | "Delta_true" => Detuning,
            "detuning_nominal" | "Delta_nominal" => DetuningNominal,
            "delta0" => Delta0,
            "delta0_nominal" => Delta0Nominal,
            "dt" => Dt,
            "horizon" => Horizon,
            "n_paths" | "paths" => NPaths,
            "stride" => Stride,
            "seed" => Seed,
            "k" => K,
            "alpha" => Alpha,
            "kappa" => Kappa,
            other => return Err(CliError::config("param", format!("`{other}` is not a numeric config field"))),
        })
    }

    pub fn name(self) -> &'static str {
        use SweepParam::*;
        match self {
            Detuning => "detuning",
            DetuningNominal => "detuning_nominal",
            Delta0 => "delta0",
            Delta0Nominal => "delta0_nominal",
            Dt => "dt",
            Horizon => "horizon",
            NPaths => "n_paths",
            Stride => "stride",
            Seed => "seed",
            K => "k",
            Alpha => "alpha",
            Kappa => "kappa",
        }
    }

    fn integer(self, v: f64) -> Result<u64, CliError> {
        if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
            Ok(v as u64)
        } else {
            Err(CliError::config(self.name(), format!("expects a non-negative integer, got {v}")))
        }
    }

    /// Sets the parameter in `e`; `false` when it does not apply to `e`.
    pub fn apply(self, e: &mut ExperimentConfig, v: f64) -> Result<bool, CliError> {
        use SweepParam::*;
        match self {
            Detuning => {
                // Closed-loop tiers share one detuning; keep the nominal in step.
                if !e.tier.is_coupled() {
                    e.detuning_nominal = None;
                }
                e.detuning = v;
            }
            DetuningNominal | Delta0Nominal if !e.tier.is_coupled() => return Ok(false),
            DetuningNominal => e.detuning_nominal = Some(v),
            Delta0Nominal => e.delta0_nominal = Some(v),
            Delta0 => e.delta0 = v,
            Dt => e.dt = v,
            Horizon => e.horizon = v,
            NPaths => e.n_paths = self.integer(v)?,
            Stride => {
                e.stride = usize::try_from(self.integer(v)?).map_err(|_| CliError::config("stride", "too large"))?
            }
            Seed => e.seed = self.integer(v)?,
            K => match &mut e.scheme {
                SchemeConfig::Robust { k, .. } | SchemeConfig::JacobsConstant { k } => *k = v,
                SchemeConfig::Jacobs { .. } => return Ok(false),
            },
            Alpha => match &mut e.scheme {
                SchemeConfig::Robust { alpha, .. } => *alpha = v,
                _ => return Ok(false),
            },
            Kappa => match &mut e.scheme {
                SchemeConfig::Jacobs { kappa } => *kappa = v,
                _ => return Ok(false),
            },
        }
        Ok(true)
    }
}

/// Writes `<out>/<param>=<value>/` for each value and `<out>/index.csv`.
/// Runs the parameter does not apply to are kept unchanged.
pub fn run_sweep(
    base: &RunPlan,
    param: SweepParam,
    values: &[f64],
    out: &Path,
    workers: usize,
) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::config("values", "need at least one value"));
    }
    let mut plans = Vec::with_capacity(values.len());
    for &v in values {
        if !v.is_finite() {
            return Err(CliError::config("values", format!("{v} is not finite")));
        }
        let mut plan = base.clone();
        let mut applied = false;
        for r in &mut plan.runs {
            applied |= param.apply(&mut r.experiment, v)?;
        }
        if !applied {
            return Err(CliError::config(param.name(), "does not apply to any run of the plan"));
        }
        plan.label = format!("{}:{}={}", base.label, param.name(), value_label(v));
        plan.validate()?;
        plans.push(plan);
    }

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let index_path = out.join(INDEX);
    let mut index = Vec::new();
    writeln!(index, "{INDEX_HEADER}").expect("writing to memory");
    for (plan, &v) in plans.iter().zip(values) {
        let dir = format!("{}={}", param.name(), value_label(v));
        let outcome = execute_plan(plan, &out.join(&dir), workers, "sweep")?;
        for f in &outcome.manifest.files {
            let (fin, fid) = outcome
                .summaries
                .get(&f.run)
                .map_or((String::new(), String::new()), |s| (fmt_f64(s.final_mean_delta), fmt_f64(s.mean_fidelity)));
            writeln!(index, "{},{},{dir},{},{},{fin},{fid}", param.name(), fmt_f64(v), f.run, f.path)
                .expect("writing to memory");
        }
    }
    std::fs::write(&index_path, index).map_err(|e| CliError::io(&index_path, e))
}
