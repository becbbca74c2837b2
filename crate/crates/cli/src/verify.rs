//! Built-in verification table.

use std::io::Write;

use adaptmeas_core::dynamics::linearized_stationary_point;
use adaptmeas_core::ensemble::long_run_error_with;
use adaptmeas_core::{ExperimentConfig, Tier};

use crate::checks::{self, OracleSetup, ROBUST};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub dt: f64,
    pub seed: u64,
    pub workers: usize,
    /// Flip the innovation drift of the scalar tier; the oracle check must fail.
    pub inject_innovation_flip: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            dt: 1e-4,
            seed: 7,
            workers: adaptmeas_core::ensemble::default_workers(),
            inject_innovation_flip: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: String,
    pub passed: bool,
    pub note: String,
}

fn row(
    name: &'static str,
    measured: adaptmeas_core::Result<f64>,
    threshold: String,
    ok: impl Fn(f64) -> bool,
) -> CheckRow {
    match measured {
        Ok(m) => CheckRow { name, measured: m, threshold, passed: ok(m), note: String::new() },
        Err(e) => CheckRow { name, measured: f64::NAN, threshold, passed: false, note: e.to_string() },
    }
}

pub fn run_checks(opts: &VerifyOptions) -> Vec<CheckRow> {
    let dt = opts.dt;
    let mut rows = Vec::new();

    let setup = OracleSetup {
        dt,
        horizon: 1.0,
        n_paths: 10,
        seed: opts.seed,
        innovation_sign: if opts.inject_innovation_flip { -1.0 } else { 1.0 },
    };
    let oracle = checks::oracle_cases().into_iter().try_fold(0.0f64, |acc, (scheme, dist)| {
        checks::oracle_deviation(scheme, dist, &setup).map(|d| acc.max(d.max()))
    });
    rows.push(row("oracle_equivalence", oracle, "<= 1e-2".into(), |m| m <= 1e-2));

    rows.push(row(
        "closed_form_martingale",
        checks::closed_form_median_error(1.0, dt, 1.0, 200, opts.seed),
        "<= 5e-2".into(),
        |m| m <= 5e-2,
    ));

    let optimum = [0.1, 0.5, 1.0, 2.0, 3.0]
        .into_iter()
        .try_fold(0.0f64, |acc, delta| checks::alpha_argmax(delta, 4.0, 0.0, 1e-3).map(|a| acc.max((a - 0.5).abs())));
    rows.push(row("fidelity_optimum", optimum, "<= 5e-4".into(), |m| m <= 5e-4));

    let mc = checks::fidelity_increment_mc(std::f64::consts::FRAC_PI_2, 0.5, 4.0, 0.0, dt, 200_000, opts.seed)
        .map(|d| d.z());
    rows.push(row("fidelity_drift_mc_z", mc, "<= 2".into(), |m| m <= 2.0));

    let tracking = ExperimentConfig {
        tier: Tier::ScalarCoupled,
        detuning: 1e-2,
        detuning_nominal: Some(1e-2),
        dt,
        horizon: 1.0,
        n_paths: 10,
        seed: opts.seed,
        ..ExperimentConfig::new(ROBUST)
    };
    rows.push(row("filter_identity", checks::tracking_deviation(&tracking), "<= 1e-9".into(), |m| m <= 1e-9));

    let lre = ExperimentConfig {
        detuning: 1e-2,
        dt,
        horizon: 5.0,
        n_paths: 400,
        seed: opts.seed,
        ..ExperimentConfig::new(ROBUST)
    };
    let expected = linearized_stationary_point(4.0, 0.5, 1e-2);
    rows.push(row(
        "stationary_error_ratio",
        long_run_error_with(&lre, opts.workers).map(|e| e / expected),
        "in [0.5, 2]".into(),
        |m| (0.5..=2.0).contains(&m),
    ));
    rows
}

pub fn print_table(w: &mut impl Write, rows: &[CheckRow]) -> std::io::Result<()> {
    writeln!(w, "{:<24} {:>14} {:>12}  result", "check", "measured", "threshold")?;
    for r in rows {
        let status = if r.passed { "PASS" } else { "FAIL" };
        write!(w, "{:<24} {:>14.6e} {:>12}  {status}", r.name, r.measured, r.threshold)?;
        if !r.note.is_empty() {
            write!(w, "  ({})", r.note)?;
        }
        writeln!(w)?;
    }
    Ok(())
}
