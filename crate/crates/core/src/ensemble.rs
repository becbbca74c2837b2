//! Ensembles of independent trajectories.
//!
//! Paths are split into fixed chunks of [`CHUNK_PATHS`] ids. Each chunk is
//! accumulated sequentially and the chunk statistics are merged in chunk
//! order, so the result does not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    step_coupled, step_linearized, step_matrix_coupled, step_scalar_closed_loop_with, CoupledState, DisturbanceSpec,
    MatrixCoupledState, MatrixIntegrator, ScalarIntegrator,
};
use crate::error::{Error, Result};
use crate::policy::SchemeConfig;
use crate::sde::{integrate, NoiseSpec, PathRecord, TimeGrid};
use crate::stats::EnsembleStats;

pub const CHUNK_PATHS: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Scalar angle SDE, feedback on the true angle, detuning known.
    #[default]
    ScalarClosedLoop,
    /// Scalar true and nominal angles driven by one record.
    ScalarCoupled,
    /// True SME and nominal filter on density matrices.
    MatrixCoupled,
    /// Robust closed loop linearized at the target.
    Linearized,
}

impl Tier {
    pub fn is_coupled(self) -> bool {
        matches!(self, Tier::ScalarCoupled | Tier::MatrixCoupled)
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::ScalarClosedLoop => "scalar_closed_loop",
            Tier::ScalarCoupled => "scalar_coupled",
            Tier::MatrixCoupled => "matrix_coupled",
            Tier::Linearized => "linearized",
        }
    }
}

impl std::str::FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Tier::ScalarClosedLoop, Tier::ScalarCoupled, Tier::MatrixCoupled, Tier::Linearized]
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::config("tier", format!("unknown tier `{s}`")))
    }
}

fn default_delta0() -> f64 {
    std::f64::consts::PI
}
fn default_dt() -> f64 {
    1e-4
}
fn default_horizon() -> f64 {
    5.0
}
fn default_paths() -> u64 {
    10_000
}
fn default_stride() -> usize {
    100
}

/// Everything that determines an ensemble's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub tier: Tier,
    /// Actual detuning.
    #[serde(default)]
    pub detuning: f64,
    /// Detuning assumed by the filter; coupled tiers only, defaults to `detuning`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning_nominal: Option<f64>,
    #[serde(default = "default_delta0")]
    pub delta0: f64,
    /// Initial filter angle; coupled tiers only, defaults to `delta0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta0_nominal: Option<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_paths")]
    pub n_paths: u64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scalar_integrator: ScalarIntegrator,
    #[serde(default)]
    pub matrix_integrator: MatrixIntegrator,
}

impl ExperimentConfig {
    /// Defaults: closed loop, no detuning, start at `pi`, `dt = 1e-4`, `T = 5`,
    /// 10^4 paths, stride 100, seed 0.
    pub fn new(scheme: SchemeConfig) -> Self {
        ExperimentConfig {
            scheme,
            tier: Tier::default(),
            detuning: 0.0,
            detuning_nominal: None,
            delta0: default_delta0(),
            delta0_nominal: None,
            dt: default_dt(),
            horizon: default_horizon(),
            n_paths: default_paths(),
            stride: default_stride(),
            seed: 0,
            scalar_integrator: ScalarIntegrator::default(),
            matrix_integrator: MatrixIntegrator::default(),
        }
    }

    pub fn disturbance(&self) -> DisturbanceSpec {
        DisturbanceSpec::new(self.detuning, self.detuning_nominal.unwrap_or(self.detuning))
    }

    pub fn initial(&self) -> CoupledState {
        CoupledState::new(self.delta0, self.delta0_nominal.unwrap_or(self.delta0))
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_horizon(self.dt, self.horizon).map_err(|e| Error::config("dt", e.to_string()))
    }

    /// Recorded times for this configuration.
    pub fn times(&self) -> Result<Vec<f64>> {
        let grid = self.grid()?;
        Ok(grid.recorded_steps(self.stride).into_iter().map(|s| grid.time(s)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        let finite = |field: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be finite, got {v}")))
            }
        };
        finite("detuning", self.detuning)?;
        finite("delta0", self.delta0)?;
        if let Some(v) = self.detuning_nominal {
            finite("detuning_nominal", v)?;
        }
        if let Some(v) = self.delta0_nominal {
            finite("delta0_nominal", v)?;
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::config("horizon", format!("must be at least dt, got {}", self.horizon)));
        }
        if self.n_paths == 0 {
            return Err(Error::config("n_paths", "must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::config("stride", "must be at least 1"));
        }
        if !self.tier.is_coupled() {
            if self.detuning_nominal.is_some_and(|d| d != self.detuning) {
                return Err(Error::config("detuning_nominal", "only coupled tiers carry a nominal model"));
            }
            if self.delta0_nominal.is_some_and(|d| d != self.delta0) {
                return Err(Error::config("delta0_nominal", "only coupled tiers carry a nominal model"));
            }
        }
        if self.scalar_integrator == ScalarIntegrator::Milstein && self.tier != Tier::ScalarClosedLoop {
            return Err(Error::config("scalar_integrator", "milstein is available for the closed loop only"));
        }
        if self.tier == Tier::Linearized && !matches!(self.scheme, SchemeConfig::Robust { .. }) {
            return Err(Error::config("tier", "the linearized tier applies to the robust scheme only"));
        }
        Ok(())
    }
}

/// One trajectory of `config`, as true and nominal angles. For the
/// closed-loop tiers both angles are the same.
pub fn simulate_path(config: &ExperimentConfig, path_id: u64) -> Result<PathRecord<CoupledState>> {
    let grid = config.grid()?;
    let noise = NoiseSpec::new(config.seed, path_id, grid);
    let scheme = config.scheme;
    let stride = config.stride;
    let twin = |d: &f64| CoupledState::new(*d, *d);
    let record = match config.tier {
        Tier::ScalarClosedLoop => {
            let (detuning, integ) = (config.detuning, config.scalar_integrator);
            integrate(
                config.delta0,
                |d: &f64, _, dt, dw| step_scalar_closed_loop_with(*d, &scheme, detuning, dt, dw, integ),
                &noise,
                stride,
            )
            .map(|r| r.map(twin))
        }
        Tier::Linearized => {
            let SchemeConfig::Robust { k, alpha } = scheme else {
                return Err(Error::config("tier", "the linearized tier applies to the robust scheme only"));
            };
            let detuning = config.detuning;
            integrate(
                config.delta0,
                |d: &f64, _, dt, dw| step_linearized(*d, k, alpha, detuning, dt, dw),
                &noise,
                stride,
            )
            .map(|r| r.map(twin))
        }
        Tier::ScalarCoupled => {
            let dist = config.disturbance();
            integrate(
                config.initial(),
                |s: &CoupledState, _, dt, dw| step_coupled(s, &scheme, &dist, dt, dw).map(|r| r.0),
                &noise,
                stride,
            )
        }
        Tier::MatrixCoupled => {
            let dist = config.disturbance();
            let integ = config.matrix_integrator;
            let init = config.initial();
            integrate(
                MatrixCoupledState::from_angles(init.delta_true, init.delta_nominal)?,
                |s: &MatrixCoupledState, _, dt, dw| step_matrix_coupled(s, &scheme, &dist, dt, dw, integ).map(|r| r.0),
                &noise,
                stride,
            )
            .map(|r| r.map(MatrixCoupledState::angles))
        }
    };
    let mut record = record.map_err(|e| Error::Path { path_id, source: Box::new(e) })?;
    record.path_id = path_id;
    Ok(record)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::config("workers", "must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Error::config("workers", e.to_string()))
}

/// Number of worker threads used when none is given.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn chunk_stats(config: &ExperimentConfig, times: &[f64], ids: std::ops::Range<u64>) -> Result<EnsembleStats> {
    let coupled = config.tier.is_coupled();
    let mut stats = EnsembleStats::new(times.to_vec(), coupled, true);
    let mut delta = Vec::with_capacity(times.len());
    let mut nominal = Vec::with_capacity(times.len());
    for id in ids {
        let path = simulate_path(config, id)?;
        delta.clear();
        nominal.clear();
        delta.extend(path.states.iter().map(|s| s.delta_true));
        nominal.extend(path.states.iter().map(|s| s.delta_nominal));
        stats.push_path(&delta, coupled.then_some(nominal.as_slice()))?;
    }
    Ok(stats)
}

/// Statistics of `fold(delta)` (and of the fidelity, and of `fold(delta')`
/// for coupled tiers) at the recorded times, over paths `0..n_paths`.
pub fn run_ensemble(config: &ExperimentConfig) -> Result<EnsembleStats> {
    run_ensemble_with(config, default_workers())
}

pub fn run_ensemble_with(config: &ExperimentConfig, workers: usize) -> Result<EnsembleStats> {
    config.validate()?;
    let times = config.times()?;
    let chunks: Vec<_> = (0..config.n_paths.div_ceil(CHUNK_PATHS))
        .map(|c| c * CHUNK_PATHS..((c + 1) * CHUNK_PATHS).min(config.n_paths))
        .collect();
    let parts: Vec<Result<EnsembleStats>> =
        pool(workers)?.install(|| chunks.into_par_iter().map(|ids| chunk_stats(config, &times, ids)).collect());
    let mut total = EnsembleStats::new(times, config.tier.is_coupled(), true);
    for part in parts {
        total.merge(&part?)?;
    }
    Ok(total)
}

/// The first `n_show` trajectories (path ids `0..n_show`) at the configured
/// recording stride. Coupled tiers only.
pub fn run_sample_paths(config: &ExperimentConfig, n_show: usize) -> Result<Vec<PathRecord<CoupledState>>> {
    run_sample_paths_with(config, n_show, default_workers())
}

pub fn run_sample_paths_with(
    config: &ExperimentConfig,
    n_show: usize,
    workers: usize,
) -> Result<Vec<PathRecord<CoupledState>>> {
    config.validate()?;
    if !config.tier.is_coupled() {
        return Err(Error::config("tier", "sample paths need a coupled tier"));
    }
    pool(workers)?.install(|| (0..n_show as u64).into_par_iter().map(|id| simulate_path(config, id)).collect())
}

/// Final state of every path `0..n_paths`, in path order.
pub fn run_terminal_states_with(config: &ExperimentConfig, workers: usize) -> Result<Vec<CoupledState>> {
    config.validate()?;
    pool(workers)?.install(|| {
        (0..config.n_paths)
            .into_par_iter()
            .map(|id| {
                let path = simulate_path(&ExperimentConfig { stride: usize::MAX, ..config.clone() }, id)?;
                Ok(*path.last().expect("paths start with the initial state"))
            })
            .collect()
    })
}

/// Time average of the folded mean over the final 20% of the horizon.
pub fn long_run_error(config: &ExperimentConfig) -> Result<f64> {
    long_run_error_with(config, default_workers())
}

pub fn long_run_error_with(config: &ExperimentConfig, workers: usize) -> Result<f64> {
    if config.tier != Tier::ScalarClosedLoop {
        return Err(Error::config("tier", "long-run error is defined for the scalar closed loop"));
    }
    if !(config.detuning > 0.0) {
        return Err(Error::config("detuning", format!("must be positive, got {}", config.detuning)));
    }
    let stats = run_ensemble_with(config, workers)?;
    Ok(tail_mean(&stats, 0.8 * config.horizon))
}

/// Mean over recorded times `t >= from` of the folded mean.
pub fn tail_mean(stats: &EnsembleStats, from: f64) -> f64 {
    let tail: Vec<f64> =
        stats.times.iter().zip(&stats.delta).filter(|(t, _)| **t >= from - 1e-12).map(|(_, w)| w.mean()).collect();
    tail.iter().sum::<f64>() / tail.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(tier: Tier) -> ExperimentConfig {
        ExperimentConfig {
            tier,
            horizon: 0.2,
            n_paths: 300,
            stride: 50,
            seed: 9,
            ..ExperimentConfig::new(SchemeConfig::Robust { k: 4.0, alpha: 0.5 })
        }
    }

    #[test]
    fn validation_names_fields() {
        let field = |c: ExperimentConfig| match c.validate().unwrap_err() {
            Error::Config { field, .. } => field,
            e => panic!("unexpected {e}"),
        };
        assert_eq!(field(ExperimentConfig { n_paths: 0, ..small(Tier::ScalarClosedLoop) }), "n_paths");
        assert_eq!(field(ExperimentConfig { dt: -1.0, ..small(Tier::ScalarClosedLoop) }), "dt");
        assert_eq!(field(ExperimentConfig { horizon: 0.0, ..small(Tier::ScalarClosedLoop) }), "horizon");
        assert_eq!(field(ExperimentConfig { stride: 0, ..small(Tier::ScalarClosedLoop) }), "stride");
        assert_eq!(
            field(ExperimentConfig { detuning_nominal: Some(0.1), ..small(Tier::ScalarClosedLoop) }),
            "detuning_nominal"
        );
        assert_eq!(
            field(ExperimentConfig { scalar_integrator: ScalarIntegrator::Milstein, ..small(Tier::ScalarCoupled) }),
            "scalar_integrator"
        );
        assert_eq!(
            field(ExperimentConfig { scheme: SchemeConfig::Jacobs { kappa: 1.0 }, ..small(Tier::Linearized) }),
            "tier"
        );
        assert_eq!(
            field(ExperimentConfig { scheme: SchemeConfig::Robust { k: 4.0, alpha: 2.0 }, ..small(Tier::Linearized) }),
            "alpha"
        );
        assert!(small(Tier::MatrixCoupled).validate().is_ok());
    }

    #[test]
    fn std_is_zero_at_start_and_counts_match() {
        for tier in [Tier::ScalarClosedLoop, Tier::ScalarCoupled, Tier::MatrixCoupled, Tier::Linearized] {
            let stats = run_ensemble_with(&small(tier), 2).unwrap();
            assert_eq!(stats.std_delta()[0], 0.0);
            assert_eq!(stats.count(), 300);
            assert_eq!(stats.times.len(), 2000 / 50 + 1);
            assert_eq!(stats.nominal.is_some(), tier.is_coupled());
        }
    }

    #[test]
    fn workers_do_not_change_results() {
        let c = ExperimentConfig { n_paths: 700, ..small(Tier::ScalarCoupled) };
        let one = run_ensemble_with(&c, 1).unwrap();
        let three = run_ensemble_with(&c, 3).unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn chunked_merge_matches_single_pass() {
        let c = ExperimentConfig { n_paths: 600, ..small(Tier::ScalarClosedLoop) };
        let merged = run_ensemble_with(&c, 2).unwrap();
        let single = chunk_stats(&c, &c.times().unwrap(), 0..600).unwrap();
        for (a, b) in merged.delta.iter().zip(&single.delta) {
            assert_eq!(a.count(), b.count());
            assert!((a.mean() - b.mean()).abs() <= 1e-10 * b.mean().abs().max(1e-12));
            assert!((a.m2() - b.m2()).abs() <= 1e-10 * b.m2().abs().max(1e-12));
        }
    }

    #[test]
    fn path_errors_carry_ids() {
        // Coarse Euler steps on the density matrix break positivity.
        let c = ExperimentConfig {
            dt: 1e-2,
            horizon: 1.0,
            n_paths: 20,
            stride: 1,
            matrix_integrator: MatrixIntegrator::EulerMaruyama,
            ..small(Tier::MatrixCoupled)
        };
        let err = run_ensemble_with(&c, 1).unwrap_err();
        assert!(err.path_id().is_some());
        assert!(err.step().is_some());
    }

    #[test]
    fn sample_paths_need_coupled_tier() {
        assert!(run_sample_paths(&small(Tier::ScalarClosedLoop), 2).is_err());
        let paths = run_sample_paths_with(&small(Tier::ScalarCoupled), 3, 2).unwrap();
        assert_eq!(paths.iter().map(|p| p.path_id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(paths[1], simulate_path(&small(Tier::ScalarCoupled), 1).unwrap());
    }

    #[test]
    fn terminal_states_match_paths() {
        let c = small(Tier::ScalarCoupled);
        let ends = run_terminal_states_with(&ExperimentConfig { n_paths: 5, ..c.clone() }, 2).unwrap();
        assert_eq!(ends.len(), 5);
        assert_eq!(ends[3], *simulate_path(&c, 3).unwrap().last().unwrap());
    }

    #[test]
    fn long_run_error_preconditions() {
        assert!(long_run_error(&small(Tier::ScalarClosedLoop)).is_err());
        assert!(long_run_error(&ExperimentConfig { detuning: 0.1, ..small(Tier::ScalarCoupled) }).is_err());
    }

    #[test]
    fn tier_names_round_trip() {
        for tier in [Tier::ScalarClosedLoop, Tier::ScalarCoupled, Tier::MatrixCoupled, Tier::Linearized] {
            assert_eq!(tier.name().parse::<Tier>().unwrap(), tier);
        }
        assert!("fast".parse::<Tier>().is_err());
    }
}
