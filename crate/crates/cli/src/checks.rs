//! Measurements behind `verify` and the acceptance suite.

use adaptmeas_core::dynamics::step_coupled_signed;
use adaptmeas_core::{
    fidelity_drift, fold, integrate, scalar_coeffs, simulate_path, step_scalar_closed_loop, wiener_increments, wrap,
    CoupledState, DisturbanceSpec, EnsembleStats, ExperimentConfig, NoiseSpec, PathRecord, Result, SchemeConfig, Tier,
    TimeGrid,
};

pub const ROBUST: SchemeConfig = SchemeConfig::Robust { k: 4.0, alpha: 0.5 };
pub const JACOBS: SchemeConfig = SchemeConfig::Jacobs { kappa: 1.0 };

/// Scheme and (Delta, Delta') combinations of the matrix/scalar comparison.
pub fn oracle_cases() -> Vec<(SchemeConfig, DisturbanceSpec)> {
    let disturbances =
        [DisturbanceSpec::new(0.0, 0.0), DisturbanceSpec::new(1e-2, 0.0), DisturbanceSpec::new(1e-2, 1e-2)];
    [ROBUST, JACOBS].into_iter().flat_map(|s| disturbances.map(|d| (s, d))).collect()
}

/// Largest angle gaps between the two tiers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Deviation {
    pub true_angle: f64,
    pub nominal_angle: f64,
}

impl Deviation {
    pub fn max(&self) -> f64 {
        self.true_angle.max(self.nominal_angle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSetup {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: u64,
    pub seed: u64,
    /// `-1` flips the innovation drift of the scalar tier (fault injection).
    pub innovation_sign: f64,
}

/// Runs the density-matrix tier and the scalar tier on the same increments
/// and returns the largest `|wrap(angle(rho) - delta)|` over every step and
/// path, for the true and the nominal state.
pub fn oracle_deviation(scheme: SchemeConfig, dist: DisturbanceSpec, setup: &OracleSetup) -> Result<Deviation> {
    let config = ExperimentConfig {
        tier: Tier::MatrixCoupled,
        detuning: dist.detuning,
        detuning_nominal: Some(dist.detuning_nominal),
        dt: setup.dt,
        horizon: setup.horizon,
        n_paths: setup.n_paths,
        stride: 1,
        seed: setup.seed,
        ..ExperimentConfig::new(scheme)
    };
    config.validate()?;
    let grid = config.grid()?;
    let mut worst = Deviation::default();
    for id in 0..setup.n_paths {
        let matrix = simulate_path(&config, id)?;
        let scalar = integrate(
            config.initial(),
            |s: &CoupledState, _, dt, dw| {
                step_coupled_signed(s, &scheme, &dist, dt, dw, setup.innovation_sign).map(|r| r.0)
            },
            &NoiseSpec::new(config.seed, id, grid),
            1,
        )?;
        for (m, s) in matrix.states.iter().zip(&scalar.states) {
            worst.true_angle = worst.true_angle.max(wrap(m.delta_true - s.delta_true).abs());
            worst.nominal_angle = worst.nominal_angle.max(wrap(m.delta_nominal - s.delta_nominal).abs());
        }
    }
    Ok(worst)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Terminal angle and Brownian endpoint of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint {
    pub delta: f64,
    pub w: f64,
}

/// Euler-Maruyama paths of the perpendicular law with strength `kappa delta^2`
/// on the raw angle and no detuning. Its coefficients are exactly
/// `d delta = sqrt(8 kappa) delta dW`, with solution
/// `delta_0 exp(sqrt(8 kappa) W_t - 4 kappa t)`. The library law folds the
/// angle in the strength, which agrees with this only while `delta <= pi`.
pub fn raw_perpendicular_endpoints(
    kappa: f64,
    delta0: f64,
    dt: f64,
    horizon: f64,
    n_paths: u64,
    seed: u64,
) -> Result<Vec<Endpoint>> {
    let grid = TimeGrid::with_horizon(dt, horizon)?;
    let mut out = Vec::with_capacity(n_paths as usize);
    for id in 0..n_paths {
        let incs = wiener_increments(&NoiseSpec::new(seed, id, grid));
        let path = adaptmeas_core::integrate_with_increments(
            delta0,
            |d: &f64, _, dt, dw| {
                let c = scalar_coeffs(*d, d + std::f64::consts::FRAC_PI_2, kappa * d * d, 0.0)?;
                Ok(d + c.drift * dt + c.diffusion * dw)
            },
            &grid,
            &incs,
            usize::MAX,
        )?;
        out.push(Endpoint { delta: *path.last().expect("non-empty path"), w: incs.iter().sum() });
    }
    Ok(out)
}

/// Median over paths of `|delta_T / exact - 1|`, see
/// [`raw_perpendicular_endpoints`].
pub fn closed_form_median_error(kappa: f64, dt: f64, horizon: f64, n_paths: u64, seed: u64) -> Result<f64> {
    let delta0 = std::f64::consts::PI;
    let ends = raw_perpendicular_endpoints(kappa, delta0, dt, horizon, n_paths, seed)?;
    let t = TimeGrid::with_horizon(dt, horizon)?.horizon();
    let errors: Vec<f64> = ends
        .iter()
        .map(|e| (e.delta / (delta0 * ((8.0 * kappa).sqrt() * e.w - 4.0 * kappa * t).exp()) - 1.0).abs())
        .collect();
    Ok(median(&errors))
}

/// Fraction of `values` strictly below `threshold` after folding.
pub fn fraction_folded_below(values: &[f64], threshold: f64) -> f64 {
    values.iter().filter(|d| fold(**d) < threshold).count() as f64 / values.len().max(1) as f64
}

/// Grid argmax over `alpha` in `[0, 1]` of the fidelity drift.
pub fn alpha_argmax(delta: f64, k: f64, detuning: f64, step: f64) -> Result<f64> {
    let n = (1.0 / step).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=n {
        let alpha = (i as f64 * step).min(1.0);
        let v = fidelity_drift(delta, alpha, k, detuning)?;
        if v > best.0 {
            best = (v, alpha);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub drift: f64,
}

impl DriftEstimate {
    /// `|mean - drift|` in standard errors.
    pub fn z(&self) -> f64 {
        (self.mean - self.drift).abs() / self.standard_error
    }
}

/// Average of `[F(delta + d delta) - F(delta)] / dt` over `n` independent
/// closed-loop steps from `delta`, against the analytic drift of `F`.
pub fn fidelity_increment_mc(
    delta: f64,
    alpha: f64,
    k: f64,
    detuning: f64,
    dt: f64,
    n: usize,
    seed: u64,
) -> Result<DriftEstimate> {
    let scheme = SchemeConfig::robust(k, alpha)?;
    let f = |d: f64| 0.5 * (1.0 + d.cos());
    let incs = wiener_increments(&NoiseSpec::new(seed, 0, TimeGrid::new(dt, n)?));
    let mut acc = adaptmeas_core::Welford::new();
    for dw in incs {
        acc.push((f(step_scalar_closed_loop(delta, &scheme, detuning, dt, dw)?) - f(delta)) / dt);
    }
    Ok(DriftEstimate { mean: acc.mean(), standard_error: acc.sem(), drift: fidelity_drift(delta, alpha, k, detuning)? })
}

/// Largest `|delta - delta'|` over every step of `n_paths` coupled paths.
pub fn tracking_deviation(config: &ExperimentConfig) -> Result<f64> {
    let config = ExperimentConfig { stride: 1, ..config.clone() };
    config.validate()?;
    let mut worst: f64 = 0.0;
    for id in 0..config.n_paths {
        for s in simulate_path(&config, id)?.states {
            worst = worst.max((s.delta_true - s.delta_nominal).abs());
        }
    }
    Ok(worst)
}

/// Largest increase of the folded mean between consecutive recorded times
/// `t >= from`, in units of two standard errors of the difference. Values
/// at most 1 mean non-increasing within noise.
pub fn monotone_excess(stats: &EnsembleStats, from: f64) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..stats.len().saturating_sub(1) {
        if stats.times[i] < from - 1e-12 {
            continue;
        }
        let (a, b) = (&stats.delta[i], &stats.delta[i + 1]);
        let se = (a.sem().powi(2) + b.sem().powi(2)).sqrt();
        let rise = b.mean() - a.mean();
        let excess = if se > 0.0 {
            rise / (2.0 * se)
        } else if rise > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        worst = worst.max(excess);
    }
    worst
}

pub fn terminal_true_angles(paths: &[PathRecord<CoupledState>]) -> Vec<f64> {
    paths.iter().map(|p| p.last().expect("non-empty path").delta_true).collect()
}

/// Least-squares slope over `t >= from` of the per-time median of the raw
/// true angle.
pub fn median_path_slope(paths: &[PathRecord<CoupledState>], from: f64) -> f64 {
    let times = &paths[0].times;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .enumerate()
        .filter(|(_, t)| **t >= from - 1e-12)
        .map(|(i, t)| (*t, median(&paths.iter().map(|p| p.states[i].delta_true).collect::<Vec<_>>())))
        .collect();
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt).powi(2)));
    sxy / sxx
}
