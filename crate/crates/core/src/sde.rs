//! Reproducible Wiener increments and a fixed-grid time-stepping driver.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, path_id)`: the seed
//! fixes the key and the path id selects one of the 2^64 non-overlapping
//! streams. Increment `s` of path `p` is therefore a pure function of
//! `(seed, p, s, dt)`, independent of scheduling and worker count, and
//! different model tiers can replay identical noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_i = i * dt`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("dt", format!("must be positive, got {dt}")));
        }
        Ok(TimeGrid { dt, n_steps })
    }

    /// Grid covering `[0, horizon]`; the horizon is rounded to whole steps.
    pub fn with_horizon(dt: f64, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::config("horizon", format!("must be non-negative, got {horizon}")));
        }
        let grid = TimeGrid::new(dt, 0)?;
        Ok(TimeGrid { n_steps: (horizon / dt).round() as usize, ..grid })
    }

    #[inline]
    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }

    /// Step indices recorded at the given stride: 0, stride, 2 stride, ..., n_steps.
    pub fn recorded_steps(&self, stride: usize) -> Vec<usize> {
        let stride = stride.max(1);
        let mut steps: Vec<usize> = (0..=self.n_steps).step_by(stride).collect();
        if steps.last() != Some(&self.n_steps) {
            steps.push(self.n_steps);
        }
        steps
    }
}

/// Identifies the noise of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub seed: u64,
    pub path_id: u64,
    pub grid: TimeGrid,
}

impl NoiseSpec {
    pub fn new(seed: u64, path_id: u64, grid: TimeGrid) -> Self {
        NoiseSpec { seed, path_id, grid }
    }

    pub fn stream(&self) -> NoiseStream {
        NoiseStream::new(self.seed, self.path_id, self.grid.dt)
    }
}

/// Infinite iterator of `N(0, dt)` increments for one `(seed, path_id)`.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    sqrt_dt: f64,
}

impl NoiseStream {
    pub fn new(seed: u64, path_id: u64, dt: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_id);
        NoiseStream { rng, sqrt_dt: dt.sqrt() }
    }
}

impl Iterator for NoiseStream {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        Some(self.sqrt_dt * z)
    }
}

/// The `n_steps` increments of a path.
pub fn wiener_increments(spec: &NoiseSpec) -> Vec<f64> {
    spec.stream().take(spec.grid.n_steps).collect()
}

/// States that can be checked for NaN or infinity.
pub trait Finite {
    fn is_finite(&self) -> bool;
}

impl Finite for f64 {
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

/// A sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord<S> {
    pub path_id: u64,
    pub times: Vec<f64>,
    pub states: Vec<S>,
}

impl<S> PathRecord<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&S> {
        self.states.last()
    }

    pub fn map<T>(&self, f: impl FnMut(&S) -> T) -> PathRecord<T> {
        PathRecord { path_id: self.path_id, times: self.times.clone(), states: self.states.iter().map(f).collect() }
    }
}

/// Runs `stepper(state, t, dt, dW)` over the grid, drawing increments from
/// the path's noise stream and recording every `stride` steps (plus `t = 0`
/// and `t = T`).
pub fn integrate<S, F>(initial: S, stepper: F, noise: &NoiseSpec, stride: usize) -> Result<PathRecord<S>>
where
    S: Clone + Finite,
    F: FnMut(&S, f64, f64, f64) -> Result<S>,
{
    drive(initial, stepper, noise.path_id, &noise.grid, noise.stream(), stride)
}

/// Same as [`integrate`] with caller-supplied increments (at least `n_steps`).
pub fn integrate_with_increments<S, F>(
    initial: S,
    stepper: F,
    grid: &TimeGrid,
    increments: &[f64],
    stride: usize,
) -> Result<PathRecord<S>>
where
    S: Clone + Finite,
    F: FnMut(&S, f64, f64, f64) -> Result<S>,
{
    if increments.len() < grid.n_steps {
        return Err(Error::argument(
            "increments",
            format!("need {} increments, got {}", grid.n_steps, increments.len()),
        ));
    }
    drive(initial, stepper, 0, grid, increments.iter().copied(), stride)
}

fn drive<S, F, I>(
    initial: S,
    mut stepper: F,
    path_id: u64,
    grid: &TimeGrid,
    increments: I,
    stride: usize,
) -> Result<PathRecord<S>>
where
    S: Clone + Finite,
    F: FnMut(&S, f64, f64, f64) -> Result<S>,
    I: Iterator<Item = f64>,
{
    if stride == 0 {
        return Err(Error::config("stride", "must be at least 1"));
    }
    let capacity = grid.n_steps / stride + 2;
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);
    times.push(0.0);
    states.push(initial.clone());

    let mut state = initial;
    for (step, dw) in increments.take(grid.n_steps).enumerate() {
        let t = grid.time(step);
        state = stepper(&state, t, grid.dt, dw).map_err(|e| Error::Integration { step, source: Box::new(e) })?;
        if !state.is_finite() {
            return Err(Error::Integration { step, source: Box::new(Error::NonFinite) });
        }
        let done = step + 1;
        if done % stride == 0 || done == grid.n_steps {
            times.push(grid.time(done));
            states.push(state.clone());
        }
    }
    Ok(PathRecord { path_id, times, states })
}
