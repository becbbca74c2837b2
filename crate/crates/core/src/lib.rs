//! Simulation of a continuously measured qubit steered to a target state by
//! adaptive measurement.
//!
//! The Bloch angle `delta` of a pure state in the x-z plane measures the
//! distance to the target `|0>` (`delta = 0`). A feedback law picks the
//! measurement axis `theta_m` and strength `k` from the filter's estimate of
//! `delta`. Two laws are provided: the perpendicular-axis law with strength
//! `kappa * delta^2`, and the robust law with axis `alpha * delta` and
//! constant strength.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod policy;
pub mod qubit;
pub mod sde;
pub mod stats;

pub use dynamics::{
    fidelity_path, record_increment, scalar_coeffs, step_coupled, step_filter, step_filter_with, step_linearized,
    step_matrix_coupled, step_scalar_closed_loop, step_scalar_closed_loop_with, step_sme, step_sme_with, CoupledState,
    DisturbanceSpec, MatrixCoupledState, MatrixIntegrator, RecordIncrement, ScalarDriftDiffusion, ScalarIntegrator,
};
pub use ensemble::{
    long_run_error, run_ensemble, run_ensemble_with, run_sample_paths, run_sample_paths_with, run_terminal_states_with,
    simulate_path, ExperimentConfig, Tier,
};
pub use error::{Error, Result};
pub use policy::{fidelity_drift, jacobs_policy, optimal_alpha, robust_policy, MeasurementAction, SchemeConfig};
pub use qubit::{
    axis_observable, bloch_angle, expectation, fidelity_target, fold, state_from_angle, transition_probs, wrap,
    BlochAngle, Matrix2, MeasurementAxis, QubitDensity, TuningParams,
};
pub use sde::{integrate, integrate_with_increments, wiener_increments, NoiseSpec, PathRecord, TimeGrid};
pub use stats::{EnsembleStats, Welford};
