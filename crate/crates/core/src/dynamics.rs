//! Equations of motion at three levels of description.
//!
//! * Scalar tier: the Bloch angle of a pure x-z state measured along
//!   `sigma(theta_m)` with strength `k` and rotated by `Delta sigma_y` obeys
//!   the Itô SDE
//!
//!   ```text
//!   d delta = [2 Delta - 2k sin(2(delta - theta_m))] dt - sqrt(8k) sin(delta - theta_m) dW
//!   ```
//!
//!   where `dW` is the noise of the measurement record
//!   `dy = cos(delta - theta_m) dt + dW`. The sign of the diffusion is tied to
//!   that record; flipping it breaks pathwise agreement with the matrix tier.
//! * Matrix tier: the stochastic master equation for `rho`, its record and the
//!   nominal filter driven by the innovation `dy - Tr(sigma rho') dt`.
//! * Linearized tier: the scalar robust closed loop expanded around the target.
//!
//! The matrix tier is the reference for the scalar tier.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::SchemeConfig;
use crate::qubit::{observable_unchecked, pure_state_unchecked, sigma_y, wrap, Matrix2, QubitDensity, PLANE_TOLERANCE};
use crate::sde::{Finite, PathRecord};

/// Eigenvalues in `[-POSITIVITY_CLAMP, 0)` are clamped to zero after a step;
/// anything lower aborts.
pub const POSITIVITY_CLAMP: f64 = 1e-6;

/// `dt` and `dW` coefficients of the scalar angle SDE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarDriftDiffusion {
    pub drift: f64,
    pub diffusion: f64,
}

/// True and nominal (filter) Bloch angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledState {
    pub delta_true: f64,
    pub delta_nominal: f64,
}

impl CoupledState {
    pub fn new(delta_true: f64, delta_nominal: f64) -> Self {
        CoupledState { delta_true, delta_nominal }
    }
}

impl Finite for CoupledState {
    fn is_finite(&self) -> bool {
        self.delta_true.is_finite() && self.delta_nominal.is_finite()
    }
}

/// Actual and assumed detuning of the `Delta sigma_y` Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub detuning: f64,
    pub detuning_nominal: f64,
}

impl DisturbanceSpec {
    pub fn new(detuning: f64, detuning_nominal: f64) -> Self {
        DisturbanceSpec { detuning, detuning_nominal }
    }

    /// Both models use the same Hamiltonian.
    pub fn known(detuning: f64) -> Self {
        DisturbanceSpec { detuning, detuning_nominal: detuning }
    }
}

/// Measurement record increment over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordIncrement {
    pub dy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarIntegrator {
    #[default]
    EulerMaruyama,
    /// Closed-loop only; the derivative includes the feedback law.
    Milstein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixIntegrator {
    /// Explicit Euler-Maruyama on `rho`, then Hermitian symmetrization, trace
    /// renormalization and eigenvalue clamping.
    EulerMaruyama,
    /// Positivity-preserving measurement-operator update
    /// `rho -> M rho M^dag / Tr(...)`, first-order consistent with the SME.
    Kraus,
    /// Euler-Maruyama increment of the SME projected on the tangent of the
    /// pure x-z states and applied as a `sigma_y` rotation. Requires pure
    /// states in the x-z plane, which the dynamics preserves.
    #[default]
    Geodesic,
}

#[inline]
fn coeffs_unchecked(delta: f64, theta_m: f64, k: f64, detuning: f64) -> ScalarDriftDiffusion {
    let (s, c) = (delta - theta_m).sin_cos();
    ScalarDriftDiffusion { drift: 2.0 * detuning - 4.0 * k * s * c, diffusion: -(8.0 * k).sqrt() * s }
}

/// Drift `2 Delta - 2k sin(2(delta - theta_m))` and diffusion
/// `-sqrt(8k) sin(delta - theta_m)` of the angle for a fixed measurement.
pub fn scalar_coeffs(delta: f64, theta_m: f64, k: f64, detuning: f64) -> Result<ScalarDriftDiffusion> {
    if !(k >= 0.0) {
        return Err(Error::argument("k", format!("must be non-negative, got {k}")));
    }
    Ok(coeffs_unchecked(delta, theta_m, k, detuning))
}

fn finite_or_err(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite)
    }
}

/// One Euler-Maruyama step of the closed loop with the policy evaluated at the
/// true angle (detuning known).
pub fn step_scalar_closed_loop(delta: f64, scheme: &SchemeConfig, detuning: f64, dt: f64, dw: f64) -> Result<f64> {
    step_scalar_closed_loop_with(delta, scheme, detuning, dt, dw, ScalarIntegrator::EulerMaruyama)
}

pub fn step_scalar_closed_loop_with(
    delta: f64,
    scheme: &SchemeConfig,
    detuning: f64,
    dt: f64,
    dw: f64,
    integrator: ScalarIntegrator,
) -> Result<f64> {
    let action = scheme.action(delta);
    let c = coeffs_unchecked(delta, action.theta_m, action.strength, detuning);
    let mut next = delta + c.drift * dt + c.diffusion * dw;
    if integrator == ScalarIntegrator::Milstein {
        // b(delta) = -A(delta) sin(delta - theta(delta)) with A = sqrt(8 k(delta)).
        let (dtheta, amp, damp) = scheme.sensitivities(delta);
        let (s, co) = (delta - action.theta_m).sin_cos();
        let db = -damp * s - amp * co * (1.0 - dtheta);
        next += 0.5 * c.diffusion * db * (dw * dw - dt);
    }
    finite_or_err(next)
}

/// Euler-Maruyama step of the robust closed loop linearized at the target:
/// `d delta = [2 Delta - 4 k beta delta] dt - sqrt(8k) beta delta dW`.
pub fn step_linearized(delta: f64, k: f64, alpha: f64, detuning: f64, dt: f64, dw: f64) -> Result<f64> {
    SchemeConfig::robust(k, alpha)?;
    let beta = 1.0 - alpha;
    let drift = 2.0 * detuning - 4.0 * k * beta * delta;
    let diffusion = -(8.0 * k).sqrt() * beta * delta;
    finite_or_err(delta + drift * dt + diffusion * dw)
}

/// Zero of the linearized drift, `Delta / (2 k beta)`.
pub fn linearized_stationary_point(k: f64, alpha: f64, detuning: f64) -> f64 {
    detuning / (2.0 * k * (1.0 - alpha))
}

/// One step of the true angle, the record and the nominal angle, all sharing
/// one increment `dW`. The policy sees only the nominal angle.
pub fn step_coupled(
    state: &CoupledState,
    scheme: &SchemeConfig,
    disturbance: &DisturbanceSpec,
    dt: f64,
    dw: f64,
) -> Result<(CoupledState, RecordIncrement)> {
    step_coupled_signed(state, scheme, disturbance, dt, dw, 1.0)
}

/// [`step_coupled`] with the innovation drift multiplied by `innovation_sign`.
/// Only `+1` is physical; `-1` is a fault injection for the verifier.
#[doc(hidden)]
pub fn step_coupled_signed(
    state: &CoupledState,
    scheme: &SchemeConfig,
    disturbance: &DisturbanceSpec,
    dt: f64,
    dw: f64,
    innovation_sign: f64,
) -> Result<(CoupledState, RecordIncrement)> {
    let CoupledState { delta_true, delta_nominal } = *state;
    let action = scheme.action(delta_nominal);
    let (theta, k) = (action.theta_m, action.strength);

    let truth = coeffs_unchecked(delta_true, theta, k, disturbance.detuning);
    let next_true = delta_true + truth.drift * dt + truth.diffusion * dw;

    let predicted_true = (delta_true - theta).cos();
    let predicted_nominal = (delta_nominal - theta).cos();
    let dy = predicted_true * dt + dw;
    // dy - cos(delta' - theta) dt, grouped so that equal angles give dW exactly.
    let innovation = dw + innovation_sign * (predicted_true - predicted_nominal) * dt;

    let nominal = coeffs_unchecked(delta_nominal, theta, k, disturbance.detuning_nominal);
    let next_nominal = delta_nominal + nominal.drift * dt + nominal.diffusion * innovation;

    let next = CoupledState { delta_true: finite_or_err(next_true)?, delta_nominal: finite_or_err(next_nominal)? };
    Ok((next, RecordIncrement { dy }))
}

/// Euler-Maruyama increment of the SME for a fixed measurement:
/// `-i Delta [sigma_y, rho] dt - k [sigma, [sigma, rho]] dt
///  + sqrt(2k) (sigma rho + rho sigma - 2 Tr(sigma rho) rho) dxi`.
pub fn sme_increment(rho: &Matrix2, sigma: &Matrix2, k: f64, detuning: f64, dt: f64, dxi: f64) -> Matrix2 {
    let hamiltonian = sigma_y().commutator(rho).scale_c(Complex64::new(0.0, -detuning));
    let dephasing = sigma.commutator(&sigma.commutator(rho)).scale(-k);
    let mean = sigma.trace_product(rho).re;
    let backaction = (sigma.anticommutator(rho) - rho.scale(2.0 * mean)).scale((2.0 * k).sqrt());
    (hamiltonian + dephasing).scale(dt) + backaction.scale(dxi)
}

fn check_strength(k: f64) -> Result<()> {
    if k >= 0.0 {
        Ok(())
    } else {
        Err(Error::argument("k", format!("must be non-negative, got {k}")))
    }
}

/// Symmetrize, renormalize and clamp eigenvalues in `[-POSITIVITY_CLAMP, 0)`.
fn project_density(m: Matrix2) -> Result<QubitDensity> {
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let h = m.hermitian_part();
    let tr = h.trace().re;
    if !(tr > 0.0) {
        return Err(Error::Positivity { min_eigenvalue: tr });
    }
    let h = h.scale(1.0 / tr);
    let (lo, hi) = h.hermitian_eigenvalues();
    if lo < -POSITIVITY_CLAMP {
        return Err(Error::Positivity { min_eigenvalue: lo });
    }
    if lo < 0.0 {
        // Dropping the negative eigenvalue leaves the top eigenprojector.
        let proj = (h - Matrix2::identity().scale(lo)).scale(1.0 / (hi - lo));
        return Ok(QubitDensity::from_matrix_unchecked(proj.hermitian_part()));
    }
    Ok(QubitDensity::from_matrix_unchecked(h))
}

/// One step of `d rho` driven by `dxi` (the Wiener increment for the true
/// state, the innovation for the filter).
fn step_density(
    rho: &QubitDensity,
    theta_m: f64,
    k: f64,
    detuning: f64,
    dt: f64,
    dxi: f64,
    integrator: MatrixIntegrator,
) -> Result<QubitDensity> {
    check_strength(k)?;
    let sigma = observable_unchecked(theta_m);
    let m = rho.matrix();
    match integrator {
        MatrixIntegrator::EulerMaruyama => project_density(*m + sme_increment(m, &sigma, k, detuning, dt, dxi)),
        MatrixIntegrator::Kraus => {
            let root = (2.0 * k).sqrt();
            let mean = sigma.trace_product(m).re;
            let dy = dxi + 2.0 * root * mean * dt;
            let scalar = 1.0 - k * dt + k * (dy * dy - dt);
            let op = Matrix2::identity().scale(scalar)
                + sigma_y().scale_c(Complex64::new(0.0, -detuning * dt))
                + sigma.scale(root * dy);
            project_density(op * *m * op.adjoint())
        }
        MatrixIntegrator::Geodesic => {
            let [x, y, z] = rho.bloch_vector();
            if y.abs() > PLANE_TOLERANCE {
                return Err(Error::Domain { quantity: "Tr(sigma_y rho)", value: y });
            }
            let purity = rho.purity();
            if purity < 1.0 - PLANE_TOLERANCE {
                return Err(Error::Domain { quantity: "purity", value: purity });
            }
            let inc = sme_increment(m, &sigma, k, detuning, dt, dxi);
            let dx = 2.0 * inc.0[1].re;
            let dz = (inc.0[0] - inc.0[3]).re;
            let dangle = (z * dx - x * dz) / (x * x + z * z);
            if !dangle.is_finite() {
                return Err(Error::NonFinite);
            }
            let (s, c) = (0.5 * dangle).sin_cos();
            let rot = Matrix2::real(c, -s, s, c);
            project_density(rot * *m * rot.adjoint())
        }
    }
}

/// Euler-Maruyama step of the true-state SME with the post-step projection;
/// see [`MatrixIntegrator::EulerMaruyama`].
pub fn step_sme(rho: &QubitDensity, theta_m: f64, k: f64, detuning: f64, dt: f64, dw: f64) -> Result<QubitDensity> {
    step_sme_with(rho, theta_m, k, detuning, dt, dw, MatrixIntegrator::EulerMaruyama)
}

pub fn step_sme_with(
    rho: &QubitDensity,
    theta_m: f64,
    k: f64,
    detuning: f64,
    dt: f64,
    dw: f64,
    integrator: MatrixIntegrator,
) -> Result<QubitDensity> {
    step_density(rho, theta_m, k, detuning, dt, dw, integrator)
}

/// `dy = Tr(sigma(theta_m) rho) dt + dW`.
pub fn record_increment(rho: &QubitDensity, theta_m: f64, dt: f64, dw: f64) -> RecordIncrement {
    RecordIncrement { dy: crate::qubit::expectation(theta_m, rho) * dt + dw }
}

/// Euler-Maruyama step of the nominal filter driven by the innovation
/// `dy - Tr(sigma rho') dt`.
pub fn step_filter(
    rho_nominal: &QubitDensity,
    theta_m: f64,
    k: f64,
    detuning_nominal: f64,
    dt: f64,
    dy: f64,
) -> Result<QubitDensity> {
    step_filter_with(rho_nominal, theta_m, k, detuning_nominal, dt, dy, MatrixIntegrator::EulerMaruyama)
}

pub fn step_filter_with(
    rho_nominal: &QubitDensity,
    theta_m: f64,
    k: f64,
    detuning_nominal: f64,
    dt: f64,
    dy: f64,
    integrator: MatrixIntegrator,
) -> Result<QubitDensity> {
    let innovation = dy - crate::qubit::expectation(theta_m, rho_nominal) * dt;
    step_density(rho_nominal, theta_m, k, detuning_nominal, dt, innovation, integrator)
}

/// True state, filter state, and their continuously lifted Bloch angles. The
/// lifted nominal angle is what the feedback law sees, so that the robust
/// axis `alpha * delta'` stays continuous across `+-pi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixCoupledState {
    pub rho: QubitDensity,
    pub rho_nominal: QubitDensity,
    pub delta_true: f64,
    pub delta_nominal: f64,
}

impl MatrixCoupledState {
    pub fn from_angles(delta_true: f64, delta_nominal: f64) -> Result<Self> {
        crate::error::ensure_finite("delta_true", delta_true)?;
        crate::error::ensure_finite("delta_nominal", delta_nominal)?;
        Ok(MatrixCoupledState {
            rho: pure_state_unchecked(delta_true),
            rho_nominal: pure_state_unchecked(delta_nominal),
            delta_true,
            delta_nominal,
        })
    }

    pub fn angles(&self) -> CoupledState {
        CoupledState { delta_true: self.delta_true, delta_nominal: self.delta_nominal }
    }
}

impl Finite for MatrixCoupledState {
    fn is_finite(&self) -> bool {
        self.rho.matrix().is_finite() && self.rho_nominal.matrix().is_finite() && self.angles().is_finite()
    }
}

/// Matrix-tier counterpart of [`step_coupled`]: true SME, record, filter.
pub fn step_matrix_coupled(
    state: &MatrixCoupledState,
    scheme: &SchemeConfig,
    disturbance: &DisturbanceSpec,
    dt: f64,
    dw: f64,
    integrator: MatrixIntegrator,
) -> Result<(MatrixCoupledState, RecordIncrement)> {
    let action = scheme.action(state.delta_nominal);
    let (theta, k) = (action.theta_m, action.strength);
    let record = record_increment(&state.rho, theta, dt, dw);
    let rho = step_sme_with(&state.rho, theta, k, disturbance.detuning, dt, dw, integrator)?;
    let rho_nominal =
        step_filter_with(&state.rho_nominal, theta, k, disturbance.detuning_nominal, dt, record.dy, integrator)?;
    let delta_true = state.delta_true + wrap(rho.raw_angle() - state.delta_true);
    let delta_nominal = state.delta_nominal + wrap(rho_nominal.raw_angle() - state.delta_nominal);
    Ok((MatrixCoupledState { rho, rho_nominal, delta_true, delta_nominal }, record))
}

/// `(1 + cos delta) / 2` along a path of Bloch angles.
pub fn fidelity_path(path: &PathRecord<f64>) -> Vec<f64> {
    path.states.iter().map(|d| 0.5 * (1.0 + d.cos())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::fidelity_drift;
    use crate::qubit::{bloch_angle, expectation, state_from_angle};
    use crate::sde::{integrate, integrate_with_increments, wiener_increments, NoiseSpec, TimeGrid};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6, PI};

    const ROBUST: SchemeConfig = SchemeConfig::Robust { k: 4.0, alpha: 0.5 };
    const JACOBS: SchemeConfig = SchemeConfig::Jacobs { kappa: 1.0 };
    const ALL_INTEGRATORS: [MatrixIntegrator; 3] =
        [MatrixIntegrator::EulerMaruyama, MatrixIntegrator::Kraus, MatrixIntegrator::Geodesic];

    #[test]
    fn coeffs_examples() {
        let c = scalar_coeffs(0.7, 0.7, 3.0, 0.25).unwrap();
        assert_eq!(c, ScalarDriftDiffusion { drift: 0.5, diffusion: 0.0 });

        let c = scalar_coeffs(PI, FRAC_PI_2, 4.0, 0.0).unwrap();
        assert_abs_diff_eq!(c.drift, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.diffusion, -32f64.sqrt(), epsilon = 1e-12);

        // Jacobs closed loop gives 2 Delta dt + sqrt(8 kappa) delta dW.
        let (kappa, detuning) = (1.3, 0.02);
        for delta in [0.1, 1.0, 3.0] {
            let a = SchemeConfig::Jacobs { kappa }.action(delta);
            let c = scalar_coeffs(delta, a.theta_m, a.strength, detuning).unwrap();
            assert_abs_diff_eq!(c.drift, 2.0 * detuning, epsilon = 1e-12);
            assert_abs_diff_eq!(c.diffusion, (8.0 * kappa).sqrt() * delta, epsilon = 1e-12);
        }
        assert!(scalar_coeffs(0.0, 0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn closed_loop_examples() {
        for dw in [-0.3, 0.0, 0.02] {
            assert_eq!(step_scalar_closed_loop(0.0, &ROBUST, 0.0, 1e-4, dw).unwrap(), 0.0);
        }
        let next = step_scalar_closed_loop(PI, &JACOBS, 0.0, 1e-4, 0.01).unwrap();
        assert_abs_diff_eq!(next, PI + 8f64.sqrt() * PI * 0.01, epsilon = 1e-12);

        let next = step_scalar_closed_loop(0.01, &ROBUST, 0.0, 1e-4, 0.0).unwrap();
        assert_abs_diff_eq!(0.01 - next, 8.0 * 0.01f64.sin() * 1e-4, epsilon = 1e-16);
    }

    #[test]
    fn milstein_matches_euler_without_noise_curvature() {
        // With dW^2 = dt the Milstein correction vanishes.
        let dt: f64 = 1e-4;
        let dw = dt.sqrt();
        for scheme in [ROBUST, JACOBS, SchemeConfig::JacobsConstant { k: 4.0 }] {
            let em = step_scalar_closed_loop(1.1, &scheme, 0.01, dt, dw).unwrap();
            let mil = step_scalar_closed_loop_with(1.1, &scheme, 0.01, dt, dw, ScalarIntegrator::Milstein).unwrap();
            assert_abs_diff_eq!(em, mil, epsilon = 1e-15);
        }
    }

    #[test]
    fn linearized_examples() {
        assert_eq!(step_linearized(0.0, 4.0, 0.5, 0.0, 1e-4, 0.05).unwrap(), 0.0);
        let star = linearized_stationary_point(4.0, 0.5, 1e-2);
        assert_abs_diff_eq!(star, 2.5e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(step_linearized(star, 4.0, 0.5, 1e-2, 1e-4, 0.0).unwrap(), star, epsilon = 1e-18);
        assert!(step_linearized(0.1, 0.0, 0.5, 0.0, 1e-4, 0.0).is_err());

        let delta = 1e-3;
        let (dt, k, beta): (f64, f64, f64) = (1e-4, 4.0, 0.5);
        for dw in [-0.02, 0.0, 0.013] {
            let lin = step_linearized(delta, k, 0.5, 0.0, dt, dw).unwrap();
            let full = step_scalar_closed_loop(delta, &ROBUST, 0.0, dt, dw).unwrap();
            // Taylor remainders: (8/3) k beta^3 delta^3 dt + sqrt(8k) (beta delta)^3 / 6 |dW|.
            let bound = (8.0 / 3.0) * k * beta.powi(3) * delta.powi(3) * dt
                + (8.0 * k).sqrt() * (beta * delta).powi(3) / 6.0 * dw.abs();
            assert!((lin - full).abs() <= 1.01 * bound + 1e-18, "{} > {bound}", (lin - full).abs());
        }
    }

    #[test]
    fn coupled_matches_when_models_agree() {
        let noise = NoiseSpec::new(3, 0, TimeGrid::with_horizon(1e-4, 2.0).unwrap());
        let dist = DisturbanceSpec::known(1e-2);
        for scheme in [ROBUST, JACOBS] {
            let rec = integrate(
                CoupledState::new(PI, PI),
                |s: &CoupledState, _, dt, dw| step_coupled(s, &scheme, &dist, dt, dw).map(|r| r.0),
                &noise,
                10,
            )
            .unwrap();
            for s in &rec.states {
                assert_eq!(s.delta_true, s.delta_nominal);
            }
        }
    }

    #[test]
    fn coupled_examples_at_collapsed_nominal() {
        let dist = DisturbanceSpec::new(1e-2, 0.0);
        let (next, _) = step_coupled(&CoupledState::new(0.3, 0.0), &JACOBS, &dist, 1e-4, 0.05).unwrap();
        assert_eq!(next.delta_true, 0.3 + 2.0 * 1e-2 * 1e-4);
        assert_eq!(next.delta_nominal, 0.0);

        let delta = 0.3;
        let (dt, dw) = (1e-4, 0.01);
        let (next, _) = step_coupled(&CoupledState::new(delta, 0.0), &ROBUST, &dist, dt, dw).unwrap();
        let expected = delta + (2.0 * 1e-2 - 8.0 * (2.0 * delta).sin()) * dt - 32f64.sqrt() * delta.sin() * dw;
        assert_abs_diff_eq!(next.delta_true, expected, epsilon = 1e-15);
    }

    #[test]
    fn jacobs_innovation_has_tracking_sign() {
        // dnu = sin(delta - delta') dt + dW, so delta' is pulled toward delta.
        let (delta, nominal) = (1.0, 0.6);
        let (dt, dw) = (1e-3, 0.0);
        let (next, rec) =
            step_coupled(&CoupledState::new(delta, nominal), &JACOBS, &DisturbanceSpec::default(), dt, dw).unwrap();
        let theta = nominal + FRAC_PI_2;
        assert_abs_diff_eq!(rec.dy, (delta - theta).cos() * dt, epsilon = 1e-15);
        let innovation = (delta - nominal).sin() * dt;
        assert_abs_diff_eq!(next.delta_nominal, nominal + 8f64.sqrt() * nominal * innovation, epsilon = 1e-15);
        assert!(next.delta_nominal > nominal);
    }

    #[test]
    fn robust_innovation_closed_form() {
        let (alpha, delta, nominal) = (0.5, 0.9, 0.4);
        let (dt, dw) = (1e-3, 0.002);
        let (next, _) =
            step_coupled(&CoupledState::new(delta, nominal), &ROBUST, &DisturbanceSpec::default(), dt, dw).unwrap();
        let beta = 1.0 - alpha;
        let innovation = ((delta - alpha * nominal).cos() - (beta * nominal).cos()) * dt + dw;
        let expected =
            nominal - 8.0 * (2.0 * beta * nominal).sin() * dt - 32f64.sqrt() * (beta * nominal).sin() * innovation;
        assert_abs_diff_eq!(next.delta_nominal, expected, epsilon = 1e-15);
    }

    proptest! {
        // Closed-form coefficients of the robust and Jacobs angle equations, with the
        // robust diffusion sign referred to the record noise.
        #[test]
        fn unified_form_regression(
            delta in -4.0f64..4.0,
            nominal in 1e-3f64..PI,
            alpha in 0.0f64..=1.0,
            k in 0.1f64..10.0,
            detuning in -1.0f64..1.0,
        ) {
            let beta = 1.0 - alpha;
            let robust = SchemeConfig::Robust { k, alpha };

            // Closed loop, robust.
            let a = robust.action(delta);
            let c = scalar_coeffs(delta, a.theta_m, a.strength, detuning).unwrap();
            prop_assert!((c.drift - (2.0 * detuning - 2.0 * k * (2.0 * beta * delta).sin())).abs() <= 1e-12);
            prop_assert!((c.diffusion + (8.0 * k).sqrt() * (beta * delta).sin()).abs() <= 1e-12);

            // Coupled, robust: true and nominal equations.
            let a = robust.action(nominal);
            let c = scalar_coeffs(delta, a.theta_m, a.strength, detuning).unwrap();
            prop_assert!((c.drift - (2.0 * detuning - 2.0 * k * (2.0 * delta - 2.0 * alpha * nominal).sin())).abs() <= 1e-12);
            prop_assert!((c.diffusion + (8.0 * k).sqrt() * (delta - alpha * nominal).sin()).abs() <= 1e-12);
            let c = scalar_coeffs(nominal, a.theta_m, a.strength, detuning).unwrap();
            prop_assert!((c.drift - (2.0 * detuning - 2.0 * k * (2.0 * beta * nominal).sin())).abs() <= 1e-12);

            // Jacobs closed loop and coupled.
            let kappa = k;
            let jacobs = SchemeConfig::Jacobs { kappa };
            let a = jacobs.action(nominal);
            let c = scalar_coeffs(delta, a.theta_m, a.strength, detuning).unwrap();
            let drift = 2.0 * detuning + 2.0 * kappa * nominal * nominal * (2.0 * delta - 2.0 * nominal).sin();
            let diffusion = (8.0 * kappa).sqrt() * nominal * (delta - nominal).cos();
            prop_assert!((c.drift - drift).abs() <= 1e-10);
            prop_assert!((c.diffusion - diffusion).abs() <= 1e-10);
            let c = scalar_coeffs(nominal, a.theta_m, a.strength, detuning).unwrap();
            prop_assert!((c.drift - 2.0 * detuning).abs() <= 1e-10);
            prop_assert!((c.diffusion - (8.0 * kappa).sqrt() * nominal).abs() <= 1e-10);
        }

        // Itô's lemma on F = (1 + cos delta)/2 reproduces the fidelity drift.
        #[test]
        fn fidelity_drift_from_ito(delta in -PI..PI, alpha in 0.0f64..=1.0, k in 0.1f64..10.0, detuning in -1.0f64..1.0) {
            let a = SchemeConfig::Robust { k, alpha }.action(delta);
            let c = scalar_coeffs(delta, a.theta_m, a.strength, detuning).unwrap();
            let ito = -0.5 * delta.sin() * c.drift - 0.25 * delta.cos() * c.diffusion * c.diffusion;
            prop_assert!((ito - fidelity_drift(delta, alpha, k, detuning).unwrap()).abs() <= 1e-10);
        }

        #[test]
        fn sme_preserves_trace_and_hermiticity(
            delta in -PI..PI, theta in -PI..PI, k in 0.0f64..5.0, detuning in -1.0f64..1.0, dw in -0.03f64..0.03,
        ) {
            let rho = state_from_angle(delta).unwrap();
            let inc = sme_increment(rho.matrix(), &observable_unchecked(theta), k, detuning, 1e-4, dw);
            prop_assert!(inc.trace().norm() <= 1e-14);
            prop_assert!((inc - inc.adjoint()).max_abs() <= 1e-14);
            for integ in [MatrixIntegrator::Kraus, MatrixIntegrator::Geodesic] {
                let next = step_sme_with(&rho, theta, k, detuning, 1e-4, dw, integ).unwrap();
                prop_assert!((next.matrix().trace().re - 1.0).abs() <= 1e-12);
                prop_assert!((next.purity() - 1.0).abs() <= 1e-9);
                prop_assert!(QubitDensity::new(*next.matrix()).is_ok());
            }
        }

        // The tangent component of the matrix increment is the scalar increment.
        #[test]
        fn geodesic_step_equals_scalar_step(
            delta in -PI..PI, theta in -PI..PI, k in 0.0f64..5.0, detuning in -1.0f64..1.0, dw in -0.03f64..0.03,
        ) {
            let dt = 1e-4;
            let next = step_sme_with(&state_from_angle(delta).unwrap(), theta, k, detuning, dt, dw, MatrixIntegrator::Geodesic)
                .unwrap();
            let c = scalar_coeffs(delta, theta, k, detuning).unwrap();
            let expected = delta + c.drift * dt + c.diffusion * dw;
            prop_assert!(wrap(bloch_angle(&next).unwrap() - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn sme_fixed_point_at_eigenstate() {
        let rho = state_from_angle(0.0).unwrap();
        for integ in ALL_INTEGRATORS {
            for dw in [-0.02, 0.0, 0.015] {
                let next = step_sme_with(&rho, 0.0, 4.0, 0.0, 1e-4, dw, integ).unwrap();
                assert!((*next.matrix() - *rho.matrix()).max_abs() <= 1e-12, "{integ:?}");
            }
        }
    }

    #[test]
    fn euler_sme_loses_positivity_at_coarse_steps() {
        let rho = state_from_angle(1.0).unwrap();
        let err = step_sme(&rho, 0.0, 4.0, 0.0, 1e-2, 0.25).unwrap_err();
        assert!(matches!(err, Error::Positivity { min_eigenvalue } if min_eigenvalue < -POSITIVITY_CLAMP));
        // Kraus and geodesic updates stay physical.
        for integ in [MatrixIntegrator::Kraus, MatrixIntegrator::Geodesic] {
            assert!(step_sme_with(&rho, 0.0, 4.0, 0.0, 1e-2, 0.25, integ).is_ok());
        }
    }

    #[test]
    fn euler_sme_small_steps_track_scalar() {
        // Weak measurement, fine steps: EM stays inside the clamp window.
        let scheme = SchemeConfig::Robust { k: 0.01, alpha: 0.5 };
        let dt = 1e-6;
        let incs = wiener_increments(&NoiseSpec::new(4, 0, TimeGrid::new(dt, 20_000).unwrap()));
        let (mut rho, mut lifted, mut delta) = (state_from_angle(2.0).unwrap(), 2.0, 2.0);
        for &dw in &incs {
            let a = scheme.action(lifted);
            rho = step_sme(&rho, a.theta_m, a.strength, 1.0, dt, dw).unwrap();
            lifted += wrap(rho.raw_angle() - lifted);
            delta = step_scalar_closed_loop(delta, &scheme, 1.0, dt, dw).unwrap();
        }
        assert!((lifted - delta).abs() < 1e-4, "{lifted} vs {delta}");
        assert!(rho.purity() > 1.0 - 1e-3);
    }

    #[test]
    fn record_examples() {
        let target = state_from_angle(0.0).unwrap();
        assert_eq!(record_increment(&target, 0.0, 1e-4, 0.0).dy, 1e-4);
        let mixed = QubitDensity::maximally_mixed();
        for theta in [0.0, 1.0, -2.5] {
            assert_eq!(record_increment(&mixed, theta, 1e-4, 0.0123).dy, 0.0123);
        }
        let rho = state_from_angle(FRAC_PI_3).unwrap();
        assert_abs_diff_eq!(record_increment(&rho, FRAC_PI_6, 1e-4, 0.0).dy, FRAC_PI_6.cos() * 1e-4, epsilon = 1e-18);
    }

    #[test]
    fn filter_tracks_true_state_when_models_agree() {
        let grid = TimeGrid::with_horizon(1e-4, 1.0).unwrap();
        let incs = wiener_increments(&NoiseSpec::new(12, 0, grid));
        for integ in [MatrixIntegrator::Kraus, MatrixIntegrator::Geodesic] {
            let mut state = MatrixCoupledState::from_angles(2.5, 2.5).unwrap();
            let dist = DisturbanceSpec::known(0.05);
            let mut worst: f64 = 0.0;
            for &dw in &incs {
                state = step_matrix_coupled(&state, &ROBUST, &dist, grid.dt, dw, integ).unwrap().0;
                worst = worst.max((*state.rho.matrix() - *state.rho_nominal.matrix()).max_abs());
            }
            assert!(worst <= 1e-3, "{integ:?}: {worst}");
        }
    }

    #[test]
    fn filter_without_information_is_frozen() {
        let rho = state_from_angle(1.3).unwrap();
        for integ in ALL_INTEGRATORS {
            let next = step_filter_with(&rho, 0.4, 0.0, 0.0, 1e-4, 0.37, integ).unwrap();
            assert!((*next.matrix() - *rho.matrix()).max_abs() <= 1e-15, "{integ:?}");
        }
        // Jacobs at a collapsed nominal angle turns the measurement off.
        let a = JACOBS.action(0.0);
        assert_eq!(a.strength, 0.0);
        let nominal = state_from_angle(0.0).unwrap();
        let truth = state_from_angle(0.4).unwrap();
        let dy = record_increment(&truth, a.theta_m, 1e-4, 0.01).dy;
        assert_ne!(dy, 0.0);
        let next =
            step_filter_with(&nominal, a.theta_m, a.strength, 0.0, 1e-4, dy, MatrixIntegrator::Geodesic).unwrap();
        assert!((*next.matrix() - *nominal.matrix()).max_abs() <= 1e-15);
    }

    #[test]
    fn matrix_tier_fixed_point_at_target() {
        let mut state = MatrixCoupledState::from_angles(0.0, 0.0).unwrap();
        let incs = wiener_increments(&NoiseSpec::new(2, 0, TimeGrid::new(1e-4, 1000).unwrap()));
        for integ in ALL_INTEGRATORS {
            for &dw in &incs {
                let next =
                    step_matrix_coupled(&state, &ROBUST, &DisturbanceSpec::default(), 1e-4, dw, integ).unwrap().0;
                assert!((*next.rho.matrix() - *state.rho.matrix()).max_abs() <= 1e-9);
                state = next;
            }
            assert!(bloch_angle(&state.rho).unwrap().abs() <= 1e-9);
        }
    }

    #[test]
    fn matrix_closed_loop_matches_scalar_with_matched_noise() {
        let grid = TimeGrid::with_horizon(1e-4, 1.0).unwrap();
        let incs = wiener_increments(&NoiseSpec::new(21, 5, grid));
        let scalar = integrate_with_increments(
            PI,
            |d: &f64, _, dt, dw| step_scalar_closed_loop(*d, &ROBUST, 0.0, dt, dw),
            &grid,
            &incs,
            1,
        )
        .unwrap();
        let mut rho = state_from_angle(PI).unwrap();
        let mut lifted = PI;
        for (i, &dw) in incs.iter().enumerate() {
            let a = ROBUST.action(lifted);
            rho = step_sme_with(&rho, a.theta_m, a.strength, 0.0, grid.dt, dw, MatrixIntegrator::Geodesic).unwrap();
            lifted += wrap(bloch_angle(&rho).unwrap() - lifted);
            assert!(wrap(lifted - scalar.states[i + 1]).abs() <= 1e-2);
        }
    }

    #[test]
    fn fidelity_path_examples() {
        let rec = |d: f64| PathRecord { path_id: 0, times: vec![0.0, 1.0, 2.0], states: vec![d; 3] };
        assert_eq!(fidelity_path(&rec(0.0)), vec![1.0; 3]);
        assert!(fidelity_path(&rec(PI)).iter().all(|f| f.abs() < 1e-15));
    }

    #[test]
    fn monte_carlo_fidelity_increment_matches_drift() {
        // Mean of [F(delta + d delta) - F(delta)] / dt from pi/2.
        let dt = 1e-3;
        let n = 400_000;
        let delta = FRAC_PI_2;
        let incs = wiener_increments(&NoiseSpec::new(77, 0, TimeGrid::new(dt, n).unwrap()));
        let f = |d: f64| 0.5 * (1.0 + d.cos());
        let rates: Vec<f64> = incs
            .iter()
            .map(|&dw| (f(step_scalar_closed_loop(delta, &ROBUST, 0.0, dt, dw).unwrap()) - f(delta)) / dt)
            .collect();
        let mean = rates.iter().sum::<f64>() / n as f64;
        let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let drift = fidelity_drift(delta, 0.5, 4.0, 0.0).unwrap();
        assert!((mean - drift).abs() <= 4.0 * se, "mean {mean} drift {drift} se {se}");
        assert!(expectation(0.0, &state_from_angle(delta).unwrap()).abs() < 1e-15);
    }
}
