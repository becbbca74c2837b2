//! Adaptive measurement laws mapping the (nominal) Bloch angle to the axis and
//! strength of the next measurement.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::qubit::{fold, wrap, TuningParams};

/// Axis and strength of the measurement applied over one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementAction {
    pub theta_m: f64,
    pub strength: f64,
}

/// The feedback law in use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SchemeConfig {
    /// Axis perpendicular to the state, strength `kappa * fold(delta)^2`.
    Jacobs { kappa: f64 },
    /// Axis at `alpha * delta`, constant strength `k`.
    Robust { k: f64, alpha: f64 },
    /// Perpendicular axis with constant strength; a comparison fixture.
    JacobsConstant { k: f64 },
}

impl SchemeConfig {
    pub fn jacobs(kappa: f64) -> Result<Self> {
        let s = SchemeConfig::Jacobs { kappa };
        s.validate().map(|_| s)
    }

    pub fn robust(k: f64, alpha: f64) -> Result<Self> {
        let s = SchemeConfig::Robust { k, alpha };
        s.validate().map(|_| s)
    }

    pub fn jacobs_constant(k: f64) -> Result<Self> {
        let s = SchemeConfig::JacobsConstant { k };
        s.validate().map(|_| s)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be a positive finite number, got {v}")))
            }
        };
        match *self {
            SchemeConfig::Jacobs { kappa } => positive("kappa", kappa),
            SchemeConfig::Robust { k, alpha } => {
                positive("k", k)?;
                if (0.0..=1.0).contains(&alpha) {
                    Ok(())
                } else {
                    Err(Error::config("alpha", format!("must lie in [0, 1], got {alpha}")))
                }
            }
            SchemeConfig::JacobsConstant { k } => positive("k", k),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchemeConfig::Jacobs { .. } => "jacobs",
            SchemeConfig::Robust { .. } => "robust",
            SchemeConfig::JacobsConstant { .. } => "jacobs_constant",
        }
    }

    /// Policy output for an already validated scheme.
    #[inline]
    pub fn action(&self, delta_nominal: f64) -> MeasurementAction {
        match *self {
            SchemeConfig::Jacobs { kappa } => {
                let f = fold(delta_nominal);
                MeasurementAction { theta_m: delta_nominal + FRAC_PI_2, strength: kappa * f * f }
            }
            SchemeConfig::Robust { k, alpha } => MeasurementAction { theta_m: alpha * delta_nominal, strength: k },
            SchemeConfig::JacobsConstant { k } => MeasurementAction { theta_m: delta_nominal + FRAC_PI_2, strength: k },
        }
    }

    /// `(d theta_m / d delta, sqrt(8 k), d sqrt(8 k) / d delta)` at `delta`;
    /// used by the Milstein correction of the closed loop.
    #[inline]
    pub(crate) fn sensitivities(&self, delta: f64) -> (f64, f64, f64) {
        match *self {
            SchemeConfig::Jacobs { kappa } => {
                let w = wrap(delta);
                let root = (8.0 * kappa).sqrt();
                (1.0, root * w.abs(), root * w.signum())
            }
            SchemeConfig::Robust { k, alpha } => (alpha, (8.0 * k).sqrt(), 0.0),
            SchemeConfig::JacobsConstant { k } => (1.0, (8.0 * k).sqrt(), 0.0),
        }
    }
}

/// Jacobs' law: `sigma_x cos(delta) - sigma_z sin(delta)`, i.e. the axis
/// `theta_m = delta + pi/2`, with strength `kappa * fold(delta)^2`.
pub fn jacobs_policy(delta_nominal: f64, kappa: f64) -> Result<MeasurementAction> {
    ensure_finite("delta_nominal", delta_nominal)?;
    Ok(SchemeConfig::jacobs(kappa)?.action(delta_nominal))
}

/// Robust law: axis `alpha * delta` between the state and the target,
/// constant strength `k`.
pub fn robust_policy(delta_nominal: f64, k: f64, alpha: f64) -> Result<MeasurementAction> {
    ensure_finite("delta_nominal", delta_nominal)?;
    Ok(SchemeConfig::robust(k, alpha)?.action(delta_nominal))
}

/// Deterministic rate of change of the target fidelity `<0|rho|0>` under the
/// robust law: `-Delta sin(delta) + k [cos(2 alpha delta - delta) - cos(delta)]`.
pub fn fidelity_drift(delta: f64, alpha: f64, k: f64, detuning: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::argument("k", format!("must be positive, got {k}")));
    }
    let alpha = TuningParams::new(alpha)?.alpha();
    Ok(-detuning * delta.sin() + k * ((2.0 * alpha * delta - delta).cos() - delta.cos()))
}

/// The axis-division parameter maximizing [`fidelity_drift`] at every `delta`
/// in `(0, pi)`: the axis bisects the state and the target.
pub fn optimal_alpha() -> f64 {
    0.5
}
