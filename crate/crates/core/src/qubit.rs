//! Two-level algebra restricted to what the measurement schemes need:
//! 2x2 complex matrices, Pauli operators, and pure states on the x-z great
//! circle of the Bloch sphere.
//!
//! A pure state is parameterized by its Bloch angle `delta`,
//! `|psi> = cos(delta/2)|0> + sin(delta/2)|1>`, so `delta = 0` is the target
//! `|0>` and `delta = pi` is `|1>`. Observables in the same plane are
//! `sigma(theta) = sin(theta) sigma_x + cos(theta) sigma_z`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Tolerance on `|<sigma_y>|` and `1 - purity` accepted by [`bloch_angle`].
pub const PLANE_TOLERANCE: f64 = 1e-6;

/// Dense 2x2 complex matrix, entries stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix2(pub [Complex64; 4]);

impl Matrix2 {
    pub const fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Matrix2([a, b, c, d])
    }

    pub const fn real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Matrix2([Complex64::new(a, 0.0), Complex64::new(b, 0.0), Complex64::new(c, 0.0), Complex64::new(d, 0.0)])
    }

    pub const fn identity() -> Self {
        Matrix2([ONE, ZERO, ZERO, ONE])
    }

    pub const fn zero() -> Self {
        Matrix2([ZERO; 4])
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[2 * row + col]
    }

    #[inline]
    pub fn trace(&self) -> Complex64 {
        self.0[0] + self.0[3]
    }

    #[inline]
    pub fn adjoint(&self) -> Self {
        let [a, b, c, d] = self.0;
        Matrix2([a.conj(), c.conj(), b.conj(), d.conj()])
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Self {
        let [a, b, c, d] = self.0;
        Matrix2([a * s, b * s, c * s, d * s])
    }

    #[inline]
    pub fn scale_c(&self, s: Complex64) -> Self {
        let [a, b, c, d] = self.0;
        Matrix2([a * s, b * s, c * s, d * s])
    }

    pub fn commutator(&self, other: &Matrix2) -> Matrix2 {
        *self * *other - *other * *self
    }

    pub fn anticommutator(&self, other: &Matrix2) -> Matrix2 {
        *self * *other + *other * *self
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn hermitian_part(&self) -> Matrix2 {
        (*self + self.adjoint()).scale(0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Eigenvalues `(min, max)` of the Hermitian part.
    pub fn hermitian_eigenvalues(&self) -> (f64, f64) {
        let h = self.hermitian_part();
        let a = h.0[0].re;
        let d = h.0[3].re;
        let mid = 0.5 * (a + d);
        let half_gap = (0.25 * (a - d) * (a - d) + h.0[1].norm_sqr()).sqrt();
        (mid - half_gap, mid + half_gap)
    }

    /// `Tr(self * other)` without forming the product.
    #[inline]
    pub fn trace_product(&self, other: &Matrix2) -> Complex64 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = other.0;
        a * e + b * g + c * f + d * h
    }
}

impl Add for Matrix2 {
    type Output = Matrix2;
    #[inline]
    fn add(self, rhs: Matrix2) -> Matrix2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = rhs.0;
        Matrix2([a + e, b + f, c + g, d + h])
    }
}

impl Sub for Matrix2 {
    type Output = Matrix2;
    #[inline]
    fn sub(self, rhs: Matrix2) -> Matrix2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = rhs.0;
        Matrix2([a - e, b - f, c - g, d - h])
    }
}

impl Neg for Matrix2 {
    type Output = Matrix2;
    fn neg(self) -> Matrix2 {
        self.scale(-1.0)
    }
}

impl Mul for Matrix2 {
    type Output = Matrix2;
    #[inline]
    fn mul(self, rhs: Matrix2) -> Matrix2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = rhs.0;
        Matrix2([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }
}

pub fn sigma_x() -> Matrix2 {
    Matrix2::real(0.0, 1.0, 1.0, 0.0)
}

pub fn sigma_y() -> Matrix2 {
    Matrix2::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Matrix2 {
    Matrix2::real(1.0, 0.0, 0.0, -1.0)
}

/// Folded distance to the target: `|((delta + pi) mod 2pi) - pi|`, in `[0, pi]`.
#[inline]
pub fn fold(delta: f64) -> f64 {
    ((delta + PI).rem_euclid(2.0 * PI) - PI).abs()
}

/// Wraps an angle difference into `[-pi, pi)`.
#[inline]
pub fn wrap(angle: f64) -> f64 {
    (angle + PI).rem_euclid(2.0 * PI) - PI
}

/// Bloch angle of a pure state on the x-z great circle. Unconstrained on the
/// real line; only [`BlochAngle::fold`] maps it to a distance.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlochAngle(f64);

impl BlochAngle {
    pub fn new(delta: f64) -> Result<Self> {
        ensure_finite("delta", delta).map(BlochAngle)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn fold(self) -> f64 {
        fold(self.0)
    }
}

/// Measured observable `sigma(theta)`; `theta` is its Bloch direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementAxis {
    pub theta: f64,
}

impl MeasurementAxis {
    pub fn new(theta: f64) -> Result<Self> {
        ensure_finite("theta", theta).map(|theta| MeasurementAxis { theta })
    }

    pub fn observable(&self) -> Matrix2 {
        observable_unchecked(self.theta)
    }

    /// Eigenvectors `(|+>, |->)` with eigenvalues `+1` and `-1`.
    pub fn eigenstates(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = (0.5 * self.theta).sin_cos();
        ([c, s], [s, -c])
    }
}

/// Axis-division parameter. `beta` is always derived as `1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningParams {
    alpha: f64,
}

impl TuningParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(TuningParams { alpha })
        } else {
            Err(Error::argument("alpha", format!("must lie in [0, 1], got {alpha}")))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        1.0 - self.alpha
    }
}

/// Density matrix of a qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitDensity(Matrix2);

impl QubitDensity {
    /// Wraps a matrix after checking Hermiticity, unit trace and positivity.
    pub fn new(rho: Matrix2) -> Result<Self> {
        if !rho.is_finite() {
            return Err(Error::NonFinite);
        }
        let skew = (rho - rho.adjoint()).max_abs();
        if skew > 1e-12 {
            return Err(Error::Domain { quantity: "anti-Hermitian part", value: skew });
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::Domain { quantity: "trace - 1", value: tr.re - 1.0 });
        }
        let (lo, _) = rho.hermitian_eigenvalues();
        if lo < -1e-9 {
            return Err(Error::Positivity { min_eigenvalue: lo });
        }
        Ok(QubitDensity(rho))
    }

    /// Wraps without validation; callers guarantee the invariants.
    pub(crate) fn from_matrix_unchecked(rho: Matrix2) -> Self {
        QubitDensity(rho)
    }

    pub fn maximally_mixed() -> Self {
        QubitDensity(Matrix2::identity().scale(0.5))
    }

    pub fn matrix(&self) -> &Matrix2 {
        &self.0
    }

    /// Bloch vector `(Tr(sigma_x rho), Tr(sigma_y rho), Tr(sigma_z rho))`.
    pub fn bloch_vector(&self) -> [f64; 3] {
        let m = &self.0 .0;
        let x = 2.0 * m[1].re;
        let y = -2.0 * m[1].im;
        let z = (m[0] - m[3]).re;
        [x, y, z]
    }

    pub fn purity(&self) -> f64 {
        self.0.trace_product(&self.0).re
    }

    /// Angle `atan2(<sigma_x>, <sigma_z>)` with no plane or purity check.
    #[inline]
    pub(crate) fn raw_angle(&self) -> f64 {
        let m = &self.0 .0;
        (2.0 * m[1].re).atan2((m[0] - m[3]).re)
    }
}

pub fn axis_observable(theta: f64) -> Result<Matrix2> {
    Ok(MeasurementAxis::new(theta)?.observable())
}

#[inline]
pub(crate) fn observable_unchecked(theta: f64) -> Matrix2 {
    let (s, c) = theta.sin_cos();
    Matrix2::real(c, s, s, -c)
}

/// `|psi><psi|` for `|psi> = cos(delta/2)|0> + sin(delta/2)|1>`.
pub fn state_from_angle(delta: f64) -> Result<QubitDensity> {
    ensure_finite("delta", delta)?;
    Ok(pure_state_unchecked(delta))
}

#[inline]
pub(crate) fn pure_state_unchecked(delta: f64) -> QubitDensity {
    let (s, c) = (0.5 * delta).sin_cos();
    QubitDensity(Matrix2::real(c * c, c * s, c * s, s * s))
}

/// Inverse of [`state_from_angle`] on pure x-z states, in `(-pi, pi]`.
pub fn bloch_angle(rho: &QubitDensity) -> Result<f64> {
    let [x, y, z] = rho.bloch_vector();
    if y.abs() > PLANE_TOLERANCE {
        return Err(Error::Domain { quantity: "Tr(sigma_y rho)", value: y });
    }
    let purity = rho.purity();
    if purity < 1.0 - PLANE_TOLERANCE {
        return Err(Error::Domain { quantity: "purity", value: purity });
    }
    let angle = x.atan2(z);
    // atan2 returns -pi for (x = -0.0, z < 0); keep the documented range.
    Ok(if angle <= -PI { PI } else { angle })
}

/// `Tr(sigma(theta) rho)`.
#[inline]
pub fn expectation(theta: f64, rho: &QubitDensity) -> f64 {
    let [x, _, z] = rho.bloch_vector();
    let (s, c) = theta.sin_cos();
    s * x + c * z
}

/// Probabilities of jumping to the `+1` and `-1` eigenstates of the robust
/// axis `sigma(alpha delta)` from the pure state at angle `delta`.
pub fn transition_probs(delta: f64, alpha: f64) -> Result<(f64, f64)> {
    ensure_finite("delta", delta)?;
    let tuning = TuningParams::new(alpha)?;
    let (plus, minus) = MeasurementAxis { theta: tuning.alpha() * delta }.eigenstates();
    let (s, c) = (0.5 * delta).sin_cos();
    let p_plus = (plus[0] * c + plus[1] * s).powi(2);
    let p_minus = (minus[0] * c + minus[1] * s).powi(2);
    Ok((p_plus, p_minus))
}

/// Fidelity `<0|rho|0>` with the target state.
pub fn fidelity_target(rho: &QubitDensity) -> f64 {
    rho.matrix().get(0, 0).re
}
