//! Closed-form steady-state response of a single NV⁻ center in the reduced
//! bright/dark two-mode picture.
//!
//! Near zero field the |±1⟩ levels hybridize into a bright mode at
//! `ω_b = D − E₁` (driven by the microwave) and a dark mode at
//! `ω_d = D + E₁`, coupled by the longitudinal Zeeman frequency `J` and the
//! second strain component `J′ = E₂`. In the weak-excitation (bosonic)
//! limit the driven, damped pair is linear, so its steady state under a
//! probe at frequency `ω` is closed-form:
//!
//! ```text
//! n_bright = |λ (ω − ω_d + iΓ_d)|² / |Q|²
//! n_dark   = |λ (J − iJ′)|²        / |Q|²
//! Q        = (ω − ω_b + iΓ_b)(ω − ω_d + iΓ_d) − (J² + J′²)
//! ```
//!
//! Populations are mode occupations, not probabilities; the harmonic
//! approximation has no saturation, so they may exceed 1 and the linear
//! signal model absorbs the overall scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Effective parameters of one center. All entries are ordinary frequencies
/// in MHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterParams<T> {
    /// Zero-field splitting `D` (nominal 2870 MHz).
    pub d_zfs: T,
    /// Strain component `E₁`; shifts the bright/dark frequencies apart.
    pub e1: T,
    /// Strain component `E₂`; couples the bright and dark modes.
    pub e2: T,
    /// Total longitudinal Zeeman frequency `J = g_e μ_B B_z / h`, including
    /// the axis projection of the applied field, the hyperfine offset and
    /// the random residual field.
    pub zeeman: T,
    /// Homogeneous half-width of the bright mode, `Γ_b > 0`.
    pub gamma_b: T,
    /// Homogeneous half-width of the dark mode, `Γ_d > 0`.
    pub gamma_d: T,
    /// Microwave drive amplitude `λ ≥ 0`.
    pub drive: T,
}

impl<T: Real> CenterParams<T> {
    /// Checks the model invariants: positive damping and zero-field
    /// splitting, non-negative drive, everything finite.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d_zfs", self.d_zfs),
            ("e1", self.e1),
            ("e2", self.e2),
            ("zeeman", self.zeeman),
            ("gamma_b", self.gamma_b),
            ("gamma_d", self.gamma_d),
            ("drive", self.drive),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "{name} must be finite, got {v:?}"
                )));
            }
        }
        if self.gamma_b <= T::zero() || self.gamma_d <= T::zero() {
            return Err(Error::InvalidParam(format!(
                "damping rates must be positive (gamma_b = {:?}, gamma_d = {:?})",
                self.gamma_b, self.gamma_d
            )));
        }
        if self.d_zfs <= T::zero() {
            return Err(Error::InvalidParam(format!(
                "zero-field splitting must be positive, got {:?}",
                self.d_zfs
            )));
        }
        if self.drive < T::zero() {
            return Err(Error::InvalidParam(format!(
                "drive amplitude must be non-negative, got {:?}",
                self.drive
            )));
        }
        Ok(())
    }
}

/// Steady-state occupations of the two modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationPair<T> {
    pub n_bright: T,
    pub n_dark: T,
}

impl<T: Real> PopulationPair<T> {
    pub fn total(&self) -> T {
        self.n_bright + self.n_dark
    }
}

/// Homogeneous damping rates shared by every center of an ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Damping<T> {
    pub gamma_b: T,
    pub gamma_d: T,
}

impl<T: Real> Damping<T> {
    /// Equal bright and dark widths, the usual assumption.
    pub fn symmetric(gamma: T) -> Self {
        Damping {
            gamma_b: gamma,
            gamma_d: gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_b > T::zero() && self.gamma_d > T::zero())
            || !self.gamma_b.is_finite()
            || !self.gamma_d.is_finite()
        {
            return Err(Error::InvalidParam(format!(
                "damping rates must be positive and finite (gamma_b = {:?}, gamma_d = {:?})",
                self.gamma_b, self.gamma_d
            )));
        }
        Ok(())
    }
}

/// Bright and dark mode frequencies `(D − E₁, D + E₁)`.
pub fn bright_dark_frequencies<T: Real>(c: &CenterParams<T>) -> (T, T) {
    (c.d_zfs - c.e1, c.d_zfs + c.e1)
}

/// Steady-state populations without the damping check; callers must have
/// validated the center. Shared by the public operation and the ensemble
/// hot loop.
#[inline]
pub(crate) fn populations_raw<T: Real>(c: &CenterParams<T>, probe: T) -> (T, T) {
    let (omega_b, omega_d) = bright_dark_frequencies(c);
    let det_b = probe - omega_b;
    let det_d = probe - omega_d;
    let coupling_sq = c.zeeman * c.zeeman + c.e2 * c.e2;
    // Q = (det_b + iΓ_b)(det_d + iΓ_d) − (J² + J′²)
    let q_re = det_b * det_d - c.gamma_b * c.gamma_d - coupling_sq;
    let q_im = det_b * c.gamma_d + det_d * c.gamma_b;
    let q_norm_sq = q_re * q_re + q_im * q_im;
    let drive_sq = c.drive * c.drive;
    let n_bright = drive_sq * (det_d * det_d + c.gamma_d * c.gamma_d) / q_norm_sq;
    let n_dark = drive_sq * coupling_sq / q_norm_sq;
    (n_bright, n_dark)
}

/// Steady-state occupations of the bright and dark modes under a probe at
/// `probe` MHz.
///
/// Rejects non-positive damping: without damping the driven steady state is
/// undefined (the denominator can vanish for real probe frequencies).
pub fn steady_state_populations<T: Real>(
    c: &CenterParams<T>,
    probe: T,
) -> Result<PopulationPair<T>> {
    if !(c.gamma_b > T::zero() && c.gamma_d > T::zero()) {
        return Err(Error::InvalidParam(format!(
            "steady state requires positive damping (gamma_b = {:?}, gamma_d = {:?})",
            c.gamma_b, c.gamma_d
        )));
    }
    let (n_bright, n_dark) = populations_raw(c, probe);
    Ok(PopulationPair { n_bright, n_dark })
}

/// Probability-like excitation of one center: `n_bright + n_dark`.
pub fn excitation_probability<T: Real>(c: &CenterParams<T>, probe: T) -> Result<T> {
    steady_state_populations(c, probe).map(|p| p.total())
}

/// Frequency difference between the two excited eigenstates,
/// `δω = 2 √(J² + E₁² + E₂²)`; equals the eigenvalue gap of the coupled
/// 2×2 bright/dark block.
pub fn peak_splitting<T: Real>(c: &CenterParams<T>) -> T {
    let two = T::from_f64_lossy(2.0);
    two * (c.zeeman * c.zeeman + c.e1 * c.e1 + c.e2 * c.e2).sqrt()
}

/// Eigenfrequencies of the coupled block: `(D − δω/2, D + δω/2)`.
pub fn transition_frequencies<T: Real>(c: &CenterParams<T>) -> (T, T) {
    let half = peak_splitting(c) / T::from_f64_lossy(2.0);
    (c.d_zfs - half, c.d_zfs + half)
}
