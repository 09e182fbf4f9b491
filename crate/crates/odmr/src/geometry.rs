//! NV axis classes under a [111] magnetic field and Zeeman conversion.
//!
//! The NV axis lies along one of the four ⟨111⟩ crystallographic directions,
//! occupied equally. With the field along [111] one class is fully aligned
//! (|cos θ| = 1) and the other three share |cos θ| = 1/3, so only two
//! distinct Zeeman projections appear. Only the longitudinal projection
//! enters the model; transverse field components are dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Electron g-factor used by default. Configurable where it matters; the
/// 0.2%-level choice shifts peak positions imperceptibly at a few mT.
pub const G_E: f64 = 2.0028;

/// Bohr magneton over Planck constant, in MHz per mT.
pub const MU_B_MHZ_PER_MT: f64 = 13.996245;

/// One crystallographic orientation class: its occupation weight and the
/// magnitude of the field projection onto the NV axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisClass<T> {
    pub weight: T,
    pub projection: T,
}

/// Orientation classes plus the applied field they see.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisPopulation<T> {
    pub classes: Vec<AxisClass<T>>,
    /// Applied field magnitude along [111], in mT.
    pub applied_field_mt: T,
    /// Electron g-factor, defaulted to [`G_E`].
    pub g_e: T,
}

/// The two distinct classes under a [111] field: a quarter of the centers
/// aligned (projection 1), three quarters at |cos θ| = 1/3.
pub fn axis_projections_111<T: Real>() -> Vec<AxisClass<T>> {
    vec![
        AxisClass {
            weight: T::from_f64_lossy(0.25),
            projection: T::one(),
        },
        AxisClass {
            weight: T::from_f64_lossy(0.75),
            projection: T::one() / T::from_f64_lossy(3.0),
        },
    ]
}

impl<T: Real> AxisPopulation<T> {
    /// Standard [111]-field geometry at the given applied field.
    pub fn field_111(applied_field_mt: T) -> Self {
        AxisPopulation {
            classes: axis_projections_111(),
            applied_field_mt,
            g_e: T::from_f64_lossy(G_E),
        }
    }

    pub fn with_g_e(mut self, g_e: T) -> Self {
        self.g_e = g_e;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidParam(
                "axis population needs at least one class".into(),
            ));
        }
        let mut total = T::zero();
        for class in &self.classes {
            if class.weight < T::zero() || !class.weight.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "axis class weight must be non-negative, got {:?}",
                    class.weight
                )));
            }
            if class.projection < T::zero() || class.projection > T::one() {
                return Err(Error::InvalidParam(format!(
                    "axis projection must lie in [0, 1], got {:?}",
                    class.projection
                )));
            }
            total += class.weight;
        }
        if (total - T::one()).abs() > T::from_f64_lossy(1e-9) {
            return Err(Error::InvalidParam(format!(
                "axis class weights must sum to 1, got {total:?}"
            )));
        }
        if !self.applied_field_mt.is_finite() {
            return Err(Error::InvalidParam("applied field must be finite".into()));
        }
        if self.g_e <= T::zero() || !self.g_e.is_finite() {
            return Err(Error::InvalidParam(format!(
                "g factor must be positive, got {:?}",
                self.g_e
            )));
        }
        Ok(())
    }

    /// Zeeman frequency of the applied field as seen by class `index`.
    pub fn zeeman_for_class(&self, index: usize) -> T {
        zeeman_frequency_with_g(
            self.g_e,
            self.applied_field_mt,
            self.classes[index].projection,
        )
    }
}

/// Zeeman frequency `g_e (μ_B/h) B·projection` in MHz, with the default
/// g-factor.
pub fn zeeman_frequency<T: Real>(field_mt: T, projection: T) -> T {
    zeeman_frequency_with_g(T::from_f64_lossy(G_E), field_mt, projection)
}

/// Zeeman frequency with an explicit g-factor.
pub fn zeeman_frequency_with_g<T: Real>(g_e: T, field_mt: T, projection: T) -> T {
    g_e * T::from_f64_lossy(MU_B_MHZ_PER_MT) * field_mt * projection
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn classes_under_111_field() {
        let classes = axis_projections_111::<f64>();
        assert_eq!(classes.len(), 2);
        assert!(classes
            .iter()
            .any(|c| c.weight == 0.25 && c.projection == 1.0));
        assert!(classes
            .iter()
            .any(|c| c.weight == 0.75 && (c.projection - 1.0 / 3.0).abs() < 1e-15));
        let total: f64 = classes.iter().map(|c| c.weight).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
        assert!(AxisPopulation::<f64>::field_111(2.0).validate().is_ok());
    }

    #[test]
    fn zeeman_frequency_cases() {
        assert_eq!(zeeman_frequency(0.0f64, 1.0), 0.0);
        // 2 mT aligned: 2.0028 × 13.996245 × 2 ≈ 56.06 MHz.
        assert_abs_diff_eq!(zeeman_frequency(2.0f64, 1.0), 56.06, epsilon = 0.01);
        // 1 mT misaligned: a third of the aligned value 28.03.
        assert_abs_diff_eq!(zeeman_frequency(1.0f64, 1.0 / 3.0), 9.343, epsilon = 0.001);
        assert_relative_eq!(
            zeeman_frequency(1.0f64, 1.0 / 3.0),
            zeeman_frequency(1.0f64, 1.0) / 3.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn zeeman_is_linear_in_field() {
        for alpha in [0.25f64, 0.5, 2.0, 8.0] {
            assert_relative_eq!(
                zeeman_frequency(alpha * 1.3, 0.7),
                alpha * zeeman_frequency(1.3, 0.7),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn class_splittings_at_two_mt() {
        // aligned centers straddle the splitting center by ±56.06 MHz,
        // misaligned by ±18.69 MHz, before strain corrections
        let pop = AxisPopulation::<f64>::field_111(2.0);
        assert_abs_diff_eq!(pop.zeeman_for_class(0), 56.06, epsilon = 0.01);
        assert_abs_diff_eq!(pop.zeeman_for_class(1), 18.69, epsilon = 0.01);
    }

    #[test]
    fn validation_rejects_bad_populations() {
        let mut pop = AxisPopulation::<f64>::field_111(1.0);
        pop.classes[0].weight = 0.5;
        assert!(pop.validate().is_err());
        let mut pop = AxisPopulation::<f64>::field_111(1.0);
        pop.classes[1].projection = 1.5;
        assert!(pop.validate().is_err());
        let pop = AxisPopulation::<f64>::field_111(1.0).with_g_e(-1.0);
        assert!(pop.validate().is_err());
    }
}
