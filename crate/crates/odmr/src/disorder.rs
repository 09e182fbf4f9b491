//! Inhomogeneous parameter distributions and ensemble sampling.
//!
//! Center-to-center variation is modeled with Lorentzian distributions: one
//! each for the zero-field splitting and the two strain components, and a
//! three-component Lorentzian mixture for the longitudinal field, whose
//! component centers are the ¹⁴N hyperfine triplet (±2.3 MHz and 0) and
//! whose common width is the residual field from the P1 spin bath.
//!
//! Sampling is inverse-transform (`center + hwhm·tan(π(u − ½))`) with the
//! heavy Cauchy tails rejected beyond a truncation radius and re-drawn, so
//! the shape near the center is preserved while unphysical outliers (GHz
//! away) never enter an ensemble. Every draw takes its uniforms from a
//! dedicated counter stream keyed by `(seed, center index, parameter)`;
//! see [`crate::rng`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AxisPopulation;
use crate::model::{CenterParams, Damping};
use crate::rng::{CounterStream, StreamTag};
use crate::scalar::Real;

/// Default truncation radius, in multiples of the HWHM.
pub const DEFAULT_TRUNCATION: f64 = 50.0;

/// A truncated Lorentzian (Cauchy) distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzianSpec<T> {
    pub center: T,
    /// Half width at half maximum, ≥ 0. Zero collapses the distribution.
    pub hwhm: T,
    /// Samples beyond `truncation · hwhm` from the center are re-drawn.
    pub truncation: T,
}

impl<T: Real> LorentzianSpec<T> {
    pub fn new(center: T, hwhm: T) -> Self {
        LorentzianSpec {
            center,
            hwhm,
            truncation: T::from_f64_lossy(DEFAULT_TRUNCATION),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.is_finite() || !self.hwhm.is_finite() || !self.truncation.is_finite() {
            return Err(Error::InvalidParam("Lorentzian spec must be finite".into()));
        }
        if self.hwhm < T::zero() {
            return Err(Error::InvalidParam(format!(
                "hwhm must be ≥ 0, got {:?}",
                self.hwhm
            )));
        }
        if self.truncation <= T::one() {
            return Err(Error::InvalidParam(format!(
                "truncation must exceed 1 hwhm, got {:?}",
                self.truncation
            )));
        }
        Ok(())
    }

    /// Draw from the stream, re-drawing anything past the truncation radius.
    ///
    /// Acceptance probability is (2/π)·atan(truncation) ≥ ½ for any valid
    /// truncation, so the loop terminates almost immediately.
    pub fn sample(&self, stream: &mut CounterStream) -> T {
        if self.hwhm == T::zero() {
            return self.center;
        }
        let bound = self.truncation * self.hwhm;
        loop {
            let u = T::from_f64_lossy(stream.next_uniform());
            let value = lorentzian_quantile(self.center, self.hwhm, u);
            if (value - self.center).abs() <= bound {
                return value;
            }
        }
    }
}

#[inline]
fn lorentzian_quantile<T: Real>(center: T, hwhm: T, u: T) -> T {
    if hwhm == T::zero() {
        return center;
    }
    center + hwhm * (T::PI() * (u - T::from_f64_lossy(0.5))).tan()
}

/// Inverse-transform sample of a Lorentzian at quantile `u ∈ (0, 1)`:
/// `center + hwhm·tan(π(u − ½))`. A zero width returns the center exactly.
/// Truncation applies to stream-driven sampling ([`LorentzianSpec::sample`]),
/// where out-of-bound values are re-drawn rather than clamped.
pub fn sample_lorentzian<T: Real>(spec: &LorentzianSpec<T>, u: T) -> Result<T> {
    if !(u > T::zero() && u < T::one()) {
        return Err(Error::InvalidParam(format!(
            "quantile must lie in (0, 1), got {u:?}"
        )));
    }
    Ok(lorentzian_quantile(spec.center, spec.hwhm, u))
}

/// Three-component Lorentzian mixture for the longitudinal field: hyperfine
/// triplet centers at `m·splitting` for `m ∈ {−1, 0, +1}`, common residual
/// width `hwhm`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperfineMixtureSpec<T> {
    /// Per-component Lorentzian HWHM: the residual-field width δ(g μ_B B_z).
    pub hwhm: T,
    /// Triplet spacing, 2.3 MHz for ¹⁴N.
    pub splitting: T,
    /// Component probabilities for m = −1, 0, +1; equal at room temperature.
    pub weights: [T; 3],
    pub truncation: T,
}

impl<T: Real> HyperfineMixtureSpec<T> {
    pub fn new(hwhm: T) -> Self {
        let third = T::one() / T::from_f64_lossy(3.0);
        HyperfineMixtureSpec {
            hwhm,
            splitting: T::from_f64_lossy(2.3),
            weights: [third, third, third],
            truncation: T::from_f64_lossy(DEFAULT_TRUNCATION),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hwhm < T::zero() || !self.hwhm.is_finite() {
            return Err(Error::InvalidParam(format!(
                "mixture hwhm must be ≥ 0, got {:?}",
                self.hwhm
            )));
        }
        if self.splitting < T::zero() || !self.splitting.is_finite() {
            return Err(Error::InvalidParam(format!(
                "hyperfine splitting must be ≥ 0, got {:?}",
                self.splitting
            )));
        }
        let mut total = T::zero();
        for w in self.weights {
            if w < T::zero() || !w.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "mixture weight must be ≥ 0, got {w:?}"
                )));
            }
            total += w;
        }
        if (total - T::one()).abs() > T::from_f64_lossy(1e-12) {
            return Err(Error::InvalidParam(format!(
                "mixture weights must sum to 1, got {total:?}"
            )));
        }
        if self.truncation <= T::one() {
            return Err(Error::InvalidParam(
                "mixture truncation must exceed 1 hwhm".into(),
            ));
        }
        Ok(())
    }

    fn component(&self, m: i8) -> LorentzianSpec<T> {
        LorentzianSpec {
            center: T::from_f64_lossy(m as f64) * self.splitting,
            hwhm: self.hwhm,
            truncation: self.truncation,
        }
    }

    fn pick_component(&self, u: T) -> i8 {
        if u < self.weights[0] {
            -1
        } else if u < self.weights[0] + self.weights[1] {
            0
        } else {
            1
        }
    }

    /// Stream-driven draw returning both the hyperfine component and the
    /// field value.
    pub fn sample_with_component(
        &self,
        component_stream: &mut CounterStream,
        value_stream: &mut CounterStream,
    ) -> (i8, T) {
        let m = self.pick_component(T::from_f64_lossy(component_stream.next_uniform()));
        (m, self.component(m).sample(value_stream))
    }
}

/// Inverse-transform sample of the field mixture: `u_component` picks the
/// hyperfine component by weight, `u_value` is the quantile within that
/// component's Lorentzian.
pub fn sample_hyperfine_field<T: Real>(
    spec: &HyperfineMixtureSpec<T>,
    u_component: T,
    u_value: T,
) -> Result<T> {
    if !(u_component > T::zero() && u_component < T::one()) {
        return Err(Error::InvalidParam(format!(
            "component quantile must lie in (0, 1), got {u_component:?}"
        )));
    }
    let m = spec.pick_component(u_component);
    sample_lorentzian(&spec.component(m), u_value)
}

/// Distribution of the per-center microwave amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriveDist<T> {
    Constant { value: T },
    Uniform { lo: T, hi: T },
}

impl<T: Real> DriveDist<T> {
    pub fn constant(value: T) -> Self {
        DriveDist::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DriveDist::Constant { value } => {
                if value < T::zero() || !value.is_finite() {
                    return Err(Error::InvalidParam(format!(
                        "drive must be ≥ 0, got {value:?}"
                    )));
                }
            }
            DriveDist::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo < T::zero() || hi < lo {
                    return Err(Error::InvalidParam(format!(
                        "uniform drive needs 0 ≤ lo ≤ hi, got [{lo:?}, {hi:?}]"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, stream: &mut CounterStream) -> T {
        match *self {
            DriveDist::Constant { value } => value,
            DriveDist::Uniform { lo, hi } => {
                lo + (hi - lo) * T::from_f64_lossy(stream.next_uniform())
            }
        }
    }
}

/// The full disorder model of an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec<T> {
    pub d_dist: LorentzianSpec<T>,
    pub e1_dist: LorentzianSpec<T>,
    pub e2_dist: LorentzianSpec<T>,
    pub field_dist: HyperfineMixtureSpec<T>,
    pub drive_dist: DriveDist<T>,
}

impl<T: Real> Default for DisorderSpec<T> {
    /// The shipped profile: δD = 0.01, δE₁ = δE₂ = 0.73,
    /// δ(gμ_B B_z) = 1.96 MHz (all HWHM), hyperfine 2.3 MHz, λ = 2 MHz.
    fn default() -> Self {
        DisorderSpec {
            d_dist: LorentzianSpec::new(T::from_f64_lossy(2870.0), T::from_f64_lossy(0.01)),
            e1_dist: LorentzianSpec::new(T::zero(), T::from_f64_lossy(0.73)),
            e2_dist: LorentzianSpec::new(T::zero(), T::from_f64_lossy(0.73)),
            field_dist: HyperfineMixtureSpec::new(T::from_f64_lossy(1.96)),
            drive_dist: DriveDist::constant(T::from_f64_lossy(2.0)),
        }
    }
}

impl<T: Real> DisorderSpec<T> {
    pub fn validate(&self) -> Result<()> {
        self.d_dist.validate()?;
        self.e1_dist.validate()?;
        self.e2_dist.validate()?;
        self.field_dist.validate()?;
        self.drive_dist.validate()
    }
}

/// One sampled center with its sampling labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledCenter<T> {
    pub params: CenterParams<T>,
    /// Index into the axis population's class table.
    pub axis_class: usize,
    /// Hyperfine component the field draw came from: −1, 0 or +1.
    pub hyperfine_m: i8,
}

/// An immutable disorder realization: `n` sampled centers plus the inputs
/// that produced them. Bit-reproducible from `(spec, geometry, damping, n,
/// seed)` regardless of how the sampling was chunked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSample<T> {
    centers: Vec<SampledCenter<T>>,
    seed: u64,
    spec: DisorderSpec<T>,
    geometry: AxisPopulation<T>,
    damping: Damping<T>,
}

impl<T: Real> EnsembleSample<T> {
    pub fn centers(&self) -> &[SampledCenter<T>] {
        &self.centers
    }

    #[cfg(test)]
    pub(crate) fn centers_mut(&mut self) -> &mut [SampledCenter<T>] {
        &mut self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> &DisorderSpec<T> {
        &self.spec
    }

    pub fn geometry(&self) -> &AxisPopulation<T> {
        &self.geometry
    }

    pub fn damping(&self) -> Damping<T> {
        self.damping
    }

    /// The same disorder realization with every center driven at `drive`.
    pub fn with_homogeneous_drive(&self, drive: T) -> Self {
        let mut out = self.clone();
        for center in &mut out.centers {
            center.params.drive = drive;
        }
        out.spec.drive_dist = DriveDist::constant(drive);
        out
    }
}

fn pick_axis_class<T: Real>(geometry: &AxisPopulation<T>, u: T) -> usize {
    let mut acc = T::zero();
    for (i, class) in geometry.classes.iter().enumerate() {
        acc += class.weight;
        if u < acc {
            return i;
        }
    }
    geometry.classes.len() - 1
}

fn draw_center<T: Real>(
    spec: &DisorderSpec<T>,
    geometry: &AxisPopulation<T>,
    damping: Damping<T>,
    seed: u64,
    index: u64,
) -> SampledCenter<T> {
    let axis_u = T::from_f64_lossy(CounterStream::new(seed, index, StreamTag::Axis).next_uniform());
    let axis_class = pick_axis_class(geometry, axis_u);

    let mut component_stream = CounterStream::new(seed, index, StreamTag::HyperfineComponent);
    let mut value_stream = CounterStream::new(seed, index, StreamTag::HyperfineValue);
    let (hyperfine_m, residual_field) = spec
        .field_dist
        .sample_with_component(&mut component_stream, &mut value_stream);

    let d_zfs = spec.d_dist.sample(&mut CounterStream::new(
        seed,
        index,
        StreamTag::ZeroFieldSplitting,
    ));
    let e1 = spec
        .e1_dist
        .sample(&mut CounterStream::new(seed, index, StreamTag::StrainE1));
    let e2 = spec
        .e2_dist
        .sample(&mut CounterStream::new(seed, index, StreamTag::StrainE2));
    let drive = spec
        .drive_dist
        .sample(&mut CounterStream::new(seed, index, StreamTag::Drive));

    SampledCenter {
        params: CenterParams {
            d_zfs,
            e1,
            e2,
            zeeman: geometry.zeeman_for_class(axis_class) + residual_field,
            gamma_b: damping.gamma_b,
            gamma_d: damping.gamma_d,
            drive,
        },
        axis_class,
        hyperfine_m,
    }
}

/// Draw `n` centers. Sampling is index-addressed, so the result is a pure
/// function of the arguments and sampling parallelism cannot change it.
pub fn draw_ensemble<T: Real>(
    spec: &DisorderSpec<T>,
    geometry: &AxisPopulation<T>,
    damping: Damping<T>,
    n: usize,
    seed: u64,
) -> Result<EnsembleSample<T>> {
    spec.validate()?;
    geometry.validate()?;
    damping.validate()?;
    if n == 0 {
        return Err(Error::InvalidParam(
            "ensemble size must be at least 1".into(),
        ));
    }
    let centers: Vec<SampledCenter<T>> = (0..n as u64)
        .into_par_iter()
        .map(|index| draw_center(spec, geometry, damping, seed, index))
        .collect();
    // Sampled D stays positive for any sane spec; a pathological disorder
    // configuration (huge width, low center) is reported, not clamped.
    for (i, c) in centers.iter().enumerate() {
        c.params.validate().map_err(|e| {
            Error::InvalidParam(format!("sampled center {i} violates model invariants: {e}"))
        })?;
    }
    Ok(EnsembleSample {
        centers,
        seed,
        spec: spec.clone(),
        geometry: geometry.clone(),
        damping,
    })
}
