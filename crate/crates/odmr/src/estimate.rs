//! Least-squares fitting of measured ODMR signals and the staged
//! three-parameter estimation procedure.
//!
//! The objective simulates the signal with the candidate parameters and a
//! fixed ensemble seed (common random numbers), so the optimizer sees a
//! deterministic surface rather than Monte Carlo roughness. All datasets in
//! one fit share that seed: they describe the same physical ensemble
//! measured at different applied fields, so the disorder draws are the same
//! and only the Zeeman projections differ.
//!
//! The staged procedure exploits which feature is sensitive to what:
//! 1. the with-field spectrum pins the field width δB (plus amplitude,
//!    drive and the splitting center) with the strain width frozen, since
//!    under a field the peak widths barely feel the strain;
//! 2. the zero-field dip window pins the homogeneous width Γ, which
//!    controls how far the dip fills in;
//! 3. the full zero-field spectrum then pins the strain width δE with
//!    everything else frozen.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::disorder::{
    draw_ensemble, DisorderSpec, DriveDist, HyperfineMixtureSpec, LorentzianSpec,
};
use crate::error::{Error, Result};
use crate::geometry::{AxisPopulation, G_E};
use crate::model::Damping;
use crate::spectrum::{excitation_at_frequencies, parse_field};

/// A measured (or synthetic) signal spectrum: strictly increasing
/// frequencies, at least ten points, optional per-point weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredSpectrum {
    pub points: Vec<(f64, f64)>,
    pub weights: Option<Vec<f64>>,
    pub applied_field_mt: f64,
    pub label: String,
}

impl MeasuredSpectrum {
    pub fn new(
        points: Vec<(f64, f64)>,
        applied_field_mt: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        let spectrum = MeasuredSpectrum {
            points,
            weights: None,
            applied_field_mt,
            label: label.into(),
        };
        spectrum.validate()?;
        Ok(spectrum)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 10 {
            return Err(Error::Data(format!(
                "{}: need at least 10 data points, got {}",
                self.label,
                self.points.len()
            )));
        }
        for (i, &(f, v)) in self.points.iter().enumerate() {
            if !f.is_finite() || !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: point {i} is not finite",
                    self.label
                )));
            }
            if i > 0 && f <= self.points[i - 1].0 {
                return Err(Error::Data(format!(
                    "{}: frequencies must be strictly increasing at point {i}",
                    self.label
                )));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.points.len() {
                return Err(Error::Data(format!(
                    "{}: weight count mismatch",
                    self.label
                )));
            }
            if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(Error::Data(format!(
                    "{}: weights must be non-negative",
                    self.label
                )));
            }
        }
        if !self.applied_field_mt.is_finite() || self.applied_field_mt < 0.0 {
            return Err(Error::Data(format!(
                "{}: applied field must be ≥ 0 mT",
                self.label
            )));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.points.iter().map(|&(f, _)| f).collect()
    }

    /// Read `frequency_mhz,signal[,weight]` CSV with row-level diagnostics.
    pub fn from_csv<R: BufRead>(
        reader: R,
        applied_field_mt: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        let label = label.into();
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, Ok(line))) => line,
            Some((_, Err(e))) => return Err(Error::Data(format!("{label}: read error: {e}"))),
            None => return Err(Error::Data(format!("{label}: empty file"))),
        };
        let has_weights = match header.trim_end() {
            "frequency_mhz,signal" => false,
            "frequency_mhz,signal,weight" => true,
            other => {
                return Err(Error::Data(format!(
                    "{label}: unrecognized header {other:?}; expected frequency_mhz,signal[,weight]"
                )))
            }
        };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (idx, line) in lines {
            let row = idx + 1;
            let line = line.map_err(|e| Error::Data(format!("{label}: row {row}: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.trim_end().split(',');
            let freq = parse_field(fields.next(), row, "frequency_mhz")?;
            let signal = parse_field(fields.next(), row, "signal")?;
            if has_weights {
                weights.push(parse_field(fields.next(), row, "weight")?);
            }
            if fields.next().is_some() {
                return Err(Error::Data(format!("{label}: row {row}: too many columns")));
            }
            points.push((freq, signal));
        }
        let spectrum = MeasuredSpectrum {
            points,
            weights: has_weights.then_some(weights),
            applied_field_mt,
            label,
        };
        spectrum.validate()?;
        Ok(spectrum)
    }

    /// The sub-spectrum within `[lo, hi]`, keeping weights aligned.
    fn window(&self, lo: f64, hi: f64) -> MeasuredSpectrum {
        let keep: Vec<usize> = (0..self.points.len())
            .filter(|&i| self.points[i].0 >= lo && self.points[i].0 <= hi)
            .collect();
        MeasuredSpectrum {
            points: keep.iter().map(|&i| self.points[i]).collect(),
            weights: self
                .weights
                .as_ref()
                .map(|w| keep.iter().map(|&i| w[i]).collect()),
            applied_field_mt: self.applied_field_mt,
            label: format!("{} [{lo:.1}–{hi:.1} MHz]", self.label),
        }
    }
}

/// Which fit parameters are frozen at their current values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedMask {
    pub gamma: bool,
    pub delta_b: bool,
    pub delta_e: bool,
    pub a_over_i0: bool,
    pub d_zfs: bool,
    pub drive: bool,
}

impl FixedMask {
    pub fn all() -> Self {
        FixedMask {
            gamma: true,
            delta_b: true,
            delta_e: true,
            a_over_i0: true,
            d_zfs: true,
            drive: true,
        }
    }
}

/// The fit parameter vector: the three target widths plus nuisance
/// parameters (signal contrast, splitting center, drive amplitude).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    /// Homogeneous half-width Γ, MHz (bright and dark tied together).
    #[serde(rename = "gamma_mhz")]
    pub gamma: f64,
    /// Residual-field HWHM δ(gμ_B B_z), MHz.
    #[serde(rename = "delta_b_mhz")]
    pub delta_b: f64,
    /// Strain HWHM δE, MHz, shared by both strain components.
    #[serde(rename = "delta_e_mhz")]
    pub delta_e: f64,
    /// Signal contrast a/I₀.
    pub a_over_i0: f64,
    /// Center of the zero-field-splitting distribution, MHz.
    #[serde(rename = "d_zfs_mhz")]
    pub d_zfs: f64,
    /// Microwave amplitude λ, MHz. Degenerate with `a_over_i0` (only
    /// a_over_i0·λ² is identifiable); harmless as a nuisance direction.
    #[serde(rename = "drive_mhz")]
    pub drive: f64,
    pub fixed: FixedMask,
}

impl FitParams {
    fn in_bounds(&self) -> bool {
        self.gamma > 1e-6
            && self.delta_b >= 0.0
            && self.delta_e >= 0.0
            && self.a_over_i0 >= 0.0
            && self.d_zfs > 0.0
            && self.drive >= 0.0
            && [
                self.gamma,
                self.delta_b,
                self.delta_e,
                self.a_over_i0,
                self.d_zfs,
                self.drive,
            ]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Names of the packable fit fields, in pack order.
const FIT_FIELDS: [&str; 6] = ["gamma", "delta_b", "delta_e", "a_over_i0", "d_zfs", "drive"];

fn field_value(p: &FitParams, idx: usize) -> f64 {
    match idx {
        0 => p.gamma,
        1 => p.delta_b,
        2 => p.delta_e,
        3 => p.a_over_i0,
        4 => p.d_zfs,
        _ => p.drive,
    }
}

fn set_field(p: &mut FitParams, idx: usize, value: f64) {
    match idx {
        0 => p.gamma = value,
        1 => p.delta_b = value,
        2 => p.delta_e = value,
        3 => p.a_over_i0 = value,
        4 => p.d_zfs = value,
        _ => p.drive = value,
    }
}

fn field_fixed(mask: &FixedMask, idx: usize) -> bool {
    match idx {
        0 => mask.gamma,
        1 => mask.delta_b,
        2 => mask.delta_e,
        3 => mask.a_over_i0,
        4 => mask.d_zfs,
        _ => mask.drive,
    }
}

/// Simulation context shared by every objective evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// HWHM of the zero-field-splitting disorder (not fitted; two orders of
    /// magnitude below the strain widths).
    pub d_hwhm: f64,
    pub hyperfine_splitting: f64,
    pub hyperfine_weights: [f64; 3],
    pub truncation: f64,
    pub g_e: f64,
    /// Ensemble size per objective evaluation.
    pub ensemble_n: usize,
    /// Common-random-numbers seed shared by all evaluations and datasets.
    pub seed: u64,
    pub simplex: SimplexOptions,
    /// Half-width of the dip window around the fitted splitting center used
    /// in stage 2.
    pub dip_window_mhz: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let third = 1.0 / 3.0;
        FitConfig {
            d_hwhm: 0.01,
            hyperfine_splitting: 2.3,
            hyperfine_weights: [third, third, third],
            truncation: crate::disorder::DEFAULT_TRUNCATION,
            g_e: G_E,
            ensemble_n: 20_000,
            seed: 20_260_809,
            simplex: SimplexOptions::default(),
            dip_window_mhz: 3.0,
        }
    }
}

/// Simulated signal at the given frequencies for one applied field.
pub fn model_signal(
    p: &FitParams,
    applied_field_mt: f64,
    frequencies: &[f64],
    cfg: &FitConfig,
) -> Result<Vec<f64>> {
    let spec = DisorderSpec {
        d_dist: LorentzianSpec {
            center: p.d_zfs,
            hwhm: cfg.d_hwhm,
            truncation: cfg.truncation,
        },
        e1_dist: LorentzianSpec {
            center: 0.0,
            hwhm: p.delta_e,
            truncation: cfg.truncation,
        },
        e2_dist: LorentzianSpec {
            center: 0.0,
            hwhm: p.delta_e,
            truncation: cfg.truncation,
        },
        field_dist: HyperfineMixtureSpec {
            hwhm: p.delta_b,
            splitting: cfg.hyperfine_splitting,
            weights: cfg.hyperfine_weights,
            truncation: cfg.truncation,
        },
        drive_dist: DriveDist::constant(p.drive),
    };
    let geometry = AxisPopulation::field_111(applied_field_mt).with_g_e(cfg.g_e);
    let ensemble = draw_ensemble(
        &spec,
        &geometry,
        Damping::symmetric(p.gamma),
        cfg.ensemble_n,
        cfg.seed,
    )?;
    let excitation = excitation_at_frequencies(&ensemble, frequencies);
    Ok(excitation
        .into_iter()
        .map(|v| 1.0 - p.a_over_i0 * v)
        .collect())
}

/// Weighted sum of squared residuals of the simulated signal against every
/// dataset. Deterministic given `(p, cfg)`.
pub fn residual_sse(p: &FitParams, data: &[MeasuredSpectrum], cfg: &FitConfig) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data("residual needs at least one dataset".into()));
    }
    if !p.in_bounds() {
        return Err(Error::InvalidParam(format!(
            "fit parameters out of bounds: {p:?}"
        )));
    }
    let mut total = 0.0;
    for ds in data {
        let freqs = ds.frequencies();
        let model = model_signal(p, ds.applied_field_mt, &freqs, cfg)?;
        for (i, (&(freq, observed), simulated)) in ds.points.iter().zip(model).enumerate() {
            if !simulated.is_finite() {
                return Err(Error::Numerical(format!(
                    "{}: model signal not finite at {freq} MHz (params {p:?})",
                    ds.label
                )));
            }
            let weight = ds.weights.as_ref().map_or(1.0, |w| w[i]);
            let diff = simulated - observed;
            total += weight * diff * diff;
        }
    }
    Ok(total)
}

/// Nelder–Mead options. Tolerance is the simplex diameter in units of each
/// parameter's scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Initial vertex displacement, relative to the parameter scale.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iterations: 500,
            tolerance: 1e-3,
            initial_step: 0.25,
        }
    }
}

/// Outcome of one simplex descent.
#[derive(Clone, Debug)]
pub struct SimplexOutcome {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Derivative-free Nelder–Mead descent with the standard coefficients
/// (reflect 1, expand 2, contract ½, shrink ½). `scales` sets the initial
/// simplex size and the units of the convergence test.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    x0: &[f64],
    scales: &[f64],
    opts: &SimplexOptions,
) -> SimplexOutcome {
    let dim = x0.len();
    if dim == 0 {
        return SimplexOutcome {
            best: Vec::new(),
            best_value: objective(&[]),
            iterations: 0,
            converged: true,
        };
    }

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step * scales[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| objective(v)).collect();

    let order = |values: &[f64]| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| {
            values[a]
                .partial_cmp(&values[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        idx
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        let idx = order(&values);
        let best = idx[0];
        let worst = idx[dim];
        let second_worst = idx[dim - 1];

        // scaled simplex diameter relative to the best vertex
        let diameter = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .zip(scales)
                    .map(|((a, b), s)| ((a - b) / s).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        if diameter < opts.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; dim];
        for &i in &idx[..dim] {
            for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= dim as f64);

        let blend = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
        };

        // reflect the worst vertex through the centroid
        let reflected = blend(&centroid, &simplex[worst], -1.0);
        let f_reflected = objective(&reflected);
        if f_reflected < values[idx[0]] {
            let expanded = blend(&centroid, &simplex[worst], -2.0);
            let f_expanded = objective(&expanded);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
            continue;
        }
        if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
            continue;
        }
        // contract toward the better side
        let contracted = if f_reflected < values[worst] {
            blend(&centroid, &reflected, 0.5)
        } else {
            blend(&centroid, &simplex[worst], 0.5)
        };
        let f_contracted = objective(&contracted);
        if f_contracted < values[worst].min(f_reflected) {
            simplex[worst] = contracted;
            values[worst] = f_contracted;
            continue;
        }
        // shrink everything toward the best vertex
        let anchor = simplex[best].clone();
        for i in 0..=dim {
            if i == best {
                continue;
            }
            simplex[i] = blend(&anchor, &simplex[i], 0.5);
            values[i] = objective(&simplex[i]);
        }
    }

    let idx = order(&values);
    SimplexOutcome {
        best: simplex[idx[0]].clone(),
        best_value: values[idx[0]],
        iterations,
        converged,
    }
}

/// Result of one fitting stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub label: String,
    pub params: FitParams,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Final estimate with per-stage provenance (empty for single fits).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitParams,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stages: Vec<StageResult>,
}

/// Simplex descent of [`residual_sse`] over the non-fixed fields of
/// `initial`. Non-convergence within the iteration budget is flagged, never
/// thrown; the best point found is always reported.
pub fn fit(data: &[MeasuredSpectrum], initial: &FitParams, cfg: &FitConfig) -> Result<FitResult> {
    for ds in data {
        ds.validate()?;
    }
    if !initial.in_bounds() {
        return Err(Error::InvalidParam(format!(
            "initial fit parameters out of bounds: {initial:?}"
        )));
    }
    let free: Vec<usize> = (0..FIT_FIELDS.len())
        .filter(|&i| !field_fixed(&initial.fixed, i))
        .collect();
    if free.is_empty() {
        let residual = residual_sse(initial, data, cfg)?;
        return Ok(FitResult {
            params: *initial,
            residual,
            iterations: 0,
            converged: true,
            stages: Vec::new(),
        });
    }

    // validate the starting point eagerly so a broken setup errors instead
    // of silently optimizing a wall of infinities
    residual_sse(initial, data, cfg)?;

    let x0: Vec<f64> = free.iter().map(|&i| field_value(initial, i)).collect();
    let scales: Vec<f64> = x0.iter().map(|v| v.abs().max(1e-3)).collect();
    let objective = |x: &[f64]| -> f64 {
        let mut p = *initial;
        for (&i, &v) in free.iter().zip(x) {
            set_field(&mut p, i, v);
        }
        if !p.in_bounds() {
            return f64::INFINITY;
        }
        residual_sse(&p, data, cfg).unwrap_or(f64::INFINITY)
    };
    let outcome = nelder_mead(objective, &x0, &scales, &cfg.simplex);

    let mut params = *initial;
    for (&i, &v) in free.iter().zip(&outcome.best) {
        set_field(&mut params, i, v);
    }
    Ok(FitResult {
        params,
        residual: outcome.best_value,
        iterations: outcome.iterations,
        converged: outcome.converged,
        stages: Vec::new(),
    })
}

fn check_dip_window(zero_field: &MeasuredSpectrum, center: f64, half_width: f64) -> Result<()> {
    let lo = center - half_width;
    let hi = center + half_width;
    let first = zero_field
        .points
        .first()
        .map(|p| p.0)
        .unwrap_or(f64::INFINITY);
    let last = zero_field
        .points
        .last()
        .map(|p| p.0)
        .unwrap_or(f64::NEG_INFINITY);
    let inside = zero_field
        .points
        .iter()
        .filter(|p| p.0 >= lo && p.0 <= hi)
        .count();
    if first > lo || last < hi || inside < 10 {
        return Err(Error::Data(format!(
            "{}: zero-field data does not cover the dip window [{lo:.1}, {hi:.1}] MHz \
             ({inside} points inside)",
            zero_field.label
        )));
    }
    Ok(())
}

/// The staged three-parameter estimation.
///
/// Stage 1 fits (δB, a/I₀, λ, D) to the with-field spectrum with the strain
/// width frozen at its initial (nominal) value; stage 2 fits Γ inside the
/// dip window of the zero-field spectrum; stage 3 fits δE to the full
/// zero-field spectrum with the rest frozen. Fields the caller already
/// fixed stay fixed throughout. The reported residual is the combined
/// objective over both datasets at the final parameters.
///
/// Stage 2 frees the signal contrast alongside Γ: peak heights scale as
/// a/(I₀·Γ), so the contrast fitted in stage 1 carries the bias of the
/// frozen (initial) Γ, and a Γ-only dip fit would reproduce that initial
/// value instead of correcting it. Inside the window the flanking peaks pin
/// the contrast while the dip fill-in pins Γ, so the pair is identifiable.
pub fn staged_estimate(
    zero_field: &MeasuredSpectrum,
    with_field: &MeasuredSpectrum,
    initial: &FitParams,
    cfg: &FitConfig,
) -> Result<FitResult> {
    zero_field.validate()?;
    with_field.validate()?;
    if with_field.applied_field_mt < 1.0 {
        return Err(Error::InvalidParam(format!(
            "staged estimation needs an applied field of at least 1 mT (got {} mT): \
             weaker fields do not suppress the strain contribution",
            with_field.applied_field_mt
        )));
    }
    check_dip_window(zero_field, initial.d_zfs, cfg.dip_window_mhz)?;

    // Stage 1: with-field spectrum, strain and Γ frozen.
    let mut p1 = *initial;
    p1.fixed.gamma = true;
    p1.fixed.delta_e = true;
    let r1 = fit(std::slice::from_ref(with_field), &p1, cfg)?;
    let stage1 = StageResult {
        label: "with-field: delta_b, amplitude, drive, d_zfs".into(),
        params: r1.params,
        residual: r1.residual,
        iterations: r1.iterations,
        converged: r1.converged,
    };

    // Stage 2: Γ (plus the contrast it is entangled with) from
    // the dip window around the fitted center.
    check_dip_window(zero_field, r1.params.d_zfs, cfg.dip_window_mhz)?;
    let window = zero_field.window(
        r1.params.d_zfs - cfg.dip_window_mhz,
        r1.params.d_zfs + cfg.dip_window_mhz,
    );
    let mut p2 = r1.params;
    p2.fixed = FixedMask::all();
    p2.fixed.gamma = initial.fixed.gamma;
    p2.fixed.a_over_i0 = initial.fixed.a_over_i0;
    let r2 = fit(&[window], &p2, cfg)?;
    let stage2 = StageResult {
        label: "zero-field dip window: gamma, amplitude".into(),
        params: r2.params,
        residual: r2.residual,
        iterations: r2.iterations,
        converged: r2.converged,
    };

    // Stage 3: strain width from the full zero-field spectrum.
    let mut p3 = r2.params;
    p3.fixed = FixedMask::all();
    p3.fixed.delta_e = initial.fixed.delta_e;
    let r3 = fit(std::slice::from_ref(zero_field), &p3, cfg)?;
    let stage3 = StageResult {
        label: "zero-field: delta_e".into(),
        params: r3.params,
        residual: r3.residual,
        iterations: r3.iterations,
        converged: r3.converged,
    };

    let mut params = r3.params;
    params.fixed = initial.fixed;
    let residual = residual_sse(&params, &[zero_field.clone(), with_field.clone()], cfg)?;
    Ok(FitResult {
        params,
        residual,
        iterations: stage1.iterations + stage2.iterations + stage3.iterations,
        converged: stage1.converged && stage2.converged && stage3.converged,
        stages: vec![stage1, stage2, stage3],
    })
}
