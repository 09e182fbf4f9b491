//! Disorder-averaged spectra and the normalized ODMR signal.
//!
//! A spectrum is the ensemble-mean excitation evaluated over a frequency
//! grid, one disorder realization reused across the whole sweep (the
//! physical ensemble does not change while the probe scans). Ensemble means
//! are accumulated over fixed-size chunks whose partial sums are combined in
//! index order, so the result is bit-identical for any worker count.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{draw_ensemble, DisorderSpec, EnsembleSample, SampledCenter};
use crate::error::{Error, Result};
use crate::geometry::AxisPopulation;
use crate::model::{populations_raw, Damping};

/// Fixed reduction granularity for ensemble sums. Part of the output
/// contract: changing it changes last-ulp rounding.
const SUM_CHUNK: usize = 4096;

/// Uniform probe grid in MHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl FrequencyGrid {
    pub fn new(start: f64, stop: f64, points: usize) -> Result<Self> {
        let grid = FrequencyGrid {
            start,
            stop,
            points,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite()) || self.start >= self.stop {
            return Err(Error::InvalidParam(format!(
                "grid needs start < stop, got [{}, {}]",
                self.start, self.stop
            )));
        }
        if self.points == 0 {
            return Err(Error::InvalidParam("grid needs at least one point".into()));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        if self.points < 2 {
            0.0
        } else {
            (self.stop - self.start) / (self.points - 1) as f64
        }
    }

    /// Probe frequency of point `i`; a single-point grid sits at `start`.
    pub fn frequency(&self, i: usize) -> f64 {
        if self.points < 2 {
            self.start
        } else {
            self.start + (self.stop - self.start) * i as f64 / (self.points - 1) as f64
        }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.frequency(i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Excitation,
    Signal,
}

impl SpectrumKind {
    pub fn column_name(&self) -> &'static str {
        match self {
            SpectrumKind::Excitation => "excitation",
            SpectrumKind::Signal => "signal",
        }
    }
}

/// Baseline intensity and contrast scale of the signal transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalScale {
    pub i0: f64,
    pub a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub seed: u64,
    pub ensemble_size: usize,
    pub drive: crate::disorder::DriveDist<f64>,
    /// Present once the spectrum has been converted to a signal.
    pub signal: Option<SignalScale>,
}

/// A computed spectrum: per-grid-point excitation `P_e` or normalized
/// signal `1 − (a/I₀)·P_e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub grid: FrequencyGrid,
    pub kind: SpectrumKind,
    pub values: Vec<f64>,
    pub meta: SpectrumMeta,
}

/// Chunked mean of the per-center excitation at one probe frequency.
fn mean_excitation_seq(centers: &[SampledCenter<f64>], probe: f64) -> f64 {
    let mut total = 0.0;
    for chunk in centers.chunks(SUM_CHUNK) {
        let mut partial = 0.0;
        for c in chunk {
            let (n_bright, n_dark) = populations_raw(&c.params, probe);
            partial += n_bright + n_dark;
        }
        total += partial;
    }
    total / centers.len() as f64
}

fn mean_excitation_par(centers: &[SampledCenter<f64>], probe: f64) -> f64 {
    let partials: Vec<f64> = centers
        .par_chunks(SUM_CHUNK)
        .map(|chunk| {
            let mut partial = 0.0;
            for c in chunk {
                let (n_bright, n_dark) = populations_raw(&c.params, probe);
                partial += n_bright + n_dark;
            }
            partial
        })
        .collect();
    partials.iter().sum::<f64>() / centers.len() as f64
}

/// Ensemble-mean excitation probability at one probe frequency.
pub fn ensemble_excitation(ensemble: &EnsembleSample<f64>, probe: f64) -> f64 {
    mean_excitation_par(ensemble.centers(), probe)
}

/// Evaluate the ensemble mean across the grid, reusing the one disorder
/// realization for every point. Grid points are independent, so they run in
/// parallel; each point's sum uses the fixed chunk order.
pub fn compute_spectrum(ensemble: &EnsembleSample<f64>, grid: &FrequencyGrid) -> Result<Spectrum> {
    grid.validate()?;
    let values: Vec<f64> = (0..grid.points)
        .into_par_iter()
        .map(|i| mean_excitation_seq(ensemble.centers(), grid.frequency(i)))
        .collect();
    Ok(Spectrum {
        grid: *grid,
        kind: SpectrumKind::Excitation,
        values,
        meta: SpectrumMeta {
            seed: ensemble.seed(),
            ensemble_size: ensemble.len(),
            drive: ensemble.spec().drive_dist,
            signal: None,
        },
    })
}

/// Ensemble-mean excitation at arbitrary probe frequencies (the fitting
/// path, where the probe points come from measured data rather than a
/// uniform grid). Same chunked reduction as [`compute_spectrum`].
pub fn excitation_at_frequencies(ensemble: &EnsembleSample<f64>, frequencies: &[f64]) -> Vec<f64> {
    frequencies
        .par_iter()
        .map(|&probe| mean_excitation_seq(ensemble.centers(), probe))
        .collect()
}

/// Convert an excitation spectrum to the normalized ODMR signal
/// `(I₀ − a·P_e)/I₀`.
pub fn to_signal(s: &Spectrum, i0: f64, a: f64) -> Result<Spectrum> {
    if !i0.is_finite() || i0 <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "baseline intensity must be positive, got {i0}"
        )));
    }
    if s.kind != SpectrumKind::Excitation {
        return Err(Error::InvalidParam(
            "signal conversion expects an excitation spectrum".into(),
        ));
    }
    let contrast = a / i0;
    Ok(Spectrum {
        grid: s.grid,
        kind: SpectrumKind::Signal,
        values: s.values.iter().map(|v| 1.0 - contrast * v).collect(),
        meta: SpectrumMeta {
            signal: Some(SignalScale { i0, a }),
            ..s.meta.clone()
        },
    })
}

/// Mean squared drive amplitude of the ensemble, `⟨λ²⟩`. An inhomogeneously
/// driven ensemble produces the same spectrum as a homogeneous one at
/// `λ = sqrt(drive_moment)`, because the excitation is linear in `λ²` and
/// the drive draw is independent of the other disorder.
pub fn drive_moment(ensemble: &EnsembleSample<f64>) -> f64 {
    let mut total = 0.0;
    for chunk in ensemble.centers().chunks(SUM_CHUNK) {
        let mut partial = 0.0;
        for c in chunk {
            partial += c.params.drive * c.params.drive;
        }
        total += partial;
    }
    total / ensemble.len() as f64
}

/// Everything needed to produce one spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub disorder: DisorderSpec<f64>,
    pub geometry: AxisPopulation<f64>,
    pub damping: Damping<f64>,
    pub grid: FrequencyGrid,
    pub ensemble_size: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn draw(&self) -> Result<EnsembleSample<f64>> {
        draw_ensemble(
            &self.disorder,
            &self.geometry,
            self.damping,
            self.ensemble_size,
            self.seed,
        )
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        compute_spectrum(&self.draw()?, &self.grid)
    }
}

/// Monte Carlo self-check: maximum relative change of any grid value when
/// the ensemble size doubles (same seed, so the first half of the draws is
/// shared). Doubling the default size should move nothing by more than
/// about half a percent.
pub fn doubling_delta(cfg: &SimConfig) -> Result<f64> {
    let base = cfg.spectrum()?;
    let doubled = SimConfig {
        ensemble_size: cfg.ensemble_size * 2,
        ..cfg.clone()
    }
    .spectrum()?;
    let mut worst: f64 = 0.0;
    for (a, b) in base.values.iter().zip(&doubled.values) {
        worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

impl Spectrum {
    /// Two-column CSV with full round-trip precision (17 significant
    /// digits), LF line endings.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "frequency_mhz,{}", self.kind.column_name())?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e}", self.grid.frequency(i), v)?;
        }
        Ok(())
    }
}

/// Parsed spectrum CSV: arbitrary (strictly increasing) frequency column.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumTable {
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
}

/// Read a `frequency_mhz,excitation|signal` CSV, with row-level diagnostics
/// for malformed numbers, non-finite values, and non-increasing frequencies.
pub fn read_spectrum_csv<R: BufRead>(reader: R) -> Result<SpectrumTable> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(line))) => line,
        Some((_, Err(e))) => return Err(Error::Data(format!("failed to read header: {e}"))),
        None => return Err(Error::Data("empty spectrum file".into())),
    };
    let kind = match header.trim_end() {
        "frequency_mhz,excitation" => SpectrumKind::Excitation,
        "frequency_mhz,signal" => SpectrumKind::Signal,
        other => {
            return Err(Error::Data(format!(
                "unrecognized header {other:?}; expected frequency_mhz,excitation or frequency_mhz,signal"
            )))
        }
    };
    let mut frequencies = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1; // 1-based, counting the header as row 1
        let line = line.map_err(|e| Error::Data(format!("row {row}: read error: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.trim_end().split(',');
        let freq = parse_field(fields.next(), row, "frequency_mhz")?;
        let value = parse_field(fields.next(), row, kind.column_name())?;
        if fields.next().is_some() {
            return Err(Error::Data(format!("row {row}: expected 2 columns")));
        }
        if let Some(&prev) = frequencies.last() {
            if freq <= prev {
                return Err(Error::Data(format!(
                    "row {row}: frequencies must be strictly increasing ({freq} after {prev})"
                )));
            }
        }
        frequencies.push(freq);
        values.push(value);
    }
    if frequencies.is_empty() {
        return Err(Error::Data("spectrum file has no data rows".into()));
    }
    Ok(SpectrumTable {
        frequencies,
        values,
        kind,
    })
}

pub(crate) fn parse_field(field: Option<&str>, row: usize, name: &str) -> Result<f64> {
    let raw = field
        .ok_or_else(|| Error::Data(format!("row {row}: missing column {name}")))?
        .trim();
    let value: f64 = raw
        .parse()
        .map_err(|_| Error::Data(format!("row {row}: {name} is not a number: {raw:?}")))?;
    if !value.is_finite() {
        return Err(Error::Data(format!(
            "row {row}: {name} must be finite, got {raw}"
        )));
    }
    Ok(value)
}
