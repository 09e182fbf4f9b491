//! The run configuration: a flat TOML document, one table per concern,
//! schema-validated with unknown keys rejected. Every key has a default;
//! the defaults together form the shipped reference profile.

use serde::{Deserialize, Serialize};

use odmr::estimate::{FitConfig, FitParams, FixedMask, SimplexOptions};
use odmr::spectrum::{FrequencyGrid, SimConfig};
use odmr::{
    AxisPopulation, Damping, DisorderSpec, DriveDist, Error, HyperfineMixtureSpec, LorentzianSpec,
    Result,
};

fn third() -> [f64; 3] {
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub gamma_b_mhz: f64,
    pub gamma_d_mhz: f64,
    pub drive_mhz: f64,
    /// Optional inhomogeneous drive: uniform on `[lo, hi]`, overriding
    /// `drive_mhz`.
    pub drive_uniform_mhz: Option<[f64; 2]>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            gamma_b_mhz: 0.3,
            gamma_d_mhz: 0.3,
            drive_mhz: 2.0,
            drive_uniform_mhz: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisorderSection {
    pub d_center_mhz: f64,
    pub d_hwhm_mhz: f64,
    pub e1_hwhm_mhz: f64,
    pub e2_hwhm_mhz: f64,
    pub field_hwhm_mhz: f64,
    pub hyperfine_splitting_mhz: f64,
    pub hyperfine_weights: [f64; 3],
    pub truncation_hwhm_multiple: f64,
}

impl Default for DisorderSection {
    fn default() -> Self {
        DisorderSection {
            d_center_mhz: 2870.0,
            d_hwhm_mhz: 0.01,
            e1_hwhm_mhz: 0.73,
            e2_hwhm_mhz: 0.73,
            field_hwhm_mhz: 1.96,
            hyperfine_splitting_mhz: 2.3,
            hyperfine_weights: third(),
            truncation_hwhm_multiple: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub applied_field_mt: f64,
    pub g_e: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            applied_field_mt: 0.0,
            g_e: odmr::geometry::G_E,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub start_mhz: f64,
    pub stop_mhz: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            start_mhz: 2850.0,
            stop_mhz: 2890.0,
            points: 801,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub n: usize,
    pub seed: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            n: 200_000,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    pub i0: f64,
    pub a: f64,
}

impl Default for SignalSection {
    fn default() -> Self {
        SignalSection { i0: 1.0, a: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub initial_gamma_mhz: f64,
    pub initial_delta_b_mhz: f64,
    pub initial_delta_e_mhz: f64,
    pub initial_a_over_i0: f64,
    pub initial_d_zfs_mhz: f64,
    pub initial_drive_mhz: f64,
    /// Names of parameters to hold fixed at their initial values.
    pub fixed: Vec<String>,
    pub ensemble_n: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub dip_window_mhz: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            initial_gamma_mhz: 0.5,
            initial_delta_b_mhz: 2.5,
            initial_delta_e_mhz: 0.73,
            initial_a_over_i0: 0.01,
            initial_d_zfs_mhz: 2870.0,
            initial_drive_mhz: 2.0,
            fixed: Vec::new(),
            ensemble_n: 20_000,
            max_iterations: 500,
            tolerance: 1e-3,
            dip_window_mhz: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: ".".into() }
    }
}

/// The full run configuration. Defaults reproduce the reference zero-field
/// profile (strain and field widths 0.73 / 1.96 MHz, Γ = 0.3 MHz, drive
/// 2 MHz, hyperfine triplet 2.3 MHz).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub disorder: DisorderSection,
    pub geometry: GeometrySection,
    pub grid: GridSection,
    pub ensemble: EnsembleSection,
    pub signal: SignalSection,
    pub fit: FitSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidParam(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.disorder_spec().validate()?;
        self.axis_population().validate()?;
        self.damping().validate()?;
        self.frequency_grid()?.validate()?;
        if self.ensemble.n == 0 {
            return Err(Error::InvalidParam("ensemble.n must be at least 1".into()));
        }
        if !self.signal.i0.is_finite() || self.signal.i0 <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "signal.i0 must be positive, got {}",
                self.signal.i0
            )));
        }
        if self.signal.a < 0.0 {
            return Err(Error::InvalidParam(format!(
                "signal.a must be non-negative, got {}",
                self.signal.a
            )));
        }
        for name in &self.fit.fixed {
            parse_fit_field(name)?;
        }
        Ok(())
    }

    pub fn drive_dist(&self) -> DriveDist {
        match self.model.drive_uniform_mhz {
            Some([lo, hi]) => DriveDist::Uniform { lo, hi },
            None => DriveDist::constant(self.model.drive_mhz),
        }
    }

    pub fn disorder_spec(&self) -> DisorderSpec {
        let truncation = self.disorder.truncation_hwhm_multiple;
        DisorderSpec {
            d_dist: LorentzianSpec {
                center: self.disorder.d_center_mhz,
                hwhm: self.disorder.d_hwhm_mhz,
                truncation,
            },
            e1_dist: LorentzianSpec {
                center: 0.0,
                hwhm: self.disorder.e1_hwhm_mhz,
                truncation,
            },
            e2_dist: LorentzianSpec {
                center: 0.0,
                hwhm: self.disorder.e2_hwhm_mhz,
                truncation,
            },
            field_dist: HyperfineMixtureSpec {
                hwhm: self.disorder.field_hwhm_mhz,
                splitting: self.disorder.hyperfine_splitting_mhz,
                weights: self.disorder.hyperfine_weights,
                truncation,
            },
            drive_dist: self.drive_dist(),
        }
    }

    pub fn axis_population(&self) -> AxisPopulation {
        AxisPopulation::field_111(self.geometry.applied_field_mt).with_g_e(self.geometry.g_e)
    }

    pub fn damping(&self) -> Damping {
        Damping {
            gamma_b: self.model.gamma_b_mhz,
            gamma_d: self.model.gamma_d_mhz,
        }
    }

    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.grid.start_mhz, self.grid.stop_mhz, self.grid.points)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        Ok(SimConfig {
            disorder: self.disorder_spec(),
            geometry: self.axis_population(),
            damping: self.damping(),
            grid: self.frequency_grid()?,
            ensemble_size: self.ensemble.n,
            seed: self.ensemble.seed,
        })
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            d_hwhm: self.disorder.d_hwhm_mhz,
            hyperfine_splitting: self.disorder.hyperfine_splitting_mhz,
            hyperfine_weights: self.disorder.hyperfine_weights,
            truncation: self.disorder.truncation_hwhm_multiple,
            g_e: self.geometry.g_e,
            ensemble_n: self.fit.ensemble_n,
            seed: self.ensemble.seed,
            simplex: SimplexOptions {
                max_iterations: self.fit.max_iterations,
                tolerance: self.fit.tolerance,
                initial_step: SimplexOptions::default().initial_step,
            },
            dip_window_mhz: self.fit.dip_window_mhz,
        }
    }

    pub fn initial_fit_params(&self) -> Result<FitParams> {
        let mut fixed = FixedMask::default();
        for name in &self.fit.fixed {
            *mask_slot(&mut fixed, parse_fit_field(name)?) = true;
        }
        Ok(FitParams {
            gamma: self.fit.initial_gamma_mhz,
            delta_b: self.fit.initial_delta_b_mhz,
            delta_e: self.fit.initial_delta_e_mhz,
            a_over_i0: self.fit.initial_a_over_i0,
            d_zfs: self.fit.initial_d_zfs_mhz,
            drive: self.fit.initial_drive_mhz,
            fixed,
        })
    }
}

/// Fit parameter names accepted in `[fit].fixed` and `--fix`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitField {
    Gamma,
    DeltaB,
    DeltaE,
    AOverI0,
    DZfs,
    Drive,
}

pub fn parse_fit_field(name: &str) -> Result<FitField> {
    match name {
        "gamma" => Ok(FitField::Gamma),
        "delta_b" => Ok(FitField::DeltaB),
        "delta_e" => Ok(FitField::DeltaE),
        "a_over_i0" => Ok(FitField::AOverI0),
        "d_zfs" => Ok(FitField::DZfs),
        "drive" => Ok(FitField::Drive),
        other => Err(Error::InvalidParam(format!(
            "unknown fit parameter {other:?} (expected gamma, delta_b, delta_e, a_over_i0, d_zfs or drive)"
        ))),
    }
}

fn mask_slot(mask: &mut FixedMask, field: FitField) -> &mut bool {
    match field {
        FitField::Gamma => &mut mask.gamma,
        FitField::DeltaB => &mut mask.delta_b,
        FitField::DeltaE => &mut mask.delta_e,
        FitField::AOverI0 => &mut mask.a_over_i0,
        FitField::DZfs => &mut mask.d_zfs,
        FitField::Drive => &mut mask.drive,
    }
}

/// Apply one `--fix name=value` override: sets the value and freezes it.
pub fn apply_fix(params: &mut FitParams, spec: &str) -> Result<()> {
    let (name, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidParam(format!("--fix expects name=value, got {spec:?}")))?;
    let value: f64 = value
        .parse()
        .map_err(|_| Error::InvalidParam(format!("--fix {name}: not a number: {value:?}")))?;
    let field = parse_fit_field(name)?;
    match field {
        FitField::Gamma => params.gamma = value,
        FitField::DeltaB => params.delta_b = value,
        FitField::DeltaE => params.delta_e = value,
        FitField::AOverI0 => params.a_over_i0 = value,
        FitField::DZfs => params.d_zfs = value,
        FitField::Drive => params.drive = value,
    }
    *mask_slot(&mut params.fixed, field) = true;
    Ok(())
}
