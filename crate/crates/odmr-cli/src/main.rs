//! `odmr`: simulate ensemble ODMR spectra, fit measured ones, sweep
//! parameters, and extract peak/dip metrics.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

mod config;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use odmr::analysis::{peak_report, sweep, PeakReport, SweepParameter};
use odmr::estimate::{fit, staged_estimate, FitResult, MeasuredSpectrum};
use odmr::spectrum::{compute_spectrum, to_signal, Spectrum, SpectrumKind};
use odmr::{Error, Result};

use config::{apply_fix, RunConfig};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "odmr",
    version,
    about = "ODMR spectra of dense NV- ensembles: simulation, fitting, sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; omit to use the built-in reference profile.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override the configured ensemble seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate excitation and signal spectra, writing CSV + JSON outputs.
    Simulate {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Fit measured spectra: staged (zero-field + with-field) by default,
    /// or a joint fit of one dataset with --joint.
    Fit {
        #[command(flatten)]
        common: ConfigArgs,
        /// Zero-field signal CSV (staged mode).
        #[arg(long, value_name = "FILE")]
        zero_field: Option<PathBuf>,
        /// With-field signal CSV (staged mode).
        #[arg(long, value_name = "FILE")]
        with_field: Option<PathBuf>,
        /// Applied field of the with-field (or joint) dataset, in mT.
        #[arg(long, default_value_t = 2.0)]
        field_mt: f64,
        /// Joint single-dataset mode.
        #[arg(long)]
        joint: bool,
        /// Signal CSV for joint mode.
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        /// Fix a parameter at a value: name=value (repeatable).
        #[arg(long, value_name = "NAME=VALUE")]
        fix: Vec<String>,
        /// Report path (default: <out-dir>/fit_report.json).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Recompute spectra while sweeping gamma, delta_b or delta_e.
    Sweep {
        #[command(flatten)]
        common: ConfigArgs,
        /// Parameter to sweep: gamma, delta_b or delta_e.
        #[arg(long)]
        param: String,
        /// Comma-separated ascending values, at least three.
        #[arg(long)]
        values: String,
    },
    /// Peak/dip report for a spectrum CSV.
    Analyze {
        /// Spectrum CSV (frequency_mhz,excitation or frequency_mhz,signal).
        #[arg(long, value_name = "FILE")]
        spectrum: PathBuf,
        /// Peak prominence threshold as a fraction of the value range.
        #[arg(long, default_value_t = 0.02)]
        prominence_frac: f64,
        /// Also write the report JSON here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidParam(_) => 2,
                Error::Data(_) => 3,
                Error::Numerical(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}

/// Honor ODMR_THREADS before any parallel work starts. Output is identical
/// for every thread count; the variable only controls how many cores the
/// work spreads across.
fn init_thread_pool() -> Result<()> {
    if let Ok(raw) = std::env::var("ODMR_THREADS") {
        let threads: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::InvalidParam(format!(
                "ODMR_THREADS must be a positive integer, got {raw:?}"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => cmd_simulate(&common),
        Command::Fit {
            common,
            zero_field,
            with_field,
            field_mt,
            joint,
            data,
            fix,
            out,
        } => cmd_fit(
            &common, zero_field, with_field, field_mt, joint, data, &fix, out,
        ),
        Command::Sweep {
            common,
            param,
            values,
        } => cmd_sweep(&common, &param, &values),
        Command::Analyze {
            spectrum,
            prominence_frac,
            out,
        } => cmd_analyze(&spectrum, prominence_frac, out),
    }
}

fn load_config(common: &ConfigArgs) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::InvalidParam(format!("cannot read config {}: {e}", path.display()))
            })?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.ensemble.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        config.output.dir = dir.display().to_string();
    }
    Ok(config)
}

fn ensure_out_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&config.output.dir);
    fs::create_dir_all(&dir).map_err(|e| {
        Error::InvalidParam(format!(
            "cannot create output directory {}: {e}",
            dir.display()
        ))
    })?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents)
        .map_err(|e| Error::InvalidParam(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("JSON encoding failed: {e}")))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

#[derive(Serialize)]
struct SpectrumDocument<'a> {
    version: &'a str,
    command: &'a str,
    config: &'a RunConfig,
    spectrum: &'a Spectrum,
}

fn cmd_simulate(common: &ConfigArgs) -> Result<()> {
    let config = load_config(common)?;
    let dir = ensure_out_dir(&config)?;
    let sim = config.sim_config()?;
    let ensemble = sim.draw()?;
    let excitation = compute_spectrum(&ensemble, &sim.grid)?;
    let signal = to_signal(&excitation, config.signal.i0, config.signal.a)?;

    for (name, spectrum) in [("excitation", &excitation), ("signal", &signal)] {
        let mut csv = Vec::new();
        spectrum
            .write_csv(&mut csv)
            .map_err(|e| Error::InvalidParam(format!("cannot encode {name} CSV: {e}")))?;
        let csv_path = dir.join(format!("{name}.csv"));
        write_file(&csv_path, &csv)?;
        let json_path = dir.join(format!("{name}.json"));
        write_json(
            &json_path,
            &SpectrumDocument {
                version: VERSION,
                command: "simulate",
                config: &config,
                spectrum,
            },
        )?;
        println!("wrote {} and {}", csv_path.display(), json_path.display());
    }
    println!(
        "simulated n = {} centers at B = {} mT over [{}, {}] MHz (seed {})",
        config.ensemble.n,
        config.geometry.applied_field_mt,
        config.grid.start_mhz,
        config.grid.stop_mhz,
        config.ensemble.seed
    );
    Ok(())
}

#[derive(Serialize)]
struct DatasetSummary {
    label: String,
    applied_field_mt: f64,
    points: usize,
}

#[derive(Serialize)]
struct FitDocument<'a> {
    version: &'a str,
    command: &'a str,
    mode: &'a str,
    config: &'a RunConfig,
    datasets: Vec<DatasetSummary>,
    result: &'a FitResult,
}

fn read_measured(path: &Path, field_mt: f64) -> Result<MeasuredSpectrum> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    MeasuredSpectrum::from_csv(BufReader::new(file), field_mt, path.display().to_string())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    common: &ConfigArgs,
    zero_field: Option<PathBuf>,
    with_field: Option<PathBuf>,
    field_mt: f64,
    joint: bool,
    data: Option<PathBuf>,
    fixes: &[String],
    out: Option<PathBuf>,
) -> Result<()> {
    let config = load_config(common)?;
    let dir = ensure_out_dir(&config)?;
    let fit_cfg = config.fit_config();
    let mut initial = config.initial_fit_params()?;
    for spec in fixes {
        apply_fix(&mut initial, spec)?;
    }

    let (mode, datasets, result) = if joint {
        let path =
            data.ok_or_else(|| Error::InvalidParam("joint mode needs --data <FILE>".into()))?;
        let measured = read_measured(&path, field_mt)?;
        let result = fit(std::slice::from_ref(&measured), &initial, &fit_cfg)?;
        (
            "joint",
            vec![&measured].into_iter().map(summary).collect(),
            result,
        )
    } else {
        let zero_path = zero_field.ok_or_else(|| {
            Error::InvalidParam("staged mode needs --zero-field <FILE> (or use --joint)".into())
        })?;
        let with_path = with_field.ok_or_else(|| {
            Error::InvalidParam("staged mode needs --with-field <FILE> (or use --joint)".into())
        })?;
        let zero = read_measured(&zero_path, 0.0)?;
        let with = read_measured(&with_path, field_mt)?;
        let result = staged_estimate(&zero, &with, &initial, &fit_cfg)?;
        (
            "staged",
            [&zero, &with].into_iter().map(summary).collect(),
            result,
        )
    };

    let document = FitDocument {
        version: VERSION,
        command: "fit",
        mode,
        config: &config,
        datasets,
        result: &result,
    };
    let report = serde_json::to_string_pretty(&document)
        .map_err(|e| Error::Numerical(format!("JSON encoding failed: {e}")))?;
    println!("{report}");
    let out_path = out.unwrap_or_else(|| dir.join("fit_report.json"));
    write_file(&out_path, format!("{report}\n").as_bytes())?;
    eprintln!("wrote {}", out_path.display());
    Ok(())
}

fn summary(ds: &MeasuredSpectrum) -> DatasetSummary {
    DatasetSummary {
        label: ds.label.clone(),
        applied_field_mt: ds.applied_field_mt,
        points: ds.points.len(),
    }
}

#[derive(Serialize)]
struct SweepDocument<'a> {
    version: &'a str,
    command: &'a str,
    config: &'a RunConfig,
    parameter: SweepParameter,
    values: &'a [f64],
    metrics: &'a [odmr::analysis::SweepMetrics],
}

fn cmd_sweep(common: &ConfigArgs, param: &str, values: &str) -> Result<()> {
    let config = load_config(common)?;
    let dir = ensure_out_dir(&config)?;
    let parameter: SweepParameter = param.parse()?;
    let values: Vec<f64> = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParam(format!("--values entry is not a number: {v:?}")))
        })
        .collect::<Result<_>>()?;
    let grid = sweep(&config.sim_config()?, parameter, &values)?;

    let csv_path = dir.join(format!("sweep_{parameter}.csv"));
    let mut csv = Vec::new();
    grid.write_long_csv(&mut csv)
        .map_err(|e| Error::InvalidParam(format!("cannot encode sweep CSV: {e}")))?;
    write_file(&csv_path, &csv)?;

    let metrics_path = dir.join(format!("sweep_{parameter}_metrics.json"));
    write_json(
        &metrics_path,
        &SweepDocument {
            version: VERSION,
            command: "sweep",
            config: &config,
            parameter,
            values: &grid.values,
            metrics: &grid.metrics,
        },
    )?;
    println!(
        "wrote {} and {}",
        csv_path.display(),
        metrics_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeDocument<'a> {
    version: &'a str,
    command: &'a str,
    input: String,
    kind: SpectrumKind,
    prominence_frac: f64,
    report: &'a PeakReport,
}

fn cmd_analyze(spectrum: &Path, prominence_frac: f64, out: Option<PathBuf>) -> Result<()> {
    let file = fs::File::open(spectrum)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", spectrum.display())))?;
    let table = odmr::spectrum::read_spectrum_csv(BufReader::new(file))?;
    // signal spectra dip downward; analyze their baseline-relative contrast
    // so resonances appear as peaks either way
    let values: Vec<f64> = match table.kind {
        SpectrumKind::Excitation => table.values.clone(),
        SpectrumKind::Signal => table.values.iter().map(|v| 1.0 - v).collect(),
    };
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(prominence_frac > 0.0 && prominence_frac.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "prominence fraction must be positive, got {prominence_frac}"
        )));
    }
    let report = if max > min {
        peak_report(&table.frequencies, &values, prominence_frac * (max - min))?
    } else {
        PeakReport::default()
    };
    let document = AnalyzeDocument {
        version: VERSION,
        command: "analyze",
        input: spectrum.display().to_string(),
        kind: table.kind,
        prominence_frac,
        report: &report,
    };
    let text = serde_json::to_string_pretty(&document)
        .map_err(|e| Error::Numerical(format!("JSON encoding failed: {e}")))?;
    println!("{text}");
    if let Some(path) = out {
        write_file(&path, format!("{text}\n").as_bytes())?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
