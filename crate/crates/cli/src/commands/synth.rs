use std::path::PathBuf;

use clap::Args;
use fastedi::io::write_dataset;
use fastedi::synth::{make_dataset, Pattern, SceneSpec};
use fastedi::{symmetric_contrast, Error, IntegrationMode, SensorGeometry};
use serde::Serialize;

use crate::report::parse_mode;
use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// vertical_edge, sine_grating or checkerboard.
    #[arg(long, default_value = "vertical_edge")]
    pub pattern: String,
    /// Edge column, grating wavelength or checker square, in pixels.
    #[arg(long)]
    pub feature: Option<f64>,
    /// Horizontal velocity, pixels per second.
    #[arg(long, default_value_t = 200.0)]
    pub velocity: f64,
    #[arg(long, default_value_t = 128)]
    pub width: u32,
    #[arg(long, default_value_t = 96)]
    pub height: u32,
    #[arg(long, default_value_t = 20.0)]
    pub fps: f64,
    /// Fraction of the frame period the shutter is open.
    #[arg(long, default_value_t = 0.5)]
    pub exposure_frac: f64,
    /// Symmetric contrast threshold.
    #[arg(long, default_value_t = 0.26)]
    pub contrast: f64,
    /// Scene length in seconds.
    #[arg(long, default_value_t = 0.5)]
    pub duration: f64,
    /// Rendering step of the latent video, microseconds.
    #[arg(long, default_value_t = 100)]
    pub sample_period_us: i64,
    /// Integration mode recorded in the manifest.
    #[arg(long, default_value = "time", value_parser = parse_mode)]
    pub mode: IntegrationMode,
    #[arg(long, default_value = "dataset")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct SynthReport {
    pub manifest: PathBuf,
    pub pattern: &'static str,
    pub geometry: SensorGeometry,
    pub velocity: f64,
    pub c_on: f64,
    pub c_off: f64,
    pub events: usize,
    pub frames: usize,
    /// Motion during one exposure, pixels.
    pub smear_px: f64,
}

/// Invalid scene parameters are usage errors; only I/O failures are data errors.
fn usage(e: Error) -> CliError {
    match e {
        Error::Io { .. } => CliError::Data(e),
        other => CliError::Usage(other.to_string()),
    }
}

pub fn run(a: &SynthArgs) -> CliResult<SynthReport> {
    if !(a.duration.is_finite() && a.duration > 0.0) {
        return Err(CliError::Usage(format!(
            "--duration must be positive, got {}",
            a.duration
        )));
    }
    let geometry = SensorGeometry::new(a.width, a.height).map_err(usage)?;
    let pattern = Pattern::from_name(&a.pattern, a.feature).map_err(usage)?;
    let cp = symmetric_contrast(a.contrast).map_err(usage)?;
    let spec = SceneSpec {
        pattern,
        velocity: a.velocity,
        geometry,
        duration: (a.duration * 1e6).round() as i64,
        ..SceneSpec::default()
    };
    let dataset = make_dataset(&spec, &cp, a.fps, a.exposure_frac, a.sample_period_us).map_err(usage)?;
    let header = format!(
        "synthetic {} velocity={} fps={} exposure_frac={} contrast={}",
        pattern.name(),
        a.velocity,
        a.fps,
        a.exposure_frac,
        a.contrast
    );
    let manifest = write_dataset(&dataset, &a.out_dir, a.mode, &[header.as_str()]).map_err(usage)?;
    let exposure = dataset.frames[0].1.duration() as f64 * 1e-6;
    Ok(SynthReport {
        manifest,
        pattern: pattern.name(),
        geometry,
        velocity: a.velocity,
        c_on: cp.c_on(),
        c_off: cp.c_off(),
        events: dataset.events.len(),
        frames: dataset.frames.len(),
        smear_px: a.velocity.abs() * exposure,
    })
}
