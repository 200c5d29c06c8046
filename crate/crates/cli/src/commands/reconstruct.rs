use std::path::PathBuf;

use clap::Args;
use fastedi::baseline::latent_from_map;
use fastedi::io::write_pgm;
use fastedi::{reconstruct_latent_raw, EdiAccumulator, GrayImage, IntegrationMode};
use serde::Serialize;

use crate::report::{create_dir, load, parse_mode};
use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub frame_index: usize,
    /// Comma-separated microsecond timestamps, each at or after the frame's
    /// exposure start.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub timestamps: Vec<i64>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<IntegrationMode>,
    #[arg(long, default_value = "latent")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct LatentFrame {
    pub t_us: i64,
    pub path: PathBuf,
    pub mean_intensity: f64,
}

#[derive(Debug, Serialize)]
pub struct ReconstructReport {
    pub frame_index: usize,
    pub t_start_us: i64,
    pub t_end_us: i64,
    pub latents: Vec<LatentFrame>,
}

pub fn run(a: &ReconstructArgs) -> CliResult<ReconstructReport> {
    let d = load(&a.manifest)?;
    let Some((b, w)) = d.frames.get(a.frame_index) else {
        return Err(CliError::Usage(format!(
            "--frame-index {} out of range, dataset has {} frames",
            a.frame_index,
            d.frames.len()
        )));
    };
    let geom = d.manifest.geometry;
    let mode = a.mode.unwrap_or(d.manifest.mode);
    let lo = d.events.partition_point(|e| e.t <= w.t_start);
    let hi = d.events.partition_point(|e| e.t <= w.t_end);
    let mut acc = EdiAccumulator::new(geom, mode);
    acc.begin_exposure(w.t_start)?;
    acc.push_events(&d.events[lo..hi], &d.contrast)?;
    let result = acc.end_exposure(w.t_end, b)?;
    // Propagate the unclamped latent so saturated pixels recover correctly.
    let l0 = latent_from_map(b, &result.edi_map)?;
    let frames = reconstruct_latent_raw(&l0, geom, w.t_start, &d.events, &d.contrast, &a.timestamps)?;

    create_dir(&a.out_dir)?;
    let mut latents = Vec::with_capacity(frames.len());
    for (k, (raw, &t)) in frames.into_iter().zip(&a.timestamps).enumerate() {
        let img = GrayImage::from_clamped(geom.width, geom.height, raw)?;
        let path = a.out_dir.join(format!("latent_{k:04}.pgm"));
        write_pgm(&img, &path)?;
        latents.push(LatentFrame {
            t_us: t,
            path,
            mean_intensity: img.data().iter().sum::<f64>() / img.data().len() as f64,
        });
    }
    Ok(ReconstructReport {
        frame_index: a.frame_index,
        t_start_us: w.t_start,
        t_end_us: w.t_end,
        latents,
    })
}
