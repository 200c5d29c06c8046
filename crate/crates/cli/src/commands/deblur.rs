use std::path::PathBuf;

use clap::Args;
use fastedi::baseline::run_offline_baseline;
use fastedi::io::{write_pgm, LoadedDataset};
use fastedi::metrics::{laplacian_variance, psnr, psnr_for_report};
use fastedi::{EdiAccumulator, EdiMap, GrayImage, IntegrationMode};
use serde::Serialize;

use crate::report::{create_dir, load, parse_mode, secs, Engine};
use crate::CliResult;

#[derive(Debug, Args)]
pub struct DeblurArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Overrides the manifest's integration mode.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<IntegrationMode>,
    #[arg(long, value_enum, default_value_t = Engine::Fast)]
    pub engine: Engine,
    /// Where to write `deblur_NNNN.pgm`; nothing is written when absent.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also run the other engine and report the largest relative EDI
    /// difference.
    #[arg(long)]
    pub check_oracle: bool,
    /// Bound each pixel list of the fast engine.
    #[arg(long)]
    pub list_cap: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct FrameReport {
    pub index: usize,
    pub t_start_us: i64,
    pub t_end_us: i64,
    pub events: u64,
    pub step1_time: f64,
    pub step2_time: f64,
    pub psnr_blurred: Option<f64>,
    pub psnr_deblurred: Option<f64>,
    pub laplacian_var_blurred: f64,
    pub laplacian_var_deblurred: f64,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct DeblurReport {
    pub engine: Engine,
    pub mode: &'static str,
    pub c_on: f64,
    pub c_off: f64,
    pub frames: Vec<FrameReport>,
    pub events_total: u64,
    pub mean_psnr_blurred: Option<f64>,
    pub mean_psnr_deblurred: Option<f64>,
    pub psnr_gain: Option<f64>,
    pub max_rel_edi_diff: Option<f64>,
}

struct Output {
    latent: GrayImage,
    edi_map: EdiMap,
    events: u64,
    step1: f64,
    step2: f64,
}

fn run_fast(d: &LoadedDataset, mode: IntegrationMode, cap: Option<usize>) -> CliResult<Vec<Output>> {
    let mut acc = EdiAccumulator::new(d.manifest.geometry, mode);
    if let Some(cap) = cap {
        acc = acc.with_list_cap(cap)?;
    }
    Ok(acc
        .run_offline(&d.events, &d.frames, &d.contrast)?
        .into_iter()
        .map(|r| Output {
            latent: r.latent,
            edi_map: r.edi_map,
            events: r.events_processed,
            step1: secs(r.step1_time),
            step2: secs(r.step2_time),
        })
        .collect())
}

fn run_baseline(d: &LoadedDataset, mode: IntegrationMode) -> CliResult<Vec<Output>> {
    Ok(
        run_offline_baseline(&d.events, &d.frames, &d.contrast, d.manifest.geometry, mode)?
            .into_iter()
            .map(|r| Output {
                latent: r.latent,
                edi_map: r.edi_map,
                events: r.events_processed as u64,
                step1: secs(r.elapsed),
                step2: 0.0,
            })
            .collect(),
    )
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn run(a: &DeblurArgs) -> CliResult<DeblurReport> {
    let d = load(&a.manifest)?;
    let mode = a.mode.unwrap_or(d.manifest.mode);
    let outputs = match a.engine {
        Engine::Fast => run_fast(&d, mode, a.list_cap)?,
        Engine::Baseline => run_baseline(&d, mode)?,
    };
    let max_rel_edi_diff = if a.check_oracle {
        let other = match a.engine {
            Engine::Fast => run_baseline(&d, mode)?,
            Engine::Baseline => run_fast(&d, mode, a.list_cap)?,
        };
        let mut worst = 0.0f64;
        for (x, y) in outputs.iter().zip(&other) {
            worst = worst.max(x.edi_map.max_relative_diff(&y.edi_map)?);
        }
        Some(worst)
    } else {
        None
    };
    if let Some(dir) = &a.out_dir {
        create_dir(dir)?;
    }

    let mut frames = Vec::with_capacity(outputs.len());
    let (mut before, mut after) = (Vec::new(), Vec::new());
    for (i, (out, ((b, w), gt))) in outputs.iter().zip(d.frames.iter().zip(&d.ground_truth)).enumerate() {
        let (pb, pa) = match gt {
            Some(gt) => {
                let (pb, pa) = (psnr(b, gt)?, psnr(&out.latent, gt)?);
                before.push(pb);
                after.push(pa);
                (Some(psnr_for_report(pb)), Some(psnr_for_report(pa)))
            }
            None => (None, None),
        };
        let output = match &a.out_dir {
            Some(dir) => {
                let path = dir.join(format!("deblur_{i:04}.pgm"));
                write_pgm(&out.latent, &path)?;
                Some(path)
            }
            None => None,
        };
        frames.push(FrameReport {
            index: i,
            t_start_us: w.t_start,
            t_end_us: w.t_end,
            events: out.events,
            step1_time: out.step1,
            step2_time: out.step2,
            psnr_blurred: pb,
            psnr_deblurred: pa,
            laplacian_var_blurred: laplacian_variance(b)?,
            laplacian_var_deblurred: laplacian_variance(&out.latent)?,
            output,
        });
    }
    let (mean_before, mean_after) = (mean(&before), mean(&after));
    // Undefined when both means are infinite (every frame already exact).
    let psnr_gain = match (mean_before, mean_after) {
        (Some(b), Some(a)) if !(a - b).is_nan() => Some(psnr_for_report(a - b)),
        _ => None,
    };
    let mean_psnr_blurred = mean_before.map(psnr_for_report);
    let mean_psnr_deblurred = mean_after.map(psnr_for_report);
    Ok(DeblurReport {
        engine: a.engine,
        mode: mode.name(),
        c_on: d.contrast.c_on(),
        c_off: d.contrast.c_off(),
        events_total: outputs.iter().map(|o| o.events).sum(),
        frames,
        mean_psnr_blurred,
        mean_psnr_deblurred,
        psnr_gain,
        max_rel_edi_diff,
    })
}
