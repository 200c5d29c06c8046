//! Image quality against ground truth, and throughput accounting.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GrayImage;

/// Stand-in for an infinite PSNR in serialized reports.
pub const PSNR_INFINITE_SENTINEL: f64 = 999.0;

/// PSNR in dB with peak 1.0. Identical images give `f64::INFINITY`; use
/// [`psnr_for_report`] when the value has to be serialized.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    a.geometry().ensure_same(b.width(), b.height())?;
    let n = a.data().len() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

pub fn psnr_for_report(db: f64) -> f64 {
    if db.is_finite() {
        db
    } else {
        PSNR_INFINITE_SENTINEL
    }
}

/// Population variance of the 4-neighbour Laplacian over interior pixels.
pub fn laplacian_variance(img: &GrayImage) -> Result<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w < 3 || h < 3 {
        return Err(Error::Domain(format!(
            "laplacian needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let d = img.data();
    let mut responses = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            responses.push(d[i - 1] + d[i + 1] + d[i - w] + d[i + w] - 4.0 * d[i]);
        }
    }
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    Ok(responses.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n)
}

/// Timings of one finalized frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameTiming {
    pub events: u64,
    pub step1: Duration,
    pub step2: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub events_total: u64,
    /// Seconds spent in push and finalize calls.
    pub wall_time: f64,
    pub ev_per_sec: f64,
    pub per_frame_step1_time: Vec<f64>,
    pub per_frame_step2_time: Vec<f64>,
    pub mean_step1_time: f64,
    pub mean_step2_time: f64,
    pub peak_queue_depth: u64,
}

/// Aggregates per-frame timings. The first `warmup` frames are left out of
/// every total; they are still required to exist.
pub fn record_throughput(frames: &[FrameTiming], warmup: usize, peak_queue_depth: u64) -> Result<ThroughputReport> {
    if frames.is_empty() {
        return Err(Error::Domain("no completed frames to report".into()));
    }
    let counted = &frames[warmup.min(frames.len() - 1)..];
    let events_total: u64 = counted.iter().map(|f| f.events).sum();
    let step1: Vec<f64> = counted.iter().map(|f| f.step1.as_secs_f64()).collect();
    let step2: Vec<f64> = counted.iter().map(|f| f.step2.as_secs_f64()).collect();
    let wall_time: f64 = step1.iter().sum::<f64>() + step2.iter().sum::<f64>();
    let ev_per_sec = if events_total == 0 || wall_time <= 0.0 {
        0.0
    } else {
        events_total as f64 / wall_time
    };
    let n = counted.len() as f64;
    Ok(ThroughputReport {
        events_total,
        wall_time,
        ev_per_sec,
        mean_step1_time: step1.iter().sum::<f64>() / n,
        mean_step2_time: step2.iter().sum::<f64>() / n,
        per_frame_step1_time: step1,
        per_frame_step2_time: step2,
        peak_queue_depth,
    })
}

/// Fast versus reference engine on the same input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub fast_ev_per_sec: f64,
    pub baseline_ev_per_sec: f64,
    pub speedup: f64,
}

impl SpeedupReport {
    pub fn new(fast_ev_per_sec: f64, baseline_ev_per_sec: f64) -> Self {
        let speedup = if baseline_ev_per_sec > 0.0 {
            fast_ev_per_sec / baseline_ev_per_sec
        } else {
            0.0
        };
        SpeedupReport {
            fast_ev_per_sec,
            baseline_ev_per_sec,
            speedup,
        }
    }
}

/// Mean and relative spread of repeated measurements.
pub fn mean_and_rel_std(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let rel = if mean != 0.0 { var.sqrt() / mean.abs() } else { 0.0 };
    (mean, rel)
}
