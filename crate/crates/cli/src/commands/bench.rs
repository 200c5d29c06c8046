use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, ValueEnum};
use fastedi::baseline::run_offline_baseline;
use fastedi::metrics::{mean_and_rel_std, record_throughput, FrameTiming, SpeedupReport, ThroughputReport};
use fastedi::synth::random_events;
use fastedi::{
    symmetric_contrast, ContrastParams, EdiAccumulator, Event, ExposureWindow, GrayImage, IntegrationMode,
    SensorGeometry,
};
use serde::Serialize;

use crate::report::{load, median, parse_mode};
use crate::{CliError, CliResult};

/// Figures published for the original implementation on desktop hardware.
/// Reported next to our measurements, never gated on.
pub const REFERENCE_EV_PER_SEC: f64 = 13e6;
pub const REFERENCE_SPEEDUP: f64 = 260.0;

/// Repeats whose relative spread exceeds this are flagged unstable.
pub const STABILITY_REL_STD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchEngine {
    Fast,
    Baseline,
    Both,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset to replay; a uniform random stream is generated when absent.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BenchEngine::Both)]
    pub engine: BenchEngine,
    #[arg(long, default_value_t = 3)]
    pub repeat: usize,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<IntegrationMode>,
    #[arg(long)]
    pub list_cap: Option<usize>,
    /// Synthetic workload: sensor width.
    #[arg(long, default_value_t = 346)]
    pub width: u32,
    #[arg(long, default_value_t = 260)]
    pub height: u32,
    #[arg(long, default_value_t = 2_000_000)]
    pub events: usize,
    /// Synthetic workload: exposure length, microseconds.
    #[arg(long, default_value_t = 1_000_000)]
    pub duration_us: i64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.26)]
    pub contrast: f64,
    #[arg(long, default_value_t = 1e6)]
    pub min_ev_per_sec: f64,
    #[arg(long, default_value_t = 20.0)]
    pub min_speedup: f64,
    /// The speedup is measured with both engines on the first this-many
    /// in-exposure events, since the reference engine is quadratic in cost.
    #[arg(long, default_value_t = 100_000)]
    pub baseline_max_events: usize,
}

/// Events, exposures and thresholds for one benchmark run.
#[derive(Debug, Clone)]
pub struct Workload {
    pub geometry: SensorGeometry,
    pub contrast: ContrastParams,
    pub events: Vec<Event>,
    pub frames: Vec<(GrayImage, ExposureWindow)>,
}

impl Workload {
    /// One exposure over `(0, duration_us]` holding `n` uniform events.
    pub fn random(
        geometry: SensorGeometry,
        n: usize,
        duration_us: i64,
        seed: u64,
        contrast: ContrastParams,
    ) -> CliResult<Self> {
        let window = ExposureWindow::new(0, duration_us)?;
        Ok(Workload {
            geometry,
            contrast,
            events: random_events(geometry, n, 0, duration_us, seed),
            frames: vec![(GrayImage::filled(geometry, 0.5)?, window)],
        })
    }

    pub fn events_in_exposures(&self) -> u64 {
        self.frames
            .iter()
            .map(|(_, w)| {
                let lo = self.events.partition_point(|e| e.t <= w.t_start);
                let hi = self.events.partition_point(|e| e.t <= w.t_end);
                (hi - lo) as u64
            })
            .sum()
    }

    /// The first `max_events` in-exposure events and the frames they touch.
    pub fn prefix(&self, max_events: usize) -> Workload {
        let mut events = Vec::new();
        let mut frames = Vec::new();
        for (b, w) in &self.frames {
            if events.len() >= max_events {
                break;
            }
            let lo = self.events.partition_point(|e| e.t <= w.t_start);
            let hi = self.events.partition_point(|e| e.t <= w.t_end);
            let take = (hi - lo).min(max_events - events.len());
            events.extend_from_slice(&self.events[lo..lo + take]);
            frames.push((b.clone(), *w));
        }
        Workload {
            geometry: self.geometry,
            contrast: self.contrast,
            events,
            frames,
        }
    }
}

/// Times the fast engine frame by frame.
pub fn time_fast(w: &Workload, mode: IntegrationMode, list_cap: Option<usize>) -> CliResult<Vec<FrameTiming>> {
    let mut acc = EdiAccumulator::new(w.geometry, mode);
    if let Some(cap) = list_cap {
        acc = acc.with_list_cap(cap)?;
    }
    let mut out = Vec::with_capacity(w.frames.len());
    for (b, win) in &w.frames {
        let lo = w.events.partition_point(|e| e.t <= win.t_start);
        let hi = w.events.partition_point(|e| e.t <= win.t_end);
        acc.begin_exposure(win.t_start)?;
        acc.push_events(&w.events[lo..hi], &w.contrast)?;
        let r = acc.end_exposure(win.t_end, b)?;
        out.push(FrameTiming {
            events: r.events_processed,
            step1: r.step1_time,
            step2: r.step2_time,
        });
    }
    Ok(out)
}

/// Times the reference engine over all frames: (events, elapsed).
pub fn time_baseline(w: &Workload, mode: IntegrationMode) -> CliResult<(u64, Duration)> {
    let started = Instant::now();
    let results = run_offline_baseline(&w.events, &w.frames, &w.contrast, w.geometry, mode)?;
    let elapsed = started.elapsed();
    Ok((results.iter().map(|r| r.events_processed as u64).sum(), elapsed))
}

fn rate(events: u64, secs: f64) -> f64 {
    if events == 0 || secs <= 0.0 {
        0.0
    } else {
        events as f64 / secs
    }
}

#[derive(Debug, Serialize)]
pub struct WorkloadInfo {
    pub source: String,
    pub geometry: SensorGeometry,
    pub events: u64,
    pub frames: usize,
}

#[derive(Debug, Serialize)]
pub struct FastSection {
    /// Median over repeats.
    pub ev_per_sec: f64,
    pub rel_std: f64,
    pub repeats_ev_per_sec: Vec<f64>,
    /// Detail of the median repeat.
    pub throughput: ThroughputReport,
}

#[derive(Debug, Serialize)]
pub struct BaselineSection {
    pub events: u64,
    pub ev_per_sec: f64,
    pub rel_std: f64,
    pub repeats_ev_per_sec: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub workload: WorkloadInfo,
    pub mode: &'static str,
    pub repeat: usize,
    pub fast: Option<FastSection>,
    pub baseline: Option<BaselineSection>,
    /// Both engines on the same prefix of the workload.
    pub speedup: Option<SpeedupReport>,
    pub reference_ev_per_sec: f64,
    pub reference_speedup: f64,
    pub min_ev_per_sec: f64,
    pub min_speedup: f64,
    pub stable: bool,
    pub passed: bool,
    pub failures: Vec<String>,
}

fn fast_rates(
    w: &Workload,
    mode: IntegrationMode,
    cap: Option<usize>,
    repeat: usize,
) -> CliResult<(Vec<f64>, Vec<ThroughputReport>)> {
    let mut rates = Vec::with_capacity(repeat);
    let mut reports = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let timings = time_fast(w, mode, cap)?;
        let r = record_throughput(&timings, 1, 0)?;
        rates.push(r.ev_per_sec);
        reports.push(r);
    }
    Ok((rates, reports))
}

fn baseline_rates(w: &Workload, mode: IntegrationMode, repeat: usize) -> CliResult<(u64, Vec<f64>)> {
    let mut events = 0;
    let mut rates = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let (n, elapsed) = time_baseline(w, mode)?;
        events = n;
        rates.push(rate(n, elapsed.as_secs_f64()));
    }
    Ok((events, rates))
}

pub fn run(a: &BenchArgs) -> CliResult<serde_json::Value> {
    if a.repeat == 0 {
        return Err(CliError::Usage("--repeat must be at least 1".into()));
    }
    let (workload, source, manifest_mode) = match &a.manifest {
        Some(path) => {
            let d = load(path)?;
            let w = Workload {
                geometry: d.manifest.geometry,
                contrast: d.contrast,
                events: d.events,
                frames: d.frames,
            };
            (w, path.display().to_string(), d.manifest.mode)
        }
        None => {
            let geom = SensorGeometry::new(a.width, a.height).map_err(|e| CliError::Usage(e.to_string()))?;
            let cp = symmetric_contrast(a.contrast).map_err(|e| CliError::Usage(e.to_string()))?;
            if a.duration_us <= 0 {
                return Err(CliError::Usage("--duration-us must be positive".into()));
            }
            let w = Workload::random(geom, a.events, a.duration_us, a.seed, cp)?;
            (w, "random".to_string(), IntegrationMode::default())
        }
    };
    let mode = a.mode.unwrap_or(manifest_mode);
    let run_fast = a.engine != BenchEngine::Baseline;
    let run_base = a.engine != BenchEngine::Fast;

    let mut failures = Vec::new();
    let mut stable = true;

    let fast = if run_fast {
        let (rates, mut reports) = fast_rates(&workload, mode, a.list_cap, a.repeat)?;
        let med = median(&rates);
        let (_, rel_std) = mean_and_rel_std(&rates);
        stable &= rel_std < STABILITY_REL_STD;
        let pick = rates.iter().position(|r| *r == med).unwrap_or(0);
        if med < a.min_ev_per_sec {
            failures.push(format!("fast engine {med:.3e} ev/s is below {:.3e}", a.min_ev_per_sec));
        }
        Some(FastSection {
            ev_per_sec: med,
            rel_std,
            repeats_ev_per_sec: rates,
            throughput: reports.swap_remove(pick),
        })
    } else {
        None
    };

    let prefix = workload.prefix(a.baseline_max_events);
    let baseline = if run_base {
        let (events, rates) = baseline_rates(&prefix, mode, a.repeat)?;
        let (_, rel_std) = mean_and_rel_std(&rates);
        stable &= rel_std < STABILITY_REL_STD;
        Some(BaselineSection {
            events,
            ev_per_sec: median(&rates),
            rel_std,
            repeats_ev_per_sec: rates,
        })
    } else {
        None
    };

    let speedup = match &baseline {
        Some(b) if run_fast => {
            let (rates, _) = fast_rates(&prefix, mode, a.list_cap, a.repeat)?;
            let s = SpeedupReport::new(median(&rates), b.ev_per_sec);
            if s.speedup < a.min_speedup {
                failures.push(format!("speedup {:.1}x is below {:.1}x", s.speedup, a.min_speedup));
            }
            Some(s)
        }
        _ => None,
    };

    let report = BenchReport {
        workload: WorkloadInfo {
            source,
            geometry: workload.geometry,
            events: workload.events_in_exposures(),
            frames: workload.frames.len(),
        },
        mode: mode.name(),
        repeat: a.repeat,
        fast,
        baseline,
        speedup,
        reference_ev_per_sec: REFERENCE_EV_PER_SEC,
        reference_speedup: REFERENCE_SPEEDUP,
        min_ev_per_sec: a.min_ev_per_sec,
        min_speedup: a.min_speedup,
        stable,
        passed: failures.is_empty(),
        failures: failures.clone(),
    };
    let value = serde_json::to_value(&report).map_err(|e| CliError::Usage(e.to_string()))?;
    if failures.is_empty() {
        Ok(value)
    } else {
        Err(CliError::Threshold {
            message: failures.join("; "),
            report: value,
        })
    }
}
