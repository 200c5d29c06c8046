//! Deterministic synthetic scenes, events and blurry frames.
//!
//! A scene is an analytic pattern translated horizontally at constant
//! velocity. Frames are point-sampled per pixel. Events come from tracking
//! log intensity per pixel and emitting one event per threshold crossing,
//! with crossing times found by linear interpolation in the log domain.
//! Blurry frames are the trapezoidal time average of the samples inside the
//! exposure window.
//!
//! Nothing here is randomized except [`random_events`], which is seeded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ContrastParams, Event, ExposureWindow, GrayImage, Polarity, SensorGeometry, Timestamp};

pub const LOW_INTENSITY: f64 = 0.2;
pub const HIGH_INTENSITY: f64 = 0.8;
/// Floor applied before taking the log of a sample.
pub const LOG_FLOOR: f64 = 1e-3;
pub const DEFAULT_SAMPLE_PERIOD: Timestamp = 100;
const MAX_FRAMES: i64 = 1_000_000;
/// Slack on threshold comparisons so crossings that land exactly on a
/// sample are not lost to rounding.
const CROSSING_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pattern {
    /// Dark left of `column`, bright from `column` on.
    VerticalEdge {
        column: f64,
    },
    /// `0.5 + 0.4 sin(2 pi x / wavelength)`.
    SineGrating {
        wavelength: f64,
    },
    Checkerboard {
        square: f64,
    },
}

impl Pattern {
    pub fn name(&self) -> &'static str {
        match self {
            Pattern::VerticalEdge { .. } => "vertical_edge",
            Pattern::SineGrating { .. } => "sine_grating",
            Pattern::Checkerboard { .. } => "checkerboard",
        }
    }

    /// Parses a pattern name. `feature` is the edge column, wavelength or
    /// square size in pixels; `None` picks the default.
    pub fn from_name(name: &str, feature: Option<f64>) -> Result<Self> {
        let pattern = match name {
            "vertical_edge" => Pattern::VerticalEdge {
                column: feature.unwrap_or(10.0),
            },
            "sine_grating" => Pattern::SineGrating {
                wavelength: feature.unwrap_or(32.0),
            },
            "checkerboard" => Pattern::Checkerboard {
                square: feature.unwrap_or(16.0),
            },
            other => return Err(Error::Domain(format!("unknown pattern {other:?}"))),
        };
        pattern.validate()?;
        Ok(pattern)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Pattern::VerticalEdge { column } => column.is_finite(),
            Pattern::SineGrating { wavelength } => wavelength.is_finite() && wavelength > 0.0,
            Pattern::Checkerboard { square } => square.is_finite() && square > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid {} parameter", self.name())))
        }
    }

    /// Intensity at pattern coordinate `u` (already shifted by motion).
    fn intensity(&self, u: f64, y: f64) -> f64 {
        match *self {
            Pattern::VerticalEdge { column } => {
                if u >= column {
                    HIGH_INTENSITY
                } else {
                    LOW_INTENSITY
                }
            }
            Pattern::SineGrating { wavelength } => 0.5 + 0.4 * (std::f64::consts::TAU * u / wavelength).sin(),
            Pattern::Checkerboard { square } => {
                let parity = ((u / square).floor() + (y / square).floor()).rem_euclid(2.0);
                if parity < 0.5 {
                    HIGH_INTENSITY
                } else {
                    LOW_INTENSITY
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub pattern: Pattern,
    /// Horizontal velocity, pixels per second.
    pub velocity: f64,
    pub geometry: SensorGeometry,
    /// Microseconds.
    pub duration: Timestamp,
    pub intensity_floor: f64,
    /// Reserved for noise injection; the default pipeline is noise-free.
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            pattern: Pattern::VerticalEdge { column: 10.0 },
            velocity: 200.0,
            geometry: SensorGeometry { width: 128, height: 96 },
            duration: 500_000,
            intensity_floor: 1e-3,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.pattern.validate()?;
        SensorGeometry::new(self.geometry.width, self.geometry.height)?;
        if self.duration <= 0 {
            return Err(Error::Domain(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.intensity_floor > 0.0 && self.intensity_floor <= 0.1) {
            return Err(Error::Domain(format!(
                "intensity floor must lie in (0, 0.1], got {}",
                self.intensity_floor
            )));
        }
        if !self.velocity.is_finite() {
            return Err(Error::Domain("velocity must be finite".into()));
        }
        Ok(())
    }

    /// Renders the scene at time `t` into `out` (row-major).
    pub fn render_into(&self, t: Timestamp, out: &mut Vec<f64>) {
        let (w, h) = (self.geometry.width, self.geometry.height);
        // Multiply before dividing so integer displacements stay exact.
        let shift = self.velocity * t as f64 / 1e6;
        out.clear();
        out.reserve(self.geometry.pixel_count());
        for y in 0..h {
            for x in 0..w {
                let v = self.pattern.intensity(x as f64 - shift, y as f64);
                out.push(v.max(self.intensity_floor).min(1.0));
            }
        }
    }

    pub fn render_frame(&self, t: Timestamp) -> GrayImage {
        let mut data = Vec::new();
        self.render_into(t, &mut data);
        GrayImage::new(self.geometry.width, self.geometry.height, data).expect("pattern values lie in [0, 1]")
    }
}

/// Time-ordered latent frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo {
    frames: Vec<GrayImage>,
    timestamps: Vec<Timestamp>,
}

impl LatentVideo {
    pub fn new(frames: Vec<GrayImage>, timestamps: Vec<Timestamp>) -> Result<Self> {
        if frames.len() != timestamps.len() {
            return Err(Error::Domain("frame and timestamp counts differ".into()));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("video timestamps must be strictly increasing".into()));
        }
        if let Some(first) = frames.first() {
            for f in &frames[1..] {
                first.geometry().ensure_same(f.width(), f.height())?;
            }
        }
        Ok(LatentVideo { frames, timestamps })
    }

    pub fn frames(&self) -> &[GrayImage] {
        &self.frames
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Linear interpolation in intensity. `t` must lie within the video.
    fn sample(&self, t: Timestamp) -> Vec<f64> {
        let k = self.timestamps.partition_point(|&s| s <= t);
        let hi = k.min(self.len() - 1);
        let lo = k.saturating_sub(1);
        let (t0, t1) = (self.timestamps[lo], self.timestamps[hi]);
        if t0 == t || t1 == t0 {
            return self.frames[lo].data().to_vec();
        }
        let a = (t - t0) as f64 / (t1 - t0) as f64;
        self.frames[lo]
            .data()
            .iter()
            .zip(self.frames[hi].data())
            .map(|(p, q)| p + a * (q - p))
            .collect()
    }
}

fn sample_times(duration: Timestamp, period: Timestamp) -> Result<Vec<Timestamp>> {
    if period < 1 {
        return Err(Error::Domain(format!(
            "sample period must be at least 1 us, got {period}"
        )));
    }
    if duration / period + 1 > MAX_FRAMES {
        return Err(Error::Domain(format!(
            "{} samples exceed the limit of {MAX_FRAMES}",
            duration / period + 1
        )));
    }
    let mut times: Vec<Timestamp> = (0..=duration / period).map(|k| k * period).collect();
    if *times.last().unwrap() < duration {
        times.push(duration);
    }
    Ok(times)
}

/// Samples the scene every `sample_period` microseconds over
/// `[0, duration]`; the final sample is always at `duration`.
pub fn render_scene(spec: &SceneSpec, sample_period: Timestamp) -> Result<LatentVideo> {
    spec.validate()?;
    let times = sample_times(spec.duration, sample_period)?;
    let frames = times.iter().map(|&t| spec.render_frame(t)).collect();
    LatentVideo::new(frames, times)
}

/// Per-pixel threshold-crossing event generator fed one sample at a time.
#[derive(Debug, Clone)]
pub struct EventSimulator {
    geometry: SensorGeometry,
    cp: ContrastParams,
    /// Log intensity at the last emitted event.
    r_ref: Vec<f64>,
    /// Log intensity at the previous sample.
    r_prev: Vec<f64>,
    t_prev: Timestamp,
    scratch: Vec<Event>,
}

impl EventSimulator {
    pub fn new(first: &[f64], geometry: SensorGeometry, t0: Timestamp, cp: ContrastParams) -> Result<Self> {
        if first.len() != geometry.pixel_count() {
            return Err(Error::Domain("first frame does not match geometry".into()));
        }
        let r: Vec<f64> = first.iter().map(|&v| log_intensity(v)).collect();
        Ok(EventSimulator {
            geometry,
            cp,
            r_ref: r.clone(),
            r_prev: r,
            t_prev: t0,
            scratch: Vec::new(),
        })
    }

    /// Advances to the sample `frame` at time `t`, appending the events of
    /// `(t_prev, t]` to `out` sorted by `(t, y, x)`.
    pub fn step(&mut self, frame: &[f64], t: Timestamp, out: &mut Vec<Event>) -> Result<()> {
        if frame.len() != self.geometry.pixel_count() {
            return Err(Error::Domain("frame does not match geometry".into()));
        }
        if t <= self.t_prev {
            return Err(Error::Domain(format!(
                "sample time {t} does not advance past {}",
                self.t_prev
            )));
        }
        let (t_a, t_b) = (self.t_prev, t);
        let span = (t_b - t_a) as f64;
        let (c_on, c_off) = (self.cp.c_on(), self.cp.c_off());
        let width = self.geometry.width as usize;
        self.scratch.clear();
        for (i, &v) in frame.iter().enumerate() {
            let r_a = self.r_prev[i];
            let r_b = log_intensity(v);
            let mut r_ref = self.r_ref[i];
            loop {
                let d = r_b - r_ref;
                let (level, p) = if d >= c_on - CROSSING_EPS {
                    (r_ref + c_on, Polarity::On)
                } else if d <= c_off + CROSSING_EPS {
                    (r_ref + c_off, Polarity::Off)
                } else {
                    break;
                };
                let frac = if r_b != r_a {
                    ((level - r_a) / (r_b - r_a)).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                let te = ((t_a as f64 + frac * span).round() as Timestamp).clamp(t_a + 1, t_b);
                self.scratch
                    .push(Event::new(te, (i % width) as u16, (i / width) as u16, p));
                r_ref = level;
            }
            self.r_ref[i] = r_ref;
            self.r_prev[i] = r_b;
        }
        // Stable: a pixel's own events keep their emission order.
        self.scratch.sort_by_key(|e| (e.t, e.y, e.x));
        out.extend_from_slice(&self.scratch);
        self.t_prev = t;
        Ok(())
    }
}

#[inline]
fn log_intensity(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

pub fn events_from_video(video: &LatentVideo, cp: &ContrastParams) -> Result<Vec<Event>> {
    if video.len() < 2 {
        return Err(Error::Domain("event generation needs at least two frames".into()));
    }
    let first = &video.frames()[0];
    let geom = first.geometry();
    let mut sim = EventSimulator::new(first.data(), geom, video.timestamps()[0], *cp)?;
    let mut out = Vec::new();
    for (f, &t) in video.frames()[1..].iter().zip(&video.timestamps()[1..]) {
        geom.ensure_same(f.width(), f.height())?;
        sim.step(f.data(), t, &mut out)?;
    }
    Ok(out)
}

/// Trapezoidal time average of the video over the window; window endpoints
/// are linearly interpolated between samples.
pub fn blur_from_video(video: &LatentVideo, window: &ExposureWindow) -> Result<GrayImage> {
    let ts = video.timestamps();
    if video.is_empty() || ts[0] > window.t_start || *ts.last().unwrap() < window.t_end {
        return Err(Error::Domain(format!(
            "video does not cover window [{}, {}]",
            window.t_start, window.t_end
        )));
    }
    let first = &video.frames()[0];
    let mut acc = vec![0.0; first.data().len()];
    let mut prev_t = window.t_start;
    let mut prev = video.sample(window.t_start);
    let lo = ts.partition_point(|&t| t <= window.t_start);
    let hi = ts.partition_point(|&t| t < window.t_end);
    let interior = (lo..hi).map(|k| (ts[k], video.frames()[k].data().to_vec()));
    for (t, cur) in interior.chain(std::iter::once((window.t_end, video.sample(window.t_end)))) {
        let dt = (t - prev_t) as f64;
        for ((a, p), c) in acc.iter_mut().zip(&prev).zip(&cur) {
            *a += 0.5 * (p + c) * dt;
        }
        prev_t = t;
        prev = cur;
    }
    let total = window.duration() as f64;
    GrayImage::from_clamped(first.width(), first.height(), acc.into_iter().map(|a| a / total))
}

/// A complete synthetic recording.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub geometry: SensorGeometry,
    pub contrast: ContrastParams,
    pub events: Vec<Event>,
    pub frames: Vec<(GrayImage, ExposureWindow)>,
    /// Sharp frame at each window's `t_start`.
    pub ground_truth: Vec<GrayImage>,
}

/// Frames at a uniform cadence starting at 0, each exposed for
/// `exposure_fraction / frame_rate` seconds; events cover the whole scene
/// duration. Rendering is streamed, so the full latent video is never held
/// in memory.
pub fn make_dataset(
    spec: &SceneSpec,
    cp: &ContrastParams,
    frame_rate: f64,
    exposure_fraction: f64,
    sample_period: Timestamp,
) -> Result<Dataset> {
    spec.validate()?;
    if !(frame_rate.is_finite() && frame_rate >= 1.0) {
        return Err(Error::Domain(format!(
            "frame rate must be at least 1 fps, got {frame_rate}"
        )));
    }
    if !(exposure_fraction > 0.0 && exposure_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "exposure fraction must lie in (0, 1], got {exposure_fraction}"
        )));
    }
    let frame_period = 1e6 / frame_rate;
    let exposure = ((exposure_fraction * frame_period).round() as Timestamp).max(1);
    let mut windows = Vec::new();
    let mut i = 0i64;
    loop {
        let t_start = (i as f64 * frame_period).round() as Timestamp;
        if t_start + exposure > spec.duration {
            break;
        }
        let next = ((i + 1) as f64 * frame_period).round() as Timestamp;
        windows.push(ExposureWindow::new(t_start, (t_start + exposure).min(next))?);
        i += 1;
    }
    if windows.is_empty() {
        return Err(Error::Domain("scene duration is shorter than one exposure".into()));
    }

    let mut times = sample_times(spec.duration, sample_period)?;
    times.extend(windows.iter().flat_map(|w| [w.t_start, w.t_end]));
    times.sort_unstable();
    times.dedup();

    let geom = spec.geometry;
    let n = geom.pixel_count();
    let mut cur = Vec::with_capacity(n);
    spec.render_into(times[0], &mut cur);
    let mut sim = EventSimulator::new(&cur, geom, times[0], *cp)?;
    let mut prev = cur.clone();
    let mut prev_t = times[0];

    let mut events = Vec::new();
    let mut frames = Vec::with_capacity(windows.len());
    let mut ground_truth = Vec::with_capacity(windows.len());
    let mut blur = vec![0.0; n];
    let mut w_idx = 0;
    if windows[0].t_start == times[0] {
        ground_truth.push(GrayImage::new(geom.width, geom.height, cur.clone())?);
    }

    for &t in &times[1..] {
        spec.render_into(t, &mut cur);
        sim.step(&cur, t, &mut events)?;
        if let Some(w) = windows.get(w_idx) {
            if prev_t >= w.t_start && t <= w.t_end {
                let dt = (t - prev_t) as f64;
                for ((a, p), c) in blur.iter_mut().zip(&prev).zip(&cur) {
                    *a += 0.5 * (p + c) * dt;
                }
            }
            if t == w.t_end {
                let total = w.duration() as f64;
                frames.push((
                    GrayImage::from_clamped(geom.width, geom.height, blur.iter().map(|a| a / total))?,
                    *w,
                ));
                blur.iter_mut().for_each(|a| *a = 0.0);
                w_idx += 1;
            }
        }
        if let Some(w) = windows.get(w_idx) {
            if t == w.t_start {
                ground_truth.push(GrayImage::new(geom.width, geom.height, cur.clone())?);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
        prev_t = t;
    }
    debug_assert_eq!(frames.len(), windows.len());
    debug_assert_eq!(ground_truth.len(), windows.len());
    Ok(Dataset {
        geometry: geom,
        contrast: *cp,
        events,
        frames,
        ground_truth,
    })
}

/// `n` events uniformly spread over pixels and over `(t_start, t_end]`,
/// random polarity, sorted by time.
pub fn random_events(geom: SensorGeometry, n: usize, t_start: Timestamp, t_end: Timestamp, seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            let p = if rng.gen::<bool>() { Polarity::On } else { Polarity::Off };
            Event::new(
                rng.gen_range(t_start + 1..=t_end),
                rng.gen_range(0..geom.width) as u16,
                rng.gen_range(0..geom.height) as u16,
                p,
            )
        })
        .collect();
    events.sort_by_key(|e| e.t);
    events
}
