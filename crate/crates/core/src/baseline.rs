//! Frame-wise reference implementation of the double integral.
//!
//! Every event re-renders one latent pixel and then adds the whole latent
//! frame into the accumulator, which costs `O(N_ev * N_x)`. It is kept
//! deliberately naive: it is the oracle the streaming engine is checked
//! against and the slow side of the speedup benchmark.

use crate::error::{Error, Result};
use crate::model::{
    check_sorted, clamp_unit, ContrastParams, EdiMap, Event, ExposureWindow, GrayImage, IntegrationMode,
    SensorGeometry, Timestamp,
};

/// Lower bound applied to every EDI value before division.
pub const EDI_FLOOR: f64 = 1e-12;

/// Keeps a computed EDI value inside `[EDI_FLOOR, f64::MAX]` so the map stays
/// finite and positive when the exponentials under- or overflow.
#[inline]
pub(crate) fn finish_edi(v: f64) -> f64 {
    if v.is_nan() {
        EDI_FLOOR
    } else {
        v.clamp(EDI_FLOOR, f64::MAX)
    }
}

/// Dense per-pixel state of the frame-wise integrator.
#[derive(Debug, Clone)]
pub struct LatentState {
    geometry: SensorGeometry,
    /// Cumulative signed log change, contrast already applied.
    s: Vec<f64>,
    /// `exp(s)`, the latent frame relative to the reference time.
    latent: Vec<f64>,
    acc: Vec<f64>,
    weight_total: f64,
}

impl LatentState {
    pub fn new(geometry: SensorGeometry) -> Self {
        let n = geometry.pixel_count();
        LatentState {
            geometry,
            s: vec![0.0; n],
            latent: vec![1.0; n],
            acc: vec![0.0; n],
            weight_total: 0.0,
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn log_change(&self) -> &[f64] {
        &self.s
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.acc
    }

    pub fn weight_total(&self) -> f64 {
        self.weight_total
    }

    #[inline]
    fn apply(&mut self, e: &Event, cp: &ContrastParams) {
        let i = self.geometry.index(e.x, e.y);
        self.s[i] += cp.signed(e.p);
        self.latent[i] = self.s[i].exp();
    }

    /// Adds the whole latent frame, weighted by `w`.
    fn add_frame(&mut self, w: f64) {
        if w <= 0.0 {
            return;
        }
        for (a, v) in self.acc.iter_mut().zip(&self.latent) {
            *a += v * w;
        }
        self.weight_total += w;
    }

    fn into_map(self) -> Result<EdiMap> {
        let total = self.weight_total;
        let e = if total > 0.0 {
            self.acc.iter().map(|a| finish_edi(a / total)).collect()
        } else {
            vec![1.0; self.geometry.pixel_count()]
        };
        EdiMap::new(self.geometry.width, self.geometry.height, e)
    }
}

pub(crate) fn check_window_events(events: &[Event], window: &ExposureWindow, geom: &SensorGeometry) -> Result<()> {
    check_sorted(events)?;
    for e in events {
        if !window.contains(e.t) {
            return Err(Error::OutsideWindow {
                t: e.t,
                t_start: window.t_start,
                t_end: window.t_end,
            });
        }
        geom.check_event(e)?;
    }
    Ok(())
}

/// Computes the EDI map with the reference time fixed at `window.t_start`.
///
/// `events` must be sorted and lie in `(t_start, t_end]`.
pub fn compute_edi_baseline(
    events: &[Event],
    window: &ExposureWindow,
    cp: &ContrastParams,
    geom: SensorGeometry,
    mode: IntegrationMode,
) -> Result<EdiMap> {
    check_window_events(events, window, &geom)?;
    let mut state = LatentState::new(geom);
    match mode {
        IntegrationMode::TimeWeighted => {
            // Segments open at t_start and at each distinct event time; a
            // segment's value includes every event at its opening boundary.
            let mut prev = window.t_start;
            let mut i = 0;
            while i < events.len() {
                let t = events[i].t;
                state.add_frame((t - prev) as f64);
                while i < events.len() && events[i].t == t {
                    state.apply(&events[i], cp);
                    i += 1;
                }
                prev = t;
            }
            state.add_frame((window.t_end - prev) as f64);
        }
        IntegrationMode::CountWeighted => {
            for e in events {
                state.apply(e, cp);
                state.add_frame(1.0);
            }
        }
    }
    state.into_map()
}

/// Unclamped latent frame `B / max(E, EDI_FLOOR)`.
pub fn latent_from_map(b: &GrayImage, e: &EdiMap) -> Result<Vec<f64>> {
    e.geometry().ensure_same(b.width(), b.height())?;
    Ok(b.data()
        .iter()
        .zip(e.values())
        .map(|(b, e)| b / e.max(EDI_FLOOR))
        .collect())
}

pub fn deblur_with_map(b: &GrayImage, e: &EdiMap) -> Result<GrayImage> {
    let raw = latent_from_map(b, e)?;
    GrayImage::from_clamped(b.width(), b.height(), raw)
}

/// Propagates an unclamped latent frame at `t_ref` forward to each target
/// time. Returns unclamped frames, one per target.
pub fn reconstruct_latent_raw(
    l0: &[f64],
    geom: SensorGeometry,
    t_ref: Timestamp,
    events: &[Event],
    cp: &ContrastParams,
    targets: &[Timestamp],
) -> Result<Vec<Vec<f64>>> {
    if l0.len() != geom.pixel_count() {
        return Err(Error::Domain(format!(
            "latent frame length {} does not match {}x{}",
            l0.len(),
            geom.width,
            geom.height
        )));
    }
    check_sorted(events)?;
    let mut prev_target = t_ref;
    for &t in targets {
        if t < t_ref {
            return Err(Error::Range { t, t_ref });
        }
        if t < prev_target {
            return Err(Error::Domain(format!(
                "target timestamps must be nondecreasing ({t} after {prev_target})"
            )));
        }
        prev_target = t;
    }

    let mut s = vec![0.0f64; geom.pixel_count()];
    let start = events.partition_point(|e| e.t <= t_ref);
    let mut cursor = start;
    let mut out = Vec::with_capacity(targets.len());
    for &target in targets {
        while cursor < events.len() && events[cursor].t <= target {
            let e = &events[cursor];
            geom.check_event(e)?;
            s[geom.index(e.x, e.y)] += cp.signed(e.p);
            cursor += 1;
        }
        out.push(l0.iter().zip(&s).map(|(l, s)| l * s.exp()).collect());
    }
    Ok(out)
}

pub fn reconstruct_latent(
    l0: &GrayImage,
    t_ref: Timestamp,
    events: &[Event],
    cp: &ContrastParams,
    targets: &[Timestamp],
) -> Result<Vec<GrayImage>> {
    let frames = reconstruct_latent_raw(l0.data(), l0.geometry(), t_ref, events, cp, targets)?;
    frames
        .into_iter()
        .map(|f| GrayImage::new(l0.width(), l0.height(), f.into_iter().map(clamp_unit).collect()))
        .collect()
}

/// One deblurred frame from the reference engine.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub latent: GrayImage,
    pub edi_map: EdiMap,
    pub events_processed: usize,
    pub elapsed: std::time::Duration,
}

/// Runs the reference engine over a recorded dataset, one result per frame.
pub fn run_offline_baseline(
    events: &[Event],
    frames: &[(GrayImage, ExposureWindow)],
    cp: &ContrastParams,
    geom: SensorGeometry,
    mode: IntegrationMode,
) -> Result<Vec<BaselineResult>> {
    check_sorted(events)?;
    crate::fast::check_frames(frames, geom)?;
    frames
        .iter()
        .map(|(b, w)| {
            let lo = events.partition_point(|e| e.t <= w.t_start);
            let hi = events.partition_point(|e| e.t <= w.t_end);
            let slice = &events[lo..hi];
            let started = std::time::Instant::now();
            let edi_map = compute_edi_baseline(slice, w, cp, geom, mode)?;
            let latent = deblur_with_map(b, &edi_map)?;
            Ok(BaselineResult {
                latent,
                edi_map,
                events_processed: slice.len(),
                elapsed: started.elapsed(),
            })
        })
        .collect()
}
