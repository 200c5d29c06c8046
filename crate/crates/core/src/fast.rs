//! Streaming double integral with per-pixel lists.
//!
//! Work is split in two steps. During the exposure every event updates the
//! cumulative log change of its own pixel, exponentiates it, bumps the global
//! counter and appends `(exp value, marker)` to that pixel's list. Nothing
//! else is touched, so step 1 is `O(1)` per event.
//!
//! When the exposure closes, each touched pixel's list is folded into the
//! outer integral by multiplying every value with the distance to the next
//! marker. Pixels that saw no event keep `E = 1`. Step 2 is therefore
//! `O(N_ev + N_x)` instead of the frame-wise `O(N_ev * N_x)`.
//!
//! The marker is the event timestamp in [`IntegrationMode::TimeWeighted`] and
//! the global event ordinal in [`IntegrationMode::CountWeighted`]. Results
//! match [`crate::baseline::compute_edi_baseline`] up to summation order.
//!
//! One accumulator is one logical stream. It is `Send` but all calls on a
//! given accumulator must come from a single thread at a time.

use std::time::{Duration, Instant};

use crate::baseline::{deblur_with_map, finish_edi};
use crate::error::{Error, Result};
use crate::model::{
    check_sorted, ContrastParams, EdiMap, Event, ExposureWindow, GrayImage, IntegrationMode, SensorGeometry, Timestamp,
};

/// One list entry: the latent pixel value right after an event, and where
/// on the integration axis that value starts to hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelEntry {
    pub value: f64,
    pub marker: i64,
}

/// Output of one finalized exposure.
#[derive(Debug, Clone)]
pub struct DeblurResult {
    pub latent: GrayImage,
    pub edi_map: EdiMap,
    pub window: ExposureWindow,
    pub events_processed: u64,
    pub step1_time: Duration,
    pub step2_time: Duration,
    /// Multiply-add terms evaluated in step 2: one per list entry plus the
    /// leading term of every touched pixel.
    pub finalize_terms: u64,
}

/// Session counters; all monotone over the accumulator's lifetime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub events_in: u64,
    /// Events at or before the open window's `t_start`.
    pub events_dropped_pre_exposure: u64,
    /// Events that arrived while no exposure was open (offline driver only).
    pub events_dropped_idle: u64,
    pub frames_emitted: u64,
    /// Largest list payload held at a finalize, in bytes.
    pub peak_list_bytes: u64,
}

#[derive(Debug)]
pub struct EdiAccumulator {
    geometry: SensorGeometry,
    mode: IntegrationMode,
    /// Cumulative signed log change per pixel, contrast already folded in.
    s: Vec<f64>,
    lists: Vec<Vec<PixelEntry>>,
    /// Weighted contributions already folded out of a capped list.
    settled: Vec<f64>,
    touched: Vec<u32>,
    global_counter: u64,
    live_entries: u64,
    window_start: Option<Timestamp>,
    last_t: Option<Timestamp>,
    list_cap: Option<usize>,
    step1_time: Duration,
    stats: StreamStats,
}

impl EdiAccumulator {
    pub fn new(geometry: SensorGeometry, mode: IntegrationMode) -> Self {
        let n = geometry.pixel_count();
        EdiAccumulator {
            geometry,
            mode,
            s: vec![0.0; n],
            lists: vec![Vec::new(); n],
            settled: Vec::new(),
            touched: Vec::new(),
            global_counter: 0,
            live_entries: 0,
            window_start: None,
            last_t: None,
            list_cap: None,
            step1_time: Duration::ZERO,
            stats: StreamStats::default(),
        }
    }

    /// Caps every pixel list at `cap` entries. Further events on a full
    /// pixel replace the last entry, with its contribution moved into a
    /// per-pixel running sum, so memory stays bounded on hot pixels.
    pub fn with_list_cap(mut self, cap: usize) -> Result<Self> {
        if cap < 2 {
            return Err(Error::Config(format!("list cap must be at least 2, got {cap}")));
        }
        self.list_cap = Some(cap);
        self.settled = vec![0.0; self.geometry.pixel_count()];
        Ok(self)
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn mode(&self) -> IntegrationMode {
        self.mode
    }

    pub fn is_exposing(&self) -> bool {
        self.window_start.is_some()
    }

    pub fn global_counter(&self) -> u64 {
        self.global_counter
    }

    pub fn stats(&self) -> StreamStats {
        self.stats
    }

    pub fn touched_pixels(&self) -> usize {
        self.touched.len()
    }

    pub fn list(&self, x: u16, y: u16) -> &[PixelEntry] {
        &self.lists[self.geometry.index(x, y)]
    }

    pub fn list_capacity(&self, x: u16, y: u16) -> usize {
        self.lists[self.geometry.index(x, y)].capacity()
    }

    /// Sum of all list lengths.
    pub fn total_entries(&self) -> u64 {
        self.live_entries
    }

    pub fn log_change(&self, x: u16, y: u16) -> f64 {
        self.s[self.geometry.index(x, y)]
    }

    pub fn begin_exposure(&mut self, t_start: Timestamp) -> Result<()> {
        if self.window_start.is_some() {
            return Err(Error::State("exposure already open"));
        }
        self.reset_touched();
        self.window_start = Some(t_start);
        self.last_t = None;
        self.step1_time = Duration::ZERO;
        Ok(())
    }

    /// Step 1 for a single event. Returns whether the event was accepted
    /// into the open window; events at or before `t_start` are dropped.
    #[inline]
    pub fn push_event(&mut self, e: Event, cp: &ContrastParams) -> Result<bool> {
        let t_start = self.window_start.ok_or(Error::State("no open exposure"))?;
        if let Some(prev) = self.last_t {
            if e.t < prev {
                return Err(Error::Ordering {
                    index: self.stats.events_in as usize,
                    prev,
                    t: e.t,
                });
            }
        }
        self.geometry.check_event(&e)?;
        self.last_t = Some(e.t);
        self.stats.events_in += 1;
        if e.t <= t_start {
            self.stats.events_dropped_pre_exposure += 1;
            return Ok(false);
        }

        let i = self.geometry.index(e.x, e.y);
        let s = self.s[i] + cp.signed(e.p);
        self.s[i] = s;
        self.global_counter += 1;
        let entry = PixelEntry {
            value: s.exp(),
            marker: match self.mode {
                IntegrationMode::TimeWeighted => e.t,
                IntegrationMode::CountWeighted => self.global_counter as i64,
            },
        };

        let list = &mut self.lists[i];
        match self.list_cap {
            Some(cap) if list.len() >= cap => {
                // Overwriting the last entry stretches the previous entry's
                // span up to the new marker; settle the difference so the
                // folded total is unchanged.
                let n = list.len();
                let (prev, last) = (list[n - 2], list[n - 1]);
                let gap = (entry.marker - last.marker) as f64;
                // An overflowed `prev` already makes the folded total
                // infinite; skip the correction rather than form inf - inf.
                if gap > 0.0 && prev.value.is_finite() {
                    self.settled[i] += (last.value - prev.value) * gap;
                }
                list[n - 1] = entry;
            }
            _ => {
                if list.is_empty() {
                    self.touched.push(i as u32);
                }
                list.push(entry);
                self.live_entries += 1;
            }
        }
        Ok(true)
    }

    /// Pushes a batch and charges the elapsed time to step 1. Returns the
    /// number of accepted events.
    pub fn push_events(&mut self, events: &[Event], cp: &ContrastParams) -> Result<u64> {
        let started = Instant::now();
        let mut accepted = 0;
        let mut outcome = Ok(());
        for &e in events {
            match self.push_event(e, cp) {
                Ok(true) => accepted += 1,
                Ok(false) => {}
                Err(err) => {
                    outcome = Err(err);
                    break;
                }
            }
        }
        self.step1_time += started.elapsed();
        outcome.map(|_| accepted)
    }

    /// Pushes `batch` on the calling thread and reports events per second.
    /// An empty batch reports 0.
    pub fn throughput_probe(&mut self, batch: &[Event], cp: &ContrastParams) -> Result<f64> {
        if !self.is_exposing() {
            return Err(Error::State("no open exposure"));
        }
        if batch.is_empty() {
            return Ok(0.0);
        }
        let started = Instant::now();
        for &e in batch {
            self.push_event(e, cp)?;
        }
        let secs = started.elapsed().as_secs_f64();
        self.step1_time += started.elapsed();
        Ok(batch.len() as f64 / secs.max(1e-9))
    }

    /// Step 2: folds the lists into the EDI map, divides the blurry frame
    /// and returns the accumulator to idle.
    pub fn end_exposure(&mut self, t_end: Timestamp, b: &GrayImage) -> Result<DeblurResult> {
        let t_start = self.window_start.ok_or(Error::State("no open exposure"))?;
        let window = ExposureWindow::new(t_start, t_end)?;
        if let Some(last) = self.last_t {
            if last > t_end {
                return Err(Error::OutsideWindow {
                    t: last,
                    t_start,
                    t_end,
                });
            }
        }
        self.geometry.ensure_same(b.width(), b.height())?;

        let started = Instant::now();
        let (edi_map, finalize_terms) = self.fold_lists(&window)?;
        let latent = deblur_with_map(b, &edi_map)?;
        let step2_time = started.elapsed();

        let list_bytes = self.live_entries * std::mem::size_of::<PixelEntry>() as u64;
        self.stats.peak_list_bytes = self.stats.peak_list_bytes.max(list_bytes);
        self.stats.frames_emitted += 1;
        let result = DeblurResult {
            latent,
            edi_map,
            window,
            events_processed: self.global_counter,
            step1_time: self.step1_time,
            step2_time,
            finalize_terms,
        };
        self.reset_touched();
        self.window_start = None;
        Ok(result)
    }

    /// Drops the open exposure without producing a frame.
    pub fn abort_exposure(&mut self) {
        self.reset_touched();
        self.window_start = None;
        self.last_t = None;
    }

    fn fold_lists(&self, window: &ExposureWindow) -> Result<(EdiMap, u64)> {
        let mut e = vec![1.0; self.geometry.pixel_count()];
        let mut terms = 0u64;
        // Integration axis: [origin, end] with every pixel at value 1 until
        // its first entry.
        let (origin, end, norm) = match self.mode {
            IntegrationMode::TimeWeighted => (window.t_start, window.t_end, window.duration() as f64),
            // Add-after-apply: entry k holds for ordinals k..=N.
            IntegrationMode::CountWeighted => {
                let n = self.global_counter as i64;
                (1, n + 1, n as f64)
            }
        };
        for &i in &self.touched {
            let i = i as usize;
            let list = &self.lists[i];
            let mut total = (list[0].marker - origin) as f64;
            if !self.settled.is_empty() {
                total += self.settled[i];
            }
            for pair in list.windows(2) {
                total += weighted(pair[0].value, pair[1].marker - pair[0].marker);
            }
            let last = list[list.len() - 1];
            total += weighted(last.value, end - last.marker);
            terms += list.len() as u64 + 1;
            e[i] = finish_edi(total / norm);
        }
        Ok((EdiMap::new(self.geometry.width, self.geometry.height, e)?, terms))
    }

    fn reset_touched(&mut self) {
        for &i in &self.touched {
            let i = i as usize;
            self.s[i] = 0.0;
            self.lists[i].clear();
            if !self.settled.is_empty() {
                self.settled[i] = 0.0;
            }
        }
        self.touched.clear();
        self.global_counter = 0;
        self.live_entries = 0;
    }

    /// Drives begin/push/end over a recorded dataset. Events outside every
    /// exposure are dropped and counted in [`StreamStats`].
    pub fn run_offline(
        &mut self,
        events: &[Event],
        frames: &[(GrayImage, ExposureWindow)],
        cp: &ContrastParams,
    ) -> Result<Vec<DeblurResult>> {
        check_sorted(events)?;
        check_frames(frames, self.geometry)?;
        let mut cursor = 0;
        let mut results = Vec::with_capacity(frames.len());
        for (b, w) in frames {
            let lo = cursor + events[cursor..].partition_point(|e| e.t <= w.t_start);
            let hi = lo + events[lo..].partition_point(|e| e.t <= w.t_end);
            self.stats.events_in += (lo - cursor) as u64;
            self.stats.events_dropped_idle += (lo - cursor) as u64;
            self.begin_exposure(w.t_start)?;
            self.push_events(&events[lo..hi], cp)?;
            results.push(self.end_exposure(w.t_end, b)?);
            cursor = hi;
        }
        self.stats.events_in += (events.len() - cursor) as u64;
        self.stats.events_dropped_idle += (events.len() - cursor) as u64;
        Ok(results)
    }
}

/// `value * span`, with zero-length spans contributing nothing even when
/// `value` overflowed to infinity.
#[inline]
fn weighted(value: f64, span: i64) -> f64 {
    if span == 0 {
        0.0
    } else {
        value * span as f64
    }
}

/// Checks frame geometry and that exposure windows are sorted and do not
/// overlap. Windows may touch: `(a, b]` followed by `(b, c]`.
pub(crate) fn check_frames(frames: &[(GrayImage, ExposureWindow)], geom: SensorGeometry) -> Result<()> {
    for (b, _) in frames {
        geom.ensure_same(b.width(), b.height())?;
    }
    for pair in frames.windows(2) {
        let (a, b) = (pair[0].1, pair[1].1);
        if b.t_start < a.t_end {
            return Err(Error::Config(format!(
                "exposure windows overlap or are unsorted: ({}, {}] then ({}, {}]",
                a.t_start, a.t_end, b.t_start, b.t_end
            )));
        }
    }
    Ok(())
}

pub fn run_offline(
    events: &[Event],
    frames: &[(GrayImage, ExposureWindow)],
    cp: &ContrastParams,
    geom: SensorGeometry,
    mode: IntegrationMode,
) -> Result<Vec<DeblurResult>> {
    EdiAccumulator::new(geom, mode).run_offline(events, frames, cp)
}
