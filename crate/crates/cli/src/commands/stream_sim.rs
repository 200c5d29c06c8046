//! Real-time replay: a paced producer thread feeds a single engine thread
//! through a bounded queue. A message that does not fit is dropped, as a
//! sensor cannot wait for its consumer; losing any message of an exposure
//! loses that frame.

use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant};

use clap::Args;
use crossbeam::channel::{bounded, Receiver, TrySendError};
use fastedi::metrics::{record_throughput, FrameTiming, ThroughputReport};
use fastedi::{
    compute_edi_baseline, deblur_with_map, ContrastParams, EdiAccumulator, Event, ExposureWindow, GrayImage,
    IntegrationMode, SensorGeometry, Timestamp,
};
use serde::Serialize;

use crate::report::{load, parse_mode, Engine};
use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct StreamSimArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Playback speed relative to sensor time.
    #[arg(long, default_value_t = 1.0)]
    pub rate_multiplier: f64,
    /// Capacity of the hand-off queue, in messages.
    #[arg(long, default_value_t = 64)]
    pub queue_cap: usize,
    #[arg(long, value_enum, default_value_t = Engine::Fast)]
    pub engine: Engine,
    /// Sensor time covered by one event message, microseconds.
    #[arg(long, default_value_t = 1000)]
    pub chunk_us: i64,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<IntegrationMode>,
    #[arg(long)]
    pub list_cap: Option<usize>,
}

enum Msg {
    Begin {
        frame: usize,
        t_start: Timestamp,
    },
    Events(Vec<Event>),
    End {
        frame: usize,
        t_end: Timestamp,
        image: GrayImage,
        due: Instant,
    },
}

/// One step of the replay schedule, in sensor time.
enum Step {
    Events(usize, usize),
    Begin(usize),
    End(usize),
}

fn schedule(
    events: &[Event],
    frames: &[(GrayImage, ExposureWindow)],
    chunk_us: i64,
) -> (Timestamp, Vec<(Timestamp, Step)>) {
    let first = events
        .first()
        .map(|e| e.t)
        .into_iter()
        .chain(frames.first().map(|f| f.1.t_start));
    let last = events
        .last()
        .map(|e| e.t)
        .into_iter()
        .chain(frames.last().map(|f| f.1.t_end));
    let (Some(t0), Some(t1)) = (first.min(), last.max()) else {
        return (0, Vec::new());
    };
    let mut marks: Vec<Timestamp> = (0..).map(|k| t0 + k * chunk_us).take_while(|t| *t < t1).collect();
    marks.push(t1);
    marks.extend(frames.iter().flat_map(|(_, w)| [w.t_start, w.t_end]));
    marks.sort_unstable();
    marks.dedup();

    let mut steps = Vec::new();
    let mut cursor = 0;
    let (mut next_begin, mut next_end) = (0, 0);
    for &b in &marks {
        let hi = cursor + events[cursor..].partition_point(|e| e.t <= b);
        if hi > cursor {
            steps.push((b, Step::Events(cursor, hi)));
        }
        cursor = hi;
        // Touching windows: the old exposure closes before the next opens.
        while next_end < frames.len() && frames[next_end].1.t_end == b {
            steps.push((b, Step::End(next_end)));
            next_end += 1;
        }
        while next_begin < frames.len() && frames[next_begin].1.t_start == b {
            steps.push((b, Step::Begin(next_begin)));
            next_begin += 1;
        }
    }
    (t0, steps)
}

#[derive(Debug, Default)]
struct ProducerOutcome {
    dropped_frames: Vec<usize>,
    idle_events_dropped: u64,
    peak_queue_depth: usize,
    messages_sent: u64,
}

#[derive(Debug, Serialize)]
pub struct FrameLatency {
    pub frame: usize,
    /// From the exposure's scheduled end to the deblurred frame being ready.
    pub latency: f64,
    pub events: u64,
}

struct ConsumerOutcome {
    completed: Vec<FrameLatency>,
    timings: Vec<FrameTiming>,
}

trait Sink {
    fn begin(&mut self, t_start: Timestamp) -> fastedi::Result<()>;
    fn is_open(&self) -> bool;
    fn events(&mut self, batch: &[Event]) -> fastedi::Result<()>;
    fn end(&mut self, t_end: Timestamp, image: &GrayImage) -> fastedi::Result<FrameTiming>;
    fn abort(&mut self);
}

struct FastSink {
    acc: EdiAccumulator,
    cp: ContrastParams,
}

impl Sink for FastSink {
    fn begin(&mut self, t_start: Timestamp) -> fastedi::Result<()> {
        self.acc.begin_exposure(t_start)
    }
    fn is_open(&self) -> bool {
        self.acc.is_exposing()
    }
    fn events(&mut self, batch: &[Event]) -> fastedi::Result<()> {
        self.acc.push_events(batch, &self.cp).map(|_| ())
    }
    fn end(&mut self, t_end: Timestamp, image: &GrayImage) -> fastedi::Result<FrameTiming> {
        let r = self.acc.end_exposure(t_end, image)?;
        Ok(FrameTiming {
            events: r.events_processed,
            step1: r.step1_time,
            step2: r.step2_time,
        })
    }
    fn abort(&mut self) {
        self.acc.abort_exposure();
    }
}

/// Reference engine: buffers the exposure's events and integrates at the
/// end, which is where it falls behind.
struct BaselineSink {
    geometry: SensorGeometry,
    mode: IntegrationMode,
    cp: ContrastParams,
    open: Option<Timestamp>,
    buffer: Vec<Event>,
}

impl Sink for BaselineSink {
    fn begin(&mut self, t_start: Timestamp) -> fastedi::Result<()> {
        self.open = Some(t_start);
        self.buffer.clear();
        Ok(())
    }
    fn is_open(&self) -> bool {
        self.open.is_some()
    }
    fn events(&mut self, batch: &[Event]) -> fastedi::Result<()> {
        let t_start = self.open.unwrap_or(Timestamp::MAX);
        self.buffer.extend(batch.iter().filter(|e| e.t > t_start));
        Ok(())
    }
    fn end(&mut self, t_end: Timestamp, image: &GrayImage) -> fastedi::Result<FrameTiming> {
        let t_start = self.open.take().ok_or(fastedi::Error::State("no open exposure"))?;
        let started = Instant::now();
        let window = ExposureWindow::new(t_start, t_end)?;
        let map = compute_edi_baseline(&self.buffer, &window, &self.cp, self.geometry, self.mode)?;
        deblur_with_map(image, &map)?;
        Ok(FrameTiming {
            events: self.buffer.len() as u64,
            step1: Duration::ZERO,
            step2: started.elapsed(),
        })
    }
    fn abort(&mut self) {
        self.open = None;
        self.buffer.clear();
    }
}

fn consume(rx: Receiver<Msg>, mut sink: Box<dyn Sink + Send>) -> fastedi::Result<ConsumerOutcome> {
    let mut current = None;
    let mut out = ConsumerOutcome {
        completed: Vec::new(),
        timings: Vec::new(),
    };
    for msg in rx {
        match msg {
            Msg::Begin { frame, t_start } => {
                if sink.is_open() {
                    // The previous exposure lost its end message.
                    sink.abort();
                }
                sink.begin(t_start)?;
                current = Some(frame);
            }
            Msg::Events(batch) => {
                if sink.is_open() {
                    sink.events(&batch)?;
                }
            }
            Msg::End {
                frame,
                t_end,
                image,
                due,
            } => {
                if current == Some(frame) && sink.is_open() {
                    let timing = sink.end(t_end, &image)?;
                    out.completed.push(FrameLatency {
                        frame,
                        latency: due.elapsed().as_secs_f64(),
                        events: timing.events,
                    });
                    out.timings.push(timing);
                }
                current = None;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct StreamSimReport {
    pub engine: Engine,
    pub mode: &'static str,
    pub rate_multiplier: f64,
    pub queue_cap: usize,
    pub frames_total: usize,
    pub frames_completed: usize,
    pub dropped_frames: usize,
    pub dropped_frame_indices: Vec<usize>,
    pub idle_events_dropped: u64,
    pub messages_sent: u64,
    pub peak_queue_depth: usize,
    pub mean_latency: Option<f64>,
    pub max_latency: Option<f64>,
    pub frames: Vec<FrameLatency>,
    pub throughput: Option<ThroughputReport>,
    pub wall_time: f64,
    /// Frames were lost or the queue filled up.
    pub jammed: bool,
}

pub fn run(a: &StreamSimArgs) -> CliResult<serde_json::Value> {
    if !(a.rate_multiplier.is_finite() && a.rate_multiplier > 0.0) {
        return Err(CliError::Usage("--rate-multiplier must be positive".into()));
    }
    if a.queue_cap == 0 || a.chunk_us <= 0 {
        return Err(CliError::Usage("--queue-cap and --chunk-us must be positive".into()));
    }
    let d = load(&a.manifest)?;
    let mode = a.mode.unwrap_or(d.manifest.mode);
    let geometry = d.manifest.geometry;
    let sink: Box<dyn Sink + Send> = match a.engine {
        Engine::Fast => {
            let mut acc = EdiAccumulator::new(geometry, mode);
            if let Some(cap) = a.list_cap {
                acc = acc.with_list_cap(cap)?;
            }
            Box::new(FastSink { acc, cp: d.contrast })
        }
        Engine::Baseline => Box::new(BaselineSink {
            geometry,
            mode,
            cp: d.contrast,
            open: None,
            buffer: Vec::new(),
        }),
    };
    let (t0, steps) = schedule(&d.events, &d.frames, a.chunk_us);
    let (tx, rx) = bounded::<Msg>(a.queue_cap);
    let started = Instant::now();
    let due = |t: Timestamp| started + Duration::from_secs_f64((t - t0) as f64 * 1e-6 / a.rate_multiplier);

    let (producer, consumer) = thread::scope(|scope| {
        let consumer = scope.spawn(move || consume(rx, sink));
        let mut p = ProducerOutcome::default();
        let mut open: Option<usize> = None;
        let mut lost: Option<usize> = None;
        for (t, step) in &steps {
            let at = due(*t);
            if let Some(wait) = at.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
            let (msg, frame) = match *step {
                Step::Begin(i) => {
                    open = Some(i);
                    (
                        Msg::Begin {
                            frame: i,
                            t_start: d.frames[i].1.t_start,
                        },
                        Some(i),
                    )
                }
                Step::Events(lo, hi) => (Msg::Events(d.events[lo..hi].to_vec()), open),
                Step::End(i) => {
                    open = None;
                    let msg = Msg::End {
                        frame: i,
                        t_end: d.frames[i].1.t_end,
                        image: d.frames[i].0.clone(),
                        due: at,
                    };
                    (msg, Some(i))
                }
            };
            if frame.is_some() && frame == lost {
                continue;
            }
            match tx.try_send(msg) {
                Ok(()) => {
                    p.messages_sent += 1;
                    p.peak_queue_depth = p.peak_queue_depth.max(tx.len());
                }
                Err(TrySendError::Full(Msg::Events(batch))) if frame.is_none() => {
                    p.idle_events_dropped += batch.len() as u64;
                    p.peak_queue_depth = a.queue_cap;
                }
                Err(TrySendError::Full(_)) => {
                    p.peak_queue_depth = a.queue_cap;
                    let i = frame.expect("frame messages carry an index");
                    p.dropped_frames.push(i);
                    lost = Some(i);
                }
                Err(TrySendError::Disconnected(_)) => break,
            }
        }
        drop(tx);
        (p, consumer.join().expect("engine thread panicked"))
    });
    let consumer = consumer?;
    let wall_time = started.elapsed().as_secs_f64();

    let latencies: Vec<f64> = consumer.completed.iter().map(|f| f.latency).collect();
    let throughput = if consumer.timings.is_empty() {
        None
    } else {
        Some(record_throughput(
            &consumer.timings,
            1,
            producer.peak_queue_depth as u64,
        )?)
    };
    let dropped = producer.dropped_frames.len();
    let report = StreamSimReport {
        engine: a.engine,
        mode: mode.name(),
        rate_multiplier: a.rate_multiplier,
        queue_cap: a.queue_cap,
        frames_total: d.frames.len(),
        frames_completed: consumer.completed.len(),
        dropped_frames: dropped,
        dropped_frame_indices: producer.dropped_frames,
        idle_events_dropped: producer.idle_events_dropped,
        messages_sent: producer.messages_sent,
        peak_queue_depth: producer.peak_queue_depth,
        mean_latency: (!latencies.is_empty()).then(|| latencies.iter().sum::<f64>() / latencies.len() as f64),
        max_latency: latencies.iter().copied().reduce(f64::max),
        frames: consumer.completed,
        throughput,
        wall_time,
        jammed: dropped > 0 || producer.peak_queue_depth >= a.queue_cap,
    };
    let value = serde_json::to_value(&report).map_err(|e| CliError::Usage(e.to_string()))?;
    if dropped > 0 {
        Err(CliError::Threshold {
            message: format!("{dropped} frame(s) dropped"),
            report: value,
        })
    } else {
        Ok(value)
    }
}
