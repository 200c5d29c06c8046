//! Python bindings. Images cross the boundary as flat row-major lists of
//! floats in [0, 1]; events as `(t_us, x, y, p)` tuples with `p > 0` for ON.

use fastedi::metrics;
use fastedi::synth::{self, Pattern, SceneSpec};
use fastedi::{Error, Event, ExposureWindow, GrayImage, IntegrationMode, Polarity, SensorGeometry};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type PyEvent = (i64, u16, u16, i8);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::State(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn events_in(events: &[PyEvent]) -> Vec<Event> {
    events
        .iter()
        .map(|&(t, x, y, p)| Event::new(t, x, y, if p > 0 { Polarity::On } else { Polarity::Off }))
        .collect()
}

fn events_out(events: &[Event]) -> Vec<PyEvent> {
    events.iter().map(|e| (e.t, e.x, e.y, e.p.sign())).collect()
}

fn mode_in(mode: &str) -> PyResult<IntegrationMode> {
    mode.parse().map_err(to_py)
}

fn image_in(width: u32, height: u32, data: Vec<f64>) -> PyResult<GrayImage> {
    GrayImage::new(width, height, data).map_err(to_py)
}

fn geometry(width: u32, height: u32) -> PyResult<SensorGeometry> {
    SensorGeometry::new(width, height).map_err(to_py)
}

/// Signed log-intensity thresholds: `c_on > 0 > c_off`.
#[pyclass(frozen, from_py_object)]
#[derive(Clone, Copy)]
struct ContrastParams(fastedi::ContrastParams);

#[pymethods]
impl ContrastParams {
    #[new]
    fn new(c_on: f64, c_off: f64) -> PyResult<Self> {
        fastedi::ContrastParams::new(c_on, c_off).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn symmetric(c: f64) -> PyResult<Self> {
        fastedi::symmetric_contrast(c).map(Self).map_err(to_py)
    }

    #[getter]
    fn c_on(&self) -> f64 {
        self.0.c_on()
    }

    #[getter]
    fn c_off(&self) -> f64 {
        self.0.c_off()
    }

    fn __repr__(&self) -> String {
        format!("ContrastParams(c_on={}, c_off={})", self.0.c_on(), self.0.c_off())
    }
}

#[pyclass(get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
struct DeblurOutput {
    latent: Vec<f64>,
    edi: Vec<f64>,
    t_start: i64,
    t_end: i64,
    events_processed: u64,
    step1_time: f64,
    step2_time: f64,
}

/// Streaming deblurring engine: open an exposure, push events as they
/// arrive, close it with the blurry frame.
#[pyclass]
struct EdiAccumulator {
    inner: fastedi::EdiAccumulator,
}

#[pymethods]
impl EdiAccumulator {
    #[new]
    #[pyo3(signature = (width, height, mode = "time", list_cap = None))]
    fn new(width: u32, height: u32, mode: &str, list_cap: Option<usize>) -> PyResult<Self> {
        let mut inner = fastedi::EdiAccumulator::new(geometry(width, height)?, mode_in(mode)?);
        if let Some(cap) = list_cap {
            inner = inner.with_list_cap(cap).map_err(to_py)?;
        }
        Ok(EdiAccumulator { inner })
    }

    fn begin_exposure(&mut self, t_start: i64) -> PyResult<()> {
        self.inner.begin_exposure(t_start).map_err(to_py)
    }

    /// Returns the number of events accepted into the open exposure.
    fn push_events(&mut self, events: Vec<PyEvent>, contrast: ContrastParams) -> PyResult<u64> {
        self.inner.push_events(&events_in(&events), &contrast.0).map_err(to_py)
    }

    fn end_exposure(&mut self, t_end: i64, blurry: Vec<f64>) -> PyResult<DeblurOutput> {
        let g = self.inner.geometry();
        let b = image_in(g.width, g.height, blurry)?;
        let r = self.inner.end_exposure(t_end, &b).map_err(to_py)?;
        Ok(DeblurOutput {
            latent: r.latent.into_data(),
            edi: r.edi_map.values().to_vec(),
            t_start: r.window.t_start,
            t_end: r.window.t_end,
            events_processed: r.events_processed,
            step1_time: r.step1_time.as_secs_f64(),
            step2_time: r.step2_time.as_secs_f64(),
        })
    }

    fn abort_exposure(&mut self) {
        self.inner.abort_exposure();
    }

    #[getter]
    fn is_exposing(&self) -> bool {
        self.inner.is_exposing()
    }

    #[getter]
    fn total_entries(&self) -> u64 {
        self.inner.total_entries()
    }
}

/// EDI map from the frame-wise reference engine.
#[pyfunction]
#[pyo3(signature = (events, t_start, t_end, contrast, width, height, mode = "time"))]
fn compute_edi_baseline(
    events: Vec<PyEvent>,
    t_start: i64,
    t_end: i64,
    contrast: ContrastParams,
    width: u32,
    height: u32,
    mode: &str,
) -> PyResult<Vec<f64>> {
    let window = ExposureWindow::new(t_start, t_end).map_err(to_py)?;
    let map = fastedi::compute_edi_baseline(
        &events_in(&events),
        &window,
        &contrast.0,
        geometry(width, height)?,
        mode_in(mode)?,
    )
    .map_err(to_py)?;
    Ok(map.values().to_vec())
}

/// Divides the blurry frame by an EDI map, clamping to [0, 1].
#[pyfunction]
fn deblur(blurry: Vec<f64>, edi: Vec<f64>, width: u32, height: u32) -> PyResult<Vec<f64>> {
    let b = image_in(width, height, blurry)?;
    let e = fastedi::EdiMap::new(width, height, edi).map_err(to_py)?;
    Ok(fastedi::deblur_with_map(&b, &e).map_err(to_py)?.into_data())
}

/// Latent frames at each target time, propagated from `latent` at `t_ref`.
#[pyfunction]
fn reconstruct_latent(
    latent: Vec<f64>,
    width: u32,
    height: u32,
    t_ref: i64,
    events: Vec<PyEvent>,
    contrast: ContrastParams,
    targets: Vec<i64>,
) -> PyResult<Vec<Vec<f64>>> {
    let l0 = image_in(width, height, latent)?;
    let frames = fastedi::reconstruct_latent(&l0, t_ref, &events_in(&events), &contrast.0, &targets).map_err(to_py)?;
    Ok(frames.into_iter().map(GrayImage::into_data).collect())
}

/// PSNR in dB with peak 1; identical images give `inf`.
#[pyfunction]
fn psnr(a: Vec<f64>, b: Vec<f64>, width: u32, height: u32) -> PyResult<f64> {
    metrics::psnr(&image_in(width, height, a)?, &image_in(width, height, b)?).map_err(to_py)
}

#[pyfunction]
fn laplacian_variance(img: Vec<f64>, width: u32, height: u32) -> PyResult<f64> {
    metrics::laplacian_variance(&image_in(width, height, img)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (i_d, i_on, i_off, kappa_n = 0.7, kappa_p = 0.7, cap_c1 = 130.0, cap_c2 = 6.0))]
fn contrast_from_hardware(
    i_d: f64,
    i_on: f64,
    i_off: f64,
    kappa_n: f64,
    kappa_p: f64,
    cap_c1: f64,
    cap_c2: f64,
) -> PyResult<ContrastParams> {
    let hp = fastedi::HardwareParams {
        kappa_n,
        kappa_p,
        cap_c1,
        cap_c2,
        i_d,
        i_on,
        i_off,
    };
    fastedi::contrast_from_hardware(&hp).map(ContrastParams).map_err(to_py)
}

#[pyclass(get_all, frozen, skip_from_py_object)]
struct Dataset {
    width: u32,
    height: u32,
    contrast: ContrastParams,
    events: Vec<PyEvent>,
    /// `(blurry, t_start, t_end)` per frame.
    frames: Vec<(Vec<f64>, i64, i64)>,
    ground_truth: Vec<Vec<f64>>,
}

/// Synthetic moving scene with events, blurry frames and sharp ground truth.
#[pyfunction]
#[pyo3(signature = (pattern = "vertical_edge", velocity = 200.0, width = 128, height = 96, duration_us = 500_000,
                    contrast = 0.26, fps = 20.0, exposure_frac = 0.5, feature = None, sample_period_us = 100))]
#[allow(clippy::too_many_arguments)]
fn make_dataset(
    pattern: &str,
    velocity: f64,
    width: u32,
    height: u32,
    duration_us: i64,
    contrast: f64,
    fps: f64,
    exposure_frac: f64,
    feature: Option<f64>,
    sample_period_us: i64,
) -> PyResult<Dataset> {
    let spec = SceneSpec {
        pattern: Pattern::from_name(pattern, feature).map_err(to_py)?,
        velocity,
        geometry: geometry(width, height)?,
        duration: duration_us,
        ..SceneSpec::default()
    };
    let cp = fastedi::symmetric_contrast(contrast).map_err(to_py)?;
    let d = synth::make_dataset(&spec, &cp, fps, exposure_frac, sample_period_us).map_err(to_py)?;
    Ok(Dataset {
        width,
        height,
        contrast: ContrastParams(d.contrast),
        events: events_out(&d.events),
        frames: d
            .frames
            .into_iter()
            .map(|(b, w)| (b.into_data(), w.t_start, w.t_end))
            .collect(),
        ground_truth: d.ground_truth.into_iter().map(GrayImage::into_data).collect(),
    })
}

#[pyfunction]
fn read_events(path: &str) -> PyResult<Vec<PyEvent>> {
    Ok(events_out(&fastedi::io::read_events(path, None).map_err(to_py)?))
}

#[pyfunction]
fn write_events(events: Vec<PyEvent>, path: &str) -> PyResult<()> {
    fastedi::io::write_events(&events_in(&events), path).map_err(to_py)
}

#[pymodule]
fn fastedi_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ContrastParams>()?;
    m.add_class::<EdiAccumulator>()?;
    m.add_class::<DeblurOutput>()?;
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(compute_edi_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(deblur, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct_latent, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(laplacian_variance, m)?)?;
    m.add_function(wrap_pyfunction!(contrast_from_hardware, m)?)?;
    m.add_function(wrap_pyfunction!(make_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(read_events, m)?)?;
    m.add_function(wrap_pyfunction!(write_events, m)?)?;
    Ok(())
}
