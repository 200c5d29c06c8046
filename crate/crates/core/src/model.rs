//! Domain types shared by every engine: events, sensor geometry, contrast
//! thresholds, exposure windows and the image carriers.
//!
//! Time is integer microseconds everywhere. Intensities are `f64` in `[0, 1]`
//! and only become 8-bit at file boundaries.
//!
//! An exposure window is half-open on the left: an event belongs to the
//! window `(t_start, t_end]`. The same convention is used for every interval
//! sum so that abutting intervals tile exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Microsecond timestamp.
pub type Timestamp = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    pub fn from_sign(sign: i64) -> Result<Self> {
        match sign {
            1 => Ok(Polarity::On),
            -1 => Ok(Polarity::Off),
            other => Err(Error::Domain(format!("polarity must be +1 or -1, got {other}"))),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::On => Polarity::Off,
            Polarity::Off => Polarity::On,
        }
    }
}

/// A single brightness-change sample from the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: Timestamp,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: Timestamp, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorGeometry {
    pub width: u32,
    pub height: u32,
}

impl SensorGeometry {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!(
                "sensor geometry must be at least 1x1, got {width}x{height}"
            )));
        }
        if width > u16::MAX as u32 + 1 || height > u16::MAX as u32 + 1 {
            return Err(Error::Domain(format!(
                "sensor geometry {width}x{height} exceeds 16-bit coordinates"
            )));
        }
        Ok(SensorGeometry { width, height })
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        (x as u32) < self.width && (y as u32) < self.height
    }

    pub fn check_event(&self, e: &Event) -> Result<()> {
        if self.contains(e.x, e.y) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                x: e.x as u32,
                y: e.y as u32,
                width: self.width,
                height: self.height,
            })
        }
    }

    pub(crate) fn ensure_same(&self, width: u32, height: u32) -> Result<()> {
        if self.width == width && self.height == height {
            Ok(())
        } else {
            Err(Error::GeometryMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: width,
                got_h: height,
            })
        }
    }
}

/// Log-intensity thresholds. `c_off` is stored negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastParams {
    c_on: f64,
    c_off: f64,
}

impl ContrastParams {
    pub fn new(c_on: f64, c_off: f64) -> Result<Self> {
        if !c_on.is_finite() || !c_off.is_finite() {
            return Err(Error::Domain(format!(
                "contrast thresholds must be finite, got ({c_on}, {c_off})"
            )));
        }
        if c_on <= 0.0 {
            return Err(Error::Sign(format!("c_on must be positive, got {c_on}")));
        }
        if c_off >= 0.0 {
            return Err(Error::Sign(format!("c_off must be negative, got {c_off}")));
        }
        Ok(ContrastParams { c_on, c_off })
    }

    pub fn c_on(&self) -> f64 {
        self.c_on
    }

    pub fn c_off(&self) -> f64 {
        self.c_off
    }

    /// Threshold carried by one event of polarity `p`.
    #[inline]
    pub fn signed(&self, p: Polarity) -> f64 {
        match p {
            Polarity::On => self.c_on,
            Polarity::Off => self.c_off,
        }
    }

    /// Swaps the roles of the two thresholds: `(c_on, c_off) -> (-c_off, -c_on)`.
    pub fn mirrored(&self) -> Self {
        ContrastParams {
            c_on: -self.c_off,
            c_off: -self.c_on,
        }
    }
}

pub fn signed_contrast(p: Polarity, cp: &ContrastParams) -> f64 {
    cp.signed(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExposureWindow {
    pub t_start: Timestamp,
    pub t_end: Timestamp,
}

impl ExposureWindow {
    pub fn new(t_start: Timestamp, t_end: Timestamp) -> Result<Self> {
        if t_end <= t_start {
            return Err(Error::InvalidWindow { t_start, t_end });
        }
        Ok(ExposureWindow { t_start, t_end })
    }

    pub fn duration(&self) -> i64 {
        self.t_end - self.t_start
    }

    /// Membership in `(t_start, t_end]`.
    #[inline]
    pub fn contains(&self, t: Timestamp) -> bool {
        t > self.t_start && t <= self.t_end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegrationMode {
    /// Outer integral weighted by elapsed time.
    #[default]
    #[serde(rename = "time")]
    TimeWeighted,
    /// Outer integral weighted by global event-counter differences.
    #[serde(rename = "count")]
    CountWeighted,
}

impl IntegrationMode {
    pub fn name(&self) -> &'static str {
        match self {
            IntegrationMode::TimeWeighted => "time",
            IntegrationMode::CountWeighted => "count",
        }
    }
}

impl std::str::FromStr for IntegrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" | "time-weighted" | "TimeWeighted" => Ok(IntegrationMode::TimeWeighted),
            "count" | "count-weighted" | "CountWeighted" => Ok(IntegrationMode::CountWeighted),
            other => Err(Error::Domain(format!("unknown integration mode {other:?}"))),
        }
    }
}

/// Grayscale image with normalized intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width as usize * height as usize {
            return Err(Error::Domain(format!(
                "image data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::Domain(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn filled(geometry: SensorGeometry, value: f64) -> Result<Self> {
        GrayImage::new(geometry.width, geometry.height, vec![value; geometry.pixel_count()])
    }

    /// Builds an image from unclamped values, clamping each into `[0, 1]`.
    /// Non-finite values map to 0.
    pub fn from_clamped(width: u32, height: u32, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let data = values.into_iter().map(clamp_unit).collect();
        GrayImage::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn geometry(&self) -> SensorGeometry {
        SensorGeometry {
            width: self.width,
            height: self.height,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// 8-bit quantization with round-half-up.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize_u8(v)).collect()
    }

    pub fn from_u8(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        GrayImage::new(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    (255.0 * clamp_unit(v) + 0.5).floor() as u8
}

/// Per-pixel value of the double integral, the divisor that maps the blurry
/// frame onto the latent frame at the reference time.
#[derive(Debug, Clone, PartialEq)]
pub struct EdiMap {
    width: u32,
    height: u32,
    e: Vec<f64>,
}

impl EdiMap {
    pub fn new(width: u32, height: u32, e: Vec<f64>) -> Result<Self> {
        if e.len() != width as usize * height as usize {
            return Err(Error::Domain(format!(
                "EDI map length {} does not match {width}x{height}",
                e.len()
            )));
        }
        if let Some(bad) = e.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain(format!("EDI value {bad} is not finite and positive")));
        }
        Ok(EdiMap { width, height, e })
    }

    pub fn ones(geometry: SensorGeometry) -> Self {
        EdiMap {
            width: geometry.width,
            height: geometry.height,
            e: vec![1.0; geometry.pixel_count()],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn geometry(&self) -> SensorGeometry {
        SensorGeometry {
            width: self.width,
            height: self.height,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.e
    }

    /// Largest per-pixel relative difference `|a - b| / b` against `other`.
    pub fn max_relative_diff(&self, other: &EdiMap) -> Result<f64> {
        other.geometry().ensure_same(self.width, self.height)?;
        Ok(self
            .e
            .iter()
            .zip(&other.e)
            .map(|(a, b)| (a - b).abs() / b.abs())
            .fold(0.0, f64::max))
    }
}

pub(crate) fn check_sorted(events: &[Event]) -> Result<()> {
    for (i, w) in events.windows(2).enumerate() {
        if w[1].t < w[0].t {
            return Err(Error::Ordering {
                index: i + 1,
                prev: w[0].t,
                t: w[1].t,
            });
        }
    }
    Ok(())
}

/// Signed log-intensity change carried by `events` over `(from, to]`.
///
/// Every event in the slice is counted regardless of its pixel; callers
/// pass a single pixel's stream.
pub fn cumulative_sum(events: &[Event], cp: &ContrastParams, from: Timestamp, to: Timestamp) -> Result<f64> {
    check_sorted(events)?;
    if from > to {
        return Err(Error::Range { t: to, t_ref: from });
    }
    let (mut on, mut off) = (0u64, 0u64);
    for e in events.iter().filter(|e| e.t > from && e.t <= to) {
        match e.p {
            Polarity::On => on += 1,
            Polarity::Off => off += 1,
        }
    }
    Ok(on as f64 * cp.c_on + off as f64 * cp.c_off)
}
