//! On-disk formats: plain-text event lists, binary PGM frames and the JSON
//! dataset manifest.
//!
//! Event files hold one event per line, `t_us x y p`, with `p` either `1`
//! (ON) or `0` (OFF). Lines starting with `#` are comments.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calib::{contrast_from_hardware, HardwareParams};
use crate::error::{Error, Result};
use crate::model::{ContrastParams, Event, ExposureWindow, GrayImage, IntegrationMode, Polarity, SensorGeometry};
use crate::synth::Dataset;

/// Column legend written as the first `#` comment of generated event files.
pub const EVENT_FILE_HEADER: &str = "t_us x y p  (p: 1 = ON, 0 = OFF)";

pub fn read_events(path: impl AsRef<Path>, geometry: Option<SensorGeometry>) -> Result<Vec<Event>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_events(BufReader::new(file), path, geometry)
}

pub fn parse_events(reader: impl BufRead, path: &Path, geometry: Option<SensorGeometry>) -> Result<Vec<Event>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut events = Vec::new();
    let mut prev_t = i64::MIN;
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 4 {
            return Err(parse_err(lineno, format!("expected 4 fields, got {}", fields.len())));
        }
        let t = parse_digits(fields[0]).ok_or_else(|| parse_err(lineno, format!("bad timestamp {:?}", fields[0])))?;
        let t = i64::try_from(t).map_err(|_| parse_err(lineno, "timestamp overflows".into()))?;
        let x = parse_digits(fields[1])
            .and_then(|v| u16::try_from(v).ok())
            .ok_or_else(|| parse_err(lineno, format!("bad x coordinate {:?}", fields[1])))?;
        let y = parse_digits(fields[2])
            .and_then(|v| u16::try_from(v).ok())
            .ok_or_else(|| parse_err(lineno, format!("bad y coordinate {:?}", fields[2])))?;
        let p = match fields[3] {
            "1" => Polarity::On,
            "0" => Polarity::Off,
            other => return Err(parse_err(lineno, format!("polarity must be 0 or 1, got {other:?}"))),
        };
        if t < prev_t {
            return Err(parse_err(lineno, format!("timestamp {t} decreases from {prev_t}")));
        }
        if let Some(g) = geometry {
            if !g.contains(x, y) {
                return Err(parse_err(
                    lineno,
                    format!("pixel ({x}, {y}) outside {}x{} sensor", g.width, g.height),
                ));
            }
        }
        prev_t = t;
        events.push(Event::new(t, x, y, p));
    }
    Ok(events)
}

/// ASCII digits only; no sign, no whitespace.
fn parse_digits(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

pub fn write_events(events: &[Event], path: impl AsRef<Path>) -> Result<()> {
    write_events_with_header(events, path, &[])
}

pub fn write_events_with_header(events: &[Event], path: impl AsRef<Path>, header: &[&str]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for line in header {
        writeln!(w, "# {line}").map_err(io)?;
    }
    for e in events {
        if e.t < 0 {
            return Err(Error::Domain(format!("negative timestamp {} cannot be written", e.t)));
        }
        let p = match e.p {
            Polarity::On => 1,
            Polarity::Off => 0,
        };
        writeln!(w, "{} {} {} {}", e.t, e.x, e.y, p).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|msg| Error::Format {
        path: path.to_path_buf(),
        msg,
    })
}

/// Decodes a binary (P5) PGM with maxval 255.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("not a binary PGM (expected P5 magic)".into());
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // Whitespace and comments between header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err("malformed header".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("header number out of range")?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}, expected 255"));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing whitespace after header".into()),
    }
    let (width, height) = (
        u32::try_from(width).map_err(|_| "width too large")?,
        u32::try_from(height).map_err(|_| "height too large")?,
    );
    let n = width as usize * height as usize;
    let payload = bytes.get(pos..pos + n).ok_or_else(|| {
        format!(
            "truncated payload: expected {n} bytes, found {}",
            bytes.len().saturating_sub(pos)
        )
    })?;
    GrayImage::from_u8(width, height, payload).map_err(|e| e.to_string())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8());
    out
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub image: PathBuf,
    pub t_start_us: i64,
    pub t_end_us: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
}

impl FrameEntry {
    pub fn window(&self) -> Result<ExposureWindow> {
        ExposureWindow::new(self.t_start_us, self.t_end_us)
    }
}

/// Dataset description. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub geometry: SensorGeometry,
    pub event_file: PathBuf,
    pub frames: Vec<FrameEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardware: Option<HardwareParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast_override: Option<ContrastParams>,
    #[serde(default)]
    pub mode: IntegrationMode,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        SensorGeometry::new(self.geometry.width, self.geometry.height)?;
        let mut prev: Option<ExposureWindow> = None;
        for (i, f) in self.frames.iter().enumerate() {
            let w = f.window()?;
            if let Some(p) = prev {
                if w.t_start < p.t_end {
                    return Err(Error::Config(format!(
                        "frame {i} window ({}, {}] is unsorted or overlaps ({}, {}]",
                        w.t_start, w.t_end, p.t_start, p.t_end
                    )));
                }
            }
            prev = Some(w);
        }
        if let Some(c) = &self.contrast_override {
            ContrastParams::new(c.c_on(), c.c_off())?;
        }
        if let Some(hp) = &self.hardware {
            contrast_from_hardware(hp)?;
        }
        Ok(())
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.base_dir.join(rel)
    }

    /// Explicit override first, then the hardware block.
    pub fn contrast(&self) -> Result<ContrastParams> {
        match (&self.contrast_override, &self.hardware) {
            (Some(c), _) => Ok(*c),
            (None, Some(hp)) => contrast_from_hardware(hp),
            (None, None) => Err(Error::Config(
                "manifest has neither contrast_override nor hardware parameters".into(),
            )),
        }
    }
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<DatasetManifest> {
    let mut m: DatasetManifest = serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    m.validate()?;
    m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(m)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

pub fn write_manifest(m: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    m.validate()?;
    let text = serde_json::to_string_pretty(m).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Everything a manifest points at, loaded into memory.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub contrast: ContrastParams,
    pub events: Vec<Event>,
    pub frames: Vec<(GrayImage, ExposureWindow)>,
    pub ground_truth: Vec<Option<GrayImage>>,
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<LoadedDataset> {
    let manifest = read_manifest(manifest_path)?;
    let contrast = manifest.contrast()?;
    let geom = manifest.geometry;
    let events = read_events(manifest.resolve(&manifest.event_file), Some(geom))?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    let mut ground_truth = Vec::with_capacity(manifest.frames.len());
    for f in &manifest.frames {
        let path = manifest.resolve(&f.image);
        let img = read_pgm(&path)?;
        geom.ensure_same(img.width(), img.height())?;
        frames.push((img, f.window()?));
        ground_truth.push(match &f.ground_truth {
            Some(gt) => {
                let img = read_pgm(manifest.resolve(gt))?;
                geom.ensure_same(img.width(), img.height())?;
                Some(img)
            }
            None => None,
        });
    }
    Ok(LoadedDataset {
        manifest,
        contrast,
        events,
        frames,
        ground_truth,
    })
}

/// Writes `manifest.json`, `events.txt`, `blur_NNNN.pgm` and `gt_NNNN.pgm`
/// into `dir` and returns the manifest path.
pub fn write_dataset(
    dataset: &Dataset,
    dir: impl AsRef<Path>,
    mode: IntegrationMode,
    header: &[&str],
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut lines = vec![EVENT_FILE_HEADER];
    lines.extend_from_slice(header);
    write_events_with_header(&dataset.events, dir.join("events.txt"), &lines)?;
    let mut frames = Vec::with_capacity(dataset.frames.len());
    for (i, ((b, w), gt)) in dataset.frames.iter().zip(&dataset.ground_truth).enumerate() {
        let image = PathBuf::from(format!("blur_{i:04}.pgm"));
        let gt_path = PathBuf::from(format!("gt_{i:04}.pgm"));
        write_pgm(b, dir.join(&image))?;
        write_pgm(gt, dir.join(&gt_path))?;
        frames.push(FrameEntry {
            image,
            t_start_us: w.t_start,
            t_end_us: w.t_end,
            ground_truth: Some(gt_path),
        });
    }
    let manifest = DatasetManifest {
        geometry: dataset.geometry,
        event_file: PathBuf::from("events.txt"),
        frames,
        hardware: None,
        contrast_override: Some(dataset.contrast),
        mode,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    write_manifest(&manifest, &path)?;
    Ok(path)
}
