//! Pieces shared by several command reports.

use std::path::Path;
use std::time::Duration;

use clap::ValueEnum;
use fastedi::io::LoadedDataset;
use fastedi::{Error, IntegrationMode};
use serde::Serialize;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Fast,
    Baseline,
}

pub fn parse_mode(s: &str) -> Result<IntegrationMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

pub fn load(manifest: &Path) -> CliResult<LoadedDataset> {
    Ok(fastedi::io::load_dataset(manifest)?)
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::Data(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

/// Median of a non-empty sample.
pub fn median(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
