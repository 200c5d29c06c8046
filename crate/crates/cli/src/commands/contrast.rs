use std::path::PathBuf;

use clap::Args;
use fastedi::calib::{contrast_from_ratios, prefactor, DAVIS346_CAP_C1, DAVIS346_CAP_C2, DAVIS_KAPPA};
use fastedi::{contrast_from_hardware, HardwareParams};
use serde::Serialize;

use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct ContrastArgs {
    #[arg(long, default_value_t = DAVIS_KAPPA)]
    pub kappa_n: f64,
    #[arg(long, default_value_t = DAVIS_KAPPA)]
    pub kappa_p: f64,
    #[arg(long, default_value_t = DAVIS346_CAP_C1)]
    pub c1: f64,
    #[arg(long, default_value_t = DAVIS346_CAP_C2)]
    pub c2: f64,
    /// Bias currents in amps.
    #[arg(long, requires_all = ["ion", "ioff"], conflicts_with_all = ["on_ratio", "off_ratio", "manifest"])]
    pub id: Option<f64>,
    #[arg(long, requires = "id")]
    pub ion: Option<f64>,
    #[arg(long, requires = "id")]
    pub ioff: Option<f64>,
    /// `I_on / I_d`, when the absolute currents are unknown.
    #[arg(long, requires = "off_ratio", conflicts_with = "manifest")]
    pub on_ratio: Option<f64>,
    #[arg(long, requires = "on_ratio")]
    pub off_ratio: Option<f64>,
    /// Take the thresholds from a dataset manifest instead.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct ContrastReport {
    pub c_on: f64,
    pub c_off: f64,
    /// Absent when the manifest carries explicit thresholds.
    pub prefactor: Option<f64>,
    pub source: &'static str,
}

pub fn run(a: &ContrastArgs) -> CliResult<ContrastReport> {
    if let Some(path) = &a.manifest {
        let m = fastedi::io::read_manifest(path)?;
        let cp = m.contrast()?;
        let (prefactor, source) = match (&m.contrast_override, &m.hardware) {
            (Some(_), _) => (None, "manifest_override"),
            (None, hw) => (hw.map(|h| h.prefactor()), "manifest_hardware"),
        };
        return Ok(ContrastReport {
            c_on: cp.c_on(),
            c_off: cp.c_off(),
            prefactor,
            source,
        });
    }
    let (cp, source) = match (a.id, a.ion, a.ioff, a.on_ratio, a.off_ratio) {
        (Some(i_d), Some(i_on), Some(i_off), _, _) => {
            let hp = HardwareParams {
                kappa_n: a.kappa_n,
                kappa_p: a.kappa_p,
                cap_c1: a.c1,
                cap_c2: a.c2,
                i_d,
                i_on,
                i_off,
            };
            (contrast_from_hardware(&hp)?, "currents")
        }
        (_, _, _, Some(on), Some(off)) => (
            contrast_from_ratios(prefactor(a.kappa_n, a.kappa_p, a.c1, a.c2), on, off)?,
            "ratios",
        ),
        _ => {
            return Err(CliError::Usage(
                "give --id/--ion/--ioff, --on-ratio/--off-ratio, or --manifest".into(),
            ))
        }
    };
    Ok(ContrastReport {
        c_on: cp.c_on(),
        c_off: cp.c_off(),
        prefactor: Some(prefactor(a.kappa_n, a.kappa_p, a.c1, a.c2)),
        source,
    })
}
