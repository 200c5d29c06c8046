//! Contrast thresholds from DVS pixel bias settings.
//!
//! The ON/OFF thresholds follow from the bias currents of the change
//! detector and the capacitor ratio of its amplifier:
//!
//! ```text
//! alpha = kappa_n * C2 / (kappa_p^2 * C1)
//! c_on  = alpha * ln(I_on  / I_d)
//! c_off = alpha * ln(I_off / I_d)
//! ```
//!
//! Only the capacitor ratio matters, so capacitances are in any consistent
//! unit. Bias currents are taken as given; decoding coarse/fine bias
//! registers into amps is left to vendor tooling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ContrastParams;

/// Back-gate coefficient used for both transistor types on DAVIS sensors.
pub const DAVIS_KAPPA: f64 = 0.7;
/// DAVIS346 capacitor ratio `C1 / C2 = 130 / 6`.
pub const DAVIS346_CAP_C1: f64 = 130.0;
pub const DAVIS346_CAP_C2: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareParams {
    pub kappa_n: f64,
    pub kappa_p: f64,
    pub cap_c1: f64,
    pub cap_c2: f64,
    /// Differencing amplifier bias current, amps.
    pub i_d: f64,
    pub i_on: f64,
    pub i_off: f64,
}

impl HardwareParams {
    fn validate(&self) -> Result<()> {
        let named = [
            ("kappa_n", self.kappa_n),
            ("kappa_p", self.kappa_p),
            ("cap_c1", self.cap_c1),
            ("cap_c2", self.cap_c2),
            ("i_d", self.i_d),
            ("i_on", self.i_on),
            ("i_off", self.i_off),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and positive, got {v}")));
            }
        }
        for (name, k) in [("kappa_n", self.kappa_n), ("kappa_p", self.kappa_p)] {
            if k > 1.0 {
                return Err(Error::Domain(format!("{name} must lie in (0, 1], got {k}")));
            }
        }
        Ok(())
    }

    /// `kappa_n * C2 / (kappa_p^2 * C1)`.
    pub fn prefactor(&self) -> f64 {
        prefactor(self.kappa_n, self.kappa_p, self.cap_c1, self.cap_c2)
    }
}

pub fn prefactor(kappa_n: f64, kappa_p: f64, cap_c1: f64, cap_c2: f64) -> f64 {
    (kappa_n * cap_c2) / (kappa_p * kappa_p * cap_c1)
}

pub fn contrast_from_hardware(hp: &HardwareParams) -> Result<ContrastParams> {
    hp.validate()?;
    if hp.i_on <= hp.i_d {
        return Err(Error::Sign(format!(
            "i_on ({}) must exceed i_d ({}) for a positive ON threshold",
            hp.i_on, hp.i_d
        )));
    }
    if hp.i_off >= hp.i_d {
        return Err(Error::Sign(format!(
            "i_off ({}) must be below i_d ({}) for a negative OFF threshold",
            hp.i_off, hp.i_d
        )));
    }
    contrast_from_ratios(hp.prefactor(), hp.i_on / hp.i_d, hp.i_off / hp.i_d)
}

/// Same as [`contrast_from_hardware`] with the current ratios `I_on / I_d`
/// and `I_off / I_d` already divided out.
pub fn contrast_from_ratios(prefactor: f64, on_ratio: f64, off_ratio: f64) -> Result<ContrastParams> {
    if !(prefactor.is_finite() && prefactor > 0.0) {
        return Err(Error::Domain(format!(
            "prefactor must be finite and positive, got {prefactor}"
        )));
    }
    if !(on_ratio.is_finite() && on_ratio > 0.0 && off_ratio.is_finite() && off_ratio > 0.0) {
        return Err(Error::Domain(format!(
            "current ratios must be finite and positive, got ({on_ratio}, {off_ratio})"
        )));
    }
    if on_ratio <= 1.0 {
        return Err(Error::Sign(format!("ON current ratio must exceed 1, got {on_ratio}")));
    }
    if off_ratio >= 1.0 {
        return Err(Error::Sign(format!(
            "OFF current ratio must be below 1, got {off_ratio}"
        )));
    }
    ContrastParams::new(prefactor * on_ratio.ln(), prefactor * off_ratio.ln())
}

/// Single-threshold model: `c_off = -c_on`.
pub fn symmetric_contrast(c: f64) -> Result<ContrastParams> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Sign(format!("symmetric contrast must be positive, got {c}")));
    }
    ContrastParams::new(c, -c)
}
