//! Real-time event-based motion deblurring.
//!
//! A blurry frame `B` is the time average of the latent frames over its
//! exposure. Events relate every latent frame to the one at the exposure
//! start, `L(t) = L(t_start) * exp(c * sum of events in (t_start, t])`, so
//! `L(t_start) = B / E`, where `E` is the exposure average of those
//! exponentials (the event-based double integral).
//!
//! [`fast::EdiAccumulator`] computes `E` in a single pass over the event
//! stream with `O(1)` work per event. [`baseline::compute_edi_baseline`] is
//! the frame-wise reference it is tested against.

pub mod baseline;
pub mod calib;
pub mod error;
pub mod fast;
pub mod io;
pub mod metrics;
pub mod model;
pub mod synth;

pub use baseline::{compute_edi_baseline, deblur_with_map, reconstruct_latent, reconstruct_latent_raw};
pub use calib::{contrast_from_hardware, symmetric_contrast, HardwareParams};
pub use error::{Error, Result};
pub use fast::{run_offline, DeblurResult, EdiAccumulator, PixelEntry, StreamStats};
pub use model::{
    cumulative_sum, signed_contrast, ContrastParams, EdiMap, Event, ExposureWindow, GrayImage, IntegrationMode,
    Polarity, SensorGeometry, Timestamp,
};
