//! Post-processing for electron microprobe images: calibrated scale bars,
//! spectrum-position markers, opacity-blended X-ray map layers, and batch
//! export at the acquired resolution.
//!
//! Numeric code (calibration fits, nice bar lengths, layer blending) is
//! generic over [`Scalar`] (`f32` or `f64`); the aliases below fix it to
//! `f64`, which is what the render pipeline uses.

pub mod annotate;
pub mod calibration;
pub mod codec;
pub mod color;
pub mod compose;
pub mod export;
pub mod project;
pub mod raster;
pub mod scalar;
pub mod settings;

pub use color::Rgb;
pub use raster::{Channels, Raster, Samples};
pub use scalar::Scalar;
pub use settings::{Background, PositionSelection, RenderSettings};

pub type CalibrationModel = calibration::PixelSizeModel<f64>;
pub type CalibrationSample = calibration::CalibrationSample<f64>;
pub type FieldOfView = calibration::FieldOfView<f64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Encodes a rendered entry as PNG, optionally capping the long edge.
/// The CLI `preview` command and the service preview endpoint both go
/// through here.
pub fn preview_png(
    rendered: &Raster,
    max_px: Option<u32>,
) -> Result<Vec<u8>, codec::EncodeError> {
    match max_px {
        Some(cap) => codec::encode_raster(&codec::fit_within(rendered, cap), codec::ImageFormat::Png, 100),
        None => codec::encode_raster(rendered, codec::ImageFormat::Png, 100),
    }
}
