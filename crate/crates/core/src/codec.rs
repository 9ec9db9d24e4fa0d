//! Image decoding and encoding on top of the `image` crate.

use std::fmt;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use image::{DynamicImage, ImageBuffer, ImageEncoder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Raster, Samples};

/// File formats understood on input and output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
    #[serde(alias = "jpeg")]
    Jpg,
    Webp,
    #[serde(alias = "tif")]
    Tiff,
    Bmp,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Jpg => "jpg",
            ImageFormat::Webp => "webp",
            ImageFormat::Tiff => "tif",
            ImageFormat::Bmp => "bmp",
        }
    }

    pub fn from_extension(ext: &str) -> Option<Self> {
        Some(match ext.to_ascii_lowercase().as_str() {
            "png" => ImageFormat::Png,
            "jpg" | "jpeg" => ImageFormat::Jpg,
            "webp" => ImageFormat::Webp,
            "tif" | "tiff" => ImageFormat::Tiff,
            "bmp" => ImageFormat::Bmp,
            _ => return None,
        })
    }

    /// Identifies a format from leading magic bytes.
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
            Some(ImageFormat::Png)
        } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
            Some(ImageFormat::Jpg)
        } else if bytes.starts_with(b"II*\0") || bytes.starts_with(b"MM\0*") {
            Some(ImageFormat::Tiff)
        } else if bytes.starts_with(b"BM") {
            Some(ImageFormat::Bmp)
        } else if bytes.len() >= 12 && &bytes[..4] == b"RIFF" && &bytes[8..12] == b"WEBP" {
            Some(ImageFormat::Webp)
        } else {
            None
        }
    }

    pub fn is_lossy(self) -> bool {
        self == ImageFormat::Jpg
    }

    fn to_image(self) -> image::ImageFormat {
        match self {
            ImageFormat::Png => image::ImageFormat::Png,
            ImageFormat::Jpg => image::ImageFormat::Jpeg,
            ImageFormat::Webp => image::ImageFormat::WebP,
            ImageFormat::Tiff => image::ImageFormat::Tiff,
            ImageFormat::Bmp => image::ImageFormat::Bmp,
        }
    }
}

impl fmt::Display for ImageFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for ImageFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ImageFormat::from_extension(s).ok_or_else(|| format!("unsupported image format {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("cannot decode {format} data: {message}")]
    Decode { format: ImageFormat, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
#[error("cannot encode {format}: {message}")]
pub struct EncodeError {
    pub format: ImageFormat,
    pub message: String,
}

fn from_dynamic(img: DynamicImage) -> Raster {
    let (w, h) = (img.width(), img.height());
    let samples = match img {
        DynamicImage::ImageLuma8(b) => Samples::Gray8(b.into_raw()),
        DynamicImage::ImageLumaA8(_) => Samples::Gray8(img.into_luma8().into_raw()),
        DynamicImage::ImageLuma16(b) => Samples::Gray16(b.into_raw()),
        DynamicImage::ImageLumaA16(_) => Samples::Gray16(img.into_luma16().into_raw()),
        DynamicImage::ImageRgb8(b) => Samples::Rgb8(b.into_raw()),
        other => Samples::Rgb8(other.into_rgb8().into_raw()),
    };
    Raster::new(w, h, samples).expect("decoder output matches its own dimensions")
}

/// Decodes in-memory image data. The hint wins over magic-byte sniffing.
pub fn decode_bytes(bytes: &[u8], hint: Option<ImageFormat>) -> Result<Raster, DecodeError> {
    let format = hint
        .or_else(|| ImageFormat::sniff(bytes))
        .ok_or_else(|| DecodeError::UnsupportedFormat("unrecognized magic bytes".into()))?;
    let img = image::load_from_memory_with_format(bytes, format.to_image())
        .map_err(|e| DecodeError::Decode { format, message: e.to_string() })?;
    Ok(from_dynamic(img))
}

/// Loads a TIFF/PNG/BMP/JPEG (or WebP) file. Without a hint the format is
/// sniffed from the content, falling back to the file extension.
pub fn load_raster(path: &Path, hint: Option<ImageFormat>) -> Result<Raster, DecodeError> {
    let bytes = std::fs::read(path)
        .map_err(|source| DecodeError::Io { path: path.display().to_string(), source })?;
    let hint = hint.or_else(|| ImageFormat::sniff(&bytes)).or_else(|| {
        path.extension().and_then(|e| e.to_str()).and_then(ImageFormat::from_extension)
    });
    match hint {
        Some(f) => decode_bytes(&bytes, Some(f)),
        None => Err(DecodeError::UnsupportedFormat(path.display().to_string())),
    }
}

fn gray16_to_gray8(v: &[u16]) -> Vec<u8> {
    v.iter().map(|&s| (s >> 8) as u8).collect()
}

/// Encodes at the raster's exact dimensions. PNG and TIFF keep Gray16
/// samples; JPEG, WebP and BMP take the high byte of 16-bit data. WebP is
/// written lossless. `quality` (1..=100) applies to JPEG only.
pub fn encode_raster(img: &Raster, format: ImageFormat, quality: u8) -> Result<Vec<u8>, EncodeError> {
    let (w, h) = img.dims();
    let err = |e: image::ImageError| EncodeError { format, message: e.to_string() };
    let mut out = Vec::new();
    let (buf, color): (std::borrow::Cow<'_, [u8]>, image::ExtendedColorType) = match img.samples() {
        Samples::Gray8(v) => (v.as_slice().into(), image::ExtendedColorType::L8),
        Samples::Rgb8(v) => (v.as_slice().into(), image::ExtendedColorType::Rgb8),
        Samples::Gray16(v) => match format {
            ImageFormat::Png | ImageFormat::Tiff => {
                let typed: ImageBuffer<image::Luma<u16>, Vec<u16>> =
                    ImageBuffer::from_raw(w, h, v.clone()).expect("buffer length checked by Raster");
                let dynimg = DynamicImage::ImageLuma16(typed);
                dynimg.write_to(&mut Cursor::new(&mut out), format.to_image()).map_err(err)?;
                return Ok(out);
            }
            _ => (gray16_to_gray8(v).into(), image::ExtendedColorType::L8),
        },
    };
    match format {
        ImageFormat::Png => image::codecs::png::PngEncoder::new(&mut out)
            .write_image(&buf, w, h, color)
            .map_err(err)?,
        ImageFormat::Jpg => {
            image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, quality.clamp(1, 100))
                .write_image(&buf, w, h, color)
                .map_err(err)?
        }
        ImageFormat::Webp => {
            // the lossless encoder has no gray mode
            let rgb: Vec<u8> = match color {
                image::ExtendedColorType::L8 => buf.iter().flat_map(|&g| [g, g, g]).collect(),
                _ => buf.into_owned(),
            };
            image::codecs::webp::WebPEncoder::new_lossless(&mut out)
                .write_image(&rgb, w, h, image::ExtendedColorType::Rgb8)
                .map_err(err)?
        }
        ImageFormat::Tiff => image::codecs::tiff::TiffEncoder::new(Cursor::new(&mut out))
            .write_image(&buf, w, h, color)
            .map_err(err)?,
        ImageFormat::Bmp => image::codecs::bmp::BmpEncoder::new(&mut out)
            .write_image(&buf, w, h, color)
            .map_err(err)?,
    }
    Ok(out)
}

/// Downscales so the long edge is at most `max_px` (Triangle filter).
/// Rasters already within the cap are returned unchanged.
pub fn fit_within(img: &Raster, max_px: u32) -> Raster {
    let (w, h) = img.dims();
    let long = w.max(h);
    if max_px == 0 || long <= max_px {
        return img.clone();
    }
    let scale = f64::from(max_px) / f64::from(long);
    let nw = ((f64::from(w) * scale).round() as u32).max(1);
    let nh = ((f64::from(h) * scale).round() as u32).max(1);
    let filter = image::imageops::FilterType::Triangle;
    let samples = match img.samples() {
        Samples::Gray8(v) => {
            let b: ImageBuffer<image::Luma<u8>, _> = ImageBuffer::from_raw(w, h, v.clone()).unwrap();
            Samples::Gray8(image::imageops::resize(&b, nw, nh, filter).into_raw())
        }
        Samples::Gray16(v) => {
            let b: ImageBuffer<image::Luma<u16>, _> = ImageBuffer::from_raw(w, h, v.clone()).unwrap();
            Samples::Gray16(image::imageops::resize(&b, nw, nh, filter).into_raw())
        }
        Samples::Rgb8(v) => {
            let b: ImageBuffer<image::Rgb<u8>, _> = ImageBuffer::from_raw(w, h, v.clone()).unwrap();
            Samples::Rgb8(image::imageops::resize(&b, nw, nh, filter).into_raw())
        }
    };
    Raster::new(nw, nh, samples).expect("resize output matches requested dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_rgb(w: u32, h: u32) -> Raster {
        let mut data = Vec::with_capacity((w * h * 3) as usize);
        for y in 0..h {
            for x in 0..w {
                data.extend_from_slice(&[(x * 255 / w) as u8, (y * 255 / h) as u8, 96]);
            }
        }
        Raster::rgb8(w, h, data).unwrap()
    }

    #[test]
    fn sniffs_magic() {
        assert_eq!(ImageFormat::sniff(b"\x89PNG\r\n\x1a\nxxxx"), Some(ImageFormat::Png));
        assert_eq!(ImageFormat::sniff(b"II*\0...."), Some(ImageFormat::Tiff));
        assert_eq!(ImageFormat::sniff(b"MM\0*...."), Some(ImageFormat::Tiff));
        assert_eq!(ImageFormat::sniff(b"BM......"), Some(ImageFormat::Bmp));
        assert_eq!(ImageFormat::sniff(&[0xFF, 0xD8, 0xFF, 0xE0]), Some(ImageFormat::Jpg));
        assert_eq!(ImageFormat::sniff(b"hello"), None);
    }

    #[test]
    fn lossless_formats_round_trip() {
        let rgb = gradient_rgb(37, 23);
        let g16 = Raster::gray16(5, 3, (0..15).map(|i| i * 4001).collect()).unwrap();
        let g8 = Raster::gray8(4, 4, vec![128; 16]).unwrap();
        for f in [ImageFormat::Png, ImageFormat::Tiff] {
            for r in [&rgb, &g16, &g8] {
                let back = decode_bytes(&encode_raster(r, f, 90).unwrap(), None).unwrap();
                assert_eq!(&back, r, "{f} {:?}", r.channels());
            }
        }
        let back = decode_bytes(&encode_raster(&rgb, ImageFormat::Webp, 90).unwrap(), None).unwrap();
        assert_eq!(back, rgb);
        let back = decode_bytes(&encode_raster(&rgb, ImageFormat::Bmp, 90).unwrap(), None).unwrap();
        assert_eq!(back, rgb);
    }

    #[test]
    fn garbage_with_hint_is_decode_error() {
        assert!(matches!(
            decode_bytes(b"this is text", Some(ImageFormat::Tiff)),
            Err(DecodeError::Decode { format: ImageFormat::Tiff, .. })
        ));
        assert!(matches!(decode_bytes(b"this is text", None), Err(DecodeError::UnsupportedFormat(_))));
    }

    #[test]
    fn fit_within_caps_long_edge() {
        let r = gradient_rgb(400, 100);
        let small = fit_within(&r, 100);
        assert_eq!(small.dims(), (100, 25));
        assert_eq!(fit_within(&r, 1600), r);
    }
}
