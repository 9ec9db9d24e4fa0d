//! Scale bars, length labels and spectrum-position markers.

mod glyphs;
pub(crate) mod markers;
pub(crate) mod scale_bar;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use glyphs::{for_each_text_pixel, TextMetrics};
pub use markers::draw_markers;
pub use scale_bar::{
    auto_bar_length, draw_scale_bar, format_length_label, layout_scale_bar, parse_length_label, NICE_MANTISSAS,
};

use crate::color::Rgb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarPosition {
    ImageTopLeft,
    ImageTopRight,
    ImageBottomLeft,
    ImageBottomCenter,
    ImageBottomRight,
    BarBelowLeft,
    BarBelowCenter,
    BarBelowRight,
}

impl BarPosition {
    pub const ALL: [BarPosition; 8] = [
        BarPosition::ImageTopLeft,
        BarPosition::ImageTopRight,
        BarPosition::ImageBottomLeft,
        BarPosition::ImageBottomCenter,
        BarPosition::ImageBottomRight,
        BarPosition::BarBelowLeft,
        BarPosition::BarBelowCenter,
        BarPosition::BarBelowRight,
    ];

    /// Positions on the appended data bar rather than on the image.
    pub fn is_data_bar(self) -> bool {
        matches!(self, BarPosition::BarBelowLeft | BarPosition::BarBelowCenter | BarPosition::BarBelowRight)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BarPosition::ImageTopLeft => "image-top-left",
            BarPosition::ImageTopRight => "image-top-right",
            BarPosition::ImageBottomLeft => "image-bottom-left",
            BarPosition::ImageBottomCenter => "image-bottom-center",
            BarPosition::ImageBottomRight => "image-bottom-right",
            BarPosition::BarBelowLeft => "bar-below-left",
            BarPosition::BarBelowCenter => "bar-below-center",
            BarPosition::BarBelowRight => "bar-below-right",
        }
    }
}

impl std::str::FromStr for BarPosition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BarPosition::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown scale bar position {s:?}"))
    }
}

/// Either sized automatically or a fixed physical length in µm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BarLength {
    Auto,
    Fixed(f64),
}

impl Serialize for BarLength {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BarLength::Auto => s.serialize_str("auto"),
            BarLength::Fixed(um) => s.serialize_f64(*um),
        }
    }
}

impl<'de> Deserialize<'de> for BarLength {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Number(f64),
        }
        match Repr::deserialize(d)? {
            Repr::Text(t) if t == "auto" => Ok(BarLength::Auto),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected \"auto\" or a length in µm, got {t:?}"))),
            Repr::Number(v) => Ok(BarLength::Fixed(v)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FontColor {
    Black,
    White,
}

impl FontColor {
    pub fn rgb(self) -> Rgb {
        match self {
            FontColor::Black => Rgb::BLACK,
            FontColor::White => Rgb::WHITE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarBackground {
    None,
    Black,
    White,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleBarStyle {
    pub position: BarPosition,
    pub length: BarLength,
    /// Percent of the text height.
    pub bar_height_pct: f64,
    /// Percent of the image height.
    pub font_size_pct: f64,
    pub font_color: FontColor,
    pub background: BarBackground,
    pub background_opacity: f64,
    pub text_above_bar: bool,
}

impl Default for ScaleBarStyle {
    fn default() -> Self {
        ScaleBarStyle {
            position: BarPosition::ImageBottomRight,
            length: BarLength::Auto,
            bar_height_pct: 50.0,
            font_size_pct: 3.0,
            font_color: FontColor::White,
            background: BarBackground::None,
            background_opacity: 0.5,
            text_above_bar: false,
        }
    }
}

impl ScaleBarStyle {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        let pct = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() { Ok(()) } else { Err(AnnotateError::InvalidStyle(format!("{name} must be > 0, got {v}"))) }
        };
        pct("bar_height_pct", self.bar_height_pct)?;
        pct("font_size_pct", self.font_size_pct)?;
        if !(0.0..=1.0).contains(&self.background_opacity) {
            return Err(AnnotateError::InvalidStyle(format!(
                "background_opacity must be in [0, 1], got {}",
                self.background_opacity
            )));
        }
        if let BarLength::Fixed(um) = self.length {
            if !(um > 0.0 && um.is_finite()) {
                return Err(AnnotateError::InvalidStyle(format!("fixed length must be > 0 µm, got {um}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerShape {
    Plus,
    Cross,
    Circle,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerColor {
    Red,
    Yellow,
    White,
    Black,
}

impl MarkerColor {
    pub fn rgb(self) -> Rgb {
        match self {
            MarkerColor::Red => Rgb([255, 0, 0]),
            MarkerColor::Yellow => Rgb([255, 255, 0]),
            MarkerColor::White => Rgb::WHITE,
            MarkerColor::Black => Rgb::BLACK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerStyle {
    pub shape: MarkerShape,
    pub color: MarkerColor,
    /// Marker extent as percent of the image width.
    pub size_pct: f64,
}

impl Default for MarkerStyle {
    fn default() -> Self {
        MarkerStyle { shape: MarkerShape::Plus, color: MarkerColor::Red, size_pct: 2.0 }
    }
}

impl MarkerStyle {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if self.size_pct > 0.0 && self.size_pct.is_finite() {
            Ok(())
        } else {
            Err(AnnotateError::InvalidStyle(format!("size_pct must be > 0, got {}", self.size_pct)))
        }
    }
}

/// Axis-aligned pixel rectangle, half-open on the right and bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        PixelRect { x, y, w, h }
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    pub fn contains_rect(&self, other: &PixelRect) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }
}

/// Where the scale bar, its label, and its backing go.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleBarLayout {
    pub image_width: u32,
    pub image_height: u32,
    pub bar_rect: PixelRect,
    pub text_rect: PixelRect,
    pub background_rect: PixelRect,
    pub label: String,
    pub length_um: f64,
    /// Rows appended below the image for data-bar positions.
    pub extends_canvas: Option<u32>,
}

impl ScaleBarLayout {
    pub fn output_height(&self) -> u32 {
        self.image_height + self.extends_canvas.unwrap_or(0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AnnotateError {
    #[error("invalid style: {0}")]
    InvalidStyle(String),
    #[error("pixel size must be > 0, got {0}")]
    BadPixelSize(f64),
    #[error("scale bar of {length_um} µm needs {bar_px} px but the image is {width} px wide")]
    BarTooWide { length_um: f64, bar_px: u64, width: u32 },
    #[error("scale bar block of {block_w}x{block_h} px does not fit a {width}x{height} image")]
    DoesNotFit { block_w: u32, block_h: u32, width: u32, height: u32 },
    #[error("length must be > 0, got {0}")]
    NonPositiveLength(f64),
    #[error("layout was computed for {expected_w}x{expected_h}, image is {actual_w}x{actual_h}")]
    LayoutMismatch { expected_w: u32, expected_h: u32, actual_w: u32, actual_h: u32 },
    #[error("unknown spectrum position id {0:?}")]
    UnknownPositionId(String),
}
