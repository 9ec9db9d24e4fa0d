use crate::raster::Raster;
use crate::scalar::{quantize_u8, Scalar};

use super::glyphs::{for_each_text_pixel, TextMetrics};
use super::{AnnotateError, BarBackground, BarLength, BarPosition, FontColor, PixelRect, ScaleBarLayout, ScaleBarStyle};

/// Mantissas of "nice" bar lengths. Consecutive ratios never exceed 4/3
/// (including 8 -> 10), so `[w/4, w/3]` always holds one of them.
pub const NICE_MANTISSAS: [f64; 10] = [1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0];

/// Largest nice length not exceeding a third of the image width (µm).
pub fn auto_bar_length<T: Scalar>(width_px: u32, pixel_size: T) -> T {
    let target = T::of(f64::from(width_px)) * pixel_size / T::of(3.0);
    let decade = target.log10().floor();
    let mut best = T::zero();
    // the decade estimate can be off by one when log10 rounds
    for e in [decade - T::one(), decade, decade + T::one()] {
        let scale = T::of(10.0).powf(e);
        for &m in &NICE_MANTISSAS {
            let v = T::of(m) * scale;
            if v <= target && v > best {
                best = v;
            }
        }
    }
    best
}

/// `30 µm`, `500 nm`, `2.5 mm`: the number is kept in [1, 1000) where the
/// unit set allows and printed with at most three decimals.
pub fn format_length_label(length_um: f64) -> Result<String, AnnotateError> {
    if !(length_um > 0.0 && length_um.is_finite()) {
        return Err(AnnotateError::NonPositiveLength(length_um));
    }
    let (value, unit) = if length_um < 1.0 {
        (length_um * 1000.0, "nm")
    } else if length_um >= 1000.0 {
        (length_um / 1000.0, "mm")
    } else {
        (length_um, "µm")
    };
    let mut num = format!("{value:.3}");
    if num.contains('.') {
        num = num.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    Ok(format!("{num} {unit}"))
}

/// Inverse of [`format_length_label`], in µm.
pub fn parse_length_label(label: &str) -> Option<f64> {
    let (num, unit) = label.split_once(' ')?;
    let v: f64 = num.parse().ok()?;
    let scale = match unit {
        "nm" => 1e-3,
        "µm" | "um" => 1.0,
        "mm" => 1e3,
        _ => return None,
    };
    Some(v * scale)
}

fn round_px(v: f64) -> u32 {
    v.round().max(0.0) as u32
}

/// Positions the bar, its label, and the backing rectangle.
///
/// Text height is `font_size_pct` of the image height, bar height is
/// `bar_height_pct` of the text height, and the block keeps a margin of one
/// text height from the image edges. Data-bar positions append a band of
/// 2.2 text heights (taller only if the block itself needs it).
pub fn layout_scale_bar(
    width: u32,
    height: u32,
    style: &ScaleBarStyle,
    pixel_size: f64,
) -> Result<ScaleBarLayout, AnnotateError> {
    style.validate()?;
    if !(pixel_size > 0.0 && pixel_size.is_finite()) {
        return Err(AnnotateError::BadPixelSize(pixel_size));
    }
    let text_h = round_px(style.font_size_pct / 100.0 * f64::from(height)).max(1);
    let bar_h = round_px(style.bar_height_pct / 100.0 * f64::from(text_h)).max(1);
    let length_um = match style.length {
        BarLength::Auto => auto_bar_length(width, pixel_size),
        BarLength::Fixed(um) => um,
    };
    let bar_px = (length_um / pixel_size).round();
    if bar_px > f64::from(width) {
        return Err(AnnotateError::BarTooWide { length_um, bar_px: bar_px as u64, width });
    }
    let bar_w = (bar_px as u32).max(1);
    let label = format_length_label(length_um)?;
    let metrics = TextMetrics::for_height(text_h);
    let text_w = metrics.width(&label);

    let gap = round_px(f64::from(text_h) / 4.0).max(1);
    let pad = round_px(f64::from(text_h) * 0.4).max(1);
    let margin = text_h;
    let block_w = bar_w.max(text_w);
    let block_h = text_h + gap + bar_h;

    let too_big = || AnnotateError::DoesNotFit { block_w, block_h, width, height };
    let horizontal = |inset: u32| -> Result<u32, AnnotateError> {
        let max_x = width.checked_sub(block_w + inset).ok_or_else(too_big)?;
        if max_x < inset {
            return Err(too_big());
        }
        let desired = match style.position {
            BarPosition::ImageTopLeft | BarPosition::ImageBottomLeft | BarPosition::BarBelowLeft => margin,
            BarPosition::ImageBottomCenter | BarPosition::BarBelowCenter => (width - block_w) / 2,
            _ => width.saturating_sub(margin + block_w),
        };
        Ok(desired.clamp(inset, max_x))
    };

    let (bx, by, background_rect, extends_canvas) = if style.position.is_data_bar() {
        let band = round_px(2.2 * f64::from(text_h)).max(block_h + 2);
        let bx = horizontal(0)?;
        let by = height + (band - block_h) / 2;
        (bx, by, PixelRect::new(0, height, width, band), Some(band))
    } else {
        let bx = horizontal(pad)?;
        let max_y = height.checked_sub(block_h + pad).filter(|&m| m >= pad).ok_or_else(too_big)?;
        let desired = match style.position {
            BarPosition::ImageTopLeft | BarPosition::ImageTopRight => margin,
            _ => height.saturating_sub(margin + block_h),
        };
        let by = desired.clamp(pad, max_y);
        let bg = PixelRect::new(bx - pad, by - pad, block_w + 2 * pad, block_h + 2 * pad);
        (bx, by, bg, None)
    };

    let bar_x = bx + (block_w - bar_w) / 2;
    let text_x = bx + (block_w - text_w) / 2;
    let (text_y, bar_y) = if style.text_above_bar { (by, by + text_h + gap) } else { (by + bar_h + gap, by) };

    Ok(ScaleBarLayout {
        image_width: width,
        image_height: height,
        bar_rect: PixelRect::new(bar_x, bar_y, bar_w, bar_h),
        text_rect: PixelRect::new(text_x, text_y, text_w, text_h),
        background_rect,
        label,
        length_um,
        extends_canvas,
    })
}

fn band_color(style: &ScaleBarStyle) -> [u8; 3] {
    match style.background {
        BarBackground::Black => [0, 0, 0],
        BarBackground::White => [255, 255, 255],
        BarBackground::None => match style.font_color {
            FontColor::White => [0, 0, 0],
            FontColor::Black => [255, 255, 255],
        },
    }
}

/// Draws the bar and label. On-image backgrounds are alpha-blended at the
/// style's opacity; data-bar positions get an opaque band appended.
pub fn draw_scale_bar(img: &Raster, layout: &ScaleBarLayout, style: &ScaleBarStyle) -> Result<Raster, AnnotateError> {
    let mut out = img.to_rgb8();
    draw_scale_bar_in_place(&mut out, layout, style)?;
    Ok(out)
}

pub(crate) fn draw_scale_bar_in_place(
    out: &mut Raster,
    layout: &ScaleBarLayout,
    style: &ScaleBarStyle,
) -> Result<(), AnnotateError> {
    if out.dims() != (layout.image_width, layout.image_height) {
        return Err(AnnotateError::LayoutMismatch {
            expected_w: layout.image_width,
            expected_h: layout.image_height,
            actual_w: out.width(),
            actual_h: out.height(),
        });
    }
    let width = out.width() as usize;
    if let Some(band) = layout.extends_canvas {
        out.extend_rgb_rows(band, band_color(style));
    }
    let buf = out.rgb_mut().expect("draw target is RGB");

    if layout.extends_canvas.is_none() && style.background != BarBackground::None {
        let bg = if style.background == BarBackground::Black { 0.0 } else { 255.0 };
        let a = style.background_opacity;
        let r = layout.background_rect;
        for y in r.y..r.bottom() {
            let row = y as usize * width;
            for x in r.x..r.right() {
                let i = 3 * (row + x as usize);
                for s in &mut buf[i..i + 3] {
                    *s = quantize_u8(a * bg + (1.0 - a) * f64::from(*s));
                }
            }
        }
    }

    let ink = style.font_color.rgb().0;
    let b = layout.bar_rect;
    for y in b.y..b.bottom() {
        let row = y as usize * width;
        for x in b.x..b.right() {
            let i = 3 * (row + x as usize);
            buf[i..i + 3].copy_from_slice(&ink);
        }
    }
    let t = layout.text_rect;
    for_each_text_pixel(&layout.label, TextMetrics::for_height(t.h), |dx, dy| {
        let i = 3 * ((t.y + dy) as usize * width + (t.x + dx) as usize);
        buf[i..i + 3].copy_from_slice(&ink);
    });
    Ok(())
}
