use rayon::prelude::*;

use crate::color::Rgb;
use crate::raster::{Raster, Samples};
use crate::scalar::{quantize_u8, Scalar};

use super::ComposeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizeMode {
    /// `sample / max_representable` (255 or 65535).
    #[default]
    Absolute,
    /// `(sample - min) / (max - min)`; constant layers map to 0.
    MinMax,
}

/// Per-pixel intensity in [0, 1], computed on demand from a single-channel
/// raster so that no float copy of the layer is held.
#[derive(Debug, Clone, Copy)]
pub struct IntensityField<'a> {
    raster: &'a Raster,
    offset: f64,
    scale: f64,
}

impl IntensityField<'_> {
    pub fn dims(&self) -> (u32, u32) {
        self.raster.dims()
    }

    #[inline]
    fn raw(&self, i: usize) -> f64 {
        match self.raster.samples() {
            Samples::Gray8(v) => f64::from(v[i]),
            Samples::Gray16(v) => f64::from(v[i]),
            Samples::Rgb8(_) => unreachable!("checked at construction"),
        }
    }

    #[inline]
    pub fn value<T: Scalar>(&self, i: usize) -> T {
        T::of((self.raw(i) - self.offset) * self.scale)
    }

    pub fn to_vec<T: Scalar>(&self) -> Vec<T> {
        (0..self.raster.pixel_count()).map(|i| self.value(i)).collect()
    }
}

pub fn normalize_intensity(layer: &Raster, mode: NormalizeMode) -> Result<IntensityField<'_>, ComposeError> {
    let max_repr = match layer.samples() {
        Samples::Gray8(_) => 255.0,
        Samples::Gray16(_) => 65535.0,
        Samples::Rgb8(_) => return Err(ComposeError::NotSingleChannel(layer.channels())),
    };
    let (offset, scale) = match mode {
        NormalizeMode::Absolute => (0.0, 1.0 / max_repr),
        NormalizeMode::MinMax => {
            let (lo, hi) = match layer.samples() {
                Samples::Gray8(v) => {
                    let (lo, hi) = v.iter().fold((u8::MAX, 0), |(lo, hi), &s| (lo.min(s), hi.max(s)));
                    (f64::from(lo), f64::from(hi))
                }
                Samples::Gray16(v) => {
                    let (lo, hi) = v.iter().fold((u16::MAX, 0), |(lo, hi), &s| (lo.min(s), hi.max(s)));
                    (f64::from(lo), f64::from(hi))
                }
                Samples::Rgb8(_) => unreachable!(),
            };
            if hi > lo { (lo, 1.0 / (hi - lo)) } else { (lo, 0.0) }
        }
    };
    Ok(IntensityField { raster: layer, offset, scale })
}

/// One tinted map layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerBlend<'a> {
    pub color: Rgb,
    pub field: IntensityField<'a>,
    pub visible: bool,
}

/// Folds layers bottom to top over `base` with the over operator and
/// per-pixel alpha `opacity * t`. Accumulates in `T` and rounds once.
pub fn composite_layers<T: Scalar>(base: &Raster, layers: &[LayerBlend<'_>], opacity: T) -> Result<Raster, ComposeError> {
    if base.channels() != crate::raster::Channels::Rgb8 {
        return Err(ComposeError::BaseNotRgb(base.channels()));
    }
    let mut out = base.clone();
    composite_layers_in_place(&mut out, layers, opacity)?;
    Ok(out)
}

pub(crate) fn composite_layers_in_place<T: Scalar>(
    out: &mut Raster,
    layers: &[LayerBlend<'_>],
    opacity: T,
) -> Result<(), ComposeError> {
    if !(opacity >= T::zero() && opacity <= T::one()) {
        return Err(ComposeError::InvalidOpacity(opacity.as_f64()));
    }
    let dims = out.dims();
    for l in layers {
        if l.field.dims() != dims {
            let (w, h) = l.field.dims();
            return Err(ComposeError::DimensionMismatch { expected_w: dims.0, expected_h: dims.1, actual_w: w, actual_h: h });
        }
    }
    let visible: Vec<(T, [T; 3], &IntensityField<'_>)> = layers
        .iter()
        .filter(|l| l.visible)
        .map(|l| (opacity, l.color.0.map(|c| T::of(f64::from(c))), &l.field))
        .collect();
    if visible.is_empty() || opacity == T::zero() {
        return Ok(());
    }
    let width = dims.0 as usize;
    let buf = out.rgb_mut().ok_or(ComposeError::BaseNotRgb(crate::raster::Channels::Gray8))?;
    buf.par_chunks_mut(3 * width).enumerate().for_each(|(y, row)| {
        for x in 0..width {
            let i = y * width + x;
            let px = &mut row[3 * x..3 * x + 3];
            let mut acc = [T::of(f64::from(px[0])), T::of(f64::from(px[1])), T::of(f64::from(px[2]))];
            for (op, color, field) in &visible {
                let a = *op * field.value::<T>(i);
                if a == T::zero() {
                    continue;
                }
                let keep = T::one() - a;
                for c in 0..3 {
                    acc[c] = a * color[c] + keep * acc[c];
                }
            }
            for c in 0..3 {
                px[c] = quantize_u8(acc[c]);
            }
        }
    });
    Ok(())
}
