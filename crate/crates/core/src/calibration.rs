//! Pixel size as a power law of magnification.
//!
//! `pixel_size(mag, width) = k * mag^exponent * reference_width / width`,
//! fitted by linear least squares in log-log space.

use std::fmt::Write as _;

use thiserror::Error;

use crate::scalar::Scalar;

/// Default reference acquisition width in pixels.
pub const REFERENCE_WIDTH: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample<T> {
    pub magnification: T,
    /// µm per pixel at the model's reference width.
    pub pixel_size: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSizeModel<T> {
    /// µm·magnification per pixel at `reference_width`.
    pub k: T,
    pub exponent: T,
    pub reference_width: u32,
    /// RMS of the natural-log residuals.
    pub rms_residual: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOfView<T> {
    pub x: T,
    pub y: T,
    pub diagonal: T,
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("need at least {needed} samples with distinct magnifications, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample {index} has a non-positive magnification or pixel size")]
    NonPositiveSample { index: usize },
    #[error("magnification must be > 0, got {0}")]
    BadMagnification(f64),
    #[error("image width must be >= 1 pixel, got {0}")]
    BadWidth(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("fit does not converge to finite values (k={k}, b={exponent})")]
    NonFiniteFit { k: f64, exponent: f64 },
}

impl<T: Scalar> PixelSizeModel<T> {
    /// Inverse-proportional model with the given constant.
    pub fn inverse(k: T) -> Self {
        PixelSizeModel { k, exponent: -T::one(), reference_width: REFERENCE_WIDTH, rms_residual: T::zero() }
    }

    /// µm per pixel for an image `width_px` wide at `mag`.
    pub fn pixel_size_at(&self, mag: T, width_px: T) -> Result<T, CalibrationError> {
        if !(mag > T::zero()) || !mag.is_finite() {
            return Err(CalibrationError::BadMagnification(mag.as_f64()));
        }
        if !(width_px >= T::one()) || !width_px.is_finite() {
            return Err(CalibrationError::BadWidth(width_px.as_f64()));
        }
        let reference = T::of(f64::from(self.reference_width));
        Ok(self.k * mag.powf(self.exponent) * (reference / width_px))
    }

    pub fn field_of_view(&self, mag: T, width_px: T, height_px: T) -> Result<FieldOfView<T>, CalibrationError> {
        let ps = self.pixel_size_at(mag, width_px)?;
        let x = width_px * ps;
        let y = height_px * ps;
        Ok(FieldOfView { x, y, diagonal: x.hypot(y) })
    }
}

impl Default for PixelSizeModel<f64> {
    /// Inverse-proportional model with k = 116.73 at 1024 px.
    fn default() -> Self {
        PixelSizeModel::inverse(116.73)
    }
}

/// Fits `ln(ps) = ln(k) + exponent * ln(mag)`.
///
/// With `constrain_exponent` the exponent is fixed at -1 and `k` is the
/// geometric mean of `mag * ps`.
pub fn fit_pixel_size_model<T: Scalar>(
    samples: &[CalibrationSample<T>],
    constrain_exponent: bool,
) -> Result<PixelSizeModel<T>, CalibrationError> {
    for (index, s) in samples.iter().enumerate() {
        let ok = |v: T| v > T::zero() && v.is_finite();
        if !ok(s.magnification) || !ok(s.pixel_size) {
            return Err(CalibrationError::NonPositiveSample { index });
        }
    }
    let mut mags: Vec<T> = samples.iter().map(|s| s.magnification).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    mags.dedup();
    let needed = if constrain_exponent { 1 } else { 2 };
    if mags.len() < needed {
        return Err(CalibrationError::TooFewSamples { needed, got: mags.len() });
    }

    let n = T::of(samples.len() as f64);
    let logs: Vec<(T, T)> = samples.iter().map(|s| (s.magnification.ln(), s.pixel_size.ln())).collect();
    let (k, exponent) = if constrain_exponent {
        // geometric mean of mag*ps, taken relative to the first product so a
        // single sample reproduces it exactly
        let first = samples[0].magnification * samples[0].pixel_size;
        let rel = samples
            .iter()
            .fold(T::zero(), |acc, s| acc + (s.magnification * s.pixel_size / first).ln())
            / n;
        (first * rel.exp(), -T::one())
    } else {
        let mx = logs.iter().fold(T::zero(), |acc, &(lx, _)| acc + lx) / n;
        let my = logs.iter().fold(T::zero(), |acc, &(_, ly)| acc + ly) / n;
        let (sxy, sxx) = logs.iter().fold((T::zero(), T::zero()), |(sxy, sxx), &(lx, ly)| {
            let dx = lx - mx;
            (sxy + dx * (ly - my), sxx + dx * dx)
        });
        let slope = sxy / sxx;
        ((my - slope * mx).exp(), slope)
    };
    let ln_k = k.ln();
    let sse = logs.iter().fold(T::zero(), |acc, &(lx, ly)| {
        let r = ly - (ln_k + exponent * lx);
        acc + r * r
    });
    if !(k.is_finite() && k > T::zero() && exponent.is_finite()) {
        return Err(CalibrationError::NonFiniteFit { k: k.as_f64(), exponent: exponent.as_f64() });
    }
    Ok(PixelSizeModel { k, exponent, reference_width: REFERENCE_WIDTH, rms_residual: (sse / n).sqrt() })
}

/// Reads `magnification,pixel_size_um[,width_px]` CSV. Samples taken at a
/// width other than `reference_width` are rescaled to it.
pub fn parse_calibration_csv(text: &str, reference_width: u32) -> Result<Vec<CalibrationSample<f64>>, CalibrationError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or(CalibrationError::Parse { line: 1, message: "empty calibration file".into() })?;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    if cols.len() < 2 || cols[0] != "magnification" || cols[1] != "pixel_size_um" {
        return Err(CalibrationError::Parse {
            line: 1,
            message: "header must be magnification,pixel_size_um[,width_px]".into(),
        });
    }
    let with_width = cols.get(2).is_some_and(|c| c == "width_px");
    let mut out = Vec::new();
    for (i, l) in lines {
        let line = i + 1;
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        let num = |idx: usize| -> Result<f64, CalibrationError> {
            fields
                .get(idx)
                .ok_or_else(|| CalibrationError::Parse { line, message: format!("missing column {}", idx + 1) })?
                .parse::<f64>()
                .map_err(|e| CalibrationError::Parse { line, message: e.to_string() })
        };
        let magnification = num(0)?;
        let mut pixel_size = num(1)?;
        if with_width && fields.get(2).is_some_and(|f| !f.is_empty()) {
            pixel_size *= num(2)? / f64::from(reference_width);
        }
        out.push(CalibrationSample { magnification, pixel_size });
    }
    Ok(out)
}

impl PixelSizeModel<f64> {
    /// `key=value` settings text; values are printed with round-trip precision.
    pub fn to_settings_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "b={}", self.exponent);
        let _ = writeln!(s, "reference_width={}", self.reference_width);
        let _ = writeln!(s, "rms_residual={}", self.rms_residual);
        s
    }

    pub fn from_settings_text(text: &str) -> Result<Self, CalibrationError> {
        let (mut k, mut b, mut reference_width, mut rms) = (None, None, REFERENCE_WIDTH, 0.0);
        for (i, l) in text.lines().enumerate() {
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let perr = |m: String| CalibrationError::Parse { line: i + 1, message: m };
            let (key, v) = l.split_once('=').ok_or_else(|| perr(format!("expected key=value, got {l:?}")))?;
            let v = v.trim();
            let f = || v.parse::<f64>().map_err(|e| perr(format!("{key}: {e}")));
            match key.trim() {
                "k" => k = Some(f()?),
                "b" => b = Some(f()?),
                "reference_width" => {
                    reference_width = v.parse().map_err(|e| perr(format!("reference_width: {e}")))?
                }
                "rms_residual" => rms = f()?,
                _ => {}
            }
        }
        let missing = |m: &str| CalibrationError::Parse { line: 0, message: format!("missing {m}") };
        let k = k.ok_or_else(|| missing("k"))?;
        if !(k > 0.0) || reference_width == 0 {
            return Err(CalibrationError::Parse { line: 0, message: "k and reference_width must be positive".into() });
        }
        Ok(PixelSizeModel { k, exponent: b.ok_or_else(|| missing("b"))?, reference_width, rms_residual: rms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_constrained_fit_is_exact() {
        let m = fit_pixel_size_model(&[CalibrationSample { magnification: 100.0, pixel_size: 1.0 }], true).unwrap();
        assert_eq!(m.k, 100.0);
        assert_eq!(m.exponent, -1.0);
        assert_eq!(m.rms_residual, 0.0);
    }

    #[test]
    fn recovers_exact_power_law() {
        let samples: Vec<_> = [10.0f64, 50.0, 300.0, 2000.0, 9000.0]
            .iter()
            .map(|&m| CalibrationSample { magnification: m, pixel_size: 200.0 / m })
            .collect();
        let fit = fit_pixel_size_model(&samples, false).unwrap();
        assert!((fit.k / 200.0 - 1.0).abs() < 1e-9, "{}", fit.k);
        assert!((fit.exponent + 1.0).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let s = |m, p| CalibrationSample { magnification: m, pixel_size: p };
        assert_eq!(
            fit_pixel_size_model(&[s(100.0, 1.0)], false),
            Err(CalibrationError::TooFewSamples { needed: 2, got: 1 })
        );
        assert_eq!(
            fit_pixel_size_model(&[s(100.0, 1.0), s(100.0, 1.1)], false),
            Err(CalibrationError::TooFewSamples { needed: 2, got: 1 })
        );
        assert_eq!(
            fit_pixel_size_model(&[s(100.0, 1.0), s(200.0, 0.0)], false),
            Err(CalibrationError::NonPositiveSample { index: 1 })
        );
        assert_eq!(fit_pixel_size_model::<f64>(&[], true), Err(CalibrationError::TooFewSamples { needed: 1, got: 0 }));
        let m = PixelSizeModel::<f64>::default();
        assert_eq!(m.pixel_size_at(0.0, 1024.0), Err(CalibrationError::BadMagnification(0.0)));
        assert_eq!(m.pixel_size_at(10.0, 0.0), Err(CalibrationError::BadWidth(0.0)));
    }

    #[test]
    fn doubling_width_keeps_field_of_view() {
        let m = PixelSizeModel::<f64>::default();
        let a = m.field_of_view(40.0, 1024.0, 768.0).unwrap();
        let b = m.field_of_view(40.0, 2048.0, 1536.0).unwrap();
        assert!((a.x - b.x).abs() <= 1e-12 * a.x);
        assert!((a.diagonal - b.diagonal).abs() <= 1e-12 * a.diagonal);
    }

    #[test]
    fn works_in_f32() {
        let samples: Vec<_> = [10.0f32, 100.0, 1000.0]
            .iter()
            .map(|&m| CalibrationSample { magnification: m, pixel_size: 116.73 / m })
            .collect();
        let fit = fit_pixel_size_model(&samples, false).unwrap();
        assert!((fit.k - 116.73).abs() < 1e-2);
        assert!((fit.pixel_size_at(1000.0, 1024.0).unwrap() - 0.11673).abs() < 1e-5);
    }

    #[test]
    fn csv_rescales_width_column() {
        let text = "magnification,pixel_size_um,width_px\n100,0.5,2048\n200,0.25\n";
        let s = parse_calibration_csv(text, 1024).unwrap();
        assert_eq!(s[0], CalibrationSample { magnification: 100.0, pixel_size: 1.0 });
        assert_eq!(s[1], CalibrationSample { magnification: 200.0, pixel_size: 0.25 });
        assert!(matches!(parse_calibration_csv("mag,ps\n1,2\n", 1024), Err(CalibrationError::Parse { line: 1, .. })));
        assert!(matches!(
            parse_calibration_csv("magnification,pixel_size_um\n1,abc\n", 1024),
            Err(CalibrationError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn settings_text_round_trips_exactly() {
        let m = PixelSizeModel { k: 116.72901816315232, exponent: -0.9999986940889487, reference_width: 1024, rms_residual: 2.3e-6 };
        assert_eq!(PixelSizeModel::from_settings_text(&m.to_settings_text()).unwrap(), m);
        assert!(PixelSizeModel::from_settings_text("b=-1\n").is_err());
    }
}
