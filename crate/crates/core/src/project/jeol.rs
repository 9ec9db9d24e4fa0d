//! JEOL PC-SEM sidecar geometry and footer cropping.

use thiserror::Error;

use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JeolSidecar {
    pub magnification: f64,
    pub full_width: u32,
    pub full_height: u32,
    /// Image region above the footer.
    pub data_width: u32,
    pub data_height: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SidecarError {
    #[error("sidecar is missing key {0}")]
    MissingKey(&'static str),
    #[error("bad value for sidecar key {key}: {reason}")]
    BadValue { key: &'static str, reason: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("raster is {actual_width}x{actual_height} but the sidecar describes {expected_width}x{expected_height}")]
pub struct DimensionMismatch {
    pub expected_width: u32,
    pub expected_height: u32,
    pub actual_width: u32,
    pub actual_height: u32,
}

fn parse_size(key: &'static str, v: &str) -> Result<(u32, u32), SidecarError> {
    let bad = || SidecarError::BadValue { key, reason: format!("expected <w>x<h>, got {v:?}") };
    let (w, h) = v
        .split_once(['x', 'X', '×'])
        .ok_or_else(bad)?;
    let w: u32 = w.trim().parse().map_err(|_| bad())?;
    let h: u32 = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// Parses line-oriented `KEY=VALUE` sidecar text. Blank lines, `#`/`;`
/// comments, and unknown keys are skipped.
pub fn parse_jeol_sidecar(bytes: &[u8]) -> Result<JeolSidecar, SidecarError> {
    let text = String::from_utf8_lossy(bytes);
    let (mut mag, mut full, mut data) = (None, None, None);
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else { continue };
        let v = v.trim();
        match k.trim().to_ascii_uppercase().as_str() {
            "MAG" => {
                let m: f64 = v.parse().map_err(|_| SidecarError::BadValue {
                    key: "MAG",
                    reason: format!("{v:?} is not a number"),
                })?;
                if !(m.is_finite() && m > 0.0) {
                    return Err(SidecarError::BadValue { key: "MAG", reason: format!("{m} is not > 0") });
                }
                mag = Some(m);
            }
            "FULL_SIZE" => full = Some(parse_size("FULL_SIZE", v)?),
            "DATA_SIZE" => data = Some(parse_size("DATA_SIZE", v)?),
            _ => {}
        }
    }
    let magnification = mag.ok_or(SidecarError::MissingKey("MAG"))?;
    let (full_width, full_height) = full.ok_or(SidecarError::MissingKey("FULL_SIZE"))?;
    let (data_width, data_height) = data.ok_or(SidecarError::MissingKey("DATA_SIZE"))?;
    if data_height > full_height {
        return Err(SidecarError::BadValue {
            key: "DATA_SIZE",
            reason: format!("data height {data_height} exceeds full height {full_height}"),
        });
    }
    if data_width != full_width {
        return Err(SidecarError::BadValue {
            key: "DATA_SIZE",
            reason: format!("data width {data_width} differs from full width {full_width}"),
        });
    }
    Ok(JeolSidecar { magnification, full_width, full_height, data_width, data_height })
}

/// Keeps rows `[0, data_height)`, bit-identical to the input.
pub fn crop_jeol_footer(img: &Raster, sc: &JeolSidecar) -> Result<Raster, DimensionMismatch> {
    if img.dims() != (sc.full_width, sc.full_height) {
        return Err(DimensionMismatch {
            expected_width: sc.full_width,
            expected_height: sc.full_height,
            actual_width: img.width(),
            actual_height: img.height(),
        });
    }
    Ok(img.top_rows(sc.data_height))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIDECAR: &str = "MAG=430\nFULL_SIZE=1280x1024\nDATA_SIZE=1280x960\n";

    #[test]
    fn parses_geometry() {
        let sc = parse_jeol_sidecar(SIDECAR.as_bytes()).unwrap();
        assert_eq!(sc.magnification, 430.0);
        assert_eq!((sc.full_width, sc.full_height), (1280, 1024));
        assert_eq!((sc.data_width, sc.data_height), (1280, 960));
    }

    #[test]
    fn tolerates_comments_and_unknown_keys() {
        let text = "# PC-SEM export\r\nOPERATOR = someone\r\nMAG = 430\r\nFULL_SIZE = 1280 x 1024\r\nDATA_SIZE=1280X960\r\n";
        assert_eq!(parse_jeol_sidecar(text.as_bytes()).unwrap().data_height, 960);
    }

    #[test]
    fn data_taller_than_full_is_bad_value() {
        let text = SIDECAR.replace("1280x960", "1280x1100");
        assert!(matches!(
            parse_jeol_sidecar(text.as_bytes()),
            Err(SidecarError::BadValue { key: "DATA_SIZE", .. })
        ));
    }

    #[test]
    fn missing_mag() {
        let text = SIDECAR.replace("MAG=430\n", "");
        assert_eq!(parse_jeol_sidecar(text.as_bytes()), Err(SidecarError::MissingKey("MAG")));
    }

    fn ramp(w: u32, h: u32) -> Raster {
        let data = (0..w * h).map(|i| (i % 251) as u8).collect();
        Raster::gray8(w, h, data).unwrap()
    }

    #[test]
    fn crop_keeps_top_rows_bit_identical() {
        let img = ramp(1280, 1024);
        let sc = parse_jeol_sidecar(SIDECAR.as_bytes()).unwrap();
        let out = crop_jeol_footer(&img, &sc).unwrap();
        assert_eq!(out.dims(), (1280, 960));
        assert_eq!(out, img.top_rows(960));
        for y in [0u32, 500, 959] {
            assert_eq!(out.pixel_rgb(17, y), img.pixel_rgb(17, y));
        }
    }

    #[test]
    fn crop_identity_when_no_footer() {
        let img = ramp(64, 48);
        let sc = JeolSidecar { magnification: 1.0, full_width: 64, full_height: 48, data_width: 64, data_height: 48 };
        assert_eq!(crop_jeol_footer(&img, &sc).unwrap(), img);
    }

    #[test]
    fn crop_rejects_wrong_dims() {
        let img = ramp(1024, 1024);
        let sc = parse_jeol_sidecar(SIDECAR.as_bytes()).unwrap();
        assert!(crop_jeol_footer(&img, &sc).is_err());
    }
}
