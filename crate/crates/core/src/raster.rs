//! Decoded pixel grids.

use std::fmt;

use thiserror::Error;

/// Sample layout of a [`Raster`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channels {
    Gray8,
    Gray16,
    Rgb8,
}

impl Channels {
    pub fn samples_per_pixel(self) -> usize {
        match self {
            Channels::Gray8 | Channels::Gray16 => 1,
            Channels::Rgb8 => 3,
        }
    }

    pub fn is_single_channel(self) -> bool {
        self.samples_per_pixel() == 1
    }
}

impl fmt::Display for Channels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channels::Gray8 => "gray8",
            Channels::Gray16 => "gray16",
            Channels::Rgb8 => "rgb8",
        })
    }
}

#[derive(Clone, PartialEq, Eq)]
pub enum Samples {
    Gray8(Vec<u8>),
    Gray16(Vec<u16>),
    Rgb8(Vec<u8>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("raster dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("sample buffer holds {actual} samples, {width}x{height} {channels} needs {expected}")]
    BufferLength {
        width: u32,
        height: u32,
        channels: Channels,
        expected: usize,
        actual: usize,
    },
}

/// Row-major pixel grid with no row padding.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    samples: Samples,
}

// Buffers can be tens of megabytes; show their size only.
impl fmt::Debug for Samples {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Samples::Gray8(v) => write!(f, "Gray8([{} samples])", v.len()),
            Samples::Gray16(v) => write!(f, "Gray16([{} samples])", v.len()),
            Samples::Rgb8(v) => write!(f, "Rgb8([{} samples])", v.len()),
        }
    }
}

impl fmt::Debug for Raster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels())
            .finish_non_exhaustive()
    }
}

impl Raster {
    pub fn new(width: u32, height: u32, samples: Samples) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyDimensions { width, height });
        }
        let channels = match &samples {
            Samples::Gray8(_) => Channels::Gray8,
            Samples::Gray16(_) => Channels::Gray16,
            Samples::Rgb8(_) => Channels::Rgb8,
        };
        let expected = width as usize * height as usize * channels.samples_per_pixel();
        let actual = match &samples {
            Samples::Gray8(v) | Samples::Rgb8(v) => v.len(),
            Samples::Gray16(v) => v.len(),
        };
        if expected != actual {
            return Err(RasterError::BufferLength { width, height, channels, expected, actual });
        }
        Ok(Raster { width, height, samples })
    }

    pub fn gray8(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        Raster::new(width, height, Samples::Gray8(data))
    }

    pub fn gray16(width: u32, height: u32, data: Vec<u16>) -> Result<Self, RasterError> {
        Raster::new(width, height, Samples::Gray16(data))
    }

    pub fn rgb8(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        Raster::new(width, height, Samples::Rgb8(data))
    }

    /// Constant RGB raster. Panics on zero dimensions.
    pub fn filled_rgb(width: u32, height: u32, color: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be non-zero");
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&color);
        }
        Raster { width, height, samples: Samples::Rgb8(data) }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn channels(&self) -> Channels {
        match self.samples {
            Samples::Gray8(_) => Channels::Gray8,
            Samples::Gray16(_) => Channels::Gray16,
            Samples::Rgb8(_) => Channels::Rgb8,
        }
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn into_samples(self) -> Samples {
        self.samples
    }

    /// Mutable 8-bit RGB buffer, `None` for other layouts.
    pub fn rgb_mut(&mut self) -> Option<&mut [u8]> {
        match &mut self.samples {
            Samples::Rgb8(v) => Some(v),
            _ => None,
        }
    }

    pub fn rgb(&self) -> Option<&[u8]> {
        match &self.samples {
            Samples::Rgb8(v) => Some(v),
            _ => None,
        }
    }

    /// Rows `[0, rows)` as a new raster.
    pub fn top_rows(&self, rows: u32) -> Raster {
        assert!(rows >= 1 && rows <= self.height);
        let len = self.width as usize * rows as usize * self.channels().samples_per_pixel();
        let samples = match &self.samples {
            Samples::Gray8(v) => Samples::Gray8(v[..len].to_vec()),
            Samples::Gray16(v) => Samples::Gray16(v[..len].to_vec()),
            Samples::Rgb8(v) => Samples::Rgb8(v[..len].to_vec()),
        };
        Raster { width: self.width, height: rows, samples }
    }

    /// Appends `rows` rows of `color` below an RGB raster.
    pub fn extend_rgb_rows(&mut self, rows: u32, color: [u8; 3]) {
        let Samples::Rgb8(v) = &mut self.samples else {
            panic!("extend_rgb_rows on a non-RGB raster");
        };
        let n = self.width as usize * rows as usize;
        v.reserve(n * 3);
        for _ in 0..n {
            v.extend_from_slice(&color);
        }
        self.height += rows;
    }

    /// Expands to 8-bit RGB. Gray16 is window-mapped from its own min..max
    /// onto 0..255; a constant Gray16 raster maps to 0.
    pub fn to_rgb8(&self) -> Raster {
        let samples = match &self.samples {
            Samples::Rgb8(v) => Samples::Rgb8(v.clone()),
            Samples::Gray8(v) => Samples::Rgb8(v.iter().flat_map(|&g| [g, g, g]).collect()),
            Samples::Gray16(v) => {
                let lo = v.iter().copied().min().unwrap_or(0);
                let hi = v.iter().copied().max().unwrap_or(0);
                let span = f64::from(hi - lo);
                Samples::Rgb8(
                    v.iter()
                        .map(|&s| {
                            if span == 0.0 {
                                0
                            } else {
                                crate::scalar::quantize_u8(f64::from(s - lo) * 255.0 / span)
                            }
                        })
                        .flat_map(|g| [g, g, g])
                        .collect(),
                )
            }
        };
        Raster { width: self.width, height: self.height, samples }
    }

    /// Consuming variant of [`Raster::to_rgb8`] that reuses an RGB buffer.
    pub fn into_rgb8(self) -> Raster {
        match self.samples {
            Samples::Rgb8(_) => self,
            _ => self.to_rgb8(),
        }
    }

    /// RGB triple at (x, y); gray layouts are reported with equal channels
    /// (Gray16 truncated to its high byte).
    pub fn pixel_rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let i = y as usize * self.width as usize + x as usize;
        match &self.samples {
            Samples::Gray8(v) => [v[i]; 3],
            Samples::Gray16(v) => [(v[i] >> 8) as u8; 3],
            Samples::Rgb8(v) => [v[3 * i], v[3 * i + 1], v[3 * i + 2]],
        }
    }

    /// FNV-1a over dimensions, layout and samples.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |b: u8| {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for b in self.width.to_le_bytes().into_iter().chain(self.height.to_le_bytes()) {
            feed(b);
        }
        feed(self.channels() as u8);
        match &self.samples {
            Samples::Gray8(v) | Samples::Rgb8(v) => v.iter().for_each(|&b| feed(b)),
            Samples::Gray16(v) => v.iter().flat_map(|s| s.to_le_bytes()).for_each(&mut feed),
        }
        h
    }
}
