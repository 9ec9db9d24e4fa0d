//! Layer compositing and the staged render pipeline.
//!
//! Rendering runs in four stages, each cached with the inputs it was built
//! from:
//!
//! | stage | output                         | key                                   |
//! |-------|--------------------------------|---------------------------------------|
//! | 0     | decoded, footer-cropped image  | entry                                 |
//! | 1     | map layers over the background | layer order/visibility, opacity, bg   |
//! | 2     | + spectrum markers             | marker style, enabled positions       |
//! | 3     | + scale bar                    | scale bar style, pixel size           |
//!
//! A key mismatch rebuilds that stage and every later one. The cached and
//! cacheless paths call the same stage functions, so their output is
//! bit-identical.

mod blend;

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

pub use blend::{composite_layers, normalize_intensity, IntensityField, LayerBlend, NormalizeMode};

use crate::annotate::{self, AnnotateError, MarkerStyle, ScaleBarStyle};
use crate::calibration::{CalibrationError, PixelSizeModel};
use crate::project::{LoadError, ProjectEntry};
use crate::raster::{Channels, Raster};
use crate::settings::{Background, RenderSettings, ResolvedLayer, SettingsError};

pub type Scalar = f64;

#[derive(Debug, Error, PartialEq)]
pub enum ComposeError {
    #[error("intensity layers must be single-channel, got {0}")]
    NotSingleChannel(Channels),
    #[error("composite base must be RGB, got {0}")]
    BaseNotRgb(Channels),
    #[error("opacity must be in [0, 1], got {0}")]
    InvalidOpacity(f64),
    #[error("layer is {actual_w}x{actual_h}, base is {expected_w}x{expected_h}")]
    DimensionMismatch { expected_w: u32, expected_h: u32, actual_w: u32, actual_h: u32 },
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Settings(#[from] SettingsError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// Inputs shared by every render that are not per-entry settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderContext {
    pub calibration: PixelSizeModel<f64>,
}

impl Default for RenderContext {
    fn default() -> Self {
        RenderContext { calibration: PixelSizeModel::default() }
    }
}

impl RenderContext {
    pub fn pixel_size(&self, entry: &ProjectEntry) -> Result<f64, CalibrationError> {
        let m = &entry.manifest;
        self.calibration.pixel_size_at(m.magnification, f64::from(m.width))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Stage1Key {
    layers: Vec<ResolvedLayer>,
    opacity: u64,
    background: Background,
}

#[derive(Debug, Clone, PartialEq)]
struct Stage2Key {
    marker: MarkerStyle,
    enabled: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
struct Stage3Key {
    scale_bar: Option<ScaleBarStyle>,
    pixel_size: u64,
}

#[derive(Debug, Clone)]
struct Stage0 {
    key: ProjectEntry,
    base: Arc<Raster>,
    layers: BTreeMap<String, Arc<Raster>>,
}

#[derive(Debug, Clone)]
struct Cached<K> {
    key: K,
    raster: Arc<Raster>,
}

/// Per-entry stage cache. Single writer; published rasters are immutable.
#[derive(Debug, Clone, Default)]
pub struct RenderCache {
    stage0: Option<Stage0>,
    stage1: Option<Cached<Stage1Key>>,
    stage2: Option<Cached<Stage2Key>>,
    stage3: Option<Cached<Stage3Key>>,
    counters: [u64; 4],
    last: [bool; 4],
}

impl RenderCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// How many times each stage has been computed.
    pub fn stage_compute_counters(&self) -> [u64; 4] {
        self.counters
    }

    /// Which stages the most recent render rebuilt.
    pub fn last_recomputed(&self) -> [bool; 4] {
        self.last
    }

    fn bump(&mut self, stage: usize) {
        self.counters[stage] += 1;
        self.last[stage] = true;
    }
}

struct Resolved {
    layers: Vec<ResolvedLayer>,
    enabled: BTreeSet<String>,
}

fn resolve(entry: &ProjectEntry, settings: &RenderSettings) -> Result<Resolved, RenderError> {
    settings.validate()?;
    Ok(Resolved {
        layers: settings.resolve_layers(&entry.manifest)?,
        enabled: settings.resolve_positions(&entry.manifest)?,
    })
}

fn stage1_composite(
    base: Cow<'_, Raster>,
    layers: &[(ResolvedLayer, &Raster)],
    settings: &RenderSettings,
) -> Result<Raster, RenderError> {
    let mut out = match settings.background {
        Background::ElectronImage => match base {
            Cow::Owned(owned) => owned.into_rgb8(),
            Cow::Borrowed(b) => b.to_rgb8(),
        },
        Background::SolidColor(c) => Raster::filled_rgb(base.width(), base.height(), c.0),
    };
    let mut blends = Vec::with_capacity(layers.len());
    for (l, r) in layers {
        blends.push(LayerBlend {
            color: l.color,
            field: normalize_intensity(r, NormalizeMode::Absolute)?,
            visible: l.visible,
        });
    }
    blend::composite_layers_in_place::<Scalar>(&mut out, &blends, settings.layer_opacity)?;
    Ok(out)
}

fn stage2_markers(
    img: &mut Raster,
    entry: &ProjectEntry,
    marker: &MarkerStyle,
    enabled: &BTreeSet<String>,
) -> Result<(), RenderError> {
    annotate::markers::draw_markers_in_place(img, &entry.manifest.positions, marker, enabled)?;
    Ok(())
}

fn stage3_scale_bar(img: &mut Raster, style: &ScaleBarStyle, pixel_size: f64) -> Result<(), RenderError> {
    let layout = annotate::layout_scale_bar(img.width(), img.height(), style, pixel_size)?;
    annotate::scale_bar::draw_scale_bar_in_place(img, &layout, style)?;
    Ok(())
}

/// Renders through `cache`, rebuilding only stages whose inputs changed.
pub fn render_entry(
    ctx: &RenderContext,
    entry: &ProjectEntry,
    settings: &RenderSettings,
    cache: &mut RenderCache,
) -> Result<Arc<Raster>, RenderError> {
    let resolved = resolve(entry, settings)?;
    let pixel_size = match settings.scale_bar {
        Some(_) => ctx.pixel_size(entry)?,
        None => 0.0,
    };
    cache.last = [false; 4];

    // rebuilding a stage drops every later one first, so a failure further
    // down can never leave a stale later stage that matches a future key
    if cache.stage0.as_ref().is_none_or(|s| &s.key != entry) {
        cache.stage0 = None;
        cache.stage1 = None;
        cache.stage2 = None;
        cache.stage3 = None;
        let base = entry.load_base()?;
        cache.stage0 = Some(Stage0 { key: entry.clone(), base: Arc::new(base), layers: BTreeMap::new() });
        cache.bump(0);
    }
    let s0 = cache.stage0.as_mut().expect("stage 0 populated");

    let key1 = Stage1Key {
        layers: resolved.layers.clone(),
        opacity: settings.layer_opacity.to_bits(),
        background: settings.background,
    };
    if cache.stage1.as_ref().is_none_or(|s| s.key != key1) {
        cache.stage1 = None;
        cache.stage2 = None;
        cache.stage3 = None;
        for l in resolved.layers.iter().filter(|l| l.visible) {
            if !s0.layers.contains_key(&l.element) {
                let layer_ref = entry.manifest.layer(&l.element).expect("resolved from the manifest");
                s0.layers.insert(l.element.clone(), Arc::new(entry.load_layer(layer_ref)?));
            }
        }
        let inputs: Vec<(ResolvedLayer, &Raster)> = resolved
            .layers
            .iter()
            .filter(|l| l.visible)
            .map(|l| (l.clone(), s0.layers[&l.element].as_ref()))
            .collect();
        let raster = stage1_composite(Cow::Borrowed(&s0.base), &inputs, settings)?;
        cache.stage1 = Some(Cached { key: key1, raster: Arc::new(raster) });
        cache.bump(1);
    }
    let s1 = Arc::clone(&cache.stage1.as_ref().expect("stage 1 populated").raster);

    let key2 = Stage2Key { marker: settings.marker, enabled: resolved.enabled };
    if cache.stage2.as_ref().is_none_or(|s| s.key != key2) {
        cache.stage2 = None;
        cache.stage3 = None;
        let raster = if key2.enabled.is_empty() {
            settings.marker.validate()?;
            s1
        } else {
            let mut img = (*s1).clone();
            stage2_markers(&mut img, entry, &key2.marker, &key2.enabled)?;
            Arc::new(img)
        };
        cache.stage2 = Some(Cached { key: key2, raster });
        cache.bump(2);
    }
    let s2 = Arc::clone(&cache.stage2.as_ref().expect("stage 2 populated").raster);

    let key3 = Stage3Key { scale_bar: settings.scale_bar, pixel_size: pixel_size.to_bits() };
    if cache.stage3.as_ref().is_none_or(|s| s.key != key3) {
        cache.stage3 = None;
        let raster = match &key3.scale_bar {
            None => s2,
            Some(style) => {
                let mut img = (*s2).clone();
                stage3_scale_bar(&mut img, style, pixel_size)?;
                Arc::new(img)
            }
        };
        cache.stage3 = Some(Cached { key: key3, raster });
        cache.bump(3);
    }
    Ok(Arc::clone(&cache.stage3.as_ref().expect("stage 3 populated").raster))
}

/// Renders without a cache, dropping intermediates as soon as possible.
pub fn render_uncached(ctx: &RenderContext, entry: &ProjectEntry, settings: &RenderSettings) -> Result<Raster, RenderError> {
    let resolved = resolve(entry, settings)?;
    let pixel_size = match settings.scale_bar {
        Some(_) => Some(ctx.pixel_size(entry)?),
        None => None,
    };
    let base = entry.load_base()?;
    let mut loaded = Vec::new();
    for l in resolved.layers.iter().filter(|l| l.visible) {
        let layer_ref = entry.manifest.layer(&l.element).expect("resolved from the manifest");
        loaded.push((l.clone(), entry.load_layer(layer_ref)?));
    }
    let inputs: Vec<(ResolvedLayer, &Raster)> = loaded.iter().map(|(l, r)| (l.clone(), r)).collect();
    let mut img = stage1_composite(Cow::Owned(base), &inputs, settings)?;
    drop(inputs);
    drop(loaded);
    if !resolved.enabled.is_empty() {
        stage2_markers(&mut img, entry, &settings.marker, &resolved.enabled)?;
    } else {
        settings.marker.validate()?;
    }
    if let (Some(style), Some(ps)) = (&settings.scale_bar, pixel_size) {
        stage3_scale_bar(&mut img, style, ps)?;
    }
    Ok(img)
}
