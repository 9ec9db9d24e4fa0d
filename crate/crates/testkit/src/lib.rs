//! Writes small synthetic projects in the open interchange layout.
//!
//! Every pixel value is a closed-form function of its coordinates so tests
//! can recompute expectations without decoding anything.

use std::path::{Path, PathBuf};

use epmakit_core::codec::{encode_raster, ImageFormat};
use epmakit_core::project::{EntryKind, EntryManifest, MapLayerRef, Shape, SpectrumPosition, MANIFEST_FILE};
use epmakit_core::{Raster, Rgb};

pub const RED: Rgb = Rgb([255, 0, 0]);
pub const GREEN: Rgb = Rgb([0, 255, 0]);
pub const BLUE: Rgb = Rgb([0, 0, 255]);

/// Base image value at (x, y).
pub fn base_value(x: u32, y: u32) -> u8 {
    ((x * 7 + y * 3) % 251) as u8
}

/// Intensity of the `n`th synthetic layer at (x, y).
pub fn layer_value(n: usize, x: u32, y: u32) -> u8 {
    match n % 3 {
        0 => ((x * 255) / 97 % 256) as u8,
        1 => ((y * 13 + x) % 256) as u8,
        _ => if (x / 8 + y / 8) % 2 == 0 { 255 } else { 0 },
    }
}

pub fn gray_image(width: u32, height: u32, f: impl Fn(u32, u32) -> u8) -> Raster {
    let mut data = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height {
        for x in 0..width {
            data.push(f(x, y));
        }
    }
    Raster::gray8(width, height, data).expect("nonzero dims")
}

pub fn write_image(path: &Path, img: &Raster, format: ImageFormat) {
    let bytes = encode_raster(img, format, 100).expect("encode fixture");
    std::fs::write(path, bytes).expect("write fixture image");
}

#[derive(Debug, Clone)]
pub struct EntrySpec {
    pub id: String,
    pub kind: EntryKind,
    pub magnification: f64,
    pub width: u32,
    pub height: u32,
    /// (element, color) per layer, in ascending draw order.
    pub layers: Vec<(String, Rgb)>,
    pub positions: Vec<SpectrumPosition>,
}

impl EntrySpec {
    pub fn new(id: &str, width: u32, height: u32) -> Self {
        EntrySpec {
            id: id.to_string(),
            kind: EntryKind::SpectralImage,
            magnification: 1000.0,
            width,
            height,
            layers: Vec::new(),
            positions: Vec::new(),
        }
    }

    pub fn kind(mut self, kind: EntryKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn magnification(mut self, mag: f64) -> Self {
        self.magnification = mag;
        self
    }

    pub fn layer(mut self, element: &str, color: Rgb) -> Self {
        self.layers.push((element.to_string(), color));
        self
    }

    pub fn position(mut self, id: &str, shape: Shape) -> Self {
        self.positions.push(SpectrumPosition { id: id.to_string(), shape });
        self
    }

    pub fn manifest(&self) -> EntryManifest {
        EntryManifest {
            id: self.id.clone(),
            kind: self.kind,
            magnification: self.magnification,
            image: "image.png".to_string(),
            width: self.width,
            height: self.height,
            positions: self.positions.clone(),
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, (el, color))| MapLayerRef {
                    element: el.clone(),
                    color: *color,
                    file: format!("layers/{el}.tif"),
                    order: i as i64,
                    visible: true,
                })
                .collect(),
            date: Some("2024-03-01".to_string()),
        }
    }

    /// Writes `<root>/<id>/` with manifest, base image, and layer maps.
    /// JEOL entries get a 10% footer and a sidecar.
    pub fn write(&self, root: &Path) -> PathBuf {
        let dir = root.join(&self.id);
        std::fs::create_dir_all(dir.join("layers")).expect("create entry dir");
        let manifest = self.manifest();
        std::fs::write(dir.join(MANIFEST_FILE), manifest.to_json_string()).expect("write manifest");
        if self.kind == EntryKind::JeolImage {
            let footer = (self.height / 10).max(1);
            let full_h = self.height + footer;
            let img = gray_image(self.width, full_h, |x, y| if y < self.height { base_value(x, y) } else { 255 });
            write_image(&dir.join("image.png"), &img, ImageFormat::Png);
            let sidecar = format!(
                "$CM_MAG {mag}\nMAG={mag}\nFULL_SIZE={w}x{fh}\nDATA_SIZE={w}x{h}\n",
                mag = self.magnification,
                w = self.width,
                fh = full_h,
                h = self.height
            );
            std::fs::write(dir.join("image.txt"), sidecar).expect("write sidecar");
        } else {
            write_image(&dir.join("image.png"), &gray_image(self.width, self.height, base_value), ImageFormat::Png);
        }
        for (n, (el, _)) in self.layers.iter().enumerate() {
            let img = gray_image(self.width, self.height, |x, y| layer_value(n, x, y));
            write_image(&dir.join(format!("layers/{el}.tif")), &img, ImageFormat::Tiff);
        }
        dir
    }
}

/// Three entries of different kinds, sizes and annotations.
pub fn standard_entries() -> Vec<EntrySpec> {
    vec![
        EntrySpec::new("A01", 256, 192)
            .kind(EntryKind::PointId)
            .magnification(1500.0)
            .position("P1", Shape::Point { x: 40.0, y: 50.0 })
            .position("R1", Shape::Rect { x: 100.0, y: 20.0, w: 60.0, h: 40.0 })
            .position("C1", Shape::Circle { cx: 180.0, cy: 120.0, r: 25.0 })
            .position("G1", Shape::Polygon(vec![[20.0, 150.0], [80.0, 140.0], [60.0, 185.0]])),
        EntrySpec::new("B02", 300, 200)
            .magnification(800.0)
            .layer("Fe", RED)
            .layer("Si", GREEN)
            .layer("Al", BLUE)
            .position("S1", Shape::Point { x: 150.0, y: 100.0 }),
        EntrySpec::new("C03", 320, 240).kind(EntryKind::JeolImage).magnification(3000.0),
    ]
}

/// Writes [`standard_entries`] under `root` and returns their ids.
pub fn standard_project(root: &Path) -> Vec<String> {
    standard_entries()
        .iter()
        .map(|e| {
            e.write(root);
            e.id.clone()
        })
        .collect()
}

/// Which render stage a random edit targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditAspect {
    Layers,
    Markers,
    ScaleBar,
}

/// Applies one random edit of `aspect` to `s`, keeping it valid for an entry
/// with the given layer elements and position ids. Edits may be no-ops.
pub fn random_edit<R: rand::Rng>(
    rng: &mut R,
    s: &mut epmakit_core::RenderSettings,
    aspect: EditAspect,
    layers: &[&str],
    positions: &[&str],
) {
    use epmakit_core::annotate::{
        BarBackground, BarLength, BarPosition, FontColor, MarkerColor, MarkerShape, MarkerStyle, ScaleBarStyle,
    };
    use epmakit_core::{Background, PositionSelection};
    use rand::seq::SliceRandom;

    match aspect {
        EditAspect::Layers => match rng.gen_range(0..4) {
            0 => {
                let mut order: Vec<String> = layers.iter().map(|l| l.to_string()).collect();
                order.shuffle(rng);
                s.layer_order = if rng.gen_bool(0.2) { Vec::new() } else { order };
            }
            1 => {
                if let Some(l) = layers.choose(rng) {
                    s.layer_visibility.insert(l.to_string(), rng.gen_bool(0.5));
                }
            }
            2 => s.layer_opacity = f64::from(rng.gen_range(0..=20u8)) / 20.0,
            _ => {
                s.background = if rng.gen_bool(0.5) {
                    Background::ElectronImage
                } else {
                    Background::SolidColor(Rgb([rng.gen(), rng.gen(), rng.gen()]))
                }
            }
        },
        EditAspect::Markers => {
            if rng.gen_bool(0.5) {
                s.marker = MarkerStyle {
                    shape: *[MarkerShape::Plus, MarkerShape::Cross, MarkerShape::Circle, MarkerShape::Dot].choose(rng).unwrap(),
                    color: *[MarkerColor::Red, MarkerColor::Yellow, MarkerColor::White, MarkerColor::Black].choose(rng).unwrap(),
                    size_pct: f64::from(rng.gen_range(1..=16u8)) / 2.0,
                };
            } else {
                s.enabled_positions = match rng.gen_range(0..3) {
                    0 => PositionSelection::All,
                    1 => PositionSelection::None,
                    _ => PositionSelection::Ids(
                        positions.iter().filter(|_| rng.gen_bool(0.5)).map(|p| p.to_string()).collect(),
                    ),
                };
            }
        }
        EditAspect::ScaleBar => {
            if rng.gen_bool(0.15) {
                s.scale_bar = None;
                return;
            }
            let style = s.scale_bar.get_or_insert_with(ScaleBarStyle::default);
            match rng.gen_range(0..6) {
                0 => style.position = *BarPosition::ALL.choose(rng).unwrap(),
                1 => {
                    style.length = if rng.gen_bool(0.5) {
                        BarLength::Auto
                    } else {
                        BarLength::Fixed(*[5.0, 10.0, 20.0, 25.0].choose(rng).unwrap())
                    }
                }
                2 => style.font_color = if rng.gen_bool(0.5) { FontColor::White } else { FontColor::Black },
                3 => {
                    style.background = *[BarBackground::None, BarBackground::Black, BarBackground::White].choose(rng).unwrap();
                    style.background_opacity = f64::from(rng.gen_range(0..=4u8)) / 4.0;
                }
                4 => style.text_above_bar = !style.text_above_bar,
                _ => {
                    style.font_size_pct = f64::from(rng.gen_range(4..=12u8)) / 2.0;
                    style.bar_height_pct = f64::from(rng.gen_range(2..=10u8)) * 10.0;
                }
            }
        }
    }
}

/// Render-cache flags `[stage0..stage3]` expected after moving from `old` to
/// `new` on the same entry: the first stage whose inputs differ and
/// everything after it.
pub fn expected_recompute(
    entry: &EntryManifest,
    old: &epmakit_core::RenderSettings,
    new: &epmakit_core::RenderSettings,
) -> [bool; 4] {
    let layers_changed = old.resolve_layers(entry).ok() != new.resolve_layers(entry).ok()
        || old.layer_opacity.to_bits() != new.layer_opacity.to_bits()
        || old.background != new.background;
    let markers_changed = old.marker != new.marker || old.resolve_positions(entry).ok() != new.resolve_positions(entry).ok();
    let bar_changed = old.scale_bar != new.scale_bar;
    let first = if layers_changed {
        1
    } else if markers_changed {
        2
    } else if bar_changed {
        3
    } else {
        4
    };
    std::array::from_fn(|i| i >= first)
}
