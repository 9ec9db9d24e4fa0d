//! `entry.json` reader and writer.
//!
//! The manifest is parsed into a [`serde_json::Value`] first and then walked
//! field by field, so that every failure names the offending field instead of
//! surfacing a generic deserializer message.

use std::collections::HashSet;
use std::fmt;
use std::path::{Component, Path};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::color::Rgb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryKind {
    PointId,
    SpectralImage,
    Linescan,
    JeolImage,
}

impl EntryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::PointId => "point_id",
            EntryKind::SpectralImage => "spectral_image",
            EntryKind::Linescan => "linescan",
            EntryKind::JeolImage => "jeol_image",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "point_id" => EntryKind::PointId,
            "spectral_image" => EntryKind::SpectralImage,
            "linescan" => EntryKind::Linescan,
            "jeol_image" => EntryKind::JeolImage,
            _ => return None,
        })
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Geometry of one spectrum acquisition, in pixels of the acquired image.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Point { x: f64, y: f64 },
    Rect { x: f64, y: f64, w: f64, h: f64 },
    Circle { cx: f64, cy: f64, r: f64 },
    Polygon(Vec<[f64; 2]>),
    Line { x1: f64, y1: f64, x2: f64, y2: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPosition {
    pub id: String,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapLayerRef {
    pub element: String,
    pub color: Rgb,
    pub file: String,
    pub order: i64,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryManifest {
    pub id: String,
    pub kind: EntryKind,
    pub magnification: f64,
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub positions: Vec<SpectrumPosition>,
    pub layers: Vec<MapLayerRef>,
    pub date: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("bad value for `{field}`: {reason}")]
    BadValue { field: String, reason: String },
}

fn bad(field: impl Into<String>, reason: impl Into<String>) -> ManifestError {
    ManifestError::BadValue { field: field.into(), reason: reason.into() }
}

/// True for non-empty relative paths made only of normal components.
pub fn is_contained_relative(path: &str) -> bool {
    !path.is_empty()
        && !path.contains('\\')
        && Path::new(path).components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

fn is_iso8601(s: &str) -> bool {
    use chrono::{DateTime, NaiveDate, NaiveDateTime};
    NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
        || NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f").is_ok()
        || DateTime::parse_from_rfc3339(s).is_ok()
}

struct Obj<'a> {
    map: &'a Map<String, Value>,
    prefix: String,
}

impl<'a> Obj<'a> {
    fn new(v: &'a Value, prefix: &str) -> Result<Self, ManifestError> {
        let field = if prefix.is_empty() { "<root>" } else { prefix.trim_end_matches('.') };
        v.as_object()
            .map(|map| Obj { map, prefix: prefix.to_string() })
            .ok_or_else(|| bad(field, "expected an object"))
    }

    fn name(&self, key: &str) -> String {
        format!("{}{key}", self.prefix)
    }

    fn get(&self, key: &str) -> Result<&'a Value, ManifestError> {
        self.map.get(key).ok_or_else(|| ManifestError::MissingField(self.name(key)))
    }

    fn str(&self, key: &str) -> Result<&'a str, ManifestError> {
        self.get(key)?.as_str().ok_or_else(|| bad(self.name(key), "expected a string"))
    }

    fn num(&self, key: &str) -> Result<f64, ManifestError> {
        self.get(key)?
            .as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(self.name(key), "expected a finite number"))
    }

    fn dim(&self, key: &str) -> Result<u32, ManifestError> {
        self.get(key)?
            .as_u64()
            .filter(|&v| v >= 1 && v <= u64::from(u32::MAX))
            .map(|v| v as u32)
            .ok_or_else(|| bad(self.name(key), "expected a positive integer"))
    }
}

fn parse_shape(o: &Obj<'_>, width: u32, height: u32) -> Result<Shape, ManifestError> {
    let (w, h) = (f64::from(width), f64::from(height));
    let x_in = |key: &str| -> Result<f64, ManifestError> {
        let v = o.num(key)?;
        if (0.0..=w).contains(&v) { Ok(v) } else { Err(bad(o.name(key), format!("{v} outside [0, {w}]"))) }
    };
    let y_in = |key: &str| -> Result<f64, ManifestError> {
        let v = o.num(key)?;
        if (0.0..=h).contains(&v) { Ok(v) } else { Err(bad(o.name(key), format!("{v} outside [0, {h}]"))) }
    };
    let kind = o.str("shape")?;
    Ok(match kind {
        "point" => Shape::Point { x: x_in("x")?, y: y_in("y")? },
        "rect" => {
            let (x, y) = (x_in("x")?, y_in("y")?);
            let (rw, rh) = (o.num("w")?, o.num("h")?);
            if rw <= 0.0 || x + rw > w {
                return Err(bad(o.name("w"), "rectangle width must be positive and inside the image"));
            }
            if rh <= 0.0 || y + rh > h {
                return Err(bad(o.name("h"), "rectangle height must be positive and inside the image"));
            }
            Shape::Rect { x, y, w: rw, h: rh }
        }
        "circle" => {
            let (cx, cy, r) = (x_in("cx")?, y_in("cy")?, o.num("r")?);
            if r <= 0.0 {
                return Err(bad(o.name("r"), "radius must be positive"));
            }
            Shape::Circle { cx, cy, r }
        }
        "polygon" => {
            let field = o.name("points");
            let pts = o.get("points")?.as_array().ok_or_else(|| bad(&field, "expected an array"))?;
            let mut verts = Vec::with_capacity(pts.len());
            for p in pts {
                let pair = p
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .and_then(|a| Some([a[0].as_f64()?, a[1].as_f64()?]))
                    .ok_or_else(|| bad(&field, "vertices must be [x, y] pairs"))?;
                if !(0.0..=w).contains(&pair[0]) || !(0.0..=h).contains(&pair[1]) {
                    return Err(bad(&field, format!("vertex {pair:?} outside the image")));
                }
                verts.push(pair);
            }
            let mut distinct: Vec<[u64; 2]> =
                verts.iter().map(|p| [p[0].to_bits(), p[1].to_bits()]).collect();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.len() < 3 {
                return Err(bad(&field, "polygon needs at least 3 distinct vertices"));
            }
            Shape::Polygon(verts)
        }
        "line" => Shape::Line { x1: x_in("x1")?, y1: y_in("y1")?, x2: x_in("x2")?, y2: y_in("y2")? },
        other => return Err(bad(o.name("shape"), format!("unknown shape {other:?}"))),
    })
}

/// Parses an `entry.json` document. Unknown keys are ignored.
pub fn parse_entry_manifest(bytes: &[u8]) -> Result<EntryManifest, ManifestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        ManifestError::Syntax { line, message: "invalid UTF-8".into() }
    })?;
    let root: Value = serde_json::from_str(text)
        .map_err(|e| ManifestError::Syntax { line: e.line(), message: e.to_string() })?;
    let o = Obj::new(&root, "")?;

    let id = o.str("id")?.to_string();
    if id.is_empty() {
        return Err(bad("id", "must not be empty"));
    }
    let kind_s = o.str("kind")?;
    let kind = EntryKind::parse(kind_s).ok_or_else(|| bad("kind", format!("unknown kind {kind_s:?}")))?;
    let magnification = o.num("magnification")?;
    if magnification <= 0.0 {
        return Err(bad("magnification", format!("{magnification} is not > 0")));
    }
    let image = o.str("image")?.to_string();
    if !is_contained_relative(&image) {
        return Err(bad("image", "must be a relative path inside the project"));
    }
    let width = o.dim("width")?;
    let height = o.dim("height")?;

    let mut positions = Vec::new();
    if let Some(v) = o.map.get("positions") {
        let arr = v.as_array().ok_or_else(|| bad("positions", "expected an array"))?;
        let mut seen = HashSet::new();
        for (i, p) in arr.iter().enumerate() {
            let po = Obj::new(p, &format!("positions[{i}]."))?;
            let pid = po.str("id")?.to_string();
            if !seen.insert(pid.clone()) {
                return Err(bad(po.name("id"), format!("duplicate position id {pid:?}")));
            }
            positions.push(SpectrumPosition { id: pid, shape: parse_shape(&po, width, height)? });
        }
    }

    let mut layers = Vec::new();
    if let Some(v) = o.map.get("layers") {
        let arr = v.as_array().ok_or_else(|| bad("layers", "expected an array"))?;
        let mut orders = HashSet::new();
        let mut elements = HashSet::new();
        for (i, l) in arr.iter().enumerate() {
            let lo = Obj::new(l, &format!("layers[{i}]."))?;
            let element = lo.str("element")?.to_string();
            if element.is_empty() || !elements.insert(element.clone()) {
                return Err(bad(lo.name("element"), format!("empty or duplicate element {element:?}")));
            }
            let color = lo.str("color")?.parse().map_err(|e: crate::color::ParseColorError| {
                bad(lo.name("color"), e.to_string())
            })?;
            let file = lo.str("file")?.to_string();
            if !is_contained_relative(&file) {
                return Err(bad(lo.name("file"), "must be a relative path inside the project"));
            }
            let order = lo
                .get("order")?
                .as_i64()
                .ok_or_else(|| bad(lo.name("order"), "expected an integer"))?;
            if !orders.insert(order) {
                return Err(bad(lo.name("order"), format!("duplicate order {order}")));
            }
            let visible = match lo.map.get("visible") {
                None => true,
                Some(v) => v.as_bool().ok_or_else(|| bad(lo.name("visible"), "expected a boolean"))?,
            };
            layers.push(MapLayerRef { element, color, file, order, visible });
        }
    }

    let date = match o.map.get("date") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let s = v.as_str().ok_or_else(|| bad("date", "expected a string"))?;
            if !is_iso8601(s) {
                return Err(bad("date", format!("{s:?} is not an ISO-8601 date")));
            }
            Some(s.to_string())
        }
    };

    Ok(EntryManifest { id, kind, magnification, image, width, height, positions, layers, date })
}

fn shape_json(id: &str, shape: &Shape) -> Value {
    match shape {
        Shape::Point { x, y } => json!({"id": id, "shape": "point", "x": x, "y": y}),
        Shape::Rect { x, y, w, h } => json!({"id": id, "shape": "rect", "x": x, "y": y, "w": w, "h": h}),
        Shape::Circle { cx, cy, r } => json!({"id": id, "shape": "circle", "cx": cx, "cy": cy, "r": r}),
        Shape::Polygon(pts) => json!({"id": id, "shape": "polygon", "points": pts}),
        Shape::Line { x1, y1, x2, y2 } => {
            json!({"id": id, "shape": "line", "x1": x1, "y1": y1, "x2": x2, "y2": y2})
        }
    }
}

impl EntryManifest {
    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "id": self.id,
            "kind": self.kind.as_str(),
            "magnification": self.magnification,
            "image": self.image,
            "width": self.width,
            "height": self.height,
            "positions": self.positions.iter().map(|p| shape_json(&p.id, &p.shape)).collect::<Vec<_>>(),
            "layers": self.layers.iter().map(|l| json!({
                "element": l.element,
                "color": l.color.to_string(),
                "file": l.file,
                "order": l.order,
                "visible": l.visible,
            })).collect::<Vec<_>>(),
        });
        if let Some(d) = &self.date {
            v["date"] = json!(d);
        }
        v
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("manifest values are always serializable")
    }

    pub fn position(&self, id: &str) -> Option<&SpectrumPosition> {
        self.positions.iter().find(|p| p.id == id)
    }

    pub fn layer(&self, element: &str) -> Option<&MapLayerRef> {
        self.layers.iter().find(|l| l.element == element)
    }
}
