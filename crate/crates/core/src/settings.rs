//! The render settings document shared by the CLI (`--settings`) and the
//! HTTP service.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::annotate::{MarkerStyle, ScaleBarStyle};
use crate::color::Rgb;
use crate::project::EntryManifest;

/// Which spectrum positions to draw: `"all"`, `"none"`, or a list of ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PositionSelection {
    #[default]
    All,
    None,
    Ids(BTreeSet<String>),
}

impl Serialize for PositionSelection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PositionSelection::All => s.serialize_str("all"),
            PositionSelection::None => s.serialize_str("none"),
            PositionSelection::Ids(ids) => ids.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for PositionSelection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Word(String),
            Ids(BTreeSet<String>),
        }
        match Repr::deserialize(d)? {
            Repr::Word(w) if w == "all" => Ok(PositionSelection::All),
            Repr::Word(w) if w == "none" => Ok(PositionSelection::None),
            Repr::Word(w) => Err(serde::de::Error::custom(format!("expected \"all\", \"none\" or a list of ids, got {w:?}"))),
            Repr::Ids(ids) => Ok(PositionSelection::Ids(ids)),
        }
    }
}

/// What the map layers are blended over: `"image"` or `"#RRGGBB"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Background {
    #[default]
    ElectronImage,
    SolidColor(Rgb),
}

impl Serialize for Background {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Background::ElectronImage => s.serialize_str("image"),
            Background::SolidColor(c) => c.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Background {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for Background {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "image" {
            Ok(Background::ElectronImage)
        } else {
            s.parse::<Rgb>().map(Background::SolidColor).map_err(|e| e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    /// `null` disables the scale bar.
    pub scale_bar: Option<ScaleBarStyle>,
    pub marker: MarkerStyle,
    pub enabled_positions: PositionSelection,
    /// Bottom to top. Empty means the manifest's `order` ranks.
    pub layer_order: Vec<String>,
    /// Overrides of the manifest's `visible` flags.
    pub layer_visibility: BTreeMap<String, bool>,
    /// One opacity shared by every map layer.
    pub layer_opacity: f64,
    pub background: Background,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            scale_bar: Some(ScaleBarStyle::default()),
            marker: MarkerStyle::default(),
            enabled_positions: PositionSelection::All,
            layer_order: Vec::new(),
            layer_visibility: BTreeMap::new(),
            layer_opacity: 0.5,
            background: Background::ElectronImage,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SettingsError {
    #[error("invalid settings JSON: {0}")]
    Json(String),
    #[error("{0}")]
    Invalid(String),
}

/// A map layer after applying order and visibility overrides.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResolvedLayer {
    pub element: String,
    pub color: Rgb,
    pub file: String,
    pub visible: bool,
}

impl RenderSettings {
    pub fn from_json(text: &str) -> Result<Self, SettingsError> {
        let s: RenderSettings = serde_json::from_str(text).map_err(|e| SettingsError::Json(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("settings are always serializable")
    }

    /// Entry-independent checks.
    pub fn validate(&self) -> Result<(), SettingsError> {
        if !(0.0..=1.0).contains(&self.layer_opacity) {
            return Err(SettingsError::Invalid(format!("layer_opacity must be in [0, 1], got {}", self.layer_opacity)));
        }
        if let Some(sb) = &self.scale_bar {
            sb.validate().map_err(|e| SettingsError::Invalid(e.to_string()))?;
        }
        self.marker.validate().map_err(|e| SettingsError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Layers bottom to top for `entry`.
    pub fn resolve_layers(&self, entry: &EntryManifest) -> Result<Vec<ResolvedLayer>, SettingsError> {
        for id in self.layer_visibility.keys() {
            if entry.layer(id).is_none() {
                return Err(SettingsError::Invalid(format!("entry {} has no layer {id:?}", entry.id)));
            }
        }
        let ordered: Vec<&crate::project::MapLayerRef> = if self.layer_order.is_empty() {
            let mut v: Vec<_> = entry.layers.iter().collect();
            v.sort_by_key(|l| l.order);
            v
        } else {
            let mut seen = BTreeSet::new();
            let mut v = Vec::with_capacity(self.layer_order.len());
            for id in &self.layer_order {
                let l = entry
                    .layer(id)
                    .ok_or_else(|| SettingsError::Invalid(format!("entry {} has no layer {id:?}", entry.id)))?;
                if !seen.insert(id.as_str()) {
                    return Err(SettingsError::Invalid(format!("layer {id:?} listed twice in layer_order")));
                }
                v.push(l);
            }
            if v.len() != entry.layers.len() {
                return Err(SettingsError::Invalid(format!(
                    "layer_order must list all {} layers of entry {}",
                    entry.layers.len(),
                    entry.id
                )));
            }
            v
        };
        Ok(ordered
            .into_iter()
            .map(|l| ResolvedLayer {
                element: l.element.clone(),
                color: l.color,
                file: l.file.clone(),
                visible: self.layer_visibility.get(&l.element).copied().unwrap_or(l.visible),
            })
            .collect())
    }

    pub fn resolve_positions(&self, entry: &EntryManifest) -> Result<BTreeSet<String>, SettingsError> {
        match &self.enabled_positions {
            PositionSelection::All => Ok(entry.positions.iter().map(|p| p.id.clone()).collect()),
            PositionSelection::None => Ok(BTreeSet::new()),
            PositionSelection::Ids(ids) => {
                if let Some(bad) = ids.iter().find(|id| entry.position(id).is_none()) {
                    return Err(SettingsError::Invalid(format!("entry {} has no position {bad:?}", entry.id)));
                }
                Ok(ids.clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::project::parse_entry_manifest;

    fn entry() -> EntryManifest {
        parse_entry_manifest(
            br##"{"id": "E", "kind": "spectral_image", "magnification": 100, "image": "image.png",
                 "width": 10, "height": 10,
                 "positions": [{"id": "p1", "shape": "point", "x": 1, "y": 1},
                               {"id": "p2", "shape": "point", "x": 2, "y": 2}],
                 "layers": [{"element": "K", "color": "#00FF00", "file": "layers/K.tif", "order": 2},
                            {"element": "Fe", "color": "#FF0000", "file": "layers/Fe.tif", "order": 1, "visible": false}]}"##,
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip_and_shapes() {
        let mut s = RenderSettings::default();
        s.background = Background::SolidColor(Rgb([1, 2, 3]));
        s.enabled_positions = PositionSelection::Ids(["p1".to_string()].into());
        s.layer_order = vec!["Fe".into(), "K".into()];
        let back = RenderSettings::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(v["background"], "#010203");
        assert_eq!(v["enabled_positions"], serde_json::json!(["p1"]));

        let s = RenderSettings::from_json(r#"{"scale_bar": null, "enabled_positions": "none", "layer_opacity": 0}"#).unwrap();
        assert_eq!(s.scale_bar, None);
        assert_eq!(s.enabled_positions, PositionSelection::None);
        assert!(RenderSettings::from_json(r#"{"layer_opacity": 2}"#).is_err());
        assert!(RenderSettings::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn layer_resolution() {
        let e = entry();
        let s = RenderSettings::default();
        let l = s.resolve_layers(&e).unwrap();
        assert_eq!(l.iter().map(|l| l.element.as_str()).collect::<Vec<_>>(), ["Fe", "K"]);
        assert!(!l[0].visible && l[1].visible);

        let s = RenderSettings {
            layer_order: vec!["K".into(), "Fe".into()],
            layer_visibility: [("Fe".to_string(), true)].into(),
            ..Default::default()
        };
        let l = s.resolve_layers(&e).unwrap();
        assert_eq!(l[0].element, "K");
        assert!(l[1].visible);

        for bad in [vec!["K".to_string()], vec!["K".into(), "K".into()], vec!["K".into(), "Si".into()]] {
            let s = RenderSettings { layer_order: bad, ..Default::default() };
            assert!(s.resolve_layers(&e).is_err());
        }
    }

    #[test]
    fn position_resolution() {
        let e = entry();
        assert_eq!(RenderSettings::default().resolve_positions(&e).unwrap().len(), 2);
        let s = RenderSettings { enabled_positions: PositionSelection::Ids(["p9".to_string()].into()), ..Default::default() };
        assert!(s.resolve_positions(&e).is_err());
    }
}
