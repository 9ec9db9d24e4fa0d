//! Project directories: discovery, manifests, JEOL sidecars and raster loading.
//!
//! A project is a directory of entry directories:
//!
//! ```text
//! <project>/<entry-id>/entry.json
//!                      image.<ext>
//!                      image.txt          (optional JEOL sidecar)
//!                      layers/<Element>.tif
//! ```
//!
//! Paths inside `entry.json` are relative to the entry directory.

mod jeol;
mod manifest;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use crate::codec::{load_raster, DecodeError, ImageFormat};
pub use jeol::{crop_jeol_footer, parse_jeol_sidecar, DimensionMismatch, JeolSidecar, SidecarError};
pub use manifest::{
    is_contained_relative, parse_entry_manifest, EntryKind, EntryManifest, ManifestError, MapLayerRef,
    Shape, SpectrumPosition,
};

use crate::raster::Raster;

pub const MANIFEST_FILE: &str = "entry.json";

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("project directory not found: {0}")]
    DirNotFound(PathBuf),
    #[error("no recognizable entries in {0}")]
    NotAProject(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A non-fatal problem found while scanning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanWarning {
    pub path: PathBuf,
    pub message: String,
}

/// A parsed manifest together with the directory it was read from.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectEntry {
    pub dir: PathBuf,
    pub manifest: EntryManifest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectIndex {
    pub root: PathBuf,
    /// Sorted by id.
    pub entries: Vec<ProjectEntry>,
    pub warnings: Vec<ScanWarning>,
}

impl ProjectIndex {
    pub fn entry(&self, id: &str) -> Option<&ProjectEntry> {
        self.entries
            .binary_search_by(|e| e.manifest.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }
}

/// Scans `dir` for entry directories. Malformed entries become warnings;
/// only a directory without any `entry.json` at all is an error.
pub fn scan_project(dir: &Path) -> Result<ProjectIndex, ProjectError> {
    if !dir.is_dir() {
        return Err(ProjectError::DirNotFound(dir.to_path_buf()));
    }
    let io = |source| ProjectError::Io { path: dir.to_path_buf(), source };
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    if subdirs.is_empty() {
        return Err(ProjectError::NotAProject(dir.to_path_buf()));
    }
    subdirs.sort();

    let mut entries: Vec<ProjectEntry> = Vec::new();
    let mut warnings = Vec::new();
    for sub in subdirs {
        let path = sub.join(MANIFEST_FILE);
        let parsed = std::fs::read(&path)
            .map_err(|e| e.to_string())
            .and_then(|bytes| parse_entry_manifest(&bytes).map_err(|e| e.to_string()));
        match parsed {
            Ok(manifest) => entries.push(ProjectEntry { dir: sub, manifest }),
            Err(message) => warnings.push(ScanWarning { path, message }),
        }
    }
    entries.sort_by(|a, b| a.manifest.id.cmp(&b.manifest.id).then_with(|| a.dir.cmp(&b.dir)));
    let mut unique: Vec<ProjectEntry> = Vec::with_capacity(entries.len());
    for e in entries {
        if unique.last().is_some_and(|prev| prev.manifest.id == e.manifest.id) {
            warnings.push(ScanWarning {
                path: e.dir.join(MANIFEST_FILE),
                message: format!("duplicate entry id {:?}; keeping the first", e.manifest.id),
            });
        } else {
            unique.push(e);
        }
    }
    Ok(ProjectIndex { root: dir.to_path_buf(), entries: unique, warnings })
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("JEOL sidecar: {0}")]
    Sidecar(#[from] SidecarError),
    #[error("JEOL crop: {0}")]
    Crop(#[from] DimensionMismatch),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{what} is {actual_width}x{actual_height}, manifest says {width}x{height}")]
    DimensionMismatch { what: String, width: u32, height: u32, actual_width: u32, actual_height: u32 },
    #[error("layer {element} must be single-channel, found {channels}")]
    NotSingleChannel { element: String, channels: crate::raster::Channels },
}

impl ProjectEntry {
    pub fn id(&self) -> &str {
        &self.manifest.id
    }

    pub fn image_path(&self) -> PathBuf {
        self.dir.join(&self.manifest.image)
    }

    /// `image.txt` next to `image.<ext>`.
    pub fn sidecar_path(&self) -> PathBuf {
        self.image_path().with_extension("txt")
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.manifest.width, self.manifest.height)
    }

    /// Decodes the electron image, crops a JEOL footer when a sidecar is
    /// present, and checks the result against the manifest dimensions.
    pub fn load_base(&self) -> Result<Raster, LoadError> {
        let mut img = load_raster(&self.image_path(), None)?;
        let sidecar = self.sidecar_path();
        if self.manifest.kind == EntryKind::JeolImage && sidecar.is_file() {
            let bytes = std::fs::read(&sidecar).map_err(|source| LoadError::Io { path: sidecar, source })?;
            let sc = parse_jeol_sidecar(&bytes)?;
            img = crop_jeol_footer(&img, &sc)?;
        }
        self.check_dims("image", &img)?;
        Ok(img)
    }

    pub fn load_layer(&self, layer: &MapLayerRef) -> Result<Raster, LoadError> {
        let img = load_raster(&self.dir.join(&layer.file), None)?;
        if !img.channels().is_single_channel() {
            return Err(LoadError::NotSingleChannel { element: layer.element.clone(), channels: img.channels() });
        }
        self.check_dims(&format!("layer {}", layer.element), &img)?;
        Ok(img)
    }

    fn check_dims(&self, what: &str, img: &Raster) -> Result<(), LoadError> {
        let (width, height) = self.dims();
        if img.dims() != (width, height) {
            return Err(LoadError::DimensionMismatch {
                what: what.to_string(),
                width,
                height,
                actual_width: img.width(),
                actual_height: img.height(),
            });
        }
        Ok(())
    }
}
