//! Dataset plumbing: the six-class schema, YOLO-format label and prediction
//! files, dataset manifests, lossless image I/O, and the seeded augmentation
//! pipeline with consistent label geometry.

pub mod augment;
pub mod image;
pub mod labels;

pub use augment::{
    apply_geometric, apply_photometric, augment_dataset, AugmentOp, AugmentParams, AugmentSpec,
    AugmentSummary, AugmentVariant,
};
pub use image::Rgb8Image;
pub use labels::{parse_labels, parse_predictions, write_labels, write_predictions};

use std::path::{Path, PathBuf};

use crate::boxloss::BBox;
use crate::{Error, Result};

/// The six growth-stage classes, ids 0..5 in this order.
pub const CLASS_NAMES: [&str; 6] = [
    "Ripe Boll",
    "Open Boll",
    "Square",
    "Fertilised Flower",
    "Early Flower",
    "Bracts",
];

/// Ordered class-name table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSchema {
    names: Vec<String>,
}

impl ClassSchema {
    /// The canonical six-class cotton growth-stage schema.
    pub fn condis() -> Self {
        Self {
            names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn from_names(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::param("class schema needs at least one name"));
        }
        for (i, a) in names.iter().enumerate() {
            if a.trim().is_empty() {
                return Err(Error::param(format!("class {i} has an empty name")));
            }
            if names[..i].contains(a) {
                return Err(Error::param(format!("duplicate class name {a:?}")));
            }
        }
        Ok(Self { names })
    }

    /// One class name per line; blank lines and `#` comments ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        Self::from_names(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn contains(&self, id: usize) -> bool {
        id < self.names.len()
    }
}

/// An image with its normalized box labels.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image_id: String,
    pub image: Rgb8Image,
    pub labels: Vec<(usize, BBox<f64>)>,
}

/// One manifest line: a split tag and an image path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: String,
    pub path: PathBuf,
}

const SPLITS: [&str; 3] = ["train", "val", "test"];

/// Parse a manifest: lines of `<split> <path>` with train/val/test tags;
/// `#` comments and blank lines ignored. Relative paths stay relative.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(2, char::is_whitespace);
        let split = parts.next().unwrap_or_default().to_string();
        let path = parts.next().map(str::trim).unwrap_or_default();
        if !SPLITS.contains(&split.as_str()) {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("unknown split tag {split:?}, expected train/val/test"),
            });
        }
        if path.is_empty() {
            return Err(Error::Parse {
                line: idx + 1,
                msg: "missing image path".to_string(),
            });
        }
        entries.push(ManifestEntry {
            split,
            path: PathBuf::from(path),
        });
    }
    Ok(entries)
}

pub fn write_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!("{} {}\n", e.split, e.path.display()));
    }
    out
}
