//! Dataset directory layout: `pairs/NNNN/` plus a manifest of difficulties.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wirematch::features::{FeatureSet, TwoViewGeometry};
use wirematch::groundtruth::GtLabels;
use wirematch::io::{read_json, write_json};
use wirematch::{Error, Result};

pub const FEATURES_A: &str = "a.features.json";
pub const FEATURES_B: &str = "b.features.json";
pub const GEOMETRY: &str = "geometry.json";
pub const GT: &str = "gt.json";
pub const MATCHES: &str = "matches.json";
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub difficulty: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub pairs: Vec<ManifestEntry>,
}

pub fn pair_id(index: usize) -> String {
    format!("{index:04}")
}

pub fn pair_dir(root: &Path, id: &str) -> PathBuf {
    root.join("pairs").join(id)
}

/// Pair ids of a dataset: the manifest order if there is one, otherwise the
/// sorted names under `pairs/`.
pub fn list_pairs(root: &Path) -> Result<Vec<ManifestEntry>> {
    let manifest = root.join(MANIFEST);
    if manifest.exists() {
        let m: Manifest = read_json(&manifest)?;
        return Ok(m.pairs);
    }
    let dir = root.join("pairs");
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    let mut ids = Vec::new();
    for e in entries {
        let e = e.map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        if e.path().is_dir() {
            ids.push(e.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(Error::Invalid(format!("no pairs under {}", dir.display())));
    }
    Ok(ids.into_iter().map(|id| ManifestEntry { id, difficulty: 0.0 }).collect())
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    write_json(&root.join(MANIFEST), manifest)
}

/// Everything stored for one pair of a dataset.
pub struct PairFiles {
    pub a: FeatureSet,
    pub b: FeatureSet,
    pub geometry: TwoViewGeometry,
    pub gt: Option<GtLabels>,
}

impl PairFiles {
    pub fn load(dir: &Path, with_gt: bool) -> Result<Self> {
        Ok(PairFiles {
            a: FeatureSet::load(dir.join(FEATURES_A))?,
            b: FeatureSet::load(dir.join(FEATURES_B))?,
            geometry: TwoViewGeometry::load(dir.join(GEOMETRY))?,
            gt: if with_gt { Some(GtLabels::load(dir.join(GT))?) } else { None },
        })
    }
}
