//! Run configuration: one JSON document, every section optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wirematch::estimators::RansacConfig;
use wirematch::gnn::GnnConfig;
use wirematch::groundtruth::GtConfig;
use wirematch::matcher::DEFAULT_MATCH_THRESHOLD;
use wirematch::training::{SynthConfig, TrainConfig};
use wirematch::wireframe::WireframeConfig;
use wirematch::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    #[default]
    Homography,
    DepthPose,
}

/// What `synth` generates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub pairs: usize,
    /// Pair difficulties are spread evenly over this range.
    pub min_difficulty: f64,
    pub max_difficulty: f64,
    pub geometry: GeometryKind,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            pairs: 50,
            min_difficulty: 0.0,
            max_difficulty: 0.3,
            geometry: GeometryKind::Homography,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    /// Mutual nearest neighbours below this score are dropped.
    pub threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }
}

/// Input paths. Each command reads the ones it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inputs {
    /// Dataset directory with `pairs/NNNN/`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features_a: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features_b: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<PathBuf>,
    /// A match file, or a directory laid out like a dataset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matches: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// The only seed; copied into the train and ransac sections.
    pub seed: u64,
    pub inputs: Inputs,
    pub wireframe: WireframeConfig,
    pub groundtruth: GtConfig,
    pub gnn: GnnConfig,
    pub synth: SynthConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub matching: MatchConfig,
    pub ransac: RansacConfig,
}

impl RunConfig {
    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let parse = |e: serde_json::Error| Error::Parse {
            context: context.to_string(),
            message: e.to_string(),
        };
        let raw: serde_json::Value = serde_json::from_str(text).map_err(parse)?;
        for section in ["train", "ransac"] {
            if raw.get(section).and_then(|s| s.get("seed")).is_some() {
                return Err(Error::Invalid(format!(
                    "{section}.seed is not accepted; set the top-level seed"
                )));
            }
        }
        serde_json::from_value(raw).map_err(parse)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Propagates the seed and checks every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        self.ransac.seed = self.seed;
        if !(self.wireframe.merge_distance >= 0.0 && self.wireframe.merge_distance.is_finite()) {
            return Err(Error::Invalid("wireframe.merge_distance must be non-negative".into()));
        }
        self.groundtruth.validate()?;
        self.gnn.validate()?;
        self.synth.validate()?;
        self.train.validate()?;
        self.ransac.validate()?;
        let d = &self.dataset;
        if d.pairs == 0 {
            return Err(Error::Invalid("dataset.pairs must be positive".into()));
        }
        if !(0.0 <= d.min_difficulty && d.min_difficulty <= d.max_difficulty && d.max_difficulty <= 1.0) {
            return Err(Error::Invalid("dataset difficulties must satisfy 0 <= min <= max <= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.matching.threshold) {
            return Err(Error::Invalid("matching.threshold must lie in [0, 1]".into()));
        }
        Ok(self)
    }

    pub fn input(&self, name: &str) -> Result<&Path> {
        let i = &self.inputs;
        let p = match name {
            "data" => &i.data,
            "checkpoint" => &i.checkpoint,
            "features_a" => &i.features_a,
            "features_b" => &i.features_b,
            "geometry" => &i.geometry,
            "matches" => &i.matches,
            "gt" => &i.gt,
            "intrinsics" => &i.intrinsics,
            _ => &None,
        };
        p.as_deref()
            .ok_or_else(|| Error::Invalid(format!("missing input `{name}`")))
    }
}
