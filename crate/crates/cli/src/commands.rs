//! One function per subcommand. Every output goes through an atomic write
//! and the resolved config is echoed next to it.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wirematch::assignment::Match;
use wirematch::estimators::{hybrid_ransac_rotation, LineMatch, PointMatch};
use wirematch::eval::{
    cumulative_error_svg, match_stats, pr_curve_svg, precision_recall_ap_pooled, rotation_error_deg,
    summarize_rotation_errors, MatchStats, RotationSummary,
};
use wirematch::features::{FeatureSet, MatchFile, TwoViewGeometry};
use wirematch::gnn::GnnParams;
use wirematch::groundtruth::{label_pair, GtLabels, LabelSet};
use wirematch::io::{write_atomic, write_json};
use wirematch::linalg::Mat3;
use wirematch::matcher::predict;
use wirematch::training::{
    generate_depth_pair, generate_synthetic_pair, pair_rng, train, LogRecord, PreparedPair, TrainObserver,
    TrainSource,
};
use wirematch::wireframe::build_wireframe;
use wirematch::{Error, ParamStore, Result};

use crate::config::{GeometryKind, RunConfig};
use crate::dataset::{self, list_pairs, pair_dir, pair_id, Manifest, ManifestEntry, PairFiles};

pub const CONFIG_ECHO: &str = "config.json";

/// Shared context of a command: the resolved config and where to write.
pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a Path,
    pub pool: &'a rayon::ThreadPool,
}

impl Run<'_> {
    fn echo_config(&self) -> Result<()> {
        write_json(&self.out.join(CONFIG_ECHO), self.cfg)
    }

    /// Runs `f` over the entries on the worker pool, keeping input order.
    fn map_pairs<T: Send>(
        &self,
        entries: &[ManifestEntry],
        f: impl Fn(&ManifestEntry) -> Result<T> + Sync,
    ) -> Result<Vec<T>> {
        self.pool.install(|| entries.par_iter().map(&f).collect())
    }
}

fn check_desc_dim(cfg: &RunConfig, f: &FeatureSet, what: &str) -> Result<()> {
    match f.descriptor_dim() {
        Some(d) if d != cfg.gnn.desc_dim => Err(Error::Incompatible(format!(
            "{what} has {d}-dimensional descriptors, the network expects {}",
            cfg.gnn.desc_dim
        ))),
        _ => Ok(()),
    }
}

pub fn synth(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let ds = &cfg.dataset;
    let entries: Vec<ManifestEntry> = (0..ds.pairs)
        .map(|k| {
            let t = if ds.pairs > 1 { k as f64 / (ds.pairs - 1) as f64 } else { 1.0 };
            ManifestEntry {
                id: pair_id(k),
                difficulty: ds.min_difficulty + (ds.max_difficulty - ds.min_difficulty) * t,
            }
        })
        .collect();
    let indexed: Vec<(usize, &ManifestEntry)> = entries.iter().enumerate().collect();
    run.pool.install(|| {
        indexed.par_iter().try_for_each(|&(k, e)| {
            let mut rng = pair_rng(cfg.seed, k as u64);
            let p = match ds.geometry {
                GeometryKind::Homography => generate_synthetic_pair(&cfg.synth, e.difficulty, &cfg.wireframe, &mut rng)?,
                GeometryKind::DepthPose => generate_depth_pair(&cfg.synth, e.difficulty, &cfg.wireframe, &mut rng)?,
            };
            let dir = pair_dir(run.out, &e.id);
            p.a.save(dir.join(dataset::FEATURES_A))?;
            p.b.save(dir.join(dataset::FEATURES_B))?;
            p.geometry.save(dir.join(dataset::GEOMETRY))?;
            p.labels.save(dir.join(dataset::GT))
        })
    })?;
    dataset::write_manifest(run.out, &Manifest { pairs: entries })?;
    run.echo_config()
}

/// Writes the log and checkpoints of a training run, plus failure dumps.
struct TrainFiles<'a> {
    out: &'a Path,
    final_iteration: usize,
    log: Vec<LogRecord>,
}

impl TrainFiles<'_> {
    fn write_log(&self) -> Result<()> {
        let mut text = String::new();
        for r in &self.log {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        write_atomic(&self.out.join("log.jsonl"), text.as_bytes())
    }
}

impl TrainObserver for TrainFiles<'_> {
    fn record(&mut self, record: &LogRecord) -> Result<()> {
        self.log.push(record.clone());
        Ok(())
    }

    fn checkpoint(&mut self, iteration: usize, params: &GnnParams<f64>) -> Result<()> {
        let path = if iteration == self.final_iteration {
            self.out.join("checkpoint.json")
        } else {
            self.out.join("checkpoints").join(format!("iter_{iteration:06}.json"))
        };
        params.store.save(path)?;
        self.write_log()
    }

    fn dump(&mut self, iteration: usize, pair: &PreparedPair) -> Option<PathBuf> {
        let dir = self.out.join("dump").join(format!("iter_{iteration:06}"));
        let saved = pair.a.save(dir.join(dataset::FEATURES_A)).and_then(|_| {
            pair.b.save(dir.join(dataset::FEATURES_B))?;
            pair.geometry.save(dir.join(dataset::GEOMETRY))?;
            pair.labels.save(dir.join(dataset::GT))
        });
        saved.ok().map(|_| dir)
    }
}

pub fn train_cmd(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let pool = match &cfg.inputs.data {
        Some(root) => {
            let entries = list_pairs(root)?;
            let mut pairs = run.map_pairs(&entries, |e| {
                let f = PairFiles::load(&pair_dir(root, &e.id), true)?;
                check_desc_dim(cfg, &f.a, &e.id)?;
                check_desc_dim(cfg, &f.b, &e.id)?;
                let labels = f.gt.unwrap_or_default();
                PreparedPair::new(f.a, f.b, f.geometry, labels, e.difficulty, &cfg.train, &cfg.wireframe, &cfg.groundtruth)
            })?;
            pairs.sort_by(|x, y| x.difficulty.total_cmp(&y.difficulty));
            Some(pairs)
        }
        None => {
            if cfg.synth.desc_dim != cfg.gnn.desc_dim {
                return Err(Error::Invalid(format!(
                    "synth.desc_dim {} differs from gnn.desc_dim {}",
                    cfg.synth.desc_dim, cfg.gnn.desc_dim
                )));
            }
            None
        }
    };
    let source = match &pool {
        Some(p) => TrainSource::Pool(p),
        None => TrainSource::Fresh(&cfg.synth),
    };
    run.echo_config()?;
    let mut files = TrainFiles {
        out: run.out,
        final_iteration: cfg.train.iterations,
        log: Vec::new(),
    };
    let result = train(cfg.gnn, &cfg.train, &cfg.wireframe, &cfg.groundtruth, source, &mut files);
    files.write_log()?;
    result.map(|_| ())
}

fn load_params(cfg: &RunConfig) -> Result<GnnParams<f64>> {
    let store = ParamStore::load(cfg.input("checkpoint")?)?;
    GnnParams::from_store(cfg.gnn, store)
}

fn match_features(cfg: &RunConfig, params: &GnnParams<f64>, a: &FeatureSet, b: &FeatureSet) -> Result<MatchFile> {
    check_desc_dim(cfg, a, "features_a")?;
    check_desc_dim(cfg, b, "features_b")?;
    let (wa, wb) = (build_wireframe(a, &cfg.wireframe), build_wireframe(b, &cfg.wireframe));
    Ok(predict::<f64>(params, &wa, &wb, cfg.matching.threshold)?.to_match_file())
}

pub fn match_cmd(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let params = load_params(cfg)?;
    match &cfg.inputs.data {
        Some(root) => {
            let entries = list_pairs(root)?;
            let files = run.map_pairs(&entries, |e| {
                let f = PairFiles::load(&pair_dir(root, &e.id), false)?;
                match_features(cfg, &params, &f.a, &f.b)
            })?;
            for (e, m) in entries.iter().zip(&files) {
                m.save(pair_dir(run.out, &e.id).join(dataset::MATCHES))?;
            }
        }
        None => {
            let a = FeatureSet::load(cfg.input("features_a")?)?;
            let b = FeatureSet::load(cfg.input("features_b")?)?;
            match_features(cfg, &params, &a, &b)?.save(run.out.join(dataset::MATCHES))?;
        }
    }
    run.echo_config()
}

pub fn gt_cmd(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let label = |a: &FeatureSet, b: &FeatureSet, g: &TwoViewGeometry| -> Result<GtLabels> {
        g.validate()?;
        Ok(label_pair(a, b, g, &cfg.groundtruth, &cfg.wireframe))
    };
    match &cfg.inputs.data {
        Some(root) => {
            let entries = list_pairs(root)?;
            let labels = run.map_pairs(&entries, |e| {
                let f = PairFiles::load(&pair_dir(root, &e.id), false)?;
                label(&f.a, &f.b, &f.geometry)
            })?;
            for (e, l) in entries.iter().zip(&labels) {
                l.save(pair_dir(run.out, &e.id).join(dataset::GT))?;
            }
        }
        None => {
            let a = FeatureSet::load(cfg.input("features_a")?)?;
            let b = FeatureSet::load(cfg.input("features_b")?)?;
            let g = TwoViewGeometry::load(cfg.input("geometry")?)?;
            label(&a, &b, &g)?.save(run.out.join(dataset::GT))?;
        }
    }
    run.echo_config()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindReport {
    pub average_precision: f64,
    /// At the threshold the matches were extracted with.
    pub precision: f64,
    pub recall: f64,
    pub predicted: usize,
    pub correct: usize,
    pub ground_truth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    pub points: KindReport,
    pub lines: KindReport,
}

fn to_matches(triples: &[(usize, usize, f64)]) -> Vec<Match> {
    triples.iter().map(|&(a, b, confidence)| Match { a, b, confidence }).collect()
}

fn kind_report(preds: &[Vec<Match>], gts: &[&LabelSet]) -> (KindReport, wirematch::eval::PrCurve) {
    let pooled: Vec<(&[Match], &LabelSet)> = preds.iter().map(|p| &p[..]).zip(gts.iter().copied()).collect();
    let curve = precision_recall_ap_pooled(&pooled);
    let stats = pooled
        .iter()
        .fold(MatchStats::default(), |s, (p, g)| s.merge(match_stats(p, g)));
    let report = KindReport {
        average_precision: curve.average_precision,
        precision: stats.precision(),
        recall: stats.recall(),
        predicted: stats.predicted,
        correct: stats.correct,
        ground_truth: stats.ground_truth,
    };
    (report, curve)
}

pub fn eval_cmd(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let matches_path = cfg.input("matches")?;
    let (matches, gts): (Vec<MatchFile>, Vec<GtLabels>) = if matches_path.is_dir() {
        let root = cfg.input("data")?;
        let entries = list_pairs(root)?;
        let loaded = run.map_pairs(&entries, |e| {
            let m = MatchFile::load(pair_dir(matches_path, &e.id).join(dataset::MATCHES))?;
            let g = GtLabels::load(pair_dir(root, &e.id).join(dataset::GT))?;
            Ok((m, g))
        })?;
        loaded.into_iter().unzip()
    } else {
        (vec![MatchFile::load(matches_path)?], vec![GtLabels::load(cfg.input("gt")?)?])
    };
    let points: Vec<Vec<Match>> = matches.iter().map(|m| to_matches(&m.points)).collect();
    let lines: Vec<Vec<Match>> = matches.iter().map(|m| to_matches(&m.lines)).collect();
    let (pr, pc) = kind_report(&points, &gts.iter().map(|g| &g.points).collect::<Vec<_>>());
    let (lr, lc) = kind_report(&lines, &gts.iter().map(|g| &g.lines).collect::<Vec<_>>());
    let report = EvalReport {
        pairs: matches.len(),
        points: pr,
        lines: lr,
    };
    write_json(&run.out.join("report.json"), &report)?;
    let svg = pr_curve_svg(&[("points", &pc), ("lines", &lc)]);
    write_atomic(&run.out.join("pr_curves.svg"), svg.as_bytes())?;
    run.echo_config()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    #[serde(rename = "K_a")]
    pub k_a: Mat3<f64>,
    #[serde(rename = "K_b")]
    pub k_b: Mat3<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationReport {
    #[serde(rename = "R")]
    pub r: Mat3<f64>,
    /// Present when the geometry carries a ground-truth rotation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angular_error_deg: Option<f64>,
    pub num_inliers: usize,
    pub point_inliers: Vec<usize>,
    pub line_inliers: Vec<usize>,
}

fn estimate_rotation(
    cfg: &RunConfig,
    m: &MatchFile,
    a: &FeatureSet,
    b: &FeatureSet,
    k: &Intrinsics,
    r_gt: Option<&Mat3<f64>>,
) -> Result<RotationReport> {
    let (wa, wb) = (build_wireframe(a, &cfg.wireframe), build_wireframe(b, &cfg.wireframe));
    m.validate(Some([wa.num_nodes(), wb.num_nodes(), a.lines.len(), b.lines.len()]))?;
    let points: Vec<PointMatch<f64>> = m
        .points
        .iter()
        .map(|&(i, j, _)| PointMatch {
            a: wa.nodes[i].position,
            b: wb.nodes[j].position,
        })
        .collect();
    let lines: Vec<LineMatch<f64>> = m
        .lines
        .iter()
        .map(|&(i, j, _)| LineMatch {
            a: [a.lines[i].start(), a.lines[i].end()],
            b: [b.lines[j].start(), b.lines[j].end()],
        })
        .collect();
    let est = hybrid_ransac_rotation(&points, &lines, &k.k_a, &k.k_b, &cfg.ransac)?;
    Ok(RotationReport {
        angular_error_deg: r_gt.map(|r| rotation_error_deg(&est.rotation, r)).transpose()?,
        num_inliers: est.point_inliers.len() + est.line_inliers.len(),
        r: est.rotation,
        point_inliers: est.point_inliers,
        line_inliers: est.line_inliers,
    })
}

/// Intrinsics from the explicit file, else from a calibrated geometry.
fn intrinsics_for(explicit: Option<&Intrinsics>, geometry: Option<&TwoViewGeometry>) -> Result<Intrinsics> {
    if let Some(k) = explicit {
        return Ok(k.clone());
    }
    match geometry {
        Some(TwoViewGeometry::DepthPose { k_a, k_b, .. }) => Ok(Intrinsics { k_a: *k_a, k_b: *k_b }),
        _ => Err(Error::Invalid("rotation needs intrinsics or a depth_pose geometry".into())),
    }
}

fn gt_rotation(geometry: Option<&TwoViewGeometry>) -> Option<&Mat3<f64>> {
    match geometry {
        Some(TwoViewGeometry::DepthPose { r, .. }) => Some(r),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationDatasetReport {
    /// Pairs where no rotation could be estimated; they count as 180°.
    pub failed: Vec<String>,
    pub summary: Option<RotationSummary>,
}

pub fn rotation_cmd(run: &Run) -> Result<()> {
    let cfg = run.cfg;
    let explicit: Option<Intrinsics> = match &cfg.inputs.intrinsics {
        Some(p) => Some(wirematch::io::read_json(p)?),
        None => None,
    };
    let matches_path = cfg.input("matches")?;
    if matches_path.is_dir() {
        let root = cfg.input("data")?;
        let entries = list_pairs(root)?;
        let reports = run.map_pairs(&entries, |e| {
            let f = PairFiles::load(&pair_dir(root, &e.id), false)?;
            let m = MatchFile::load(pair_dir(matches_path, &e.id).join(dataset::MATCHES))?;
            let k = intrinsics_for(explicit.as_ref(), Some(&f.geometry))?;
            match estimate_rotation(cfg, &m, &f.a, &f.b, &k, gt_rotation(Some(&f.geometry))) {
                Ok(r) => Ok(Some(r)),
                Err(Error::Degenerate(_)) | Err(Error::Invalid(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })?;
        let mut failed = Vec::new();
        let mut errors = Vec::new();
        for (e, r) in entries.iter().zip(&reports) {
            match r {
                Some(r) => {
                    write_json(&pair_dir(run.out, &e.id).join("rotation.json"), r)?;
                    errors.extend(r.angular_error_deg);
                }
                None => {
                    failed.push(e.id.clone());
                    errors.push(180.0);
                }
            }
        }
        let summary = (!errors.is_empty()).then(|| summarize_rotation_errors(&errors));
        write_json(&run.out.join("rotation_summary.json"), &RotationDatasetReport { failed, summary })?;
        let svg = cumulative_error_svg(&errors, 10.0);
        write_atomic(&run.out.join("rotation_errors.svg"), svg.as_bytes())?;
    } else {
        let a = FeatureSet::load(cfg.input("features_a")?)?;
        let b = FeatureSet::load(cfg.input("features_b")?)?;
        let geometry = match &cfg.inputs.geometry {
            Some(p) => Some(TwoViewGeometry::load(p)?),
            None => None,
        };
        let k = intrinsics_for(explicit.as_ref(), geometry.as_ref())?;
        let m = MatchFile::load(matches_path)?;
        let report = estimate_rotation(cfg, &m, &a, &b, &k, gt_rotation(geometry.as_ref()))?;
        write_json(&run.out.join("rotation.json"), &report)?;
    }
    run.echo_config()
}
