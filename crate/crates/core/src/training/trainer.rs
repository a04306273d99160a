use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::loss::nll_loss_on_tape;
use super::synth::{generate_synthetic_pair, SynthConfig, SyntheticPair};
use crate::assignment::{extract_matches, Match};
use crate::error::{Error, Result};
use crate::eval::{match_stats, MatchStats};
use crate::features::{FeatureSet, TwoViewGeometry};
use crate::gnn::{GnnConfig, GnnParams, GraphInput};
use crate::groundtruth::{label_pair, GtConfig, GtLabels};
use crate::matcher::forward_pair;
use crate::numerics::Tape;
use crate::wireframe::{build_wireframe, WireframeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Per-image caps; larger inputs are cut to the highest-scoring features
    /// and relabeled from their geometry.
    pub max_keypoints: usize,
    pub max_lines: usize,
    /// Difficulty reached at the end of the ramp.
    pub max_difficulty: f64,
    /// Fraction of the iterations over which difficulty ramps up from 0.
    pub ramp_fraction: f64,
    /// Divide each NLL by its number of terms.
    pub normalize_loss: bool,
    /// Checkpoint interval in iterations; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Log interval in iterations; the last iteration is always logged.
    pub log_every: usize,
    pub match_threshold: f64,
    /// Seeds initialization and every random draw of the run.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            learning_rate: 1e-3,
            max_keypoints: 60,
            max_lines: 20,
            max_difficulty: 1.0,
            ramp_fraction: 0.5,
            normalize_loss: true,
            checkpoint_every: 0,
            log_every: 10,
            match_threshold: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Invalid("train.iterations must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("train.learning_rate must be non-negative".into()));
        }
        if self.max_keypoints == 0 || self.max_lines == 0 {
            return Err(Error::Invalid("train caps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.max_difficulty) || !(0.0..=1.0).contains(&self.ramp_fraction) {
            return Err(Error::Invalid("train difficulty settings must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Linear ramp from 0 to `max_difficulty` over the first
    /// `ramp_fraction` of the iterations, then constant.
    pub fn difficulty_at(&self, iteration: usize) -> f64 {
        let ramp = self.ramp_fraction * self.iterations as f64;
        if ramp <= 0.0 {
            return self.max_difficulty;
        }
        self.max_difficulty * (iteration as f64 / ramp).min(1.0)
    }
}

/// A labeled pair with its network inputs precomputed.
#[derive(Clone, Debug)]
pub struct PreparedPair {
    pub a: FeatureSet,
    pub b: FeatureSet,
    pub geometry: TwoViewGeometry,
    pub labels: GtLabels,
    pub difficulty: f64,
    pub graph_a: GraphInput<f64>,
    pub graph_b: GraphInput<f64>,
}

impl PreparedPair {
    /// Applies the caps (relabeling when they bite) and builds the graphs.
    pub fn new(
        a: FeatureSet,
        b: FeatureSet,
        geometry: TwoViewGeometry,
        labels: GtLabels,
        difficulty: f64,
        cfg: &TrainConfig,
        wf: &WireframeConfig,
        gt: &GtConfig,
    ) -> Result<Self> {
        let over = |f: &FeatureSet| f.keypoints.len() > cfg.max_keypoints || f.lines.len() > cfg.max_lines;
        let (a, b, labels) = if over(&a) || over(&b) {
            let a = a.truncated(cfg.max_keypoints, cfg.max_lines);
            let b = b.truncated(cfg.max_keypoints, cfg.max_lines);
            let labels = label_pair(&a, &b, &geometry, gt, wf);
            (a, b, labels)
        } else {
            (a, b, labels)
        };
        let (wa, wb) = (build_wireframe(&a, wf), build_wireframe(&b, wf));
        labels.validate([wa.num_nodes(), wb.num_nodes(), a.lines.len(), b.lines.len()])?;
        Ok(PreparedPair {
            graph_a: GraphInput::from_wireframe(&wa)?,
            graph_b: GraphInput::from_wireframe(&wb)?,
            a,
            b,
            geometry,
            labels,
            difficulty,
        })
    }

    pub fn from_synthetic(pair: SyntheticPair, cfg: &TrainConfig, wf: &WireframeConfig, gt: &GtConfig) -> Result<Self> {
        PreparedPair::new(pair.a, pair.b, pair.geometry, pair.labels, pair.difficulty, cfg, wf, gt)
    }

    pub fn to_synthetic(&self) -> SyntheticPair {
        SyntheticPair {
            a: self.a.clone(),
            b: self.b.clone(),
            geometry: self.geometry.clone(),
            labels: self.labels.clone(),
            difficulty: self.difficulty,
        }
    }
}

/// RNG for the `index`-th generated pair of a run, independent of the order
/// in which pairs are generated.
pub fn pair_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

/// Where training pairs come from.
#[derive(Clone, Copy, Debug)]
pub enum TrainSource<'a> {
    /// A fixed pool ordered by difficulty; at each step a pair is drawn from
    /// the prefix the curriculum has unlocked.
    Pool(&'a [PreparedPair]),
    /// A fresh synthetic pair at the curriculum difficulty every step.
    Fresh(&'a SynthConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub loss: f64,
    pub point_precision: f64,
    pub point_recall: f64,
    pub line_precision: f64,
    pub line_recall: f64,
    pub difficulty: f64,
}

/// Hooks for logging and checkpointing, plus failure dumps. All default to no-ops.
pub trait TrainObserver {
    fn record(&mut self, _record: &LogRecord) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&mut self, _iteration: usize, _params: &GnnParams<f64>) -> Result<()> {
        Ok(())
    }

    /// Saves the pair that produced a non-finite loss; returns where.
    fn dump(&mut self, _iteration: usize, _pair: &PreparedPair) -> Option<PathBuf> {
        None
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: GnnParams<f64>,
    /// Loss of every iteration.
    pub losses: Vec<f64>,
    pub log: Vec<LogRecord>,
}

/// Matches and counts of one forward pass.
pub struct PairScores {
    pub points: Vec<Match>,
    pub lines: Vec<Match>,
    pub point_stats: MatchStats,
    pub line_stats: MatchStats,
}

/// Runs the network on a prepared pair. `eta` filters the mutual nearest
/// neighbours; use 0 to keep every candidate for ranking metrics.
pub fn score_pair(params: &GnnParams<f64>, pair: &PreparedPair, eta: f64) -> Result<PairScores> {
    let mut tape = Tape::new();
    let out = forward_pair(&mut tape, params, &pair.graph_a, &pair.graph_b)?;
    let pa = tape.value(out.point_log_assignment).map(f64::exp);
    let la = tape.value(out.line_log_assignment).map(f64::exp);
    let points = extract_matches(&pa, eta)?;
    let lines = extract_matches(&la, eta)?;
    Ok(PairScores {
        point_stats: match_stats(&points, &pair.labels.points),
        line_stats: match_stats(&lines, &pair.labels.lines),
        points,
        lines,
    })
}

pub fn train(
    gnn: GnnConfig,
    cfg: &TrainConfig,
    wf: &WireframeConfig,
    gt: &GtConfig,
    source: TrainSource,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = GnnParams::init(gnn, &mut init_rng)?;
    train_from(params, cfg, wf, gt, source, observer)
}

/// Continues training from `params`.
pub fn train_from(
    mut params: GnnParams<f64>,
    cfg: &TrainConfig,
    wf: &WireframeConfig,
    gt: &GtConfig,
    source: TrainSource,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let TrainSource::Pool(pool) = source {
        if pool.is_empty() {
            return Err(Error::Invalid("training pool is empty".into()));
        }
    }
    let mut adam = Adam::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        ..Default::default()
    });
    let mut pick_rng = pair_rng(cfg.seed, u64::MAX - 1);
    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut log = Vec::new();
    let mut fresh;
    for it in 0..cfg.iterations {
        let difficulty = cfg.difficulty_at(it);
        let pair: &PreparedPair = match source {
            TrainSource::Pool(pool) => {
                use rand::Rng;
                // Pools are sorted by difficulty; unlock pairs up to the
                // current level, always at least the first.
                let unlocked = pool.partition_point(|p| p.difficulty <= difficulty).max(1);
                &pool[pick_rng.random_range(0..unlocked)]
            }
            TrainSource::Fresh(synth) => {
                let mut rng = pair_rng(cfg.seed, it as u64);
                let p = generate_synthetic_pair(synth, difficulty, wf, &mut rng)?;
                fresh = PreparedPair::from_synthetic(p, cfg, wf, gt)?;
                &fresh
            }
        };
        let mut tape = Tape::new();
        let out = forward_pair(&mut tape, &params, &pair.graph_a, &pair.graph_b)?;
        let loss = nll_loss_on_tape(
            &mut tape,
            out.point_log_assignment,
            out.line_log_assignment,
            &pair.labels,
            cfg.normalize_loss,
        )?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            let dump = observer.dump(it, pair);
            return Err(Error::NonFiniteLoss { iteration: it, dump });
        }
        losses.push(value);
        let last = it + 1 == cfg.iterations;
        if cfg.log_every > 0 && (it % cfg.log_every == 0 || last) {
            let pa = tape.value(out.point_log_assignment).map(f64::exp);
            let la = tape.value(out.line_log_assignment).map(f64::exp);
            let ps = match_stats(&extract_matches(&pa, cfg.match_threshold)?, &pair.labels.points);
            let ls = match_stats(&extract_matches(&la, cfg.match_threshold)?, &pair.labels.lines);
            let rec = LogRecord {
                iter: it,
                loss: value,
                point_precision: ps.precision(),
                point_recall: ps.recall(),
                line_precision: ls.precision(),
                line_recall: ls.recall(),
                difficulty,
            };
            observer.record(&rec)?;
            log.push(rec);
        }
        let grads = tape.backward(loss)?;
        adam.step(&mut params.store, &grads.params());
        if cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 && !last {
            observer.checkpoint(it + 1, &params)?;
        }
    }
    observer.checkpoint(cfg.iterations, &params)?;
    Ok(TrainOutcome { params, losses, log })
}

/// Generates `count` pairs with difficulties spread evenly over
/// `[0, max_difficulty]`, pair `k` drawn from its own RNG stream.
pub fn generate_pool(
    synth: &SynthConfig,
    cfg: &TrainConfig,
    wf: &WireframeConfig,
    gt: &GtConfig,
    count: usize,
    max_difficulty: f64,
    seed: u64,
) -> Result<Vec<PreparedPair>> {
    (0..count)
        .map(|k| {
            let d = if count > 1 {
                max_difficulty * k as f64 / (count - 1) as f64
            } else {
                max_difficulty
            };
            let mut rng = pair_rng(seed, k as u64);
            let p = generate_synthetic_pair(synth, d, wf, &mut rng)?;
            PreparedPair::from_synthetic(p, cfg, wf, gt)
        })
        .collect()
}
