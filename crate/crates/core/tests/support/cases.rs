use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wirematch::gnn::{GnnConfig, GnnParams, GraphInput};
use wirematch::groundtruth::{GtLabels, LabelSet};
use wirematch::matcher::forward_pair;
use wirematch::numerics::{grad_check, GradCheckReport, ParamStore, Tape};
use wirematch::training::nll_loss_on_tape;
use wirematch::wireframe::{build_wireframe, WireframeConfig};

use super::scenes::random_features;

/// Random partial labels over an `m x n` problem; some indices are ignored
/// when `ignore` is set.
pub fn random_labels<R: Rng>(rng: &mut R, m: usize, n: usize, ignore: bool) -> LabelSet {
    let mut rows: Vec<usize> = (0..m).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    rows.shuffle(rng);
    cols.shuffle(rng);
    let k = rng.random_range(0..=m.min(n));
    let matches: Vec<[usize; 2]> = rows.iter().zip(&cols).take(k).map(|(&i, &j)| [i, j]).collect();
    let mut ig_a = vec![false; m];
    let mut ig_b = vec![false; n];
    if ignore {
        for &i in &rows[k..] {
            ig_a[i] = rng.random_bool(0.3);
        }
        for &j in &cols[k..] {
            ig_b[j] = rng.random_bool(0.3);
        }
    }
    LabelSet::from_parts(matches, &ig_a, &ig_b)
}

pub struct TinyCase {
    pub params: GnnParams<f64>,
    pub a: GraphInput<f64>,
    pub b: GraphInput<f64>,
    pub labels: GtLabels,
}

/// Tiny network (D = 8, one block) on two small random scenes of at most
/// six nodes per side, with random labels and random nonzero biases.
pub fn tiny_case(seed: u64, lmp: bool) -> TinyCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let desc = 4;
    let mut cfg = GnnConfig::tiny(desc);
    cfg.line_message_passing = lmp;
    let mut params = GnnParams::init(cfg, &mut rng).unwrap();
    for (name, t) in params.store.iter_mut() {
        if name.ends_with(".bias") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
        }
    }
    let wf = WireframeConfig::default();
    let graph = |rng: &mut ChaCha8Rng| loop {
        let kps = rng.random_range(1..=2);
        let lines = rng.random_range(1..=2);
        let fs = random_features(rng, kps, lines, desc, 64, 48);
        let w = build_wireframe(&fs, &wf);
        if w.num_nodes() <= 6 {
            return GraphInput::from_wireframe(&w).unwrap();
        }
    };
    let a = graph(&mut rng);
    let b = graph(&mut rng);
    let labels = GtLabels {
        points: random_labels(&mut rng, a.num_nodes, b.num_nodes, false),
        lines: random_labels(&mut rng, a.num_lines(), b.num_lines(), true),
    };
    TinyCase { params, a, b, labels }
}

/// Finite-difference check of the full forward pass plus loss.
pub fn check_tiny_case(case: &TinyCase, normalized: bool) -> GradCheckReport {
    let cfg = case.params.config;
    grad_check(&case.params.store, 1e-5, |store: &ParamStore<f64>, tape: &mut Tape<f64>| {
        let p = GnnParams { config: cfg, store: store.clone() };
        let out = forward_pair(tape, &p, &case.a, &case.b)?;
        nll_loss_on_tape(tape, out.point_log_assignment, out.line_log_assignment, &case.labels, normalized)
    })
    .unwrap()
}
