mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::gnn_ref::{self, max_abs_diff, Mat};
use support::scenes::{permute_nodes, random_features, random_permutation};
use wirematch::gnn::{
    attention_message, attention_update, gnn_forward, line_message_passing, encode_positions,
    GnnConfig, GnnParams, GraphInput,
};
use wirematch::numerics::{Tape, Tensor};
use wirematch::wireframe::{build_wireframe, Wireframe, WireframeConfig};

fn params(cfg: GnnConfig, seed: u64) -> GnnParams<f64> {
    let mut p = GnnParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    // Nonzero biases so that the oracle exercises them as well.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for (name, t) in p.store.iter_mut() {
        if name.ends_with(".bias") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    p
}

fn random_mat<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn tensor(m: &Mat) -> Tensor<f64> {
    Tensor::from_rows(m).unwrap()
}

fn scene(seed: u64, kps: usize, lines: usize, desc: usize) -> Wireframe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = random_features(&mut rng, kps, lines, desc, 64, 48);
    build_wireframe(&fs, &WireframeConfig::default())
}

fn forward(p: &GnnParams<f64>, a: &Wireframe, b: &Wireframe) -> (Tensor<f64>, Tensor<f64>) {
    let ga = GraphInput::from_wireframe(a).unwrap();
    let gb = GraphInput::from_wireframe(b).unwrap();
    let mut tape = Tape::new();
    let (fa, fb) = gnn_forward(&mut tape, p, &ga, &gb).unwrap();
    (tape.value(fa).clone(), tape.value(fb).clone())
}

#[test]
fn attention_matches_loop_reference() {
    let cfg = GnnConfig::tiny(4);
    let p = params(cfg, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..20 {
        let x = random_mat(&mut rng, 3, cfg.dim);
        let t = random_mat(&mut rng, 4, cfg.dim);
        let mut tape = Tape::new();
        let (xv, tv) = (tape.leaf(tensor(&x)), tape.leaf(tensor(&t)));
        let out = attention_update(&mut tape, &p, "block0.cross", xv, tv).unwrap();
        let expected = gnn_ref::attention(&p.store, &cfg, "block0.cross", &x, &t);
        let err = max_abs_diff(&expected, tape.value(out));
        assert!(err < 1e-10, "trial {trial}: {err}");
    }
}

#[test]
fn single_node_attends_to_itself() {
    let cfg = GnnConfig::tiny(4);
    let p = params(cfg, 3);
    let x = random_mat(&mut ChaCha8Rng::seed_from_u64(4), 1, cfg.dim);
    let mut tape = Tape::new();
    let xv = tape.leaf(tensor(&x));
    let msg = attention_message(&mut tape, &p, "block0.self", xv, xv).unwrap();
    // With one key the attention weight is exactly 1, so the message is the
    // merged value projection.
    let v = gnn_ref::linear(&p.store, "block0.self.v", &x);
    let expected = gnn_ref::linear(&p.store, "block0.self.merge", &v);
    assert!(max_abs_diff(&expected, tape.value(msg)) < 1e-12);
}

#[test]
fn empty_target_gives_zero_message() {
    let cfg = GnnConfig::tiny(4);
    let p = params(cfg, 5);
    let x = random_mat(&mut ChaCha8Rng::seed_from_u64(6), 3, cfg.dim);
    let mut tape = Tape::new();
    let xv = tape.leaf(tensor(&x));
    let empty = tape.leaf(Tensor::zeros(&[0, cfg.dim]));
    let msg = attention_message(&mut tape, &p, "block0.cross", xv, empty).unwrap();
    assert!(tape.value(msg).data().iter().all(|&v| v == 0.0));
}

fn zero_mlp_output(p: &mut GnnParams<f64>, prefix: &str) {
    for suffix in ["weight", "bias"] {
        let t = p.store.get_mut(&format!("{prefix}.2.{suffix}")).unwrap();
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
}

#[test]
fn zero_residual_branches_are_identity() {
    let cfg = GnnConfig::tiny(4);
    let mut p = params(cfg, 7);
    zero_mlp_output(&mut p, "block0.self.psi");
    zero_mlp_output(&mut p, "block0.line.phi");
    let w = scene(8, 5, 4, 4);
    let g = GraphInput::from_wireframe(&w).unwrap();
    let x = random_mat(&mut ChaCha8Rng::seed_from_u64(9), w.num_nodes(), cfg.dim);
    let mut tape = Tape::new();
    let xv = tape.leaf(tensor(&x));
    let y = attention_update(&mut tape, &p, "block0.self", xv, xv).unwrap();
    assert_eq!(tape.value(y), tape.value(xv));
    let (_, de) = encode_positions(&mut tape, &p, &g).unwrap();
    let z = line_message_passing(&mut tape, &p, 0, xv, &g, de).unwrap();
    assert_eq!(tape.value(z), tape.value(xv));
}

#[test]
fn line_message_passing_matches_loop_reference() {
    let cfg = GnnConfig::tiny(4);
    let p = params(cfg, 10);
    for seed in 0..20 {
        let w = scene(100 + seed, 4, 6, 4);
        let g = GraphInput::from_wireframe(&w).unwrap();
        let x = random_mat(&mut ChaCha8Rng::seed_from_u64(seed), w.num_nodes(), cfg.dim);
        let mut tape = Tape::new();
        let xv = tape.leaf(tensor(&x));
        let (_, de) = encode_positions(&mut tape, &p, &g).unwrap();
        let y = line_message_passing(&mut tape, &p, 0, xv, &g, de).unwrap();
        let expected = gnn_ref::line_message_passing(&p.store, 0, &w, &x);
        assert!(max_abs_diff(&expected, tape.value(y)) < 1e-10);
        // Isolated keypoints pass through untouched.
        for i in (0..w.num_nodes()).filter(|&i| w.degree(i) == 0) {
            assert_eq!(tape.value(y).row_slice(i), &x[i][..]);
        }
    }
}

#[test]
fn incidences_cover_every_edge_twice() {
    let w = scene(11, 10, 12, 4);
    let g = GraphInput::<f64>::from_wireframe(&w).unwrap();
    let degree_sum: usize = (0..w.num_nodes()).map(|i| w.degree(i)).sum();
    assert_eq!(g.edge_enc_input.rows(), 2 * w.num_edges());
    assert_eq!(degree_sum, 2 * w.num_edges());
}

#[test]
fn opposite_offsets_on_the_two_endpoints() {
    use wirematch::features::{FeatureSet, LineSegment};
    let mut fs = FeatureSet::empty(100, 100);
    fs.lines.push(LineSegment {
        x1: 40.0,
        y1: 50.0,
        x2: 41.0,
        y2: 50.0,
        score: Some(0.5),
        desc1: vec![1.0, 0.0],
        desc2: vec![0.0, 1.0],
    });
    let w = build_wireframe(&fs, &WireframeConfig { merge_distance: 0.0 });
    let g = GraphInput::<f64>::from_wireframe(&w).unwrap();
    let (r0, r1) = (g.edge_enc_input.row_slice(0), g.edge_enc_input.row_slice(1));
    assert_eq!(r0[2], -r1[2]);
    assert_eq!(r0[3], 0.0);
    assert!(r0[2] > 0.0);
}

#[test]
fn full_forward_matches_unrolled_reference() {
    for (cfg, kps, lines) in [
        (GnnConfig::tiny(4), 1, 1),
        (GnnConfig::tiny(4), 3, 3),
        (GnnConfig { dim: 12, layers: 2, heads: 3, desc_dim: 4, line_message_passing: true }, 6, 5),
        (GnnConfig { line_message_passing: false, ..GnnConfig::tiny(4) }, 4, 3),
    ] {
        let p = params(cfg, 12);
        for seed in 0..5 {
            let a = scene(200 + seed, kps, lines, 4);
            let b = scene(300 + seed, kps + 1, lines, 4);
            let (fa, fb) = forward(&p, &a, &b);
            let (ea, eb) = gnn_ref::forward(&p.store, &cfg, &a, &b);
            assert!(max_abs_diff(&ea, &fa) < 1e-10);
            assert!(max_abs_diff(&eb, &fb) < 1e-10);
        }
    }
}

#[test]
fn siamese_and_swap_symmetry() {
    let cfg = GnnConfig { desc_dim: 4, ..GnnConfig::default() };
    let p = params(cfg, 13);
    let a = scene(14, 8, 6, 4);
    let b = scene(15, 7, 5, 4);
    let (fa, fb) = forward(&p, &a, &a);
    assert_eq!(fa, fb);
    let (fa, fb) = forward(&p, &a, &b);
    let (gb, ga) = forward(&p, &b, &a);
    assert_eq!(fa, ga);
    assert_eq!(fb, gb);
}

#[test]
fn permutation_equivariance() {
    let cfg = GnnConfig { desc_dim: 4, ..GnnConfig::default() };
    let p = params(cfg, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for seed in 0..10 {
        let a = scene(400 + seed, 8, 6, 4);
        let b = scene(500 + seed, 6, 6, 4);
        let perm = random_permutation(&mut rng, a.num_nodes());
        let (fa, fb) = forward(&p, &a, &b);
        let (pa, pb) = forward(&p, &permute_nodes(&a, &perm), &b);
        for (k, &old) in perm.iter().enumerate() {
            for c in 0..cfg.dim {
                assert!((pa.at(k, c) - fa.at(old, c)).abs() < 1e-9);
            }
        }
        assert!(fb.zip_map(&pb, |x, y| x - y).max_abs() < 1e-9);
    }
}

#[test]
fn endpoint_order_does_not_matter() {
    let cfg = GnnConfig { desc_dim: 4, ..GnnConfig::default() };
    let p = params(cfg, 18);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let fs = random_features(&mut rng, 6, 8, 4, 64, 48);
    let mut flipped = fs.clone();
    for l in flipped.lines.iter_mut().step_by(2) {
        std::mem::swap(&mut l.x1, &mut l.x2);
        std::mem::swap(&mut l.y1, &mut l.y2);
        std::mem::swap(&mut l.desc1, &mut l.desc2);
    }
    let cfgw = WireframeConfig::default();
    let (a, a2) = (build_wireframe(&fs, &cfgw), build_wireframe(&flipped, &cfgw));
    let b = scene(20, 5, 5, 4);
    let (fa, _) = forward(&p, &a, &b);
    let (fa2, _) = forward(&p, &a2, &b);
    // Node order may differ; compare by position.
    for (i, n) in a.nodes.iter().enumerate() {
        let j = a2.nodes.iter().position(|m| m.position == n.position).unwrap();
        for c in 0..cfg.dim {
            assert!((fa.at(i, c) - fa2.at(j, c)).abs() < 1e-9);
        }
    }
}
