use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wirematch::assignment::{
    dual_log_softmax_on_tape, dual_softmax, extract_matches, line_score_matrix,
    line_scores_on_tape, point_score_matrix, LineEnds, ScoreMatrix,
};
use wirematch::numerics::{softmax, Tape, Tensor};

fn random_tensor<R: Rng>(rng: &mut R, r: usize, c: usize, scale: f64) -> Tensor<f64> {
    Tensor::new(vec![r, c], (0..r * c).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Two-pass compensated reference for `sqrt(σ_row · σ_col)`.
fn reference_dual_softmax(aug: &Tensor<f64>) -> Vec<Vec<f64>> {
    let (m, n) = (aug.rows(), aug.cols());
    let kahan = |xs: &mut dyn Iterator<Item = f64>| {
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for x in xs {
            let y = x - c;
            let t = s + y;
            c = (t - s) - y;
            s = t;
        }
        s
    };
    let row_max: Vec<f64> = (0..m).map(|i| (0..n).map(|j| aug.at(i, j)).fold(f64::MIN, f64::max)).collect();
    let col_max: Vec<f64> = (0..n).map(|j| (0..m).map(|i| aug.at(i, j)).fold(f64::MIN, f64::max)).collect();
    let row_z: Vec<f64> = (0..m)
        .map(|i| kahan(&mut (0..n).map(|j| (aug.at(i, j) - row_max[i]).exp())))
        .collect();
    let col_z: Vec<f64> = (0..n)
        .map(|j| kahan(&mut (0..m).map(|i| (aug.at(i, j) - col_max[j]).exp())))
        .collect();
    (0..m)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let r = (aug.at(i, j) - row_max[i]).exp() / row_z[i];
                    let c = (aug.at(i, j) - col_max[j]).exp() / col_z[j];
                    (r * c).sqrt()
                })
                .collect()
        })
        .collect()
}

#[test]
fn point_scores_are_dot_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fa = random_tensor(&mut rng, 5, 7, 1.0);
    let fb = random_tensor(&mut rng, 6, 7, 1.0);
    let s = point_score_matrix(&fa, &fb, 0.3).unwrap();
    for i in 0..5 {
        for j in 0..6 {
            let d: f64 = (0..7).map(|k| fa.at(i, k) * fb.at(j, k)).sum();
            assert!((s.body.at(i, j) - d).abs() < 1e-14);
        }
    }
    let zero = Tensor::zeros(&[1, 7]);
    let s = point_score_matrix(&zero, &fb, 0.0).unwrap();
    assert!(s.body.data().iter().all(|&v| v == 0.0));
    let eye = Tensor::<f64>::identity(4);
    assert_eq!(point_score_matrix(&eye, &eye, 0.0).unwrap().body, eye);
}

#[test]
fn one_by_one_with_equal_dustbin_is_half() {
    let s = ScoreMatrix { body: Tensor::<f64>::scalar(0.7), dustbin: 0.7 };
    let p = dual_softmax(&s).unwrap();
    for v in p.data() {
        assert!((v - 0.5).abs() < 1e-15);
    }
}

#[test]
fn dominant_entry_saturates() {
    let mut body = Tensor::zeros(&[3, 3]);
    body.set(1, 2, 60.0);
    let p = dual_softmax(&ScoreMatrix { body, dustbin: 5.0 }).unwrap();
    assert!(p.at(1, 2) > 1.0 - 1e-15);
    assert_eq!(extract_matches(&p, 0.2).unwrap().len(), 1);
}

#[test]
fn dual_softmax_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let body = random_tensor(&mut rng, 3, 4, 5.0);
        let s = ScoreMatrix { body, dustbin: rng.random_range(-3.0..3.0) };
        let p = dual_softmax(&s).unwrap();
        let r = reference_dual_softmax(&s.augmented());
        for i in 0..4 {
            for j in 0..5 {
                assert!((p.at(i, j) - r[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn tape_and_plain_paths_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let body = random_tensor(&mut rng, 4, 5, 3.0);
    let s = ScoreMatrix { body: body.clone(), dustbin: 0.4 };
    let mut tape = Tape::new();
    let b = tape.leaf(body);
    let z = tape.leaf(Tensor::scalar(0.4));
    let log = dual_log_softmax_on_tape(&mut tape, b, z).unwrap();
    let p = dual_softmax(&s).unwrap();
    assert_eq!(tape.value(log).map(|v| v.exp()), p);
}

fn brute_line_scores(g: &Tensor<f64>, a: &[(usize, usize)], b: &[(usize, usize)]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|&(s, e)| {
            b.iter()
                .map(|&(s2, e2)| {
                    let pairings = [[(s, s2), (e, e2)], [(s, e2), (e, s2)]];
                    pairings
                        .iter()
                        .map(|p| g.at(p[0].0, p[0].1) + g.at(p[1].0, p[1].1))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        })
        .collect()
}

fn random_lines<R: Rng>(rng: &mut R, count: usize, nodes: usize) -> Vec<(usize, usize)> {
    (0..count)
        .map(|_| {
            let s = rng.random_range(0..nodes);
            let mut e = rng.random_range(0..nodes);
            while e == s {
                e = rng.random_range(0..nodes);
            }
            (s, e)
        })
        .collect()
}

fn split(l: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    l.iter().copied().unzip()
}

#[test]
fn line_scores_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let g = random_tensor(&mut rng, 8, 9, 2.0);
        let la = random_lines(&mut rng, 4, 8);
        let lb = random_lines(&mut rng, 5, 9);
        let ((sa, ea), (sb, eb)) = (split(&la), split(&lb));
        let a = LineEnds::new(&sa, &ea).unwrap();
        let b = LineEnds::new(&sb, &eb).unwrap();
        let s = line_score_matrix(&g, a, b, 0.0).unwrap();
        let r = brute_line_scores(&g, &la, &lb);
        let mut tape = Tape::new();
        let gv = tape.leaf(g.clone());
        let tv = line_scores_on_tape(&mut tape, gv, a, b).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                assert_eq!(s.body.at(i, j), r[i][j]);
                assert_eq!(tape.value(tv).at(i, j), r[i][j]);
            }
        }
    }
}

#[test]
fn equal_endpoint_features_make_max_a_no_op() {
    // Rows 0 and 1 identical: both pairings coincide.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = random_tensor(&mut rng, 1, 6, 1.0);
    let fa = Tensor::from_rows(&[f.row_slice(0).to_vec(), f.row_slice(0).to_vec()]).unwrap();
    let fb = random_tensor(&mut rng, 2, 6, 1.0);
    let g = point_score_matrix(&fa, &fb, 0.0).unwrap().body;
    let a = LineEnds::new(&[0], &[1]).unwrap();
    let b = LineEnds::new(&[0], &[1]).unwrap();
    let s = line_score_matrix(&g, a, b, 0.0).unwrap();
    assert_eq!(s.body.at(0, 0), g.at(0, 0) + g.at(1, 1));
    assert_eq!(s.body.at(0, 0), g.at(0, 1) + g.at(1, 0));
}

fn brute_mutual(p: &Tensor<f64>, eta: f64) -> Vec<(usize, usize)> {
    let (m, n) = (p.rows() - 1, p.cols() - 1);
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let v = p.at(i, j);
            let row_best = (0..n).all(|k| p.at(i, k) < v || (p.at(i, k) == v && k >= j));
            let col_best = (0..m).all(|k| p.at(k, j) < v || (p.at(k, j) == v && k >= i));
            if row_best && col_best && v >= eta {
                out.push((i, j));
            }
        }
    }
    out
}

#[test]
fn mutual_nn_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..300 {
        let s = ScoreMatrix { body: random_tensor(&mut rng, 6, 6, 4.0), dustbin: 1.0 };
        let p = dual_softmax(&s).unwrap();
        let got: Vec<_> = extract_matches(&p, 0.2).unwrap().iter().map(|m| (m.a, m.b)).collect();
        assert_eq!(got, brute_mutual(&p, 0.2));
    }
}

#[test]
fn near_identity_matches_diagonal_and_low_scores_match_nothing() {
    let n = 5;
    let mut p = Tensor::filled(&[n + 1, n + 1], 0.01);
    for i in 0..n {
        p.set(i, i, 0.9);
    }
    let m = extract_matches(&p, 0.2).unwrap();
    assert_eq!(m.iter().map(|m| (m.a, m.b)).collect::<Vec<_>>(), (0..n).map(|i| (i, i)).collect::<Vec<_>>());
    let low = Tensor::filled(&[n + 1, n + 1], 0.1);
    assert!(extract_matches(&low, 0.2).unwrap().is_empty());
}

proptest! {
    #[test]
    fn endpoint_swap_is_bitwise_invariant(seed in any::<u64>(), flip in prop::collection::vec(any::<bool>(), 4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_tensor(&mut rng, 7, 7, 3.0);
        let la = random_lines(&mut rng, 4, 7);
        let lb = random_lines(&mut rng, 3, 7);
        let swapped: Vec<_> = la.iter().zip(&flip).map(|(&(s, e), &f)| if f { (e, s) } else { (s, e) }).collect();
        let ((sa, ea), (sb, eb), (sw, ew)) = (split(&la), split(&lb), split(&swapped));
        let b = LineEnds::new(&sb, &eb).unwrap();
        let s1 = line_score_matrix(&g, LineEnds::new(&sa, &ea).unwrap(), b, 0.0).unwrap();
        let s2 = line_score_matrix(&g, LineEnds::new(&sw, &ew).unwrap(), b, 0.0).unwrap();
        let bits = |t: &Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&s1.body), bits(&s2.body));
    }

    #[test]
    fn softmax_slices_sum_to_one(seed in any::<u64>(), m in 0usize..6, n in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = ScoreMatrix { body: random_tensor(&mut rng, m, n, 10.0), dustbin: rng.random_range(-2.0..2.0) };
        let aug = s.augmented();
        let rows = softmax(&aug, 1).unwrap();
        let cols = softmax(&aug, 0).unwrap();
        for i in 0..=m {
            prop_assert!((rows.row_slice(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for j in 0..=n {
            prop_assert!(((0..=m).map(|i| cols.at(i, j)).sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let p = dual_softmax(&s).unwrap();
        prop_assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0 + 1e-15));
    }

    #[test]
    fn matches_are_a_partial_injection(seed in any::<u64>(), m in 1usize..8, n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = ScoreMatrix { body: random_tensor(&mut rng, m, n, 6.0), dustbin: 0.5 };
        let p = dual_softmax(&s).unwrap();
        let found = extract_matches(&p, 0.0).unwrap();
        let mut a: Vec<_> = found.iter().map(|x| x.a).collect();
        let mut b: Vec<_> = found.iter().map(|x| x.b).collect();
        a.dedup();
        b.sort();
        b.dedup();
        prop_assert_eq!(a.len(), found.len());
        prop_assert_eq!(b.len(), found.len());
    }

    #[test]
    fn shift_leaves_assignment_unchanged(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = ScoreMatrix { body: random_tensor(&mut rng, 4, 5, 4.0), dustbin: 0.3 };
        let t = ScoreMatrix { body: s.body.map(|v| v + shift), dustbin: s.dustbin + shift };
        let (p, q) = (dual_softmax(&s).unwrap(), dual_softmax(&t).unwrap());
        prop_assert!(p.zip_map(&q, |x, y| x - y).max_abs() < 1e-12);
        let key = |v: Vec<wirematch::assignment::Match>| v.iter().map(|m| (m.a, m.b)).collect::<Vec<_>>();
        prop_assert_eq!(key(extract_matches(&p, 0.2).unwrap()), key(extract_matches(&q, 0.2).unwrap()));
    }
}
