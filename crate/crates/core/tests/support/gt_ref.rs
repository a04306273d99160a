//! Brute-force references for the ground-truth labeler, plus an analytic
//! two-plane depth scene.

use wirematch::features::{DepthMap, FeatureSet, LineSegment, TwoViewGeometry};
use wirematch::numerics::Tensor;

/// Minimum total cost over all partial one-to-one assignments that use only
/// finite entries. Returns the cost and one optimal assignment.
pub fn enumerate_partial(cost: &Tensor<f64>) -> (f64, Vec<(usize, usize)>) {
    fn rec(
        cost: &Tensor<f64>,
        row: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        acc: f64,
        best: &mut (f64, Vec<(usize, usize)>),
    ) {
        if row == cost.rows() {
            if acc < best.0 {
                *best = (acc, cur.clone());
            }
            return;
        }
        rec(cost, row + 1, used, cur, acc, best);
        for j in 0..cost.cols() {
            let c = cost.at(row, j);
            if used[j] || !c.is_finite() {
                continue;
            }
            used[j] = true;
            cur.push((row, j));
            rec(cost, row + 1, used, cur, acc + c, best);
            cur.pop();
            used[j] = false;
        }
    }
    let mut best = (0.0, Vec::new());
    rec(cost, 0, &mut vec![false; cost.cols()], &mut Vec::new(), 0.0, &mut best);
    best
}

/// Two pinhole cameras with identical intrinsics `f, (cx, cy)`, B shifted by
/// `tx` along X. The world is a far plane at `Z = far` plus a near vertical
/// strip at `Z = near` spanning `X ∈ [x0, x1]` (A frame).
#[derive(Clone, Copy, Debug)]
pub struct TwoPlaneScene {
    pub width: usize,
    pub height: usize,
    pub f: f64,
    pub tx: f64,
    pub near: f64,
    pub far: f64,
    pub x0: f64,
    pub x1: f64,
}

impl TwoPlaneScene {
    pub fn cx(&self) -> f64 {
        self.width as f64 / 2.0
    }

    pub fn cy(&self) -> f64 {
        self.height as f64 / 2.0
    }

    /// Pixel column range of the near strip in view A (`shift = 0`) or B
    /// (`shift = tx`).
    fn strip_columns(&self, shift: f64) -> (f64, f64) {
        let u = |x: f64| self.f * (x + shift) / self.near + self.cx();
        (u(self.x0), u(self.x1))
    }

    fn depth_at(&self, px: usize, shift: f64) -> f64 {
        let (lo, hi) = self.strip_columns(shift);
        let u = px as f64;
        if u >= lo && u <= hi {
            self.near
        } else {
            self.far
        }
    }

    pub fn depth_a(&self, px: usize) -> f64 {
        self.depth_at(px, 0.0)
    }

    pub fn depth_b(&self, px: usize) -> f64 {
        self.depth_at(px, self.tx)
    }

    pub fn geometry(&self) -> TwoViewGeometry {
        let k = [[self.f, 0.0, self.cx()], [0.0, self.f, self.cy()], [0.0, 0.0, 1.0]];
        let s = *self;
        TwoViewGeometry::DepthPose {
            k_a: k,
            k_b: k,
            r: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            t: [self.tx, 0.0, 0.0],
            depth_a: DepthMap::from_fn(self.width, self.height, move |x, _| s.depth_a(x)),
            depth_b: DepthMap::from_fn(self.width, self.height, move |x, _| s.depth_b(x)),
        }
    }

    /// Analytic transfer of an A pixel into B: lift with A's depth at the
    /// nearest pixel, shift, project; `None` when outside B or occluded.
    pub fn transfer_a_to_b(&self, p: [f64; 2], tol: f64) -> Option<[f64; 2]> {
        self.transfer(p, 0.0, self.tx, tol)
    }

    pub fn transfer_b_to_a(&self, p: [f64; 2], tol: f64) -> Option<[f64; 2]> {
        self.transfer(p, self.tx, -self.tx, tol)
    }

    fn transfer(&self, p: [f64; 2], src_shift: f64, dx: f64, tol: f64) -> Option<[f64; 2]> {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(p[0] >= 0.0 && p[1] >= 0.0 && p[0] < w && p[1] < h) {
            return None;
        }
        let px = (p[0].round() as usize).min(self.width - 1);
        let z = self.depth_at(px, src_shift);
        let x = (p[0] - self.cx()) * z / self.f + dx;
        let y = (p[1] - self.cy()) * z / self.f;
        let q = [self.f * x / z + self.cx(), self.f * y / z + self.cy()];
        if !(q[0] >= 0.0 && q[1] >= 0.0 && q[0] < w && q[1] < h) {
            return None;
        }
        let qx = (q[0].round() as usize).min(self.width - 1);
        let target_shift = src_shift + dx;
        let d = self.depth_at(qx, target_shift);
        if (z - d).abs() / d > tol {
            return None;
        }
        Some(q)
    }
}

pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
    let t = ((p[0] - a[0]) * vx + (p[1] - a[1]) * vy) / (vx * vx + vy * vy);
    if (0.0..=1.0).contains(&t) {
        let foot = [a[0] + t * vx, a[1] + t * vy];
        ((p[0] - foot[0]).powi(2) + (p[1] - foot[1]).powi(2)).sqrt()
    } else {
        let da = ((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2)).sqrt();
        let db = ((p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2)).sqrt();
        da.min(db)
    }
}

pub struct BruteLines {
    pub a_to_b: Vec<Vec<usize>>,
    pub b_to_a: Vec<Vec<usize>>,
    pub invalid_a: Vec<usize>,
    pub invalid_b: Vec<usize>,
}

/// Per-sample loops with an arbitrary transfer function.
pub fn brute_closeness(
    a: &[LineSegment],
    b: &[LineSegment],
    k: usize,
    dist: f64,
    fwd: impl Fn([f64; 2]) -> Option<[f64; 2]>,
    bwd: impl Fn([f64; 2]) -> Option<[f64; 2]>,
) -> BruteLines {
    let count = |src: &[LineSegment], dst: &[LineSegment], tr: &dyn Fn([f64; 2]) -> Option<[f64; 2]>| {
        let mut c = vec![vec![0usize; dst.len()]; src.len()];
        let mut inv = vec![0usize; src.len()];
        for (i, l) in src.iter().enumerate() {
            for s in 0..k {
                let t = s as f64 / (k - 1) as f64;
                let p = [l.x1 + t * (l.x2 - l.x1), l.y1 + t * (l.y2 - l.y1)];
                match tr(p) {
                    None => inv[i] += 1,
                    Some(q) => {
                        for (j, m) in dst.iter().enumerate() {
                            if point_segment_distance(q, [m.x1, m.y1], [m.x2, m.y2]) < dist {
                                c[i][j] += 1;
                            }
                        }
                    }
                }
            }
        }
        (c, inv)
    };
    let (a_to_b, invalid_a) = count(a, b, &fwd);
    let (b_to_a, invalid_b) = count(b, a, &bwd);
    BruteLines { a_to_b, b_to_a, invalid_a, invalid_b }
}

/// Reference line labels by exhaustive assignment. Returns (ignore_a, ignore_b, cost, optimal total).
pub fn brute_line_labels(r: &BruteLines, k: usize, overlap: f64) -> (Vec<bool>, Vec<bool>, Tensor<f64>, f64) {
    let ig_a: Vec<bool> = r.invalid_a.iter().map(|&c| 2 * c > k).collect();
    let ig_b: Vec<bool> = r.invalid_b.iter().map(|&c| 2 * c > k).collect();
    let (m, n) = (ig_a.len(), ig_b.len());
    let mut cost = Tensor::filled(&[m, n], f64::INFINITY);
    for i in 0..m {
        for j in 0..n {
            let (x, y) = (r.a_to_b[i][j] as f64, r.b_to_a[j][i] as f64);
            if !ig_a[i] && !ig_b[j] && x >= overlap * k as f64 && y >= overlap * k as f64 {
                cost.set(i, j, -x * y);
            }
        }
    }
    let (best, _) = enumerate_partial(&cost);
    (ig_a, ig_b, cost, best)
}

pub fn segment(x1: f64, y1: f64, x2: f64, y2: f64) -> LineSegment {
    LineSegment { x1, y1, x2, y2, score: None, desc1: vec![1.0], desc2: vec![1.0] }
}

pub fn features_with_lines(w: u32, h: u32, lines: Vec<LineSegment>) -> FeatureSet {
    let mut fs = FeatureSet::empty(w, h);
    fs.lines = lines;
    fs
}
