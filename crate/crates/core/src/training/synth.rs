//! Synthetic training pairs: a random wireframe scene seen through a
//! homography, with descriptor noise, positional jitter, dropout and
//! distractors. Labels are planted from the generator's bookkeeping.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    apply_homography, DepthMap, FeatureSet, Keypoint, LineSegment, Point2, TwoViewGeometry,
};
use crate::groundtruth::{GtLabels, LabelSet};
use crate::linalg::{self, Mat3};
use crate::wireframe::{build_wireframe, NodeSource, WireframeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    /// Isolated keypoints in the canonical scene.
    pub keypoints: usize,
    /// Line segments in the canonical scene.
    pub lines: usize,
    pub desc_dim: usize,
    /// Chance that a new line starts at an existing junction.
    pub connect_probability: f64,
    /// Minimum pixel distance between unrelated scene elements.
    pub min_spacing: f64,
    pub min_line_length: f64,
    pub max_line_length: f64,
    /// Scene elements stay this far from the image border in both views.
    pub margin: f64,
    /// Descriptor noise norm at difficulty 0 and 1.
    pub noise: [f64; 2],
    /// Extra factor on the descriptor noise of line endpoints.
    pub endpoint_noise_scale: f64,
    /// Per-view, per-endpoint probability at difficulty 0 and 1 that a line
    /// is cut short at that end, as detectors often do. A cut endpoint gets
    /// an unrelated descriptor and no longer marks the junction.
    pub endpoint_cut: [f64; 2],
    /// Range of the cut as a fraction of the line length.
    pub cut_fraction: [f64; 2],
    /// When positive, junction identities are drawn from this many shared
    /// prototypes, mimicking repetitive structure.
    pub junction_palette: usize,
    /// Per-view jitter standard deviation in pixels at difficulty 0 and 1.
    pub jitter: [f64; 2],
    /// Per-view, per-feature dropout probability at difficulty 0 and 1.
    pub dropout: [f64; 2],
    /// Upper bounds on the random number of distractors per view.
    pub distractor_keypoints: usize,
    pub distractor_lines: usize,
    /// Homography perturbation at difficulty 1.
    pub max_rotation_deg: f64,
    pub max_log_scale: f64,
    /// Fraction of the image size.
    pub max_translation: f64,
    pub max_perspective: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 256,
            height: 192,
            keypoints: 12,
            lines: 8,
            desc_dim: 32,
            connect_probability: 0.5,
            min_spacing: 12.0,
            min_line_length: 30.0,
            max_line_length: 90.0,
            margin: 8.0,
            noise: [0.1, 0.8],
            endpoint_noise_scale: 1.0,
            endpoint_cut: [0.0, 0.0],
            cut_fraction: [0.15, 0.35],
            junction_palette: 0,
            jitter: [0.2, 0.5],
            dropout: [0.0, 0.15],
            distractor_keypoints: 2,
            distractor_lines: 1,
            max_rotation_deg: 30.0,
            max_log_scale: 0.2,
            max_translation: 0.1,
            max_perspective: 0.4,
        }
    }
}

/// Largest per-coordinate jitter, keeping jittered copies of one junction
/// within the default merge distance.
const MAX_JITTER: f64 = 0.75;
const MAX_ATTEMPTS: usize = 200;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::Invalid("synth image must be at least 16x16".into()));
        }
        if self.desc_dim == 0 {
            return Err(Error::Invalid("synth.desc_dim must be positive".into()));
        }
        if !(self.min_line_length > 0.0 && self.max_line_length >= self.min_line_length) {
            return Err(Error::Invalid("synth line lengths must satisfy 0 < min <= max".into()));
        }
        for (name, r) in [("noise", self.noise), ("jitter", self.jitter), ("dropout", self.dropout)] {
            if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Invalid(format!("synth.{name} must be non-negative")));
            }
        }
        if !(0.0 <= self.cut_fraction[0] && self.cut_fraction[0] <= self.cut_fraction[1] && self.cut_fraction[1] < 0.5) {
            return Err(Error::Invalid("synth.cut_fraction must satisfy 0 <= lo <= hi < 0.5".into()));
        }
        if self.dropout.iter().chain(&self.endpoint_cut).any(|&p| !(0.0..=1.0).contains(&p)) || !(0.0..=1.0).contains(&self.connect_probability) {
            return Err(Error::Invalid("synth probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn lerp(r: [f64; 2], t: f64) -> f64 {
    r[0] + (r[1] - r[0]) * t
}

/// A generated pair with labels planted by the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPair {
    pub a: FeatureSet,
    pub b: FeatureSet,
    pub geometry: TwoViewGeometry,
    pub labels: GtLabels,
    pub difficulty: f64,
}

/// Homography about the image center whose rotation, scale, translation and
/// perspective terms all grow linearly with `difficulty`.
pub fn sample_homography<R: Rng + ?Sized>(cfg: &SynthConfig, difficulty: f64, rng: &mut R) -> Mat3<f64> {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let (cx, cy) = (w / 2.0, h / 2.0);
    let d = difficulty.clamp(0.0, 1.0);
    loop {
        let mut u = || rng.random_range(-1.0..1.0f64);
        let angle = d * cfg.max_rotation_deg.to_radians() * u();
        let scale = (d * cfg.max_log_scale * u()).exp();
        let (tx, ty) = (d * cfg.max_translation * w * u(), d * cfg.max_translation * h * u());
        // Perspective terms act on coordinates scaled by the half-extent.
        let (px, py) = (d * cfg.max_perspective * u() / cx, d * cfg.max_perspective * u() / cy);
        let (c, s) = (angle.cos() * scale, angle.sin() * scale);
        let core = [[c, -s, 0.0], [s, c, 0.0], [px, py, 1.0]];
        let to_center = [[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]];
        let back = [[1.0, 0.0, cx + tx], [0.0, 1.0, cy + ty], [0.0, 0.0, 1.0]];
        let hm = linalg::mat_mul(&back, &linalg::mat_mul(&core, &to_center));
        let corners = [[0.0, 0.0], [w, 0.0], [0.0, h], [w, h]];
        let ok = linalg::det(&hm).abs() > 1e-6
            && corners.iter().all(|p| {
                let z = hm[2][0] * p[0] + hm[2][1] * p[1] + hm[2][2];
                z > 0.1
            });
        if ok {
            return hm;
        }
    }
}

/// Mean displacement of the four image corners under `h`.
pub fn corner_displacement(h: &Mat3<f64>, width: f64, height: f64) -> f64 {
    let corners = [[0.0, 0.0], [width, 0.0], [0.0, height], [width, height]];
    corners
        .iter()
        .map(|&p| match apply_homography(h, p) {
            Some(q) => (q[0] - p[0]).hypot(q[1] - p[1]),
            None => f64::INFINITY,
        })
        .sum::<f64>()
        / 4.0
}

fn dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn point_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    crate::groundtruth::segment_distance(p, a, b)
}

fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let orient = |p: Point2, q: Point2, r: Point2| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

fn segment_segment(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    if segments_cross(a, b, c, d) {
        return 0.0;
    }
    point_segment(a, c, d)
        .min(point_segment(b, c, d))
        .min(point_segment(c, a, b))
        .min(point_segment(d, a, b))
}

/// Canonical scene in view-A coordinates.
#[derive(Clone, Debug, Default)]
struct Scene {
    junctions: Vec<Point2>,
    /// Junction index pairs.
    lines: Vec<[usize; 2]>,
    keypoints: Vec<Point2>,
    keypoint_scores: Vec<f64>,
}

impl Scene {
    fn degree(&self, j: usize) -> usize {
        self.lines.iter().filter(|l| l.contains(&j)).count()
    }

    fn seg(&self, l: usize) -> (Point2, Point2) {
        (self.junctions[self.lines[l][0]], self.junctions[self.lines[l][1]])
    }

    /// A new point clear of every existing feature.
    fn point_is_clear(&self, p: Point2, spacing: f64) -> bool {
        self.junctions.iter().all(|&q| dist(p, q) >= spacing)
            && self.keypoints.iter().all(|&q| dist(p, q) >= spacing)
            && (0..self.lines.len()).all(|l| {
                let (a, b) = self.seg(l);
                point_segment(p, a, b) >= spacing
            })
    }

    /// Candidate line from junction `start` (existing, or `None` for new) to
    /// the new point `end`.
    fn line_is_clear(&self, start: Point2, start_id: Option<usize>, end: Point2, spacing: f64) -> bool {
        if !self.point_is_clear(end, spacing) {
            return false;
        }
        if start_id.is_none() && !self.point_is_clear(start, spacing) {
            return false;
        }
        for (k, &q) in self.junctions.iter().enumerate() {
            if Some(k) != start_id && point_segment(q, start, end) < spacing {
                return false;
            }
        }
        if self.keypoints.iter().any(|&q| point_segment(q, start, end) < spacing) {
            return false;
        }
        let dir = [end[0] - start[0], end[1] - start[1]];
        for l in 0..self.lines.len() {
            let (a, b) = self.seg(l);
            let touching = start_id.is_some_and(|s| self.lines[l].contains(&s));
            if touching {
                // Keep at least 30 degrees between lines leaving one junction.
                let other = if self.junctions[self.lines[l][0]] == start { b } else { a };
                let od = [other[0] - start[0], other[1] - start[1]];
                let cos = (dir[0] * od[0] + dir[1] * od[1]) / (dir[0].hypot(dir[1]) * od[0].hypot(od[1]));
                if cos > 30f64.to_radians().cos() {
                    return false;
                }
            } else if segment_segment(start, end, a, b) < spacing {
                return false;
            }
        }
        true
    }
}

struct Region<'a> {
    cfg: &'a SynthConfig,
    h: &'a Mat3<f64>,
}

impl Region<'_> {
    /// Inside both views with the configured margin.
    fn contains(&self, p: Point2) -> bool {
        let (w, ht, m) = (self.cfg.width as f64, self.cfg.height as f64, self.cfg.margin);
        let inside = |q: Point2| q[0] >= m && q[1] >= m && q[0] <= w - m && q[1] <= ht - m;
        inside(p) && apply_homography(self.h, p).is_some_and(inside)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Point2> {
        let (w, ht, m) = (self.cfg.width as f64, self.cfg.height as f64, self.cfg.margin);
        for _ in 0..MAX_ATTEMPTS {
            let p = [rng.random_range(m..w - m), rng.random_range(m..ht - m)];
            if self.contains(p) {
                return Some(p);
            }
        }
        None
    }
}

fn build_scene<R: Rng + ?Sized>(cfg: &SynthConfig, h: &Mat3<f64>, rng: &mut R) -> Scene {
    let region = Region { cfg, h };
    let mut scene = Scene::default();
    let sp = cfg.min_spacing;
    for _ in 0..cfg.lines {
        for _ in 0..MAX_ATTEMPTS {
            let open: Vec<usize> = (0..scene.junctions.len()).filter(|&j| scene.degree(j) < 3).collect();
            let start_id = if !open.is_empty() && rng.random_bool(cfg.connect_probability) {
                Some(open[rng.random_range(0..open.len())])
            } else {
                None
            };
            let start = match start_id {
                Some(j) => scene.junctions[j],
                None => match region.sample(rng) {
                    Some(p) => p,
                    None => continue,
                },
            };
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let len = rng.random_range(cfg.min_line_length..=cfg.max_line_length);
            let end = [start[0] + len * angle.cos(), start[1] + len * angle.sin()];
            if !region.contains(end) || !scene.line_is_clear(start, start_id, end, sp) {
                continue;
            }
            let s = start_id.unwrap_or_else(|| {
                scene.junctions.push(start);
                scene.junctions.len() - 1
            });
            scene.junctions.push(end);
            scene.lines.push([s, scene.junctions.len() - 1]);
            break;
        }
    }
    for _ in 0..cfg.keypoints {
        for _ in 0..MAX_ATTEMPTS {
            let Some(p) = region.sample(rng) else { break };
            if scene.point_is_clear(p, sp) {
                scene.keypoints.push(p);
                scene.keypoint_scores.push(rng.random_range(0.3..1.0));
                break;
            }
        }
    }
    scene
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `normalize(identity + σ g / sqrt(dim))` for Gaussian `g`, so the noise
/// norm is about `σ`.
fn noisy<R: Rng + ?Sized>(rng: &mut R, identity: &[f64], sigma: f64) -> Vec<f64> {
    let s = sigma / (identity.len() as f64).sqrt();
    let v: Vec<f64> = identity
        .iter()
        .map(|&x| x + s * gauss(rng))
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1e-9 {
        v.into_iter().map(|x| x / n).collect()
    } else {
        identity.to_vec()
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn jitter<R: Rng + ?Sized>(rng: &mut R, p: Point2, sigma: f64) -> Point2 {
    let mut j = || {
        let g: f64 = StandardNormal.sample(rng);
        (sigma * g).clamp(-MAX_JITTER / 2.0, MAX_JITTER / 2.0)
    };
    [p[0] + j(), p[1] + j()]
}

/// Scene element a view feature was derived from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Tag {
    Keypoint(usize),
    Junction(usize),
}

struct View {
    features: FeatureSet,
    keypoint_tags: Vec<Option<Tag>>,
    line_tags: Vec<Option<usize>>,
    /// Per line: whether each endpoint was cut.
    cut: Vec<[bool; 2]>,
}

struct Identities {
    keypoints: Vec<Vec<f64>>,
    junctions: Vec<Vec<f64>>,
}

fn render_view<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    scene: &Scene,
    ids: &Identities,
    transform: Option<&Mat3<f64>>,
    difficulty: f64,
    shuffle: bool,
    rng: &mut R,
) -> View {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let sigma = lerp(cfg.noise, difficulty);
    let jit = lerp(cfg.jitter, difficulty);
    let drop = lerp(cfg.dropout, difficulty);
    let place = |p: Point2| transform.map_or(Some(p), |t| apply_homography(t, p));
    let clamp = |p: Point2| [p[0].clamp(0.0, w - 1e-6), p[1].clamp(0.0, h - 1e-6)];

    let mut keypoints = Vec::new();
    let mut keypoint_tags = Vec::new();
    for (k, &p) in scene.keypoints.iter().enumerate() {
        if rng.random_bool(drop) {
            continue;
        }
        let Some(q) = place(p) else { continue };
        let score = (scene.keypoint_scores[k] + 0.05 * gauss(rng)).clamp(0.0, 1.0);
        let q = clamp(jitter(rng, q, jit));
        keypoints.push(Keypoint {
            x: q[0],
            y: q[1],
            score,
            desc: noisy(rng, &ids.keypoints[k], sigma),
        });
        keypoint_tags.push(Some(Tag::Keypoint(k)));
    }
    let junction_pos: Vec<Option<Point2>> = scene
        .junctions
        .iter()
        .map(|&p| place(p).map(|q| jitter(rng, q, jit)))
        .collect();
    let cut_p = lerp(cfg.endpoint_cut, difficulty);
    let mut lines = Vec::new();
    let mut line_tags = Vec::new();
    let mut cut = Vec::new();
    for (l, &[s, e]) in scene.lines.iter().enumerate() {
        if rng.random_bool(drop) {
            continue;
        }
        let (Some(ps), Some(pe)) = (junction_pos[s], junction_pos[e]) else { continue };
        let (ps, pe) = (clamp(jitter(rng, ps, jit / 2.0)), clamp(jitter(rng, pe, jit / 2.0)));
        let esigma = sigma * cfg.endpoint_noise_scale;
        let mut ends = [ps, pe];
        let mut descs = [noisy(rng, &ids.junctions[s], esigma), noisy(rng, &ids.junctions[e], esigma)];
        let mut was_cut = [false; 2];
        for k in 0..2 {
            if cut_p > 0.0 && rng.random_bool(cut_p) {
                let f = rng.random_range(cfg.cut_fraction[0]..=cfg.cut_fraction[1]);
                let (p, q) = ([ps, pe][k], [ps, pe][1 - k]);
                ends[k] = [p[0] + f * (q[0] - p[0]), p[1] + f * (q[1] - p[1])];
                descs[k] = unit_vector(rng, cfg.desc_dim);
                was_cut[k] = true;
            }
        }
        let [desc1, desc2] = descs;
        lines.push(LineSegment {
            x1: ends[0][0],
            y1: ends[0][1],
            x2: ends[1][0],
            y2: ends[1][1],
            score: None,
            desc1,
            desc2,
        });
        line_tags.push(Some(l));
        cut.push(was_cut);
    }

    // Distractors, clear of everything placed so far in this view.
    let mut taken: Vec<Point2> = keypoints.iter().map(|k| k.position()).collect();
    let mut segs: Vec<(Point2, Point2)> = lines.iter().map(|l| (l.start(), l.end())).collect();
    let sp = cfg.min_spacing;
    let m = cfg.margin;
    let clear = |p: Point2, taken: &[Point2], segs: &[(Point2, Point2)]| {
        taken.iter().all(|&q| dist(p, q) >= sp)
            && segs.iter().all(|&(a, b)| point_segment(p, a, b) >= sp)
    };
    let n_kp = rng.random_range(0..=cfg.distractor_keypoints);
    for _ in 0..n_kp {
        for _ in 0..MAX_ATTEMPTS {
            let p = [rng.random_range(m..w - m), rng.random_range(m..h - m)];
            if clear(p, &taken, &segs) {
                keypoints.push(Keypoint {
                    x: p[0],
                    y: p[1],
                    score: rng.random_range(0.3..1.0),
                    desc: unit_vector(rng, cfg.desc_dim),
                });
                keypoint_tags.push(None);
                taken.push(p);
                break;
            }
        }
    }
    let n_lines = rng.random_range(0..=cfg.distractor_lines);
    for _ in 0..n_lines {
        for _ in 0..MAX_ATTEMPTS {
            let a = [rng.random_range(m..w - m), rng.random_range(m..h - m)];
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let len = rng.random_range(cfg.min_line_length..=cfg.max_line_length);
            let b = [a[0] + len * angle.cos(), a[1] + len * angle.sin()];
            let inside = b[0] >= m && b[1] >= m && b[0] <= w - m && b[1] <= h - m;
            let far_from_points = taken.iter().all(|&q| point_segment(q, a, b) >= sp);
            let far_from_lines = segs.iter().all(|&(c, d)| segment_segment(a, b, c, d) >= sp);
            let ends_clear = segs.iter().flat_map(|&(c, d)| [c, d]).all(|q| point_segment(q, a, b) >= sp);
            if inside && far_from_points && far_from_lines && ends_clear {
                lines.push(LineSegment {
                    x1: a[0],
                    y1: a[1],
                    x2: b[0],
                    y2: b[1],
                    score: None,
                    desc1: unit_vector(rng, cfg.desc_dim),
                    desc2: unit_vector(rng, cfg.desc_dim),
                });
                line_tags.push(None);
                cut.push([false; 2]);
                segs.push((a, b));
                break;
            }
        }
    }

    if shuffle {
        let mut order: Vec<usize> = (0..keypoints.len()).collect();
        order.shuffle(rng);
        keypoints = order.iter().map(|&i| keypoints[i].clone()).collect();
        keypoint_tags = order.iter().map(|&i| keypoint_tags[i]).collect();
        let mut order: Vec<usize> = (0..lines.len()).collect();
        order.shuffle(rng);
        lines = order.iter().map(|&i| lines[i].clone()).collect();
        line_tags = order.iter().map(|&i| line_tags[i]).collect();
        cut = order.iter().map(|&i| cut[i]).collect();
    }

    View {
        features: FeatureSet {
            width: cfg.width,
            height: cfg.height,
            keypoints,
            lines,
        },
        keypoint_tags,
        line_tags,
        cut,
    }
}

fn node_tags(view: &View, scene: &Scene, wf: &WireframeConfig) -> Vec<Option<Tag>> {
    let w = build_wireframe(&view.features, wf);
    w.nodes
        .iter()
        .map(|n| match &n.source {
            NodeSource::Keypoint(k) => view.keypoint_tags[*k],
            NodeSource::Endpoints(members) => members
                .iter()
                .find(|&&(line, end)| !view.cut[line][end])
                .and_then(|&(line, end)| view.line_tags[line].map(|l| Tag::Junction(scene.lines[l][end]))),
        })
        .collect()
}

fn planted_labels<T: Copy + Eq + Ord>(tags_a: &[Option<T>], tags_b: &[Option<T>]) -> LabelSet {
    use std::collections::BTreeMap;
    let in_b: BTreeMap<T, usize> = tags_b
        .iter()
        .enumerate()
        .filter_map(|(j, t)| t.map(|t| (t, j)))
        .collect();
    let matches: Vec<[usize; 2]> = tags_a
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.and_then(|t| in_b.get(&t)).map(|&j| [i, j]))
        .collect();
    LabelSet::from_parts(matches, &vec![false; tags_a.len()], &vec![false; tags_b.len()])
}

fn generate_views<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    h: &Mat3<f64>,
    difficulty: f64,
    wf: &WireframeConfig,
    rng: &mut R,
) -> (FeatureSet, FeatureSet, GtLabels) {
    let scene = build_scene(cfg, h, rng);
    let ids = Identities {
        keypoints: scene.keypoints.iter().map(|_| unit_vector(rng, cfg.desc_dim)).collect(),
        junctions: if cfg.junction_palette > 0 {
            let palette: Vec<Vec<f64>> = (0..cfg.junction_palette).map(|_| unit_vector(rng, cfg.desc_dim)).collect();
            scene
                .junctions
                .iter()
                .map(|_| palette[rng.random_range(0..palette.len())].clone())
                .collect()
        } else {
            scene.junctions.iter().map(|_| unit_vector(rng, cfg.desc_dim)).collect()
        },
    };
    let va = render_view(cfg, &scene, &ids, None, difficulty, false, rng);
    let vb = render_view(cfg, &scene, &ids, Some(h), difficulty, true, rng);
    let points = planted_labels(&node_tags(&va, &scene, wf), &node_tags(&vb, &scene, wf));
    let lines = planted_labels(&va.line_tags, &vb.line_tags);
    (va.features, vb.features, GtLabels { points, lines })
}

/// Homography pair at `difficulty` in `[0, 1]`. Point labels index the
/// wireframe nodes built with `wf`.
pub fn generate_synthetic_pair<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    difficulty: f64,
    wf: &WireframeConfig,
    rng: &mut R,
) -> Result<SyntheticPair> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(Error::Invalid(format!("difficulty {difficulty} outside [0, 1]")));
    }
    let h = sample_homography(cfg, difficulty, rng);
    let (a, b, labels) = generate_views(cfg, &h, difficulty, wf, rng);
    Ok(SyntheticPair {
        a,
        b,
        geometry: TwoViewGeometry::Homography { h },
        labels,
        difficulty,
    })
}

/// Depth of the plane `n · X = d` seen by a camera with intrinsics `k`, per
/// pixel; 0 where the ray misses it.
fn plane_depth(k: &Mat3<f64>, n: [f64; 3], d: f64, width: usize, height: usize) -> DepthMap {
    let k_inv = linalg::inverse(k).unwrap_or_else(linalg::identity);
    DepthMap::from_fn(width, height, |u, v| {
        let ray = linalg::mat_vec(&k_inv, &[u as f64, v as f64, 1.0]);
        let denom = linalg::dot(&n, &ray);
        if denom.abs() < 1e-12 {
            return 0.0;
        }
        let lambda = d / denom;
        if lambda > 0.0 {
            lambda * ray[2]
        } else {
            0.0
        }
    })
}

/// Calibrated variant: the scene lies on a fronto-parallel plane in front of
/// camera A and camera B moves by a small pose that grows with `difficulty`.
/// The geometry carries both depth maps.
pub fn generate_depth_pair<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    difficulty: f64,
    wf: &WireframeConfig,
    rng: &mut R,
) -> Result<SyntheticPair> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(Error::Invalid(format!("difficulty {difficulty} outside [0, 1]")));
    }
    let (w, ht) = (cfg.width as f64, cfg.height as f64);
    let f = 0.9 * w;
    let k = [[f, 0.0, w / 2.0], [0.0, f, ht / 2.0], [0.0, 0.0, 1.0]];
    let depth = 4.0;
    let normal = [0.0, 0.0, 1.0];
    let d = difficulty.clamp(0.0, 1.0);
    let axis = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let angle = d * 0.5 * cfg.max_rotation_deg.to_radians() * rng.random_range(-1.0..1.0f64);
    let r = linalg::axis_angle(&axis, angle);
    let t = [
        d * 0.3 * rng.random_range(-1.0..1.0),
        d * 0.3 * rng.random_range(-1.0..1.0),
        d * 0.3 * rng.random_range(-1.0..1.0),
    ];
    let h = TwoViewGeometry::plane_homography(&k, &k, &r, &t, &normal, depth)
        .ok_or_else(|| Error::Invalid("singular intrinsics".into()))?;
    let (a, b, labels) = generate_views(cfg, &h, difficulty, wf, rng);
    // In B's frame the plane is R n · X = depth + R n · t.
    let n_b = linalg::mat_vec(&r, &normal);
    let d_b = depth + linalg::dot(&n_b, &t);
    let (wu, hu) = (cfg.width as usize, cfg.height as usize);
    Ok(SyntheticPair {
        a,
        b,
        geometry: TwoViewGeometry::DepthPose {
            k_a: k,
            k_b: k,
            r,
            t,
            depth_a: plane_depth(&k, normal, depth, wu, hu),
            depth_b: plane_depth(&k, n_b, d_b, wu, hu),
        },
        labels,
        difficulty,
    })
}
