//! Ground-truth point and line labels from a homography or from depth and
//! relative pose.
//!
//! Point labels live on wireframe nodes and line labels on the original
//! segments, so they index the same rows and columns as the assignment
//! matrices produced by the matcher.

mod hungarian;

pub use hungarian::{assignment_cost, hungarian};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Direction, FeatureSet, ImageSize, LineSegment, Point2, TwoViewGeometry};
use crate::io::{read_json, write_json};
use crate::numerics::Tensor;
use crate::wireframe::{build_wireframe, Wireframe, WireframeConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GtConfig {
    /// Relative depth disagreement above which a projection counts as occluded.
    pub occlusion_tolerance: f64,
    /// Pixel distance under which a projected line sample is close to a line.
    pub line_distance: f64,
    /// Minimum closeness, as a fraction of the samples per line.
    pub min_overlap: f64,
    /// Samples per line, endpoints included.
    pub samples_per_line: usize,
    /// Pixel radius for point reprojection matches.
    pub point_radius: f64,
    /// Lines with a larger fraction of invalid samples are ignored.
    pub max_invalid_fraction: f64,
}

impl Default for GtConfig {
    fn default() -> Self {
        GtConfig {
            occlusion_tolerance: 0.1,
            line_distance: 5.0,
            min_overlap: 0.2,
            samples_per_line: 10,
            point_radius: 3.0,
            max_invalid_fraction: 0.5,
        }
    }
}

impl GtConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("occlusion_tolerance", self.occlusion_tolerance),
            ("line_distance", self.line_distance),
            ("min_overlap", self.min_overlap),
            ("point_radius", self.point_radius),
            ("max_invalid_fraction", self.max_invalid_fraction),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("gt.{name} must be positive, got {v}")));
            }
        }
        if self.samples_per_line < 2 {
            return Err(Error::Invalid("gt.samples_per_line must be at least 2".into()));
        }
        Ok(())
    }

    /// Closeness count a pair must reach in both directions.
    pub fn overlap_count(&self) -> f64 {
        self.min_overlap * self.samples_per_line as f64
    }
}

/// Labels for one kind of feature. Every index of A (resp. B) appears in
/// exactly one of `matches`, `unmatched_*` and `ignore_*`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSet {
    pub matches: Vec<[usize; 2]>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
    #[serde(default)]
    pub ignore_a: Vec<usize>,
    #[serde(default)]
    pub ignore_b: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Matched(usize),
    Unmatched,
    Ignore,
}

impl LabelSet {
    /// Builds the partition from matches and per-index ignore flags.
    pub fn from_parts(matches: Vec<[usize; 2]>, ignore_a: &[bool], ignore_b: &[bool]) -> Self {
        let mut in_a = vec![false; ignore_a.len()];
        let mut in_b = vec![false; ignore_b.len()];
        for &[i, j] in &matches {
            in_a[i] = true;
            in_b[j] = true;
        }
        let split = |used: &[bool], ignore: &[bool]| {
            let mut un = Vec::new();
            let mut ig = Vec::new();
            for k in 0..used.len() {
                if used[k] {
                    continue;
                }
                if ignore[k] {
                    ig.push(k);
                } else {
                    un.push(k);
                }
            }
            (un, ig)
        };
        let (unmatched_a, ignore_a) = split(&in_a, ignore_a);
        let (unmatched_b, ignore_b) = split(&in_b, ignore_b);
        LabelSet {
            matches,
            unmatched_a,
            unmatched_b,
            ignore_a,
            ignore_b,
        }
    }

    pub fn len_a(&self) -> usize {
        self.matches.len() + self.unmatched_a.len() + self.ignore_a.len()
    }

    pub fn len_b(&self) -> usize {
        self.matches.len() + self.unmatched_b.len() + self.ignore_b.len()
    }

    pub fn labels_a(&self) -> Vec<Label> {
        let mut out = vec![Label::Unmatched; self.len_a()];
        for &[i, j] in &self.matches {
            out[i] = Label::Matched(j);
        }
        for &i in &self.ignore_a {
            out[i] = Label::Ignore;
        }
        out
    }

    pub fn labels_b(&self) -> Vec<Label> {
        let mut out = vec![Label::Unmatched; self.len_b()];
        for &[i, j] in &self.matches {
            out[j] = Label::Matched(i);
        }
        for &j in &self.ignore_b {
            out[j] = Label::Ignore;
        }
        out
    }

    /// The same labels seen from image B.
    pub fn swapped(&self) -> LabelSet {
        let mut matches: Vec<[usize; 2]> = self.matches.iter().map(|&[i, j]| [j, i]).collect();
        matches.sort_unstable();
        LabelSet {
            matches,
            unmatched_a: self.unmatched_b.clone(),
            unmatched_b: self.unmatched_a.clone(),
            ignore_a: self.ignore_b.clone(),
            ignore_b: self.ignore_a.clone(),
        }
    }

    /// Checks that the lists partition `0..na` and `0..nb` with a one-to-one
    /// match list.
    pub fn validate(&self, what: &str, na: usize, nb: usize) -> Result<()> {
        for (side, n, matched, lists) in [
            ("a", na, self.matches.iter().map(|m| m[0]).collect::<Vec<_>>(), [&self.unmatched_a, &self.ignore_a]),
            ("b", nb, self.matches.iter().map(|m| m[1]).collect::<Vec<_>>(), [&self.unmatched_b, &self.ignore_b]),
        ] {
            let mut seen = vec![false; n];
            for &k in matched.iter().chain(lists[0]).chain(lists[1]) {
                if k >= n {
                    return Err(Error::parse(format!("{what}"), format!("index {k} of image {side} outside {n}")));
                }
                if std::mem::replace(&mut seen[k], true) {
                    return Err(Error::parse(format!("{what}"), format!("index {k} of image {side} labeled twice")));
                }
            }
            if let Some(k) = seen.iter().position(|s| !s) {
                return Err(Error::parse(format!("{what}"), format!("index {k} of image {side} has no label")));
            }
        }
        Ok(())
    }
}

/// Point labels index wireframe nodes; line labels index the original lines.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtLabels {
    pub points: LabelSet,
    pub lines: LabelSet,
}

impl GtLabels {
    pub fn swapped(&self) -> GtLabels {
        GtLabels {
            points: self.points.swapped(),
            lines: self.lines.swapped(),
        }
    }

    /// `sizes` = [nodes A, nodes B, lines A, lines B].
    pub fn validate(&self, sizes: [usize; 4]) -> Result<()> {
        self.points.validate("points", sizes[0], sizes[1])?;
        self.lines.validate("lines", sizes[2], sizes[3])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

/// Where a point of one image lands in the other, if it lands validly.
pub fn transfer_point(
    geom: &TwoViewGeometry,
    p: Point2,
    dir: Direction,
    target: ImageSize,
    cfg: &GtConfig,
) -> Option<Point2> {
    match geom {
        TwoViewGeometry::Homography { .. } => geom
            .warp_homography(p, dir)
            .filter(|&q| target.contains(q)),
        TwoViewGeometry::DepthPose { .. } => geom
            .project_with_depth(p, dir)
            .filter(|proj| proj.valid && !proj.occluded(cfg.occlusion_tolerance))
            .map(|proj| proj.point),
    }
}

fn dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Perpendicular distance to the supporting line when the foot falls on the
/// segment, otherwise the distance to the nearer endpoint.
pub fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = ((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2;
    if (0.0..=1.0).contains(&t) {
        ((p[0] - a[0]) * d[1] - (p[1] - a[1]) * d[0]).abs() / len2.sqrt()
    } else {
        dist(p, a).min(dist(p, b))
    }
}

/// Point matches between two node sets: pairs whose transfers land within
/// the radius in both directions, made one-to-one by a Hungarian assignment
/// that first maximizes the number of pairs, then minimizes the mean
/// transfer distance. Points without a valid transfer are ignored.
pub fn gt_point_matches(
    nodes_a: &[Point2],
    nodes_b: &[Point2],
    size_a: ImageSize,
    size_b: ImageSize,
    geom: &TwoViewGeometry,
    cfg: &GtConfig,
) -> LabelSet {
    let fwd: Vec<Option<Point2>> = nodes_a
        .iter()
        .map(|&p| transfer_point(geom, p, Direction::AToB, size_b, cfg))
        .collect();
    let bwd: Vec<Option<Point2>> = nodes_b
        .iter()
        .map(|&p| transfer_point(geom, p, Direction::BToA, size_a, cfg))
        .collect();
    let r = cfg.point_radius;
    let offset = r * (nodes_a.len().min(nodes_b.len()) as f64 + 1.0);
    let mut cost = Tensor::filled(&[nodes_a.len(), nodes_b.len()], f64::INFINITY);
    for (i, fi) in fwd.iter().enumerate() {
        let Some(fi) = fi else { continue };
        for (j, bj) in bwd.iter().enumerate() {
            let Some(bj) = bj else { continue };
            let (d1, d2) = (dist(*fi, nodes_b[j]), dist(*bj, nodes_a[i]));
            if d1 <= r && d2 <= r {
                cost.set(i, j, 0.5 * (d1 + d2) - offset);
            }
        }
    }
    let matches = hungarian(&cost).into_iter().map(|(i, j)| [i, j]).collect();
    let ignore_a: Vec<bool> = fwd.iter().map(Option::is_none).collect();
    let ignore_b: Vec<bool> = bwd.iter().map(Option::is_none).collect();
    LabelSet::from_parts(matches, &ignore_a, &ignore_b)
}

/// One sample along a line and where it lands in the other image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSample {
    pub position: Point2,
    pub projection: Option<Point2>,
}

impl LineSample {
    pub fn valid(&self) -> bool {
        self.projection.is_some()
    }
}

/// `K` evenly spaced samples from start to end, inclusive, each transferred
/// into the target image. Invalid samples lack depth on either side, land
/// outside the target or are occluded there.
pub fn validate_line_samples(
    line: &LineSegment,
    geom: &TwoViewGeometry,
    dir: Direction,
    target: ImageSize,
    cfg: &GtConfig,
) -> Vec<LineSample> {
    let k = cfg.samples_per_line.max(2);
    (0..k)
        .map(|s| {
            let t = s as f64 / (k - 1) as f64;
            let p = [
                line.x1 + t * (line.x2 - line.x1),
                line.y1 + t * (line.y2 - line.y1),
            ];
            LineSample {
                position: p,
                projection: transfer_point(geom, p, dir, target, cfg),
            }
        })
        .collect()
}

/// Closeness counts in both directions plus the per-line samples.
#[derive(Clone, Debug)]
pub struct Closeness {
    /// `a_to_b[i][j]`: samples of A-line `i` landing near B-line `j`.
    pub a_to_b: Vec<Vec<usize>>,
    /// `b_to_a[j][i]`: samples of B-line `j` landing near A-line `i`.
    pub b_to_a: Vec<Vec<usize>>,
    pub samples_a: Vec<Vec<LineSample>>,
    pub samples_b: Vec<Vec<LineSample>>,
}

fn closeness_counts(samples: &[Vec<LineSample>], targets: &[LineSegment], threshold: f64) -> Vec<Vec<usize>> {
    samples
        .iter()
        .map(|ss| {
            targets
                .iter()
                .map(|l| {
                    ss.iter()
                        .filter_map(|s| s.projection)
                        .filter(|&q| segment_distance(q, l.start(), l.end()) < threshold)
                        .count()
                })
                .collect()
        })
        .collect()
}

pub fn closeness_matrices(a: &FeatureSet, b: &FeatureSet, geom: &TwoViewGeometry, cfg: &GtConfig) -> Closeness {
    let samples_a: Vec<_> = a
        .lines
        .iter()
        .map(|l| validate_line_samples(l, geom, Direction::AToB, b.size(), cfg))
        .collect();
    let samples_b: Vec<_> = b
        .lines
        .iter()
        .map(|l| validate_line_samples(l, geom, Direction::BToA, a.size(), cfg))
        .collect();
    Closeness {
        a_to_b: closeness_counts(&samples_a, &b.lines, cfg.line_distance),
        b_to_a: closeness_counts(&samples_b, &a.lines, cfg.line_distance),
        samples_a,
        samples_b,
    }
}

fn too_uncertain(samples: &[LineSample], cfg: &GtConfig) -> bool {
    let invalid = samples.iter().filter(|s| !s.valid()).count();
    invalid as f64 > cfg.max_invalid_fraction * samples.len() as f64
}

/// Cost `-C_ab[i][j] · C_ba[j][i]`, forbidden (`+∞`) below the overlap count in
/// either direction or when either line is ignored.
pub fn line_cost_matrix(c: &Closeness, ignore_a: &[bool], ignore_b: &[bool], cfg: &GtConfig) -> Tensor<f64> {
    let (m, n) = (c.a_to_b.len(), c.b_to_a.len());
    let min = cfg.overlap_count();
    let mut cost = Tensor::filled(&[m, n], f64::INFINITY);
    for i in 0..m {
        for j in 0..n {
            let (ab, ba) = (c.a_to_b[i][j] as f64, c.b_to_a[j][i] as f64);
            if ignore_a[i] || ignore_b[j] || ab < min || ba < min {
                continue;
            }
            cost.set(i, j, -ab * ba);
        }
    }
    cost
}

pub fn line_labels(c: &Closeness, cfg: &GtConfig) -> LabelSet {
    let ignore_a: Vec<bool> = c.samples_a.iter().map(|s| too_uncertain(s, cfg)).collect();
    let ignore_b: Vec<bool> = c.samples_b.iter().map(|s| too_uncertain(s, cfg)).collect();
    let cost = line_cost_matrix(c, &ignore_a, &ignore_b, cfg);
    let matches = hungarian(&cost).into_iter().map(|(i, j)| [i, j]).collect();
    LabelSet::from_parts(matches, &ignore_a, &ignore_b)
}

fn node_positions(w: &Wireframe) -> Vec<Point2> {
    w.nodes.iter().map(|n| n.position).collect()
}

/// Labels for the wireframes of `a` and `b` built with `wireframe`.
pub fn label_pair(
    a: &FeatureSet,
    b: &FeatureSet,
    geom: &TwoViewGeometry,
    cfg: &GtConfig,
    wireframe: &WireframeConfig,
) -> GtLabels {
    let (wa, wb) = (build_wireframe(a, wireframe), build_wireframe(b, wireframe));
    label_wireframes(a, b, &wa, &wb, geom, cfg)
}

/// As [`label_pair`] for wireframes already built from `a` and `b`.
pub fn label_wireframes(
    a: &FeatureSet,
    b: &FeatureSet,
    wa: &Wireframe,
    wb: &Wireframe,
    geom: &TwoViewGeometry,
    cfg: &GtConfig,
) -> GtLabels {
    let points = gt_point_matches(
        &node_positions(wa),
        &node_positions(wb),
        a.size(),
        b.size(),
        geom,
        cfg,
    );
    let lines = line_labels(&closeness_matrices(a, b, geom, cfg), cfg);
    GtLabels { points, lines }
}
