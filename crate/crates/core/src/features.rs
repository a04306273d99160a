//! Per-image features, two-view geometry and their JSON file formats.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::linalg::{self, Mat3, Vec3};

pub type Point2 = [f64; 2];

/// Unit-norm tolerance for descriptors.
pub const DESCRIPTOR_NORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub desc: Vec<f64>,
}

impl Keypoint {
    pub fn position(&self) -> Point2 {
        [self.x, self.y]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSegment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    /// Detector score; when absent the length over the image diagonal is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub desc1: Vec<f64>,
    pub desc2: Vec<f64>,
}

impl LineSegment {
    pub fn start(&self) -> Point2 {
        [self.x1, self.y1]
    }

    pub fn end(&self) -> Point2 {
        [self.x2, self.y2]
    }

    pub fn endpoint(&self, k: usize) -> Point2 {
        if k == 0 {
            self.start()
        } else {
            self.end()
        }
    }

    pub fn length(&self) -> f64 {
        (self.x2 - self.x1).hypot(self.y2 - self.y1)
    }

    pub fn score_in(&self, size: ImageSize) -> f64 {
        self.score.unwrap_or_else(|| self.length() / size.diagonal())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Self {
        ImageSize { width, height }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p[0] >= 0.0 && p[1] >= 0.0 && p[0] < self.width as f64 && p[1] < self.height as f64
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSet {
    pub width: u32,
    pub height: u32,
    pub keypoints: Vec<Keypoint>,
    pub lines: Vec<LineSegment>,
}

fn check_descriptor(record: &str, desc: &[f64], dim: &mut Option<usize>) -> Result<()> {
    match *dim {
        Some(d) if d != desc.len() => {
            return Err(Error::parse(
                record,
                format!("descriptor length {} differs from {d}", desc.len()),
            ))
        }
        None => *dim = Some(desc.len()),
        _ => {}
    }
    if desc.is_empty() {
        return Err(Error::parse(record, "empty descriptor"));
    }
    if desc.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse(record, "non-finite descriptor entry"));
    }
    let n = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (n - 1.0).abs() > DESCRIPTOR_NORM_TOL {
        return Err(Error::parse(record, format!("descriptor norm {n} is not 1")));
    }
    Ok(())
}

impl FeatureSet {
    pub fn empty(width: u32, height: u32) -> Self {
        FeatureSet {
            width,
            height,
            keypoints: Vec::new(),
            lines: Vec::new(),
        }
    }

    pub fn size(&self) -> ImageSize {
        ImageSize::new(self.width, self.height)
    }

    /// Descriptor width, if the set holds any feature.
    pub fn descriptor_dim(&self) -> Option<usize> {
        self.keypoints
            .first()
            .map(|k| k.desc.len())
            .or_else(|| self.lines.first().map(|l| l.desc1.len()))
    }

    pub fn line_score(&self, i: usize) -> f64 {
        self.lines[i].score_in(self.size())
    }

    /// Checks bounds, segment lengths, descriptor norms and dimensions.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::parse("image", "zero width or height"));
        }
        let size = self.size();
        let mut dim = None;
        for (i, k) in self.keypoints.iter().enumerate() {
            let rec = format!("keypoints[{i}]");
            if !size.contains(k.position()) {
                return Err(Error::parse(
                    rec,
                    format!("({}, {}) outside {}x{}", k.x, k.y, self.width, self.height),
                ));
            }
            if !k.score.is_finite() {
                return Err(Error::parse(rec, "non-finite score"));
            }
            check_descriptor(&rec, &k.desc, &mut dim)?;
        }
        for (i, l) in self.lines.iter().enumerate() {
            let rec = format!("lines[{i}]");
            for p in [l.start(), l.end()] {
                if !size.contains(p) {
                    return Err(Error::parse(
                        &rec,
                        format!("endpoint ({}, {}) outside {}x{}", p[0], p[1], self.width, self.height),
                    ));
                }
            }
            if !(l.length() > 0.0) {
                return Err(Error::parse(&rec, "zero-length segment"));
            }
            if l.score.is_some_and(|s| !s.is_finite()) {
                return Err(Error::parse(&rec, "non-finite score"));
            }
            check_descriptor(&format!("{rec}.desc1"), &l.desc1, &mut dim)?;
            check_descriptor(&format!("{rec}.desc2"), &l.desc2, &mut dim)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let fs: FeatureSet =
            serde_json::from_str(text).map_err(|e| Error::parse("feature set", e.to_string()))?;
        fs.validate()?;
        Ok(fs)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let fs: FeatureSet = read_json(path)?;
        fs.validate().map_err(|e| match e {
            Error::Parse { context, message } => {
                Error::parse(format!("{}: {context}", path.display()), message)
            }
            other => other,
        })?;
        Ok(fs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    /// Keeps at most `max_keypoints` keypoints and `max_lines` lines, preferring
    /// higher scores (ties by original order). Original order is preserved.
    pub fn truncated(&self, max_keypoints: usize, max_lines: usize) -> FeatureSet {
        fn keep(scores: Vec<f64>, cap: usize) -> Vec<usize> {
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            idx.truncate(cap);
            idx.sort_unstable();
            idx
        }
        let kp = keep(self.keypoints.iter().map(|k| k.score).collect(), max_keypoints);
        let ln = keep((0..self.lines.len()).map(|i| self.line_score(i)).collect(), max_lines);
        FeatureSet {
            width: self.width,
            height: self.height,
            keypoints: kp.iter().map(|&i| self.keypoints[i].clone()).collect(),
            lines: ln.iter().map(|&i| self.lines[i].clone()).collect(),
        }
    }
}

/// Row-major depth map; values `<= 0` (or non-finite) mark missing depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        DepthMap {
            width,
            height,
            data: vec![depth; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        DepthMap { width, height, data }
    }

    pub fn size(&self) -> ImageSize {
        ImageSize::new(self.width as u32, self.height as u32)
    }

    /// Nearest-pixel depth at `p` (pixel centers at integer coordinates);
    /// `None` outside the map or where depth is missing.
    pub fn sample(&self, p: Point2) -> Option<f64> {
        if !(p[0].is_finite() && p[1].is_finite()) || p[0] < -0.5 || p[1] < -0.5 {
            return None;
        }
        let u = (p[0].round() as usize).min(self.width.checked_sub(1)?);
        let v = (p[1].round() as usize).min(self.height.checked_sub(1)?);
        if p[0] >= self.width as f64 || p[1] >= self.height as f64 {
            return None;
        }
        let d = self.data[v * self.width + u];
        (d.is_finite() && d > 0.0).then_some(d)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.data.len() != self.width * self.height {
            return Err(Error::parse(
                name,
                format!(
                    "{} values for a {}x{} map",
                    self.data.len(),
                    self.width,
                    self.height
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    AToB,
    BToA,
}

/// Relation between the two images of a pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TwoViewGeometry {
    /// `x_B ~ H x_A`.
    Homography {
        #[serde(rename = "H")]
        h: Mat3<f64>,
    },
    /// Calibrated cameras with `X_B = R X_A + t` and per-pixel depth.
    DepthPose {
        #[serde(rename = "K_a")]
        k_a: Mat3<f64>,
        #[serde(rename = "K_b")]
        k_b: Mat3<f64>,
        #[serde(rename = "R")]
        r: Mat3<f64>,
        t: Vec3<f64>,
        depth_a: DepthMap,
        depth_b: DepthMap,
    },
}

/// Result of lifting a pixel with depth and projecting it into the other view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthProjection {
    pub point: Point2,
    /// The lifted 3D point expressed in the target camera frame.
    pub point3d: Vec3<f64>,
    /// Target-view depth map value at `point`, when available.
    pub target_depth: Option<f64>,
    pub valid: bool,
}

impl DepthProjection {
    /// Relative depth disagreement `|z - d_target| / d_target` exceeds `tol`.
    pub fn occluded(&self, tol: f64) -> bool {
        match self.target_depth {
            Some(d) => (self.point3d[2] - d).abs() / d > tol,
            None => false,
        }
    }
}

fn check_intrinsics(name: &str, k: &Mat3<f64>) -> Result<()> {
    let upper = k[1][0] == 0.0 && k[2][0] == 0.0 && k[2][1] == 0.0;
    if !upper || !(k[0][0] > 0.0 && k[1][1] > 0.0 && k[2][2] > 0.0) {
        return Err(Error::parse(
            name,
            "intrinsics must be upper triangular with a positive diagonal",
        ));
    }
    Ok(())
}

pub fn apply_homography(h: &Mat3<f64>, p: Point2) -> Option<Point2> {
    let q = linalg::mat_vec(h, &[p[0], p[1], 1.0]);
    if q[2].abs() < 1e-12 {
        return None;
    }
    Some([q[0] / q[2], q[1] / q[2]])
}

impl TwoViewGeometry {
    pub fn identity() -> Self {
        TwoViewGeometry::Homography {
            h: linalg::identity(),
        }
    }

    /// Homography induced by the plane `n·X = d` (frame A) between two cameras.
    pub fn plane_homography(
        k_a: &Mat3<f64>,
        k_b: &Mat3<f64>,
        r: &Mat3<f64>,
        t: &Vec3<f64>,
        n: &Vec3<f64>,
        d: f64,
    ) -> Option<Mat3<f64>> {
        let mut m = *r;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += t[i] * n[j] / d;
            }
        }
        let k_a_inv = linalg::inverse(k_a)?;
        Some(linalg::mat_mul(&linalg::mat_mul(k_b, &m), &k_a_inv))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TwoViewGeometry::Homography { h } => {
                if linalg::inverse(h).is_none() {
                    return Err(Error::parse("geometry", "singular homography"));
                }
            }
            TwoViewGeometry::DepthPose {
                k_a,
                k_b,
                r,
                t,
                depth_a,
                depth_b,
            } => {
                check_intrinsics("geometry.K_a", k_a)?;
                check_intrinsics("geometry.K_b", k_b)?;
                if !linalg::is_rotation(r, 1e-6) {
                    return Err(Error::parse("geometry.R", "not a rotation"));
                }
                if t.iter().any(|v| !v.is_finite()) {
                    return Err(Error::parse("geometry.t", "non-finite translation"));
                }
                depth_a.validate("geometry.depth_a")?;
                depth_b.validate("geometry.depth_b")?;
            }
        }
        Ok(())
    }

    /// The same relation seen from B to A.
    pub fn inverse(&self) -> Result<Self> {
        Ok(match self {
            TwoViewGeometry::Homography { h } => TwoViewGeometry::Homography {
                h: linalg::inverse(h)
                    .ok_or_else(|| Error::Degenerate("singular homography".into()))?,
            },
            TwoViewGeometry::DepthPose {
                k_a,
                k_b,
                r,
                t,
                depth_a,
                depth_b,
            } => {
                let rt = linalg::transpose(r);
                TwoViewGeometry::DepthPose {
                    k_a: *k_b,
                    k_b: *k_a,
                    r: rt,
                    t: linalg::neg(&linalg::mat_vec(&rt, t)),
                    depth_a: depth_b.clone(),
                    depth_b: depth_a.clone(),
                }
            }
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let g: TwoViewGeometry = read_json(path.as_ref())?;
        g.validate()?;
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    /// Homography warp of `p`; `None` for depth geometry or points at infinity.
    pub fn warp_homography(&self, p: Point2, dir: Direction) -> Option<Point2> {
        let TwoViewGeometry::Homography { h } = self else {
            return None;
        };
        match dir {
            Direction::AToB => apply_homography(h, p),
            Direction::BToA => apply_homography(&linalg::inverse(h)?, p),
        }
    }

    /// Lifts `p` with the source depth map, moves it to the target camera and
    /// projects it. Invalid when either depth is missing, the point lands
    /// behind the camera or outside the target image. Depth geometry only.
    pub fn project_with_depth(&self, p: Point2, dir: Direction) -> Option<DepthProjection> {
        let TwoViewGeometry::DepthPose {
            k_a,
            k_b,
            r,
            t,
            depth_a,
            depth_b,
        } = self
        else {
            return None;
        };
        let (k_src, k_dst, depth_src, depth_dst, rot, trans) = match dir {
            Direction::AToB => (k_a, k_b, depth_a, depth_b, *r, *t),
            Direction::BToA => {
                let rt = linalg::transpose(r);
                let tb = linalg::neg(&linalg::mat_vec(&rt, t));
                (k_b, k_a, depth_b, depth_a, rt, tb)
            }
        };
        let invalid = DepthProjection {
            point: [f64::NAN, f64::NAN],
            point3d: [f64::NAN; 3],
            target_depth: None,
            valid: false,
        };
        let Some(z) = depth_src.sample(p) else {
            return Some(invalid);
        };
        let k_inv = linalg::inverse(k_src)?;
        let ray = linalg::mat_vec(&k_inv, &[p[0], p[1], 1.0]);
        let x_src = linalg::scale(&ray, z / ray[2]);
        let x_dst = linalg::add(&linalg::mat_vec(&rot, &x_src), &trans);
        if !(x_dst[2] > 0.0) {
            return Some(DepthProjection {
                point3d: x_dst,
                ..invalid
            });
        }
        let q = linalg::mat_vec(k_dst, &x_dst);
        let point = [q[0] / q[2], q[1] / q[2]];
        let target_depth = depth_dst.sample(point);
        let valid = depth_dst.size().contains(point) && target_depth.is_some();
        Some(DepthProjection {
            point,
            point3d: x_dst,
            target_depth,
            valid,
        })
    }
}

/// Point and line matches between two images, as written by the matcher.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchFile {
    pub points: Vec<(usize, usize, f64)>,
    pub lines: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub unmatched: UnmatchedLists,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnmatchedLists {
    #[serde(default)]
    pub points_a: Vec<usize>,
    #[serde(default)]
    pub points_b: Vec<usize>,
    #[serde(default)]
    pub lines_a: Vec<usize>,
    #[serde(default)]
    pub lines_b: Vec<usize>,
}

impl MatchFile {
    /// Checks score ranges and, when sizes are given, index ranges.
    pub fn validate(&self, sizes: Option<[usize; 4]>) -> Result<()> {
        for (kind, list, na, nb) in [
            ("points", &self.points, sizes.map(|s| s[0]), sizes.map(|s| s[1])),
            ("lines", &self.lines, sizes.map(|s| s[2]), sizes.map(|s| s[3])),
        ] {
            for (k, &(i, j, s)) in list.iter().enumerate() {
                let rec = format!("{kind}[{k}]");
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::parse(rec, format!("score {s} outside [0, 1]")));
                }
                if na.is_some_and(|n| i >= n) || nb.is_some_and(|n| j >= n) {
                    return Err(Error::parse(rec, format!("index pair ({i}, {j}) out of range")));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: MatchFile = read_json(path.as_ref())?;
        m.validate(None)?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}
