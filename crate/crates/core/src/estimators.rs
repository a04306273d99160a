//! Pure rotation estimation from calibrated point bearings and line-plane
//! normals: Kabsch alignment and a hybrid RANSAC over both feature kinds.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, cross, dot, mat_mul, mat_vec, transpose, Mat3, Vec3};
use crate::numerics::svd3;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BearingKind {
    Point,
    LineNormal,
}

/// Corresponding unit vectors in the two camera frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BearingPair<T> {
    pub a: Vec3<T>,
    pub b: Vec3<T>,
    pub kind: BearingKind,
    pub weight: T,
}

/// `normalize(K⁻¹ [x, y, 1])`.
pub fn lift_point<T: Scalar>(x: [T; 2], k: &Mat3<T>) -> Result<Vec3<T>> {
    let k_inv = linalg::inverse(k).ok_or_else(|| Error::Degenerate("singular intrinsics".into()))?;
    let v = mat_vec(&k_inv, &[x[0], x[1], T::one()]);
    linalg::normalize(&v).ok_or_else(|| Error::Degenerate("pixel lifts to a zero bearing".into()))
}

/// Unit normal of the plane through the camera centre and the segment.
pub fn lift_line<T: Scalar>(start: [T; 2], end: [T; 2], k: &Mat3<T>) -> Result<Vec3<T>> {
    if start == end {
        return Err(Error::Degenerate("line endpoints coincide".into()));
    }
    let n = cross(&lift_point(start, k)?, &lift_point(end, k)?);
    linalg::normalize(&n).ok_or_else(|| Error::Degenerate("line endpoints lift to one bearing".into()))
}

/// Flips `nb` when it points away from `na`; a zero dot product is left
/// alone.
pub fn fix_normal_signs<T: Scalar>(na: Vec3<T>, nb: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    if dot(&na, &nb) < T::zero() {
        (na, linalg::neg(&nb))
    } else {
        (na, nb)
    }
}

/// `argmin_R Σ w ‖b − R a‖²` over rotations.
pub fn kabsch_rotation<T: Scalar>(pairs: &[BearingPair<T>]) -> Result<Mat3<T>> {
    if pairs.len() < 2 {
        return Err(Error::Degenerate(format!("{} bearing pairs, need at least 2", pairs.len())));
    }
    let mut h = [[T::zero(); 3]; 3];
    for p in pairs {
        for r in 0..3 {
            for c in 0..3 {
                h[r][c] += p.weight * p.a[r] * p.b[c];
            }
        }
    }
    let svd = svd3(&h);
    if !(svd.s[1] > svd.s[0] * T::lit(1e-10)) {
        return Err(Error::Degenerate("bearings are collinear".into()));
    }
    let vut = mat_mul(&svd.v, &transpose(&svd.u));
    let d = if linalg::det(&vut) < T::zero() { -T::one() } else { T::one() };
    let mut vd = svd.v;
    for row in vd.iter_mut() {
        row[2] *= d;
    }
    Ok(mat_mul(&vd, &transpose(&svd.u)))
}

/// Angle in degrees between `b` and `R a`. Normals are compared up to sign,
/// so the residual does not depend on endpoint order.
pub fn residual_deg<T: Scalar>(r: &Mat3<T>, pair: &BearingPair<T>) -> T {
    let ra = mat_vec(r, &pair.a);
    let c = dot(&ra, &pair.b);
    let s = linalg::norm(&cross(&ra, &pair.b));
    let c = match pair.kind {
        BearingKind::Point => c,
        BearingKind::LineNormal => c.abs(),
    };
    s.atan2(c).to_degrees()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Angular residual in degrees below which a match is an inlier.
    pub inlier_threshold_deg: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            iterations: 200,
            inlier_threshold_deg: 1.0,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || !(self.inlier_threshold_deg > 0.0 && self.inlier_threshold_deg.is_finite()) {
            return Err(Error::Invalid("ransac iterations and threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Pixel correspondence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMatch<T> {
    pub a: [T; 2],
    pub b: [T; 2],
}

/// Segment correspondence as `[start, end]` in each image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineMatch<T> {
    pub a: [[T; 2]; 2],
    pub b: [[T; 2]; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct RotationEstimate<T> {
    pub rotation: Mat3<T>,
    /// Indices into the point and line matches within the threshold of
    /// `rotation`.
    pub point_inliers: Vec<usize>,
    pub line_inliers: Vec<usize>,
}

fn length<T: Scalar>(s: &[[T; 2]; 2]) -> T {
    (s[1][0] - s[0][0]).hypot(s[1][1] - s[0][1])
}

fn inliers<T: Scalar>(r: &Mat3<T>, pairs: &[BearingPair<T>], threshold: T) -> Vec<usize> {
    (0..pairs.len()).filter(|&i| residual_deg(r, &pairs[i]) < threshold).collect()
}

/// Sign-fixes a normal pair against the rotation hypothesis (or against
/// each other when there is none).
fn oriented<T: Scalar>(p: &BearingPair<T>, r: Option<&Mat3<T>>) -> BearingPair<T> {
    match p.kind {
        BearingKind::Point => *p,
        BearingKind::LineNormal => {
            let ra = r.map_or(p.a, |r| mat_vec(r, &p.a));
            let (_, b) = fix_normal_signs(ra, p.b);
            BearingPair { b, ..*p }
        }
    }
}

/// Hybrid RANSAC. Each iteration picks two matches: the feature kind with
/// probability proportional to its match count, points uniformly within
/// their kind and lines proportionally to the square root of their length.
/// Iteration `i` draws from its own stream of the seeded generator. The
/// best hypothesis is refit by least squares on its inliers.
pub fn hybrid_ransac_rotation<T: Scalar>(
    points: &[PointMatch<T>],
    lines: &[LineMatch<T>],
    k_a: &Mat3<T>,
    k_b: &Mat3<T>,
    cfg: &RansacConfig,
) -> Result<RotationEstimate<T>> {
    cfg.validate()?;
    let (np, nl) = (points.len(), lines.len());
    if np + nl < 2 {
        return Err(Error::Invalid(format!("{} matches, need at least 2", np + nl)));
    }
    let mut pairs = Vec::with_capacity(np + nl);
    for m in points {
        pairs.push(BearingPair {
            a: lift_point(m.a, k_a)?,
            b: lift_point(m.b, k_b)?,
            kind: BearingKind::Point,
            weight: T::one(),
        });
    }
    for m in lines {
        pairs.push(BearingPair {
            a: lift_line(m.a[0], m.a[1], k_a)?,
            b: lift_line(m.b[0], m.b[1], k_b)?,
            kind: BearingKind::LineNormal,
            weight: T::one(),
        });
    }

    // Per-feature sampling weights: the kind share times the share within
    // the kind.
    let mut weights = vec![0.0f64; np + nl];
    let total = (np + nl) as f64;
    for w in weights.iter_mut().take(np) {
        *w = 1.0 / total;
    }
    let roots: Vec<f64> = lines
        .iter()
        .map(|m| (0.5 * (length(&m.a) + length(&m.b)).to_f64_lossy()).sqrt())
        .collect();
    let root_sum = roots.iter().sum::<f64>();
    for (k, r) in roots.iter().enumerate() {
        weights[np + k] = if root_sum > 0.0 {
            (nl as f64 / total) * r / root_sum
        } else {
            1.0 / total
        };
    }
    let first = WeightedIndex::new(&weights).map_err(|e| Error::Degenerate(e.to_string()))?;

    let threshold = T::lit(cfg.inlier_threshold_deg);
    let mut best: Option<(Mat3<T>, Vec<usize>)> = None;
    for it in 0..cfg.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(it as u64);
        let i = first.sample(&mut rng);
        let mut rest = weights.clone();
        rest[i] = 0.0;
        let Ok(second) = WeightedIndex::new(&rest) else { continue };
        let j = second.sample(&mut rng);
        let sample = [oriented(&pairs[i], None), oriented(&pairs[j], None)];
        let Ok(r) = kabsch_rotation(&sample) else { continue };
        let inl = inliers(&r, &pairs, threshold);
        if best.as_ref().is_none_or(|(_, b)| inl.len() > b.len()) {
            best = Some((r, inl));
        }
    }
    let (r0, inl) = match best {
        Some((r, inl)) if inl.len() >= 2 => (r, inl),
        _ => return Err(Error::Degenerate("no rotation hypothesis has two inliers".into())),
    };
    let support: Vec<BearingPair<T>> = inl.iter().map(|&k| oriented(&pairs[k], Some(&r0))).collect();
    let rotation = kabsch_rotation(&support).unwrap_or(r0);
    let final_inliers = inliers(&rotation, &pairs, threshold);
    let (pi, li): (Vec<usize>, Vec<usize>) = final_inliers.into_iter().partition(|&k| k < np);
    Ok(RotationEstimate {
        rotation,
        point_inliers: pi,
        line_inliers: li.into_iter().map(|k| k - np).collect(),
    })
}
