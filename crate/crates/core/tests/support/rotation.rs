use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use wirematch::estimators::{LineMatch, PointMatch};
use wirematch::linalg::{self, Mat3, Vec3};

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 480.0;

pub fn intrinsics(f: f64) -> Mat3<f64> {
    [[f, 0.0, WIDTH / 2.0], [0.0, f, HEIGHT / 2.0], [0.0, 0.0, 1.0]]
}

pub fn random_rotation<R: Rng>(rng: &mut R, max_deg: f64) -> Mat3<f64> {
    let axis = [gauss(rng), gauss(rng), gauss(rng)];
    linalg::axis_angle(&axis, rng.random_range(-max_deg..max_deg).to_radians())
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Rotates `v` by a normal angle of standard deviation `sigma_deg` about a
/// random axis orthogonal to it.
pub fn perturb<R: Rng>(rng: &mut R, v: Vec3<f64>, sigma_deg: f64) -> Vec3<f64> {
    if sigma_deg == 0.0 {
        return v;
    }
    let axis = linalg::cross(&v, &[gauss(rng), gauss(rng), gauss(rng)]);
    let r = linalg::axis_angle(&axis, (sigma_deg * gauss(rng)).to_radians());
    linalg::mat_vec(&r, &v)
}

fn bearing(k: &Mat3<f64>, p: [f64; 2]) -> Vec3<f64> {
    let v = linalg::mat_vec(&linalg::inverse(k).unwrap(), &[p[0], p[1], 1.0]);
    linalg::normalize(&v).unwrap()
}

fn project(k: &Mat3<f64>, v: Vec3<f64>) -> Option<[f64; 2]> {
    let q = linalg::mat_vec(k, &v);
    (q[2] > 1e-6).then(|| [q[0] / q[2], q[1] / q[2]])
}

fn inside(p: [f64; 2]) -> bool {
    p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= WIDTH && p[1] <= HEIGHT
}

fn pixel<R: Rng>(rng: &mut R) -> [f64; 2] {
    [rng.random_range(0.0..WIDTH), rng.random_range(0.0..HEIGHT)]
}

pub struct RotationScene {
    pub r: Mat3<f64>,
    pub k: Mat3<f64>,
    pub points: Vec<PointMatch<f64>>,
    pub lines: Vec<LineMatch<f64>>,
    pub point_outlier: Vec<bool>,
    pub line_outlier: Vec<bool>,
}

/// Matches under a pure rotation of up to `max_deg`. Exactly
/// `round(outlier_fraction * n)` matches of each kind are random outliers,
/// at random positions; inliers carry bearing noise.
pub fn rotation_scene(
    seed: u64,
    points: usize,
    lines: usize,
    outlier_fraction: f64,
    noise_deg: f64,
    max_deg: f64,
) -> RotationScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = intrinsics(500.0);
    let r = random_rotation(&mut rng, max_deg);
    let transfer = |rng: &mut ChaCha8Rng, p: [f64; 2]| -> Option<[f64; 2]> {
        let vb = perturb(rng, linalg::mat_vec(&r, &bearing(&k, p)), noise_deg);
        project(&k, vb).filter(|&q| inside(q))
    };
    let outliers = |n: usize, rng: &mut ChaCha8Rng| {
        let mut flags = vec![false; n];
        let k = (outlier_fraction * n as f64).round() as usize;
        flags[..k].iter_mut().for_each(|f| *f = true);
        flags.shuffle(rng);
        flags
    };
    let p_out = outliers(points, &mut rng);
    let l_out = outliers(lines, &mut rng);
    let mut pts = Vec::new();
    while pts.len() < points {
        let a = pixel(&mut rng);
        if p_out[pts.len()] {
            pts.push(PointMatch { a, b: pixel(&mut rng) });
        } else if let Some(b) = transfer(&mut rng, a) {
            pts.push(PointMatch { a, b });
        }
    }
    let mut segs = Vec::new();
    while segs.len() < lines {
        let (s, e) = (pixel(&mut rng), pixel(&mut rng));
        if (s[0] - e[0]).hypot(s[1] - e[1]) < 40.0 {
            continue;
        }
        if l_out[segs.len()] {
            segs.push(LineMatch { a: [s, e], b: [pixel(&mut rng), pixel(&mut rng)] });
        } else if let (Some(bs), Some(be)) = (transfer(&mut rng, s), transfer(&mut rng, e)) {
            segs.push(LineMatch { a: [s, e], b: [bs, be] });
        }
    }
    RotationScene { r, k, points: pts, lines: segs, point_outlier: p_out, line_outlier: l_out }
}
