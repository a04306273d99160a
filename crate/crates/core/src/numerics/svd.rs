//! 3×3 singular value decomposition by one-sided Jacobi rotations.

use crate::linalg::{cross, dot, norm, Mat3, Vec3};
use crate::scalar::Scalar;

/// `m = u · diag(s) · vᵀ` with `s` sorted descending and non-negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Svd3<T> {
    pub u: Mat3<T>,
    pub s: Vec3<T>,
    pub v: Mat3<T>,
}

fn col<T: Scalar>(m: &Mat3<T>, j: usize) -> Vec3<T> {
    [m[0][j], m[1][j], m[2][j]]
}

fn set_col<T: Scalar>(m: &mut Mat3<T>, j: usize, c: Vec3<T>) {
    for (r, v) in c.into_iter().enumerate() {
        m[r][j] = v;
    }
}

/// Any unit vector orthogonal to the unit vector `a`.
fn orthogonal_to<T: Scalar>(a: &Vec3<T>) -> Vec3<T> {
    // cross with the axis least aligned with `a`
    let mut axis = [T::zero(); 3];
    let k = (0..3)
        .min_by(|&i, &j| a[i].abs().partial_cmp(&a[j].abs()).unwrap())
        .unwrap_or(0);
    axis[k] = T::one();
    let c = cross(a, &axis);
    let n = norm(&c);
    [c[0] / n, c[1] / n, c[2] / n]
}

pub fn svd3<T: Scalar>(m: &Mat3<T>) -> Svd3<T> {
    let mut a = *m;
    let mut v: Mat3<T> = [
        [T::one(), T::zero(), T::zero()],
        [T::zero(), T::one(), T::zero()],
        [T::zero(), T::zero(), T::one()],
    ];
    let tol = T::epsilon();
    for _sweep in 0..64 {
        let mut rotated = false;
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let cp = col(&a, p);
            let cq = col(&a, q);
            let alpha = dot(&cp, &cp);
            let beta = dot(&cq, &cq);
            let gamma = dot(&cp, &cq);
            if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (gamma + gamma);
            let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
            let c = T::one() / (T::one() + t * t).sqrt();
            let s = c * t;
            for r in 0..3 {
                let (x, y) = (a[r][p], a[r][q]);
                a[r][p] = c * x - s * y;
                a[r][q] = s * x + c * y;
                let (x, y) = (v[r][p], v[r][q]);
                v[r][p] = c * x - s * y;
                v[r][q] = s * x + c * y;
            }
        }
        if !rotated {
            break;
        }
    }

    // singular values are the column norms; sort descending
    let mut order = [0usize, 1, 2];
    let norms = [norm(&col(&a, 0)), norm(&col(&a, 1)), norm(&col(&a, 2))];
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));

    let mut u = [[T::zero(); 3]; 3];
    let mut vs = [[T::zero(); 3]; 3];
    let mut s = [T::zero(); 3];
    for (k, &j) in order.iter().enumerate() {
        s[k] = norms[j];
        set_col(&mut vs, k, col(&v, j));
    }

    // Columns of U for singular values that are numerically zero are not
    // determined by A; complete them to an orthonormal basis.
    let scale = s[0].max(T::min_positive_value());
    let small = scale * T::epsilon() * T::lit(16.0);
    let mut rank = 0;
    for k in 0..3 {
        if s[k] > small {
            let c = col(&a, order[k]);
            set_col(&mut u, k, [c[0] / s[k], c[1] / s[k], c[2] / s[k]]);
            rank += 1;
        }
    }
    match rank {
        0 => {
            u = [
                [T::one(), T::zero(), T::zero()],
                [T::zero(), T::one(), T::zero()],
                [T::zero(), T::zero(), T::one()],
            ];
        }
        1 => {
            let u0 = col(&u, 0);
            let u1 = orthogonal_to(&u0);
            set_col(&mut u, 1, u1);
            set_col(&mut u, 2, cross(&u0, &u1));
        }
        2 => {
            let u2 = cross(&col(&u, 0), &col(&u, 1));
            let n = norm(&u2);
            set_col(&mut u, 2, [u2[0] / n, u2[1] / n, u2[2] / n]);
        }
        _ => {}
    }
    Svd3 { u, s, v: vs }
}
