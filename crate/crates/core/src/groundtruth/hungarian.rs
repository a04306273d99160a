//! Minimum-cost partial assignment on a rectangular cost matrix.
//!
//! Non-finite entries are forbidden pairs. Every row and column may also stay
//! unassigned at zero cost, so only pairs that lower the total are kept. The
//! problem is padded to a square of side `m + n` (one dummy partner per row
//! and per column) and solved with shortest augmenting paths and potentials.

use crate::numerics::Tensor;
use crate::scalar::Scalar;

/// Optimal pairs `(row, col)`, sorted by row.
pub fn hungarian<T: Scalar>(cost: &Tensor<T>) -> Vec<(usize, usize)> {
    let (m, n) = (cost.rows(), cost.cols());
    if m == 0 || n == 0 {
        return Vec::new();
    }
    let mut bound = T::one();
    for &c in cost.data() {
        if c.is_finite() {
            bound += c.abs();
        }
    }
    // Any solution using a sentinel costs more than the empty assignment.
    let big = bound + bound;
    let size = m + n;
    let entry = |i: usize, j: usize| -> T {
        match (i < m, j < n) {
            (true, true) => {
                let c = cost.at(i, j);
                if c.is_finite() {
                    c
                } else {
                    big
                }
            }
            (true, false) => {
                if j - n == i {
                    T::zero()
                } else {
                    big
                }
            }
            (false, true) => {
                if i - m == j {
                    T::zero()
                } else {
                    big
                }
            }
            (false, false) => T::zero(),
        }
    };

    // 1-based potentials; column 0 is the virtual root of each search.
    let mut u = vec![T::zero(); size + 1];
    let mut v = vec![T::zero(); size + 1];
    let mut owner = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for row in 1..=size {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_to = vec![T::infinity(); size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = T::infinity();
            let mut col1 = 0;
            for j in 1..=size {
                if used[j] {
                    continue;
                }
                let reduced = entry(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = col0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    col1 = j;
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter_map(|j| {
            let i = owner[j] - 1;
            (i < m && cost.at(i, j - 1).is_finite()).then_some((i, j - 1))
        })
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Total cost of `pairs` under `cost`.
pub fn assignment_cost<T: Scalar>(cost: &Tensor<T>, pairs: &[(usize, usize)]) -> T {
    pairs.iter().map(|&(i, j)| cost.at(i, j)).sum()
}
