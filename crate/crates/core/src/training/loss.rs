//! Negative log-likelihood of the labeled assignment entries.

use crate::error::{Error, Result};
use crate::groundtruth::{GtLabels, LabelSet};
use crate::numerics::{Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Entries `(row, col, weight)` of the augmented matrix picked by `labels`:
/// matched pairs, the dustbin column for unmatched A-side indices and the
/// dustbin row for unmatched B-side indices. Ignored indices contribute
/// nothing. With `normalized`, weights are `1 / #terms` instead of 1.
pub fn nll_terms<T: Scalar>(
    labels: &LabelSet,
    m: usize,
    n: usize,
    normalized: bool,
    what: &str,
) -> Result<Vec<(usize, usize, T)>> {
    let mut idx = Vec::with_capacity(labels.matches.len() + labels.unmatched_a.len() + labels.unmatched_b.len());
    for &[i, j] in &labels.matches {
        if i >= m || j >= n {
            return Err(Error::Shape(format!(
                "{what} match ({i}, {j}) outside a {m} x {n} assignment"
            )));
        }
        idx.push((i, j));
    }
    for &i in &labels.unmatched_a {
        if i >= m {
            return Err(Error::Shape(format!("{what} unmatched index {i} of A outside {m}")));
        }
        idx.push((i, n));
    }
    for &j in &labels.unmatched_b {
        if j >= n {
            return Err(Error::Shape(format!("{what} unmatched index {j} of B outside {n}")));
        }
        idx.push((m, j));
    }
    for &i in &labels.ignore_a {
        if i >= m {
            return Err(Error::Shape(format!("{what} ignored index {i} of A outside {m}")));
        }
    }
    for &j in &labels.ignore_b {
        if j >= n {
            return Err(Error::Shape(format!("{what} ignored index {j} of B outside {n}")));
        }
    }
    let w = if normalized && !idx.is_empty() {
        -T::one() / T::from_usize_lossy(idx.len())
    } else {
        -T::one()
    };
    Ok(idx.into_iter().map(|(i, j)| (i, j, w)).collect())
}

fn body_dims(shape: (usize, usize), what: &str) -> Result<(usize, usize)> {
    match shape {
        (r, c) if r > 0 && c > 0 => Ok((r - 1, c - 1)),
        _ => Err(Error::Shape(format!("{what} assignment lacks the dustbin row or column"))),
    }
}

/// `½ (NLL_p + NLL_l)` on the log-assignment matrices of a forward pass.
pub fn nll_loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    point_log: Var,
    line_log: Var,
    labels: &GtLabels,
    normalized: bool,
) -> Result<Var> {
    let (pm, pn) = body_dims(tape.value(point_log).require_matrix("point assignment")?, "point")?;
    let (lm, ln) = body_dims(tape.value(line_log).require_matrix("line assignment")?, "line")?;
    let mut p_terms = nll_terms::<T>(&labels.points, pm, pn, normalized, "point")?;
    let mut l_terms = nll_terms::<T>(&labels.lines, lm, ln, normalized, "line")?;
    let half = T::lit(0.5);
    p_terms.iter_mut().for_each(|t| t.2 *= half);
    l_terms.iter_mut().for_each(|t| t.2 *= half);
    let p = tape.weighted_pick(point_log, &p_terms)?;
    let l = tape.weighted_pick(line_log, &l_terms)?;
    tape.add(p, l)
}

/// `½ (NLL_p + NLL_l)` evaluated on final assignment matrices.
pub fn nll_loss<T: Scalar>(point: &Tensor<T>, line: &Tensor<T>, labels: &GtLabels, normalized: bool) -> Result<T> {
    let mut total = T::zero();
    for (mat, set, what) in [(point, &labels.points, "point"), (line, &labels.lines, "line")] {
        let (m, n) = body_dims(mat.require_matrix(what)?, what)?;
        for (i, j, w) in nll_terms::<T>(set, m, n, normalized, what)? {
            total += w * mat.at(i, j).ln();
        }
    }
    Ok(total * T::lit(0.5))
}
