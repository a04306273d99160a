//! Score matrices, dual-softmax with dustbins, and match extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_softmax, matmul_nt, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Similarity body plus the learnable dustbin score that fills the extra
/// row and column.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix<T> {
    pub body: Tensor<T>,
    pub dustbin: T,
}

impl<T: Scalar> ScoreMatrix<T> {
    pub fn rows(&self) -> usize {
        self.body.rows()
    }

    pub fn cols(&self) -> usize {
        self.body.cols()
    }

    /// `[m + 1, n + 1]` matrix with the dustbin in the last row and column.
    pub fn augmented(&self) -> Tensor<T> {
        let (m, n) = (self.rows(), self.cols());
        let mut out = Tensor::filled(&[m + 1, n + 1], self.dustbin);
        for i in 0..m {
            out.row_slice_mut(i)[..n].copy_from_slice(self.body.row_slice(i));
        }
        out
    }
}

/// `S^p = f^A f^Bᵀ`.
pub fn point_score_matrix<T: Scalar>(fa: &Tensor<T>, fb: &Tensor<T>, dustbin: T) -> Result<ScoreMatrix<T>> {
    Ok(ScoreMatrix {
        body: matmul_nt(fa, fb)?,
        dustbin,
    })
}

/// Endpoint node indices of the lines of one image.
#[derive(Clone, Copy, Debug)]
pub struct LineEnds<'a> {
    pub starts: &'a [usize],
    pub ends: &'a [usize],
}

impl<'a> LineEnds<'a> {
    pub fn new(starts: &'a [usize], ends: &'a [usize]) -> Result<Self> {
        if starts.len() != ends.len() {
            return Err(Error::Shape(format!(
                "{} line starts but {} line ends",
                starts.len(),
                ends.len()
            )));
        }
        Ok(LineEnds { starts, ends })
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }
}

fn check_nodes(ends: &LineEnds, limit: usize, image: &str) -> Result<()> {
    match ends.starts.iter().chain(ends.ends).find(|&&k| k >= limit) {
        Some(k) => Err(Error::Shape(format!(
            "line endpoint node {k} of image {image} outside {limit} nodes"
        ))),
        None => Ok(()),
    }
}

/// Line similarity: the better of the two endpoint pairings,
/// `max(S[s,s'] + S[e,e'], S[s,e'] + S[e,s'])`, read off the node score body.
/// The result does not depend on the endpoint order of either line.
pub fn line_score_matrix<T: Scalar>(
    point_body: &Tensor<T>,
    a: LineEnds,
    b: LineEnds,
    dustbin: T,
) -> Result<ScoreMatrix<T>> {
    let (na, nb) = point_body.require_matrix("line_score_matrix")?;
    check_nodes(&a, na, "A")?;
    check_nodes(&b, nb, "B")?;
    let mut body = Tensor::zeros(&[a.len(), b.len()]);
    for i in 0..a.len() {
        let (s, e) = (a.starts[i], a.ends[i]);
        for j in 0..b.len() {
            let (s2, e2) = (b.starts[j], b.ends[j]);
            let direct = point_body.at(s, s2) + point_body.at(e, e2);
            let flipped = point_body.at(s, e2) + point_body.at(e, s2);
            body.set(i, j, if flipped > direct { flipped } else { direct });
        }
    }
    Ok(ScoreMatrix { body, dustbin })
}

/// `0.5 · (log_softmax_rows + log_softmax_cols)` of the augmented matrix.
pub fn dual_log_softmax<T: Scalar>(s: &ScoreMatrix<T>) -> Result<Tensor<T>> {
    let aug = s.augmented();
    let rows = log_softmax(&aug, 1)?;
    let cols = log_softmax(&aug, 0)?;
    let half = T::lit(0.5);
    Ok(rows.zip_map(&cols, |r, c| half * (r + c)))
}

/// Final assignment `P = sqrt(σ_row(S̄) ⊙ σ_col(S̄))`, computed in log space.
pub fn dual_softmax<T: Scalar>(s: &ScoreMatrix<T>) -> Result<Tensor<T>> {
    Ok(dual_log_softmax(s)?.map(|v| v.exp()))
}

/// Tape version of [`dual_log_softmax`] for a body and a `[1, 1]` dustbin.
pub fn dual_log_softmax_on_tape<T: Scalar>(tape: &mut Tape<T>, body: Var, bin: Var) -> Result<Var> {
    let aug = tape.dustbin(body, bin)?;
    let rows = tape.log_softmax_rows(aug)?;
    let cols = tape.log_softmax_cols(aug)?;
    let sum = tape.add(rows, cols)?;
    Ok(tape.scale(sum, T::lit(0.5)))
}

/// Tape version of the line similarity body of [`line_score_matrix`].
pub fn line_scores_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    point_body: Var,
    a: LineEnds,
    b: LineEnds,
) -> Result<Var> {
    let (na, nb) = tape.value(point_body).require_matrix("line_scores_on_tape")?;
    check_nodes(&a, na, "A")?;
    check_nodes(&b, nb, "B")?;
    if a.is_empty() || b.is_empty() {
        return Ok(tape.leaf(Tensor::zeros(&[a.len(), b.len()])));
    }
    let ss = tape.gather_2d(point_body, a.starts, b.starts)?;
    let ee = tape.gather_2d(point_body, a.ends, b.ends)?;
    let se = tape.gather_2d(point_body, a.starts, b.ends)?;
    let es = tape.gather_2d(point_body, a.ends, b.starts)?;
    let direct = tape.add(ss, ee)?;
    let flipped = tape.add(se, es)?;
    tape.maximum(direct, flipped)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub a: usize,
    pub b: usize,
    pub confidence: f64,
}

fn argmax<T: Scalar>(values: impl Iterator<Item = T>) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (k, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

/// Matches plus the indices left unmatched on each side.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub matches: Vec<Match>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
}

impl MatchSet {
    /// Completes `matches` with the unmatched indices out of `m` and `n`.
    pub fn from_matches(matches: Vec<Match>, m: usize, n: usize) -> Self {
        let mut used_a = vec![false; m];
        let mut used_b = vec![false; n];
        for x in &matches {
            used_a[x.a] = true;
            used_b[x.b] = true;
        }
        let free = |used: Vec<bool>| used.iter().enumerate().filter(|(_, &u)| !u).map(|(k, _)| k).collect();
        MatchSet {
            matches,
            unmatched_a: free(used_a),
            unmatched_b: free(used_b),
        }
    }

    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        self.matches.iter().map(|m| (m.a, m.b, m.confidence)).collect()
    }
}

/// Mutual nearest neighbours in the body of an augmented assignment with
/// probability at least `eta`. Ties resolve to the lowest index. Matches are
/// ordered by their index in A.
pub fn extract_match_set<T: Scalar>(p: &Tensor<T>, eta: f64) -> Result<MatchSet> {
    let (r, c) = p.require_matrix("extract_match_set")?;
    let matches = extract_matches(p, eta)?;
    Ok(MatchSet::from_matches(matches, r.saturating_sub(1), c.saturating_sub(1)))
}

/// The match list of [`extract_match_set`].
pub fn extract_matches<T: Scalar>(p: &Tensor<T>, eta: f64) -> Result<Vec<Match>> {
    let (r, c) = p.require_matrix("extract_matches")?;
    if r == 0 || c == 0 {
        return Err(Error::Shape("assignment must include the dustbin row and column".into()));
    }
    let (m, n) = (r - 1, c - 1);
    if m == 0 || n == 0 {
        return Ok(Vec::new());
    }
    let col_best: Vec<usize> = (0..n)
        .map(|j| argmax((0..m).map(|i| p.at(i, j))).unwrap_or(0))
        .collect();
    let mut out = Vec::new();
    for i in 0..m {
        let j = argmax(p.row_slice(i)[..n].iter().copied()).unwrap_or(0);
        let conf = p.at(i, j).to_f64_lossy();
        if col_best[j] == i && conf >= eta {
            out.push(Match { a: i, b: j, confidence: conf });
        }
    }
    Ok(out)
}
