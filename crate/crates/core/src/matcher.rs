//! End-to-end matcher: wireframes in, assignment matrices and matches out.

use crate::assignment::{
    dual_log_softmax_on_tape, extract_match_set, line_scores_on_tape, LineEnds, MatchSet,
};
use crate::error::Result;
use crate::features::{MatchFile, UnmatchedLists};
use crate::gnn::{gnn_forward, GnnParams, GraphInput};
use crate::numerics::{Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::wireframe::Wireframe;

/// Default mutual-nearest-neighbour threshold.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.2;

/// Tape handles produced by one forward pass over a pair.
#[derive(Clone, Copy, Debug)]
pub struct PairForward {
    pub features_a: Var,
    pub features_b: Var,
    /// Log of the augmented point assignment `[Na + 1, Nb + 1]`.
    pub point_log_assignment: Var,
    /// Log of the augmented line assignment `[Ma + 1, Mb + 1]`.
    pub line_log_assignment: Var,
}

pub fn forward_pair<T: Scalar>(
    tape: &mut Tape<T>,
    params: &GnnParams<T>,
    a: &GraphInput<T>,
    b: &GraphInput<T>,
) -> Result<PairForward> {
    let (fa, fb) = gnn_forward(tape, params, a, b)?;
    let sp = tape.matmul_nt(fa, fb)?;
    let zp = tape.param(&params.store, "dustbin.point")?;
    let point = dual_log_softmax_on_tape(tape, sp, zp)?;
    let sl = line_scores_on_tape(
        tape,
        sp,
        LineEnds::new(&a.line_starts, &a.line_ends)?,
        LineEnds::new(&b.line_starts, &b.line_ends)?,
    )?;
    let zl = tape.param(&params.store, "dustbin.line")?;
    let line = dual_log_softmax_on_tape(tape, sl, zl)?;
    Ok(PairForward {
        features_a: fa,
        features_b: fb,
        point_log_assignment: point,
        line_log_assignment: line,
    })
}

/// Inference output for one pair. Point indices are wireframe nodes, line
/// indices are the original segments.
#[derive(Clone, Debug)]
pub struct Prediction<T> {
    pub point_assignment: Tensor<T>,
    pub line_assignment: Tensor<T>,
    pub points: MatchSet,
    pub lines: MatchSet,
}

impl<T: Scalar> Prediction<T> {
    pub fn to_match_file(&self) -> MatchFile {
        MatchFile {
            points: self.points.triples(),
            lines: self.lines.triples(),
            unmatched: UnmatchedLists {
                points_a: self.points.unmatched_a.clone(),
                points_b: self.points.unmatched_b.clone(),
                lines_a: self.lines.unmatched_a.clone(),
                lines_b: self.lines.unmatched_b.clone(),
            },
        }
    }
}

pub fn predict_graphs<T: Scalar>(
    params: &GnnParams<T>,
    a: &GraphInput<T>,
    b: &GraphInput<T>,
    eta: f64,
) -> Result<Prediction<T>> {
    let mut tape = Tape::new();
    let out = forward_pair(&mut tape, params, a, b)?;
    let point_assignment = tape.value(out.point_log_assignment).map(|v| v.exp());
    let line_assignment = tape.value(out.line_log_assignment).map(|v| v.exp());
    Ok(Prediction {
        points: extract_match_set(&point_assignment, eta)?,
        lines: extract_match_set(&line_assignment, eta)?,
        point_assignment,
        line_assignment,
    })
}

/// Matches two wireframes; edges index lines, so line matches refer to the
/// original segments.
pub fn predict<T: Scalar>(
    params: &GnnParams<T>,
    a: &Wireframe,
    b: &Wireframe,
    eta: f64,
) -> Result<Prediction<T>> {
    let ga = GraphInput::from_wireframe(a)?;
    let gb = GraphInput::from_wireframe(b)?;
    predict_graphs(params, &ga, &gb, eta)
}
