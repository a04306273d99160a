//! Matching and rotation metrics, with JSON reports and SVG plots.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assignment::Match;
use crate::error::{Error, Result};
use crate::features::{FeatureSet, TwoViewGeometry};
use crate::groundtruth::{closeness_matrices, line_labels, GtConfig, Label, LabelSet};
use crate::linalg::{self, Mat3};

/// Counts for one set of predictions against ground truth. Predictions that
/// touch an ignored index are dropped before counting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchStats {
    pub predicted: usize,
    pub correct: usize,
    pub ground_truth: usize,
}

impl MatchStats {
    /// 1 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            1.0
        } else {
            self.correct as f64 / self.predicted as f64
        }
    }

    /// 1 when there was nothing to find.
    pub fn recall(&self) -> f64 {
        if self.ground_truth == 0 {
            1.0
        } else {
            self.correct as f64 / self.ground_truth as f64
        }
    }

    pub fn merge(self, other: MatchStats) -> MatchStats {
        MatchStats {
            predicted: self.predicted + other.predicted,
            correct: self.correct + other.correct,
            ground_truth: self.ground_truth + other.ground_truth,
        }
    }
}

/// Label lookup that tolerates predictions outside the labeled range.
struct Judge {
    a: Vec<Label>,
    b: Vec<Label>,
}

impl Judge {
    fn new(gt: &LabelSet) -> Self {
        Judge {
            a: gt.labels_a(),
            b: gt.labels_b(),
        }
    }

    fn ignored(&self, m: &Match) -> bool {
        self.a.get(m.a) == Some(&Label::Ignore) || self.b.get(m.b) == Some(&Label::Ignore)
    }

    fn correct(&self, m: &Match) -> bool {
        self.a.get(m.a) == Some(&Label::Matched(m.b))
    }
}

pub fn match_stats(predicted: &[Match], gt: &LabelSet) -> MatchStats {
    let judge = Judge::new(gt);
    let kept: Vec<&Match> = predicted.iter().filter(|m| !judge.ignored(m)).collect();
    MatchStats {
        predicted: kept.len(),
        correct: kept.iter().filter(|m| judge.correct(m)).count(),
        ground_truth: gt.matches.len(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall after accepting every prediction scoring at least
/// `threshold`, for each distinct score in decreasing order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub average_precision: f64,
}

/// A scored prediction with its correctness.
#[derive(Clone, Copy, Debug)]
struct Judged {
    score: f64,
    correct: bool,
}

fn curve_from(mut judged: Vec<Judged>, num_gt: usize) -> PrCurve {
    judged.sort_by(|x, y| y.score.total_cmp(&x.score));
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut k = 0;
    while k < judged.len() {
        // Tied scores enter the ranking together.
        let score = judged[k].score;
        while k < judged.len() && judged[k].score == score {
            tp += judged[k].correct as usize;
            seen += 1;
            k += 1;
        }
        points.push(PrPoint {
            threshold: score,
            precision: tp as f64 / seen as f64,
            recall: if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 },
        });
    }
    let average_precision = average_precision(&points);
    PrCurve {
        points,
        average_precision,
    }
}

/// Area under the precision envelope `p(r) = max{precision at recall ≥ r}`.
fn average_precision(points: &[PrPoint]) -> f64 {
    let mut envelope = vec![0.0; points.len()];
    let mut best: f64 = 0.0;
    for (k, p) in points.iter().enumerate().rev() {
        best = best.max(p.precision);
        envelope[k] = best;
    }
    let mut prev = 0.0;
    let mut ap = 0.0;
    for (p, env) in points.iter().zip(envelope) {
        ap += (p.recall - prev) * env;
        prev = p.recall;
    }
    ap
}

/// Precision-recall curve and AP for one pair.
pub fn precision_recall_ap(predicted: &[Match], gt: &LabelSet) -> PrCurve {
    precision_recall_ap_pooled(&[(predicted, gt)])
}

/// One curve over the predictions of many pairs, ranked jointly.
pub fn precision_recall_ap_pooled(pairs: &[(&[Match], &LabelSet)]) -> PrCurve {
    let mut judged = Vec::new();
    let mut num_gt = 0;
    for (pred, gt) in pairs {
        let judge = Judge::new(gt);
        num_gt += gt.matches.len();
        judged.extend(pred.iter().filter(|m| !judge.ignored(m)).map(|m| Judged {
            score: m.confidence,
            correct: judge.correct(m),
        }));
    }
    curve_from(judged, num_gt)
}

/// `100 · |line correspondences| / max(1, mean line count)`.
pub fn line_repeatability(a: &FeatureSet, b: &FeatureSet, geom: &TwoViewGeometry, cfg: &GtConfig) -> f64 {
    let labels = line_labels(&closeness_matrices(a, b, geom, cfg), cfg);
    let mean = (a.lines.len() + b.lines.len()) as f64 / 2.0;
    100.0 * labels.matches.len() as f64 / mean.max(1.0)
}

/// Angle in degrees of `R_gtᵀ R_est`.
pub fn rotation_error_deg(r_est: &Mat3<f64>, r_gt: &Mat3<f64>) -> Result<f64> {
    for (name, r) in [("estimate", r_est), ("reference", r_gt)] {
        if !linalg::is_rotation(r, 1e-6) {
            return Err(Error::Invalid(format!("{name} is not a rotation matrix")));
        }
    }
    let q = linalg::mat_mul(&linalg::transpose(r_gt), r_est);
    let cos = (q[0][0] + q[1][1] + q[2][2] - 1.0) / 2.0;
    let axis = [q[2][1] - q[1][2], q[0][2] - q[2][0], q[1][0] - q[0][1]];
    let sin = linalg::norm(&axis) / 2.0;
    Ok(sin.atan2(cos).to_degrees())
}

pub const AUC_THRESHOLDS_DEG: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 5.0, 10.0];

/// Normalized area under the cumulative error curve up to each threshold.
pub fn error_auc(errors: &[f64], thresholds: &[f64]) -> Vec<f64> {
    let mut e: Vec<f64> = errors.to_vec();
    e.sort_by(f64::total_cmp);
    let n = e.len();
    let mut xs = vec![0.0];
    let mut ys = vec![0.0];
    for (k, v) in e.iter().enumerate() {
        xs.push(*v);
        ys.push((k + 1) as f64 / n as f64);
    }
    thresholds
        .iter()
        .map(|&t| {
            if n == 0 {
                return 0.0;
            }
            let last = xs.partition_point(|&x| x < t);
            let mut px = xs[..last].to_vec();
            let mut py = ys[..last].to_vec();
            px.push(t);
            py.push(ys[last - 1]);
            let area: f64 = px
                .windows(2)
                .zip(py.windows(2))
                .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
                .sum();
            area / t
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationSummary {
    pub count: usize,
    pub median_deg: f64,
    pub mean_deg: f64,
    /// `(threshold in degrees, AUC)`.
    pub auc: Vec<(f64, f64)>,
}

pub fn summarize_rotation_errors(errors: &[f64]) -> RotationSummary {
    let mut e = errors.to_vec();
    e.sort_by(f64::total_cmp);
    let n = e.len();
    let median = match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => e[n / 2],
        _ => 0.5 * (e[n / 2 - 1] + e[n / 2]),
    };
    let mean = if n == 0 { f64::NAN } else { e.iter().sum::<f64>() / n as f64 };
    let auc = AUC_THRESHOLDS_DEG
        .iter()
        .copied()
        .zip(error_auc(&e, &AUC_THRESHOLDS_DEG))
        .collect();
    RotationSummary {
        count: n,
        median_deg: median,
        mean_deg: mean,
        auc,
    }
}

const PLOT_W: f64 = 360.0;
const PLOT_H: f64 = 280.0;
const PAD: f64 = 40.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn plot_frame(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let (w, h) = (PLOT_W + 2.0 * PAD, PLOT_H + 2.0 * PAD);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{title}</text>"#, w / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{x_label}</text>"#, w / 2.0, h - 8.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        h / 2.0,
        h / 2.0
    );
    s
}

fn polyline(points: &[(f64, f64)], x_max: f64, color: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| {
            let px = PAD + PLOT_W * (x / x_max).clamp(0.0, 1.0);
            let py = PAD + PLOT_H * (1.0 - y.clamp(0.0, 1.0));
            format!("{px:.2},{py:.2}")
        })
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

fn legend(s: &mut String, k: usize, name: &str) {
    let y = PAD + 16.0 + 16.0 * k as f64;
    let color = COLORS[k % COLORS.len()];
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{y}" font-size="12" fill="{color}">{name}</text>"#,
        PAD + 8.0
    );
}

/// Precision (y) against recall (x) for each named curve.
pub fn pr_curve_svg(curves: &[(&str, &PrCurve)]) -> String {
    let mut s = plot_frame("Precision-recall", "recall", "precision");
    for (k, (name, c)) in curves.iter().enumerate() {
        let pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.recall, p.precision)).collect();
        s.push_str(&polyline(&pts, 1.0, COLORS[k % COLORS.len()]));
        legend(&mut s, k, &format!("{name} (AP {:.3})", c.average_precision));
    }
    s.push_str("</svg>\n");
    s
}

/// Fraction of errors below x, for x up to `max_deg`.
pub fn cumulative_error_svg(errors: &[f64], max_deg: f64) -> String {
    let mut s = plot_frame("Cumulative rotation error", "error (deg)", "fraction");
    let mut e = errors.to_vec();
    e.sort_by(f64::total_cmp);
    let n = e.len().max(1) as f64;
    let mut pts = vec![(0.0, 0.0)];
    for (k, v) in e.iter().enumerate() {
        pts.push((*v, k as f64 / n));
        pts.push((*v, (k + 1) as f64 / n));
    }
    pts.push((max_deg, e.len() as f64 / n));
    s.push_str(&polyline(&pts, max_deg, COLORS[0]));
    s.push_str("</svg>\n");
    s
}
