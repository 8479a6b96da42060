//! Expression-level and dataset-level scores in the leaderboard layout:
//! J, F, J&F, N-acc, T-acc and Final.
//!
//! * J and F are frame means of [`jaccard`] and [`boundary_f`], averaged over
//!   expressions whose target is present in the ground truth.
//! * N-acc is the fraction of target-absent expressions predicted all-empty.
//! * T-acc is the fraction of target-present expressions predicted with at
//!   least one non-empty frame.
//! * J&F = (J + F) / 2 and Final = (J&F + N-acc + T-acc) / 3.
//!
//! An accuracy with no expressions in its class is reported as 1.0 and
//! flagged as vacuous.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{boundary_f, default_boundary_tolerance, jaccard, MaskTrajectory};
use crate::metadata::PredictionRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionScore {
    pub expression_id: String,
    pub j_mean: f64,
    pub f_mean: f64,
    pub gt_present: bool,
    pub pred_present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub j: f64,
    pub f: f64,
    pub jf: f64,
    pub n_acc: f64,
    pub t_acc: f64,
    pub final_score: f64,
    /// No target-absent expressions were scored, so `n_acc` is 1.0 by
    /// convention.
    pub n_acc_vacuous: bool,
    /// No target-present expressions were scored.
    pub t_acc_vacuous: bool,
    pub per_expression: Vec<ExpressionScore>,
}

/// How the boundary band for F is chosen per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTolerance {
    /// `ceil(0.008 * diagonal)` of each frame.
    #[default]
    Diagonal,
    Fixed(u32),
}

impl BoundaryTolerance {
    pub fn for_dims(self, height: u32, width: u32) -> u32 {
        match self {
            BoundaryTolerance::Diagonal => default_boundary_tolerance(height, width),
            BoundaryTolerance::Fixed(t) => t,
        }
    }
}

/// Leaderboard arithmetic: J&F from (J, F) and Final from (J&F, N-acc, T-acc).
pub fn combine(j: f64, f: f64, n_acc: f64, t_acc: f64) -> (f64, f64) {
    let jf = (j + f) / 2.0;
    (jf, (jf + n_acc + t_acc) / 3.0)
}

pub fn score_expression(
    expression_id: &str,
    pred: &MaskTrajectory,
    gt: &MaskTrajectory,
    gt_present: bool,
    tolerance: BoundaryTolerance,
) -> Result<ExpressionScore> {
    pred.check_aligned(gt)?;
    let mut j_sum = 0.0;
    let mut f_sum = 0.0;
    for (p, g) in pred.masks().iter().zip(gt.masks()) {
        j_sum += jaccard(p, g)?;
        f_sum += boundary_f(p, g, tolerance.for_dims(g.height(), g.width()))?;
    }
    let n = pred.frame_count() as f64;
    Ok(ExpressionScore {
        expression_id: expression_id.to_string(),
        j_mean: j_sum / n,
        f_mean: f_sum / n,
        gt_present,
        pred_present: !pred.is_all_empty(),
    })
}

fn fraction(hits: usize, total: usize) -> (f64, bool) {
    if total == 0 {
        (1.0, true)
    } else {
        (hits as f64 / total as f64, false)
    }
}

pub fn aggregate(scores: Vec<ExpressionScore>) -> Result<EvalResult> {
    if scores.is_empty() {
        return Err(Error::Usage("cannot aggregate an empty score list".into()));
    }
    let present: Vec<&ExpressionScore> = scores.iter().filter(|s| s.gt_present).collect();
    let absent = scores.len() - present.len();

    // J and F fall back to 1.0 with no present expressions, matching T-acc
    let (j, f) = if present.is_empty() {
        (1.0, 1.0)
    } else {
        let n = present.len() as f64;
        (
            present.iter().map(|s| s.j_mean).sum::<f64>() / n,
            present.iter().map(|s| s.f_mean).sum::<f64>() / n,
        )
    };
    let (n_acc, n_acc_vacuous) = fraction(
        scores.iter().filter(|s| !s.gt_present && !s.pred_present).count(),
        absent,
    );
    let (t_acc, t_acc_vacuous) =
        fraction(present.iter().filter(|s| s.pred_present).count(), present.len());
    let (jf, final_score) = combine(j, f, n_acc, t_acc);
    Ok(EvalResult {
        j,
        f,
        jf,
        n_acc,
        t_acc,
        final_score,
        n_acc_vacuous,
        t_acc_vacuous,
        per_expression: scores,
    })
}

/// Scores a prediction set against ground truth, pairing records by
/// expression id. A ground-truth trajectory with any non-empty frame marks
/// the target as present.
pub fn evaluate(
    predictions: &[PredictionRecord],
    ground_truth: &[PredictionRecord],
    tolerance: BoundaryTolerance,
) -> Result<EvalResult> {
    let pred: BTreeMap<&str, &PredictionRecord> = predictions
        .iter()
        .map(|r| (r.expression_id.as_str(), r))
        .collect();
    let gt: BTreeMap<&str, &PredictionRecord> = ground_truth
        .iter()
        .map(|r| (r.expression_id.as_str(), r))
        .collect();
    if pred.len() != predictions.len() || gt.len() != ground_truth.len() {
        return Err(Error::Alignment("duplicate expression ids".into()));
    }
    let missing: Vec<&str> = gt.keys().filter(|k| !pred.contains_key(*k)).copied().collect();
    let extra: Vec<&str> = pred.keys().filter(|k| !gt.contains_key(*k)).copied().collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = String::from("prediction and ground-truth ids differ");
        if !missing.is_empty() {
            let _ = write!(msg, "; missing predictions: {}", missing.join(", "));
        }
        if !extra.is_empty() {
            let _ = write!(msg, "; unknown expressions: {}", extra.join(", "));
        }
        return Err(Error::Alignment(msg));
    }
    let scores = gt
        .par_iter()
        .map(|(id, g)| {
            let p = pred[id];
            score_expression(id, &p.trajectory, &g.trajectory, !g.trajectory.is_all_empty(), tolerance)
                .map_err(|e| match e {
                    Error::Alignment(m) | Error::Dimension(m) => {
                        Error::Alignment(format!("expression `{id}`: {m}"))
                    }
                    other => other,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(scores)
}

impl EvalResult {
    /// Text table in leaderboard column order.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>8} {:>8} {:>8} {:>8} {:>8} {:>10}",
            "J&F", "J", "F", "N-acc.", "T-acc.", "Final"
        );
        let _ = writeln!(
            out,
            "{:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>10.6}",
            self.jf, self.j, self.f, self.n_acc, self.t_acc, self.final_score
        );
        if self.n_acc_vacuous {
            out.push_str("note: no target-absent expressions; N-acc. defaults to 1\n");
        }
        if self.t_acc_vacuous {
            out.push_str("note: no target-present expressions; T-acc. defaults to 1\n");
        }
        out
    }

    /// Machine-readable report: one record per expression plus the
    /// aggregate.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Aggregate {
            j: f64,
            f: f64,
            jf: f64,
            n_acc: f64,
            t_acc: f64,
            #[serde(rename = "final")]
            final_score: f64,
            n_acc_vacuous: bool,
            t_acc_vacuous: bool,
            expressions: usize,
        }
        #[derive(Serialize)]
        struct Report<'a> {
            expressions: &'a [ExpressionScore],
            aggregate: Aggregate,
        }
        crate::json::to_pretty(&Report {
            expressions: &self.per_expression,
            aggregate: Aggregate {
                j: self.j,
                f: self.f,
                jf: self.jf,
                n_acc: self.n_acc,
                t_acc: self.t_acc,
                final_score: self.final_score,
                n_acc_vacuous: self.n_acc_vacuous,
                t_acc_vacuous: self.t_acc_vacuous,
                expressions: self.per_expression.len(),
            },
        })
    }
}

/// Reads the per-expression records back out of a report written by
/// [`EvalResult::to_json`].
pub fn load_scores(text: &str, origin: &str) -> Result<Vec<ExpressionScore>> {
    #[derive(Deserialize)]
    struct Report {
        expressions: Vec<ExpressionScore>,
    }
    Ok(crate::json::parse::<Report>(text, origin)?.expressions)
}
