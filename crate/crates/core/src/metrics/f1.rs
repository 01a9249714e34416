//! Segment-based precision, recall and F1.
//!
//! Every `(segment, class)` cell is one binary decision. A prediction counts as
//! active when its probability is strictly greater than the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, other: ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2TP / (2TP + FP + FN)`, with `0/0 = 0`.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: usize,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: Vec<ClassScore>,
    /// Counts pooled over the class subset.
    pub micro: ConfusionCounts,
    pub micro_f1: f64,
    /// Unweighted mean of the per-class F1 values.
    pub macro_f1: f64,
}

/// Scores `predictions` against `references`, both `[segments, num_classes]`
/// row-major, over the classes in `subset`.
pub fn f1_segment(
    predictions: &[f32],
    references: &[f32],
    num_classes: usize,
    threshold: f64,
    subset: &[usize],
) -> Result<F1Report> {
    if num_classes == 0 || predictions.len() != references.len() || predictions.len() % num_classes != 0 {
        return Err(Error::shape(
            "f1_segment",
            format!(
                "{} predictions vs {} references for {num_classes} classes",
                predictions.len(),
                references.len()
            ),
        ));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} is outside (0, 1)")));
    }
    if subset.is_empty() {
        return Err(Error::Config("empty class subset".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&k| k >= num_classes) {
        return Err(Error::Config(format!("class {bad} out of range for {num_classes} classes")));
    }
    if let Some(bad) = references.iter().find(|&&r| r != 0.0 && r != 1.0) {
        return Err(Error::Data(format!("reference label {bad} is not 0 or 1")));
    }
    let mut counts = vec![ConfusionCounts::default(); num_classes];
    for (p_row, r_row) in predictions.chunks_exact(num_classes).zip(references.chunks_exact(num_classes)) {
        for k in 0..num_classes {
            let pred = p_row[k] as f64 > threshold;
            let truth = r_row[k] == 1.0;
            match (pred, truth) {
                (true, true) => counts[k].tp += 1,
                (true, false) => counts[k].fp += 1,
                (false, true) => counts[k].fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let mut micro = ConfusionCounts::default();
    let per_class: Vec<ClassScore> = subset
        .iter()
        .map(|&k| {
            let c = counts[k];
            micro.add(c);
            ClassScore {
                class: k,
                counts: c,
                precision: c.precision(),
                recall: c.recall(),
                f1: c.f1(),
            }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64;
    Ok(F1Report {
        per_class,
        micro,
        micro_f1: micro.f1(),
        macro_f1,
    })
}
