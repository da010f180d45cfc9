//! Open-set confusion counts and scores.
//!
//! A known sample counts as a true positive only when it receives its own
//! label; rejection or a wrong known label is a false negative. An open
//! sample labelled with any known class is a false positive, a rejected one a
//! true negative.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::ClassId;
use crate::error::{Error, Result};

/// Prediction or ground truth of one sample.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Known(ClassId),
    Open,
}

impl Label {
    pub fn is_open(&self) -> bool {
        matches!(self, Label::Open)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Known(c) => write!(f, "{c}"),
            Label::Open => f.write_str("OPEN"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, prediction: &Label, truth: &Label) {
        match (truth, prediction) {
            (Label::Known(t), Label::Known(p)) if t == p => self.tp += 1,
            (Label::Known(_), _) => self.fn_ += 1,
            (Label::Open, Label::Known(_)) => self.fp += 1,
            (Label::Open, Label::Open) => self.tn += 1,
        }
    }
}

impl core::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

/// A score together with whether it was well defined. Undefined scores are 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub defined: bool,
}

impl Score {
    fn undefined() -> Self {
        Score {
            value: 0.0,
            defined: false,
        }
    }
}

pub fn score_predictions(predictions: &[Label], truth: &[Label]) -> Result<ConfusionCounts> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (p, t) in predictions.iter().zip(truth) {
        c.add(p, t);
    }
    Ok(c)
}

/// `tp / (tp + fp)`.
pub fn precision(c: &ConfusionCounts) -> Score {
    ratio(c.tp, c.tp + c.fp)
}

/// `tp / (tp + fn)`.
pub fn recall(c: &ConfusionCounts) -> Score {
    ratio(c.tp, c.tp + c.fn_)
}

fn ratio(num: usize, den: usize) -> Score {
    if den == 0 {
        return Score::undefined();
    }
    Score {
        value: num as f64 / den as f64,
        defined: true,
    }
}

/// Harmonic mean of precision and recall; 0 and undefined when either is
/// undefined or both are 0.
pub fn f_measure(c: &ConfusionCounts) -> Score {
    let (p, r) = (precision(c), recall(c));
    if !p.defined || !r.defined || p.value + r.value == 0.0 {
        return Score::undefined();
    }
    Score {
        value: 2.0 * p.value * r.value / (p.value + r.value),
        defined: true,
    }
}

/// `(tp + tn) / total`.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    Ok((c.tp + c.tn) as f64 / total as f64)
}
