use serde::{Deserialize, Serialize};

use crate::corpus::Polarity;
use crate::error::{LscError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub f1_negative: f64,
    pub f1_positive: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
}

fn check(predictions: &[Polarity], gold: &[Polarity]) -> Result<()> {
    if predictions.is_empty() {
        return Err(LscError::InvalidArgument("no predictions to score".into()));
    }
    if predictions.len() != gold.len() {
        return Err(LscError::InvalidArgument(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    Ok(())
}

fn confusion(predictions: &[Polarity], gold: &[Polarity], class: Polarity) -> Confusion {
    let mut c = Confusion::default();
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p == class, g == class) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

/// F1 of `class`, 0 when precision and recall are both 0 or undefined.
pub fn f1_score(predictions: &[Polarity], gold: &[Polarity], class: Polarity) -> Result<f64> {
    check(predictions, gold)?;
    let c = confusion(predictions, gold, class);
    // 2PR/(P+R) = 2tp / (2tp + fp + fn)
    let denom = 2 * c.tp + c.fp + c.fn_;
    Ok(if c.tp == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    })
}

pub fn f1_negative(predictions: &[Polarity], gold: &[Polarity]) -> Result<f64> {
    f1_score(predictions, gold, Polarity::Negative)
}

pub fn f1_positive(predictions: &[Polarity], gold: &[Polarity]) -> Result<f64> {
    f1_score(predictions, gold, Polarity::Positive)
}

pub fn accuracy(predictions: &[Polarity], gold: &[Polarity]) -> Result<f64> {
    check(predictions, gold)?;
    let correct = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / gold.len() as f64)
}

impl Metrics {
    pub fn compute(predictions: &[Polarity], gold: &[Polarity]) -> Result<Self> {
        Ok(Metrics {
            f1_negative: f1_negative(predictions, gold)?,
            f1_positive: f1_positive(predictions, gold)?,
            accuracy: accuracy(predictions, gold)?,
        })
    }

    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::F1Negative => self.f1_negative,
            Metric::F1Positive => self.f1_positive,
            Metric::Accuracy => self.accuracy,
        }
    }

    /// Arithmetic mean of each field.
    pub fn mean<'a, I: IntoIterator<Item = &'a Metrics>>(items: I) -> Option<Metrics> {
        let mut n = 0usize;
        let mut sum = [0.0; 3];
        for m in items {
            n += 1;
            sum[0] += m.f1_negative;
            sum[1] += m.f1_positive;
            sum[2] += m.accuracy;
        }
        (n > 0).then(|| Metrics {
            f1_negative: sum[0] / n as f64,
            f1_positive: sum[1] / n as f64,
            accuracy: sum[2] / n as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    F1Negative,
    F1Positive,
    Accuracy,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::F1Negative, Metric::F1Positive, Metric::Accuracy];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::F1Negative => "f1_negative",
            Metric::F1Positive => "f1_positive",
            Metric::Accuracy => "accuracy",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = LscError;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| LscError::Parse(format!("unknown metric {s:?}")))
    }
}
