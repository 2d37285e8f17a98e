//! Multinomial naive Bayes over bag-of-words documents.
//!
//! The class-conditional word probability is the λ-smoothed estimate
//!
//! ```text
//! P(w|c) = (λ + N[c,w]) / (λ|V| + Σ_v N[c,v])
//! ```
//!
//! and documents are scored in log space. Words outside the training
//! vocabulary are skipped at prediction time so that `|V|` stays the one
//! fixed when the model was trained.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use crate::corpus::{Document, Polarity};
use crate::error::{LscError, Result};
use crate::flatfile;
use crate::math::normalize_pair;

const MAGIC: &str = "lsc-nb";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    lambda: f64,
    counts_pos: BTreeMap<String, f64>,
    counts_neg: BTreeMap<String, f64>,
    total_pos: f64,
    total_neg: f64,
    prior_pos: f64,
    prior_neg: f64,
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(LscError::InvalidArgument(format!(
            "smoothing λ must lie in [0, 1], got {lambda}"
        )));
    }
    Ok(())
}

/// Trains on `documents` with a caller-supplied vocabulary that must
/// cover every document word.
pub fn train_nb<'a, I>(documents: I, lambda: f64, vocabulary: &BTreeSet<String>) -> Result<NbModel>
where
    I: IntoIterator<Item = &'a Document>,
{
    check_lambda(lambda)?;
    let mut counts_pos: BTreeMap<String, f64> = vocabulary.iter().map(|w| (w.clone(), 0.0)).collect();
    let mut counts_neg = counts_pos.clone();
    let (mut n_pos, mut n_neg) = (0usize, 0usize);

    for doc in documents {
        let target = match doc.label {
            Polarity::Positive => {
                n_pos += 1;
                &mut counts_pos
            }
            Polarity::Negative => {
                n_neg += 1;
                &mut counts_neg
            }
        };
        for (w, &n) in &doc.counts {
            match target.get_mut(w) {
                Some(c) => *c += f64::from(n),
                None => return Err(LscError::UnknownWord(w.clone())),
            }
        }
    }
    if n_pos == 0 {
        return Err(LscError::EmptyClass(Polarity::Positive));
    }
    if n_neg == 0 {
        return Err(LscError::EmptyClass(Polarity::Negative));
    }
    let prior_pos = n_pos as f64 / (n_pos + n_neg) as f64;
    NbModel::from_counts(lambda, counts_pos, counts_neg, prior_pos)
}

impl NbModel {
    /// Builds a model from explicit counts. Both maps must share the same
    /// key set, which becomes the vocabulary.
    pub fn from_counts(
        lambda: f64,
        counts_pos: BTreeMap<String, f64>,
        counts_neg: BTreeMap<String, f64>,
        prior_pos: f64,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        if !(0.0..=1.0).contains(&prior_pos) {
            return Err(LscError::InvalidArgument(format!("prior {prior_pos} outside [0, 1]")));
        }
        if !counts_pos.keys().eq(counts_neg.keys()) {
            return Err(LscError::InvalidArgument(
                "positive and negative count maps cover different words".into(),
            ));
        }
        if let Some((w, c)) = counts_pos
            .iter()
            .chain(&counts_neg)
            .find(|(_, c)| !(c.is_finite() && **c >= 0.0))
        {
            return Err(LscError::InvalidArgument(format!(
                "count {c} for {w:?} is not a nonnegative number"
            )));
        }
        let total_pos = counts_pos.values().sum();
        let total_neg = counts_neg.values().sum();
        Ok(NbModel {
            lambda,
            counts_pos,
            counts_neg,
            total_pos,
            total_neg,
            prior_pos,
            prior_neg: 1.0 - prior_pos,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn vocab_size(&self) -> usize {
        self.counts_pos.len()
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.counts_pos.keys().map(String::as_str)
    }

    pub fn contains(&self, w: &str) -> bool {
        self.counts_pos.contains_key(w)
    }

    pub fn counts(&self, c: Polarity) -> &BTreeMap<String, f64> {
        match c {
            Polarity::Positive => &self.counts_pos,
            Polarity::Negative => &self.counts_neg,
        }
    }

    pub fn priors(&self) -> (f64, f64) {
        (self.prior_pos, self.prior_neg)
    }

    fn norm(&self, c: Polarity) -> f64 {
        let total = match c {
            Polarity::Positive => self.total_pos,
            Polarity::Negative => self.total_neg,
        };
        self.lambda * self.vocab_size() as f64 + total
    }

    pub fn word_conditional(&self, w: &str, c: Polarity) -> Result<f64> {
        let n = self
            .counts(c)
            .get(w)
            .ok_or_else(|| LscError::UnknownWord(w.to_string()))?;
        Ok((self.lambda + n) / self.norm(c))
    }

    /// All conditionals of class `c`, in vocabulary order.
    pub fn conditionals(&self, c: Polarity) -> BTreeMap<String, f64> {
        let norm = self.norm(c);
        self.counts(c)
            .iter()
            .map(|(w, n)| (w.clone(), (self.lambda + n) / norm))
            .collect()
    }

    /// Unnormalized log scores `(positive, negative)`.
    pub fn log_posterior(&self, doc: &Document) -> (f64, f64) {
        let terms = doc.counts.iter().filter_map(|(w, &n)| {
            let p = self.counts_pos.get(w)?;
            let q = self.counts_neg.get(w)?;
            Some((f64::from(n), *p, *q))
        });
        log_scores(
            (self.prior_pos, self.prior_neg),
            self.lambda,
            self.vocab_size(),
            (self.total_pos, self.total_neg),
            terms,
        )
    }

    /// Normalized `(P(+|d), P(-|d))`.
    pub fn posterior(&self, doc: &Document) -> (f64, f64) {
        let (a, b) = self.log_posterior(doc);
        normalize_pair(a, b)
    }

    pub fn predict(&self, doc: &Document) -> Polarity {
        let (a, b) = self.log_posterior(doc);
        argmax(a, b)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let header = [
            ("lambda", self.lambda.to_string()),
            ("prior_pos", self.prior_pos.to_string()),
            ("prior_neg", self.prior_neg.to_string()),
            ("vocab_size", self.vocab_size().to_string()),
        ];
        let rows = self
            .counts_pos
            .iter()
            .zip(self.counts_neg.values())
            .map(|((w, p), n)| vec![w.clone(), p.to_string(), n.to_string()]);
        flatfile::write(w, MAGIC, VERSION, &header, rows)
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let file = flatfile::read(r, MAGIC, VERSION, 3)?;
        let (lambda, pos, neg, size) = read_count_rows(&file)?;
        let prior_pos: f64 = file.parse("prior_pos")?;
        let prior_neg: f64 = file.parse("prior_neg")?;
        if pos.len() != size {
            return Err(LscError::Parse(format!("vocab_size {size} but {} rows", pos.len())));
        }
        let mut model = NbModel::from_counts(lambda, pos, neg, prior_pos)?;
        model.prior_neg = prior_neg;
        Ok(model)
    }
}

pub(crate) type CountMaps = (f64, BTreeMap<String, f64>, BTreeMap<String, f64>, usize);

pub(crate) fn read_count_rows(file: &flatfile::FlatFile) -> Result<CountMaps> {
    let lambda = file.parse("lambda")?;
    let size = file.parse("vocab_size")?;
    let mut pos = BTreeMap::new();
    let mut neg = BTreeMap::new();
    for row in &file.rows {
        let w = row[0].clone();
        if pos.contains_key(&w) {
            return Err(LscError::Parse(format!("duplicate row for {w:?}")));
        }
        pos.insert(w.clone(), flatfile::parse_field(&row[1], &w)?);
        neg.insert(w.clone(), flatfile::parse_field(&row[2], &w)?);
    }
    Ok((lambda, pos, neg, size))
}

/// Ties go to `Positive`.
#[inline]
pub(crate) fn argmax(pos: f64, neg: f64) -> Polarity {
    if pos >= neg || (pos.is_nan() && neg.is_nan()) {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

/// Log scores `ln P(c) + Σ n·ln((λ + count_c) / (λ|V| + total_c))` over
/// `(n, count_pos, count_neg)` terms. Shared by the naive Bayes model and
/// the virtual-count classifier so that equal counts score identically.
#[inline]
pub(crate) fn log_scores(
    priors: (f64, f64),
    lambda: f64,
    vocab_size: usize,
    totals: (f64, f64),
    terms: impl Iterator<Item = (f64, f64, f64)>,
) -> (f64, f64) {
    let base = lambda * vocab_size as f64;
    let ln_norm_pos = (base + totals.0).ln();
    let ln_norm_neg = (base + totals.1).ln();
    let mut pos = priors.0.ln();
    let mut neg = priors.1.ln();
    for (n, cp, cn) in terms {
        pos += n * ((lambda + cp).ln() - ln_norm_pos);
        neg += n * ((lambda + cn).ln() - ln_norm_neg);
    }
    (pos, neg)
}
