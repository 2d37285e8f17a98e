//! Per-document posterior, loss and gradient under virtual counts.
//!
//! With `S± = λ|V| + Σ_v X±,v` the log-odds of the labelled class are
//!
//! ```text
//! m = s·( ln P(+)/P(−) + Σ_w n_w·ln((λ+X+,w)/(λ+X−,w)) − |d|·ln(S+/S−) )
//! ```
//!
//! with `s = +1` for a positive document and `−1` for a negative one; the
//! last term is `ln g(X)`. Every partial then splits into a word-specific
//! part, nonzero only for words of the document,
//!
//! ```text
//! ∂m/∂X+,u ⊃  s·n_u/(λ+X+,u)        ∂m/∂X−,u ⊃ −s·n_u/(λ+X−,u)
//! ```
//!
//! and a part shared by every word of the vocabulary that comes from
//! `∂g/∂X+,u = |d|·g/S+` and `∂g/∂X−,u = −|d|·g/S−`:
//!
//! ```text
//! ∂m/∂X+,u ⊃ −s·|d|/S+              ∂m/∂X−,u ⊃  s·|d|/S−
//! ```

use std::collections::BTreeMap;

use crate::corpus::{Document, Polarity};
use crate::error::{LscError, Result};
use crate::math::{logistic, softplus, EXP_CLAMP};

use super::{LengthMode, LscConfig, StepLoss, VirtualCounts};

/// A document resolved against a vocabulary; unknown words are dropped.
#[derive(Debug, Clone)]
pub(crate) struct IndexedDoc<'a> {
    pub id: &'a str,
    pub terms: Vec<(usize, f64)>,
    pub len: f64,
    pub sign: f64,
}

pub(crate) fn index_doc<'a>(x: &VirtualCounts, doc: &'a Document, mode: LengthMode) -> IndexedDoc<'a> {
    let terms: Vec<(usize, f64)> = doc
        .counts
        .iter()
        .filter_map(|(w, &n)| x.index_of(w).map(|i| (i, f64::from(n))))
        .collect();
    let len = match mode {
        LengthMode::TotalTokens => terms.iter().map(|t| t.1).sum(),
        LengthMode::DistinctWords => terms.len() as f64,
    };
    IndexedDoc {
        id: &doc.id,
        terms,
        len,
        sign: match doc.label {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        },
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Context {
    pub lambda: f64,
    pub base: f64,
    pub log_prior_ratio: f64,
}

impl Context {
    pub fn new(lambda: f64, vocab_size: usize, priors: (f64, f64)) -> Self {
        Context {
            lambda,
            base: lambda * vocab_size as f64,
            log_prior_ratio: priors.0.ln() - priors.1.ln(),
        }
    }
}

/// Log-odds of the labelled class.
#[inline]
pub(crate) fn margin(x_pos: &[f64], x_neg: &[f64], totals: (f64, f64), ctx: &Context, doc: &IndexedDoc) -> f64 {
    let mut r = ctx.log_prior_ratio;
    for &(i, n) in &doc.terms {
        r += n * ((ctx.lambda + x_pos[i]).ln() - (ctx.lambda + x_neg[i]).ln());
    }
    if doc.len != 0.0 {
        r -= doc.len * ((ctx.base + totals.0).ln() - (ctx.base + totals.1).ln());
    }
    doc.sign * r
}

#[inline]
pub(crate) fn loss_of_margin(m: f64, loss: StepLoss) -> f64 {
    match loss {
        StepLoss::LogLikelihood => softplus(-m.clamp(-EXP_CLAMP, EXP_CLAMP)),
        StepLoss::Margin => -(0.5 * m).tanh(),
    }
}

#[inline]
fn dloss_dmargin(m: f64, loss: StepLoss) -> f64 {
    match loss {
        StepLoss::LogLikelihood => -logistic(-m),
        StepLoss::Margin => -2.0 * logistic(m) * logistic(-m),
    }
}

/// `P(c_j|d) − P(c_f|d)` for the labelled class `c_j`.
#[inline]
pub(crate) fn correct_minus_wrong(m: f64) -> f64 {
    (0.5 * m.clamp(-EXP_CLAMP, EXP_CLAMP)).tanh()
}

/// Fills `out` with the word-specific partials of the document loss and
/// returns the shared partials `(∂/∂X+, ∂/∂X−)` that apply to every word.
#[inline]
pub(crate) fn doc_partials(
    x_pos: &[f64],
    x_neg: &[f64],
    totals: (f64, f64),
    ctx: &Context,
    doc: &IndexedDoc,
    loss: StepLoss,
    out: &mut Vec<(usize, f64, f64)>,
) -> (f64, f64) {
    let m = margin(x_pos, x_neg, totals, ctx, doc);
    let k = dloss_dmargin(m, loss) * doc.sign;
    out.clear();
    for &(i, n) in &doc.terms {
        out.push((i, k * n / (ctx.lambda + x_pos[i]), -k * n / (ctx.lambda + x_neg[i])));
    }
    (
        -k * doc.len / (ctx.base + totals.0),
        k * doc.len / (ctx.base + totals.1),
    )
}

/// Gradient of one document's loss with respect to every virtual count.
///
/// `terms` holds the word-specific parts (indices into the vocabulary of the
/// counts it was computed from) and `shared` the part common to all words.
#[derive(Debug, Clone, PartialEq)]
pub struct DocGradient {
    pub terms: Vec<(usize, f64, f64)>,
    pub shared: (f64, f64),
}

impl DocGradient {
    /// Full partials `(∂/∂X+,i, ∂/∂X−,i)` for vocabulary index `i`.
    pub fn partial(&self, i: usize) -> (f64, f64) {
        let own = self.terms.iter().find(|t| t.0 == i).map_or((0.0, 0.0), |t| (t.1, t.2));
        (own.0 + self.shared.0, own.1 + self.shared.1)
    }

    /// Word-specific partials keyed by word.
    pub fn sparse_map(&self, x: &VirtualCounts) -> BTreeMap<String, (f64, f64)> {
        self.terms
            .iter()
            .map(|&(i, p, n)| (x.word(i).to_string(), (p, n)))
            .collect()
    }
}

/// Gradient of the configured per-document loss (`config.step_loss`).
///
/// For a positive document under [`StepLoss::LogLikelihood`] these are the
/// closed forms
///
/// ```text
/// ∂/∂X+,u = (n_u/(λ+X+,u) + Q·∂g/∂X+,u) / (1 + Q·g) − n_u/(λ+X+,u)
/// ∂/∂X−,u = (n_u/(λ+X−,u)·g + ∂g/∂X−,u) / (1/Q + g)
/// ```
///
/// with `Q = P(−)/P(+)·Π_w ((λ+X−,w)/(λ+X+,w))^n_w`; negative documents
/// mirror them.
pub fn grad_doc(x: &VirtualCounts, doc: &Document, priors: (f64, f64), config: &LscConfig) -> Result<DocGradient> {
    let idoc = index_doc(x, doc, config.length_mode);
    let ctx = Context::new(config.lambda, x.len(), priors);
    let mut terms = Vec::with_capacity(idoc.terms.len());
    let shared = doc_partials(
        x.class(Polarity::Positive),
        x.class(Polarity::Negative),
        x.totals(),
        &ctx,
        &idoc,
        config.step_loss,
        &mut terms,
    );
    if let Some(&(i, _, _)) = terms.iter().find(|t| !(t.1.is_finite() && t.2.is_finite())) {
        return Err(LscError::NonFinite {
            word: x.word(i).to_string(),
            doc_id: doc.id.clone(),
        });
    }
    if !(shared.0.is_finite() && shared.1.is_finite()) {
        return Err(LscError::NonFinite {
            word: "<all>".into(),
            doc_id: doc.id.clone(),
        });
    }
    Ok(DocGradient { terms, shared })
}

/// The configured per-document loss at `x`.
pub fn doc_loss(x: &VirtualCounts, doc: &Document, priors: (f64, f64), config: &LscConfig) -> f64 {
    let idoc = index_doc(x, doc, config.length_mode);
    let ctx = Context::new(config.lambda, x.len(), priors);
    let m = margin(
        x.class(Polarity::Positive),
        x.class(Polarity::Negative),
        x.totals(),
        &ctx,
        &idoc,
    );
    loss_of_margin(m, config.step_loss)
}

/// `Σ_i P(c_j|d_i) − P(c_f|d_i)` over `docs`, with normalized posteriors.
pub fn objective<'a, I>(x: &VirtualCounts, docs: I, priors: (f64, f64), lambda: f64, mode: LengthMode) -> f64
where
    I: IntoIterator<Item = &'a Document>,
{
    let ctx = Context::new(lambda, x.len(), priors);
    let totals = x.totals();
    docs.into_iter()
        .map(|d| {
            let idoc = index_doc(x, d, mode);
            correct_minus_wrong(margin(
                x.class(Polarity::Positive),
                x.class(Polarity::Negative),
                totals,
                &ctx,
                &idoc,
            ))
        })
        .sum()
}

/// `((λ|V| + Σ X+) / (λ|V| + Σ X−))^doc_len`, evaluated in log space.
pub fn g_factor(x: &VirtualCounts, doc_len: u64, lambda: f64, vocab_size: usize) -> Result<f64> {
    if doc_len == 0 {
        return Ok(1.0);
    }
    let (tp, tn) = x.totals();
    let base = lambda * vocab_size as f64;
    let (num, den) = (base + tp, base + tn);
    if !(num > 0.0 && den > 0.0) {
        return Err(LscError::InvalidArgument(
            "length factor undefined: zero smoothing with all-zero counts".into(),
        ));
    }
    let e = doc_len as f64 * (num.ln() - den.ln());
    Ok(e.clamp(-EXP_CLAMP, EXP_CLAMP).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nb::NbModel;

    fn counts(rows: &[(&str, f64, f64)]) -> VirtualCounts {
        let pos = rows.iter().map(|r| (r.0.to_string(), r.1)).collect();
        let neg = rows.iter().map(|r| (r.0.to_string(), r.2)).collect();
        VirtualCounts::from_maps(&pos, &neg).unwrap()
    }

    fn doc(id: &str, words: &[&str], label: Polarity) -> Document {
        Document::from_tokens(id, words.iter().copied(), label)
    }

    fn cfg(loss: StepLoss) -> LscConfig {
        LscConfig {
            step_loss: loss,
            ..LscConfig::default()
        }
    }

    #[test]
    fn g_factor_cases() {
        let x = counts(&[("a", 3.0, 1.0), ("b", 1.0, 0.0)]);
        assert!((g_factor(&x, 2, 1.0, 2).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(g_factor(&x, 0, 1.0, 2).unwrap(), 1.0);
        let sym = counts(&[("a", 3.0, 1.0), ("b", 1.0, 3.0)]);
        assert_eq!(g_factor(&sym, 7, 1.0, 2).unwrap(), 1.0);
        let zero = counts(&[("a", 0.0, 0.0)]);
        assert!(g_factor(&zero, 1, 0.0, 1).is_err());
        // huge exponents saturate instead of overflowing
        assert!(g_factor(&x, 1_000_000, 1.0, 2).unwrap().is_finite());
    }

    #[test]
    fn objective_bounds_and_symmetry() {
        let sym = counts(&[("a", 3.0, 3.0), ("b", 1.0, 1.0)]);
        let docs = [
            doc("1", &["a", "b"], Polarity::Positive),
            doc("2", &["a"], Polarity::Negative),
        ];
        assert_eq!(objective(&sym, &docs, (0.5, 0.5), 1.0, LengthMode::TotalTokens), 0.0);

        let sharp = counts(&[("a", 1e9, 0.0), ("b", 0.0, 1e9)]);
        let docs = [
            doc("1", &["a"; 6], Polarity::Positive),
            doc("2", &["b"; 6], Polarity::Negative),
        ];
        let v = objective(&sharp, &docs, (0.5, 0.5), 1.0, LengthMode::TotalTokens);
        assert!((v - 2.0).abs() < 1e-9 && v <= 2.0);
    }

    #[test]
    fn objective_matches_probability_space() {
        // Three documents over a two-word model, posteriors by direct
        // multiplication of smoothed probabilities.
        let x = counts(&[("a", 4.0, 1.0), ("b", 2.0, 5.0)]);
        let priors = (0.6, 0.4);
        let docs = [
            doc("1", &["a", "a"], Polarity::Positive),
            doc("2", &["a", "b", "b"], Polarity::Negative),
            doc("3", &["b"], Polarity::Positive),
        ];
        // P(a|+) = 5/8, P(b|+) = 3/8, P(a|-) = 2/8, P(b|-) = 6/8
        let post = |wa: i32, wb: i32| {
            let p = 0.6 * (5.0f64 / 8.0).powi(wa) * (3.0f64 / 8.0).powi(wb);
            let n = 0.4 * (2.0f64 / 8.0).powi(wa) * (6.0f64 / 8.0).powi(wb);
            (p / (p + n), n / (p + n))
        };
        let (p1, n1) = post(2, 0);
        let (p2, n2) = post(1, 2);
        let (p3, n3) = post(0, 1);
        let expected = (p1 - n1) + (n2 - p2) + (p3 - n3);
        let got = objective(&x, &docs, priors, 1.0, LengthMode::TotalTokens);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn total_token_margin_is_naive_bayes() {
        let x = counts(&[("a", 4.0, 1.0), ("b", 2.0, 5.0), ("c", 0.0, 3.0)]);
        let m = NbModel::from_counts(
            1.0,
            x.iter().map(|(w, p, _)| (w.to_string(), p)).collect(),
            x.iter().map(|(w, _, n)| (w.to_string(), n)).collect(),
            0.3,
        )
        .unwrap();
        let d = doc("d", &["a", "c", "c", "zzz"], Polarity::Negative);
        let (sp, sn) = m.log_posterior(&d);
        let ctx = Context::new(1.0, 3, (0.3, 0.7));
        let idoc = index_doc(&x, &d, LengthMode::TotalTokens);
        let mg = margin(
            x.class(Polarity::Positive),
            x.class(Polarity::Negative),
            x.totals(),
            &ctx,
            &idoc,
        );
        assert!((mg - (sn - sp)).abs() < 1e-12);
    }

    /// Literal closed forms for a positive document, log-likelihood loss.
    fn closed_forms(x: &VirtualCounts, d: &Document, priors: (f64, f64), lambda: f64, u: &str) -> (f64, f64) {
        let v = x.len() as f64;
        let (tp, tn) = x.totals();
        let (sp, sn) = (lambda * v + tp, lambda * v + tn);
        let len: f64 = d.token_count() as f64;
        let g = (sp / sn).powf(len);
        let mut q = priors.1 / priors.0;
        for (w, &n) in &d.counts {
            let (xp, xn) = x.get(w).unwrap();
            q *= ((lambda + xn) / (lambda + xp)).powi(n as i32);
        }
        let (xpu, xnu) = x.get(u).unwrap();
        let nu = d.counts.get(u).copied().unwrap_or(0) as f64;
        let dg_pos = len * g / sp;
        let dg_neg = -len * g / sn;
        let a_pos = nu / (lambda + xpu);
        let a_neg = nu / (lambda + xnu);
        let d_pos = (a_pos + q * dg_pos) / (1.0 + q * g) - a_pos;
        let d_neg = (a_neg * g + dg_neg) / (1.0 / q + g);
        (d_pos, d_neg)
    }

    #[test]
    fn one_word_document_matches_closed_forms() {
        let x = counts(&[("good", 2.0, 1.0), ("bad", 0.0, 3.0)]);
        let d = doc("d", &["good"], Polarity::Positive);
        let g = grad_doc(&x, &d, (0.5, 0.5), &cfg(StepLoss::LogLikelihood)).unwrap();
        for (i, w) in ["bad", "good"].iter().enumerate() {
            let (ep, en) = closed_forms(&x, &d, (0.5, 0.5), 1.0, w);
            let (gp, gn) = g.partial(i);
            assert!((gp - ep).abs() < 1e-12, "{w}: {gp} vs {ep}");
            assert!((gn - en).abs() < 1e-12, "{w}: {gn} vs {en}");
        }
        // hand values: S+ = 4, S- = 6, |d| = 1, g = 2/3, Q = (2/3)/(... )
        // P(good|+) = 3/4, P(good|-) = 2/6, so P(+|d) = 9/13 and the
        // good/+ partial is −(4/13)·(1/3 − 1/4) = −1/39.
        let (gp, _) = g.partial(1);
        assert!((gp + 1.0 / 39.0).abs() < 1e-12);
    }

    #[test]
    fn longer_document_matches_closed_forms() {
        let x = counts(&[("a", 2.5, 0.5), ("b", 0.0, 7.0), ("c", 11.0, 3.0), ("d", 1.0, 1.0)]);
        let d = doc("d", &["a", "a", "b", "c", "c", "c"], Polarity::Positive);
        let priors = (0.3, 0.7);
        let g = grad_doc(&x, &d, priors, &cfg(StepLoss::LogLikelihood)).unwrap();
        for (i, w) in x.words().iter().enumerate() {
            let (ep, en) = closed_forms(&x, &d, priors, 1.0, w);
            let (gp, gn) = g.partial(i);
            assert!((gp - ep).abs() < 1e-12 * ep.abs().max(1.0));
            assert!((gn - en).abs() < 1e-12 * en.abs().max(1.0));
        }
    }

    #[test]
    fn label_swap_mirrors_gradient() {
        let x = counts(&[("a", 2.5, 0.5), ("b", 0.0, 7.0), ("c", 11.0, 3.0)]);
        for loss in [StepLoss::LogLikelihood, StepLoss::Margin] {
            let c = cfg(loss);
            let d = doc("d", &["a", "b", "b", "c"], Polarity::Positive);
            let swapped = Document {
                label: Polarity::Negative,
                ..d.clone()
            };
            let g1 = grad_doc(&x, &d, (0.3, 0.7), &c).unwrap();
            let g2 = grad_doc(&x.mirrored(), &swapped, (0.7, 0.3), &c).unwrap();
            for i in 0..x.len() {
                let (a, b) = g1.partial(i);
                let (c2, d2) = g2.partial(i);
                assert!((a - d2).abs() < 1e-15 && (b - c2).abs() < 1e-15);
            }
            assert_eq!(
                doc_loss(&x, &d, (0.3, 0.7), &c),
                doc_loss(&x.mirrored(), &swapped, (0.7, 0.3), &c)
            );
        }
    }

    #[test]
    fn zero_smoothing_reports_offending_word() {
        let x = counts(&[("a", 0.0, 1.0), ("b", 1.0, 0.0)]);
        let d = doc("doc7", &["a"], Polarity::Positive);
        let c = LscConfig {
            lambda: 0.0,
            ..cfg(StepLoss::LogLikelihood)
        };
        match grad_doc(&x, &d, (0.5, 0.5), &c) {
            Err(LscError::NonFinite { word, doc_id }) => {
                assert_eq!(word, "a");
                assert_eq!(doc_id, "doc7");
            }
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }
}
