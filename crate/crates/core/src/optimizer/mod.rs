//! Knowledge-based learner: per-document SGD over virtual class-word
//! counts, started from target plus knowledge-base counts and held in place
//! by two L2 penalties.
//!
//! * Words whose target-domain conditionals differ by a factor of at least
//!   `sigma` (`V_T`) are pulled toward their target empirical counts.
//! * Words that leaned to one class in at least `tau` past tasks (`V_S`)
//!   are pulled toward `R_w·X⁰₊` and `(1 − R_w)·X⁰₋`, where `R_w` is the
//!   fraction of those tasks that leaned positive.

mod gradcheck;
mod gradient;
mod sgd;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Polarity;
use crate::error::{LscError, Result};
use crate::knowledge::KnowledgeBase;
use crate::nb::NbModel;

pub use gradcheck::{run_gradcheck, GradcheckConfig, GradcheckFailure, GradcheckReport};
pub use gradient::{doc_loss, g_factor, grad_doc, objective, DocGradient};
pub use sgd::{classify, sgd_train, LscModel};

/// What `|d|` means in the length-normalization factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthMode {
    /// Sum of term frequencies; makes the posterior exactly naive Bayes.
    TotalTokens,
    DistinctWords,
}

/// Per-document quantity the SGD step descends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepLoss {
    /// `-ln P(c_j|d)`; its partials are the closed-form per-document
    /// derivatives of the virtual-count posterior.
    LogLikelihood,
    /// `-(P(c_j|d) - P(c_f|d))`, the per-document term of the objective.
    Margin,
}

/// Which words receive virtual counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VocabularyScope {
    /// Target training vocabulary only.
    Target,
    /// Target training vocabulary plus every word known to the knowledge base.
    TargetAndKnowledge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LscConfig {
    pub sigma: f64,
    pub tau: u32,
    pub alpha: f64,
    /// Learning rate γ.
    pub learn_rate: f64,
    /// Smoothing λ.
    pub lambda: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub length_mode: LengthMode,
    pub step_loss: StepLoss,
    pub vocabulary: VocabularyScope,
    /// Reshuffle the training documents every epoch with this seed; `None`
    /// keeps corpus order.
    pub shuffle_seed: Option<u64>,
}

impl Default for LscConfig {
    fn default() -> Self {
        LscConfig {
            sigma: 6.0,
            tau: 6,
            alpha: 0.1,
            learn_rate: 0.1,
            lambda: 1.0,
            epsilon: 1e-3,
            max_epochs: 100,
            length_mode: LengthMode::TotalTokens,
            step_loss: StepLoss::LogLikelihood,
            vocabulary: VocabularyScope::TargetAndKnowledge,
            shuffle_seed: None,
        }
    }
}

impl LscConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LscError::InvalidArgument(m));
        if !(self.sigma >= 1.0) {
            return bad(format!("sigma must be at least 1, got {}", self.sigma));
        }
        if self.tau < 1 {
            return bad("tau must be at least 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be nonnegative, got {}", self.alpha));
        }
        if !(self.learn_rate > 0.0 && self.learn_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learn_rate));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad(format!("smoothing must lie in (0, 1], got {}", self.lambda));
        }
        if !(self.epsilon >= 0.0) {
            return bad(format!("epsilon must be nonnegative, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Nonnegative virtual counts over a fixed, sorted vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualCounts {
    words: Vec<String>,
    x_pos: Vec<f64>,
    x_neg: Vec<f64>,
}

impl VirtualCounts {
    /// Builds counts over `vocabulary` with `value(w)` per word.
    pub fn from_fn<'a, I, F>(vocabulary: I, mut value: F) -> Self
    where
        I: IntoIterator<Item = &'a String>,
        F: FnMut(&str) -> (f64, f64),
    {
        let words: Vec<String> = vocabulary.into_iter().cloned().collect();
        debug_assert!(words.windows(2).all(|w| w[0] < w[1]));
        let (x_pos, x_neg) = words.iter().map(|w| value(w)).unzip();
        VirtualCounts { words, x_pos, x_neg }
    }

    pub fn from_maps(pos: &BTreeMap<String, f64>, neg: &BTreeMap<String, f64>) -> Result<Self> {
        if !pos.keys().eq(neg.keys()) {
            return Err(LscError::InvalidArgument("count maps cover different words".into()));
        }
        if pos.values().chain(neg.values()).any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(LscError::InvalidArgument(
                "virtual counts must be finite and nonnegative".into(),
            ));
        }
        Ok(VirtualCounts {
            words: pos.keys().cloned().collect(),
            x_pos: pos.values().copied().collect(),
            x_neg: neg.values().copied().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, w: &str) -> Option<usize> {
        self.words.binary_search_by(|v| v.as_str().cmp(w)).ok()
    }

    pub fn get(&self, w: &str) -> Option<(f64, f64)> {
        self.index_of(w).map(|i| (self.x_pos[i], self.x_neg[i]))
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn class(&self, c: Polarity) -> &[f64] {
        match c {
            Polarity::Positive => &self.x_pos,
            Polarity::Negative => &self.x_neg,
        }
    }

    pub(crate) fn class_mut(&mut self, c: Polarity) -> &mut [f64] {
        match c {
            Polarity::Positive => &mut self.x_pos,
            Polarity::Negative => &mut self.x_neg,
        }
    }

    pub fn totals(&self) -> (f64, f64) {
        (self.x_pos.iter().sum(), self.x_neg.iter().sum())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64, f64)> {
        self.words
            .iter()
            .zip(&self.x_pos)
            .zip(&self.x_neg)
            .map(|((w, p), n)| (w.as_str(), *p, *n))
    }

    /// Exchanges the positive and negative sides.
    pub fn mirrored(&self) -> Self {
        VirtualCounts {
            words: self.words.clone(),
            x_pos: self.x_neg.clone(),
            x_neg: self.x_pos.clone(),
        }
    }
}

/// `X⁰ = N_target + N_KB` over `vocabulary`; missing entries count as zero
/// and knowledge-base words outside `vocabulary` are ignored.
pub fn init_virtual_counts(
    target_pos: &BTreeMap<String, f64>,
    target_neg: &BTreeMap<String, f64>,
    kb: &KnowledgeBase,
    vocabulary: &BTreeSet<String>,
) -> VirtualCounts {
    VirtualCounts::from_fn(vocabulary, |w| {
        let k = kb.get(w).copied().unwrap_or_default();
        (
            target_pos.get(w).copied().unwrap_or(0.0) + k.n_pos,
            target_neg.get(w).copied().unwrap_or(0.0) + k.n_neg,
        )
    })
}

/// Words whose target conditionals differ by a factor of at least `sigma`.
pub fn select_vt(target_model: &NbModel, sigma: f64) -> BTreeSet<String> {
    let pos = target_model.conditionals(Polarity::Positive);
    let neg = target_model.conditionals(Polarity::Negative);
    pos.iter()
        .zip(neg.values())
        .filter(|((_, &p), &n)| {
            if p == 0.0 && n == 0.0 {
                return false;
            }
            p / n >= sigma || n / p >= sigma
        })
        .map(|((w, _), _)| w.clone())
        .collect()
}

/// Words of `vocabulary` that leaned to one class in at least `tau` past
/// tasks, with their positive-lean ratio `R_w`.
pub fn select_vs(
    kb: &KnowledgeBase,
    tau: u32,
    vocabulary: &BTreeSet<String>,
) -> (BTreeSet<String>, BTreeMap<String, f64>) {
    let mut set = BTreeSet::new();
    let mut ratio = BTreeMap::new();
    for (w, k) in kb.words() {
        if (k.m_pos >= tau || k.m_neg >= tau) && vocabulary.contains(w) {
            set.insert(w.to_string());
            ratio.insert(w.to_string(), f64::from(k.m_pos) / f64::from(k.m_pos + k.m_neg));
        }
    }
    (set, ratio)
}

/// Anchor data for the two penalty terms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PenaltySpec {
    pub v_t: BTreeSet<String>,
    pub v_s: BTreeSet<String>,
    pub ratio: BTreeMap<String, f64>,
    /// Target empirical counts `(N⁺, N⁻)`.
    pub anchors_t: BTreeMap<String, (f64, f64)>,
    /// Starting point `(X⁰⁺, X⁰⁻)`.
    pub anchors_s: BTreeMap<String, (f64, f64)>,
}

impl PenaltySpec {
    pub fn build(
        v_t: BTreeSet<String>,
        (v_s, ratio): (BTreeSet<String>, BTreeMap<String, f64>),
        target_pos: &BTreeMap<String, f64>,
        target_neg: &BTreeMap<String, f64>,
        start: &VirtualCounts,
    ) -> Self {
        let anchors_t = v_t
            .iter()
            .map(|w| {
                let p = target_pos.get(w).copied().unwrap_or(0.0);
                let n = target_neg.get(w).copied().unwrap_or(0.0);
                (w.clone(), (p, n))
            })
            .collect();
        let anchors_s = v_s
            .iter()
            .filter_map(|w| start.get(w).map(|x| (w.clone(), x)))
            .collect();
        PenaltySpec {
            v_t,
            v_s,
            ratio,
            anchors_t,
            anchors_s,
        }
    }

    /// Per-word targets as `(terms, Σ anchor⁺, Σ anchor⁻)`; the penalty
    /// gradient for a word is `α·(terms·X − Σ anchor)` on each side.
    fn targets(&self) -> BTreeMap<&str, (f64, f64, f64)> {
        let mut out: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::new();
        for w in &self.v_t {
            let (p, n) = self.anchors_t.get(w).copied().unwrap_or((0.0, 0.0));
            let e = out.entry(w.as_str()).or_default();
            e.0 += 1.0;
            e.1 += p;
            e.2 += n;
        }
        for w in &self.v_s {
            let (Some(&r), Some(&(p0, n0))) = (self.ratio.get(w), self.anchors_s.get(w)) else {
                continue;
            };
            let e = out.entry(w.as_str()).or_default();
            e.0 += 1.0;
            e.1 += r * p0;
            e.2 += (1.0 - r) * n0;
        }
        out
    }

    pub(crate) fn indexed(&self, x: &VirtualCounts) -> IndexedPenalty {
        let mut slot = vec![u32::MAX; x.len()];
        let mut entries = Vec::new();
        for (w, (k, p, n)) in self.targets() {
            if let Some(i) = x.index_of(w) {
                slot[i] = entries.len() as u32;
                entries.push(PenaltyEntry {
                    index: i,
                    terms: k,
                    anchor_pos: p,
                    anchor_neg: n,
                });
            }
        }
        IndexedPenalty { slot, entries }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PenaltyEntry {
    pub index: usize,
    pub terms: f64,
    pub anchor_pos: f64,
    pub anchor_neg: f64,
}

impl PenaltyEntry {
    #[inline]
    pub fn grad(&self, alpha: f64, x_pos: f64, x_neg: f64) -> (f64, f64) {
        (
            alpha * (self.terms * x_pos - self.anchor_pos),
            alpha * (self.terms * x_neg - self.anchor_neg),
        )
    }
}

#[derive(Debug, Clone)]
pub(crate) struct IndexedPenalty {
    slot: Vec<u32>,
    pub entries: Vec<PenaltyEntry>,
}

impl IndexedPenalty {
    #[inline]
    pub fn entry(&self, i: usize) -> Option<&PenaltyEntry> {
        match self.slot[i] {
            u32::MAX => None,
            s => Some(&self.entries[s as usize]),
        }
    }
}

/// Value of both penalty terms and their gradient, keyed by word.
pub fn penalty_value_and_grad(
    x: &VirtualCounts,
    spec: &PenaltySpec,
    alpha: f64,
) -> (f64, BTreeMap<String, (f64, f64)>) {
    let mut value = 0.0;
    let mut grad: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut term = |w: &str, anchor: (f64, f64)| {
        let Some((xp, xn)) = x.get(w) else { return };
        let (dp, dn) = (xp - anchor.0, xn - anchor.1);
        value += 0.5 * alpha * (dp * dp + dn * dn);
        let g = grad.entry(w.to_string()).or_default();
        g.0 += alpha * dp;
        g.1 += alpha * dn;
    };
    for w in &spec.v_t {
        term(w, spec.anchors_t.get(w).copied().unwrap_or((0.0, 0.0)));
    }
    for w in &spec.v_s {
        if let (Some(&r), Some(&(p0, n0))) = (spec.ratio.get(w), spec.anchors_s.get(w)) {
            term(w, (r * p0, (1.0 - r) * n0));
        }
    }
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{mine_kb, TaskRecord};

    fn set(ws: &[&str]) -> BTreeSet<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    fn map(xs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        xs.iter().map(|(w, v)| (w.to_string(), *v)).collect()
    }

    fn task(name: &str, rows: &[(&str, f64, f64)]) -> TaskRecord {
        TaskRecord {
            task_name: name.into(),
            cond_pos: rows.iter().map(|r| (r.0.into(), r.1)).collect(),
            cond_neg: rows.iter().map(|r| (r.0.into(), r.2)).collect(),
            count_pos: rows.iter().map(|r| (r.0.into(), r.1 * 10.0)).collect(),
            count_neg: rows.iter().map(|r| (r.0.into(), r.2 * 10.0)).collect(),
        }
    }

    #[test]
    fn defaults() {
        let c = LscConfig::default();
        assert_eq!(
            (c.sigma, c.tau, c.alpha, c.learn_rate, c.lambda, c.epsilon),
            (6.0, 6, 0.1, 0.1, 1.0, 1e-3)
        );
        assert!(c.validate().is_ok());
        assert!(LscConfig {
            lambda: 0.0,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(LscConfig {
            sigma: 0.5,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(LscConfig { learn_rate: 0.0, ..c }.validate().is_err());
    }

    #[test]
    fn init_with_empty_kb_is_target_counts() {
        let pos = map(&[("a", 4.0), ("b", 0.0)]);
        let neg = map(&[("a", 1.0), ("b", 2.0)]);
        let x = init_virtual_counts(&pos, &neg, &KnowledgeBase::new(), &set(&["a", "b"]));
        assert_eq!(x.get("a"), Some((4.0, 1.0)));
        assert_eq!(x.get("b"), Some((0.0, 2.0)));
    }

    #[test]
    fn init_adds_kb_counts_and_drops_kb_only_words() {
        let kb = mine_kb(&[task("p", &[("a", 0.5, 0.1), ("zzz", 0.3, 0.1)])]).unwrap();
        let pos = map(&[("a", 4.0)]);
        let neg = map(&[("a", 0.0)]);
        let x = init_virtual_counts(&pos, &neg, &kb, &set(&["a", "c"]));
        assert_eq!(x.get("a"), Some((9.0, 1.0)));
        assert_eq!(x.get("c"), Some((0.0, 0.0)));
        assert_eq!(x.get("zzz"), None);
    }

    #[test]
    fn vt_ratio_threshold() {
        // With λ = 1 and totals chosen so that the conditionals are exact:
        // P(w|+) = 30/100 and P(w|-) = 4/100.
        let pos = map(&[("w", 29.0), ("o", 69.0)]);
        let neg = map(&[("w", 3.0), ("o", 95.0)]);
        let m = NbModel::from_counts(1.0, pos, neg, 0.5).unwrap();
        assert!((m.word_conditional("w", Polarity::Positive).unwrap() - 0.30).abs() < 1e-12);
        assert!((m.word_conditional("w", Polarity::Negative).unwrap() - 0.04).abs() < 1e-12);
        let vt = select_vt(&m, 6.0);
        assert!(vt.contains("w"));
        assert!(!vt.contains("o"));
        assert!(!select_vt(&m, 7.6).contains("w"));

        let sym = NbModel::from_counts(1.0, map(&[("a", 2.0)]), map(&[("a", 2.0)]), 0.5).unwrap();
        assert!(select_vt(&sym, 1.0001).is_empty());
    }

    #[test]
    fn vs_threshold_and_ratio() {
        let mut records = Vec::new();
        // a: 3 up, 1 down; b: 6 up, 2 down; c: 6 up, 6 down
        for i in 0..12 {
            let a = if i < 3 {
                (0.6, 0.4)
            } else if i < 4 {
                (0.4, 0.6)
            } else {
                (0.5, 0.5)
            };
            let b = if i < 6 {
                (0.6, 0.4)
            } else if i < 8 {
                (0.4, 0.6)
            } else {
                (0.5, 0.5)
            };
            let c = if i < 6 { (0.6, 0.4) } else { (0.4, 0.6) };
            records.push(task(
                &format!("t{i}"),
                &[("a", a.0, a.1), ("b", b.0, b.1), ("c", c.0, c.1)],
            ));
        }
        let kb = mine_kb(&records).unwrap();
        let (vs, r) = select_vs(&kb, 6, &set(&["a", "b", "c"]));
        assert_eq!(vs, set(&["b", "c"]));
        assert_eq!(r["b"], 0.75);
        assert_eq!(r["c"], 0.5);
        let (vs, _) = select_vs(&kb, 6, &set(&["a"]));
        assert!(vs.is_empty());
    }

    #[test]
    fn penalty_zero_at_anchors() {
        let x = VirtualCounts::from_maps(&map(&[("t", 3.0), ("s", 6.0)]), &map(&[("t", 1.0), ("s", 0.5)])).unwrap();
        let spec = PenaltySpec {
            v_t: set(&["t"]),
            v_s: set(&["s"]),
            ratio: map(&[("s", 0.75)]),
            anchors_t: [("t".to_string(), (3.0, 1.0))].into(),
            anchors_s: [("s".to_string(), (8.0, 2.0))].into(),
        };
        let (v, g) = penalty_value_and_grad(&x, &spec, 0.1);
        assert_eq!(v, 0.0);
        assert!(g.values().all(|&(a, b)| a == 0.0 && b == 0.0));
    }

    #[test]
    fn penalty_vt_arithmetic() {
        let x = VirtualCounts::from_maps(&map(&[("w", 5.0)]), &map(&[("w", 0.0)])).unwrap();
        let spec = PenaltySpec {
            v_t: set(&["w"]),
            anchors_t: [("w".to_string(), (3.0, 0.0))].into(),
            ..Default::default()
        };
        let (v, g) = penalty_value_and_grad(&x, &spec, 0.1);
        assert!((v - 0.2).abs() < 1e-15);
        assert!((g["w"].0 - 0.2).abs() < 1e-15);
        assert_eq!(g["w"].1, 0.0);
    }

    #[test]
    fn penalty_vs_pulls_toward_ratio_share() {
        let spec = PenaltySpec {
            v_s: set(&["w"]),
            ratio: map(&[("w", 0.75)]),
            anchors_s: [("w".to_string(), (8.0, 4.0))].into(),
            ..Default::default()
        };
        for xp in [0.0, 5.0, 6.0, 7.0, 20.0] {
            let x = VirtualCounts::from_maps(&map(&[("w", xp)]), &map(&[("w", 1.0)])).unwrap();
            let (_, g) = penalty_value_and_grad(&x, &spec, 0.1);
            // a descent step moves X⁺ toward 6 = 0.75·8 and leaves X⁻ at 0.25·4
            assert!((g["w"].0 - 0.1 * (xp - 6.0)).abs() < 1e-12);
            assert_eq!(g["w"].1, 0.0);
        }
    }

    #[test]
    fn overlapping_penalties_add() {
        let x = VirtualCounts::from_maps(&map(&[("w", 4.0)]), &map(&[("w", 4.0)])).unwrap();
        let spec = PenaltySpec {
            v_t: set(&["w"]),
            v_s: set(&["w"]),
            ratio: map(&[("w", 0.5)]),
            anchors_t: [("w".to_string(), (2.0, 0.0))].into(),
            anchors_s: [("w".to_string(), (4.0, 4.0))].into(),
        };
        let (v, g) = penalty_value_and_grad(&x, &spec, 1.0);
        // V_T: ½(4 + 16) = 10; V_S: ½(4 + 4) = 4
        assert!((v - 14.0).abs() < 1e-12);
        assert!((g["w"].0 - (2.0 + 2.0)).abs() < 1e-12);
        assert!((g["w"].1 - (4.0 + 2.0)).abs() < 1e-12);
        let idx = spec.indexed(&x);
        let e = idx.entry(0).unwrap();
        assert_eq!(e.grad(1.0, 4.0, 4.0), (4.0, 6.0));
    }
}
