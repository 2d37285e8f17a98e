//! Central finite-difference check of the analytic document and penalty
//! gradients on randomized small instances.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{doc_loss, grad_doc, penalty_value_and_grad, LengthMode, LscConfig, PenaltySpec, StepLoss, VirtualCounts};
use crate::corpus::{Document, Polarity};

#[derive(Debug, Clone)]
pub struct GradcheckConfig {
    pub instances: usize,
    pub seed: u64,
    pub max_vocab: usize,
    pub max_doc_len: usize,
    pub max_count: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            instances: 1000,
            seed: 7,
            max_vocab: 10,
            max_doc_len: 8,
            max_count: 20.0,
            rel_tol: 1e-5,
            abs_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckFailure {
    pub instance: usize,
    pub term: &'static str,
    pub word: String,
    pub class: Polarity,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GradcheckReport {
    pub instances: usize,
    pub partials: usize,
    pub positive_docs: usize,
    pub negative_docs: usize,
    pub with_penalties: usize,
    /// Largest `|analytic − numeric| / max(abs_tol, rel_tol·scale)`; at most
    /// 1 when every partial passes.
    pub worst_ratio: f64,
    pub failures: Vec<GradcheckFailure>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Instance {
    x: VirtualCounts,
    doc: Document,
    priors: (f64, f64),
    config: LscConfig,
    penalty: Option<(PenaltySpec, f64)>,
}

fn random_instance(rng: &mut ChaCha8Rng, cfg: &GradcheckConfig, with_penalty: bool) -> Instance {
    let v = rng.gen_range(1..=cfg.max_vocab);
    let words: Vec<String> = (0..v).map(|i| format!("w{i}")).collect();
    let vocab: BTreeSet<String> = words.iter().cloned().collect();
    let x = VirtualCounts::from_fn(&vocab, |_| {
        (rng.gen_range(0.0..=cfg.max_count), rng.gen_range(0.0..=cfg.max_count))
    });
    let len = rng.gen_range(0..=cfg.max_doc_len);
    let label = if rng.gen_bool(0.5) {
        Polarity::Positive
    } else {
        Polarity::Negative
    };
    let tokens: Vec<String> = (0..len).map(|_| words.choose(rng).unwrap().clone()).collect();
    let doc = Document::from_tokens("gradcheck", tokens, label);
    let config = LscConfig {
        lambda: if rng.gen_bool(0.5) {
            1.0
        } else {
            rng.gen_range(0.1..1.0)
        },
        length_mode: if rng.gen_bool(0.5) {
            LengthMode::TotalTokens
        } else {
            LengthMode::DistinctWords
        },
        step_loss: if rng.gen_bool(0.5) {
            StepLoss::LogLikelihood
        } else {
            StepLoss::Margin
        },
        ..LscConfig::default()
    };
    let p = rng.gen_range(0.05..0.95);

    let penalty = with_penalty.then(|| {
        let mut spec = PenaltySpec::default();
        for w in &words {
            if rng.gen_bool(0.5) {
                spec.v_t.insert(w.clone());
                spec.anchors_t.insert(
                    w.clone(),
                    (rng.gen_range(0.0..=cfg.max_count), rng.gen_range(0.0..=cfg.max_count)),
                );
            }
            if rng.gen_bool(0.5) {
                spec.v_s.insert(w.clone());
                spec.ratio.insert(w.clone(), rng.gen_range(0.0..=1.0));
                spec.anchors_s.insert(
                    w.clone(),
                    (rng.gen_range(0.0..=cfg.max_count), rng.gen_range(0.0..=cfg.max_count)),
                );
            }
        }
        (spec, rng.gen_range(0.01..=1.0))
    });

    Instance {
        x,
        doc,
        priors: (p, 1.0 - p),
        config,
        penalty,
    }
}

fn perturbed(x: &VirtualCounts, i: usize, c: Polarity, delta: f64) -> VirtualCounts {
    let mut y = x.clone();
    y.class_mut(c)[i] += delta;
    y
}

fn central_difference(x: &VirtualCounts, i: usize, c: Polarity, f: impl Fn(&VirtualCounts) -> f64) -> f64 {
    let h = 1e-5 * x.class(c)[i].abs().max(1.0);
    (f(&perturbed(x, i, c, h)) - f(&perturbed(x, i, c, -h))) / (2.0 * h)
}

/// Penalty restricted to one word, so the finite difference only sees
/// that word's terms.
fn word_penalty(spec: &PenaltySpec, w: &str) -> PenaltySpec {
    let only = |s: &BTreeSet<String>| s.iter().filter(|v| *v == w).cloned().collect();
    let pick = |m: &BTreeMap<String, (f64, f64)>| {
        m.iter()
            .filter(|(v, _)| *v == w)
            .map(|(k, v)| (k.clone(), *v))
            .collect()
    };
    PenaltySpec {
        v_t: only(&spec.v_t),
        v_s: only(&spec.v_s),
        ratio: spec
            .ratio
            .iter()
            .filter(|(v, _)| *v == w)
            .map(|(k, v)| (k.clone(), *v))
            .collect(),
        anchors_t: pick(&spec.anchors_t),
        anchors_s: pick(&spec.anchors_s),
    }
}

pub fn run_gradcheck(cfg: &GradcheckConfig) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradcheckReport {
        instances: cfg.instances,
        ..Default::default()
    };
    let check = |report: &mut GradcheckReport, instance, term, word: &str, class, analytic: f64, numeric: f64| {
        report.partials += 1;
        let scale = analytic.abs().max(numeric.abs());
        let ratio = (analytic - numeric).abs() / (cfg.rel_tol * scale).max(cfg.abs_tol);
        report.worst_ratio = report.worst_ratio.max(ratio);
        if !(ratio <= 1.0) {
            report.failures.push(GradcheckFailure {
                instance,
                term,
                word: word.to_string(),
                class,
                analytic,
                numeric,
            });
        }
    };

    for n in 0..cfg.instances {
        let inst = random_instance(&mut rng, cfg, n % 2 == 1);
        match inst.doc.label {
            Polarity::Positive => report.positive_docs += 1,
            Polarity::Negative => report.negative_docs += 1,
        }
        let grad = match grad_doc(&inst.x, &inst.doc, inst.priors, &inst.config) {
            Ok(g) => g,
            Err(e) => {
                report.failures.push(GradcheckFailure {
                    instance: n,
                    term: "document",
                    word: e.to_string(),
                    class: inst.doc.label,
                    analytic: f64::NAN,
                    numeric: f64::NAN,
                });
                continue;
            }
        };
        let loss = |y: &VirtualCounts| doc_loss(y, &inst.doc, inst.priors, &inst.config);
        for i in 0..inst.x.len() {
            let (gp, gn) = grad.partial(i);
            for (c, a) in [(Polarity::Positive, gp), (Polarity::Negative, gn)] {
                let fd = central_difference(&inst.x, i, c, loss);
                check(&mut report, n, "document", inst.x.word(i), c, a, fd);
            }
        }

        let Some((spec, alpha)) = &inst.penalty else { continue };
        report.with_penalties += 1;
        let (_, pgrad) = penalty_value_and_grad(&inst.x, spec, *alpha);
        for (w, &(gp, gn)) in &pgrad {
            let local = word_penalty(spec, w);
            let value = |y: &VirtualCounts| penalty_value_and_grad(y, &local, *alpha).0;
            let i = inst.x.index_of(w).expect("penalty words come from the vocabulary");
            for (c, a) in [(Polarity::Positive, gp), (Polarity::Negative, gn)] {
                let fd = central_difference(&inst.x, i, c, value);
                check(&mut report, n, "penalty", w, c, a, fd);
            }
        }
    }
    report
}
