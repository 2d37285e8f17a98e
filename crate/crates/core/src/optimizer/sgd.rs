use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradient::{correct_minus_wrong, doc_partials, index_doc, margin, Context, IndexedDoc};
use super::{
    init_virtual_counts, select_vs, select_vt, LengthMode, LscConfig, PenaltySpec, StepLoss, VirtualCounts,
    VocabularyScope,
};
use crate::corpus::{vocabulary_of, Document, Polarity};
use crate::error::{LscError, Result};
use crate::flatfile;
use crate::knowledge::KnowledgeBase;
use crate::math::normalize_pair;
use crate::nb::{argmax, log_scores, read_count_rows, train_nb};

const MAGIC: &str = "lsc-virtual";
const VERSION: u32 = 1;

/// Result of [`sgd_train`].
#[derive(Debug, Clone, PartialEq)]
pub struct LscModel {
    pub counts: VirtualCounts,
    pub priors: (f64, f64),
    pub config: LscConfig,
    pub epochs: usize,
    pub converged: bool,
    /// Training objective at the start and after every epoch.
    pub trace: Vec<f64>,
    pub vt_size: usize,
    pub vs_size: usize,
}

/// Naive Bayes decision with virtual counts in place of empirical ones.
pub fn classify(x: &VirtualCounts, priors: (f64, f64), doc: &Document, lambda: f64) -> Polarity {
    let (a, b) = score(x, priors, doc, lambda);
    argmax(a, b)
}

fn score(x: &VirtualCounts, priors: (f64, f64), doc: &Document, lambda: f64) -> (f64, f64) {
    let terms = doc
        .counts
        .iter()
        .filter_map(|(w, &n)| x.get(w).map(|(p, q)| (f64::from(n), p, q)));
    log_scores(priors, lambda, x.len(), x.totals(), terms)
}

impl LscModel {
    pub fn classify(&self, doc: &Document) -> Polarity {
        classify(&self.counts, self.priors, doc, self.config.lambda)
    }

    pub fn posterior(&self, doc: &Document) -> (f64, f64) {
        let (a, b) = score(&self.counts, self.priors, doc, self.config.lambda);
        normalize_pair(a, b)
    }

    pub fn initial_objective(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_objective(&self) -> f64 {
        *self.trace.last().expect("trace starts with the initial objective")
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let c = &self.config;
        let header = [
            ("sigma", c.sigma.to_string()),
            ("tau", c.tau.to_string()),
            ("alpha", c.alpha.to_string()),
            ("gamma", c.learn_rate.to_string()),
            ("lambda", c.lambda.to_string()),
            ("epsilon", c.epsilon.to_string()),
            ("max_epochs", c.max_epochs.to_string()),
            ("length_mode", c.length_mode.as_str().to_string()),
            ("step_loss", c.step_loss.as_str().to_string()),
            ("vocabulary", c.vocabulary.as_str().to_string()),
            ("epochs", self.epochs.to_string()),
            ("converged", self.converged.to_string()),
            ("prior_pos", self.priors.0.to_string()),
            ("prior_neg", self.priors.1.to_string()),
            ("vocab_size", self.counts.len().to_string()),
        ];
        let rows = self
            .counts
            .iter()
            .map(|(w, p, n)| vec![w.to_string(), p.to_string(), n.to_string()]);
        flatfile::write(w, MAGIC, VERSION, &header, rows)
    }

    /// Reads a model written by [`LscModel::write_to`]. The objective trace
    /// is not stored and comes back empty apart from a NaN placeholder.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let file = flatfile::read(r, MAGIC, VERSION, 3)?;
        let (lambda, pos, neg, size) = read_count_rows(&file)?;
        if pos.len() != size {
            return Err(LscError::Parse(format!("vocab_size {size} but {} rows", pos.len())));
        }
        let config = LscConfig {
            sigma: file.parse("sigma")?,
            tau: file.parse("tau")?,
            alpha: file.parse("alpha")?,
            learn_rate: file.parse("gamma")?,
            lambda,
            epsilon: file.parse("epsilon")?,
            max_epochs: file.parse("max_epochs")?,
            length_mode: file.parse("length_mode")?,
            step_loss: file.parse("step_loss")?,
            vocabulary: file.parse("vocabulary")?,
            shuffle_seed: None,
        };
        Ok(LscModel {
            counts: VirtualCounts::from_maps(&pos, &neg)?,
            priors: (file.parse("prior_pos")?, file.parse("prior_neg")?),
            config,
            epochs: file.parse("epochs")?,
            converged: file.parse("converged")?,
            trace: vec![f64::NAN],
            vt_size: 0,
            vs_size: 0,
        })
    }
}

/// Subtracts `shift` from every entry, clamps at zero and returns the sum.
#[inline]
fn shift_and_clamp(xs: &mut [f64], shift: f64) -> f64 {
    let mut sum = 0.0;
    for v in xs.iter_mut() {
        *v = (*v - shift).max(0.0);
        sum += *v;
    }
    sum
}

fn training_objective(x: &VirtualCounts, docs: &[IndexedDoc], ctx: &Context) -> f64 {
    let totals = x.totals();
    docs.iter()
        .map(|d| correct_minus_wrong(margin(&x.x_pos, &x.x_neg, totals, ctx, d)))
        .sum()
}

/// Optimizes virtual counts for `target_train` starting from target plus
/// knowledge-base counts.
///
/// Each epoch takes one step per document on that document's loss plus the
/// penalty gradient of the anchored words it contains, then one penalty
/// step over all anchored words. Counts are clamped at zero after every
/// step. Training stops when the objective changes by less than
/// `epsilon` between epochs or after `max_epochs`; it fails if the
/// objective stays more than 10% below its starting value for three epochs
/// in a row.
pub fn sgd_train(target_train: &[&Document], kb: &KnowledgeBase, config: &LscConfig) -> Result<LscModel> {
    config.validate()?;
    if target_train.is_empty() {
        return Err(LscError::InvalidArgument("no target training documents".into()));
    }
    let target_vocab = vocabulary_of(target_train.iter().copied());
    let target_nb = train_nb(target_train.iter().copied(), config.lambda, &target_vocab)?;
    let priors = target_nb.priors();
    let n_pos = target_nb.counts(Polarity::Positive);
    let n_neg = target_nb.counts(Polarity::Negative);

    let vocab: BTreeSet<String> = match config.vocabulary {
        VocabularyScope::Target => target_vocab,
        VocabularyScope::TargetAndKnowledge => {
            let mut v = target_vocab;
            v.extend(kb.words().map(|(w, _)| w.to_string()));
            v
        }
    };
    let mut x = init_virtual_counts(n_pos, n_neg, kb, &vocab);
    let spec = PenaltySpec::build(
        select_vt(&target_nb, config.sigma),
        select_vs(kb, config.tau, &vocab),
        n_pos,
        n_neg,
        &x,
    );
    let penalty = spec.indexed(&x);

    let docs: Vec<IndexedDoc> = target_train
        .iter()
        .map(|d| index_doc(&x, d, config.length_mode))
        .collect();
    let ctx = Context::new(config.lambda, x.len(), priors);
    let (gamma, alpha) = (config.learn_rate, config.alpha);

    let initial = training_objective(&x, &docs, &ctx);
    let mut trace = vec![initial];
    let mut converged = false;
    let mut epochs = 0;
    let mut below = 0;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut rng = config.shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut partials = Vec::new();

    while epochs < config.max_epochs {
        epochs += 1;
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let mut totals = x.totals();
        for &di in &order {
            let doc = &docs[di];
            let shared = doc_partials(&x.x_pos, &x.x_neg, totals, &ctx, doc, config.step_loss, &mut partials);
            for &(i, mut gp, mut gn) in &partials {
                if let Some(e) = penalty.entry(i) {
                    let (pp, pn) = e.grad(alpha, x.x_pos[i], x.x_neg[i]);
                    gp += pp;
                    gn += pn;
                }
                if !(gp.is_finite() && gn.is_finite()) {
                    return Err(LscError::NonFinite {
                        word: x.word(i).to_string(),
                        doc_id: doc.id.to_string(),
                    });
                }
                x.x_pos[i] -= gamma * gp;
                x.x_neg[i] -= gamma * gn;
            }
            totals = (
                shift_and_clamp(&mut x.x_pos, gamma * shared.0),
                shift_and_clamp(&mut x.x_neg, gamma * shared.1),
            );
        }
        for e in &penalty.entries {
            let i = e.index;
            let (gp, gn) = e.grad(alpha, x.x_pos[i], x.x_neg[i]);
            x.x_pos[i] = (x.x_pos[i] - gamma * gp).max(0.0);
            x.x_neg[i] = (x.x_neg[i] - gamma * gn).max(0.0);
        }

        let value = training_objective(&x, &docs, &ctx);
        let previous = *trace.last().expect("nonempty");
        trace.push(value);
        if (value - previous).abs() < config.epsilon {
            converged = true;
            break;
        }
        if value < initial - 0.1 * initial.abs() {
            below += 1;
            if below >= 3 {
                return Err(LscError::Diverged { trace });
            }
        } else {
            below = 0;
        }
    }

    Ok(LscModel {
        counts: x,
        priors,
        config: config.clone(),
        epochs,
        converged,
        trace,
        vt_size: spec.v_t.len(),
        vs_size: spec.v_s.len(),
    })
}

macro_rules! str_enum {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $(Self::$variant => $name),+ }
            }
        }

        impl std::str::FromStr for $ty {
            type Err = LscError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(LscError::Parse(format!(
                        "unknown {} {other:?}", stringify!($ty)
                    ))),
                }
            }
        }
    };
}

str_enum!(LengthMode { TotalTokens => "total-tokens", DistinctWords => "distinct-words" });
str_enum!(StepLoss { LogLikelihood => "log-likelihood", Margin => "margin" });
str_enum!(VocabularyScope { Target => "target", TargetAndKnowledge => "target-and-knowledge" });
