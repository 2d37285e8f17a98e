//! Leave-one-domain-out evaluation of the naive Bayes baselines and the
//! knowledge-based learner, the past-domain ablation and report output.

mod metrics;
mod report;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{balance, make_folds, Document, DomainDataset, FoldAssignment, Polarity};
use crate::error::{LscError, Result};
use crate::knowledge::{mine_kb, record_task, KnowledgeBase, TaskRecord};
use crate::nb::{train_nb, NbModel};
use crate::optimizer::{sgd_train, LscConfig};

pub use metrics::{accuracy, f1_negative, f1_positive, f1_score, Metric, Metrics};
pub use report::{AblationPoint, DomainResult, EvalReport, ReportFormat, SystemResult, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Natural,
    Balanced,
}

impl Setting {
    /// Metric the setting is judged by.
    pub fn headline(&self) -> Metric {
        match self {
            Setting::Natural => Metric::F1Negative,
            Setting::Balanced => Metric::Accuracy,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Setting::Natural => "natural",
            Setting::Balanced => "balanced",
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = LscError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" => Ok(Setting::Natural),
            "balanced" => Ok(Setting::Balanced),
            _ => Err(LscError::Parse(format!("unknown setting {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum System {
    #[serde(rename = "NB-T")]
    NbT,
    #[serde(rename = "NB-S")]
    NbS,
    #[serde(rename = "NB-ST")]
    NbSt,
    #[serde(rename = "LSC")]
    Lsc,
}

impl System {
    pub const ALL: [System; 4] = [System::NbT, System::NbS, System::NbSt, System::Lsc];

    pub fn as_str(&self) -> &'static str {
        match self {
            System::NbT => "NB-T",
            System::NbS => "NB-S",
            System::NbSt => "NB-ST",
            System::Lsc => "LSC",
        }
    }
}

impl std::str::FromStr for System {
    type Err = LscError;
    fn from_str(s: &str) -> Result<Self> {
        System::ALL
            .into_iter()
            .find(|sys| sys.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| LscError::Parse(format!("unknown system {s:?}")))
    }
}

/// One target domain evaluated against a list of past domains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolRun {
    pub target_domain: String,
    pub past_domains: Vec<String>,
    pub setting: Setting,
    pub folds: usize,
    pub seed: u64,
    pub config: LscConfig,
}

impl ProtocolRun {
    pub fn validate(&self) -> Result<()> {
        if self.past_domains.contains(&self.target_domain) {
            return Err(LscError::InvalidArgument(format!(
                "target {} is also a past domain",
                self.target_domain
            )));
        }
        let unique: BTreeSet<&String> = self.past_domains.iter().collect();
        if unique.len() != self.past_domains.len() {
            return Err(LscError::InvalidArgument("duplicate past domain".into()));
        }
        self.config.validate()
    }
}

/// Class-word counts and document counts of a set of documents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassCounts {
    pub pos: BTreeMap<String, f64>,
    pub neg: BTreeMap<String, f64>,
    pub docs_pos: usize,
    pub docs_neg: usize,
}

impl ClassCounts {
    pub fn from_docs<'a, I: IntoIterator<Item = &'a Document>>(docs: I) -> Self {
        let mut c = ClassCounts::default();
        for d in docs {
            c.add_doc(d);
        }
        c
    }

    pub fn add_doc(&mut self, d: &Document) {
        let (target, other) = match d.label {
            Polarity::Positive => {
                self.docs_pos += 1;
                (&mut self.pos, &mut self.neg)
            }
            Polarity::Negative => {
                self.docs_neg += 1;
                (&mut self.neg, &mut self.pos)
            }
        };
        for (w, &n) in &d.counts {
            *target.entry(w.clone()).or_insert(0.0) += f64::from(n);
            other.entry(w.clone()).or_insert(0.0);
        }
    }

    pub fn merge(&mut self, other: &ClassCounts) {
        for (w, n) in &other.pos {
            *self.pos.entry(w.clone()).or_insert(0.0) += n;
        }
        for (w, n) in &other.neg {
            *self.neg.entry(w.clone()).or_insert(0.0) += n;
        }
        self.docs_pos += other.docs_pos;
        self.docs_neg += other.docs_neg;
    }

    /// Naive Bayes model over exactly the words seen in these documents.
    pub fn model(&self, lambda: f64) -> Result<NbModel> {
        if self.docs_pos == 0 {
            return Err(LscError::EmptyClass(Polarity::Positive));
        }
        if self.docs_neg == 0 {
            return Err(LscError::EmptyClass(Polarity::Negative));
        }
        let prior = self.docs_pos as f64 / (self.docs_pos + self.docs_neg) as f64;
        NbModel::from_counts(lambda, self.pos.clone(), self.neg.clone(), prior)
    }
}

/// Domains of one setting with the per-domain quantities every run reuses.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    setting: Setting,
    lambda: f64,
    domains: Vec<DomainDataset>,
    counts: Vec<ClassCounts>,
    records: Vec<TaskRecord>,
    index: BTreeMap<String, usize>,
}

/// Documents per class in a balanced domain.
pub const BALANCED_PER_CLASS: usize = 100;

impl PreparedCorpus {
    /// In the balanced setting each domain is subsampled to
    /// `min(per_class, minority class size)` documents of each class.
    pub fn new(
        domains: Vec<DomainDataset>,
        setting: Setting,
        per_class: usize,
        seed: u64,
        lambda: f64,
    ) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, d) in domains.iter().enumerate() {
            if index.insert(d.name().to_string(), i).is_some() {
                return Err(LscError::InvalidArgument(format!("duplicate domain {}", d.name())));
            }
        }
        let domains: Vec<DomainDataset> = match setting {
            Setting::Natural => domains,
            Setting::Balanced => domains
                .iter()
                .map(|d| {
                    let n = per_class
                        .min(d.class_count(Polarity::Positive))
                        .min(d.class_count(Polarity::Negative));
                    balance(d, n, seed)
                })
                .collect::<Result<_>>()?,
        };
        let counts: Vec<ClassCounts> = domains.iter().map(|d| ClassCounts::from_docs(d.documents())).collect();
        let records = domains
            .iter()
            .map(|d| {
                let model = train_nb(d.documents(), lambda, d.vocabulary())?;
                Ok(record_task(&model, d.name()))
            })
            .collect::<Result<_>>()?;
        Ok(PreparedCorpus {
            setting,
            lambda,
            domains,
            counts,
            records,
            index,
        })
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn domains(&self) -> &[DomainDataset] {
        &self.domains
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.domains.iter().map(|d| d.name())
    }

    fn position(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| LscError::UnknownDomain(name.to_string()))
    }

    pub fn domain(&self, name: &str) -> Result<&DomainDataset> {
        Ok(&self.domains[self.position(name)?])
    }

    pub fn record(&self, name: &str) -> Result<&TaskRecord> {
        Ok(&self.records[self.position(name)?])
    }

    /// Knowledge base mined from the named domains' task records.
    pub fn knowledge(&self, names: &[String]) -> Result<KnowledgeBase> {
        let records: Vec<TaskRecord> = names.iter().map(|n| self.record(n).cloned()).collect::<Result<_>>()?;
        mine_kb(&records)
    }

    fn past_counts(&self, names: &[String]) -> Result<ClassCounts> {
        let mut c = ClassCounts::default();
        for n in names {
            c.merge(&self.counts[self.position(n)?]);
        }
        Ok(c)
    }

    /// A run of `target` against every other domain in corpus order.
    pub fn leave_one_out(&self, target: &str, folds: usize, seed: u64, config: &LscConfig) -> Result<ProtocolRun> {
        self.position(target)?;
        Ok(ProtocolRun {
            target_domain: target.to_string(),
            past_domains: self.names().filter(|n| *n != target).map(str::to_string).collect(),
            setting: self.setting,
            folds,
            seed,
            config: config.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prediction {
    pub id: String,
    pub gold: Polarity,
    pub predicted: Polarity,
}

/// Test-split predictions of every fold, in fold order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPredictions {
    pub folds: Vec<Vec<Prediction>>,
}

impl FoldPredictions {
    /// Metrics over all folds' predictions pooled together.
    pub fn metrics(&self) -> Result<Metrics> {
        let (pred, gold): (Vec<Polarity>, Vec<Polarity>) =
            self.folds.iter().flatten().map(|p| (p.predicted, p.gold)).unzip();
        Metrics::compute(&pred, &gold)
    }

    pub fn len(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn checked_run<'a>(run: &ProtocolRun, corpus: &'a PreparedCorpus) -> Result<(&'a DomainDataset, FoldAssignment)> {
    run.validate()?;
    if run.setting != corpus.setting {
        return Err(LscError::InvalidArgument(format!(
            "run is for the {} setting but the corpus was prepared for {}",
            run.setting.as_str(),
            corpus.setting.as_str()
        )));
    }
    if run.config.lambda != corpus.lambda {
        return Err(LscError::InvalidArgument(
            "run and corpus use different smoothing".into(),
        ));
    }
    for p in &run.past_domains {
        corpus.position(p)?;
    }
    let target = corpus.domain(&run.target_domain)?;
    let folds = make_folds(target, run.folds, run.seed)?;
    Ok((target, folds))
}

fn predict_all(test: &[&Document], f: impl Fn(&Document) -> Polarity) -> Vec<Prediction> {
    test.iter()
        .map(|d| Prediction {
            id: d.id.clone(),
            gold: d.label,
            predicted: f(d),
        })
        .collect()
}

fn in_fold<T>(run: &ProtocolRun, fold: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| LscError::InFold {
        domain: run.target_domain.clone(),
        fold,
        source: Box::new(e),
    })
}

/// Runs one of the naive Bayes baselines. LSC is rejected here; use
/// [`run_lsc`].
pub fn run_baseline(kind: System, run: &ProtocolRun, corpus: &PreparedCorpus) -> Result<FoldPredictions> {
    let (target, folds) = checked_run(run, corpus)?;
    let lambda = run.config.lambda;
    let past = corpus.past_counts(&run.past_domains)?;
    let source_model = match kind {
        System::NbS => {
            if run.past_domains.is_empty() {
                return Err(LscError::InvalidArgument("NB-S needs at least one past domain".into()));
            }
            Some(past.model(lambda)?)
        }
        System::Lsc => return Err(LscError::InvalidArgument("LSC is not a baseline".into())),
        _ => None,
    };
    let mut out = Vec::with_capacity(run.folds);
    for fold in 0..run.folds {
        let (train, test) = folds.split(target, fold);
        let model = match kind {
            System::NbT => {
                let tc = ClassCounts::from_docs(train.iter().copied());
                in_fold(run, fold, tc.model(lambda))?
            }
            System::NbSt => {
                let mut merged = past.clone();
                merged.merge(&ClassCounts::from_docs(train.iter().copied()));
                in_fold(run, fold, merged.model(lambda))?
            }
            _ => source_model.clone().expect("set above"),
        };
        out.push(predict_all(&test, |d| model.predict(d)));
    }
    Ok(FoldPredictions { folds: out })
}

/// Optimizer outcome of one (domain, fold).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldTraining {
    pub domain: String,
    pub fold: usize,
    pub epochs: usize,
    pub converged: bool,
    pub initial_objective: f64,
    pub final_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LscRun {
    pub predictions: FoldPredictions,
    pub training: Vec<FoldTraining>,
}

/// Knowledge base from the past domains' full data, then per fold:
/// optimize on the training split and classify the test split.
pub fn run_lsc(run: &ProtocolRun, corpus: &PreparedCorpus) -> Result<LscRun> {
    if run.past_domains.is_empty() {
        return Err(LscError::InvalidArgument("LSC needs at least one past domain".into()));
    }
    let (target, folds) = checked_run(run, corpus)?;
    let kb = corpus.knowledge(&run.past_domains)?;
    let mut predictions = Vec::with_capacity(run.folds);
    let mut training = Vec::with_capacity(run.folds);
    for fold in 0..run.folds {
        let (train, test) = folds.split(target, fold);
        let model = in_fold(run, fold, sgd_train(&train, &kb, &run.config))?;
        predictions.push(predict_all(&test, |d| model.classify(d)));
        training.push(FoldTraining {
            domain: run.target_domain.clone(),
            fold,
            epochs: model.epochs,
            converged: model.converged,
            initial_objective: model.initial_objective(),
            final_objective: model.final_objective(),
        });
    }
    Ok(LscRun {
        predictions: FoldPredictions { folds: predictions },
        training,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOptions {
    pub folds: usize,
    pub seed: u64,
    pub systems: Vec<System>,
    pub config: LscConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            folds: 5,
            seed: 0,
            systems: System::ALL.to_vec(),
            config: LscConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub training: Vec<FoldTraining>,
}

/// Every domain in turn as the target, all others as past domains.
/// Domains are evaluated in parallel; results keep corpus order.
pub fn evaluate(corpus: &PreparedCorpus, options: &EvalOptions) -> Result<EvalOutcome> {
    let mut systems = options.systems.clone();
    systems.sort();
    systems.dedup();
    if systems.is_empty() {
        return Err(LscError::InvalidArgument("no systems selected".into()));
    }
    let per_domain: Vec<(DomainResult, Vec<FoldTraining>)> = corpus
        .domains
        .par_iter()
        .map(|d| {
            let run = corpus.leave_one_out(d.name(), options.folds, options.seed, &options.config)?;
            let mut results = Vec::with_capacity(systems.len());
            let mut training = Vec::new();
            for &s in &systems {
                let preds = match s {
                    System::Lsc => {
                        let r = run_lsc(&run, corpus)?;
                        training = r.training;
                        r.predictions
                    }
                    _ => run_baseline(s, &run, corpus)?,
                };
                results.push(SystemResult {
                    system: s,
                    metrics: preds.metrics()?,
                });
            }
            Ok((
                DomainResult {
                    domain: d.name().to_string(),
                    results,
                },
                training,
            ))
        })
        .collect::<Result<_>>()?;
    let (domains, training): (Vec<DomainResult>, Vec<Vec<FoldTraining>>) = per_domain.into_iter().unzip();
    Ok(EvalOutcome {
        report: EvalReport::new(corpus.setting, &systems, domains, Vec::new()),
        training: training.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationOptions {
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    pub folds: usize,
    pub seed: u64,
    pub config: LscConfig,
    /// Defaults to the setting's headline metric.
    pub metric: Option<Metric>,
}

impl Default for AblationOptions {
    fn default() -> Self {
        AblationOptions {
            sizes: vec![0, 1, 3, 5, 10, 15, 19],
            repetitions: 5,
            folds: 5,
            seed: 0,
            config: LscConfig::default(),
            metric: None,
        }
    }
}

/// Seeded draw of `size` past domains for `target`, in corpus order.
fn past_subset(others: &[String], size: usize, seed: u64, target: usize, rep: usize) -> Vec<String> {
    let stream = seed ^ ((target as u64) << 40) ^ ((size as u64) << 20) ^ rep as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let mut picked = index::sample(&mut rng, others.len(), size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| others[i].clone()).collect()
}

/// Metric of the knowledge-based learner as a function of the number of
/// past domains, averaged over target domains and then over repeated
/// subset draws. Size 0 is the NB-T point. A size that equals the number
/// of available past domains has a single possible subset and is run once.
pub fn ablation_past_domains(corpus: &PreparedCorpus, options: &AblationOptions) -> Result<Vec<AblationPoint>> {
    let available = corpus.domains.len().saturating_sub(1);
    if let Some(&s) = options.sizes.iter().find(|&&s| s > available) {
        return Err(LscError::InvalidArgument(format!(
            "{s} past domains requested but only {available} are available"
        )));
    }
    if options.repetitions == 0 {
        return Err(LscError::InvalidArgument("at least one repetition is needed".into()));
    }
    let metric = options.metric.unwrap_or(corpus.setting.headline());
    let names: Vec<String> = corpus.names().map(str::to_string).collect();

    options
        .sizes
        .iter()
        .map(|&size| {
            let reps = if size == 0 || size == available {
                1
            } else {
                options.repetitions
            };
            let per_domain: Vec<f64> = names
                .par_iter()
                .enumerate()
                .map(|(t, target)| {
                    let others: Vec<String> = names.iter().filter(|n| *n != target).cloned().collect();
                    let mut total = 0.0;
                    for rep in 0..reps {
                        let run = ProtocolRun {
                            target_domain: target.clone(),
                            past_domains: past_subset(&others, size, options.seed, t, rep),
                            setting: corpus.setting,
                            folds: options.folds,
                            seed: options.seed,
                            config: options.config.clone(),
                        };
                        let preds = if size == 0 {
                            run_baseline(System::NbT, &run, corpus)?
                        } else {
                            run_lsc(&run, corpus)?.predictions
                        };
                        total += preds.metrics()?.get(metric);
                    }
                    Ok(total / reps as f64)
                })
                .collect::<Result<_>>()?;
            Ok(AblationPoint {
                past_domains: size,
                metric,
                value: per_domain.iter().sum::<f64>() / per_domain.len() as f64,
            })
        })
        .collect()
}
