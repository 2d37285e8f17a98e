//! Synthetic multi-domain review corpus with a shared sentiment lexicon,
//! per-domain polarity flips and words that are too rare in a domain to be
//! seen in its training folds.

use std::collections::BTreeSet;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, write_jsonl, Document, DomainDataset, Polarity, ReviewRecord};
use crate::error::{LscError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub domains: usize,
    pub docs_per_domain: usize,
    /// Shared sentiment words; the first half is positive.
    pub lexicon_size: usize,
    /// Fraction of the lexicon whose polarity is reversed in each domain.
    pub flip_fraction: f64,
    /// Sampling weight of a domain's flipped words relative to the rest.
    pub flip_weight: f64,
    /// Fraction of the lexicon that occurs in only `rare_docs` documents of
    /// a domain, so it is mostly absent from that domain's training folds.
    pub mismatch_fraction: f64,
    pub rare_docs: usize,
    /// Range of the negative-document share; equal bounds of 0.5 give a
    /// balanced corpus.
    pub negative_share: (f64, f64),
    pub sentiment_tokens: (usize, usize),
    pub neutral_tokens: (usize, usize),
    /// Probability that a sentiment token is drawn from the opposite class.
    pub noise: f64,
    pub shared_neutral: usize,
    pub domain_neutral: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            domains: 20,
            docs_per_domain: 200,
            lexicon_size: 50,
            flip_fraction: 0.1,
            flip_weight: 0.25,
            mismatch_fraction: 0.3,
            rare_docs: 1,
            negative_share: (0.10, 0.31),
            sentiment_tokens: (1, 3),
            neutral_tokens: (3, 8),
            noise: 0.2,
            shared_neutral: 0,
            domain_neutral: 100,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn balanced(self) -> Self {
        SynthConfig {
            negative_share: (0.5, 0.5),
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LscError::InvalidArgument(m.into()));
        if self.domains == 0 || self.docs_per_domain < 2 {
            return bad("need at least one domain of two documents");
        }
        if self.lexicon_size < 2 || !self.lexicon_size.is_multiple_of(2) {
            return bad("lexicon size must be even and at least 2");
        }
        let (lo, hi) = self.negative_share;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return bad("negative share must satisfy 0 < lo <= hi < 1");
        }
        if !(0.0..=1.0).contains(&self.flip_fraction)
            || !(0.0..=1.0).contains(&self.mismatch_fraction)
            || !(0.0..=1.0).contains(&self.noise)
            || self.flip_fraction + self.mismatch_fraction > 1.0
        {
            return bad("fractions must lie in [0, 1] and flip + mismatch <= 1");
        }
        if !(self.flip_weight > 0.0) {
            return bad("flip weight must be positive");
        }
        if self.sentiment_tokens.0 > self.sentiment_tokens.1 || self.neutral_tokens.0 > self.neutral_tokens.1 {
            return bad("token ranges must be ordered");
        }
        if self.sentiment_tokens.1 == 0 || self.shared_neutral + self.domain_neutral == 0 && self.neutral_tokens.1 > 0 {
            return bad("documents need sentiment tokens and a neutral pool");
        }
        Ok(())
    }
}

pub fn lexicon_word(i: usize) -> String {
    format!("lex{i:02}")
}

/// Global polarity of lexicon word `i`.
pub fn lexicon_polarity(i: usize, lexicon_size: usize) -> Polarity {
    if i < lexicon_size / 2 {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

/// What the generator did in one domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DomainPlan {
    pub name: String,
    pub flipped: BTreeSet<String>,
    pub rare: BTreeSet<String>,
    pub negatives: usize,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub plans: Vec<DomainPlan>,
    pub records: Vec<Vec<ReviewRecord>>,
}

impl SynthCorpus {
    /// Tokenizes the generated texts into datasets.
    pub fn datasets(&self) -> Vec<DomainDataset> {
        self.plans
            .iter()
            .zip(&self.records)
            .map(|(plan, recs)| {
                let docs = recs
                    .iter()
                    .map(|r| {
                        let label = r.polarity().ok().flatten().expect("generated records carry ratings");
                        Document::from_tokens(r.id.clone().expect("generated ids"), tokenize(&r.text), label)
                    })
                    .collect();
                DomainDataset::new(plan.name.clone(), docs)
            })
            .collect()
    }

    /// Writes one `<domain>.jsonl` file per domain into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| LscError::io(dir, e))?;
        for (plan, recs) in self.plans.iter().zip(&self.records) {
            write_jsonl(dir.join(format!("{}.jsonl", plan.name)), recs)?;
        }
        Ok(())
    }
}

fn pick<R: Rng>(rng: &mut R, range: (usize, usize)) -> usize {
    rng.gen_range(range.0..=range.1)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let l = cfg.lexicon_size;
    let n_flip = (cfg.flip_fraction * l as f64).round() as usize;
    let n_rare = (cfg.mismatch_fraction * l as f64).round() as usize;
    let shared: Vec<String> = (0..cfg.shared_neutral).map(|i| format!("gen{i:03}")).collect();

    let mut plans = Vec::with_capacity(cfg.domains);
    let mut records = Vec::with_capacity(cfg.domains);
    for d in 0..cfg.domains {
        let name = format!("domain{d:02}");
        let chosen = index::sample(&mut rng, l, n_flip + n_rare).into_vec();
        let (flip_idx, rare_idx) = chosen.split_at(n_flip);
        let polarity = |i: usize| {
            let p = lexicon_polarity(i, l);
            if flip_idx.contains(&i) {
                p.opposite()
            } else {
                p
            }
        };
        let local: Vec<String> = (0..cfg.domain_neutral).map(|i| format!("dom{d:02}x{i:02}")).collect();

        // common sentiment words of each domain polarity with their weights
        let pool = |c: Polarity| -> (Vec<usize>, Vec<f64>) {
            (0..l)
                .filter(|i| !rare_idx.contains(i) && polarity(*i) == c)
                .map(|i| (i, if flip_idx.contains(&i) { cfg.flip_weight } else { 1.0 }))
                .unzip()
        };
        let (pos_words, pos_w) = pool(Polarity::Positive);
        let (neg_words, neg_w) = pool(Polarity::Negative);
        let sampler = |w: &[f64]| (!w.is_empty()).then(|| WeightedIndex::new(w).expect("positive weights"));
        let (pos_s, neg_s) = (sampler(&pos_w), sampler(&neg_w));

        let share = rng.gen_range(cfg.negative_share.0..=cfg.negative_share.1);
        let n = cfg.docs_per_domain;
        let negatives = ((n as f64 * share).round() as usize).clamp(1, n - 1);
        let mut labels: Vec<Polarity> = (0..n)
            .map(|i| {
                if i < negatives {
                    Polarity::Negative
                } else {
                    Polarity::Positive
                }
            })
            .collect();
        labels.shuffle(&mut rng);

        let mut tokens: Vec<Vec<String>> = labels
            .iter()
            .map(|&label| {
                let mut t = Vec::new();
                for _ in 0..pick(&mut rng, cfg.sentiment_tokens) {
                    let c = if rng.gen_bool(cfg.noise) {
                        label.opposite()
                    } else {
                        label
                    };
                    let (words, s) = match c {
                        Polarity::Positive => (&pos_words, &pos_s),
                        Polarity::Negative => (&neg_words, &neg_s),
                    };
                    if let Some(s) = s {
                        t.push(lexicon_word(words[s.sample(&mut rng)]));
                    }
                }
                for _ in 0..pick(&mut rng, cfg.neutral_tokens) {
                    let from_local = !local.is_empty() && (shared.is_empty() || rng.gen_bool(0.5));
                    let src = if from_local { &local } else { &shared };
                    t.push(src.choose(&mut rng).expect("nonempty pool").clone());
                }
                t
            })
            .collect();

        for &i in rare_idx {
            let c = polarity(i);
            let hosts: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            for &j in hosts.choose_multiple(&mut rng, cfg.rare_docs) {
                tokens[j].push(lexicon_word(i));
            }
        }

        let recs = tokens
            .into_iter()
            .zip(&labels)
            .enumerate()
            .map(|(j, (mut t, &label))| {
                t.shuffle(&mut rng);
                let rating = match label {
                    Polarity::Positive => rng.gen_range(4..=5),
                    Polarity::Negative => rng.gen_range(1..=2),
                };
                ReviewRecord {
                    id: Some(format!("{name}-{j:04}")),
                    text: t.join(" "),
                    rating: Some(f64::from(rating)),
                    label: None,
                }
            })
            .collect();
        records.push(recs);
        plans.push(DomainPlan {
            name,
            flipped: flip_idx.iter().map(|&i| lexicon_word(i)).collect(),
            rare: rare_idx.iter().map(|&i| lexicon_word(i)).collect(),
            negatives,
        });
    }
    Ok(SynthCorpus { plans, records })
}
