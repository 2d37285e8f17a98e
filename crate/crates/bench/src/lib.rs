//! Shared inputs for the benchmarks.

use std::collections::BTreeSet;

use lsc_core::harness::synth::{generate, SynthConfig};
use lsc_core::{mine_kb, record_task, train_nb, Document, DomainDataset, KnowledgeBase, LscConfig};

pub struct Fixture {
    pub target: DomainDataset,
    pub kb: KnowledgeBase,
    pub config: LscConfig,
}

impl Fixture {
    /// First synthetic domain as the target, the rest mined into a KB.
    pub fn new(domains: usize, docs_per_domain: usize) -> Fixture {
        let cfg = SynthConfig {
            domains,
            docs_per_domain,
            ..SynthConfig::default()
        };
        let mut datasets = generate(&cfg).expect("valid generator config").datasets().into_iter();
        let target = datasets.next().expect("at least one domain");
        let config = LscConfig::default();
        let records: Vec<_> = datasets
            .map(|d| {
                let model = train_nb(d.documents(), config.lambda, d.vocabulary()).expect("both classes present");
                record_task(&model, d.name())
            })
            .collect();
        let kb = mine_kb(&records).expect("distinct task names");
        Fixture { target, kb, config }
    }

    pub fn docs(&self) -> Vec<&Document> {
        self.target.documents().iter().collect()
    }

    pub fn vocabulary(&self) -> BTreeSet<String> {
        let mut v = self.target.vocabulary().clone();
        v.extend(self.kb.words().map(|(w, _)| w.to_string()));
        v
    }
}
