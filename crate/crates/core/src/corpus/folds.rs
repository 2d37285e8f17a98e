use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Document, DomainDataset, Polarity};
use crate::error::{LscError, Result};

/// Document id → fold index in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn assignment(&self) -> &BTreeMap<String, usize> {
        &self.assignment
    }

    /// (train, test) documents for `fold`, each in dataset order.
    pub fn split<'a>(&self, dataset: &'a DomainDataset, fold: usize) -> (Vec<&'a Document>, Vec<&'a Document>) {
        dataset
            .documents()
            .iter()
            .partition(|d| self.fold_of(&d.id) != Some(fold))
    }
}

/// Stratified k-fold assignment.
///
/// Each class is shuffled and dealt round-robin, the negative class
/// continuing where the positive class stopped, so both the per-class and
/// the overall fold sizes differ by at most one.
pub fn make_folds(dataset: &DomainDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(LscError::InvalidArgument(format!(
            "fold count must be at least 2, got {k}"
        )));
    }
    if dataset.is_empty() {
        return Err(LscError::InvalidArgument(format!("domain {} is empty", dataset.name())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut next = 0usize;
    for label in [Polarity::Positive, Polarity::Negative] {
        let mut ids: Vec<&str> = dataset
            .documents()
            .iter()
            .filter(|d| d.label == label)
            .map(|d| d.id.as_str())
            .collect();
        if ids.len() < k {
            return Err(LscError::InvalidArgument(format!(
                "domain {} has {} {label} documents, fewer than {k} folds",
                dataset.name(),
                ids.len()
            )));
        }
        ids.shuffle(&mut rng);
        for id in ids {
            assignment.insert(id.to_string(), next % k);
            next += 1;
        }
    }
    Ok(FoldAssignment { k, assignment })
}

/// Uniform subsample of exactly `n_per_class` documents per polarity,
/// returned in the original document order.
pub fn balance(dataset: &DomainDataset, n_per_class: usize, seed: u64) -> Result<DomainDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; dataset.len()];
    for label in [Polarity::Positive, Polarity::Negative] {
        let mut idx: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.documents()[i].label == label)
            .collect();
        if idx.len() < n_per_class {
            return Err(LscError::InvalidArgument(format!(
                "domain {} has {} {label} documents, need {n_per_class}",
                dataset.name(),
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for &i in &idx[..n_per_class] {
            keep[i] = true;
        }
    }
    let docs = dataset
        .documents()
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(d, _)| d.clone())
        .collect();
    Ok(DomainDataset::new(dataset.name(), docs))
}
