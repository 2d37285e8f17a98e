//! Lifelong memory: per-task result records and the knowledge base mined
//! from them.
//!
//! A [`TaskRecord`] keeps only what a finished task produced (its smoothed
//! conditionals and the empirical class counts); the task's documents are
//! not retained. The [`KnowledgeBase`] aggregates records into
//! document-level counts `N_KB` (summed class counts) and domain-level
//! counts `M_KB` (number of tasks in which a word leaned to each class).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use crate::corpus::Polarity;
use crate::error::{LscError, Result};
use crate::flatfile;
use crate::nb::NbModel;

const MAGIC: &str = "lsc-kb";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub task_name: String,
    pub cond_pos: BTreeMap<String, f64>,
    pub cond_neg: BTreeMap<String, f64>,
    pub count_pos: BTreeMap<String, f64>,
    pub count_neg: BTreeMap<String, f64>,
}

pub fn record_task(model: &NbModel, task_name: &str) -> TaskRecord {
    TaskRecord {
        task_name: task_name.to_string(),
        cond_pos: model.conditionals(Polarity::Positive),
        cond_neg: model.conditionals(Polarity::Negative),
        count_pos: model.counts(Polarity::Positive).clone(),
        count_neg: model.counts(Polarity::Negative).clone(),
    }
}

impl TaskRecord {
    /// The class word `w` leans to in this task, if it is in the task's
    /// vocabulary and its conditionals differ.
    pub fn lean(&self, w: &str) -> Option<Polarity> {
        let p = self.cond_pos.get(w)?;
        let n = self.cond_neg.get(w)?;
        if p > n {
            Some(Polarity::Positive)
        } else if n > p {
            Some(Polarity::Negative)
        } else {
            None
        }
    }

    fn words(&self) -> impl Iterator<Item = &String> {
        self.count_pos
            .keys()
            .chain(self.count_neg.keys())
            .chain(self.cond_pos.keys())
    }
}

/// Per-word aggregate: `N_KB` for both classes and `M_KB` for both classes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WordKnowledge {
    pub n_pos: f64,
    pub n_neg: f64,
    pub m_pos: u32,
    pub m_neg: u32,
}

impl WordKnowledge {
    pub fn n(&self, c: Polarity) -> f64 {
        match c {
            Polarity::Positive => self.n_pos,
            Polarity::Negative => self.n_neg,
        }
    }

    pub fn m(&self, c: Polarity) -> u32 {
        match c {
            Polarity::Positive => self.m_pos,
            Polarity::Negative => self.m_neg,
        }
    }
}

/// Immutable aggregate of recorded tasks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    tasks: BTreeSet<String>,
    words: BTreeMap<String, WordKnowledge>,
}

/// Batch aggregation of `records`.
pub fn mine_kb(records: &[TaskRecord]) -> Result<KnowledgeBase> {
    let mut tasks = BTreeSet::new();
    for r in records {
        if !tasks.insert(r.task_name.clone()) {
            return Err(LscError::DuplicateTask(r.task_name.clone()));
        }
    }
    let vocabulary: BTreeSet<&String> = records.iter().flat_map(TaskRecord::words).collect();
    let words = vocabulary
        .into_iter()
        .map(|w| {
            let wk = WordKnowledge {
                n_pos: records.iter().filter_map(|r| r.count_pos.get(w)).sum(),
                n_neg: records.iter().filter_map(|r| r.count_neg.get(w)).sum(),
                m_pos: records.iter().filter(|r| r.lean(w) == Some(Polarity::Positive)).count() as u32,
                m_neg: records.iter().filter(|r| r.lean(w) == Some(Polarity::Negative)).count() as u32,
            };
            (w.clone(), wk)
        })
        .collect();
    Ok(KnowledgeBase { tasks, words })
}

impl KnowledgeBase {
    pub fn new() -> Self {
        KnowledgeBase::default()
    }

    /// Returns a new knowledge base with `record` folded in.
    pub fn add_task(&self, record: &TaskRecord) -> Result<KnowledgeBase> {
        let mut next = self.clone();
        if !next.tasks.insert(record.task_name.clone()) {
            return Err(LscError::DuplicateTask(record.task_name.clone()));
        }
        for w in record.words() {
            next.words.entry(w.clone()).or_default();
        }
        for (w, c) in &record.count_pos {
            next.words.get_mut(w).expect("inserted above").n_pos += c;
        }
        for (w, c) in &record.count_neg {
            next.words.get_mut(w).expect("inserted above").n_neg += c;
        }
        for w in record.cond_pos.keys() {
            let entry = next.words.get_mut(w).expect("inserted above");
            match record.lean(w) {
                Some(Polarity::Positive) => entry.m_pos += 1,
                Some(Polarity::Negative) => entry.m_neg += 1,
                None => {}
            }
        }
        Ok(next)
    }

    /// Combines two knowledge bases built from disjoint task sets.
    pub fn merge(&self, other: &KnowledgeBase) -> Result<KnowledgeBase> {
        if let Some(dup) = self.tasks.intersection(&other.tasks).next() {
            return Err(LscError::DuplicateTask(dup.clone()));
        }
        let mut next = self.clone();
        next.tasks.extend(other.tasks.iter().cloned());
        for (w, k) in &other.words {
            let e = next.words.entry(w.clone()).or_default();
            e.n_pos += k.n_pos;
            e.n_neg += k.n_neg;
            e.m_pos += k.m_pos;
            e.m_neg += k.m_neg;
        }
        Ok(next)
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn task_names(&self) -> impl Iterator<Item = &str> {
        self.tasks.iter().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, w: &str) -> Option<&WordKnowledge> {
        self.words.get(w)
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, &WordKnowledge)> {
        self.words.iter().map(|(w, k)| (w.as_str(), k))
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut header = vec![("task_count", self.tasks.len().to_string())];
        header.extend(self.tasks.iter().map(|t| ("task", t.clone())));
        let rows = self.words.iter().map(|(w, k)| {
            vec![
                w.clone(),
                k.n_pos.to_string(),
                k.n_neg.to_string(),
                k.m_pos.to_string(),
                k.m_neg.to_string(),
            ]
        });
        flatfile::write(w, MAGIC, VERSION, &header, rows)
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let file = flatfile::read(r, MAGIC, VERSION, 5)?;
        let count: usize = file.parse("task_count")?;
        let tasks: BTreeSet<String> = file.all("task").map(str::to_string).collect();
        if tasks.len() != count {
            return Err(LscError::Parse(format!(
                "task_count {count} but {} distinct task names",
                tasks.len()
            )));
        }
        let mut words = BTreeMap::new();
        for row in &file.rows {
            let k = WordKnowledge {
                n_pos: flatfile::parse_field(&row[1], &row[0])?,
                n_neg: flatfile::parse_field(&row[2], &row[0])?,
                m_pos: flatfile::parse_field(&row[3], &row[0])?,
                m_neg: flatfile::parse_field(&row[4], &row[0])?,
            };
            if k.m_pos as usize + k.m_neg as usize > count {
                return Err(LscError::Parse(format!(
                    "{:?}: domain counts exceed task_count",
                    row[0]
                )));
            }
            if words.insert(row[0].clone(), k).is_some() {
                return Err(LscError::Parse(format!("duplicate row for {:?}", row[0])));
            }
        }
        Ok(KnowledgeBase { tasks, words })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(name: &str, rows: &[(&str, f64, f64)]) -> TaskRecord {
        // Conditionals from λ = 1 smoothing over the record's own words.
        let v = rows.len() as f64;
        let tp: f64 = rows.iter().map(|r| r.1).sum();
        let tn: f64 = rows.iter().map(|r| r.2).sum();
        TaskRecord {
            task_name: name.into(),
            cond_pos: rows.iter().map(|r| (r.0.into(), (1.0 + r.1) / (v + tp))).collect(),
            cond_neg: rows.iter().map(|r| (r.0.into(), (1.0 + r.2) / (v + tn))).collect(),
            count_pos: rows.iter().map(|r| (r.0.into(), r.1)).collect(),
            count_neg: rows.iter().map(|r| (r.0.into(), r.2)).collect(),
        }
    }

    fn model(pos: &[(&str, f64)], neg: &[(&str, f64)]) -> NbModel {
        let m = |xs: &[(&str, f64)]| xs.iter().map(|(w, c)| (w.to_string(), *c)).collect();
        NbModel::from_counts(1.0, m(pos), m(neg), 0.5).unwrap()
    }

    #[test]
    fn record_copies_counts_and_conditionals() {
        let m = model(
            &[("a", 2.0), ("b", 0.0), ("c", 1.0)],
            &[("a", 0.0), ("b", 1.0), ("c", 1.0)],
        );
        let r = record_task(&m, "t");
        assert_eq!(r.count_pos["a"], 2.0);
        assert_eq!(r.cond_pos["a"], 3.0 / 6.0);
        assert_eq!(r, record_task(&m, "t"));
        let s: f64 = r.cond_pos.values().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_records() {
        let kb = mine_kb(&[]).unwrap();
        assert_eq!(kb.task_count(), 0);
        assert!(kb.words().next().is_none());
    }

    #[test]
    fn document_level_sum() {
        let kb = mine_kb(&[record("a", &[("w", 2.0, 0.0)]), record("b", &[("w", 3.0, 1.0)])]).unwrap();
        assert_eq!(kb.get("w").unwrap().n_pos, 5.0);
        assert_eq!(kb.get("w").unwrap().n_neg, 1.0);
    }

    #[test]
    fn domain_level_counts() {
        // w leans positive in t1 and t2, negative in t3; u ties in t1, is
        // absent from t2 and t3.
        let kb = mine_kb(&[
            record("t1", &[("w", 4.0, 1.0), ("u", 1.0, 4.0), ("x", 0.0, 0.0)]),
            record("t2", &[("w", 3.0, 0.0), ("v", 0.0, 3.0)]),
            record("t3", &[("w", 0.0, 2.0), ("v", 2.0, 0.0)]),
        ])
        .unwrap();
        let w = kb.get("w").unwrap();
        assert_eq!((w.m_pos, w.m_neg), (2, 1));
        // t1: totals 5/5, u: 2/8 vs 5/8 → negative
        assert_eq!(kb.get("u").unwrap().m_neg, 1);
        // x: P(x|+) = 1/8, P(x|-) = 1/8 → tie
        let x = kb.get("x").unwrap();
        assert_eq!((x.m_pos, x.m_neg), (0, 0));
        assert_eq!(kb.task_count(), 3);
    }

    #[test]
    fn duplicates_rejected() {
        let r = record("a", &[("w", 1.0, 0.0)]);
        assert!(matches!(
            mine_kb(&[r.clone(), r.clone()]),
            Err(LscError::DuplicateTask(_))
        ));
        let kb = KnowledgeBase::new().add_task(&r).unwrap();
        assert!(kb.add_task(&r).is_err());
        assert!(kb.merge(&kb).is_err());
    }

    #[test]
    fn add_to_empty_equals_batch() {
        let r = record("a", &[("w", 1.0, 0.0), ("z", 0.0, 2.0)]);
        assert_eq!(KnowledgeBase::new().add_task(&r).unwrap(), mine_kb(&[r]).unwrap());
    }

    #[test]
    fn merge_equals_batch() {
        let rs: Vec<_> = (0..4)
            .map(|i| {
                record(
                    &format!("t{i}"),
                    &[("w", i as f64, 1.0), (["a", "b"][i % 2], 2.0, i as f64)],
                )
            })
            .collect();
        let left = mine_kb(&rs[..2]).unwrap();
        let right = mine_kb(&rs[2..]).unwrap();
        assert_eq!(left.merge(&right).unwrap(), mine_kb(&rs).unwrap());
    }

    #[test]
    fn snapshot_round_trip() {
        let kb = mine_kb(&[
            record("a b", &[("w", 0.5, 1.0 / 3.0)]),
            record("c", &[("NOT_w", 7.0, 0.0)]),
        ])
        .unwrap();
        let mut buf = Vec::new();
        kb.write_to(&mut buf).unwrap();
        let back = KnowledgeBase::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, kb);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);

        let bad = String::from_utf8(buf)
            .unwrap()
            .replace("task_count\t2", "task_count\t1");
        assert!(KnowledgeBase::read_from(bad.as_bytes()).is_err());
    }

    fn arb_records() -> impl Strategy<Value = Vec<TaskRecord>> {
        proptest::collection::vec(proptest::collection::btree_map("[a-f]", (0u8..5, 0u8..5), 1..6), 0..8).prop_map(
            |tasks| {
                tasks
                    .into_iter()
                    .enumerate()
                    .map(|(i, rows)| {
                        let rows: Vec<(String, f64, f64)> =
                            rows.into_iter().map(|(w, (p, n))| (w, p as f64, n as f64)).collect();
                        let borrowed: Vec<(&str, f64, f64)> =
                            rows.iter().map(|(w, p, n)| (w.as_str(), *p, *n)).collect();
                        record(&format!("task{i}"), &borrowed)
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn incremental_equals_batch_in_any_order(records in arb_records(), seed: u64) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let mut kb = KnowledgeBase::new();
            for r in &shuffled {
                let next = kb.add_task(r).unwrap();
                // monotone
                for (w, k) in kb.words() {
                    let n = next.get(w).unwrap();
                    prop_assert!(n.n_pos >= k.n_pos && n.n_neg >= k.n_neg);
                    prop_assert!(n.m_pos >= k.m_pos && n.m_neg >= k.m_neg);
                }
                kb = next;
            }
            let batch = mine_kb(&records).unwrap();
            prop_assert_eq!(&kb, &batch);
            prop_assert_eq!(mine_kb(&shuffled).unwrap(), batch);
            for (_, k) in kb.words() {
                prop_assert!((k.m_pos + k.m_neg) as usize <= kb.task_count());
            }
        }
    }
}
