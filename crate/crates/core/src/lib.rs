//! Lifelong sentiment classification.
//!
//! A naive Bayes sentiment classifier for a target domain whose class-word
//! counts are re-estimated by stochastic gradient descent, using knowledge
//! accumulated from previously learned domains.
//!
//! * [`corpus`]: JSON Lines review loading, tokenization, folds, balancing.
//! * [`nb`]: smoothed multinomial naive Bayes.
//! * [`knowledge`]: per-task records and the knowledge base mined from them.
//! * [`optimizer`]: the knowledge-guided virtual-count optimizer.
//! * [`harness`]: leave-one-domain-out evaluation, baselines and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
mod flatfile;
pub mod harness;
pub mod knowledge;
pub mod math;
pub mod nb;
pub mod optimizer;

pub use corpus::{Document, DomainDataset, Polarity};
pub use error::{LscError, Result};
pub use knowledge::{mine_kb, record_task, KnowledgeBase, TaskRecord};
pub use nb::{train_nb, NbModel};
pub use optimizer::{sgd_train, LscConfig, LscModel, VirtualCounts};
