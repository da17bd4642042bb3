//! Corpus curation and evaluation tooling for domain-adaptive language model
//! pretraining.
//!
//! The crate covers the data side of continued pretraining: paragraph corpus
//! ingestion and statistics ([`corpus`]), vocabulary diagnostics and
//! tokenizer vocabulary augmentation ([`vocab`]), similarity/diversity sample
//! selection ([`selection`]), masked-LM data preparation ([`mlm`]),
//! downstream evaluation metrics and run aggregation ([`evalkit`]) and
//! training-emission accounting ([`carbon`]). [`pipeline`] chains the stages
//! and backs the `domforge` command-line tool.

// Range checks are written `!(x >= 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carbon;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod mlm;
pub mod pipeline;
pub mod selection;
pub mod vocab;

pub use error::{Error, Result};

use sha2::{Digest, Sha256};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
