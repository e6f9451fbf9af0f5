//! Decoding strategies for open-ended text generation and the distributional
//! metrics used to compare them against human text.
//!
//! The crate is organized around a single contract, [`lm::DistributionProvider`],
//! which yields a full next-token distribution for a context. Everything else
//! (truncation, sampling, search, metrics, probes, HUSE) is written against
//! that contract, so the bundled n-gram model and the trace-replay provider
//! are interchangeable.

pub mod decoding;
pub mod error;
pub mod exec;
pub mod harness;
pub mod huse;
pub mod lm;
pub mod metrics;
pub mod probes;
pub mod rng;

pub use error::{Error, ErrorClass, Result};
pub use lm::{ContextWindow, DistributionProvider, TokenDistribution, TokenId, Vocabulary};
