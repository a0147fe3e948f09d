//! Hybrid Code Networks.
//!
//! A recurrent dialog policy whose input and output are shaped by
//! developer-supplied domain code: entity tracking, action masks,
//! context features and response templates. The network is trained with
//! supervised learning on example dialogs, with policy-gradient
//! reinforcement learning against a user simulator, or with both
//! interleaved.
//!
//! The crate is organized by concern:
//!
//! - [`neural`]: LSTM, masked softmax, BPTT, clipping, AdaDelta, checkpoints
//! - [`features`]: tokenization, bag of words, averaged word embeddings
//! - [`engine`]: the per-turn operational loop and the [`engine::DomainPack`] trait
//! - [`babi`]: the restaurant-booking domain for bAbI dialog tasks 5 and 6
//! - [`dialer`]: the name-dialing domain and its user simulator
//! - [`training`]: supervised training, REINFORCE, consistency restoration
//! - [`eval`]: turn/dialog accuracy, ΔP, learning curves, RL success rate

pub mod babi;
pub mod config;
pub mod dialer;
pub mod engine;
pub mod eval;
pub mod features;
pub mod metrics;
pub mod neural;
pub mod training;

mod error;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/masking.md")]
    mod masking {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/domain-code.md")]
    mod domain_code {}
    #[doc = include_str!("../../../book/src/babi.md")]
    mod babi {}
    #[doc = include_str!("../../../book/src/reinforcement.md")]
    mod reinforcement {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
