//! Intraday jump detection and jump prediction from level-2 market data.
//!
//! The crate covers the whole chain: snapshot parsing and 5-minute
//! aggregation ([`market_data`]), robust jump detection ([`jump`]),
//! liquidity and technical features ([`features`]), instance assembly and
//! class balancing ([`dataset`]), mutual-information feature selection
//! ([`selection`]), native classifiers with replicate evaluation
//! ([`learners`]) and a synthetic level-2 generator with ground truth
//! ([`simulator`]). [`workflow`] wires the stages together in memory.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.

pub mod dataset;
pub mod error;
pub mod features;
pub mod jump;
pub mod learners;
pub mod market_data;
pub mod par;
pub mod rng;
pub mod selection;
pub mod simulator;
pub mod workflow;

pub use error::{Error, Result};
