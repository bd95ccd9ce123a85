//! Per-player Q-value learning for soccer attacking sequences.
//!
//! Pipeline: tracking/event files ([`data_io`]) are resampled and cut into
//! possessions ([`preprocess`]), labelled with actions ([`actions`]) and
//! terminal rewards ([`rewards`]), then one recurrent Q-network per agent slot
//! ([`neural`]) is trained with SARSA plus action supervision ([`training`]).
//! Trained models are aggregated into player valuations ([`valuation`]).

pub mod actions;
pub mod checkpoint;
pub mod data_io;
pub mod error;
pub mod gradcheck;
pub mod mdp;
pub mod neural;
pub mod pipeline;
pub mod preprocess;
pub mod rewards;
pub mod rng;
pub mod synth;
pub mod training;
pub mod types;
pub mod valuation;

pub use error::{Error, Result};
