//! Decentralized reinforcement-communication learning on social networks.
//!
//! Agents are small Q-networks that play a speaker/listener coordination
//! game with neighbors drawn from a social network. The [`metrics`] module
//! measures how consistent, shared and symmetric the resulting
//! message-to-action conventions are; [`experiment`] runs seeded sweeps and
//! [`analysis`] aggregates them.

pub mod agent;
pub mod analysis;
pub mod error;
pub mod experiment;
pub mod game;
pub mod metrics;
pub mod neuralnet;
pub mod plot;
pub mod topology;

pub use error::{Error, Result};
