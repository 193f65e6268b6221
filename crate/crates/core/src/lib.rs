//! Gibbs-sampling distributed power control for wireless networks.
//!
//! Each link repeatedly resamples its transmit power from a Boltzmann
//! distribution over the system utility it would produce, using SINR values
//! heard from control broadcasts. The crate provides the channel model,
//! utilities, the per-link samplers, an asynchronous event simulator for
//! the three messaging schemes, an exact Markov-chain analyzer for the
//! discrete algorithm, and the experiment harness used by the `glad` binary.

pub mod chain;
pub mod channel;
pub mod engine;
pub mod experiment;
pub mod sampler;
pub mod utility;

pub use channel::{sinr, GainMatrix};
pub use engine::{run, Messaging, SimConfig, SimTrace};
pub use sampler::{PowerGrid, Temperature};
pub use utility::UtilitySpec;
