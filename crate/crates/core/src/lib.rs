//! Over-the-air computation for federated learning with chirp-based
//! majority-vote signaling on DFT-spread OFDM.

pub mod channel;
pub mod deployment;
pub mod error;
pub mod learn;
pub mod numerics;
pub mod oac;
pub mod rf;
pub mod rng;
pub mod signal;
pub mod waveform;

pub use error::{Error, Result};
pub use signal::ComplexSignal;
