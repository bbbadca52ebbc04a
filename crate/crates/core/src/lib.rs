//! Label-controlled quantum multi-class classifier.
//!
//! A sample register and a label register of `t = ⌈log₂ L⌉` qubits each are
//! simulated on a dense statevector. Training data of class `i` is loaded
//! into weighted SU(2) rotations that act on the sample register only when
//! the label register reads `i`; training maximizes the fidelity with the
//! state pairing every label with the matching sample basis state.

pub mod circuit;
pub mod classifier;
pub mod cli;
pub mod complexity;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod objective;
pub mod par;
pub mod statevector;
pub mod trainer;

pub use error::{Error, Result};
