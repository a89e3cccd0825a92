//! Automatic gate cutting for quantum circuits with quasiprobability
//! reconstruction of expectation values, plus a QAOA Max-Cut workflow for
//! portfolio diversification on market correlation graphs.

pub mod circuit;
pub mod cli;
pub mod cutfinder;
pub mod linalg;
pub mod market;
pub mod optim;
pub mod qaoa;
pub mod qpd;
pub mod reconstruct;
pub mod rng;
pub mod sim;

pub use circuit::{Circuit, CircuitError, Gate, Pauli, PauliObservable, PauliString};
pub use cutfinder::{CutPlan, EdaConfig};
pub use sim::{ReadoutNoise, Simulator, StateVector};
