//! Sparse identification of regenerative milling dynamics.

pub mod bench;
pub mod dataset;
pub mod discovery;
pub mod dynamics;
pub mod library;
pub mod simulator;
pub mod stability;
