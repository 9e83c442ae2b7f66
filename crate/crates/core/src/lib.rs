//! Validation-free search for learning rate and weight decay.
//!
//! A grid of (learning rate, weight decay) trials is trained under a FIFO or
//! successive-halving scheduler. The training-loss matrix is segmented with
//! Quickshift, the best-fitting region is kept, and the trial with the
//! smallest parameter norm inside it is returned. No validation or test data
//! is consulted on the way.

pub mod cli;
pub mod codec;
pub mod error;
pub mod grid;
pub mod harness;
pub mod matrices;
pub mod mlp;
pub mod optim;
pub mod plot;
pub mod quickshift;
pub mod runstore;
pub mod scheduler;
pub mod search;
pub mod selector;
pub mod task;
pub mod trial;

pub use error::{Error, Result};
pub use grid::{GridCell, HyperGrid};
