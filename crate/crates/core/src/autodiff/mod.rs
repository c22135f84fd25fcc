//! Minimal reverse-mode automatic differentiation and the AdamW optimizer.

pub mod gradcheck;
mod graph;
mod optim;

pub use graph::{argmax, lse, sigmoid, softplus, Gradients, Graph, Var};
pub use optim::{AdamW, EpochVerdict, PlateauSchedule, ADAM_EPS, BETA1, BETA2};
