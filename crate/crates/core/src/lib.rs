//! Prototype banks learned by self-supervision over time-series windows,
//! aligned to downstream labels by exact linear assignment and grounded on
//! real training windows.

pub mod adapt;
pub mod assign;
pub mod autodiff;
pub mod cli;
pub mod config;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod numcore;
pub mod protomodel;
pub mod ssl;

pub use error::{Error, Result};
