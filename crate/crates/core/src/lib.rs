//! Continuous-time consistency distillation laboratory for 2D densities.

pub mod cli;
pub mod config;
pub mod counters;
pub mod diffcore;
pub mod distill;
pub mod error;
pub mod eval;
pub mod netmodel;
pub mod optim;
pub mod schedules;
pub mod teacher;
pub mod trajectory;

pub use counters::ResourceCounters;
pub use error::{Error, Result};
