//! Fully connected ReLU networks with hand-derived gradients, Adam, and a
//! central-difference gradient checker.

mod adam;
mod gradcheck;
mod mlp;

pub use adam::AdamState;
pub use gradcheck::{grad_check, relative_error};
pub use mlp::{GradBuffer, Mlp, Tape};
