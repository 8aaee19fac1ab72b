//! Closed-form references for the two example systems.

mod oscillator;
mod twolevel;

pub use oscillator::*;
pub use twolevel::*;
