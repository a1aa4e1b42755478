//! Ground-truth data generation.

mod dataset;
mod integrate;

pub use dataset::*;
pub use integrate::*;
