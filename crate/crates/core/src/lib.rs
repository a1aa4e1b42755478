//! Forward simulation and physics-informed calibration of small-strain
//! elastoplastic constitutive models.

pub mod autodiff;
pub mod constitutive;
pub mod error;
pub mod forward;
pub mod loading;
pub mod network;
pub mod pinn;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
