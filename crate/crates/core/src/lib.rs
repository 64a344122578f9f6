pub mod cli;
pub mod continuation;
pub mod error;
pub mod free_boundary;
pub mod kernels;
pub mod multispecies;
pub mod ode;
pub mod particles;
pub mod quadrature;
pub mod rank_one;
pub mod stability;
pub mod viscous;

pub use error::{Error, Result};
