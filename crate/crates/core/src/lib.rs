pub mod classify;
mod conic;
pub mod dist;
pub mod error;
pub mod harness;
pub mod lfd;
pub mod par;
pub mod radius;
pub mod transport;

pub use dist::{pooled_support, validate_distribution, Coupling, CostMatrix, DiscreteDistribution, Point};
pub use error::{Error, Result};
