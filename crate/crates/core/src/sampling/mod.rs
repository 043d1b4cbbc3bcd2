//! Space-filling designs, input distributions and the Monte Carlo oracle.

mod distribution;
mod lhs;
mod mc;

pub use distribution::{Density, InputDistribution, Marginal, Mvn};
pub use lhs::lhs;
pub use mc::{mc_failure, monte_carlo, McEstimate};
