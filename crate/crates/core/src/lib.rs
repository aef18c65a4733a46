pub mod cauchy;
pub mod dynamics;
pub mod error;
pub mod identities;
pub mod ladder;
pub mod orthopoly;
pub mod numeric;
pub mod quadrature;
pub mod weight;

pub use error::{Error, Result};
pub use weight::WeightSpec;
