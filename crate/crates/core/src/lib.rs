pub mod bench;
pub mod doe;
pub mod error;
pub mod fd;
mod hash;
pub mod hypernet;
pub mod model;
pub mod nn;
pub mod pinn;
mod scalar;

pub use error::{Error, Result};
pub use hash::config_hash;
pub use scalar::Scalar;

/// Double-precision aliases.
pub type FieldSolutionF64 = fd::FieldSolution<f64>;
pub type NondimParamsF64 = model::NondimParams<f64>;
pub type TaskPinnF64 = pinn::TaskPinn<f64>;
pub type WeightBankF64 = hypernet::WeightBank<f64>;
pub type HypernetModelF64 = hypernet::HypernetModel<f64>;

/// Single-precision aliases.
pub type FieldSolutionF32 = fd::FieldSolution<f32>;
pub type NondimParamsF32 = model::NondimParams<f32>;
pub type TaskPinnF32 = pinn::TaskPinn<f32>;
pub type WeightBankF32 = hypernet::WeightBank<f32>;
pub type HypernetModelF32 = hypernet::HypernetModel<f32>;
