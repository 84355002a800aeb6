//! Simulated interferometric detection of the Chern number of the Haldane model.
//!
//! The library is generic over the floating-point type (`f32` or `f64`);
//! the aliases at the crate root fix it to `f64`.

pub mod analysis;
pub mod error;
pub mod lattice;
pub mod protocol;
pub mod scalar;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
pub use lattice::{Band, LatticeGeometry as GenericLatticeGeometry};
pub use scalar::{Real, Vec2 as GenericVec2};
pub use topology::Closure;

pub type Vec2 = scalar::Vec2<f64>;
pub type LatticeGeometry = lattice::LatticeGeometry<f64>;
pub type ModelParams = lattice::ModelParams<f64>;
pub type ModelParamsF32 = lattice::ModelParams<f32>;
pub type KPath = topology::KPath<f64>;
pub type BerryField = topology::BerryField<f64>;
pub type ChernNumber = topology::ChernNumber<f64>;
