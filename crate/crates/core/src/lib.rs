//! Prototype explanations for tree ensembles.
//!
//! The pipeline trains a random forest, attributes each prediction to the input
//! features, selects prototype instances by greedy k-medoids in tree space
//! (optionally pulling in attribution alignment through `beta`), and explains
//! each instance by the *alike parts* it shares with its nearest prototype.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

pub mod alike;
pub mod attribution;
pub mod dataset;
pub mod error;
pub mod forest;
pub mod harness;
pub mod matrix;
pub mod proximity;
pub mod scalar;
pub mod selection;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = dataset::Dataset<f64>;
pub type Forest = forest::Forest<f64>;
pub type Tree = forest::Tree<f64>;
pub type AttributionMatrix = attribution::AttributionMatrix<f64>;
pub type DistanceMatrix = proximity::DistanceMatrix<f64>;
pub type PrototypeSet = selection::PrototypeSet<f64>;
pub type AlikeExplanation = alike::AlikeExplanation<f64>;

pub type Dataset32 = dataset::Dataset<f32>;
pub type Forest32 = forest::Forest<f32>;
pub type AttributionMatrix32 = attribution::AttributionMatrix<f32>;
pub type DistanceMatrix32 = proximity::DistanceMatrix<f32>;
pub type PrototypeSet32 = selection::PrototypeSet<f32>;
pub type AlikeExplanation32 = alike::AlikeExplanation<f32>;
