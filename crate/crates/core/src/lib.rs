//! Heterogeneous treatment-effect estimation with orthogonal random forests.
//!
//! The core types are generic over the scalar. The aliases below fix it to
//! `f64`, with `*32` variants for single precision.

pub mod data;
pub mod dml;
pub mod error;
pub mod forest;
pub mod linalg;
pub mod nuisance;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::{Field, Real};

pub type Dataset = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type OrfModel = forest::OrfModel<f64>;
pub type OrfModel32 = forest::OrfModel<f32>;
pub type EffectEstimate = forest::EffectEstimate<f64>;
pub type EffectEstimate32 = forest::EffectEstimate<f32>;
pub type AteEstimate = dml::AteEstimate<f64>;
pub type AteEstimate32 = dml::AteEstimate<f32>;
pub type PolicyInputs = policy::PolicyInputs<f64>;
pub type ExactPolicyInputs = policy::PolicyInputs<num_rational::Ratio<i64>>;
