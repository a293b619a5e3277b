//! Desk-scale reference implementation of a cotton-boll detection toolkit:
//! a minimal rank-4 tensor core, forward passes for the attention and
//! resampling blocks of the COTONET architecture, IoU-family bounding-box
//! losses with analytic gradients, COCO-style mAP evaluation, model
//! complexity accounting over a declarative layer graph, and a seeded
//! augmentation pipeline with consistent label geometry.
//!
//! All numeric code is generic over the scalar type (`f32` or `f64`) through
//! the [`Scalar`] trait; concrete aliases live at the crate root.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

pub mod blocks;
pub mod boxloss;
pub mod data;
pub mod graph;
pub mod metrics;
pub mod numerics;

/// Floating-point scalar for all tensor and geometry math: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossless widening for reductions, hashing, and reporting.
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}

/// Shorthand for lowering an `f64` constant into the working scalar type.
#[inline]
pub fn scalar<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 constant representable in scalar type")
}

pub type FeatureMap32 = numerics::FeatureMap<f32>;
pub type FeatureMap64 = numerics::FeatureMap<f64>;
pub type BBox32 = boxloss::BBox<f32>;
pub type BBox64 = boxloss::BBox<f64>;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input's dimensions do not satisfy an operation's contract.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A parameter value is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Param(String),
    /// A text input (label file, prediction file, graph config) failed to parse.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// Graph-level validation failure, tagged with the offending layer id.
    #[error("layer {layer}: {msg}")]
    Graph { layer: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn graph(layer: usize, msg: impl Into<String>) -> Self {
        Error::Graph {
            layer,
            msg: msg.into(),
        }
    }
}
