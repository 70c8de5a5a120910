//! A small f64 neural-network engine: dense tensors, a define-by-run tape
//! whose backward pass is itself differentiable (so gradient-penalty style
//! terms get exact parameter gradients), NHWC conv/dense/instance-norm
//! layers, Adam, and finite-difference gradient checking.
//!
//! Everything is deterministic: math is single-threaded, RNGs are supplied
//! by the caller, and serialization is byte-stable.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::Adam;
pub use gradcheck::{check_gradients, relative_error, GradCheckReport};
pub use layers::{global_avg_pool, Conv2d, Dense, InstanceNorm, ResidualBlock};
pub use params::{BoundParams, ParamIoError, ParamRef, ParamSet};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
