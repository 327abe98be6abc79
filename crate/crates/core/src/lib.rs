//! Coded smoothing: a batch-level regularizer built from coded computing.
//!
//! A batch `X[K × d]` is interpolated by a natural cubic spline over
//! Chebyshev encoding points, resampled at `N` decoding points, pushed
//! through a model, and interpolated back. The crate provides the module
//! itself, a small autodiff engine to train through it, dual-path training,
//! randomized coded inference under FGSM/PGD attack, and a straggler
//! simulator for the underlying coded-computing scheme.

pub mod attack;
pub mod autodiff;
pub mod coded;
pub mod codedsim;
pub mod data;
pub mod error;
pub mod functions;
pub mod model;
pub mod rng;
pub mod spline;
pub mod tensor;
pub mod train;

pub use autodiff::{sgd_momentum_step, Gradients, Parameter, Tape, Var};
pub use coded::{CodedSmoothingModule, DecodingPoints, EncodingPoints};
pub use error::{Error, Result};
pub use spline::{Knots, NaturalCubicSpline, SplineOperator};
pub use tensor::Tensor;
pub use codedsim::{StragglerPolicy, StragglerScenario};
pub use model::{Activation, Mlp, MlpSpec};
