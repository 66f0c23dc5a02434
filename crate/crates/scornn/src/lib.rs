//! Training library and experiment harness for real-valued orthogonal
//! recurrent networks whose recurrent matrix is parametrized by a
//! skew-symmetric matrix through the scaled Cayley transform.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: dense matrix kernels (matmul, LU solve, norms), bitwise
//!   deterministic, `f64` by default with an `f32` instantiation for
//!   precision-sensitivity experiments;
//! - [`cayley`]: the scaled Cayley parametrization `W = (I+A)^-1 (I-A) D`,
//!   its inverse, the analytic parameter gradient, and the block-diagonal
//!   initializer;
//! - [`activations`]: modReLU and the task losses;
//! - [`network`]: the recurrent cell with full backpropagation through time,
//!   a gated baseline cell, and hidden-gradient-norm instrumentation;
//! - [`stiefel`]: the multiplicative orthogonality-maintenance comparator
//!   whose floating-point drift the harness measures;
//! - [`optim`]: SGD / RMSprop / Adam over named parameter groups;
//! - [`tasks`]: seeded generators for the copying and adding benchmarks and
//!   the pixel-sequence MNIST loader;
//! - [`checkpoint`]: versioned binary model + optimizer state serialization;
//! - [`harness`]: experiment configs, the training loop, metrics emission,
//!   and the gradient-check and orthogonality-drift experiments.

pub mod activations;
pub mod cayley;
pub mod checkpoint;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod optim;
pub mod stiefel;
pub mod tasks;

pub use cayley::{ScalingMatrix, SkewParams};
pub use error::{Error, Result};
pub use linalg::{Matrix, Scalar};
pub use network::{ForwardTape, LstmCell, OutputMode, ParamGrads, ScoCell};
pub use optim::{OptimizerKind, ParamGroup};
pub use stiefel::StiefelState;
pub use tasks::{MnistDataset, TaskBatch};
