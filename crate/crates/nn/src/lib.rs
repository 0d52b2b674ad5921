//! Dense-tensor reverse-mode autodiff with the handful of layers and losses
//! the rest of the workspace needs, plus SGD with momentum, finite-difference
//! gradient checking, and binary weight checkpoints.
//!
//! A [`Graph`] is a tape: building an op runs it immediately and records what
//! is needed for the backward sweep. Training code rebuilds the tape every
//! step from a persistent [`ParameterSet`].

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod params;
pub mod tensor;

pub use checkpoint::{load_checkpoint, load_checkpoint_file, save_checkpoint, save_checkpoint_file};
pub use error::{NnError, Result};
pub use gradcheck::{gradient_check, GradCheckReport, DEFAULT_STEP, DEFAULT_TOL};
pub use graph::{softmax, Graph, Var};
pub use params::{BoundParams, ParameterSet};
pub use tensor::{Scalar, Tensor};
