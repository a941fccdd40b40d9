//! Target-space surrogate optimization.
//!
//! For a composite objective `h(theta) = l(f(theta))` with a separable loss
//! `l` on the model's outputs, each outer step queries the loss gradient once
//! on a sampled batch, builds a surrogate that majorizes the loss in target
//! space, and minimizes that surrogate in parameter space with cheap inner
//! iterations. Parametric baselines (SGD, SLS, Adam, AdaGrad, SVRG) share the
//! same run interface and oracle accounting.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod inner;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod optimizers;
pub mod oracle;
pub mod schedules;
pub mod surrogates;

pub use data::{Dataset, SyntheticKind, SyntheticSpec, Task, TaskKind};
pub use error::{Error, Result};
pub use losses::{Loss, LossKind};
pub use model::{Model, ModelSpec};
pub use optimizers::{run, OptimizerSpec, RunConfig, RunTrace, ScheduleSpec, TraceRecord};
pub use oracle::{OracleCounter, Problem, Sampling};
pub use surrogates::{Surrogate, Variant};
