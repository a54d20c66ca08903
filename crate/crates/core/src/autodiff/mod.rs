//! Minimal reverse-mode differentiation engine with exactly the operations
//! the segmentation network needs.

mod conv;
pub mod gradcheck;
mod lstm;
mod norm;
pub mod ops;
mod tape;
mod tensor;
mod weights;

pub use conv::{conv1d_dilated, conv2d, Conv2dSpec};
pub use lstm::{bilstm, BiLstmParams, LstmDirection};
pub use norm::instance_norm;
pub use tape::{BackwardFn, Tape, Var};
pub use tensor::{Real, Tensor};
pub use weights::{NamedTensors, MAGIC as WEIGHTS_MAGIC, VERSION as WEIGHTS_VERSION};

#[allow(unused_imports)]
pub(crate) use tensor::{axpy, dot};
