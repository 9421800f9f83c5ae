//! Minimal reverse-mode differentiation over dense row-major arrays.

mod optim;
mod sparse;
mod tape;
mod tensor;

pub use optim::{Adam, ParamId, ParamSet};
pub use sparse::SparseRows;
pub use tape::{Grads, Tape, Var};
pub use tensor::{Real, Tensor};
