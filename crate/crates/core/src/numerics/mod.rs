//! Dense linear algebra and a reverse-mode differentiation tape.

mod check;
mod matrix;
mod tape;

pub use check::{finite_diff_check, ValueAndGrad, DEFAULT_FD_STEP};
pub use matrix::{dot, Matrix};
pub use tape::{BinaryKind, NodeId, Tape, UnaryKind};
