//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] is rebuilt for every forward pass. Values enter as constants,
//! free leaves or parameters; every primitive applied to a tracked input is
//! recorded, and [`Tape::backward`] sweeps the record once in reverse.

mod gradcheck;
mod param;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, relative_error, GradCheck, GradCheckReport, ParamCheck};
pub use param::Parameter;
pub use tape::{Gradients, Primitive, Tape, Var, LEAKY_SLOPE};
pub use tensor::Tensor;
