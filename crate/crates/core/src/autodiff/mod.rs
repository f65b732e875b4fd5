//! Exact input derivatives of the scalar networks, differentiable in the
//! network parameters.

mod dual;
mod jet;
mod scalar;
mod tape;

pub use dual::Dual2;
pub use jet::{augment, augment_jets, eval_jet2, eval_jet2_generic, eval_jet2_taped, Jet2, Packing};
pub use scalar::Scalar;
pub use tape::{param_grad, ParamTape, Var};

pub(crate) use scalar::softplus_sigmoid_f64;
