//! Dense tensors, a reverse-mode tape with the layers the models need, Adam,
//! checkpoints and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod lstm;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState, Hyperparams};
pub use gradcheck::{grad_check, GradCheckReport, REL_FLOOR};
pub use lstm::LstmLayer;
pub use params::{fan_in_uniform, normal, uniform, BnId, Bound, Param, ParamId, ParamStore};
pub use tape::{coord_maps, BnStats, Conv2dSpec, Grads, Tape, Var, BN_EPS, BN_MOMENTUM};
pub use tensor::{gemm, Precision, Real, Tensor};
