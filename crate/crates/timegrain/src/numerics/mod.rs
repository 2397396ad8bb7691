//! Minimal differentiable dense-tensor kernel: forward ops, reverse-mode
//! parameter gradients on an explicit tape, and a finite-difference
//! verification harness. Every learnable operation in the crate is built
//! on this contract.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, rel_err, GradCheckConfig, GradCheckReport, ParamCheck};
pub use graph::{matmul, matmul_nt, matmul_tn, Graph, VarId};
pub use tensor::{Parameter, Real, Tensor};
