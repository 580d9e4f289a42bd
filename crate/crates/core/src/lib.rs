//! Operator-graph rewrites that move Mamba and Mamba-2 sequential operators
//! onto matrix and lookup hardware, with a reference executor, a C-LUT
//! activation fitter, ZVC mask compression and an analytical NPU cost model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod graph;
pub mod models;
pub mod npusim;
pub mod passes;
pub mod plu;
pub mod tensor;
pub mod zvc;

pub use error::{Result, XambaError};
pub use graph::{OpGraph, OpKind};
pub use tensor::Tensor;
