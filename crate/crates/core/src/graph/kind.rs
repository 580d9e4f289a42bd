use serde::{Deserialize, Serialize};

use crate::tensor::{ActKind, Tensor};

/// Closed set of operator kinds understood by the IR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum OpKind {
    Input {
        name: String,
        shape: Vec<usize>,
    },
    Const {
        value: Tensor,
    },
    MatMul,
    VecMat,
    Add,
    Multiply,
    CumSum {
        axis: usize,
    },
    ReduceSum {
        axis: usize,
    },
    Activation {
        kind: ActKind,
        beta: f32,
    },
    PluActivation {
        table: String,
        fused: bool,
    },
    /// Contiguous selection of `len` rows (axis 0) or columns (axis 1).
    Gather {
        axis: usize,
        start: usize,
        len: usize,
    },
    Power {
        exponent: f32,
    },
    Sqrt,
    Exp,
    Transpose,
    Reshape {
        shape: Vec<usize>,
    },
    RMSNorm {
        eps: f32,
    },
    /// Depthwise, fully padded. Inputs: sequence, weight, optional prefix rows.
    Conv1d {
        kernel: usize,
    },
    Softmax,
}

/// Where a node runs on the modelled NPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Engine {
    #[serde(rename = "MPU")]
    Mpu,
    #[serde(rename = "DSP")]
    Dsp,
    #[serde(rename = "PLU-drain")]
    PluDrain,
    /// Graph inputs, constants and pure metadata ops.
    #[serde(rename = "none")]
    Host,
}

impl Engine {
    pub fn label(self) -> &'static str {
        match self {
            Engine::Mpu => "MPU",
            Engine::Dsp => "DSP",
            Engine::PluDrain => "PLU-drain",
            Engine::Host => "none",
        }
    }
}

impl OpKind {
    /// Census key: the operator name without attributes.
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Input { .. } => "Input",
            OpKind::Const { .. } => "Const",
            OpKind::MatMul => "MatMul",
            OpKind::VecMat => "VecMat",
            OpKind::Add => "Add",
            OpKind::Multiply => "Multiply",
            OpKind::CumSum { .. } => "CumSum",
            OpKind::ReduceSum { .. } => "ReduceSum",
            OpKind::Activation { .. } => "Activation",
            OpKind::PluActivation { .. } => "PluActivation",
            OpKind::Gather { .. } => "Gather",
            OpKind::Power { .. } => "Power",
            OpKind::Sqrt => "Sqrt",
            OpKind::Exp => "Exp",
            OpKind::Transpose => "Transpose",
            OpKind::Reshape { .. } => "Reshape",
            OpKind::RMSNorm { .. } => "RMSNorm",
            OpKind::Conv1d { .. } => "Conv1d",
            OpKind::Softmax => "Softmax",
        }
    }

    /// Latency-breakdown key. Activations are split by function so SiLU and
    /// Softplus show up as separate bars.
    pub fn label(&self) -> String {
        match self {
            OpKind::Activation { kind, .. } => kind.label().to_string(),
            OpKind::PluActivation { table, .. } => format!("PLU({table})"),
            other => other.name().to_string(),
        }
    }

    /// Accepted input counts, inclusive.
    pub fn arity(&self) -> (usize, usize) {
        match self {
            OpKind::Input { .. } | OpKind::Const { .. } => (0, 0),
            OpKind::MatMul | OpKind::VecMat | OpKind::Add | OpKind::Multiply => (2, 2),
            OpKind::RMSNorm { .. } => (2, 2),
            OpKind::Conv1d { .. } => (2, 3),
            _ => (1, 1),
        }
    }

    pub fn default_engine(&self) -> Engine {
        match self {
            OpKind::Input { .. } | OpKind::Const { .. } | OpKind::Reshape { .. } => Engine::Host,
            OpKind::MatMul | OpKind::VecMat | OpKind::Conv1d { .. } => Engine::Mpu,
            OpKind::PluActivation { fused: true, .. } => Engine::PluDrain,
            _ => Engine::Dsp,
        }
    }

    pub fn is_source(&self) -> bool {
        matches!(self, OpKind::Input { .. } | OpKind::Const { .. })
    }
}
