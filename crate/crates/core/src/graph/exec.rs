use crate::error::{Result, XambaError};
use crate::plu;
use crate::tensor::{self, Tensor};

use super::{OpGraph, OpKind};

#[derive(Debug, Clone, Copy, Default)]
pub struct ExecOptions {
    /// Fail on the first node that produces a NaN or infinity.
    pub strict_finite: bool,
}

impl ExecOptions {
    /// Options implied by the graph's own metadata.
    pub fn for_graph(graph: &OpGraph) -> Self {
        Self {
            strict_finite: graph.strict_finite(),
        }
    }
}

/// Evaluates the graph and returns its outputs.
pub fn execute(graph: &OpGraph, inputs: &[Tensor], opts: ExecOptions) -> Result<Vec<Tensor>> {
    run(graph, inputs, opts, false).map(|vals| {
        graph
            .outputs
            .iter()
            .map(|&o| vals[o].clone().expect("output value kept"))
            .collect()
    })
}

/// Evaluates the graph and returns the value of every node.
pub fn execute_all(graph: &OpGraph, inputs: &[Tensor], opts: ExecOptions) -> Result<Vec<Tensor>> {
    run(graph, inputs, opts, true).map(|vals| vals.into_iter().map(|v| v.expect("all values kept")).collect())
}

fn run(graph: &OpGraph, inputs: &[Tensor], opts: ExecOptions, keep_all: bool) -> Result<Vec<Option<Tensor>>> {
    let declared = graph.input_shapes();
    if inputs.len() != declared.len() {
        return Err(XambaError::Signature(format!(
            "graph {} takes {} inputs, {} given",
            graph.name,
            declared.len(),
            inputs.len()
        )));
    }
    for (i, (t, s)) in inputs.iter().zip(&declared).enumerate() {
        if t.shape() != s.as_slice() {
            return Err(XambaError::Shape(format!(
                "input {i} of {} expects {s:?}, got {:?}",
                graph.name,
                t.shape()
            )));
        }
    }
    // Shape inference up front so malformed graphs fail with the node named.
    super::infer_shapes(graph, &declared)?;

    let mut last_use = vec![usize::MAX; graph.nodes.len()];
    if !keep_all {
        for n in &graph.nodes {
            for &i in &n.inputs {
                last_use[i] = n.id;
            }
        }
        for &o in &graph.outputs {
            last_use[o] = usize::MAX;
        }
    }

    let mut vals: Vec<Option<Tensor>> = vec![None; graph.nodes.len()];
    let mut next_input = 0;
    for node in &graph.nodes {
        let arg = |k: usize| -> &Tensor { vals[node.inputs[k]].as_ref().expect("input evaluated before consumer") };
        let out = match &node.kind {
            OpKind::Input { .. } => {
                next_input += 1;
                inputs[next_input - 1].clone()
            }
            OpKind::Const { value } => value.clone(),
            OpKind::MatMul => tensor::matmul(arg(0), arg(1))?,
            OpKind::VecMat => tensor::vecmat(arg(0), arg(1))?,
            OpKind::Add => tensor::add(arg(0), arg(1))?,
            OpKind::Multiply => tensor::multiply(arg(0), arg(1))?,
            OpKind::CumSum { .. } => {
                let x = arg(0);
                if x.rank() == 1 {
                    tensor::cumsum_ref(&x.reshape(vec![x.len(), 1])?)?.reshape(vec![x.len()])?
                } else {
                    tensor::cumsum_ref(x)?
                }
            }
            OpKind::ReduceSum { .. } => {
                let x = arg(0);
                if x.rank() == 1 {
                    tensor::reducesum_ref(&x.reshape(vec![x.len(), 1])?)?.reshape(vec![1])?
                } else {
                    tensor::reducesum_ref(x)?
                }
            }
            OpKind::Activation { kind, beta } => tensor::activation(arg(0), *kind, *beta)?,
            OpKind::PluActivation { table, .. } => {
                let t = graph
                    .tables
                    .get(table)
                    .ok_or_else(|| XambaError::Param(format!("node {} references unknown table {table:?}", node.id)))?;
                plu::eval_tensor(t, arg(0)).map_err(|e| XambaError::Numeric {
                    node: format!("{} ({})", node.id, node.kind.label()),
                    msg: e.to_string(),
                })?
            }
            OpKind::Gather { axis, start, len } => arg(0).slice(*axis, *start, *len)?,
            OpKind::Power { exponent } => {
                let e = *exponent;
                arg(0).map(|v| if e == 2.0 { v * v } else { v.powf(e) })
            }
            OpKind::Sqrt => arg(0).map(f32::sqrt),
            OpKind::Exp => arg(0).map(f32::exp),
            OpKind::Transpose => arg(0).transpose()?,
            OpKind::Reshape { shape } => arg(0).reshape(shape.clone())?,
            OpKind::RMSNorm { eps } => tensor::rms_norm(arg(0), arg(1), *eps)?,
            OpKind::Conv1d { .. } => {
                let prefix = node.inputs.get(2).map(|&i| vals[i].as_ref().expect("evaluated"));
                tensor::conv1d(arg(0), arg(1), prefix)?
            }
            OpKind::Softmax => tensor::softmax(arg(0))?,
        };
        if opts.strict_finite && !out.is_finite() {
            return Err(XambaError::Numeric {
                node: format!("{} ({})", node.id, node.kind.label()),
                msg: "non-finite value".into(),
            });
        }
        vals[node.id] = Some(out);
        if !keep_all {
            for &i in &node.inputs {
                if last_use[i] == node.id {
                    vals[i] = None;
                }
            }
        }
    }
    Ok(vals)
}
