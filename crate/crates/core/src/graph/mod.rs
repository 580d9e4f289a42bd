//! Operator-graph IR: construction, static shape inference, a reference
//! executor and the op census.
//!
//! Node ids are dense and equal to the node's position, and a node may only
//! reference ids that already exist, so every graph is acyclic and stored in
//! topological order. Passes never mutate a graph; they build a new one.

mod exec;
mod kind;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, XambaError};
use crate::plu::PluTable;
use crate::tensor::binary_shape;

pub use exec::{execute, execute_all, ExecOptions};
pub use kind::{Engine, OpKind};

pub type NodeId = usize;
pub type Attrs = BTreeMap<String, Value>;
pub type Shape = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: OpKind,
    #[serde(default)]
    pub attrs: Attrs,
    pub inputs: Vec<NodeId>,
}

impl Node {
    pub fn engine(&self) -> Engine {
        match self.attrs.get("engine").and_then(Value::as_str) {
            Some("MPU") => Engine::Mpu,
            Some("DSP") => Engine::Dsp,
            Some("PLU-drain") => Engine::PluDrain,
            Some("none") => Engine::Host,
            _ => self.kind.default_engine(),
        }
    }

    pub fn attr_f64(&self, key: &str) -> Option<f64> {
        self.attrs.get(key).and_then(Value::as_f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpGraph {
    pub name: String,
    pub nodes: Vec<Node>,
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    /// C-LUT contents referenced by `PluActivation` nodes.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tables: BTreeMap<String, PluTable>,
}

impl OpGraph {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            nodes: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            metadata: BTreeMap::new(),
            tables: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    /// Appends a node after checking arity and that every input exists.
    /// `Input` nodes are registered as graph inputs automatically.
    pub fn add_node(&mut self, kind: OpKind, inputs: &[NodeId], attrs: Attrs) -> Result<NodeId> {
        let (lo, hi) = kind.arity();
        if inputs.len() < lo || inputs.len() > hi {
            let expected = if lo == hi {
                lo.to_string()
            } else {
                format!("{lo}..={hi}")
            };
            return Err(XambaError::Arity {
                kind: kind.name().to_string(),
                expected,
                got: inputs.len(),
            });
        }
        if let Some(&bad) = inputs.iter().find(|&&i| i >= self.nodes.len()) {
            return Err(XambaError::MissingInput(bad));
        }
        if let OpKind::CumSum { axis } | OpKind::ReduceSum { axis } = &kind {
            if *axis != 0 {
                return Err(XambaError::Param(format!(
                    "{} supports axis 0 only, got {axis}",
                    kind.name()
                )));
            }
        }
        let id = self.nodes.len();
        if matches!(kind, OpKind::Input { .. }) {
            self.inputs.push(id);
        }
        self.nodes.push(Node {
            id,
            kind,
            attrs,
            inputs: inputs.to_vec(),
        });
        Ok(id)
    }

    pub fn add(&mut self, kind: OpKind, inputs: &[NodeId]) -> Result<NodeId> {
        self.add_node(kind, inputs, Attrs::new())
    }

    pub fn set_outputs(&mut self, outputs: Vec<NodeId>) -> Result<()> {
        if let Some(&bad) = outputs.iter().find(|&&i| i >= self.nodes.len()) {
            return Err(XambaError::MissingInput(bad));
        }
        self.outputs = outputs;
        Ok(())
    }

    /// Shapes declared by the graph's `Input` nodes, in input order.
    pub fn input_shapes(&self) -> Vec<Shape> {
        self.inputs
            .iter()
            .map(|&i| match &self.nodes[i].kind {
                OpKind::Input { shape, .. } => shape.clone(),
                _ => unreachable!("graph input is not an Input node"),
            })
            .collect()
    }

    pub fn input_names(&self) -> Vec<String> {
        self.inputs
            .iter()
            .map(|&i| match &self.nodes[i].kind {
                OpKind::Input { name, .. } => name.clone(),
                _ => unreachable!("graph input is not an Input node"),
            })
            .collect()
    }

    /// Shape inference using the declared input shapes.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        infer_shapes(self, &self.input_shapes())
    }

    /// Nodes that read `id`.
    pub fn consumers(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.inputs.contains(&id))
            .map(|n| n.id)
            .collect()
    }

    pub fn strict_finite(&self) -> bool {
        self.metadata.get("strict_finite").map(String::as_str) == Some("true")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: OpGraph = serde_json::from_str(s)?;
        g.validate()?;
        Ok(g)
    }

    /// Structural checks for graphs that did not come through `add_node`.
    pub fn validate(&self) -> Result<()> {
        for (pos, n) in self.nodes.iter().enumerate() {
            if n.id != pos {
                return Err(XambaError::Format(format!("node at position {pos} has id {}", n.id)));
            }
            if let Some(&bad) = n.inputs.iter().find(|&&i| i >= pos) {
                return Err(XambaError::MissingInput(bad));
            }
            let (lo, hi) = n.kind.arity();
            if n.inputs.len() < lo || n.inputs.len() > hi {
                return Err(XambaError::Arity {
                    kind: n.kind.name().to_string(),
                    expected: format!("{lo}..={hi}"),
                    got: n.inputs.len(),
                });
            }
        }
        for &i in self.inputs.iter().chain(&self.outputs) {
            if i >= self.nodes.len() {
                return Err(XambaError::MissingInput(i));
            }
        }
        Ok(())
    }
}

fn shape_err(node: NodeId, msg: impl Into<String>) -> XambaError {
    XambaError::ShapeInference { node, msg: msg.into() }
}

fn dims2(node: NodeId, s: &[usize]) -> Result<(usize, usize)> {
    match s {
        &[m, n] => Ok((m, n)),
        _ => Err(shape_err(node, format!("expected rank 2, got {s:?}"))),
    }
}

/// Assigns a static shape to every node. `input_shapes` follows
/// `graph.inputs` order.
pub fn infer_shapes(graph: &OpGraph, input_shapes: &[Shape]) -> Result<Vec<Shape>> {
    if input_shapes.len() != graph.inputs.len() {
        return Err(XambaError::Shape(format!(
            "graph has {} inputs but {} shapes were given",
            graph.inputs.len(),
            input_shapes.len()
        )));
    }
    let mut shapes: Vec<Shape> = Vec::with_capacity(graph.nodes.len());
    let mut next_input = 0;
    for node in &graph.nodes {
        let id = node.id;
        let ins: Vec<&Shape> = node.inputs.iter().map(|&i| &shapes[i]).collect();
        let s = match &node.kind {
            OpKind::Input { .. } => {
                let s = input_shapes[next_input].clone();
                next_input += 1;
                if s.is_empty() || s.len() > 2 || s.contains(&0) {
                    return Err(shape_err(id, format!("invalid input shape {s:?}")));
                }
                s
            }
            OpKind::Const { value } => value.shape().to_vec(),
            OpKind::MatMul => {
                let (m, k) = dims2(id, ins[0])?;
                let (k2, n) = dims2(id, ins[1])?;
                if k != k2 {
                    return Err(shape_err(id, format!("MatMul {:?} x {:?}", ins[0], ins[1])));
                }
                vec![m, n]
            }
            OpKind::VecMat => {
                let (one, m) = dims2(id, ins[0])?;
                let (m2, n) = dims2(id, ins[1])?;
                if one != 1 || m != m2 {
                    return Err(shape_err(id, format!("VecMat {:?} x {:?}", ins[0], ins[1])));
                }
                vec![1, n]
            }
            OpKind::Add | OpKind::Multiply => binary_shape(ins[0], ins[1]).map_err(|e| shape_err(id, e.to_string()))?,
            OpKind::CumSum { .. } => ins[0].clone(),
            OpKind::ReduceSum { .. } => match ins[0].as_slice() {
                &[_, n] => vec![1, n],
                &[_] => vec![1],
                s => return Err(shape_err(id, format!("ReduceSum of {s:?}"))),
            },
            OpKind::Activation { .. }
            | OpKind::PluActivation { .. }
            | OpKind::Power { .. }
            | OpKind::Sqrt
            | OpKind::Exp => ins[0].clone(),
            OpKind::Softmax => {
                dims2(id, ins[0])?;
                ins[0].clone()
            }
            OpKind::Gather { axis, start, len } => {
                let (m, n) = dims2(id, ins[0])?;
                let extent = match axis {
                    0 => m,
                    1 => n,
                    _ => return Err(shape_err(id, format!("Gather axis {axis}"))),
                };
                if *len == 0 || start + len > extent {
                    return Err(shape_err(id, format!("Gather [{start}, {}) of {extent}", start + len)));
                }
                if *axis == 0 {
                    vec![*len, n]
                } else {
                    vec![m, *len]
                }
            }
            OpKind::Transpose => {
                let (m, n) = dims2(id, ins[0])?;
                vec![n, m]
            }
            OpKind::Reshape { shape } => {
                let have: usize = ins[0].iter().product();
                let want: usize = shape.iter().product();
                if have != want || shape.is_empty() || shape.len() > 2 {
                    return Err(shape_err(id, format!("Reshape {:?} -> {shape:?}", ins[0])));
                }
                shape.clone()
            }
            OpKind::RMSNorm { .. } => {
                let (_, n) = dims2(id, ins[0])?;
                if ins[1].iter().product::<usize>() != n {
                    return Err(shape_err(id, "RMSNorm weight length"));
                }
                ins[0].clone()
            }
            OpKind::Conv1d { kernel } => {
                let (l, c) = dims2(id, ins[0])?;
                if ins[1].as_slice() != [*kernel, c] {
                    return Err(shape_err(id, format!("Conv1d weight {:?}", ins[1])));
                }
                if let Some(p) = ins.get(2) {
                    if p.as_slice() != [kernel - 1, c] {
                        return Err(shape_err(id, format!("Conv1d prefix {p:?}")));
                    }
                }
                vec![l + kernel - 1, c]
            }
        };
        shapes.push(s);
    }
    Ok(shapes)
}

/// Node count per operator kind, graph inputs and constants excluded.
pub fn census(graph: &OpGraph) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for n in graph.nodes.iter().filter(|n| !n.kind.is_source()) {
        *out.entry(n.kind.name().to_string()).or_insert(0) += 1;
    }
    out
}
