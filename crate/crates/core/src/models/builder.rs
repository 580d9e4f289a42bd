//! Thin helper over `OpGraph` used by the block builders.
//!
//! The IR only broadcasts rank-2 row and column vectors, so higher-rank
//! broadcasts from the reference implementations are spelled out as
//! replication chains (`Reshape`, `Transpose`, `Multiply` by ones). Those
//! chains, and the one-hot products that stack per-token rows, are tagged
//! `role=broadcast` and pinned to the free engine: in an exported graph they
//! are implicit broadcasts or concatenations, not arithmetic.

use serde_json::json;

use crate::error::Result;
use crate::graph::{Attrs, NodeId, OpGraph, OpKind};
use crate::tensor::{ActKind, Tensor};

pub(crate) struct Builder {
    pub g: OpGraph,
}

impl Builder {
    pub fn new(name: &str) -> Self {
        Self { g: OpGraph::new(name) }
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        self.g.add(
            OpKind::Input {
                name: name.into(),
                shape: shape.to_vec(),
            },
            &[],
        )
    }

    pub fn constant(&mut self, name: &str, value: Tensor) -> Result<NodeId> {
        let mut attrs = Attrs::new();
        attrs.insert("name".into(), json!(name));
        self.g.add_node(OpKind::Const { value }, &[], attrs)
    }

    pub fn op(&mut self, kind: OpKind, inputs: &[NodeId]) -> Result<NodeId> {
        self.g.add(kind, inputs)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.op(OpKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.op(OpKind::Add, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.op(OpKind::Multiply, &[a, b])
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.op(OpKind::Exp, &[a])
    }

    pub fn act(&mut self, kind: ActKind, a: NodeId) -> Result<NodeId> {
        self.op(OpKind::Activation { kind, beta: 1.0 }, &[a])
    }

    pub fn cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.op(OpKind::Gather { axis: 1, start, len }, &[a])
    }

    pub fn rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.op(OpKind::Gather { axis: 0, start, len }, &[a])
    }

    pub fn reduce(&mut self, a: NodeId) -> Result<NodeId> {
        self.op(OpKind::ReduceSum { axis: 0 }, &[a])
    }

    pub fn cumsum(&mut self, a: NodeId) -> Result<NodeId> {
        self.op(OpKind::CumSum { axis: 0 }, &[a])
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.op(OpKind::Reshape { shape: shape.to_vec() }, &[a])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.op(OpKind::Transpose, &[a])
    }

    fn view(&mut self, kind: OpKind, inputs: &[NodeId]) -> Result<NodeId> {
        let mut attrs = Attrs::new();
        attrs.insert("role".into(), json!("broadcast"));
        attrs.insert("engine".into(), json!("none"));
        self.g.add_node(kind, inputs, attrs)
    }

    /// Transpose that only reorients data for an axis-0 reduction.
    pub fn tview(&mut self, a: NodeId) -> Result<NodeId> {
        self.view(OpKind::Transpose, &[a])
    }

    pub fn scalar(&mut self, name: &str, v: f32) -> Result<NodeId> {
        self.constant(name, Tensor::full(vec![1, 1], v)?)
    }

    fn ones(&mut self, shape: &[usize]) -> Result<NodeId> {
        self.constant("ones", Tensor::ones(shape.to_vec())?)
    }

    /// `f: [r, x]` to `[r, x*y]` with `(i, a*y + b) = f(i, a)`.
    pub fn repeat(&mut self, f: NodeId, r: usize, x: usize, y: usize) -> Result<NodeId> {
        let col = self.view(OpKind::Reshape { shape: vec![r * x, 1] }, &[f])?;
        let ones = self.ones(&[1, y])?;
        let wide = self.view(OpKind::Multiply, &[col, ones])?;
        self.view(OpKind::Reshape { shape: vec![r, x * y] }, &[wide])
    }

    /// `g: [r, y]` to `[r, x*y]` with `(i, a*y + b) = g(i, b)`.
    pub fn tile(&mut self, g: NodeId, r: usize, x: usize, y: usize) -> Result<NodeId> {
        let t = self.view(OpKind::Transpose, &[g])?;
        let col = self.view(OpKind::Reshape { shape: vec![y * r, 1] }, &[t])?;
        let ones = self.ones(&[1, x])?;
        let wide = self.view(OpKind::Multiply, &[col, ones])?;
        let flat = self.view(OpKind::Reshape { shape: vec![y, r * x] }, &[wide])?;
        let back = self.view(OpKind::Transpose, &[flat])?;
        self.view(OpKind::Reshape { shape: vec![r, x * y] }, &[back])
    }

    /// `a: [m, n]` to `[m*k, n]` with `(i*k + j, c) = a(i, c)`.
    pub fn repeat_rows(&mut self, a: NodeId, m: usize, n: usize, k: usize) -> Result<NodeId> {
        let t = self.view(OpKind::Transpose, &[a])?;
        let wide = self.repeat(t, n, m, k)?;
        self.view(OpKind::Transpose, &[wide])
    }

    /// `onehot [l, 1] * row [1, n]`: places a row into a stacked result.
    pub fn place(&mut self, onehot: NodeId, row: NodeId) -> Result<NodeId> {
        self.view(OpKind::Multiply, &[onehot, row])
    }

    /// Marks a node with a free-form note.
    pub fn note(&mut self, id: NodeId, key: &str, value: &str) {
        self.g.nodes[id].attrs.insert(key.into(), json!(value));
    }
}
