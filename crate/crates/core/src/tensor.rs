//! Dense row-major `f32` tensors and the reference kernels every rewrite is
//! checked against.
//!
//! Accumulation order is fixed: `cumsum_ref` adds rows sequentially down each
//! column and `matmul` accumulates the inner dimension left to right. Tests
//! that compare a rewrite with its reference rely on that order being stable.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, XambaError};

/// Dense tensor of rank 1 or 2.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?}{:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?}[{} values]", self.shape, self.data.len())
        }
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(XambaError::Shape(format!("rank must be 1 or 2, got {}", shape.len())));
        }
        if shape.contains(&0) {
            return Err(XambaError::Shape(format!("dimensions must be positive, got {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(XambaError::Shape(format!(
                "shape {shape:?} holds {n} elements but {} were given",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: Vec<usize>, value: f32) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: Vec<usize>) -> Result<Self> {
        Self::full(shape, 1.0)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(vec![n, n])?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    /// Builds a 2-D tensor from nested rows.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(XambaError::Shape("ragged rows".into()));
        }
        Self::new(vec![m, n], rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[m, n] => Ok((m, n)),
            s => Err(XambaError::Shape(format!("expected rank 2, got {s:?}"))),
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.shape[self.shape.len() - 1] + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let n = self.shape[self.shape.len() - 1];
        &self.data[i * n..(i + 1) * n]
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(XambaError::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Self::new(shape, self.data.clone())
    }

    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.dims2()?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Self::new(vec![n, m], out)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Contiguous slice along `axis` (0 = rows, 1 = columns) of a rank-2 tensor.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        let (m, n) = self.dims2()?;
        let extent = if axis == 0 { m } else { n };
        if axis > 1 || len == 0 || start + len > extent {
            return Err(XambaError::Shape(format!(
                "slice axis {axis} [{start}, {}) out of range for {:?}",
                start + len,
                self.shape
            )));
        }
        if axis == 0 {
            Self::new(vec![len, n], self.data[start * n..(start + len) * n].to_vec())
        } else {
            Self::from_fn(m, len, |i, j| self.data[i * n + start + j])
        }
    }
}

/// Prefix sum down the rows: `out[i, j] = x[0, j] + ... + x[i, j]`.
pub fn cumsum_ref(x: &Tensor) -> Result<Tensor> {
    let (m, n) = x.dims2()?;
    let mut out = x.data.clone();
    for i in 1..m {
        for j in 0..n {
            out[i * n + j] = out[(i - 1) * n + j] + x.data[i * n + j];
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Column sums, `[m, n] -> [1, n]`, accumulated in the same order as
/// [`cumsum_ref`] so the result equals its last row exactly.
pub fn reducesum_ref(x: &Tensor) -> Result<Tensor> {
    let (m, n) = x.dims2()?;
    let mut acc = x.row(0).to_vec();
    for i in 1..m {
        for (a, v) in acc.iter_mut().zip(x.row(i)) {
            *a += v;
        }
    }
    Tensor::new(vec![1, n], acc)
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(XambaError::Shape(format!(
            "matmul inner dimensions differ: {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let arow = a.row(i);
        for j in 0..n {
            let mut acc = 0.0f32;
            for (p, &av) in arow.iter().enumerate() {
                acc += av * b.data[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `[1, m] x [m, n] -> [1, n]`.
pub fn vecmat(v: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (one, m) = v.dims2()?;
    if one != 1 {
        return Err(XambaError::Shape(format!(
            "vecmat expects a [1, m] vector, got {:?}",
            v.shape
        )));
    }
    let (m2, _) = x.dims2()?;
    if m != m2 {
        return Err(XambaError::Shape(format!(
            "vecmat inner dimensions differ: {:?} x {:?}",
            v.shape, x.shape
        )));
    }
    matmul(v, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActKind {
    Sigmoid,
    Silu,
    Softplus,
    Exp,
}

impl ActKind {
    pub fn label(self) -> &'static str {
        match self {
            ActKind::Sigmoid => "Sigmoid",
            ActKind::Silu => "SiLU",
            ActKind::Softplus => "Softplus",
            ActKind::Exp => "Exp",
        }
    }
}

impl std::str::FromStr for ActKind {
    type Err = XambaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ActKind::Sigmoid),
            "silu" | "swish" => Ok(ActKind::Silu),
            "softplus" => Ok(ActKind::Softplus),
            "exp" => Ok(ActKind::Exp),
            other => Err(XambaError::Param(format!("unknown activation {other:?}"))),
        }
    }
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f32) -> f32 {
    x * sigmoid(x)
}

/// `log(1 + exp(beta * x)) / beta` without overflow for large `|beta * x|`.
pub fn softplus(x: f32, beta: f32) -> f32 {
    let bx = beta * x;
    bx.max(0.0) / beta + (-bx.abs()).exp().ln_1p() / beta
}

/// Scalar form of [`activation`]; `beta` is only read by softplus.
pub fn activation_scalar(x: f32, kind: ActKind, beta: f32) -> f32 {
    match kind {
        ActKind::Sigmoid => sigmoid(x),
        ActKind::Silu => silu(x),
        ActKind::Softplus => softplus(x, beta),
        ActKind::Exp => x.exp(),
    }
}

pub fn activation(x: &Tensor, kind: ActKind, beta: f32) -> Result<Tensor> {
    if !(beta > 0.0) {
        return Err(XambaError::Param(format!("beta must be positive, got {beta}")));
    }
    Ok(x.map(|v| activation_scalar(v, kind, beta)))
}

/// Outcome of [`allclose`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloseReport {
    pub passed: bool,
    pub max_abs_diff: f32,
    pub worst_index: usize,
}

/// `|a - b| <= atol + rtol * |b|` everywhere. NaN never compares close.
pub fn allclose(a: &Tensor, b: &Tensor, rtol: f32, atol: f32) -> Result<CloseReport> {
    if a.shape != b.shape {
        return Err(XambaError::Shape(format!(
            "allclose shapes differ: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    let mut report = CloseReport {
        passed: true,
        max_abs_diff: 0.0,
        worst_index: 0,
    };
    for (i, (&x, &y)) in a.data.iter().zip(&b.data).enumerate() {
        let d = (x - y).abs();
        let d = if d.is_nan() { f32::INFINITY } else { d };
        if d > report.max_abs_diff {
            report.max_abs_diff = d;
            report.worst_index = i;
        }
        if d > atol + rtol * y.abs() {
            report.passed = false;
        }
    }
    Ok(report)
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    if a == b {
        return Ok(a.to_vec());
    }
    if nb == 1 {
        return Ok(a.to_vec());
    }
    if na == 1 {
        return Ok(b.to_vec());
    }
    if a.len() == 2 && b.len() == 2 {
        let mut out = Vec::with_capacity(2);
        for d in 0..2 {
            match (a[d], b[d]) {
                (x, y) if x == y => out.push(x),
                (1, y) => out.push(y),
                (x, 1) => out.push(x),
                _ => return Err(XambaError::Shape(format!("shapes {a:?} and {b:?} do not broadcast"))),
            }
        }
        return Ok(out);
    }
    Err(XambaError::Shape(format!("shapes {a:?} and {b:?} do not broadcast")))
}

/// Output shape of an elementwise binary op: equal shapes, a single-element
/// operand, or rank-2 row/column vectors stretched along their unit axis.
pub fn binary_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    broadcast_shape(a, b)
}

fn binary(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
    let shape = broadcast_shape(&a.shape, &b.shape)?;
    if a.shape == b.shape {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(shape, data);
    }
    if b.data.len() == 1 {
        let s = b.data[0];
        return Tensor::new(shape, a.data.iter().map(|&x| f(x, s)).collect());
    }
    if a.data.len() == 1 {
        let s = a.data[0];
        return Tensor::new(shape, b.data.iter().map(|&y| f(s, y)).collect());
    }
    let idx = |t: &Tensor, i: usize, j: usize| -> f32 {
        let (m, n) = (t.shape[0], t.shape[1]);
        t.data[(if m == 1 { 0 } else { i }) * n + if n == 1 { 0 } else { j }]
    };
    let (m, n) = (shape[0], shape[1]);
    let mut data = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            data.push(f(idx(a, i, j), idx(b, i, j)));
        }
    }
    Tensor::new(shape, data)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary(a, b, |x, y| x + y)
}

pub fn multiply(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary(a, b, |x, y| x * y)
}

/// Row-wise RMS normalisation with a `[1, n]` gain.
pub fn rms_norm(x: &Tensor, weight: &Tensor, eps: f32) -> Result<Tensor> {
    let (m, n) = x.dims2()?;
    if weight.len() != n {
        return Err(XambaError::Shape(format!(
            "rms_norm weight has {} values for {n} columns",
            weight.len()
        )));
    }
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let row = x.row(i);
        let ms = row.iter().map(|v| v * v).sum::<f32>() / n as f32;
        let inv = 1.0 / (ms + eps).sqrt();
        out.extend(row.iter().zip(&weight.data).map(|(v, w)| v * inv * w));
    }
    Tensor::new(vec![m, n], out)
}

/// Row-wise softmax.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    let (m, n) = x.dims2()?;
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let row = x.row(i);
        let mx = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let e: Vec<f32> = row.iter().map(|v| (v - mx).exp()).collect();
        let s: f32 = e.iter().sum();
        out.extend(e.iter().map(|v| v / s));
    }
    Tensor::new(vec![m, n], out)
}

/// Depthwise 1-D convolution over time with full padding, PyTorch style.
///
/// `x` is `[L, C]`, `weight` is `[K, C]`. The sequence is extended by `K-1`
/// leading rows (`prefix`, zeros when absent) and `K-1` trailing zero rows, so
/// the output is `[L + K - 1, C]` and its first `L` rows are the causal result.
pub fn conv1d(x: &Tensor, weight: &Tensor, prefix: Option<&Tensor>) -> Result<Tensor> {
    let (l, c) = x.dims2()?;
    let (k, c2) = weight.dims2()?;
    if c != c2 {
        return Err(XambaError::Shape(format!(
            "conv1d channels differ: {:?} vs weight {:?}",
            x.shape, weight.shape
        )));
    }
    let pad = k - 1;
    let total = l + 2 * pad;
    let mut padded = vec![0.0f32; total * c];
    if let Some(p) = prefix {
        if p.shape() != [pad, c] {
            return Err(XambaError::Shape(format!(
                "conv1d prefix must be [{pad}, {c}], got {:?}",
                p.shape
            )));
        }
        padded[..pad * c].copy_from_slice(&p.data);
    }
    padded[pad * c..(pad + l) * c].copy_from_slice(&x.data);
    let out_len = l + pad;
    let mut out = vec![0.0f32; out_len * c];
    for t in 0..out_len {
        for ch in 0..c {
            let mut acc = 0.0f32;
            for j in 0..k {
                acc += weight.data[j * c + ch] * padded[(t + j) * c + ch];
            }
            out[t * c + ch] = acc;
        }
    }
    Tensor::new(vec![out_len, c], out)
}

const XTEN_MAGIC: &[u8; 4] = b"XTEN";

/// Writes the raw tensor format: `"XTEN"`, `u8` rank, `u32` dims, `f32` payload,
/// all little-endian.
pub fn write_tensor<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    w.write_all(XTEN_MAGIC)?;
    w.write_all(&[t.rank() as u8])?;
    for &d in &t.shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in &t.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| XambaError::Format("truncated tensor header".into()))?;
    if &magic != XTEN_MAGIC {
        return Err(XambaError::Format("bad tensor magic".into()));
    }
    let mut rank = [0u8; 1];
    r.read_exact(&mut rank)
        .map_err(|_| XambaError::Format("truncated tensor header".into()))?;
    let mut shape = Vec::with_capacity(rank[0] as usize);
    for _ in 0..rank[0] {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| XambaError::Format("truncated tensor dims".into()))?;
        shape.push(u32::from_le_bytes(b) as usize);
    }
    let n: usize = shape.iter().product();
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| XambaError::Format("truncated tensor payload".into()))?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x32() -> Tensor {
        Tensor::from_rows(&[vec![1., 2.], vec![3., 4.], vec![5., 6.]]).unwrap()
    }

    #[test]
    fn cumsum_examples() {
        let c = cumsum_ref(&x32()).unwrap();
        assert_eq!(c.data(), &[1., 2., 4., 6., 9., 12.]);
        let one = Tensor::from_rows(&[vec![3., -1., 7.]]).unwrap();
        assert_eq!(cumsum_ref(&one).unwrap(), one);
        let z = Tensor::zeros(vec![4, 4]).unwrap();
        assert_eq!(cumsum_ref(&z).unwrap(), z);
        assert!(cumsum_ref(&Tensor::ones(vec![3]).unwrap()).is_err());
    }

    #[test]
    fn reducesum_examples() {
        assert_eq!(reducesum_ref(&x32()).unwrap().data(), &[9., 12.]);
        let r = reducesum_ref(&Tensor::ones(vec![5, 3]).unwrap()).unwrap();
        assert_eq!(r.shape(), &[1, 3]);
        assert_eq!(r.data(), &[5., 5., 5.]);
        assert!(reducesum_ref(&Tensor::ones(vec![5]).unwrap()).is_err());
    }

    #[test]
    fn matmul_examples() {
        let x = x32();
        assert_eq!(matmul(&Tensor::identity(3).unwrap(), &x).unwrap(), x);
        let tri = Tensor::from_rows(&[vec![1., 0., 0.], vec![1., 1., 0.], vec![1., 1., 1.]]).unwrap();
        assert_eq!(matmul(&tri, &x).unwrap(), cumsum_ref(&x).unwrap());
        let z = matmul(&Tensor::zeros(vec![3, 3]).unwrap(), &x).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(matmul(&x, &x).is_err());
    }

    #[test]
    fn vecmat_examples() {
        let x = x32();
        let r = vecmat(&Tensor::ones(vec![1, 3]).unwrap(), &x).unwrap();
        assert_eq!(r, reducesum_ref(&x).unwrap());
        let e1 = Tensor::from_rows(&[vec![0., 1., 0.]]).unwrap();
        assert_eq!(vecmat(&e1, &x).unwrap().data(), x.row(1));
        let z = vecmat(&Tensor::zeros(vec![1, 3]).unwrap(), &x).unwrap();
        assert_eq!(z, Tensor::zeros(vec![1, 2]).unwrap());
        assert!(vecmat(&Tensor::ones(vec![1, 2]).unwrap(), &x).is_err());
    }

    #[test]
    fn activation_examples() {
        let z = Tensor::zeros(vec![1]).unwrap();
        assert_eq!(activation(&z, ActKind::Silu, 1.0).unwrap().data()[0], 0.0);
        let sp = activation(&z, ActKind::Softplus, 1.0).unwrap().data()[0];
        assert!((sp - std::f32::consts::LN_2).abs() < 1e-6);
        assert_eq!(activation(&z, ActKind::Sigmoid, 1.0).unwrap().data()[0], 0.5);
        assert!(activation(&z, ActKind::Softplus, 0.0).is_err());
        assert!(activation(&z, ActKind::Softplus, -1.0).is_err());
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        assert_eq!(softplus(100.0, 1.0), 100.0);
        assert!(softplus(-100.0, 1.0) >= 0.0);
        assert!(softplus(-100.0, 1.0) < 1e-30);
        let v = softplus(50.0, 2.0);
        assert!((v - 50.0).abs() < 1e-5);
        assert!(softplus(89.0, 1.0).is_finite());
    }

    #[test]
    fn allclose_examples() {
        let x = x32();
        let r = allclose(&x, &x, 0.0, 0.0).unwrap();
        assert!(r.passed);
        assert_eq!(r.max_abs_diff, 0.0);
        let a = Tensor::new(vec![1], vec![1.0]).unwrap();
        let b = Tensor::new(vec![1], vec![1.0 + 1e-3]).unwrap();
        assert!(!allclose(&a, &b, 0.0, 1e-4).unwrap().passed);
        assert!(allclose(&a, &x, 0.0, 1.0).is_err());
        let nan = Tensor::new(vec![1], vec![f32::NAN]).unwrap();
        assert!(!allclose(&nan, &a, 1.0, 1.0).unwrap().passed);
    }

    #[test]
    fn allclose_reports_worst_index() {
        let a = Tensor::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap();
        let b = Tensor::new(vec![3], vec![0.1, -0.5, 0.2]).unwrap();
        let r = allclose(&a, &b, 0.0, 1.0).unwrap();
        assert!(r.passed);
        assert_eq!(r.worst_index, 1);
        assert_eq!(r.max_abs_diff, 0.5);
    }

    #[test]
    fn broadcasting_rules() {
        let x = x32();
        let col = Tensor::new(vec![3, 1], vec![1., 10., 100.]).unwrap();
        let row = Tensor::new(vec![1, 2], vec![1., -1.]).unwrap();
        assert_eq!(multiply(&x, &col).unwrap().data(), &[1., 2., 30., 40., 500., 600.]);
        assert_eq!(multiply(&x, &row).unwrap().data(), &[1., -2., 3., -4., 5., -6.]);
        let outer = multiply(&col, &row).unwrap();
        assert_eq!(outer.shape(), &[3, 2]);
        assert_eq!(outer.data(), &[1., -1., 10., -10., 100., -100.]);
        let s = Tensor::new(vec![1], vec![2.0]).unwrap();
        assert_eq!(add(&s, &x).unwrap().data(), &[3., 4., 5., 6., 7., 8.]);
        assert!(add(&x, &Tensor::ones(vec![2, 2]).unwrap()).is_err());
    }

    #[test]
    fn conv1d_is_causal_in_first_rows() {
        let x = Tensor::new(vec![3, 1], vec![1., 2., 3.]).unwrap();
        let w = Tensor::new(vec![2, 1], vec![0.5, 1.0]).unwrap();
        let y = conv1d(&x, &w, None).unwrap();
        assert_eq!(y.shape(), &[4, 1]);
        assert_eq!(&y.data()[..3], &[1.0, 2.5, 4.0]);
        let p = Tensor::new(vec![1, 1], vec![4.0]).unwrap();
        let y = conv1d(&x, &w, Some(&p)).unwrap();
        assert_eq!(y.data()[0], 3.0);
    }

    #[test]
    fn xten_roundtrip() {
        let x = x32();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &x).unwrap();
        assert_eq!(&buf[..4], b"XTEN");
        assert_eq!(buf.len(), 4 + 1 + 8 + 24);
        assert_eq!(read_tensor(buf.as_slice()).unwrap(), x);
        assert!(read_tensor(&buf[..10]).is_err());
    }
}
