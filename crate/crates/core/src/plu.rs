//! Piecewise-linear activation tables (C-LUT contents) for SiLU and Softplus.
//!
//! A table holds breakpoints `x_0 < ... < x_S`, one `(slope, intercept)` pair
//! per segment and a linear extension on each side. Fitting is interpolatory:
//! every segment is the chord of the exact function between its two
//! breakpoints, so the approximation is continuous and exact at the knots.

use serde::{Deserialize, Serialize};

use crate::error::{Result, XambaError};
use crate::tensor::{self, ActKind, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PluFunc {
    Silu,
    Softplus,
}

impl PluFunc {
    pub fn code(self) -> u8 {
        match self {
            PluFunc::Silu => 0,
            PluFunc::Softplus => 1,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(PluFunc::Silu),
            1 => Ok(PluFunc::Softplus),
            other => Err(XambaError::Format(format!("unknown C-LUT function code {other}"))),
        }
    }

    pub fn act_kind(self) -> ActKind {
        match self {
            PluFunc::Silu => ActKind::Silu,
            PluFunc::Softplus => ActKind::Softplus,
        }
    }

    pub fn from_act_kind(kind: ActKind) -> Option<Self> {
        match kind {
            ActKind::Silu => Some(PluFunc::Silu),
            ActKind::Softplus => Some(PluFunc::Softplus),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PluFunc::Silu => "silu",
            PluFunc::Softplus => "softplus",
        }
    }

    fn exact64(self, x: f64, beta: f64) -> f64 {
        match self {
            PluFunc::Silu => x / (1.0 + (-x).exp()),
            PluFunc::Softplus => {
                let bx = beta * x;
                bx.max(0.0) / beta + (-bx.abs()).exp().ln_1p() / beta
            }
        }
    }
}

impl std::str::FromStr for PluFunc {
    type Err = XambaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "silu" | "swish" => Ok(PluFunc::Silu),
            "softplus" => Ok(PluFunc::Softplus),
            other => Err(XambaError::Param(format!("no C-LUT support for {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluTable {
    pub func: PluFunc,
    pub beta: f32,
    pub breakpoints: Vec<f32>,
    pub slopes: Vec<f32>,
    pub intercepts: Vec<f32>,
    /// `(slope, intercept)` used below `x_0`.
    pub left_ext: [f32; 2],
    /// `(slope, intercept)` used above `x_S`.
    pub right_ext: [f32; 2],
}

impl PluTable {
    pub fn segments(&self) -> usize {
        self.slopes.len()
    }

    pub fn lo(&self) -> f32 {
        self.breakpoints[0]
    }

    pub fn hi(&self) -> f32 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    /// The function this table approximates, evaluated exactly in `f32`.
    pub fn exact(&self, x: f32) -> f32 {
        tensor::activation_scalar(x, self.func.act_kind(), self.beta)
    }

    fn check(&self) -> Result<()> {
        let s = self.slopes.len();
        if s == 0 || self.breakpoints.len() != s + 1 || self.intercepts.len() != s {
            return Err(XambaError::Format(format!(
                "inconsistent table lengths: {} breakpoints, {} slopes, {} intercepts",
                self.breakpoints.len(),
                s,
                self.intercepts.len()
            )));
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(XambaError::Format("breakpoints not strictly increasing".into()));
        }
        if !(self.beta > 0.0) {
            return Err(XambaError::Format(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Uniform interpolatory fit on `[lo, hi]` with `segments` chords.
pub fn fit_uniform(func: PluFunc, beta: f32, lo: f32, hi: f32, segments: usize) -> Result<PluTable> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(XambaError::Param(format!("invalid range [{lo}, {hi}]")));
    }
    if segments == 0 {
        return Err(XambaError::Param("segments must be at least 1".into()));
    }
    if !(beta > 0.0) {
        return Err(XambaError::Param(format!("beta must be positive, got {beta}")));
    }
    let h = (hi as f64 - lo as f64) / segments as f64;
    let breakpoints: Vec<f32> = (0..=segments)
        .map(|k| {
            if k == segments {
                hi
            } else {
                (lo as f64 + k as f64 * h) as f32
            }
        })
        .collect();
    let beta64 = beta as f64;
    let f: Vec<f64> = breakpoints.iter().map(|&x| func.exact64(x as f64, beta64)).collect();
    let mut slopes = Vec::with_capacity(segments);
    let mut intercepts = Vec::with_capacity(segments);
    for k in 0..segments {
        let (x0, x1) = (breakpoints[k] as f64, breakpoints[k + 1] as f64);
        let m = ((f[k + 1] - f[k]) / (x1 - x0)) as f32;
        // Intercept from the stored slope keeps the left knot exact after rounding.
        let c = (f[k] - m as f64 * x0) as f32;
        slopes.push(m);
        intercepts.push(c);
    }
    let table = PluTable {
        func,
        beta,
        breakpoints,
        slopes,
        intercepts,
        left_ext: [0.0, 0.0],
        right_ext: [1.0, 0.0],
    };
    table.check()?;
    Ok(table)
}

/// Segment index for `x`; a point on an interior breakpoint belongs to the
/// segment on its right, `x_S` to the last segment.
fn segment_of(table: &PluTable, x: f32) -> usize {
    let bp = &table.breakpoints;
    let s = table.slopes.len();
    // First breakpoint strictly greater than x, minus one.
    let idx = bp.partition_point(|&b| b <= x);
    idx.saturating_sub(1).min(s - 1)
}

pub fn eval(table: &PluTable, x: f32) -> Result<f32> {
    if !x.is_finite() {
        return Err(XambaError::Numeric {
            node: "plu".into(),
            msg: format!("non-finite input {x}"),
        });
    }
    Ok(eval_unchecked(table, x))
}

fn eval_unchecked(table: &PluTable, x: f32) -> f32 {
    let (m, c) = if x < table.lo() {
        (table.left_ext[0], table.left_ext[1])
    } else if x > table.hi() {
        (table.right_ext[0], table.right_ext[1])
    } else {
        let k = segment_of(table, x);
        (table.slopes[k], table.intercepts[k])
    };
    (m as f64 * x as f64 + c as f64) as f32
}

pub fn eval_tensor(table: &PluTable, x: &Tensor) -> Result<Tensor> {
    if let Some(bad) = x.data().iter().find(|v| !v.is_finite()) {
        return Err(XambaError::Numeric {
            node: "plu".into(),
            msg: format!("non-finite input {bad}"),
        });
    }
    Ok(x.map(|v| eval_unchecked(table, v)))
}

/// Worst absolute error against the exact activation on a uniform grid over
/// `[x_0 - 2, x_S + 2]`. Returns `(error, x at which it occurs)`.
pub fn max_error(table: &PluTable, grid_points: usize) -> (f64, f64) {
    let grid_points = grid_points.max(2);
    let lo = table.lo() as f64 - 2.0;
    let hi = table.hi() as f64 + 2.0;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let mut worst = (0.0f64, lo);
    for i in 0..grid_points {
        let x = (lo + i as f64 * step) as f32;
        let err = (eval_unchecked(table, x) as f64 - table.exact(x) as f64).abs();
        if err > worst.0 {
            worst = (err, x as f64);
        }
    }
    worst
}

const CLUT_MAGIC: &[u8; 4] = b"CLUT";
const CLUT_VERSION: u16 = 1;
pub const CLUT_HEADER_BYTES: usize = 16;

/// Binary C-LUT layout, little-endian: `"CLUT"`, `u16` version, `u8` function
/// code, `u8` reserved (0), `f32` beta, `u32` segment count, then `f32`
/// breakpoints, slopes, intercepts, left and right extensions.
pub fn serialize(table: &PluTable) -> Vec<u8> {
    let s = table.segments();
    let mut out = Vec::with_capacity(CLUT_HEADER_BYTES + (3 * s + 5) * 4);
    out.extend_from_slice(CLUT_MAGIC);
    out.extend_from_slice(&CLUT_VERSION.to_le_bytes());
    out.push(table.func.code());
    out.push(0);
    out.extend_from_slice(&table.beta.to_le_bytes());
    out.extend_from_slice(&(s as u32).to_le_bytes());
    let arrays = [
        table.breakpoints.as_slice(),
        table.slopes.as_slice(),
        table.intercepts.as_slice(),
        table.left_ext.as_slice(),
        table.right_ext.as_slice(),
    ];
    for v in arrays.into_iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn deserialize(bytes: &[u8]) -> Result<PluTable> {
    if bytes.len() < CLUT_HEADER_BYTES {
        return Err(XambaError::Format("truncated C-LUT header".into()));
    }
    if &bytes[..4] != CLUT_MAGIC {
        return Err(XambaError::Format("bad C-LUT magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CLUT_VERSION {
        return Err(XambaError::Format(format!("unsupported C-LUT version {version}")));
    }
    let func = PluFunc::from_code(bytes[6])?;
    if bytes[7] != 0 {
        return Err(XambaError::Format("reserved C-LUT byte is not zero".into()));
    }
    let beta = f32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let s = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let want = CLUT_HEADER_BYTES + (3 * s + 5) * 4;
    if bytes.len() != want {
        return Err(XambaError::Format(format!(
            "C-LUT payload is {} bytes, expected {want}",
            bytes.len()
        )));
    }
    let mut vals = bytes[CLUT_HEADER_BYTES..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut take = |n: usize| -> Vec<f32> { vals.by_ref().take(n).collect() };
    let breakpoints = take(s + 1);
    let slopes = take(s);
    let intercepts = take(s);
    let l = take(2);
    let r = take(2);
    let table = PluTable {
        func,
        beta,
        breakpoints,
        slopes,
        intercepts,
        left_ext: [l[0], l[1]],
        right_ext: [r[0], r[1]],
    };
    table.check()?;
    Ok(table)
}
