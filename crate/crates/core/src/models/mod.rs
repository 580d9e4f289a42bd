//! Desk-scale Mamba and Mamba-2 blocks as static-shape operator graphs.

mod builder;
mod mamba;
mod mamba2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, XambaError};
use crate::graph::{execute, ExecOptions, OpGraph};
use crate::tensor::{softplus, Tensor};

pub use mamba::build_mamba_block;
pub use mamba2::build_mamba2_block;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Mamba,
    Mamba2,
}

impl std::str::FromStr for Variant {
    type Err = XambaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mamba" => Ok(Variant::Mamba),
            "mamba2" => Ok(Variant::Mamba2),
            other => Err(XambaError::Config(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Prefill,
    Decode,
}

impl std::str::FromStr for Mode {
    type Err = XambaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prefill" => Ok(Mode::Prefill),
            "decode" => Ok(Mode::Decode),
            other => Err(XambaError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MambaConfig {
    pub variant: Variant,
    pub d_model: usize,
    pub d_state: usize,
    pub d_conv: usize,
    pub expand: usize,
    /// Prefill length; inputs shorter than this are zero padded.
    pub seq_len: usize,
    /// Low-rank width of the step-size projection (Mamba only).
    pub dt_rank: usize,
    /// Mamba-2 only.
    pub chunk_size: usize,
    /// Mamba-2 only.
    pub n_heads: usize,
    pub eps: f32,
}

impl MambaConfig {
    /// Mamba block over four prompt tokens.
    pub fn mamba() -> Self {
        Self {
            variant: Variant::Mamba,
            d_model: 64,
            d_state: 16,
            d_conv: 4,
            expand: 2,
            seq_len: 4,
            dt_rank: 4,
            chunk_size: 256,
            n_heads: 1,
            eps: 1e-5,
        }
    }

    /// Mamba-2 block over one 256-token chunk with a single 64-wide head.
    pub fn mamba2() -> Self {
        Self {
            variant: Variant::Mamba2,
            d_model: 64,
            d_state: 16,
            d_conv: 4,
            expand: 1,
            seq_len: 256,
            dt_rank: 4,
            chunk_size: 256,
            n_heads: 1,
            eps: 1e-5,
        }
    }

    pub fn for_variant(v: Variant) -> Self {
        match v {
            Variant::Mamba => Self::mamba(),
            Variant::Mamba2 => Self::mamba2(),
        }
    }

    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_model", self.d_model),
            ("d_state", self.d_state),
            ("expand", self.expand),
            ("seq_len", self.seq_len),
            ("dt_rank", self.dt_rank),
            ("chunk_size", self.chunk_size),
            ("n_heads", self.n_heads),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(XambaError::Config(format!("{name} must be positive")));
            }
        }
        if self.d_conv < 2 {
            return Err(XambaError::Config("d_conv must be at least 2".into()));
        }
        if !(self.eps > 0.0) {
            return Err(XambaError::Config("eps must be positive".into()));
        }
        if self.variant == Variant::Mamba2 {
            if self.n_heads != 1 {
                return Err(XambaError::Config(format!(
                    "only single-head Mamba-2 blocks are supported, got n_heads={}",
                    self.n_heads
                )));
            }
            if !self.seq_len.is_multiple_of(self.chunk_size) {
                return Err(XambaError::Config(format!(
                    "seq_len {} is not a multiple of chunk_size {}; pad first",
                    self.seq_len, self.chunk_size
                )));
            }
            if self.seq_len != self.chunk_size {
                return Err(XambaError::Config(format!(
                    "prefill covers exactly one chunk; seq_len {} != chunk_size {}",
                    self.seq_len, self.chunk_size
                )));
            }
        }
        Ok(())
    }
}

/// All weights of one block. Unused fields are empty for the other variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmParams {
    pub norm_w: Tensor,
    pub in_proj: Tensor,
    pub conv_w: Tensor,
    pub conv_b: Tensor,
    /// Mamba: `[d_inner, dt_rank + 2 d_state]`.
    pub x_proj: Option<Tensor>,
    /// Mamba: `[dt_rank, d_inner]`.
    pub dt_proj: Option<Tensor>,
    pub dt_bias: Tensor,
    /// Mamba: `[d_state, d_inner]`, stored transposed. Mamba-2: `[1, 1]`.
    pub a: Tensor,
    pub d: Tensor,
    /// Mamba-2 gated norm gain.
    pub gate_norm_w: Option<Tensor>,
    pub out_proj: Tensor,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Result<Tensor> {
    let scale = 1.0 / (fan_in as f32).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-0.5f32..0.5) * scale).collect();
    Tensor::new(vec![rows, cols], data)
}

/// Bias whose softplus is a step size drawn uniformly from `[1e-3, 1e-1]`.
fn dt_bias(rng: &mut ChaCha8Rng, n: usize) -> Result<Tensor> {
    let data = (0..n)
        .map(|_| {
            let dt: f32 = rng.gen_range(1e-3f32..1e-1);
            dt + (-(-dt).exp_m1()).ln()
        })
        .collect();
    Tensor::new(vec![1, n], data)
}

impl SsmParams {
    /// Seeded weights, uniform in `[-0.5, 0.5] / sqrt(fan_in)`.
    pub fn random(cfg: &MambaConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dm, di, n, k) = (cfg.d_model, cfg.d_inner(), cfg.d_state, cfg.d_conv);
        let ones = |c| Tensor::ones(vec![1, c]);
        match cfg.variant {
            Variant::Mamba => {
                let r = cfg.dt_rank;
                Ok(Self {
                    norm_w: ones(dm)?,
                    in_proj: uniform(&mut rng, dm, 2 * di, dm)?,
                    conv_w: uniform(&mut rng, k, di, k)?,
                    conv_b: uniform(&mut rng, 1, di, k)?,
                    x_proj: Some(uniform(&mut rng, di, r + 2 * n, di)?),
                    dt_proj: Some(uniform(&mut rng, r, di, r)?),
                    dt_bias: dt_bias(&mut rng, di)?,
                    a: Tensor::from_fn(n, di, |s, _| -((s + 1) as f32))?,
                    d: ones(di)?,
                    gate_norm_w: None,
                    out_proj: uniform(&mut rng, di, dm, di)?,
                })
            }
            Variant::Mamba2 => {
                let conv_dim = di + 2 * n;
                Ok(Self {
                    norm_w: ones(dm)?,
                    in_proj: uniform(&mut rng, dm, 2 * di + 2 * n + 1, dm)?,
                    conv_w: uniform(&mut rng, k, conv_dim, k)?,
                    conv_b: uniform(&mut rng, 1, conv_dim, k)?,
                    x_proj: None,
                    dt_proj: None,
                    dt_bias: dt_bias(&mut rng, 1)?,
                    a: Tensor::new(vec![1, 1], vec![-1.0])?,
                    d: Tensor::ones(vec![1, 1])?,
                    gate_norm_w: Some(ones(di)?),
                    out_proj: uniform(&mut rng, di, dm, di)?,
                })
            }
        }
    }

    /// Step sizes `softplus(dt_raw + dt_bias)` for a `[L, width]` input.
    pub fn delta(&self, dt_raw: &Tensor) -> Result<Tensor> {
        let biased = crate::tensor::add(dt_raw, &self.dt_bias)?;
        Ok(biased.map(|v| softplus(v, 1.0)))
    }
}

/// Carried between decode steps: the last `d_conv - 1` convolution inputs and
/// the `[d_state, d_inner]` scan state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCache {
    pub conv: Tensor,
    pub ssm: Tensor,
}

impl StateCache {
    pub fn zeros(cfg: &MambaConfig) -> Result<Self> {
        let conv_width = match cfg.variant {
            Variant::Mamba => cfg.d_inner(),
            Variant::Mamba2 => cfg.d_inner() + 2 * cfg.d_state,
        };
        Ok(Self {
            conv: Tensor::zeros(vec![cfg.d_conv - 1, conv_width])?,
            ssm: Tensor::zeros(vec![cfg.d_state, cfg.d_inner()])?,
        })
    }

    /// Runs one decode step on a `[1, d_model]` token and advances the cache.
    /// Returns the `[1, d_model]` output.
    pub fn step(&mut self, decode: &OpGraph, token: &Tensor) -> Result<Tensor> {
        let mut out = execute(
            decode,
            &[token.clone(), self.conv.clone(), self.ssm.clone()],
            ExecOptions::for_graph(decode),
        )?;
        if out.len() != 3 {
            return Err(XambaError::Signature("decode graph must have 3 outputs".into()));
        }
        let ssm = out.pop().expect("3 outputs");
        let conv_in = out.pop().expect("3 outputs");
        let (k1, w) = self.conv.dims2()?;
        let mut window = self.conv.data()[w..].to_vec();
        window.extend_from_slice(conv_in.data());
        self.conv = Tensor::new(vec![k1, w], window)?;
        if ssm.shape() != self.ssm.shape() {
            return Err(XambaError::Shape(format!(
                "decode returned state {:?}, cache holds {:?}",
                ssm.shape(),
                self.ssm.shape()
            )));
        }
        self.ssm = ssm;
        Ok(out.pop().expect("3 outputs"))
    }
}

/// Builds the block graph for `cfg.variant`.
pub fn build_block(cfg: &MambaConfig, params: &SsmParams, mode: Mode) -> Result<OpGraph> {
    match cfg.variant {
        Variant::Mamba => build_mamba_block(cfg, params, mode),
        Variant::Mamba2 => build_mamba2_block(cfg, params, mode),
    }
}

/// Builds a seeded block with default dimensions.
pub fn default_block(variant: Variant, mode: Mode, seed: u64) -> Result<OpGraph> {
    let cfg = MambaConfig::for_variant(variant);
    let params = SsmParams::random(&cfg, seed)?;
    build_block(&cfg, &params, mode)
}

/// Zero-pads `[n, d]` tokens to `[target, d]`; returns the valid length.
pub fn pad_tokens(x: &Tensor, target: usize) -> Result<(Tensor, usize)> {
    let (n, d) = x.dims2()?;
    if n > target {
        return Err(XambaError::Shape(format!(
            "{n} tokens exceed the static length {target}"
        )));
    }
    let mut data = x.data().to_vec();
    data.resize(target * d, 0.0);
    Ok((Tensor::new(vec![target, d], data)?, n))
}
