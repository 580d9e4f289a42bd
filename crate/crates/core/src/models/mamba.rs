//! Mamba block with the selective scan unrolled over the static length.

use crate::error::{Result, XambaError};
use crate::graph::{OpGraph, OpKind};
use crate::tensor::{ActKind, Tensor};

use super::builder::Builder;
use super::{MambaConfig, Mode, SsmParams, Variant};

pub fn build_mamba_block(cfg: &MambaConfig, p: &SsmParams, mode: Mode) -> Result<OpGraph> {
    cfg.validate()?;
    if cfg.variant != Variant::Mamba {
        return Err(XambaError::Config("build_mamba_block needs a mamba config".into()));
    }
    let (dm, di, n, k, r) = (cfg.d_model, cfg.d_inner(), cfg.d_state, cfg.d_conv, cfg.dt_rank);
    let l = match mode {
        Mode::Prefill => cfg.seq_len,
        Mode::Decode => 1,
    };
    let x_proj = p
        .x_proj
        .clone()
        .ok_or_else(|| XambaError::Config("missing x_proj".into()))?;
    let dt_proj = p
        .dt_proj
        .clone()
        .ok_or_else(|| XambaError::Config("missing dt_proj".into()))?;
    let name = match mode {
        Mode::Prefill => "mamba_prefill",
        Mode::Decode => "mamba_decode",
    };
    let mut b = Builder::new(name);

    let x = b.input("x", &[l, dm])?;
    let (prefix, h0) = match mode {
        Mode::Prefill => (None, None),
        Mode::Decode => (
            Some(b.input("conv_state", &[k - 1, di])?),
            Some(b.input("ssm_state", &[n, di])?),
        ),
    };

    let norm_w = b.constant("norm_w", p.norm_w.clone())?;
    let normed = b.op(OpKind::RMSNorm { eps: cfg.eps }, &[x, norm_w])?;
    let w_in = b.constant("in_proj", p.in_proj.clone())?;
    let proj = b.matmul(normed, w_in)?;
    let xs = b.cols(proj, 0, di)?;
    let z = b.cols(proj, di, di)?;

    let conv_w = b.constant("conv_w", p.conv_w.clone())?;
    let conv = match prefix {
        Some(pre) => b.op(OpKind::Conv1d { kernel: k }, &[xs, conv_w, pre])?,
        None => b.op(OpKind::Conv1d { kernel: k }, &[xs, conv_w])?,
    };
    let conv_b = b.constant("conv_b", p.conv_b.clone())?;
    let conv = b.add(conv, conv_b)?;
    let conv = b.rows(conv, 0, l)?;
    let u = b.act(ActKind::Silu, conv)?;

    let w_x = b.constant("x_proj", x_proj)?;
    let xdbl = b.matmul(u, w_x)?;
    let dt = b.cols(xdbl, 0, r)?;
    let bm = b.cols(xdbl, r, n)?;
    let cm = b.cols(xdbl, r + n, n)?;
    let w_dt = b.constant("dt_proj", dt_proj)?;
    let dt = b.matmul(dt, w_dt)?;
    let dt_bias = b.constant("dt_bias", p.dt_bias.clone())?;
    let dt = b.add(dt, dt_bias)?;
    let delta = b.act(ActKind::Softplus, dt)?;

    // Discretisation for all tokens at once; row t*N + s holds state s of token t.
    let delta_rep = b.repeat_rows(delta, l, di, n)?;
    let a_rep = Tensor::from_fn(l * n, di, |row, c| p.a.at(row % n, c))?;
    let a_rep = b.constant("A", a_rep)?;
    let da = b.mul(delta_rep, a_rep)?;
    let da = b.exp(da)?;
    let du = b.mul(delta, u)?;
    let du_rep = b.repeat_rows(du, l, di, n)?;
    let b_col = b.reshape(bm, &[l * n, 1])?;
    let dbx = b.mul(du_rep, b_col)?;

    let mut h = match h0 {
        Some(h) => h,
        None => b.constant("h0", Tensor::zeros(vec![n, di])?)?,
    };
    let mut y = None;
    for t in 0..l {
        let da_t = b.rows(da, t * n, n)?;
        let dbx_t = b.rows(dbx, t * n, n)?;
        let c_t = b.rows(cm, t, 1)?;
        let decayed = b.mul(da_t, h)?;
        h = b.add(decayed, dbx_t)?;
        let y_t = b.matmul(c_t, h)?;
        y = Some(match (l, y) {
            (1, _) => y_t,
            (_, prev) => {
                let onehot = Tensor::from_fn(l, 1, |i, _| if i == t { 1.0 } else { 0.0 })?;
                let onehot = b.constant("onehot", onehot)?;
                let placed = b.place(onehot, y_t)?;
                match prev {
                    Some(acc) => b.add(acc, placed)?,
                    None => placed,
                }
            }
        });
    }
    let y = y.expect("at least one token");

    let d = b.constant("D", p.d.clone())?;
    let skip = b.mul(u, d)?;
    let y = b.add(y, skip)?;
    let gate = b.act(ActKind::Silu, z)?;
    let y = b.mul(y, gate)?;
    let w_out = b.constant("out_proj", p.out_proj.clone())?;
    let y = b.matmul(y, w_out)?;
    let out = b.add(y, x)?;

    let mut g = b.g;
    match mode {
        Mode::Prefill => g.set_outputs(vec![out])?,
        Mode::Decode => g.set_outputs(vec![out, xs, h])?,
    }
    g.metadata.insert("model".into(), "mamba".into());
    g.metadata.insert("mode".into(), format!("{mode:?}").to_lowercase());
    g.metadata.insert("seq_len".into(), l.to_string());
    g.metadata.insert("strict_finite".into(), "true".into());
    Ok(g)
}
