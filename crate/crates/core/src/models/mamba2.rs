//! Single-head Mamba-2 block: the chunked SSD scan over one chunk for
//! prefill, the plain recurrence for decode.

use crate::error::{Result, XambaError};
use crate::graph::{NodeId, OpGraph, OpKind};
use crate::tensor::{ActKind, Tensor};

use super::builder::Builder;
use super::{MambaConfig, Mode, SsmParams, Variant};

/// Finite stand-in for the `-inf` fill above the diagonal of a segment sum;
/// `exp` maps it to exactly zero.
const MASK_FILL: f32 = -1e30;

fn strict_lower(n: usize) -> Result<Tensor> {
    Tensor::from_fn(n, n, |i, j| if j < i { 1.0 } else { 0.0 })
}

fn upper_fill(n: usize) -> Result<Tensor> {
    Tensor::from_fn(n, n, |i, j| if j > i { MASK_FILL } else { 0.0 })
}

fn unit_col(n: usize, k: usize) -> Result<Tensor> {
    Tensor::from_fn(n, 1, |i, _| if i == k { 1.0 } else { 0.0 })
}

/// Row-wise RMS normalisation written out as primitive ops:
/// `x * (mean(x^2) + eps)^(-1/2) * w`, reducing over columns.
fn rms_norm(b: &mut Builder, x: NodeId, rows: usize, cols: usize, w: Tensor, eps: f32) -> Result<NodeId> {
    let sq = b.op(OpKind::Power { exponent: 2.0 }, &[x])?;
    let sq_t = b.tview(sq)?;
    let ss = b.reduce(sq_t)?;
    let inv_n = b.scalar("inv_width", 1.0 / cols as f32)?;
    let ms = b.mul(ss, inv_n)?;
    let eps = b.scalar("eps", eps)?;
    let v = b.add(ms, eps)?;
    let sd = b.op(OpKind::Sqrt, &[v])?;
    let inv = b.op(OpKind::Power { exponent: -1.0 }, &[sd])?;
    let inv = if rows == 1 { inv } else { b.tview(inv)? };
    let xn = b.mul(x, inv)?;
    let w = b.constant("norm_w", w)?;
    b.mul(xn, w)
}

/// Segment sum `exp(segsum(a))` of a `[n, 1]` column: lower triangle holds
/// `exp(a[j+1] + ... + a[i])`, the strict upper triangle is zero.
fn exp_segsum(b: &mut Builder, a: NodeId, n: usize, note: &str) -> Result<NodeId> {
    let lower = b.constant("segsum_mask", strict_lower(n)?)?;
    let masked = b.mul(a, lower)?;
    let cs = b.cumsum(masked)?;
    b.note(cs, "cumsum", note);
    let fill = b.constant("segsum_fill", upper_fill(n)?)?;
    let filled = b.add(cs, fill)?;
    b.exp(filled)
}

pub fn build_mamba2_block(cfg: &MambaConfig, p: &SsmParams, mode: Mode) -> Result<OpGraph> {
    cfg.validate()?;
    if cfg.variant != Variant::Mamba2 {
        return Err(XambaError::Config("build_mamba2_block needs a mamba2 config".into()));
    }
    let gate_w = p
        .gate_norm_w
        .clone()
        .ok_or_else(|| XambaError::Config("missing gated norm weight".into()))?;
    match mode {
        Mode::Prefill => prefill(cfg, p, gate_w),
        Mode::Decode => decode(cfg, p, gate_w),
    }
}

struct Front {
    x: NodeId,
    z: NodeId,
    xs: NodeId,
    bm: NodeId,
    cm: NodeId,
    dt: NodeId,
    conv_in: NodeId,
}

/// Norm, fused input projection, causal conv and step sizes.
fn front(
    b: &mut Builder,
    cfg: &MambaConfig,
    p: &SsmParams,
    l: usize,
    prefix: Option<NodeId>,
    x: NodeId,
) -> Result<Front> {
    let (dm, di, n, k) = (cfg.d_model, cfg.d_inner(), cfg.d_state, cfg.d_conv);
    let conv_dim = di + 2 * n;
    let normed = rms_norm(b, x, l, dm, p.norm_w.clone(), cfg.eps)?;
    let w_in = b.constant("in_proj", p.in_proj.clone())?;
    let proj = b.matmul(normed, w_in)?;
    let z = b.cols(proj, 0, di)?;
    let xbc = b.cols(proj, di, conv_dim)?;
    let dt = b.cols(proj, di + conv_dim, 1)?;

    let conv_w = b.constant("conv_w", p.conv_w.clone())?;
    let conv = match prefix {
        Some(pre) => b.op(OpKind::Conv1d { kernel: k }, &[xbc, conv_w, pre])?,
        None => b.op(OpKind::Conv1d { kernel: k }, &[xbc, conv_w])?,
    };
    let conv_b = b.constant("conv_b", p.conv_b.clone())?;
    let conv = b.add(conv, conv_b)?;
    let conv = b.rows(conv, 0, l)?;
    let conv = b.act(ActKind::Silu, conv)?;
    let xs = b.cols(conv, 0, di)?;
    let bm = b.cols(conv, di, n)?;
    let cm = b.cols(conv, di + n, n)?;

    let dt_bias = b.constant("dt_bias", p.dt_bias.clone())?;
    let dt = b.add(dt, dt_bias)?;
    let dt = b.act(ActKind::Softplus, dt)?;
    Ok(Front {
        x,
        z,
        xs,
        bm,
        cm,
        dt,
        conv_in: xbc,
    })
}

/// D skip, gated norm, output projection and residual.
fn back(
    b: &mut Builder,
    cfg: &MambaConfig,
    p: &SsmParams,
    gate_w: Tensor,
    f: &Front,
    y: NodeId,
    l: usize,
) -> Result<NodeId> {
    let d = b.constant("D", p.d.clone())?;
    let skip = b.mul(f.xs, d)?;
    let y = b.add(y, skip)?;
    let gate = b.act(ActKind::Silu, f.z)?;
    let y = b.mul(y, gate)?;
    let y = rms_norm(b, y, l, cfg.d_inner(), gate_w, cfg.eps)?;
    let w_out = b.constant("out_proj", p.out_proj.clone())?;
    let y = b.matmul(y, w_out)?;
    b.add(y, f.x)
}

fn prefill(cfg: &MambaConfig, p: &SsmParams, gate_w: Tensor) -> Result<OpGraph> {
    let (l, n, pd) = (cfg.seq_len, cfg.d_state, cfg.d_inner());
    let mut b = Builder::new("mamba2_prefill");
    let x = b.input("x", &[l, cfg.d_model])?;
    let f = front(&mut b, cfg, p, l, None, x)?;

    let xdt = b.mul(f.xs, f.dt)?;
    let a = b.constant("A", p.a.clone())?;
    let adt = b.mul(f.dt, a)?;
    let adt_v = b.reshape(adt, &[l])?;
    let acs = b.cumsum(adt_v)?;
    b.note(acs, "cumsum", "A_cumsum");
    let acs = b.reshape(acs, &[l, 1])?;

    // Intra-chunk output.
    let lmat = exp_segsum(&mut b, adt, l, "segsum")?;
    let c_t = b.tview(f.cm)?;
    let b_t = b.tview(f.bm)?;
    let cx = b.repeat(c_t, n, l, l)?;
    let bx = b.tile(b_t, n, l, l)?;
    let g = b.mul(cx, bx)?;
    let g = b.reduce(g)?;
    let g = b.reshape(g, &[l, l])?;
    let m = b.mul(g, lmat)?;
    let m_t = b.tview(m)?;
    let mx = b.repeat(m_t, l, l, pd)?;
    let xx = b.tile(xdt, l, l, pd)?;
    let yd = b.mul(mx, xx)?;
    let yd = b.reduce(yd)?;
    let y_diag = b.reshape(yd, &[l, pd])?;

    // Chunk state.
    let total = b.reduce(adt)?;
    let neg = b.scalar("minus_one", -1.0)?;
    let neg = b.mul(acs, neg)?;
    let diff = b.add(neg, total)?;
    let decay = b.exp(diff)?;
    let bd = b.mul(f.bm, decay)?;
    let xr = b.repeat(xdt, l, pd, n)?;
    let bt = b.tile(bd, l, pd, n)?;
    let st = b.mul(xr, bt)?;
    let states = b.reduce(st)?;

    // Inter-chunk recurrence over [initial state, this chunk].
    let e0 = b.constant("e0", unit_col(2, 0)?)?;
    let e1 = b.constant("e1", unit_col(2, 1)?)?;
    let totals = b.mul(e1, total)?;
    let dc = exp_segsum(&mut b, totals, 2, "chunk segsum (assumed placement)")?;
    let sc = b.mul(e1, states)?;
    let dc_t = b.tview(dc)?;
    let dx = b.repeat(dc_t, 2, 2, pd * n)?;
    let sx = b.tile(sc, 2, 2, pd * n)?;
    let ns = b.mul(dx, sx)?;
    let ns = b.reduce(ns)?;
    let ns = b.reshape(ns, &[2, pd * n])?;
    let prev = b.mul(ns, e0)?;
    let prev = b.reduce(prev)?;
    let last = b.mul(ns, e1)?;
    let last = b.reduce(last)?;

    // State contribution to the outputs.
    let prev = b.reshape(prev, &[pd, n])?;
    let prev_t = b.tview(prev)?;
    let cx = b.repeat(c_t, n, l, pd)?;
    let px = b.tile(prev_t, n, l, pd)?;
    let yo = b.mul(cx, px)?;
    let yo = b.reduce(yo)?;
    let yo = b.reshape(yo, &[l, pd])?;
    let out_decay = b.exp(acs)?;
    let y_off = b.mul(yo, out_decay)?;

    let y = b.add(y_diag, y_off)?;
    let out = back(&mut b, cfg, p, gate_w, &f, y, l)?;
    let final_state = b.reshape(last, &[pd, n])?;
    let final_state = b.transpose(final_state)?;

    let mut g = b.g;
    g.set_outputs(vec![out, final_state])?;
    g.metadata.insert("model".into(), "mamba2".into());
    g.metadata.insert("mode".into(), "prefill".into());
    g.metadata.insert("seq_len".into(), l.to_string());
    g.metadata.insert("chunk_size".into(), cfg.chunk_size.to_string());
    g.metadata.insert(
        "assumption.cumsum_2x2".into(),
        "segment sum over the zero-padded per-chunk decay totals".into(),
    );
    g.metadata.insert("strict_finite".into(), "true".into());
    Ok(g)
}

fn decode(cfg: &MambaConfig, p: &SsmParams, gate_w: Tensor) -> Result<OpGraph> {
    let (n, di, k) = (cfg.d_state, cfg.d_inner(), cfg.d_conv);
    let mut b = Builder::new("mamba2_decode");
    let x = b.input("x", &[1, cfg.d_model])?;
    let pre = b.input("conv_state", &[k - 1, di + 2 * n])?;
    let h0 = b.input("ssm_state", &[n, di])?;
    let f = front(&mut b, cfg, p, 1, Some(pre), x)?;

    let a = b.constant("A", p.a.clone())?;
    let adt = b.mul(f.dt, a)?;
    let da = b.exp(adt)?;
    let xdt = b.mul(f.xs, f.dt)?;
    let b_col = b.tview(f.bm)?;
    let dbx = b.mul(b_col, xdt)?;
    let decayed = b.mul(h0, da)?;
    let h = b.add(decayed, dbx)?;
    let y = b.matmul(f.cm, h)?;
    let out = back(&mut b, cfg, p, gate_w, &f, y, 1)?;

    let mut g = b.g;
    g.set_outputs(vec![out, f.conv_in, h])?;
    g.metadata.insert("model".into(), "mamba2".into());
    g.metadata.insert("mode".into(), "decode".into());
    g.metadata.insert("seq_len".into(), "1".into());
    g.metadata.insert(
        "approximate".into(),
        "single-step recurrence instead of the chunked scan".into(),
    );
    g.metadata.insert("strict_finite".into(), "true".into());
    Ok(g)
}
