//! Fitting the cost model to the published speedup ratios.
//!
//! Eight parameters are searched coordinate-wise in log space; the DSP clock
//! stays fixed because only ratios of times are observed. The objective is
//! the worst relative error over the observations, with large penalties for
//! violating the breakdown constraints.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{OpGraph, OpKind};
use crate::models::{default_block, Mode, Variant};
use crate::passes::{apply_passes, default_tables};
use crate::tensor::ActKind;

use super::{cost_graph, speedup, tokens_per_second, CostConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    /// Prefill latency ratio, baseline over rewritten.
    Speedup,
    /// Decode tokens/s ratio, rewritten over baseline.
    TokensRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub name: &'static str,
    pub model: Variant,
    pub kind: ObservationKind,
    pub passes: &'static [&'static str],
    pub target: f64,
}

const fn obs(
    name: &'static str,
    model: Variant,
    kind: ObservationKind,
    passes: &'static [&'static str],
    target: f64,
) -> Observation {
    Observation {
        name,
        model,
        kind,
        passes,
        target,
    }
}

/// Measured ratios the model is fit against.
pub const TARGETS: [Observation; 7] = [
    obs(
        "mamba2 cumba",
        Variant::Mamba2,
        ObservationKind::Speedup,
        &["cumba"],
        1.8,
    ),
    obs(
        "mamba2 reduba",
        Variant::Mamba2,
        ObservationKind::Speedup,
        &["reduba"],
        1.1,
    ),
    obs(
        "mamba2 cumba+reduba",
        Variant::Mamba2,
        ObservationKind::Speedup,
        &["cumba", "reduba"],
        2.3,
    ),
    obs(
        "mamba softplus plu",
        Variant::Mamba,
        ObservationKind::Speedup,
        &["actiba-softplus"],
        1.2,
    ),
    obs(
        "mamba silu plu",
        Variant::Mamba,
        ObservationKind::Speedup,
        &["actiba-silu"],
        1.8,
    ),
    obs(
        "mamba actiba",
        Variant::Mamba,
        ObservationKind::Speedup,
        &["actiba"],
        2.6,
    ),
    obs(
        "mamba decode tokens/s",
        Variant::Mamba,
        ObservationKind::TokensRatio,
        &["actiba"],
        2.6,
    ),
];

/// Baseline and rewritten graphs for every observation, built once.
pub struct Workload {
    pairs: Vec<(OpGraph, OpGraph)>,
    mamba2: OpGraph,
    mamba: OpGraph,
}

impl Workload {
    pub fn new(seed: u64) -> Result<Self> {
        let tables = default_tables();
        let mamba2 = default_block(Variant::Mamba2, Mode::Prefill, seed)?;
        let mamba = default_block(Variant::Mamba, Mode::Prefill, seed)?;
        let decode = default_block(Variant::Mamba, Mode::Decode, seed)?;
        let pairs = TARGETS
            .iter()
            .map(|o| {
                let base = match (o.model, o.kind) {
                    (Variant::Mamba2, _) => mamba2.clone(),
                    (Variant::Mamba, ObservationKind::Speedup) => mamba.clone(),
                    (Variant::Mamba, ObservationKind::TokensRatio) => decode.clone(),
                };
                let opt = apply_passes(&base, o.passes, &tables)?;
                Ok((base, opt))
            })
            .collect::<Result<_>>()?;
        Ok(Self { pairs, mamba2, mamba })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Achieved {
    pub name: String,
    pub target: f64,
    pub value: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub ratios: Vec<Achieved>,
    /// Share of the Mamba-2 baseline spent in CumSum.
    pub cumsum_share: f64,
    /// Fraction of Mamba-2 CumSum time spent in the chunk-by-chunk instance.
    pub dominant_cumsum: f64,
    /// The two largest Mamba baseline shares, largest first.
    pub mamba_top2: [String; 2],
}

impl Evaluation {
    pub fn max_rel_err(&self) -> f64 {
        self.ratios.iter().map(|a| a.rel_err).fold(0.0, f64::max)
    }

    pub fn constraints_hold(&self) -> bool {
        let top: Vec<&str> = self.mamba_top2.iter().map(String::as_str).collect();
        self.cumsum_share > 0.5
            && self.dominant_cumsum > 0.99
            && top.contains(&ActKind::Silu.label())
            && top.contains(&ActKind::Softplus.label())
    }

    fn penalty(&self) -> f64 {
        let mut penalty = 0.0;
        penalty += (0.52 - self.cumsum_share).max(0.0) * 10.0;
        penalty += (0.995 - self.dominant_cumsum).max(0.0) * 10.0;
        if !self.constraints_hold() {
            penalty += 1.0;
        }
        penalty
    }

    fn objective(&self, smooth: bool) -> f64 {
        let fit = if smooth {
            self.ratios.iter().map(|a| a.rel_err * a.rel_err).sum::<f64>()
        } else {
            self.max_rel_err()
        };
        fit + self.penalty()
    }
}

/// Time share of the `[chunk, chunk]` CumSum among all CumSums.
fn dominant_cumsum(g: &OpGraph, cfg: &CostConfig) -> Result<f64> {
    let report = cost_graph(g, cfg)?;
    let shapes = g.shapes()?;
    let (mut big, mut all) = (0.0, 0.0);
    for n in &g.nodes {
        if let OpKind::CumSum { .. } = n.kind {
            let t = report.nodes[n.id].time_us;
            all += t;
            if let [a, b] = shapes[n.inputs[0]].as_slice() {
                if a == b && *a > 2 {
                    big += t;
                }
            }
        }
    }
    Ok(if all > 0.0 { big / all } else { 0.0 })
}

pub fn evaluate_targets(cfg: &CostConfig, w: &Workload) -> Result<Evaluation> {
    let mut ratios = Vec::with_capacity(TARGETS.len());
    for (o, (base, opt)) in TARGETS.iter().zip(&w.pairs) {
        let (rb, ro) = (cost_graph(base, cfg)?, cost_graph(opt, cfg)?);
        let value = match o.kind {
            ObservationKind::Speedup => speedup(&rb, &ro)?,
            ObservationKind::TokensRatio => tokens_per_second(&ro, 1)? / tokens_per_second(&rb, 1)?,
        };
        ratios.push(Achieved {
            name: o.name.into(),
            target: o.target,
            value,
            rel_err: (value - o.target).abs() / o.target,
        });
    }
    let m2 = cost_graph(&w.mamba2, cfg)?;
    let ranked = cost_graph(&w.mamba, cfg)?.ranked();
    let label = |i: usize| ranked.get(i).map(|r| r.0.clone()).unwrap_or_default();
    Ok(Evaluation {
        ratios,
        cumsum_share: m2.share("CumSum"),
        dominant_cumsum: dominant_cumsum(&w.mamba2, cfg)?,
        mamba_top2: [label(0), label(1)],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationOutcome {
    pub config: CostConfig,
    pub evaluation: Evaluation,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
enum Param {
    MpuFreq,
    DspLanes,
    MpuMacs,
    SramBw,
    Regfile,
    SiluCycles,
    SoftplusCycles,
    Utilization,
}

const PARAMS: [Param; 8] = [
    Param::MpuFreq,
    Param::DspLanes,
    Param::MpuMacs,
    Param::SramBw,
    Param::Regfile,
    Param::SiluCycles,
    Param::SoftplusCycles,
    Param::Utilization,
];

impl Param {
    fn get(self, c: &CostConfig) -> f64 {
        match self {
            Param::MpuFreq => c.mpu_freq_mhz,
            Param::DspLanes => c.dsp_lanes as f64,
            Param::MpuMacs => c.mpu_macs_per_cycle as f64,
            Param::SramBw => c.sram_bw_bytes_per_cycle,
            Param::Regfile => c.dsp_regfile_bytes as f64,
            Param::SiluCycles => c.act_cycles(ActKind::Silu),
            Param::SoftplusCycles => c.act_cycles(ActKind::Softplus),
            Param::Utilization => c.mpu_utilization,
        }
    }

    /// Sets the value after rounding and clamping to the admissible range; `None` if the
    /// clamped value equals the current one.
    fn set(self, c: &CostConfig, v: f64) -> Option<CostConfig> {
        let mut n = c.clone();
        // Hardware widths are powers of two.
        let int = |v: f64, lo: f64, hi: f64| v.log2().round().exp2().clamp(lo, hi) as u64;
        match self {
            Param::MpuFreq => n.mpu_freq_mhz = v.clamp(c.dsp_freq_mhz, 3.0 * c.dsp_freq_mhz),
            Param::DspLanes => n.dsp_lanes = int(v, 1.0, 1024.0),
            Param::MpuMacs => n.mpu_macs_per_cycle = int(v, 16.0, 65536.0),
            Param::SramBw => n.sram_bw_bytes_per_cycle = v.clamp(1.0, 4096.0),
            Param::Regfile => n.dsp_regfile_bytes = int(v, 4.0, 65536.0),
            Param::SiluCycles => {
                n.act_cycles_per_vector.insert(ActKind::Silu, v.clamp(1.0, 1000.0));
            }
            Param::SoftplusCycles => {
                n.act_cycles_per_vector.insert(ActKind::Softplus, v.clamp(1.0, 1000.0));
            }
            Param::Utilization => n.mpu_utilization = v.clamp(0.05, 1.0),
        }
        (n != *c).then_some(n)
    }
}

/// Coordinate search from `start`: a squared-error pass, then a pass on the
/// worst-case error. Deterministic.
pub fn calibrate(start: &CostConfig, w: &Workload) -> Result<CalibrationOutcome> {
    let mut best = start.clone();
    let mut evaluations = 0;
    for smooth in [true, false] {
        let (cfg, n) = search(&best, w, smooth)?;
        best = cfg;
        evaluations += n;
    }
    Ok(CalibrationOutcome {
        evaluation: evaluate_targets(&best, w)?,
        config: best,
        evaluations,
    })
}

/// Runs [`calibrate`] from `start` and from a fixed grid of perturbations
/// of it, keeping the fit with the smallest worst-case error.
pub fn calibrate_multistart(start: &CostConfig, w: &Workload) -> Result<CalibrationOutcome> {
    let mut best = calibrate(start, w)?;
    let mut evaluations = best.evaluations;
    for lanes in [8.0, 32.0, 128.0] {
        for regfile in [4.0, 16.0] {
            for rate in [0.25, 4.0] {
                for act in [0.3, 3.0] {
                    let mut c = start.clone();
                    for (p, f) in [
                        (Param::DspLanes, lanes / start.dsp_lanes as f64),
                        (Param::Regfile, regfile / start.dsp_regfile_bytes as f64),
                        (Param::MpuMacs, rate),
                        (Param::SiluCycles, act),
                        (Param::SoftplusCycles, act),
                    ] {
                        if let Some(n) = p.set(&c, p.get(&c) * f) {
                            c = n;
                        }
                    }
                    let out = calibrate(&c, w)?;
                    evaluations += out.evaluations;
                    if out.evaluation.objective(false) < best.evaluation.objective(false) {
                        best = out;
                    }
                }
            }
        }
    }
    best.evaluations = evaluations;
    Ok(best)
}

fn search(start: &CostConfig, w: &Workload, smooth: bool) -> Result<(CostConfig, usize)> {
    let mut best = start.clone();
    let mut best_obj = evaluate_targets(&best, w)?.objective(smooth);
    let mut evaluations = 1;
    for factor in [2.0, 1.5, 1.2, 1.1, 1.05, 1.02, 1.01] {
        loop {
            let mut improved = false;
            for p in PARAMS {
                for f in [factor, 1.0 / factor] {
                    let Some(cand) = p.set(&best, p.get(&best) * f) else {
                        continue;
                    };
                    let obj = evaluate_targets(&cand, w)?.objective(smooth);
                    evaluations += 1;
                    if obj < best_obj - 1e-12 {
                        best = cand;
                        best_obj = obj;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
    Ok((best, evaluations))
}
