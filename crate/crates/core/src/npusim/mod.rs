//! Analytical NPU cost model.
//!
//! Each node is charged compute cycles on its engine plus SRAM transfer
//! cycles at the same clock, and nodes issue one after another. Only ratios
//! and shares of the resulting times are meaningful.

mod calibrate;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, XambaError};
use crate::graph::{Engine, NodeId, OpGraph, OpKind, Shape};
use crate::tensor::ActKind;

pub use calibrate::{
    calibrate, calibrate_multistart, evaluate_targets, Achieved, CalibrationOutcome, Evaluation, Observation,
    ObservationKind, Workload, TARGETS,
};

const SHIPPED: &str = include_str!("../../../../calibration/lnl.json");

/// Environment variable that points at an alternative calibration file.
pub const CALIBRATION_ENV: &str = "XAMBA_CALIBRATION";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub mpu_macs_per_cycle: u64,
    pub mpu_freq_mhz: f64,
    pub dsp_lanes: u64,
    pub dsp_freq_mhz: f64,
    pub sram_bw_bytes_per_cycle: f64,
    pub dsp_regfile_bytes: u64,
    /// Cycles to evaluate one `dsp_lanes`-wide vector; missing kinds cost 1.
    pub act_cycles_per_vector: BTreeMap<ActKind, f64>,
    pub bytes_per_elem: u64,
    pub mpu_utilization: f64,
    pub drain_fusion: bool,
    pub sparsity_skip: bool,
}

impl CostConfig {
    /// The committed calibration.
    pub fn shipped() -> Self {
        serde_json::from_str(SHIPPED).expect("shipped calibration parses")
    }

    /// `path` if given, else the file named by `XAMBA_CALIBRATION`, else the
    /// committed calibration.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let from_env = std::env::var_os(CALIBRATION_ENV).map(std::path::PathBuf::from);
        let cfg = match path.map(Path::to_path_buf).or(from_env) {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)?,
            None => Self::shipped(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mpu_macs_per_cycle", self.mpu_macs_per_cycle as f64),
            ("mpu_freq_mhz", self.mpu_freq_mhz),
            ("dsp_lanes", self.dsp_lanes as f64),
            ("dsp_freq_mhz", self.dsp_freq_mhz),
            ("sram_bw_bytes_per_cycle", self.sram_bw_bytes_per_cycle),
            ("dsp_regfile_bytes", self.dsp_regfile_bytes as f64),
            ("bytes_per_elem", self.bytes_per_elem as f64),
            ("mpu_utilization", self.mpu_utilization),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(XambaError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.mpu_utilization > 1.0 {
            return Err(XambaError::Config(format!(
                "mpu_utilization must be at most 1, got {}",
                self.mpu_utilization
            )));
        }
        for (k, &v) in &self.act_cycles_per_vector {
            if !(v > 0.0 && v.is_finite()) {
                return Err(XambaError::Config(format!(
                    "act_cycles_per_vector[{}] must be positive, got {v}",
                    k.label()
                )));
            }
        }
        Ok(())
    }

    pub fn act_cycles(&self, kind: ActKind) -> f64 {
        self.act_cycles_per_vector.get(&kind).copied().unwrap_or(1.0)
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn freq(&self, engine: Engine) -> f64 {
        match engine {
            Engine::Mpu | Engine::PluDrain => self.mpu_freq_mhz,
            Engine::Dsp => self.dsp_freq_mhz,
            Engine::Host => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCost {
    pub id: NodeId,
    pub kind: String,
    pub engine: Engine,
    pub compute_cycles: f64,
    pub memory_cycles: f64,
    pub time_us: f64,
    pub bytes_moved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub graph: String,
    pub config_hash: String,
    pub passes: Vec<String>,
    pub total_us: f64,
    pub engine_us: BTreeMap<Engine, f64>,
    pub nodes: Vec<NodeCost>,
    /// Share of `total_us` per operator label.
    pub breakdown: BTreeMap<String, f64>,
}

fn elems(s: &[usize]) -> f64 {
    s.iter().product::<usize>() as f64
}

fn rows_cols(s: &[usize]) -> (f64, f64) {
    match s {
        [m, n] => (*m as f64, *n as f64),
        [m] => (*m as f64, 1.0),
        _ => (0.0, 0.0),
    }
}

/// Elements actually read when `id` feeds another node. Broadcast views are
/// free re-indexings, so reading one reads its non-constant sources once.
fn read_elems(graph: &OpGraph, id: NodeId, shapes: &[Shape]) -> f64 {
    let node = graph.node(id);
    if node.attrs.get("role").and_then(|v| v.as_str()) == Some("broadcast") {
        node.inputs
            .iter()
            .filter(|&&i| !matches!(graph.node(i).kind, OpKind::Const { .. }))
            .map(|&i| read_elems(graph, i, shapes))
            .sum()
    } else {
        elems(&shapes[id])
    }
}

/// Cost of one node. `shapes` holds the inferred output shape of every node.
pub fn cost_node(graph: &OpGraph, id: NodeId, shapes: &[Shape], cfg: &CostConfig) -> Result<NodeCost> {
    let node = graph.node(id);
    let bpe = cfg.bytes_per_elem as f64;
    let lanes = cfg.dsp_lanes as f64;
    let bw = cfg.sram_bw_bytes_per_cycle;
    let mpu_rate = cfg.mpu_macs_per_cycle as f64 * cfg.mpu_utilization;
    let out = elems(&shapes[id]);
    let in_elems: f64 = node.inputs.iter().map(|&i| read_elems(graph, i, shapes)).sum();
    let io_bytes = (in_elems + out) * bpe;
    let vectors = (out / lanes).ceil();

    let mut engine = node.engine();
    if let OpKind::PluActivation { fused: true, .. } = node.kind {
        if !cfg.drain_fusion && engine == Engine::PluDrain {
            engine = Engine::Dsp;
        }
    }

    let (compute, bytes, mem_factor) = match (&node.kind, engine) {
        (_, Engine::Host) => (0.0, 0.0, 1.0),
        (OpKind::PluActivation { .. }, Engine::PluDrain) => (0.0, 0.0, 1.0),
        (OpKind::CumSum { .. }, Engine::Dsp) => {
            let (m, n) = rows_cols(&shapes[node.inputs[0]]);
            let chunk = (n * bpe / cfg.dsp_regfile_bytes as f64).ceil().max(1.0);
            (m * (n / lanes).ceil(), io_bytes, chunk)
        }
        (OpKind::ReduceSum { .. }, Engine::Dsp) => {
            let (m, n) = rows_cols(&shapes[node.inputs[0]]);
            (m * (n / lanes).ceil(), io_bytes, 1.0)
        }
        (OpKind::Activation { kind, .. }, Engine::Dsp) => (vectors * cfg.act_cycles(*kind), io_bytes, 1.0),
        (OpKind::Exp, Engine::Dsp) => (vectors * cfg.act_cycles(ActKind::Exp), io_bytes, 1.0),
        (OpKind::RMSNorm { .. } | OpKind::Softmax, Engine::Dsp) => (3.0 * vectors, io_bytes, 1.0),
        (OpKind::Gather { .. }, Engine::Dsp) => (vectors, 2.0 * out * bpe, 1.0),
        (
            OpKind::PluActivation { .. }
            | OpKind::Add
            | OpKind::Multiply
            | OpKind::Power { .. }
            | OpKind::Sqrt
            | OpKind::Transpose
            | OpKind::Reshape { .. },
            Engine::Dsp,
        ) => (vectors, io_bytes, 1.0),
        (OpKind::MatMul | OpKind::VecMat, Engine::Mpu) => {
            let (a, b) = (node.inputs[0], node.inputs[1]);
            let (m, k) = rows_cols(&shapes[a]);
            let (_, n) = rows_cols(&shapes[b]);
            let mut compute = m * k * n / mpu_rate;
            let mut bytes = out * bpe;
            for operand in [a, b] {
                let src = graph.node(operand);
                match (src.attr_f64("zvc_density"), src.attr_f64("zvc_bytes")) {
                    (Some(density), Some(zbytes)) => {
                        if cfg.sparsity_skip {
                            compute *= density;
                        }
                        bytes += zbytes;
                    }
                    _ => bytes += read_elems(graph, operand, shapes) * bpe,
                }
            }
            (compute.ceil(), bytes, 1.0)
        }
        (OpKind::Conv1d { kernel }, Engine::Mpu) => ((out * *kernel as f64 / mpu_rate).ceil(), io_bytes, 1.0),
        (kind, engine) => {
            return Err(XambaError::UnsupportedCost(format!(
                "{} on {}",
                kind.label(),
                engine.label()
            )))
        }
    };
    let memory = mem_factor * bytes / bw;
    let time_us = if engine == Engine::Host {
        0.0
    } else {
        (compute + memory) / cfg.freq(engine)
    };
    Ok(NodeCost {
        id,
        kind: node.kind.label(),
        engine,
        compute_cycles: compute,
        memory_cycles: memory,
        time_us,
        bytes_moved: mem_factor * bytes,
    })
}

/// Costs every node in issue order.
pub fn cost_graph(graph: &OpGraph, cfg: &CostConfig) -> Result<LatencyReport> {
    let shapes = graph.shapes()?;
    let mut nodes = Vec::with_capacity(graph.len());
    let mut engine_us: BTreeMap<Engine, f64> = BTreeMap::new();
    let mut by_kind: BTreeMap<String, f64> = BTreeMap::new();
    for id in 0..graph.len() {
        let c = cost_node(graph, id, &shapes, cfg)?;
        if c.engine != Engine::Host {
            *engine_us.entry(c.engine).or_default() += c.time_us;
            *by_kind.entry(c.kind.clone()).or_default() += c.time_us;
        }
        nodes.push(c);
    }
    let total_us: f64 = engine_us.values().sum();
    let breakdown = if total_us > 0.0 {
        by_kind.into_iter().map(|(k, t)| (k, t / total_us)).collect()
    } else {
        BTreeMap::new()
    };
    let passes = graph
        .metadata
        .get("passes")
        .map(|p| p.split(',').filter(|s| !s.is_empty()).map(String::from).collect())
        .unwrap_or_default();
    Ok(LatencyReport {
        graph: graph.name.clone(),
        config_hash: cfg.hash(),
        passes,
        total_us,
        engine_us,
        nodes,
        breakdown,
    })
}

pub fn speedup(base: &LatencyReport, opt: &LatencyReport) -> Result<f64> {
    if !(base.total_us > 0.0) || !(opt.total_us > 0.0) {
        return Err(XambaError::Numeric {
            node: "report".into(),
            msg: format!(
                "speedup needs positive totals, got {} and {}",
                base.total_us, opt.total_us
            ),
        });
    }
    Ok(base.total_us / opt.total_us)
}

pub fn tokens_per_second(decode: &LatencyReport, tokens_per_step: usize) -> Result<f64> {
    if !(decode.total_us > 0.0) {
        return Err(XambaError::Numeric {
            node: "report".into(),
            msg: "tokens/s of a zero-latency report".into(),
        });
    }
    Ok(tokens_per_step as f64 / (decode.total_us * 1e-6))
}

impl LatencyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Share of a given label, zero if absent.
    pub fn share(&self, label: &str) -> f64 {
        self.breakdown.get(label).copied().unwrap_or(0.0)
    }

    /// Labels ordered by decreasing share.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut v: Vec<_> = self.breakdown.iter().map(|(k, &s)| (k.clone(), s)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    }

    /// One row per node.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,kind,engine,compute_cycles,memory_cycles,time_us,bytes_moved\n");
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                n.id,
                n.kind,
                n.engine.label(),
                n.compute_cycles,
                n.memory_cycles,
                n.time_us,
                n.bytes_moved
            );
        }
        s
    }
}
