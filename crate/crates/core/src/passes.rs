//! The three rewrites and the checker that certifies them.
//!
//! * CumBA: `CumSum` over rows becomes `MatMul(lower_triangular_ones, x)`.
//! * ReduBA: `ReduceSum` over rows becomes `VecMat(ones, x)`, one mask per
//!   reduction length shared by every site.
//! * ActiBA: SiLU and Softplus become `PluActivation` lookups; a lookup whose
//!   producer runs on the MPU is marked fused into the drain path.
//!
//! Every pass returns a new graph. Node ids are renumbered, graph outputs are
//! rewired to the replacement nodes.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Result, XambaError};
use crate::graph::{execute, Attrs, Engine, ExecOptions, NodeId, OpGraph, OpKind, Shape};
use crate::plu::{PluFunc, PluTable};
use crate::tensor::{allclose, Tensor};
use crate::zvc::{self, ValueWidth};

/// Lower-triangular ones, diagonal included.
#[derive(Debug, Clone, PartialEq)]
pub struct CumbaMask {
    pub size: usize,
    pub tensor: Arc<Tensor>,
}

/// Row of ones used to turn a column reduction into a vector-matrix product.
#[derive(Debug, Clone, PartialEq)]
pub struct RedubaMask {
    pub size: usize,
    pub tensor: Tensor,
}

fn mask_cache() -> &'static Mutex<HashMap<usize, Arc<Tensor>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Tensor>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Built once per size and cached for the life of the process.
pub fn cumba_mask(m: usize) -> Result<CumbaMask> {
    if m == 0 {
        return Err(XambaError::Param("mask size must be at least 1".into()));
    }
    let mut cache = mask_cache().lock().expect("mask cache poisoned");
    let tensor = match cache.get(&m) {
        Some(t) => Arc::clone(t),
        None => {
            let t = Arc::new(Tensor::from_fn(m, m, |i, j| if j <= i { 1.0 } else { 0.0 })?);
            cache.insert(m, Arc::clone(&t));
            t
        }
    };
    Ok(CumbaMask { size: m, tensor })
}

pub fn reduba_mask(m: usize) -> Result<RedubaMask> {
    if m == 0 {
        return Err(XambaError::Param("mask size must be at least 1".into()));
    }
    Ok(RedubaMask {
        size: m,
        tensor: Tensor::ones(vec![1, m])?,
    })
}

/// Copies a graph node by node, letting the caller replace individual nodes.
struct Rebuild<'a> {
    src: &'a OpGraph,
    dst: OpGraph,
    map: Vec<NodeId>,
}

impl<'a> Rebuild<'a> {
    fn new(src: &'a OpGraph) -> Self {
        let mut dst = OpGraph::new(src.name.clone());
        dst.metadata = src.metadata.clone();
        dst.tables = src.tables.clone();
        Self {
            src,
            dst,
            map: Vec::with_capacity(src.nodes.len()),
        }
    }

    fn mapped_inputs(&self, id: NodeId) -> Vec<NodeId> {
        self.src.nodes[id].inputs.iter().map(|&i| self.map[i]).collect()
    }

    fn copy(&mut self, id: NodeId) -> Result<NodeId> {
        let n = &self.src.nodes[id];
        let inputs = self.mapped_inputs(id);
        self.dst.add_node(n.kind.clone(), &inputs, n.attrs.clone())
    }

    fn finish(mut self, pass: &str) -> Result<OpGraph> {
        let outputs = self.src.outputs.iter().map(|&o| self.map[o]).collect();
        self.dst.set_outputs(outputs)?;
        let passes = self.dst.metadata.entry("passes".into()).or_default();
        if !passes.split(',').any(|p| p == pass) {
            if !passes.is_empty() {
                passes.push(',');
            }
            passes.push_str(pass);
        }
        Ok(self.dst)
    }
}

fn axis_zero(node: NodeId, kind: &OpKind) -> Result<()> {
    match kind {
        OpKind::CumSum { axis } | OpKind::ReduceSum { axis } if *axis != 0 => Err(XambaError::UnsupportedRewrite {
            node,
            msg: format!("{} along axis {axis}", kind.name()),
        }),
        _ => Ok(()),
    }
}

/// Replaces every `CumSum` with a masked `MatMul`. The mask constant carries
/// its sparsity and ZVC footprint as attributes for the cost model.
pub fn apply_cumba(graph: &OpGraph) -> Result<OpGraph> {
    let shapes = graph.shapes()?;
    let mut rb = Rebuild::new(graph);
    for node in &graph.nodes {
        let new_id = match &node.kind {
            OpKind::CumSum { .. } => {
                axis_zero(node.id, &node.kind)?;
                let x = rb.map[node.inputs[0]];
                let shape = &shapes[node.inputs[0]];
                let (m, column) = match shape.as_slice() {
                    &[m, _] => (m, false),
                    &[m] => (m, true),
                    s => {
                        return Err(XambaError::UnsupportedRewrite {
                            node: node.id,
                            msg: format!("CumSum of shape {s:?}"),
                        })
                    }
                };
                let mask = cumba_mask(m)?;
                let z = zvc::compress(&mask.tensor, ValueWidth::W16);
                let mut attrs = Attrs::new();
                attrs.insert("mask".into(), json!("cumba"));
                attrs.insert("sparsity".into(), json!(1.0 - zvc::density(&z)));
                attrs.insert("zvc_density".into(), json!(zvc::density(&z)));
                attrs.insert("zvc_bytes".into(), json!(z.compressed_bytes()));
                let c = rb.dst.add_node(
                    OpKind::Const {
                        value: (*mask.tensor).clone(),
                    },
                    &[],
                    attrs,
                )?;
                let mut mm_attrs = node.attrs.clone();
                mm_attrs.insert("rewritten_from".into(), json!("CumSum"));
                if column {
                    let col = rb.dst.add(OpKind::Reshape { shape: vec![m, 1] }, &[x])?;
                    let mm = rb.dst.add_node(OpKind::MatMul, &[c, col], mm_attrs)?;
                    rb.dst.add(OpKind::Reshape { shape: vec![m] }, &[mm])?
                } else {
                    rb.dst.add_node(OpKind::MatMul, &[c, x], mm_attrs)?
                }
            }
            _ => rb.copy(node.id)?,
        };
        rb.map.push(new_id);
    }
    rb.finish("cumba")
}

/// Replaces every `ReduceSum` with `VecMat(ones, x)`; one ones-row constant per
/// distinct reduction length is shared by all sites.
pub fn apply_reduba(graph: &OpGraph) -> Result<OpGraph> {
    let shapes = graph.shapes()?;
    let mut rb = Rebuild::new(graph);
    let mut masks: BTreeMap<usize, NodeId> = BTreeMap::new();
    for node in &graph.nodes {
        let new_id = match &node.kind {
            OpKind::ReduceSum { .. } => {
                axis_zero(node.id, &node.kind)?;
                let x = rb.map[node.inputs[0]];
                let (m, column) = match shapes[node.inputs[0]].as_slice() {
                    &[m, _] => (m, false),
                    &[m] => (m, true),
                    s => {
                        return Err(XambaError::UnsupportedRewrite {
                            node: node.id,
                            msg: format!("ReduceSum of shape {s:?}"),
                        })
                    }
                };
                let c = match masks.get(&m) {
                    Some(&c) => c,
                    None => {
                        let mut attrs = Attrs::new();
                        attrs.insert("mask".into(), json!("reduba"));
                        let c = rb.dst.add_node(
                            OpKind::Const {
                                value: reduba_mask(m)?.tensor,
                            },
                            &[],
                            attrs,
                        )?;
                        masks.insert(m, c);
                        c
                    }
                };
                let mut vm_attrs = node.attrs.clone();
                vm_attrs.insert("rewritten_from".into(), json!("ReduceSum"));
                if column {
                    let col = rb.dst.add(OpKind::Reshape { shape: vec![m, 1] }, &[x])?;
                    let vm = rb.dst.add_node(OpKind::VecMat, &[c, col], vm_attrs)?;
                    rb.dst.add(OpKind::Reshape { shape: vec![1] }, &[vm])?
                } else {
                    rb.dst.add_node(OpKind::VecMat, &[c, x], vm_attrs)?
                }
            }
            OpKind::Const { value } if node.attrs.get("mask") == Some(&json!("reduba")) => {
                let id = rb.copy(node.id)?;
                masks.entry(value.len()).or_insert(id);
                id
            }
            _ => rb.copy(node.id)?,
        };
        rb.map.push(new_id);
    }
    rb.finish("reduba")
}

/// Rewrites every SiLU and Softplus activation to a C-LUT lookup.
pub fn apply_actiba(graph: &OpGraph, tables: &BTreeMap<PluFunc, PluTable>) -> Result<OpGraph> {
    apply_actiba_only(graph, tables, &[PluFunc::Silu, PluFunc::Softplus])
}

/// Rewrites only the listed activation functions. A listed function that
/// occurs in the graph must have a table.
pub fn apply_actiba_only(graph: &OpGraph, tables: &BTreeMap<PluFunc, PluTable>, funcs: &[PluFunc]) -> Result<OpGraph> {
    graph.shapes()?;
    let mut rb = Rebuild::new(graph);
    for node in &graph.nodes {
        let func = match &node.kind {
            OpKind::Activation { kind, .. } => PluFunc::from_act_kind(*kind).filter(|f| funcs.contains(f)),
            _ => None,
        };
        let new_id = match (func, &node.kind) {
            (Some(func), OpKind::Activation { beta, .. }) => {
                let table = tables
                    .get(&func)
                    .ok_or_else(|| XambaError::Param(format!("no C-LUT table for {}", func.name())))?;
                if table.func != func {
                    return Err(XambaError::Param(format!(
                        "table registered for {} approximates {}",
                        func.name(),
                        table.func.name()
                    )));
                }
                if func == PluFunc::Softplus && table.beta != *beta {
                    return Err(XambaError::Param(format!(
                        "softplus node {} uses beta {beta}, table has {}",
                        node.id, table.beta
                    )));
                }
                let id = func.name().to_string();
                match rb.dst.tables.get(&id) {
                    Some(existing) if existing != table => {
                        return Err(XambaError::Param(format!(
                            "graph already holds a different table {id:?}"
                        )))
                    }
                    _ => {
                        rb.dst.tables.insert(id.clone(), table.clone());
                    }
                }
                let producer = graph.node(node.inputs[0]);
                let fused = producer.engine() == Engine::Mpu;
                let mut attrs = node.attrs.clone();
                if !fused {
                    attrs.insert(
                        "fusion_warning".into(),
                        json!(format!(
                            "producer {} runs on {}; no drain-phase fusion",
                            producer.id,
                            producer.engine().label()
                        )),
                    );
                }
                let x = rb.map[node.inputs[0]];
                rb.dst
                    .add_node(OpKind::PluActivation { table: id, fused }, &[x], attrs)?
            }
            _ => rb.copy(node.id)?,
        };
        rb.map.push(new_id);
    }
    let name = match funcs {
        [PluFunc::Silu] => "actiba-silu",
        [PluFunc::Softplus] => "actiba-softplus",
        _ => "actiba",
    };
    rb.finish(name)
}

/// Segments, range and softplus sharpness of the standard tables.
pub const DEFAULT_SEGMENTS: usize = 64;
pub const DEFAULT_RANGE: (f32, f32) = (-8.0, 8.0);

/// Uniform 64-segment SiLU and Softplus tables on `[-8, 8]`.
pub fn default_tables() -> BTreeMap<PluFunc, PluTable> {
    tables_with_segments(DEFAULT_SEGMENTS).expect("default tables fit")
}

pub fn tables_with_segments(segments: usize) -> Result<BTreeMap<PluFunc, PluTable>> {
    let (lo, hi) = DEFAULT_RANGE;
    [PluFunc::Silu, PluFunc::Softplus]
        .into_iter()
        .map(|f| Ok((f, crate::plu::fit_uniform(f, 1.0, lo, hi, segments)?)))
        .collect()
}

/// Pass names accepted by [`apply_passes`].
pub const PASS_NAMES: [&str; 5] = ["cumba", "reduba", "actiba", "actiba-softplus", "actiba-silu"];

/// Applies the named passes in order.
pub fn apply_passes<S: AsRef<str>>(
    graph: &OpGraph,
    passes: &[S],
    tables: &BTreeMap<PluFunc, PluTable>,
) -> Result<OpGraph> {
    let mut g = graph.clone();
    for p in passes {
        g = match p.as_ref() {
            "cumba" => apply_cumba(&g)?,
            "reduba" => apply_reduba(&g)?,
            "actiba" => apply_actiba(&g, tables)?,
            "actiba-softplus" => apply_actiba_only(&g, tables, &[PluFunc::Softplus])?,
            "actiba-silu" => apply_actiba_only(&g, tables, &[PluFunc::Silu])?,
            other => {
                return Err(XambaError::Config(format!(
                    "unknown pass {other:?}; expected one of {}",
                    PASS_NAMES.join(", ")
                )))
            }
        };
    }
    Ok(g)
}

/// How random inputs are drawn for [`check_equivalence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InputDist {
    /// Uniform reals in `[lo, hi)`.
    Uniform { lo: f32, hi: f32 },
    /// Uniform integers in `[lo, hi]`.
    Integers { lo: i32, hi: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceConfig {
    pub samples: usize,
    pub dist: InputDist,
    pub rtol: f32,
    pub atol: f32,
    pub seed: u64,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            samples: 20,
            dist: InputDist::Uniform { lo: -1.0, hi: 1.0 },
            rtol: 1e-5,
            atol: 1e-4,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub passed: bool,
    pub max_abs_diff: f32,
    pub worst_output: usize,
    pub worst_index: usize,
    pub samples: usize,
}

/// Seeded random tensors for every graph input.
pub fn random_inputs(shapes: &[Shape], dist: InputDist, rng: &mut impl Rng) -> Result<Vec<Tensor>> {
    shapes
        .iter()
        .map(|s| {
            let n = s.iter().product();
            let data = (0..n)
                .map(|_| match dist {
                    InputDist::Uniform { lo, hi } => rng.gen_range(lo..hi),
                    InputDist::Integers { lo, hi } => rng.gen_range(lo..=hi) as f32,
                })
                .collect();
            Tensor::new(s.clone(), data)
        })
        .collect()
}

/// Runs both graphs on the same seeded inputs and reports the worst output
/// difference seen.
pub fn check_equivalence(a: &OpGraph, b: &OpGraph, cfg: &EquivalenceConfig) -> Result<EquivalenceReport> {
    let shapes = a.input_shapes();
    if shapes != b.input_shapes() {
        return Err(XambaError::Signature(format!(
            "input shapes differ: {:?} vs {:?}",
            shapes,
            b.input_shapes()
        )));
    }
    if a.outputs.len() != b.outputs.len() {
        return Err(XambaError::Signature(format!(
            "output counts differ: {} vs {}",
            a.outputs.len(),
            b.outputs.len()
        )));
    }
    let (sa, sb) = (a.shapes()?, b.shapes()?);
    for (&oa, &ob) in a.outputs.iter().zip(&b.outputs) {
        if sa[oa] != sb[ob] {
            return Err(XambaError::Signature(format!(
                "output shapes differ: {:?} vs {:?}",
                sa[oa], sb[ob]
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = EquivalenceReport {
        passed: true,
        max_abs_diff: 0.0,
        worst_output: 0,
        worst_index: 0,
        samples: cfg.samples,
    };
    for _ in 0..cfg.samples {
        let inputs = random_inputs(&shapes, cfg.dist, &mut rng)?;
        let oa = execute(a, &inputs, ExecOptions::for_graph(a))?;
        let ob = execute(b, &inputs, ExecOptions::for_graph(b))?;
        for (k, (x, y)) in oa.iter().zip(&ob).enumerate() {
            let r = allclose(y, x, cfg.rtol, cfg.atol)?;
            report.passed &= r.passed;
            if r.max_abs_diff > report.max_abs_diff {
                report.max_abs_diff = r.max_abs_diff;
                report.worst_output = k;
                report.worst_index = r.worst_index;
            }
        }
    }
    Ok(report)
}
