// SPDX-License-Identifier: Apache-2.0

//! Workload graph: one node per mapped layer, weighted from the PPA of
//! the hardware unit each layer runs on.

use crate::parser::{LayerKind, LayerRecord, MappingResult, UnitCategory};
use crate::ppa::Ppa;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("no PPA for hardware unit {0:?}")]
    MissingPpa(String),
    #[error("layer {index} ({name}) lacks the shape needed for a matmul")]
    MissingShape { index: usize, name: String },
    #[error("invalid graph options: {0}")]
    Options(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationType {
    Gelu,
    Relu,
    Silu,
    Sigmoid,
    Softmax,
    Tanh,
}

impl ActivationType {
    pub fn from_layer(name: &str) -> Option<Self> {
        let n = name.to_ascii_lowercase();
        let t = if n.contains("gelu") {
            ActivationType::Gelu
        } else if n.contains("softmax") {
            ActivationType::Softmax
        } else if n.contains("silu") || n.contains("swish") {
            ActivationType::Silu
        } else if n.contains("relu") {
            ActivationType::Relu
        } else if n.contains("sigmoid") {
            ActivationType::Sigmoid
        } else if n.contains("tanh") {
            ActivationType::Tanh
        } else {
            return None;
        };
        Some(t)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ActivationType::Gelu => "gelu",
            ActivationType::Relu => "relu",
            ActivationType::Silu => "silu",
            ActivationType::Sigmoid => "sigmoid",
            ActivationType::Softmax => "softmax",
            ActivationType::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum NodeOp {
    /// `(m x k) * (k x n)`.
    Matmul {
        m: u64,
        k: u64,
        n: u64,
    },
    Activation {
        kind: ActivationType,
        elements: u64,
    },
    /// Pure data movement.
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub layer_index: usize,
    pub layer_name: String,
    pub unit: String,
    pub op: NodeOp,
    pub input_bits: u64,
    pub output_bits: u64,
    /// Cycles on one nominal unit.
    pub compute_cycles: u64,
    pub energy_uj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: usize,
    pub to: usize,
    pub traffic_bits: u64,
    /// Transfer cycles at the nominal bandwidth and array clock.
    pub interconnect_cycles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayParams {
    pub clk_mhz: f64,
    pub pe_area_mm2: f64,
    pub mac_energy_uj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActParams {
    pub clk_mhz: f64,
    pub unit_area_mm2: f64,
    pub elem_energy_uj: f64,
    pub cycles_per_elem: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub area_mm2_per_gbps: f64,
    pub bit_energy_uj: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            area_mm2_per_gbps: 0.001,
            bit_energy_uj: 1e-6,
        }
    }
}

/// Per-resource coefficients used by the cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub array: ArrayParams,
    pub act: BTreeMap<ActivationType, ActParams>,
    pub link: LinkParams,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            array: ArrayParams {
                clk_mhz: 1000.0,
                pe_area_mm2: 0.001,
                mac_energy_uj: 1e-6,
            },
            act: BTreeMap::new(),
            link: LinkParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphOptions {
    /// Rows of the activation matrix (tokens or output positions).
    pub tokens: u64,
    pub bits_per_element: u64,
    /// Array shape the synthesized systolic-array PPA describes.
    pub nominal_sa: (u32, u32),
    /// Bandwidth the synthesized link PPA describes, Gbps.
    pub nominal_bw_gbps: f64,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            tokens: 1,
            bits_per_element: 16,
            nominal_sa: (32, 32),
            nominal_bw_gbps: 80.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AIModelGraph {
    pub nodes: Vec<GraphNode>,
    /// Sequential dataflow: edge `i` joins node `i` to node `i + 1`.
    pub edges: Vec<GraphEdge>,
    pub params: CostParams,
    pub options: GraphOptions,
}

/// Cycles for an `m x k x n` matmul on `r x c` arrays, tiles spread over
/// `n_sa` arrays.
pub fn matmul_cycles(m: u64, k: u64, n: u64, r: u64, c: u64, n_sa: u64) -> u64 {
    let tiles = m.div_ceil(r) * n.div_ceil(c);
    tiles.div_ceil(n_sa) * (k + r + c - 1)
}

fn shape(layer: &LayerRecord) -> Option<(u64, u64)> {
    let p = &layer.shape_params;
    let get = |k: &str| p.get(k).copied();
    let name = layer.name.to_ascii_lowercase();
    if let (Some(i), Some(o)) = (get("in_features"), get("out_features")) {
        return Some((i, o));
    }
    if let (Some(nx), Some(nf)) = (get("nx"), get("nf")) {
        return Some((nx, nf));
    }
    if let (Some(i), Some(o)) = (get("in_channels"), get("out_channels")) {
        let k = get("kernel_size").unwrap_or(1);
        let taps = if name.contains("2d") {
            k * k
        } else if name.contains("3d") {
            k * k * k
        } else {
            k
        };
        return Some((i * taps, o));
    }
    // positional forms: Linear(in, out), Conv1D(nf, nx), ConvNd(in, out, k)
    let (a0, a1) = (get("arg0")?, get("arg1")?);
    if name == "conv1d" && layer.name == "Conv1D" {
        return Some((a1, a0));
    }
    if name.starts_with("conv") {
        let k = get("arg2").or(get("kernel_size")).unwrap_or(1);
        let taps = if name.contains("2d") {
            k * k
        } else if name.contains("3d") {
            k * k * k
        } else {
            k
        };
        return Some((a0 * taps, a1));
    }
    Some((a0, a1))
}

fn check_ppa(unit: &str, ppa: &Ppa) -> Result<(), GraphError> {
    if ppa.clk_mhz > 0.0 && ppa.area_mm2.is_finite() && ppa.power_mw.is_finite() {
        Ok(())
    } else {
        Err(GraphError::MissingPpa(unit.to_string()))
    }
}

/// Weights the mapped layers with unit PPA. Layers are taken in listing
/// order and joined sequentially.
pub fn build_graph(
    mapping: &MappingResult,
    unit_ppa: &BTreeMap<String, Ppa>,
    options: GraphOptions,
) -> Result<AIModelGraph, GraphError> {
    if options.tokens == 0
        || options.bits_per_element == 0
        || options.nominal_sa.0 == 0
        || options.nominal_sa.1 == 0
    {
        return Err(GraphError::Options(
            "tokens, bits and nominal array must be positive".into(),
        ));
    }
    if !(options.nominal_bw_gbps > 0.0) {
        return Err(GraphError::Options(
            "nominal bandwidth must be positive".into(),
        ));
    }
    let lookup = |unit: &str| -> Result<Ppa, GraphError> {
        let p = unit_ppa
            .get(unit)
            .copied()
            .ok_or_else(|| GraphError::MissingPpa(unit.to_string()))?;
        check_ppa(unit, &p)?;
        Ok(p)
    };
    let mut params = CostParams::default();
    let (r0, c0) = (options.nominal_sa.0 as f64, options.nominal_sa.1 as f64);
    let mut array_set = false;
    let mut link_set = false;
    let mut pairs: Vec<_> = mapping.pairs.iter().collect();
    pairs.sort_by_key(|p| p.layer.index);
    for pair in &pairs {
        let ppa = lookup(&pair.unit.unit_name)?;
        match pair.unit.category {
            UnitCategory::SystolicArray if !array_set => {
                array_set = true;
                params.array = ArrayParams {
                    clk_mhz: ppa.clk_mhz,
                    pe_area_mm2: (ppa.area_mm2 / (r0 * c0)).max(1e-9),
                    // mW / MHz is nJ per cycle, spread over the PEs
                    mac_energy_uj: ppa.power_mw / ppa.clk_mhz / (r0 * c0) * 1e-3,
                };
            }
            UnitCategory::ActivationUnit => {
                if let Some(t) = ActivationType::from_layer(&pair.layer.name) {
                    params.act.entry(t).or_insert(ActParams {
                        clk_mhz: ppa.clk_mhz,
                        unit_area_mm2: ppa.area_mm2.max(1e-9),
                        elem_energy_uj: ppa.power_mw / ppa.clk_mhz * 1e-3,
                        cycles_per_elem: 1,
                    });
                }
            }
            UnitCategory::NocLink | UnitCategory::NopChannel if !link_set => {
                link_set = true;
                params.link = LinkParams {
                    area_mm2_per_gbps: (ppa.area_mm2 / options.nominal_bw_gbps).max(1e-9),
                    // mW / Gbps is pJ per bit
                    bit_energy_uj: ppa.power_mw / options.nominal_bw_gbps * 1e-6,
                };
            }
            _ => {}
        }
    }

    let bits = options.bits_per_element;
    let t = options.tokens;
    let mut width: Option<u64> = None;
    let mut nodes = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let layer = &pair.layer;
        let (op, in_w, out_w) = match layer.kind {
            LayerKind::Compute if pair.unit.category == UnitCategory::SystolicArray => {
                let (k, n) = shape(layer).ok_or_else(|| GraphError::MissingShape {
                    index: layer.index,
                    name: layer.name.clone(),
                })?;
                (NodeOp::Matmul { m: t, k, n }, k, n)
            }
            LayerKind::Activation => {
                let w = width
                    .or_else(|| layer.shape_params.values().next().copied())
                    .unwrap_or(1);
                match ActivationType::from_layer(&layer.name).filter(|a| params.act.contains_key(a))
                {
                    Some(kind) => (
                        NodeOp::Activation {
                            kind,
                            elements: t * w,
                        },
                        w,
                        w,
                    ),
                    None => (NodeOp::Transfer, w, w),
                }
            }
            _ => {
                let w = width.unwrap_or(1);
                (NodeOp::Transfer, w, w)
            }
        };
        width = Some(out_w);
        let (cycles, energy) = match &op {
            NodeOp::Matmul { m, k, n } => (
                matmul_cycles(
                    *m,
                    *k,
                    *n,
                    options.nominal_sa.0 as u64,
                    options.nominal_sa.1 as u64,
                    1,
                ),
                (m * k * n) as f64 * params.array.mac_energy_uj,
            ),
            NodeOp::Activation { kind, elements } => {
                let a = params.act[kind];
                (
                    elements * a.cycles_per_elem,
                    *elements as f64 * a.elem_energy_uj,
                )
            }
            NodeOp::Transfer => (0, 0.0),
        };
        nodes.push(GraphNode {
            layer_index: layer.index,
            layer_name: layer.name.clone(),
            unit: pair.unit.unit_name.clone(),
            op,
            input_bits: t * in_w * bits,
            output_bits: t * out_w * bits,
            compute_cycles: cycles,
            energy_uj: energy,
        });
    }
    let edges = nodes
        .windows(2)
        .enumerate()
        .map(|(i, w)| GraphEdge {
            from: i,
            to: i + 1,
            traffic_bits: w[0].output_bits,
            // bits / Gbps is ns; ns * MHz / 1000 is cycles
            interconnect_cycles: w[0].output_bits as f64 / options.nominal_bw_gbps
                * params.array.clk_mhz
                / 1000.0,
        })
        .collect();
    Ok(AIModelGraph {
        nodes,
        edges,
        params,
        options,
    })
}

impl AIModelGraph {
    /// Activation types the workload needs.
    pub fn required_activations(&self) -> BTreeSet<ActivationType> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                NodeOp::Activation { kind, .. } => Some(kind),
                _ => None,
            })
            .collect()
    }

    /// Bits arriving at node `i`.
    pub fn incoming_bits(&self, i: usize) -> u64 {
        if i == 0 {
            self.nodes[0].input_bits
        } else {
            self.edges[i - 1].traffic_bits
        }
    }

    pub fn summary(&self) -> String {
        let macs: u64 = self
            .nodes
            .iter()
            .map(|n| match n.op {
                NodeOp::Matmul { m, k, n } => m * k * n,
                _ => 0,
            })
            .sum();
        let matmuls = self
            .nodes
            .iter()
            .filter(|n| matches!(n.op, NodeOp::Matmul { .. }))
            .count();
        let acts = self
            .nodes
            .iter()
            .filter(|n| matches!(n.op, NodeOp::Activation { .. }))
            .count();
        let traffic: u64 = self.edges.iter().map(|e| e.traffic_bits).sum();
        let mut heavy: Vec<&GraphNode> = self.nodes.iter().collect();
        heavy.sort_by(|a, b| {
            b.compute_cycles
                .cmp(&a.compute_cycles)
                .then(a.layer_index.cmp(&b.layer_index))
        });
        let top: Vec<String> = heavy
            .iter()
            .take(3)
            .map(|n| {
                format!(
                    "layer {} {} ({} cycles on one nominal unit)",
                    n.layer_index, n.layer_name, n.compute_cycles
                )
            })
            .collect();
        let req: Vec<_> = self
            .required_activations()
            .iter()
            .map(|a| a.as_str())
            .collect();
        format!(
            "{} layers ({matmuls} matmul, {acts} activation), {macs} MACs, {traffic} bits of inter-layer traffic, {} tokens.\nActivation types needed: [{}].\nHeaviest layers: {}.",
            self.nodes.len(),
            self.options.tokens,
            req.join(", "),
            top.join("; ")
        )
    }
}
