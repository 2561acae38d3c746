// SPDX-License-Identifier: Apache-2.0

//! Analytical cost model. Layers run one after another; each costs the
//! larger of its compute time and the time to move its input over the
//! interconnect.

use super::config::DesignConfig;
use super::graph::{matmul_cycles, AIModelGraph, NodeOp};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub compute_ns: f64,
    pub interconnect_ns: f64,
}

impl LayerCost {
    pub fn latency_ns(&self) -> f64 {
        self.compute_ns.max(self.interconnect_ns)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub energy_uj: f64,
    pub latency_ns: f64,
    pub area_mm2: f64,
    pub power_density: f64,
    pub breakdown: Vec<LayerCost>,
}

/// Pluggable evaluator; a cycle-accurate backend can replace the
/// analytical one.
pub trait CostModel: Sync {
    fn evaluate(&self, config: &DesignConfig, graph: &AIModelGraph) -> EvalResult;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticalModel;

impl CostModel for AnalyticalModel {
    fn evaluate(&self, config: &DesignConfig, graph: &AIModelGraph) -> EvalResult {
        evaluate(config, graph)
    }
}

/// Area of the configured resources, mm².
pub fn area(config: &DesignConfig, graph: &AIModelGraph) -> f64 {
    let p = &graph.params;
    let (r, c) = (config.size_sa.0 as f64, config.size_sa.1 as f64);
    let arrays = config.n_sa as f64 * r * c * p.array.pe_area_mm2;
    let acts: f64 = config
        .type_act
        .iter()
        .map(|t| p.act.get(t).map_or(0.0, |a| a.unit_area_mm2) * config.n_act as f64)
        .sum();
    arrays + acts + config.bw as f64 * p.link.area_mm2_per_gbps
}

pub fn evaluate(config: &DesignConfig, graph: &AIModelGraph) -> EvalResult {
    let p = &graph.params;
    let bw = config.bw as f64;
    let (r, c) = (config.size_sa.0 as u64, config.size_sa.1 as u64);
    let mut energy = 0.0;
    let mut latency = 0.0;
    let mut breakdown = Vec::with_capacity(graph.nodes.len());
    for (i, node) in graph.nodes.iter().enumerate() {
        let compute_ns = match &node.op {
            NodeOp::Matmul { m, k, n } => {
                matmul_cycles(*m, *k, *n, r, c, config.n_sa as u64) as f64 * 1000.0
                    / p.array.clk_mhz
            }
            NodeOp::Activation { kind, elements } => match p.act.get(kind) {
                Some(a) => {
                    elements.div_ceil(config.n_act as u64) as f64
                        * a.cycles_per_elem as f64
                        * 1000.0
                        / a.clk_mhz
                }
                None => 0.0,
            },
            NodeOp::Transfer => 0.0,
        };
        let bits = graph.incoming_bits(i);
        // Gbps is bits per ns
        let cost = LayerCost {
            compute_ns,
            interconnect_ns: bits as f64 / bw,
        };
        energy += node.energy_uj + bits as f64 * p.link.bit_energy_uj;
        latency += cost.latency_ns();
        breakdown.push(cost);
    }
    let area = area(config, graph);
    // uJ / ns is kW; scale to mW
    let power_mw = if latency > 0.0 {
        energy / latency * 1e6
    } else {
        0.0
    };
    let power_density = if area > 0.0 { power_mw / area } else { 0.0 };
    EvalResult {
        energy_uj: energy,
        latency_ns: latency,
        area_mm2: area,
        power_density,
        breakdown,
    }
}
