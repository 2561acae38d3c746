// SPDX-License-Identifier: Apache-2.0

//! Design-space exploration over systolic-array accelerator parameters.

mod config;
mod cost;
mod graph;
mod search;

pub use config::{DesignConfig, DesignSpace, DseConfig, DseObjective, GridPoint};
pub use cost::{area, evaluate, AnalyticalModel, CostModel, EvalResult, LayerCost};
pub use graph::{
    build_graph, matmul_cycles, AIModelGraph, ActParams, ActivationType, ArrayParams, CostParams,
    GraphEdge, GraphError, GraphNode, GraphOptions, LinkParams, NodeOp,
};
pub use search::{
    bottleneck_feedback, explore, parse_proposals, propose_coarse, refine, select, space_filling,
    Bottleneck, BottleneckNote, Candidate, CandidateOrigin, ExploreReport, Proposals, RoundLog,
};

use crate::llm::{GatewayError, TemplateError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DseError {
    #[error("invalid DSE config: {0}")]
    Config(String),
    #[error("no candidate configurations")]
    NoCandidates,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl ExploreReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per candidate.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "round",
            "origin",
            "rows",
            "cols",
            "n_sa",
            "type_act",
            "n_act",
            "bw_gbps",
            "energy_uj",
            "latency_ns",
            "area_mm2",
            "power_density_mw_mm2",
            "chosen",
        ])
        .expect("in-memory write");
        for c in &self.candidates {
            let acts: Vec<_> = c.config.type_act.iter().map(|a| a.as_str()).collect();
            w.write_record([
                c.round.to_string(),
                format!("{:?}", c.origin).to_lowercase(),
                c.config.size_sa.0.to_string(),
                c.config.size_sa.1.to_string(),
                c.config.n_sa.to_string(),
                acts.join(";"),
                c.config.n_act.to_string(),
                c.config.bw.to_string(),
                c.eval.energy_uj.to_string(),
                c.eval.latency_ns.to_string(),
                c.eval.area_mm2.to_string(),
                c.eval.power_density.to_string(),
                (c.config == self.chosen).to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

#[cfg(test)]
mod tests;
