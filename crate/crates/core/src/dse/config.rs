// SPDX-License-Identifier: Apache-2.0

use super::graph::ActivationType;
use super::EvalResult;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// One accelerator configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DesignConfig {
    /// Rows and columns of PEs in each systolic array.
    pub size_sa: (u32, u32),
    pub n_sa: u32,
    pub type_act: BTreeSet<ActivationType>,
    /// Activation units per listed type.
    pub n_act: u32,
    /// NoC/NoP bandwidth in Gbps.
    pub bw: u32,
}

impl std::fmt::Display for DesignConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let acts: Vec<_> = self.type_act.iter().map(|a| a.as_str()).collect();
        write!(
            f,
            "sa={}x{} n_sa={} act=[{}] n_act={} bw={}",
            self.size_sa.0,
            self.size_sa.1,
            self.n_sa,
            acts.join(","),
            self.n_act,
            self.bw
        )
    }
}

fn powers_of_two(lo: u32, hi: u32) -> Vec<u32> {
    (0..32)
        .map(|e| 1u32 << e)
        .filter(|v| (lo..=hi).contains(v))
        .collect()
}

/// Discrete parameter grid. `type_act` is not searched: it is fixed to the
/// activation types the workload needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub sa_sizes: Vec<u32>,
    pub n_sa: Vec<u32>,
    pub n_act: Vec<u32>,
    pub bw: Vec<u32>,
    pub required_act: BTreeSet<ActivationType>,
}

/// Grid coordinates in the fixed parameter order rows, cols, n_sa, n_act, bw.
pub type GridPoint = [usize; 5];

impl DesignSpace {
    pub fn full(required_act: BTreeSet<ActivationType>) -> Self {
        DesignSpace {
            sa_sizes: powers_of_two(8, 128),
            n_sa: powers_of_two(1, 256),
            n_act: powers_of_two(1, 128),
            bw: vec![80, 160, 320, 640],
            required_act,
        }
    }

    pub fn axis_len(&self, axis: usize) -> usize {
        match axis {
            0 | 1 => self.sa_sizes.len(),
            2 => self.n_sa.len(),
            3 => self.n_act.len(),
            _ => self.bw.len(),
        }
    }

    pub fn size(&self) -> usize {
        (0..5).map(|a| self.axis_len(a)).product()
    }

    pub fn at(&self, p: GridPoint) -> DesignConfig {
        DesignConfig {
            size_sa: (self.sa_sizes[p[0]], self.sa_sizes[p[1]]),
            n_sa: self.n_sa[p[2]],
            type_act: self.required_act.clone(),
            n_act: self.n_act[p[3]],
            bw: self.bw[p[4]],
        }
    }

    pub fn locate(&self, c: &DesignConfig) -> Option<GridPoint> {
        let pos = |v: &[u32], x: u32| v.iter().position(|&y| y == x);
        Some([
            pos(&self.sa_sizes, c.size_sa.0)?,
            pos(&self.sa_sizes, c.size_sa.1)?,
            pos(&self.n_sa, c.n_sa)?,
            pos(&self.n_act, c.n_act)?,
            pos(&self.bw, c.bw)?,
        ])
    }

    /// Grid membership plus the exact activation set.
    pub fn check(&self, c: &DesignConfig) -> Result<(), String> {
        if c.n_sa == 0 || c.n_act == 0 || c.bw == 0 || c.size_sa.0 == 0 || c.size_sa.1 == 0 {
            return Err(format!("non-positive parameter in {c}"));
        }
        if self.locate(c).is_none() {
            return Err(format!("{c} is not on the parameter grid"));
        }
        if c.type_act != self.required_act {
            return Err(format!(
                "{c} does not provide exactly the required activation types"
            ));
        }
        Ok(())
    }

    /// Every grid point in lexicographic index order.
    pub fn all_points(&self) -> Vec<GridPoint> {
        let mut out = vec![[0usize; 5]];
        for axis in 0..5 {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..self.axis_len(axis)).map(move |i| {
                        let mut q = p;
                        q[axis] = i;
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn menu(&self) -> String {
        let list = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
        let acts: Vec<_> = self.required_act.iter().map(|a| a.as_str()).collect();
        format!(
            "size_sa rows/cols: {{{}}}\nn_sa: {{{}}}\nn_act: {{{}}}\nbw (Gbps): {{{}}}\ntype_act (fixed): [{}]",
            list(&self.sa_sizes),
            list(&self.n_sa),
            list(&self.n_act),
            list(&self.bw),
            acts.join(", ")
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DseObjective {
    /// Minimize latency.
    HighPerformance,
    /// Minimize area.
    CompactArea,
}

impl DseObjective {
    pub fn cost(&self, e: &EvalResult) -> f64 {
        match self {
            DseObjective::HighPerformance => e.latency_ns,
            DseObjective::CompactArea => e.area_mm2,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DseObjective::HighPerformance => "high_performance (minimize latency)",
            DseObjective::CompactArea => "compact_area (minimize area)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DseConfig {
    pub m_coarse: usize,
    pub objective: DseObjective,
    /// Area threshold, mm².
    pub t1: f64,
    /// Power-density threshold, mW/mm².
    pub t2: f64,
    pub refine_radius: usize,
    pub max_feedback_rounds: u32,
    pub seed: u64,
}

impl Default for DseConfig {
    fn default() -> Self {
        DseConfig {
            m_coarse: 80,
            objective: DseObjective::HighPerformance,
            t1: 250.0,
            t2: 2500.0,
            refine_radius: 2,
            max_feedback_rounds: 3,
            seed: 0,
        }
    }
}

impl DseConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.m_coarse == 0 {
            return Err("m_coarse must be at least 1".into());
        }
        if !(self.t1 > 0.0 && self.t2 > 0.0) {
            return Err("thresholds t1 and t2 must be positive".into());
        }
        if self.max_feedback_rounds == 0 {
            return Err("max_feedback_rounds must be at least 1".into());
        }
        Ok(())
    }

    pub fn feasible(&self, e: &EvalResult) -> bool {
        e.area_mm2 <= self.t1 && e.power_density <= self.t2
    }
}
