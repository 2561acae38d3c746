// SPDX-License-Identifier: Apache-2.0

//! Coarse proposals, local refinement, constrained selection and the
//! feedback loop tying them together.

use super::config::{DesignConfig, DesignSpace, DseConfig, GridPoint};
use super::cost::{CostModel, EvalResult};
use super::graph::{AIModelGraph, NodeOp};
use super::DseError;
use crate::llm::{Gateway, Role, Templates};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Deserialize)]
struct RawProposal {
    size_sa: serde_json::Value,
    n_sa: i64,
    n_act: i64,
    bw: i64,
}

fn to_config(value: &serde_json::Value, space: &DesignSpace) -> Result<DesignConfig, String> {
    let raw: RawProposal = serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
    let (r, c) = match &raw.size_sa {
        serde_json::Value::Array(v) if v.len() == 2 => (v[0].as_i64(), v[1].as_i64()),
        serde_json::Value::Number(n) => (n.as_i64(), n.as_i64()),
        other => return Err(format!("size_sa {other} is not [rows, cols]")),
    };
    let pos = |v: Option<i64>| {
        v.filter(|&x| x > 0 && x <= u32::MAX as i64)
            .map(|x| x as u32)
    };
    let (Some(r), Some(c), Some(n_sa), Some(n_act), Some(bw)) = (
        pos(r),
        pos(c),
        pos(Some(raw.n_sa)),
        pos(Some(raw.n_act)),
        pos(Some(raw.bw)),
    ) else {
        return Err(format!("non-positive parameter in {value}"));
    };
    let config = DesignConfig {
        size_sa: (r, c),
        n_sa,
        type_act: space.required_act.clone(),
        n_act,
        bw,
    };
    space.check(&config)?;
    Ok(config)
}

/// Parses a proposer reply: a JSON array of configuration objects.
/// Invalid entries are reported, not fatal.
pub fn parse_proposals(reply: &str, space: &DesignSpace) -> (Vec<DesignConfig>, Vec<String>) {
    let text = crate::llm::extract_fenced(reply);
    let body = match (text.find('['), text.rfind(']')) {
        (Some(a), Some(b)) if a < b => &text[a..=b],
        _ => {
            return if text.trim().is_empty() {
                (Vec::new(), Vec::new())
            } else {
                (
                    Vec::new(),
                    vec!["proposer reply holds no JSON array".into()],
                )
            }
        }
    };
    let values: Vec<serde_json::Value> = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(e) => {
            return (
                Vec::new(),
                vec![format!("proposer reply is not valid JSON: {e}")],
            )
        }
    };
    let mut configs = Vec::new();
    let mut warnings = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match to_config(v, space) {
            Ok(c) if !configs.contains(&c) => configs.push(c),
            Ok(_) => warnings.push(format!("proposal {i} duplicates an earlier one")),
            Err(e) => warnings.push(format!("dropped proposal {i}: {e}")),
        }
    }
    (configs, warnings)
}

/// Latin-hypercube style samples over grid indices, avoiding `taken`.
pub fn space_filling(
    space: &DesignSpace,
    count: usize,
    seed: u64,
    taken: &BTreeSet<GridPoint>,
) -> Vec<GridPoint> {
    let room = space.size().saturating_sub(taken.len());
    let count = count.min(room);
    if count == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: Vec<Vec<usize>> = (0..5)
        .map(|_| {
            let mut v: Vec<usize> = (0..count).collect();
            v.shuffle(&mut rng);
            v
        })
        .collect();
    let mut seen = taken.clone();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut p = [0usize; 5];
        for (axis, s) in strata.iter_mut().enumerate() {
            let len = space.axis_len(axis);
            let u: f64 = rng.gen();
            p[axis] = (((s[i] as f64 + u) / count as f64) * len as f64)
                .floor()
                .min((len - 1) as f64) as usize;
        }
        let mut tries = 0;
        while seen.contains(&p) && tries < 1000 {
            for (axis, v) in p.iter_mut().enumerate() {
                *v = rng.gen_range(0..space.axis_len(axis));
            }
            tries += 1;
        }
        if seen.contains(&p) {
            // dense grid: first free point in order
            match space.all_points().into_iter().find(|q| !seen.contains(q)) {
                Some(q) => p = q,
                None => break,
            }
        }
        seen.insert(p);
        out.push(p);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposals {
    pub configs: Vec<DesignConfig>,
    pub from_llm: usize,
    pub sampled: usize,
    pub warnings: Vec<String>,
}

/// Up to M configurations from the proposer, topped up by space-filling
/// samples.
pub fn propose_coarse(
    graph: &AIModelGraph,
    space: &DesignSpace,
    config: &DseConfig,
    gateway: &Gateway,
    templates: &Templates,
    feedback: &str,
    round: u32,
) -> Result<Proposals, DseError> {
    let system = templates.render_with("dse_proposer", &[])?;
    let count = config.m_coarse.to_string();
    let user = templates.render_with(
        "dse_proposer_user",
        &[
            ("objective", config.objective.as_str()),
            ("count", &count),
            ("workload", &graph.summary()),
            ("menu", &space.menu()),
            ("feedback", feedback),
        ],
    )?;
    let reply = gateway.complete(&gateway.request(Role::DseProposer, system, user))?;
    let (mut configs, warnings) = parse_proposals(&reply.text, space);
    for w in &warnings {
        tracing::warn!(round, "{w}");
    }
    configs.truncate(config.m_coarse);
    let from_llm = configs.len();
    let taken: BTreeSet<GridPoint> = configs.iter().filter_map(|c| space.locate(c)).collect();
    let seed = config.seed ^ (u64::from(round)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let extra = space_filling(space, config.m_coarse - from_llm, seed, &taken);
    let sampled = extra.len();
    configs.extend(extra.into_iter().map(|p| space.at(p)));
    Ok(Proposals {
        configs,
        from_llm,
        sampled,
        warnings,
    })
}

/// Coordinate descent inside the box of `refine_radius` grid steps around
/// `baseline`, parameters visited in the order rows, cols, n_sa, n_act,
/// bw. From a feasible baseline only feasible points are visited, so the
/// result never trades feasibility for objective.
pub fn refine(
    baseline: &DesignConfig,
    graph: &AIModelGraph,
    space: &DesignSpace,
    config: &DseConfig,
    model: &dyn CostModel,
) -> DesignConfig {
    let Some(center) = space.locate(baseline) else {
        return baseline.clone();
    };
    let eval = |p: GridPoint| model.evaluate(&space.at(p), graph);
    let cost = |e: &EvalResult| config.objective.cost(e);
    let mut cur = center;
    let mut cur_cost = cost(&eval(cur));
    let feasible_only = config.feasible(&eval(cur));
    loop {
        let mut moved = false;
        for axis in 0..5 {
            let lo = center[axis].saturating_sub(config.refine_radius);
            let hi = (center[axis] + config.refine_radius).min(space.axis_len(axis) - 1);
            let mut best: Option<(GridPoint, f64)> = None;
            for i in lo..=hi {
                if i == cur[axis] {
                    continue;
                }
                let mut q = cur;
                q[axis] = i;
                let e = eval(q);
                if feasible_only && !config.feasible(&e) {
                    continue;
                }
                let c = cost(&e);
                if c < best.map_or(cur_cost, |(_, b)| b) {
                    best = Some((q, c));
                }
            }
            if let Some((q, c)) = best {
                cur = q;
                cur_cost = c;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    space.at(cur)
}

/// Index of the chosen candidate and whether it met both thresholds.
/// Ties go to the smaller area, then the smaller configuration.
pub fn select(
    candidates: &[(DesignConfig, EvalResult)],
    config: &DseConfig,
) -> Option<(usize, bool)> {
    if candidates.is_empty() {
        return None;
    }
    let feasible: Vec<usize> = (0..candidates.len())
        .filter(|&i| config.feasible(&candidates[i].1))
        .collect();
    let satisfied = !feasible.is_empty();
    let pool: Vec<usize> = if satisfied {
        feasible
    } else {
        (0..candidates.len()).collect()
    };
    let key = |i: &usize| {
        let (c, e) = &candidates[*i];
        (config.objective.cost(e), e.area_mm2, c)
    };
    let best = pool
        .into_iter()
        .min_by(|a, b| {
            let (ca, aa, xa) = key(a);
            let (cb, ab, xb) = key(b);
            ca.total_cmp(&cb).then(aa.total_cmp(&ab)).then(xa.cmp(xb))
        })
        .expect("non-empty pool");
    Some((best, satisfied))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bottleneck {
    Compute,
    Interconnect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckNote {
    pub dominant: Bottleneck,
    /// Compute share of summed per-layer component time.
    pub compute_share: f64,
    pub worst_layer: Option<(usize, String)>,
    pub parameters: Vec<String>,
    pub text: String,
}

/// Names the dominant latency component (compute on a tie) and the layer
/// that contributes most of it.
pub fn bottleneck_feedback(best: &EvalResult, graph: &AIModelGraph) -> BottleneckNote {
    let compute: f64 = best.breakdown.iter().map(|l| l.compute_ns).sum();
    let inter: f64 = best.breakdown.iter().map(|l| l.interconnect_ns).sum();
    let total = compute + inter;
    let share = if total > 0.0 { compute / total } else { 0.5 };
    let dominant = if compute >= inter {
        Bottleneck::Compute
    } else {
        Bottleneck::Interconnect
    };
    let part = |i: usize| match dominant {
        Bottleneck::Compute => best.breakdown[i].compute_ns,
        Bottleneck::Interconnect => best.breakdown[i].interconnect_ns,
    };
    let worst = (0..best.breakdown.len()).fold(None::<usize>, |w, i| match w {
        Some(j) if part(j) >= part(i) => Some(j),
        _ => Some(i),
    });
    let worst_layer = worst
        .and_then(|i| graph.nodes.get(i))
        .map(|n| (n.layer_index, n.layer_name.clone()));
    let parameters: Vec<String> = match dominant {
        Bottleneck::Interconnect => vec!["bw".into()],
        Bottleneck::Compute => match worst.and_then(|i| graph.nodes.get(i)).map(|n| &n.op) {
            Some(NodeOp::Activation { .. }) => vec!["n_act".into()],
            _ => vec!["size_sa".into(), "n_sa".into()],
        },
    };
    let what = match dominant {
        Bottleneck::Compute => "compute",
        Bottleneck::Interconnect => "interconnect",
    };
    let layer = worst_layer
        .as_ref()
        .map(|(i, n)| format!("layer {i} ({n})"))
        .unwrap_or_else(|| "none".into());
    let text = format!(
        "Bottleneck: {what} ({:.1}% compute share). Worst layer: {layer}. Parameters to adjust: {}.",
        share * 100.0,
        parameters.join(", ")
    );
    BottleneckNote {
        dominant,
        compute_share: share,
        worst_layer,
        parameters,
        text,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrigin {
    Proposed,
    Sampled,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub round: u32,
    pub origin: CandidateOrigin,
    pub config: DesignConfig,
    pub eval: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: u32,
    pub from_llm: usize,
    pub sampled: usize,
    pub warnings: Vec<String>,
    pub feedback_in: String,
    pub best: DesignConfig,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub chosen: DesignConfig,
    pub eval: EvalResult,
    pub satisfied: bool,
    pub rounds_used: u32,
    pub rounds: Vec<RoundLog>,
    pub feedback_notes: Vec<BottleneckNote>,
    /// Every distinct configuration evaluated, first occurrence kept.
    pub candidates: Vec<Candidate>,
}

/// Propose, refine, evaluate and select until the thresholds are met or
/// the round budget runs out. Selection always spans every candidate seen
/// so far.
pub fn explore(
    graph: &AIModelGraph,
    space: &DesignSpace,
    config: &DseConfig,
    gateway: &Gateway,
    templates: &Templates,
    model: &dyn CostModel,
) -> Result<ExploreReport, DseError> {
    config.check().map_err(DseError::Config)?;
    let space = DesignSpace {
        required_act: graph.required_activations(),
        ..space.clone()
    };
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut rounds = Vec::new();
    let mut notes: Vec<BottleneckNote> = Vec::new();
    let mut feedback = String::new();
    for round in 1..=config.max_feedback_rounds {
        let proposals =
            propose_coarse(graph, &space, config, gateway, templates, &feedback, round)?;
        let refined: Vec<DesignConfig> = std::thread::scope(|s| {
            let space = &space;
            let handles: Vec<_> = proposals
                .configs
                .chunks(8)
                .map(|chunk| {
                    s.spawn(move || {
                        chunk
                            .iter()
                            .map(|b| refine(b, graph, space, config, model))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("refine thread panicked"))
                .collect()
        });
        for (i, (base, fine)) in proposals.configs.iter().zip(&refined).enumerate() {
            let origin = if i < proposals.from_llm {
                CandidateOrigin::Proposed
            } else {
                CandidateOrigin::Sampled
            };
            for (c, o) in [(base, origin), (fine, CandidateOrigin::Refined)] {
                if !candidates.iter().any(|x| &x.config == c) {
                    candidates.push(Candidate {
                        round,
                        origin: o,
                        eval: model.evaluate(c, graph),
                        config: c.clone(),
                    });
                }
            }
        }
        let pairs: Vec<(DesignConfig, EvalResult)> = candidates
            .iter()
            .map(|c| (c.config.clone(), c.eval.clone()))
            .collect();
        let (idx, satisfied) = select(&pairs, config).ok_or(DseError::NoCandidates)?;
        rounds.push(RoundLog {
            round,
            from_llm: proposals.from_llm,
            sampled: proposals.sampled,
            warnings: proposals.warnings,
            feedback_in: feedback.clone(),
            best: candidates[idx].config.clone(),
            satisfied,
        });
        if satisfied || round == config.max_feedback_rounds {
            return Ok(ExploreReport {
                chosen: candidates[idx].config.clone(),
                eval: candidates[idx].eval.clone(),
                satisfied,
                rounds_used: round,
                rounds,
                feedback_notes: notes,
                candidates,
            });
        }
        let note = bottleneck_feedback(&candidates[idx].eval, graph);
        feedback = format!(
            "Previous best {} did not meet area <= {} mm2 and power density <= {} mW/mm2 (area {:.4}, power density {:.4}). {}",
            candidates[idx].config, config.t1, config.t2, candidates[idx].eval.area_mm2, candidates[idx].eval.power_density, note.text
        );
        notes.push(note);
    }
    unreachable!("max_feedback_rounds is at least 1")
}
