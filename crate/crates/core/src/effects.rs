//! Elementary effects and their statistics.
//!
//! Effects are finite differences in reduced space, divided by the *signed*
//! step `s_i = ±Δ_i`. A downward step therefore measures the same slope as the
//! upward step over the same segment, and a linear model yields one constant
//! effect per input whatever the step direction.
//!
//! Second-order effects use the 2x2 corner around a base point `x`:
//!
//! ```text
//! EE_i   = [y(x + s_i) - y(x)] / s_i
//! SEE_ij = [y(x + s_i + s_j) - y(x)] / (s_i s_j)
//! EE_ij  = | SEE_ij - EE_i / s_j - EE_j / s_i |
//! ```
//!
//! which is the absolute mixed difference `y_ij - y_i - y_j + y` over `s_i s_j`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::design::{Design, DesignPlan, PairBlock, ParameterSpec, Trajectory};
use crate::error::{Error, Result};

/// Model output per plan point id.
pub type OutputMap = HashMap<usize, f64>;

/// Which effect a sample belongs to. Indices are 0-based parameter indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EffectKey {
    First(usize),
    Second(usize, usize),
}

impl EffectKey {
    pub fn kind(&self) -> &'static str {
        match self {
            EffectKey::First(_) => "first",
            EffectKey::Second(..) => "second",
        }
    }

    /// 1-based label used in reports: `"3"` or `"2-7"`.
    pub fn label(&self) -> String {
        match *self {
            EffectKey::First(i) => format!("{}", i + 1),
            EffectKey::Second(i, j) => format!("{}-{}", i + 1, j + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectSample {
    pub key: EffectKey,
    pub replicate: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectsSummary {
    pub key: EffectKey,
    pub mu: f64,
    pub mu_star: f64,
    /// `None` for a single replicate.
    pub sigma: Option<f64>,
    pub ratio_star: Option<f64>,
    pub ratio_abs: Option<f64>,
    pub n: usize,
}

fn output(outputs: &OutputMap, id: usize) -> Result<f64> {
    outputs
        .get(&id)
        .copied()
        .ok_or(Error::IncompleteEvaluation { point_ids: vec![id] })
}

/// One elementary effect per coordinate of a trajectory.
pub fn first_order_effects(
    trajectory: &Trajectory,
    parameters: &[ParameterSpec],
    outputs: &OutputMap,
    replicate: usize,
) -> Result<Vec<EffectSample>> {
    let missing: Vec<usize> = trajectory
        .point_ids
        .iter()
        .copied()
        .filter(|id| !outputs.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteEvaluation { point_ids: missing });
    }
    let mut samples = Vec::with_capacity(trajectory.order.len());
    for (step, &i) in trajectory.order.iter().enumerate() {
        let before = output(outputs, trajectory.point_ids[step])?;
        let after = output(outputs, trajectory.point_ids[step + 1])?;
        let s = trajectory.signs[i].as_f64() * parameters[i].delta();
        samples.push(EffectSample {
            key: EffectKey::First(i),
            replicate,
            value: (after - before) / s,
        });
    }
    samples.sort_by_key(|s| s.key);
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEffect {
    pub i: usize,
    pub j: usize,
    pub see: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockEffects {
    pub first: Vec<EffectSample>,
    pub pairs: Vec<PairEffect>,
}

impl BlockEffects {
    pub fn samples(&self, replicate: usize) -> impl Iterator<Item = EffectSample> + '_ {
        self.first.iter().copied().chain(self.pairs.iter().map(move |p| EffectSample {
            key: EffectKey::Second(p.i, p.j),
            replicate,
            value: p.value,
        }))
    }
}

/// First-order effects of every input and interaction effects of every pair in a block.
pub fn second_order_effects(
    block: &PairBlock,
    parameters: &[ParameterSpec],
    outputs: &OutputMap,
    replicate: usize,
) -> Result<BlockEffects> {
    let missing: Vec<usize> = std::iter::once(block.base_id)
        .chain(block.single_ids.iter().copied())
        .chain(block.double_steps.iter().map(|d| d.point_id))
        .filter(|id| !outputs.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteEvaluation { point_ids: missing });
    }
    let y0 = output(outputs, block.base_id)?;
    let steps: Vec<f64> = block
        .signs
        .iter()
        .zip(parameters)
        .map(|(sign, p)| sign.as_f64() * p.delta())
        .collect();
    let mut ee = Vec::with_capacity(steps.len());
    for (i, &s) in steps.iter().enumerate() {
        ee.push((output(outputs, block.single_ids[i])? - y0) / s);
    }
    let mut pairs = Vec::with_capacity(block.double_steps.len());
    for d in &block.double_steps {
        let (si, sj) = (steps[d.i], steps[d.j]);
        let see = (output(outputs, d.point_id)? - y0) / (si * sj);
        let value = (see - ee[d.i] / sj - ee[d.j] / si).abs();
        pairs.push(PairEffect { i: d.i, j: d.j, see, value });
    }
    let first = ee
        .into_iter()
        .enumerate()
        .map(|(i, value)| EffectSample {
            key: EffectKey::First(i),
            replicate,
            value,
        })
        .collect();
    Ok(BlockEffects { first, pairs })
}

/// Statistics of one group of effect values.
pub fn summarize(key: EffectKey, values: &[f64]) -> Result<EffectsSummary> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptyGroup);
    }
    let nf = n as f64;
    let mu = values.iter().sum::<f64>() / nf;
    let mu_star = values.iter().map(|v| v.abs()).sum::<f64>() / nf;
    let sigma = (n >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mu) * (v - mu)).sum();
        (ss / (nf - 1.0)).sqrt()
    });
    let ratio_star = sigma.filter(|_| mu_star != 0.0).map(|s| s / mu_star);
    let ratio_abs = sigma.filter(|_| mu != 0.0).map(|s| s / mu.abs());
    Ok(EffectsSummary {
        key,
        mu,
        mu_star,
        sigma,
        ratio_star,
        ratio_abs,
        n,
    })
}

/// Group samples by effect and summarize each group, in key order.
pub fn aggregate(samples: &[EffectSample]) -> Result<Vec<EffectsSummary>> {
    if samples.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let mut groups: BTreeMap<EffectKey, Vec<(usize, f64)>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.key).or_default().push((s.replicate, s.value));
    }
    groups
        .into_iter()
        .map(|(key, mut vals)| {
            // Replicate order, not arrival order, fixes the summation order.
            vals.sort_by_key(|&(r, _)| r);
            let values: Vec<f64> = vals.into_iter().map(|(_, v)| v).collect();
            summarize(key, &values)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub samples: Vec<EffectSample>,
    pub summaries: Vec<EffectsSummary>,
}

impl Analysis {
    pub fn first_order(&self) -> impl Iterator<Item = &EffectsSummary> {
        self.summaries.iter().filter(|s| matches!(s.key, EffectKey::First(_)))
    }

    pub fn second_order(&self) -> impl Iterator<Item = &EffectsSummary> {
        self.summaries.iter().filter(|s| matches!(s.key, EffectKey::Second(..)))
    }

    pub fn get(&self, key: EffectKey) -> Option<&EffectsSummary> {
        self.summaries.iter().find(|s| s.key == key)
    }
}

/// Effects of every replicate of a plan, then their statistics.
pub fn analyze(plan: &DesignPlan, outputs: &OutputMap) -> Result<Analysis> {
    let missing: Vec<usize> = (0..plan.points.len()).filter(|id| !outputs.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteEvaluation { point_ids: missing });
    }
    let mut samples = Vec::new();
    match &plan.design {
        Design::FirstOrder { trajectories } => {
            for (t, traj) in trajectories.iter().enumerate() {
                samples.extend(first_order_effects(traj, &plan.parameters, outputs, t)?);
            }
        }
        Design::SecondOrder { blocks } => {
            for (t, block) in blocks.iter().enumerate() {
                samples.extend(second_order_effects(block, &plan.parameters, outputs, t)?.samples(t));
            }
        }
    }
    samples.sort_by_key(|s| (s.key, s.replicate));
    let summaries = aggregate(&samples)?;
    Ok(Analysis { samples, summaries })
}
