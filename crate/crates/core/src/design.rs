//! Reduced parameter spaces and randomized one-at-a-time designs.
//!
//! Every input is mapped onto `[0, 1]` and discretized into `p` equally spaced
//! levels. Points are stored as integer level indices so that equality, hashing
//! and caching are exact; reduced coordinates are produced on demand.
//!
//! Two designs are generated:
//!
//! * first order: `r` trajectories of `k + 1` points, each changing every
//!   coordinate exactly once by `±Δ`;
//! * second order: `r` pair blocks, each made of a base point, the `k`
//!   single-step neighbours and the `k(k-1)/2` double-step corners, so that
//!   every pair `(i, j)` gets a full 2x2 factorial corner around the base.
//!
//! Step directions follow the reflection rule: a coordinate below 0.5 steps up,
//! one above 0.5 steps down. With `Δ = p / (2(p - 1))` and `p` even this keeps
//! every stepped coordinate on the grid and makes all levels equiprobable.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{DesignRng, RNG_ALGORITHM};

pub const DEFAULT_LEVELS: u32 = 10;

/// Step size in reduced units for a grid of `levels` values.
pub fn delta_for(levels: u32) -> Result<f64> {
    check_levels(levels)?;
    Ok(levels as f64 / (2.0 * (levels as f64 - 1.0)))
}

fn check_levels(levels: u32) -> Result<()> {
    if levels < 2 || (levels > 2 && !levels.is_multiple_of(2)) {
        return Err(Error::InvalidGrid { levels });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Sign {
    Up,
    Down,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Up => 1.0,
            Sign::Down => -1.0,
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Up => 1,
            Sign::Down => -1,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, Self::Error> {
        match v {
            1 => Ok(Sign::Up),
            -1 => Ok(Sign::Down),
            other => Err(format!("step sign must be 1 or -1, got {other}")),
        }
    }
}

/// Reflection rule on a reduced coordinate.
pub fn step_sign(coord_value: f64) -> Result<Sign> {
    if coord_value < 0.5 {
        Ok(Sign::Up)
    } else if coord_value > 0.5 {
        Ok(Sign::Down)
    } else {
        Err(Error::Invariant(
            "coordinate 0.5 has no step direction; grids must have an even number of levels".into(),
        ))
    }
}

/// One input variable and its discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub x_min: f64,
    pub x_max: f64,
    pub levels: u32,
}

impl ParameterSpec {
    pub fn new(name: impl Into<String>, x_min: f64, x_max: f64, levels: u32) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            x_min,
            x_max,
            levels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite()) {
            return Err(Error::InvalidParameter {
                name: self.name.clone(),
                reason: "bounds must be finite".into(),
            });
        }
        if self.x_min >= self.x_max {
            return Err(Error::InvalidParameter {
                name: self.name.clone(),
                reason: format!("min {} must be below max {}", self.x_min, self.x_max),
            });
        }
        check_levels(self.levels)
    }

    pub fn delta(&self) -> f64 {
        self.levels as f64 / (2.0 * (self.levels as f64 - 1.0))
    }

    /// Δ expressed in level indices.
    pub fn level_step(&self) -> u32 {
        self.levels / 2
    }

    /// Reduced coordinate of a level index.
    pub fn level_value(&self, level: u32) -> f64 {
        level as f64 / (self.levels - 1) as f64
    }

    pub fn reduce(&self, x: f64) -> Result<f64> {
        if !(self.x_min..=self.x_max).contains(&x) {
            return Err(Error::OutOfRange {
                value: x,
                min: self.x_min,
                max: self.x_max,
            });
        }
        Ok((x - self.x_min) / (self.x_max - self.x_min))
    }

    pub fn restore(&self, x_reduced: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x_reduced) {
            return Err(Error::OutOfRange {
                value: x_reduced,
                min: 0.0,
                max: 1.0,
            });
        }
        Ok(self.x_min + x_reduced * (self.x_max - self.x_min))
    }

    /// Direction of the step taken from `level`. Exact integer form of
    /// [`step_sign`]: `m / (p - 1) < 0.5` iff `2m < p - 1`.
    pub fn sign_at(&self, level: u32) -> Sign {
        if 2 * level < self.levels - 1 {
            Sign::Up
        } else {
            Sign::Down
        }
    }

    fn step(&self, level: u32, sign: Sign) -> u32 {
        match sign {
            Sign::Up => level + self.level_step(),
            Sign::Down => level - self.level_step(),
        }
    }
}

/// A point of the discrete grid, one level index per parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridPoint(pub Vec<u32>);

impl GridPoint {
    pub fn levels(&self) -> &[u32] {
        &self.0
    }

    pub fn coords(&self, params: &[ParameterSpec]) -> Vec<f64> {
        self.0
            .iter()
            .zip(params)
            .map(|(&m, p)| p.level_value(m))
            .collect()
    }

    pub fn physical(&self, params: &[ParameterSpec]) -> Vec<f64> {
        self.0
            .iter()
            .zip(params)
            .map(|(&m, p)| p.x_min + p.level_value(m) * (p.x_max - p.x_min))
            .collect()
    }

    fn stepped(&self, i: usize, sign: Sign, params: &[ParameterSpec]) -> GridPoint {
        let mut next = self.clone();
        next.0[i] = params[i].step(self.0[i], sign);
        next
    }

    pub fn is_on_grid(&self, params: &[ParameterSpec]) -> bool {
        self.0.len() == params.len() && self.0.iter().zip(params).all(|(&m, p)| m < p.levels)
    }
}

/// `k + 1` points, each one coordinate away from the previous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<GridPoint>,
    pub point_ids: Vec<usize>,
    /// Coordinate changed at each step.
    pub order: Vec<usize>,
    /// Step direction per coordinate (indexed by coordinate, not by step).
    pub signs: Vec<Sign>,
}

/// Double-step corner of a pair block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPoint {
    pub i: usize,
    pub j: usize,
    pub point: GridPoint,
    pub point_id: usize,
}

/// Base point with all single and double steps around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBlock {
    pub base: GridPoint,
    pub base_id: usize,
    /// `single_steps[i]` is the base with coordinate `i` stepped.
    pub single_steps: Vec<GridPoint>,
    pub single_ids: Vec<usize>,
    /// Pairs `i < j` in lexicographic order.
    pub double_steps: Vec<PairPoint>,
    pub signs: Vec<Sign>,
}

impl PairBlock {
    pub fn len(&self) -> usize {
        1 + self.single_steps.len() + self.double_steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    FirstOrder,
    SecondOrder,
}

impl std::fmt::Display for DesignMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DesignMode::FirstOrder => "first_order",
            DesignMode::SecondOrder => "second_order",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Design {
    FirstOrder { trajectories: Vec<Trajectory> },
    SecondOrder { blocks: Vec<PairBlock> },
}

/// A generated design together with everything needed to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPlan {
    pub rng: String,
    pub seed: u64,
    pub replicates: usize,
    pub parameters: Vec<ParameterSpec>,
    #[serde(flatten)]
    pub design: Design,
    /// Distinct points; a point's id is its position here.
    pub points: Vec<GridPoint>,
}

impl DesignPlan {
    pub fn mode(&self) -> DesignMode {
        match self.design {
            Design::FirstOrder { .. } => DesignMode::FirstOrder,
            Design::SecondOrder { .. } => DesignMode::SecondOrder,
        }
    }

    pub fn k(&self) -> usize {
        self.parameters.len()
    }

    /// Model evaluations the design calls for before deduplication.
    pub fn total_runs(&self) -> usize {
        match &self.design {
            Design::FirstOrder { trajectories } => trajectories.iter().map(|t| t.points.len()).sum(),
            Design::SecondOrder { blocks } => blocks.iter().map(PairBlock::len).sum(),
        }
    }

    pub fn distinct_points(&self) -> usize {
        self.points.len()
    }

    /// Build a first-order plan from explicit trajectories (start point and order).
    pub fn from_trajectory_starts(
        parameters: Vec<ParameterSpec>,
        starts: &[(GridPoint, Vec<usize>)],
        seed: u64,
    ) -> Result<Self> {
        validate_parameters(&parameters)?;
        let mut index = PointIndex::default();
        let mut trajectories = Vec::with_capacity(starts.len());
        for (start, order) in starts {
            if !start.is_on_grid(&parameters) {
                return Err(Error::InvalidDesign("start point is not on the grid".into()));
            }
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..parameters.len()).collect::<Vec<_>>() {
                return Err(Error::InvalidDesign(
                    "trajectory order must be a permutation of the coordinates".into(),
                ));
            }
            trajectories.push(build_trajectory(&parameters, start.clone(), order.clone(), &mut index));
        }
        Ok(Self {
            rng: RNG_ALGORITHM.to_string(),
            seed,
            replicates: trajectories.len(),
            parameters,
            design: Design::FirstOrder { trajectories },
            points: index.points,
        })
    }

    /// Check the structural invariants of a plan read back from disk.
    pub fn validate(&self) -> Result<()> {
        validate_parameters(&self.parameters)?;
        let params = &self.parameters;
        let k = params.len();
        let check_id = |p: &GridPoint, id: usize| -> Result<()> {
            if self.points.get(id) != Some(p) || !p.is_on_grid(params) {
                return Err(Error::InvalidDesign(format!("point id {id} does not match the point index")));
            }
            Ok(())
        };
        match &self.design {
            Design::FirstOrder { trajectories } => {
                for t in trajectories {
                    if t.points.len() != k + 1 || t.point_ids.len() != k + 1 || t.order.len() != k || t.signs.len() != k {
                        return Err(Error::InvalidDesign("trajectory has the wrong shape".into()));
                    }
                    for (p, &id) in t.points.iter().zip(&t.point_ids) {
                        check_id(p, id)?;
                    }
                    let mut seen = vec![false; k];
                    for (step, &i) in t.order.iter().enumerate() {
                        if i >= k || seen[i] {
                            return Err(Error::InvalidDesign("trajectory order is not a permutation".into()));
                        }
                        seen[i] = true;
                        if t.signs[i] != params[i].sign_at(t.points[step].0[i])
                            || t.points[step + 1] != t.points[step].stepped(i, t.signs[i], params)
                        {
                            return Err(Error::InvalidDesign(format!("trajectory step {step} is not a reflected Δ step")));
                        }
                    }
                }
            }
            Design::SecondOrder { blocks } => {
                for b in blocks {
                    if b.single_steps.len() != k || b.single_ids.len() != k || b.signs.len() != k || b.double_steps.len() != k * (k - 1) / 2 {
                        return Err(Error::InvalidDesign("pair block has the wrong shape".into()));
                    }
                    check_id(&b.base, b.base_id)?;
                    for i in 0..k {
                        check_id(&b.single_steps[i], b.single_ids[i])?;
                        if b.signs[i] != params[i].sign_at(b.base.0[i]) || b.single_steps[i] != b.base.stepped(i, b.signs[i], params) {
                            return Err(Error::InvalidDesign(format!("single step {i} is not a reflected Δ step")));
                        }
                    }
                    for pp in &b.double_steps {
                        if pp.i >= pp.j || pp.j >= k {
                            return Err(Error::InvalidDesign("pair indices out of order".into()));
                        }
                        check_id(&pp.point, pp.point_id)?;
                        if pp.point != b.single_steps[pp.i].stepped(pp.j, b.signs[pp.j], params) {
                            return Err(Error::InvalidDesign(format!("double step ({}, {}) is inconsistent", pp.i, pp.j)));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Expected run count of a first-order design before deduplication.
pub fn first_order_runs(k: usize, r: usize) -> usize {
    r * (k + 1)
}

/// Expected run count of a second-order design before deduplication.
pub fn second_order_runs(k: usize, r: usize) -> usize {
    r * (1 + k + k * (k.saturating_sub(1)) / 2)
}

#[derive(Default)]
struct PointIndex {
    ids: HashMap<GridPoint, usize>,
    points: Vec<GridPoint>,
}

impl PointIndex {
    fn intern(&mut self, p: &GridPoint) -> usize {
        if let Some(&id) = self.ids.get(p) {
            return id;
        }
        let id = self.points.len();
        self.ids.insert(p.clone(), id);
        self.points.push(p.clone());
        id
    }
}

fn validate_parameters(parameters: &[ParameterSpec]) -> Result<()> {
    if parameters.is_empty() {
        return Err(Error::InvalidDesign("at least one parameter is required".into()));
    }
    parameters.iter().try_for_each(ParameterSpec::validate)
}

fn random_point(parameters: &[ParameterSpec], rng: &mut DesignRng) -> GridPoint {
    GridPoint(parameters.iter().map(|p| rng.below(p.levels as u64) as u32).collect())
}

fn build_trajectory(
    parameters: &[ParameterSpec],
    start: GridPoint,
    order: Vec<usize>,
    index: &mut PointIndex,
) -> Trajectory {
    // Each coordinate moves once, so its direction is fixed by the start value.
    let signs: Vec<Sign> = start.0.iter().zip(parameters).map(|(&m, p)| p.sign_at(m)).collect();
    let mut points = Vec::with_capacity(order.len() + 1);
    points.push(start);
    for &i in &order {
        let next = points.last().unwrap().stepped(i, signs[i], parameters);
        points.push(next);
    }
    let point_ids = points.iter().map(|p| index.intern(p)).collect();
    Trajectory {
        points,
        point_ids,
        order,
        signs,
    }
}

/// `r` random trajectories with uniform start points and coordinate orders.
pub fn sample_first_order(parameters: &[ParameterSpec], r: usize, seed: u64) -> Result<DesignPlan> {
    validate_parameters(parameters)?;
    if r == 0 {
        return Err(Error::InvalidDesign("replicates must be at least 1".into()));
    }
    let mut rng = DesignRng::new(seed);
    let mut index = PointIndex::default();
    let trajectories = (0..r)
        .map(|_| {
            let start = random_point(parameters, &mut rng);
            let order = rng.permutation(parameters.len());
            build_trajectory(parameters, start, order, &mut index)
        })
        .collect();
    Ok(DesignPlan {
        rng: RNG_ALGORITHM.to_string(),
        seed,
        replicates: r,
        parameters: parameters.to_vec(),
        design: Design::FirstOrder { trajectories },
        points: index.points,
    })
}

/// `r` pair blocks around uniformly drawn base points.
pub fn sample_second_order(parameters: &[ParameterSpec], r: usize, seed: u64) -> Result<DesignPlan> {
    validate_parameters(parameters)?;
    let k = parameters.len();
    if k < 2 {
        return Err(Error::InvalidDesign(format!(
            "second-order designs need at least 2 parameters, got {k}"
        )));
    }
    if r == 0 {
        return Err(Error::InvalidDesign("replicates must be at least 1".into()));
    }
    let mut rng = DesignRng::new(seed);
    let mut index = PointIndex::default();
    let mut blocks = Vec::with_capacity(r);
    for _ in 0..r {
        let base = random_point(parameters, &mut rng);
        let signs: Vec<Sign> = base.0.iter().zip(parameters).map(|(&m, p)| p.sign_at(m)).collect();
        let base_id = index.intern(&base);
        let single_steps: Vec<GridPoint> = (0..k).map(|i| base.stepped(i, signs[i], parameters)).collect();
        let single_ids = single_steps.iter().map(|p| index.intern(p)).collect();
        let mut double_steps = Vec::with_capacity(k * (k - 1) / 2);
        for i in 0..k {
            for j in i + 1..k {
                let point = single_steps[i].stepped(j, signs[j], parameters);
                let point_id = index.intern(&point);
                double_steps.push(PairPoint { i, j, point, point_id });
            }
        }
        blocks.push(PairBlock {
            base,
            base_id,
            single_steps,
            single_ids,
            double_steps,
            signs,
        });
    }
    Ok(DesignPlan {
        rng: RNG_ALGORITHM.to_string(),
        seed,
        replicates: r,
        parameters: parameters.to_vec(),
        design: Design::SecondOrder { blocks },
        points: index.points,
    })
}

pub fn sample(parameters: &[ParameterSpec], mode: DesignMode, r: usize, seed: u64) -> Result<DesignPlan> {
    match mode {
        DesignMode::FirstOrder => sample_first_order(parameters, r, seed),
        DesignMode::SecondOrder => sample_second_order(parameters, r, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(k: usize, levels: u32) -> Vec<ParameterSpec> {
        (0..k)
            .map(|i| ParameterSpec::new(format!("x{}", i + 1), 0.0, 1.0, levels).unwrap())
            .collect()
    }

    #[test]
    fn delta_values() {
        assert!((delta_for(10).unwrap() - 5.0 / 9.0).abs() < 1e-15);
        assert!((delta_for(10).unwrap() - 0.555556).abs() < 1e-6);
        assert_eq!(delta_for(2).unwrap(), 1.0);
        assert!((delta_for(4).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn odd_or_tiny_grids_rejected() {
        for bad in [0, 1, 3, 5, 9] {
            assert!(matches!(delta_for(bad), Err(Error::InvalidGrid { .. })), "{bad}");
        }
        assert!(ParameterSpec::new("x", 0.0, 1.0, 5).is_err());
        assert!(ParameterSpec::new("x", 1.0, 1.0, 10).is_err());
        assert!(ParameterSpec::new("x", 2.0, 1.0, 10).is_err());
    }

    #[test]
    fn reduce_and_restore() {
        let setpoint = ParameterSpec::new("setpoint", 17.0, 24.0, 10).unwrap();
        assert_eq!(setpoint.reduce(20.5).unwrap(), 0.5);
        let insulation = ParameterSpec::new("insulation", 5.0, 100.0, 10).unwrap();
        assert_eq!(insulation.reduce(5.0).unwrap(), 0.0);
        let rotation = ParameterSpec::new("rotation", 0.0, 180.0, 10).unwrap();
        assert!((rotation.restore(5.0 / 9.0).unwrap() - 100.0).abs() < 1e-12);

        assert!(matches!(setpoint.reduce(16.9), Err(Error::OutOfRange { .. })));
        assert!(matches!(setpoint.restore(1.01), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn reflection_rule() {
        assert_eq!(step_sign(4.0 / 9.0).unwrap(), Sign::Up);
        assert_eq!(step_sign(5.0 / 9.0).unwrap(), Sign::Down);
        assert_eq!(step_sign(0.0).unwrap(), Sign::Up);
        assert!(matches!(step_sign(0.5), Err(Error::Invariant(_))));

        // Integer form agrees with the real-valued rule on every grid value.
        for levels in [2, 4, 6, 10, 20] {
            let p = ParameterSpec::new("x", 0.0, 1.0, levels).unwrap();
            for m in 0..levels {
                assert_eq!(p.sign_at(m), step_sign(p.level_value(m)).unwrap());
            }
        }
    }

    #[test]
    fn small_first_order_structure() {
        let plan = sample_first_order(&params(2, 10), 1, 5).unwrap();
        let Design::FirstOrder { trajectories } = &plan.design else { panic!() };
        let t = &trajectories[0];
        assert_eq!(t.points.len(), 3);
        for w in t.points.windows(2) {
            let changed = w[0].0.iter().zip(&w[1].0).filter(|(a, b)| a != b).count();
            assert_eq!(changed, 1);
        }
        plan.validate().unwrap();
    }

    #[test]
    fn table_sized_run_counts() {
        let plan = sample_first_order(&params(24, 10), 10, 1).unwrap();
        assert_eq!(plan.total_runs(), 250);
        assert!(plan.distinct_points() <= 250);

        let plan = sample_second_order(&params(12, 10), 10, 1).unwrap();
        assert_eq!(plan.total_runs(), 790);
        assert_eq!(second_order_runs(12, 10), 790);
        assert!(plan.distinct_points() <= 790);
    }

    #[test]
    fn minimal_pair_block_is_a_factorial_corner() {
        let plan = sample_second_order(&params(2, 10), 1, 9).unwrap();
        let Design::SecondOrder { blocks } = &plan.design else { panic!() };
        let b = &blocks[0];
        assert_eq!(b.len(), 4);
        let (bi, bj) = (b.base.0[0], b.base.0[1]);
        let (si, sj) = (b.single_steps[0].0[0], b.single_steps[1].0[1]);
        assert_eq!(b.single_steps[0], GridPoint(vec![si, bj]));
        assert_eq!(b.single_steps[1], GridPoint(vec![bi, sj]));
        assert_eq!(b.double_steps[0].point, GridPoint(vec![si, sj]));
        assert_eq!(plan.distinct_points(), 4);
    }

    #[test]
    fn second_order_needs_two_parameters() {
        assert!(matches!(sample_second_order(&params(1, 10), 3, 0), Err(Error::InvalidDesign(_))));
    }

    #[test]
    fn same_seed_same_bytes() {
        let ps = params(5, 10);
        let a = serde_json::to_string(&sample_first_order(&ps, 20, 77).unwrap()).unwrap();
        let b = serde_json::to_string(&sample_first_order(&ps, 20, 77).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&sample_first_order(&ps, 20, 78).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn one_shared_point_is_deduplicated() {
        let k = 4;
        // The second start is the first step of the first trajectory.
        let plan = DesignPlan::from_trajectory_starts(
            params(k, 10),
            &[(GridPoint(vec![0, 3, 6, 9]), vec![0, 1, 2, 3]), (GridPoint(vec![5, 3, 6, 9]), vec![3, 0, 1, 2])],
            0,
        )
        .unwrap();
        assert_eq!(plan.total_runs(), 2 * (k + 1));
        assert_eq!(plan.distinct_points(), 2 * (k + 1) - 1);
    }

    #[test]
    fn shared_start_also_shares_the_end() {
        // Signs depend only on the start, so every order ends at the same corner.
        let k = 4;
        let start = GridPoint(vec![0, 3, 6, 9]);
        let plan = DesignPlan::from_trajectory_starts(
            params(k, 10),
            &[(start.clone(), vec![0, 1, 2, 3]), (start, vec![3, 2, 1, 0])],
            0,
        )
        .unwrap();
        assert_eq!(plan.distinct_points(), 2 * (k + 1) - 2);
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = sample_second_order(&params(3, 4), 2, 11).unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        let back: DesignPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(plan, back);
        back.validate().unwrap();
    }

    #[test]
    fn tampered_plan_is_rejected() {
        let mut plan = sample_first_order(&params(3, 10), 2, 11).unwrap();
        if let Design::FirstOrder { trajectories } = &mut plan.design {
            trajectories[0].signs[0] = match trajectories[0].signs[0] {
                Sign::Up => Sign::Down,
                Sign::Down => Sign::Up,
            };
        }
        assert!(plan.validate().is_err());
    }

    fn mixed_params() -> impl Strategy<Value = Vec<ParameterSpec>> {
        prop::collection::vec(prop::sample::select(vec![2u32, 4, 6, 10, 12]), 2..7).prop_map(|levels| {
            levels
                .into_iter()
                .enumerate()
                .map(|(i, p)| ParameterSpec::new(format!("x{i}"), -1.0, 3.0, p).unwrap())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn trajectories_change_each_coordinate_once(ps in mixed_params(), r in 1usize..8, seed: u64) {
            let plan = sample_first_order(&ps, r, seed).unwrap();
            plan.validate().unwrap();
            let Design::FirstOrder { trajectories } = &plan.design else { unreachable!() };
            prop_assert_eq!(trajectories.len(), r);
            for t in trajectories {
                let mut changed = vec![0; ps.len()];
                for w in t.points.windows(2) {
                    let diff: Vec<usize> = (0..ps.len()).filter(|&i| w[0].0[i] != w[1].0[i]).collect();
                    prop_assert_eq!(diff.len(), 1);
                    let i = diff[0];
                    changed[i] += 1;
                    let step = (ps[i].level_value(w[1].0[i]) - ps[i].level_value(w[0].0[i])) * t.signs[i].as_f64();
                    prop_assert!((step - ps[i].delta()).abs() < 1e-12);
                }
                prop_assert!(changed.iter().all(|&c| c == 1));
                prop_assert!(t.points.iter().all(|p| p.is_on_grid(&ps)));
            }
            prop_assert!(plan.distinct_points() <= first_order_runs(ps.len(), r));
        }

        #[test]
        fn pair_blocks_compose_single_steps(ps in mixed_params(), r in 1usize..5, seed: u64) {
            let plan = sample_second_order(&ps, r, seed).unwrap();
            plan.validate().unwrap();
            let Design::SecondOrder { blocks } = &plan.design else { unreachable!() };
            for b in blocks {
                for pp in &b.double_steps {
                    let mut expected = b.single_steps[pp.i].clone();
                    expected.0[pp.j] = b.single_steps[pp.j].0[pp.j];
                    prop_assert_eq!(&pp.point, &expected);
                    prop_assert!(pp.point.is_on_grid(&ps));
                }
            }
            prop_assert_eq!(plan.total_runs(), second_order_runs(ps.len(), r));
            prop_assert!(plan.distinct_points() <= plan.total_runs());
        }

        #[test]
        fn reduce_restore_are_inverse(lo in -1e3f64..1e3, width in 1e-3f64..1e3, t in 0.0f64..=1.0) {
            let p = ParameterSpec::new("x", lo, lo + width, 10).unwrap();
            let x = p.restore(t).unwrap().clamp(p.x_min, p.x_max);
            prop_assert!((p.reduce(x).unwrap() - t).abs() < 1e-9);
        }
    }
}
