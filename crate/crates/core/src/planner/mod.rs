//! The forest planner: tree spawning around task-relevant objects, forest
//! expansion with sampled end-effector twists, and progress evaluation
//! with dynamic planning horizons.

mod forest;
mod roots;

pub use forest::{distance, Forest, TreeNode};
pub use roots::{
    choose_object, root_sampler, root_sampler_names, sample_root, selection_probabilities, RootSampler, Stretch,
    TaskOrientedRoots, UniformRoots,
};

use log::warn;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::JointControl;
use crate::clock::Work;
use crate::geometry::Pose2;
use crate::physics::{simulate, substeps_for, Twist2};
use crate::registry::Registry;
use crate::scenario::Scenario;
use crate::task::{random_angle, sample_in, Task};
use crate::transit::{self, JointPath};
use crate::world::{is_transit_valid, ObjectState, SystemState};
use forest::Reach;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamSet {
    /// Planner strategy name (`kdrrf` or `dhrrt`).
    pub algorithm: String,
    pub n_tree: usize,
    /// Candidate twists simulated per expansion.
    pub candidates: usize,
    /// Heuristic decrease that triggers execution; task default, then a
    /// tenth of the current heuristic, when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub progress_threshold: Option<f64>,
    pub s_max: usize,
    pub root_sampling: String,
    pub stretch: Stretch,
    pub goal_bias: f64,
    /// Weights of the arm, object position and object angle terms.
    pub distance_weights: [f64; 3],
    /// Root distance from the object, in multiples of object radius plus
    /// end-effector radius.
    pub root_offset_range: [f64; 2],
    pub root_attempts: usize,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
    pub control_duration: f64,
}

impl Default for ParamSet {
    fn default() -> Self {
        Self {
            algorithm: "kdrrf".into(),
            n_tree: 3,
            candidates: 40,
            progress_threshold: None,
            s_max: 300,
            root_sampling: "task_oriented".into(),
            stretch: Stretch::default(),
            goal_bias: 0.7,
            distance_weights: [0.02, 1.0, 0.1],
            root_offset_range: [1.2, 2.0],
            root_attempts: 50,
            max_linear_speed: 0.2,
            max_angular_speed: 1.0,
            control_duration: 0.5,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("unknown planner `{0}`")]
    UnknownPlanner(String),
    #[error("unknown root sampling mode `{0}`")]
    UnknownRootSampling(String),
    #[error("invalid planner parameter: {0}")]
    Invalid(&'static str),
}

impl ParamSet {
    pub fn with_algorithm(mut self, name: &str) -> Self {
        self.algorithm = name.into();
        self
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        strategy(&self.algorithm).ok_or_else(|| PlannerError::UnknownPlanner(self.algorithm.clone()))?;
        root_sampler(&self.root_sampling).ok_or_else(|| PlannerError::UnknownRootSampling(self.root_sampling.clone()))?;
        let checks: [(bool, &'static str); 9] = [
            (self.n_tree >= 1, "n_tree must be at least 1"),
            (self.candidates >= 1, "candidates must be at least 1"),
            (self.s_max >= 1, "s_max must be at least 1"),
            (self.root_attempts >= 1, "root_attempts must be at least 1"),
            ((0.0..1.0).contains(&self.goal_bias), "goal_bias must lie in [0, 1)"),
            (self.distance_weights.iter().all(|w| *w > 0.0), "distance weights must be positive"),
            (
                self.root_offset_range[0] > 0.0 && self.root_offset_range[0] <= self.root_offset_range[1],
                "root_offset_range must be positive and ordered",
            ),
            (
                self.max_linear_speed > 0.0 && self.max_angular_speed > 0.0 && self.control_duration > 0.0,
                "control bounds must be positive",
            ),
            (self.progress_threshold.is_none_or(|p| p > 0.0), "progress_threshold must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(PlannerError::Invalid(msg)),
            None => Ok(()),
        }
    }
}

/// How a planner configuration shapes the forest.
pub trait PlannerStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn tree_count(&self, params: &ParamSet) -> usize;
    /// Whether rearranging segments may be preceded by transit motions.
    fn uses_transit(&self) -> bool;
}

/// Multi-tree forest with transits to each root.
pub struct KdRrf;

impl PlannerStrategy for KdRrf {
    fn name(&self) -> &'static str {
        "kdrrf"
    }

    fn tree_count(&self, params: &ParamSet) -> usize {
        params.n_tree
    }

    fn uses_transit(&self) -> bool {
        true
    }
}

/// Single tree rooted at the current state, no transits.
pub struct DhRrt;

impl PlannerStrategy for DhRrt {
    fn name(&self) -> &'static str {
        "dhrrt"
    }

    fn tree_count(&self, _params: &ParamSet) -> usize {
        1
    }

    fn uses_transit(&self) -> bool {
        false
    }
}

fn registry() -> &'static Registry<&'static dyn PlannerStrategy> {
    static REGISTRY: std::sync::OnceLock<Registry<&'static dyn PlannerStrategy>> = std::sync::OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<&'static dyn PlannerStrategy> = Registry::new();
        r.register("kdrrf", &KdRrf);
        r.register("dhrrt", &DhRrt);
        r
    })
}

pub fn strategy(name: &str) -> Option<&'static dyn PlannerStrategy> {
    registry().get(name).copied()
}

pub fn strategy_names() -> Vec<&'static str> {
    registry().names()
}

/// One rearranging control with the state the planner predicts after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RearrangeStep {
    pub twist: Twist2,
    pub control: JointControl,
    pub predicted: SystemState,
}

/// A transit to a tree root followed by the controls leading from that
/// root to the selected node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPair {
    pub transit: JointPath,
    pub rearrange: Vec<RearrangeStep>,
    /// State at the root, where the rearranging controls start.
    pub root_state: SystemState,
    /// Extracted because the forest hit its size limit.
    pub fallback: bool,
}

/// Planning state for one episode. Work done is accumulated in `work` for
/// the caller to charge to its clock.
pub struct Planner<'a> {
    pub scenario: &'a Scenario,
    pub task: &'a dyn Task,
    pub params: ParamSet,
    strategy: &'static dyn PlannerStrategy,
    sampler: &'static dyn RootSampler,
    rng: ChaCha8Rng,
    pub work: Work,
}

impl<'a> Planner<'a> {
    pub fn new(scenario: &'a Scenario, task: &'a dyn Task, params: ParamSet, seed: u64) -> Result<Self, PlannerError> {
        params.validate()?;
        let strategy = strategy(&params.algorithm).expect("validated");
        let sampler = root_sampler(&params.root_sampling).expect("validated");
        Ok(Self {
            scenario,
            task,
            params,
            strategy,
            sampler,
            rng: ChaCha8Rng::seed_from_u64(seed),
            work: Work::default(),
        })
    }

    pub fn strategy(&self) -> &'static dyn PlannerStrategy {
        self.strategy
    }

    pub fn take_work(&mut self) -> Work {
        std::mem::take(&mut self.work)
    }

    /// Progress threshold for a forest spawned at `q`.
    pub fn progress_threshold(&self, q: &SystemState) -> f64 {
        self.params
            .progress_threshold
            .or(self.task.progress_threshold())
            .unwrap_or_else(|| 0.1 * self.task.heuristic(q))
    }

    /// Root 0 is `q` itself; further roots place the end-effector next to
    /// sampled objects and must be contact-free and reachable from `q`.
    pub fn spawn_forest(&mut self, q: &SystemState) -> Forest {
        let mut forest = Forest::new();
        forest.add_root(q.clone(), self.task.heuristic(q));
        forest.reach[0] = Some(Reach::Path(JointPath::stay(q.arm, self.scenario.params.transit.resolution)));
        let wanted = self.strategy.tree_count(&self.params);
        let s = self.scenario;
        'slots: for slot in 1..wanted {
            for _ in 0..self.params.root_attempts {
                self.work.ik_solves += 1;
                let Some(root) = sample_root(q, s, self.task, self.sampler, &self.params, &mut self.rng) else {
                    continue;
                };
                self.work.checks += 1;
                if !is_transit_valid(&root.arm, q, s) {
                    continue;
                }
                let seed = self.rng.next_u64();
                let budget = s.params.transit.exists_budget;
                let Ok(outcome) = transit::plan(&q.arm, &root.arm, q, s, budget, seed) else {
                    continue;
                };
                self.work.checks += outcome.checks;
                if let Some(path) = outcome.path {
                    let h = self.task.heuristic(&root);
                    let t = forest.add_root(root, h);
                    forest.reach[t] = Some(Reach::Path(path));
                    continue 'slots;
                }
            }
            warn!(
                "root slot {slot} failed after {} attempts; forest has {} trees",
                self.params.root_attempts,
                forest.num_trees()
            );
            break;
        }
        forest
    }

    /// Random target: arm uniform in its limits, objects at task goal poses
    /// with probability `goal_bias`, otherwise uniform on the table.
    pub fn sample_state(&mut self, q: &SystemState) -> SystemState {
        let limits = self.scenario.params.arm.joint_limits;
        let arm = std::array::from_fn(|i| self.rng.random_range(limits[i][0]..=limits[i][1]));
        let objects = if self.rng.random::<f64>() < self.params.goal_bias {
            let poses = self.task.sample_goal_poses(q, &mut self.rng);
            q.objects
                .iter()
                .zip(poses)
                .map(|(o, pose)| ObjectState { pose, ..o.clone() })
                .collect()
        } else {
            q.objects
                .iter()
                .map(|o| {
                    let (x, y) = sample_in(&self.scenario.workspace, &mut self.rng);
                    let theta = random_angle(&mut self.rng);
                    ObjectState {
                        pose: Pose2::new(x, y, theta),
                        ..o.clone()
                    }
                })
                .collect()
        };
        SystemState { arm, objects }
    }

    pub fn sample_twist(&mut self) -> Twist2 {
        let (l, a) = (self.params.max_linear_speed, self.params.max_angular_speed);
        Twist2::new(
            self.rng.random_range(-l..=l),
            self.rng.random_range(-l..=l),
            self.rng.random_range(-a..=a),
            self.params.control_duration,
        )
    }

    /// One expansion step. Returns the index of the added node, if any.
    pub fn expand_forest(&mut self, forest: &mut Forest) -> Option<usize> {
        let root_state = forest.nodes[0].state.clone();
        let q_rand = self.sample_state(&root_state);
        let near = forest.nearest(&q_rand, &self.params.distance_weights);
        let s = self.scenario;
        let physics = &s.params.physics;
        let mut best: Option<(f64, Twist2, SystemState, JointControl)> = None;
        for _ in 0..self.params.candidates {
            let v = self.sample_twist();
            self.work.substeps += substeps_for(&v, physics);
            let Ok(sweep) = simulate(&forest.nodes[near].state, &v, s, physics, false) else {
                continue;
            };
            if !sweep.in_manifold {
                continue;
            }
            let d = distance(&sweep.state, &q_rand, &self.params.distance_weights);
            if best.as_ref().is_none_or(|b| d < b.0) {
                best = Some((d, v, sweep.state, sweep.control));
            }
        }
        let (_, v, state, control) = best?;
        let h = self.task.heuristic(&state);
        Some(forest.add_child(near, state, v, control, h))
    }

    /// Extraction check after an expansion that added `latest`.
    pub fn evaluate_progress(
        &mut self,
        forest: &mut Forest,
        latest: Option<usize>,
        h_current: f64,
        threshold: f64,
    ) -> Option<MotionPair> {
        if let Some(n) = latest {
            let node = &forest.nodes[n];
            if self.task.goal(&node.state) || h_current - node.h_value > threshold {
                if let Some(pair) = self.extract(forest, n, false) {
                    return Some(pair);
                }
            }
        }
        if forest.size() >= self.params.s_max {
            let mut leaves: Vec<usize> = forest.leaves().collect();
            leaves.sort_by(|a, b| forest.nodes[*a].h_value.total_cmp(&forest.nodes[*b].h_value).then(a.cmp(b)));
            for leaf in leaves {
                if let Some(pair) = self.extract(forest, leaf, true) {
                    return Some(pair);
                }
            }
        }
        None
    }

    fn extract(&mut self, forest: &mut Forest, node: usize, fallback: bool) -> Option<MotionPair> {
        let t = forest.nodes[node].tree_id;
        let root = forest.roots[t];
        if root == node {
            return None;
        }
        let transit = match &forest.reach[t] {
            Some(Reach::Path(p)) => p.clone(),
            Some(Reach::Unreachable) => return None,
            None => {
                let s = self.scenario;
                let spawn = &forest.nodes[0].state;
                let seed = self.rng.next_u64();
                let out = transit::plan(&spawn.arm, &forest.nodes[root].state.arm, spawn, s, s.params.transit.budget, seed);
                match out {
                    Ok(o) => {
                        self.work.checks += o.checks;
                        match o.path {
                            Some(p) => {
                                forest.reach[t] = Some(Reach::Path(p.clone()));
                                p
                            }
                            None => {
                                forest.reach[t] = Some(Reach::Unreachable);
                                return None;
                            }
                        }
                    }
                    Err(_) => {
                        forest.reach[t] = Some(Reach::Unreachable);
                        return None;
                    }
                }
            }
        };
        let chain = forest.trace_to_root(node);
        let rearrange = chain[1..]
            .iter()
            .map(|&i| {
                let n = &forest.nodes[i];
                RearrangeStep {
                    twist: n.incoming_twist.expect("non-root"),
                    control: n.incoming_control.clone().expect("non-root"),
                    predicted: n.state.clone(),
                }
            })
            .collect();
        Some(MotionPair {
            transit,
            rearrange,
            root_state: forest.nodes[root].state.clone(),
            fallback,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::transition;
    use crate::scenario::test_support::open_scenario;
    use crate::task::build as build_task;
    use crate::transit::validate_path;
    use crate::world::is_state_valid;

    #[test]
    fn defaults_validate() {
        ParamSet::default().validate().unwrap();
        let bad = ParamSet { goal_bias: 1.0, ..ParamSet::default() };
        assert!(matches!(bad.validate(), Err(PlannerError::Invalid(_))));
        let unknown = ParamSet::default().with_algorithm("astar");
        assert_eq!(unknown.validate(), Err(PlannerError::UnknownPlanner("astar".into())));
        assert_eq!(strategy_names(), vec!["dhrrt", "kdrrf"]);
    }

    #[test]
    fn dhrrt_spawns_single_root() {
        let s = open_scenario(4);
        let task = build_task(&s).unwrap();
        let mut p = Planner::new(&s, task.as_ref(), ParamSet::default().with_algorithm("dhrrt"), 1).unwrap();
        let f = p.spawn_forest(&s.initial_state);
        assert_eq!(f.num_trees(), 1);
        assert_eq!(f.nodes[0].state, s.initial_state);
    }

    #[test]
    fn kdrrf_roots_are_contact_free_and_reachable() {
        let s = open_scenario(4);
        let task = build_task(&s).unwrap();
        let params = ParamSet { n_tree: 5, ..ParamSet::default() };
        let mut p = Planner::new(&s, task.as_ref(), params, 2).unwrap();
        let q = &s.initial_state;
        let f = p.spawn_forest(q);
        assert_eq!(f.num_trees(), 5);
        for t in 1..f.num_trees() {
            let root = &f.nodes[f.roots[t]].state;
            assert_eq!(root.objects, q.objects);
            assert!(is_transit_valid(&root.arm, q, &s));
            let Some(Reach::Path(path)) = &f.reach[t] else { panic!("root {t} without path") };
            assert_eq!(path.start(), &q.arm);
            assert_eq!(path.end(), &root.arm);
            assert!(validate_path(path, q, &s, path.resolution / 2.0));
        }
    }

    #[test]
    fn expansion_adds_at_most_one_consistent_node() {
        let s = open_scenario(3);
        let task = build_task(&s).unwrap();
        let mut p = Planner::new(&s, task.as_ref(), ParamSet::default(), 3).unwrap();
        let mut f = p.spawn_forest(&s.initial_state);
        for _ in 0..200 {
            let before = f.size();
            let added = p.expand_forest(&mut f);
            assert_eq!(f.size(), before + added.is_some() as usize);
        }
        assert!(f.size() > 3);
        for n in &f.nodes {
            let Some(parent) = n.parent else { continue };
            let parent = &f.nodes[parent];
            let again = transition(&parent.state, n.incoming_twist.as_ref().unwrap(), &s, &s.params.physics).unwrap();
            assert_eq!(again, n.state);
            assert!(is_state_valid(&n.state, &s));
        }
    }

    #[test]
    fn small_drop_below_threshold_keeps_expanding() {
        let s = open_scenario(2);
        let task = build_task(&s).unwrap();
        let mut p = Planner::new(&s, task.as_ref(), ParamSet::default(), 4).unwrap();
        let mut f = p.spawn_forest(&s.initial_state);
        let h0 = task.heuristic(&s.initial_state);
        let mut moved = s.initial_state.clone();
        moved.arm[0] += 0.01;
        let n = f.add_child(0, moved, Twist2::zero(0.5), JointControl::default(), h0 - 0.05);
        assert!(p.evaluate_progress(&mut f, Some(n), h0, 0.1).is_none());
        let pair = p.evaluate_progress(&mut f, Some(n), h0, 0.04).expect("past threshold");
        assert_eq!(pair.rearrange.len(), 1);
        assert!(pair.transit.is_trivial());
        assert!(!pair.fallback);
    }

    #[test]
    fn size_limit_extracts_best_leaf() {
        let s = open_scenario(2);
        let task = build_task(&s).unwrap();
        let params = ParamSet { s_max: 4, ..ParamSet::default().with_algorithm("dhrrt") };
        let mut p = Planner::new(&s, task.as_ref(), params, 5).unwrap();
        let mut f = p.spawn_forest(&s.initial_state);
        let h0 = task.heuristic(&s.initial_state);
        let q = s.initial_state.clone();
        let a = f.add_child(0, q.clone(), Twist2::zero(0.5), JointControl::default(), h0 + 0.2);
        let b = f.add_child(0, q.clone(), Twist2::zero(0.5), JointControl::default(), h0 - 0.01);
        let c = f.add_child(a, q.clone(), Twist2::zero(0.5), JointControl::default(), h0 + 0.1);
        assert!(f.size() >= 4);
        let pair = p.evaluate_progress(&mut f, Some(c), h0, 1.0).expect("fallback");
        assert!(pair.fallback);
        assert_eq!(pair.rearrange.len(), 1);
        let _ = b;
    }
}
