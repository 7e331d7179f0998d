//! Contact-free transit paths in joint space (RRT-connect with greedy
//! shortcutting).

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::JointConfig;
use crate::scenario::Scenario;
use crate::world::{is_arm_valid, is_transit_valid, SystemState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransitParams {
    /// Maximum joint-space step (rad) between validated samples of a path.
    pub resolution: f64,
    pub extend_step: f64,
    pub budget: usize,
    pub exists_budget: usize,
    pub shortcut_attempts: usize,
    /// Joint speed (rad/s) used to time transit execution.
    pub joint_speed: f64,
}

impl Default for TransitParams {
    fn default() -> Self {
        Self {
            resolution: 0.02,
            extend_step: 0.1,
            budget: 5000,
            exists_budget: 1000,
            shortcut_attempts: 100,
            joint_speed: 2.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TransitError {
    #[error("transit start configuration is not contact-free")]
    InvalidStart,
    #[error("transit goal configuration is not contact-free")]
    InvalidGoal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPath {
    pub waypoints: Vec<JointConfig>,
    pub resolution: f64,
}

impl JointPath {
    pub fn stay(q: JointConfig, resolution: f64) -> Self {
        Self {
            waypoints: vec![q],
            resolution,
        }
    }

    pub fn start(&self) -> &JointConfig {
        &self.waypoints[0]
    }

    pub fn end(&self) -> &JointConfig {
        self.waypoints.last().expect("non-empty path")
    }

    pub fn is_trivial(&self) -> bool {
        self.waypoints.len() <= 1
    }

    /// Joint-space length in radians.
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| dist(&w[0], &w[1])).sum()
    }

    /// Samples every segment at no more than `step` radians apart.
    pub fn samples(&self, step: f64) -> Vec<JointConfig> {
        let mut out = vec![self.waypoints[0]];
        for w in self.waypoints.windows(2) {
            let n = (dist(&w[0], &w[1]) / step).ceil().max(1.0) as usize;
            for k in 1..=n {
                out.push(lerp(&w[0], &w[1], k as f64 / n as f64));
            }
        }
        out
    }
}

pub fn dist(a: &JointConfig, b: &JointConfig) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn lerp(a: &JointConfig, b: &JointConfig, t: f64) -> JointConfig {
    std::array::from_fn(|i| a[i] + (b[i] - a[i]) * t)
}

/// Work done by one query, for cost accounting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitOutcome {
    pub path: Option<JointPath>,
    pub nodes: usize,
    pub checks: usize,
}

struct Checker<'a> {
    frozen: &'a SystemState,
    s: &'a Scenario,
    step: f64,
    checks: Cell<usize>,
}

impl Checker<'_> {
    fn point(&self, q: &JointConfig) -> bool {
        self.checks.set(self.checks.get() + 1);
        is_transit_valid(q, self.frozen, self.s)
    }

    /// Validates the open segment `(a, b]`.
    fn segment(&self, a: &JointConfig, b: &JointConfig) -> bool {
        let n = (dist(a, b) / self.step).ceil().max(1.0) as usize;
        (1..=n).all(|k| self.point(&lerp(a, b, k as f64 / n as f64)))
    }
}

struct Tree {
    nodes: Vec<JointConfig>,
    parents: Vec<usize>,
}

impl Tree {
    fn new(root: JointConfig) -> Self {
        Self {
            nodes: vec![root],
            parents: vec![usize::MAX],
        }
    }

    fn nearest(&self, q: &JointConfig) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = dist(n, q);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    fn branch(&self, mut i: usize) -> Vec<JointConfig> {
        let mut out = Vec::new();
        while i != usize::MAX {
            out.push(self.nodes[i]);
            i = self.parents[i];
        }
        out
    }
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

fn extend(tree: &mut Tree, target: &JointConfig, step: f64, check: &Checker) -> Extend {
    let near = tree.nearest(target);
    let from = tree.nodes[near];
    let d = dist(&from, target);
    let (next, reached) = if d <= step {
        (*target, true)
    } else {
        (lerp(&from, target, step / d), false)
    };
    if !check.segment(&from, &next) {
        return Extend::Trapped;
    }
    tree.nodes.push(next);
    tree.parents.push(near);
    let idx = tree.nodes.len() - 1;
    if reached {
        Extend::Reached(idx)
    } else {
        Extend::Advanced(idx)
    }
}

/// Full query with work accounting. `seed` fixes this query's random stream.
pub fn plan(
    from: &JointConfig,
    to: &JointConfig,
    frozen: &SystemState,
    s: &Scenario,
    budget: usize,
    seed: u64,
) -> Result<TransitOutcome, TransitError> {
    let tp = &s.params.transit;
    let check = Checker {
        frozen,
        s,
        step: tp.resolution / 4.0,
        checks: Cell::new(0),
    };
    if !check.point(from) {
        return Err(TransitError::InvalidStart);
    }
    if !check.point(to) {
        return Err(TransitError::InvalidGoal);
    }
    let done = |path: Option<Vec<JointConfig>>, nodes: usize, check: &Checker| TransitOutcome {
        path: path.map(|waypoints| JointPath {
            waypoints,
            resolution: tp.resolution,
        }),
        nodes,
        checks: check.checks.get(),
    };
    if from == to {
        return Ok(done(Some(vec![*from]), 1, &check));
    }
    if check.segment(from, to) {
        return Ok(done(Some(vec![*from, *to]), 2, &check));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limits = s.params.arm.joint_limits;
    let mut a = Tree::new(*from);
    let mut b = Tree::new(*to);
    let mut swapped = false;
    let mut found = None;
    'search: while a.nodes.len() + b.nodes.len() < budget {
        let q_rand: JointConfig = std::array::from_fn(|i| rng.random_range(limits[i][0]..=limits[i][1]));
        let new_idx = match extend(&mut a, &q_rand, tp.extend_step, &check) {
            Extend::Trapped => None,
            Extend::Reached(i) | Extend::Advanced(i) => Some(i),
        };
        if let Some(i) = new_idx {
            let target = a.nodes[i];
            while a.nodes.len() + b.nodes.len() < budget {
                match extend(&mut b, &target, tp.extend_step, &check) {
                    Extend::Reached(j) => {
                        found = Some((i, j));
                        break 'search;
                    }
                    Extend::Advanced(_) => {}
                    Extend::Trapped => break,
                }
            }
        }
        std::mem::swap(&mut a, &mut b);
        swapped = !swapped;
    }
    let nodes = a.nodes.len() + b.nodes.len();
    let Some((i, j)) = found else {
        return Ok(done(None, nodes, &check));
    };
    let mut head = a.branch(i);
    head.reverse();
    let tail = b.branch(j);
    head.extend(tail.into_iter().skip(1));
    if swapped {
        head.reverse();
    }
    shortcut(&mut head, tp.shortcut_attempts, &mut rng, &check);
    Ok(done(Some(head), nodes, &check))
}

fn shortcut(path: &mut Vec<JointConfig>, attempts: usize, rng: &mut ChaCha8Rng, check: &Checker) {
    for _ in 0..attempts {
        if path.len() <= 2 {
            return;
        }
        let i = rng.random_range(0..path.len() - 2);
        let j = rng.random_range(i + 2..path.len());
        if check.segment(&path[i], &path[j]) {
            path.drain(i + 1..j);
        }
    }
}

pub fn generate_path(
    from: &JointConfig,
    to: &JointConfig,
    frozen: &SystemState,
    s: &Scenario,
    budget: usize,
    seed: u64,
) -> Result<Option<JointPath>, TransitError> {
    plan(from, to, frozen, s, budget, seed).map(|o| o.path)
}

/// Connectivity verdict within `budget` nodes; `false` means the search
/// gave up, not that no path exists.
pub fn exists_path(
    from: &JointConfig,
    to: &JointConfig,
    frozen: &SystemState,
    s: &Scenario,
    budget: usize,
    seed: u64,
) -> Result<bool, TransitError> {
    generate_path(from, to, frozen, s, budget, seed).map(|p| p.is_some())
}

/// Checks every sample of `path` at `step` against the transit predicate.
/// A single-waypoint path does not move the arm, so object contact at the
/// start is allowed.
pub fn validate_path(path: &JointPath, frozen: &SystemState, s: &Scenario, step: f64) -> bool {
    if path.is_trivial() {
        return is_arm_valid(path.start(), s);
    }
    path.samples(step).iter().all(|q| is_transit_valid(q, frozen, s))
}
