use std::f64::consts::FRAC_PI_4;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::arm::ik;
use crate::geometry::Pose2;
use crate::registry::Registry;
use crate::scenario::Scenario;
use crate::task::Task;
use crate::world::SystemState;

use super::ParamSet;

/// Stretching function applied to gradient magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stretch {
    Exp,
    Power { k: f64 },
}

impl Default for Stretch {
    fn default() -> Self {
        Stretch::Power { k: 2.0 }
    }
}

/// Normalized `f(m_i) / sum_j f(m_j)`. Falls back to uniform when every
/// weight vanishes.
pub fn selection_probabilities(magnitudes: &[f64], stretch: Stretch) -> Vec<f64> {
    let n = magnitudes.len();
    if n == 0 {
        return Vec::new();
    }
    let weights: Vec<f64> = match stretch {
        Stretch::Exp => {
            // Shifted by the maximum; the ratio is unchanged.
            let top = magnitudes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            magnitudes.iter().map(|m| (m - top).exp()).collect()
        }
        Stretch::Power { k } => magnitudes.iter().map(|m| m.powf(k)).collect(),
    };
    let z: f64 = weights.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return vec![1.0 / n as f64; n];
    }
    weights.iter().map(|w| w / z).collect()
}

/// Chooses the object a new tree root is placed next to.
pub trait RootSampler: Send + Sync {
    fn name(&self) -> &'static str;
    fn object_probabilities(&self, q: &SystemState, task: &dyn Task, params: &ParamSet) -> Vec<f64>;
}

pub struct UniformRoots;

impl RootSampler for UniformRoots {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn object_probabilities(&self, q: &SystemState, _task: &dyn Task, _params: &ParamSet) -> Vec<f64> {
        let n = q.objects.len();
        vec![1.0 / n as f64; n]
    }
}

/// Favors objects whose motion changes the heuristic the most.
pub struct TaskOrientedRoots;

impl RootSampler for TaskOrientedRoots {
    fn name(&self) -> &'static str {
        "task_oriented"
    }

    fn object_probabilities(&self, q: &SystemState, task: &dyn Task, params: &ParamSet) -> Vec<f64> {
        let mags: Vec<f64> = (0..q.objects.len())
            .map(|i| {
                let g = task.gradient(q, i);
                g[0].hypot(g[1])
            })
            .collect();
        selection_probabilities(&mags, params.stretch)
    }
}

fn registry() -> &'static Registry<&'static dyn RootSampler> {
    static REGISTRY: std::sync::OnceLock<Registry<&'static dyn RootSampler>> = std::sync::OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<&'static dyn RootSampler> = Registry::new();
        r.register("uniform", &UniformRoots);
        r.register("task_oriented", &TaskOrientedRoots);
        r
    })
}

pub fn root_sampler(name: &str) -> Option<&'static dyn RootSampler> {
    registry().get(name).copied()
}

pub fn root_sampler_names() -> Vec<&'static str> {
    registry().names()
}

pub fn choose_object(probabilities: &[f64], rng: &mut dyn RngCore) -> Option<usize> {
    WeightedIndex::new(probabilities).ok().map(|d| d.sample(rng))
}

/// Places the end-effector next to a chosen object, facing it, and solves
/// for the arm. `None` if the pose is out of reach.
pub fn sample_root(
    q: &SystemState,
    s: &Scenario,
    task: &dyn Task,
    sampler: &dyn RootSampler,
    params: &ParamSet,
    rng: &mut dyn RngCore,
) -> Option<SystemState> {
    let probs = sampler.object_probabilities(q, task, params);
    let i = choose_object(&probs, rng)?;
    let obj = &q.objects[i].pose;
    let clearance = s.shapes[q.objects[i].shape_id].bounding_radius() + s.params.arm.ee_radius;
    let [lo, hi] = params.root_offset_range;
    let r = rng.random_range(lo..=hi) * clearance;
    let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let (x, y) = (obj.x + r * phi.cos(), obj.y + r * phi.sin());
    let facing = (obj.y - y).atan2(obj.x - x) + rng.random_range(-FRAC_PI_4..=FRAC_PI_4);
    let arm = ik(&Pose2::new(x, y, facing), &s.params.arm, &q.arm)?;
    Some(SystemState {
        arm,
        objects: q.objects.clone(),
    })
}
