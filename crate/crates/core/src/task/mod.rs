//! Goal criteria and heuristics for the rearrangement tasks.
//!
//! Each task kind is a [`Task`] implementation registered by name; a
//! scenario's [`TaskSpec`] selects one at runtime through [`build`].

mod grasping;
mod relocating;
mod sorting_free;
mod sorting_regions;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grasping::Grasping;
pub use relocating::Relocating;
pub use sorting_free::SortingFree;
pub use sorting_regions::SortingRegions;

use crate::geometry::Pose2;
use crate::registry::Registry;
use crate::scenario::Scenario;
use crate::world::{Rect, SystemState};

/// Finite-difference step (m) for numeric heuristic gradients.
pub const GRADIENT_STEP: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("unknown task kind `{0}`")]
    UnknownKind(String),
    #[error("task `{kind}` requires `{field}`")]
    MissingField { kind: String, field: &'static str },
    #[error("task `{kind}`: {message}")]
    Invalid { kind: String, message: String },
}

/// Serialized task description; `kind` selects the implementation and the
/// remaining fields are required or ignored depending on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_object: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relocate_region: Option<Rect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clutter_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_d_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation_d_out: Option<f64>,
    /// Absolute progress threshold; defaults to a fraction of the current heuristic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress_threshold: Option<f64>,
}

impl TaskSpec {
    fn bare(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            target_object: None,
            relocate_region: None,
            clutter_radius: None,
            cluster_d_in: None,
            separation_d_out: None,
            progress_threshold: None,
        }
    }

    pub fn grasping(target: usize, clutter_radius: f64) -> Self {
        Self {
            target_object: Some(target),
            clutter_radius: Some(clutter_radius),
            ..Self::bare(grasping::KIND)
        }
    }

    pub fn relocating(target: usize, region: Rect) -> Self {
        Self {
            target_object: Some(target),
            relocate_region: Some(region),
            ..Self::bare(relocating::KIND)
        }
    }

    pub fn sorting_free(d_in: f64, d_out: f64) -> Self {
        Self {
            cluster_d_in: Some(d_in),
            separation_d_out: Some(d_out),
            ..Self::bare(sorting_free::KIND)
        }
    }

    pub fn sorting_regions() -> Self {
        Self::bare(sorting_regions::KIND)
    }

    pub(crate) fn require<T: Copy>(&self, value: Option<T>, field: &'static str) -> Result<T, TaskError> {
        value.ok_or_else(|| TaskError::MissingField {
            kind: self.kind.clone(),
            field,
        })
    }
}

pub trait Task: Send + Sync {
    fn kind(&self) -> &'static str;

    /// Goal criterion `g(q)`.
    fn goal(&self, q: &SystemState) -> bool;

    /// Non-negative heuristic that decreases towards the goal.
    fn heuristic(&self, q: &SystemState) -> f64;

    /// `(dh/dx_i, dh/dy_i)` for object `i`; central differences by default.
    fn gradient(&self, q: &SystemState, i: usize) -> [f64; 2] {
        numeric_gradient(self, q, i)
    }

    /// Object poses for goal-biased sampling.
    fn sample_goal_poses(&self, q: &SystemState, rng: &mut dyn RngCore) -> Vec<Pose2>;

    fn progress_threshold(&self) -> Option<f64> {
        None
    }
}

pub fn numeric_gradient<T: Task + ?Sized>(task: &T, q: &SystemState, i: usize) -> [f64; 2] {
    let mut probe = q.clone();
    let mut out = [0.0; 2];
    for (axis, slot) in out.iter_mut().enumerate() {
        let base = if axis == 0 { q.objects[i].pose.x } else { q.objects[i].pose.y };
        let set = |p: &mut SystemState, v: f64| {
            if axis == 0 {
                p.objects[i].pose.x = v;
            } else {
                p.objects[i].pose.y = v;
            }
        };
        set(&mut probe, base + GRADIENT_STEP);
        let hp = task.heuristic(&probe);
        set(&mut probe, base - GRADIENT_STEP);
        let hm = task.heuristic(&probe);
        set(&mut probe, base);
        *slot = (hp - hm) / (2.0 * GRADIENT_STEP);
    }
    out
}

pub type TaskFactory = fn(&Scenario) -> Result<Box<dyn Task>, TaskError>;

pub struct TaskEntry {
    pub factory: TaskFactory,
    pub needs_goal_regions: bool,
}

fn registry() -> &'static Registry<TaskEntry> {
    static REGISTRY: std::sync::OnceLock<Registry<TaskEntry>> = std::sync::OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r = Registry::new();
        r.register(grasping::KIND, TaskEntry { factory: grasping::build, needs_goal_regions: false });
        r.register(relocating::KIND, TaskEntry { factory: relocating::build, needs_goal_regions: false });
        r.register(sorting_free::KIND, TaskEntry { factory: sorting_free::build, needs_goal_regions: false });
        r.register(sorting_regions::KIND, TaskEntry { factory: sorting_regions::build, needs_goal_regions: true });
        r
    })
}

pub fn kinds() -> Vec<&'static str> {
    registry().names()
}

pub fn requires_goal_regions(kind: &str) -> bool {
    registry().get(kind).is_some_and(|e| e.needs_goal_regions)
}

/// Instantiates the scenario's task.
pub fn build(s: &Scenario) -> Result<Box<dyn Task>, TaskError> {
    let entry = registry()
        .get(&s.task.kind)
        .ok_or_else(|| TaskError::UnknownKind(s.task.kind.clone()))?;
    (entry.factory)(s)
}

pub fn sample_in(rect: &Rect, rng: &mut dyn RngCore) -> (f64, f64) {
    use rand::Rng;
    (
        rng.random_range(rect.min[0]..=rect.max[0]),
        rng.random_range(rect.min[1]..=rect.max[1]),
    )
}

pub fn random_angle(rng: &mut dyn RngCore) -> f64 {
    use rand::Rng;
    rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::test_support::open_scenario;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn registry_lists_four_kinds() {
        let mut k = kinds();
        k.sort();
        assert_eq!(k, vec!["grasping", "relocating", "sorting_free", "sorting_regions"]);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let mut s = open_scenario(1);
        s.task.kind = "juggling".into();
        assert_eq!(build(&s).err(), Some(TaskError::UnknownKind("juggling".into())));
    }

    #[test]
    fn missing_field_is_reported() {
        let mut s = open_scenario(1);
        s.task.relocate_region = None;
        assert!(matches!(build(&s), Err(TaskError::MissingField { field: "relocate_region", .. })));
    }

    /// Analytic gradients (where provided) and numeric ones agree with an
    /// independent finite-difference evaluation for every kind.
    #[test]
    fn gradients_match_finite_differences_for_every_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let base = open_scenario(6);
        let specs = vec![
            (TaskSpec::grasping(0, 0.3), vec![]),
            (TaskSpec::relocating(1, Rect::centered(0.3, 0.8, 0.2, 0.2)), vec![]),
            (TaskSpec::sorting_free(0.15, 0.35), vec![]),
            (
                TaskSpec::sorting_regions(),
                vec![Rect::centered(-0.4, 0.8, 0.2, 0.2), Rect::centered(0.0, 0.8, 0.2, 0.2), Rect::centered(0.4, 0.8, 0.2, 0.2)],
            ),
        ];
        for (spec, regions) in specs {
            let mut s = base.clone();
            for (i, o) in s.initial_state.objects.iter_mut().enumerate() {
                o.class_id = i % 3;
            }
            s.task = spec;
            s.goal_regions = regions;
            s.refresh();
            let task = build(&s).unwrap();
            for _ in 0..100 {
                let mut q = s.initial_state.clone();
                for o in &mut q.objects {
                    o.pose.x = rng.random_range(-0.55..0.55);
                    o.pose.y = rng.random_range(0.25..0.95);
                }
                for i in 0..q.objects.len() {
                    let g = task.gradient(&q, i);
                    let h = 1e-6;
                    let mut p = q.clone();
                    p.objects[i].pose.x += h;
                    let hx = task.heuristic(&p);
                    p.objects[i].pose.x -= 2.0 * h;
                    let lx = task.heuristic(&p);
                    let mut p = q.clone();
                    p.objects[i].pose.y += h;
                    let hy = task.heuristic(&p);
                    p.objects[i].pose.y -= 2.0 * h;
                    let ly = task.heuristic(&p);
                    let fd = [(hx - lx) / (2.0 * h), (hy - ly) / (2.0 * h)];
                    assert!((g[0] - fd[0]).abs() <= 1e-5 && (g[1] - fd[1]).abs() <= 1e-5, "{}: {g:?} vs {fd:?}", task.kind());
                }
                assert!(task.heuristic(&q) >= 0.0);
            }
        }
    }
}
