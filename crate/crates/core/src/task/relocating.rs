use rand::RngCore;

use super::{random_angle, sample_in, Task, TaskError};
use crate::geometry::Pose2;
use crate::scenario::Scenario;
use crate::world::{Rect, SystemState};

pub const KIND: &str = "relocating";

/// Push one target object into a rectangle.
pub struct Relocating {
    target: usize,
    region: Rect,
    workspace: Rect,
    progress_threshold: Option<f64>,
}

pub(super) fn build(s: &Scenario) -> Result<Box<dyn Task>, TaskError> {
    let target = s.task.require(s.task.target_object, "target_object")?;
    let region = s.task.require(s.task.relocate_region, "relocate_region")?;
    if target >= s.num_objects() {
        return Err(TaskError::Invalid {
            kind: KIND.into(),
            message: format!("target {target} out of range"),
        });
    }
    if !s.workspace.contains_rect(&region) {
        return Err(TaskError::Invalid {
            kind: KIND.into(),
            message: "relocate_region lies outside the workspace".into(),
        });
    }
    Ok(Box::new(Relocating {
        target,
        region,
        workspace: s.workspace,
        progress_threshold: s.task.progress_threshold,
    }))
}

impl Task for Relocating {
    fn kind(&self) -> &'static str {
        KIND
    }

    fn goal(&self, q: &SystemState) -> bool {
        let p = &q.objects[self.target].pose;
        self.region.contains(p.x, p.y)
    }

    fn heuristic(&self, q: &SystemState) -> f64 {
        let p = &q.objects[self.target].pose;
        let c = self.region.center();
        (p.x - c.x).powi(2) + (p.y - c.y).powi(2)
    }

    fn gradient(&self, q: &SystemState, i: usize) -> [f64; 2] {
        if i != self.target {
            return [0.0, 0.0];
        }
        let p = &q.objects[i].pose;
        let c = self.region.center();
        [2.0 * (p.x - c.x), 2.0 * (p.y - c.y)]
    }

    fn sample_goal_poses(&self, q: &SystemState, rng: &mut dyn RngCore) -> Vec<Pose2> {
        (0..q.objects.len())
            .map(|i| {
                let rect = if i == self.target { &self.region } else { &self.workspace };
                let (x, y) = sample_in(rect, rng);
                Pose2::new(x, y, random_angle(rng))
            })
            .collect()
    }

    fn progress_threshold(&self) -> Option<f64> {
        self.progress_threshold
    }
}
