use rand::RngCore;

use super::{random_angle, sample_in, Task, TaskError};
use crate::arm::{ik, ArmSpec, JointConfig};
use crate::geometry::Pose2;
use crate::scenario::Scenario;
use crate::world::{Rect, SystemState};

pub const KIND: &str = "grasping";

/// Clear the surroundings of a target object until it can be grasped.
pub struct Grasping {
    target: usize,
    radius: f64,
    arm: ArmSpec,
    ik_seed: JointConfig,
    workspace: Rect,
    progress_threshold: Option<f64>,
}

pub(super) fn build(s: &Scenario) -> Result<Box<dyn Task>, TaskError> {
    let target = s.task.require(s.task.target_object, "target_object")?;
    let radius = s.task.require(s.task.clutter_radius, "clutter_radius")?;
    if target >= s.num_objects() || radius <= 0.0 {
        return Err(TaskError::Invalid {
            kind: KIND.into(),
            message: "target out of range or non-positive clutter radius".into(),
        });
    }
    Ok(Box::new(Grasping {
        target,
        radius,
        arm: s.params.arm.clone(),
        ik_seed: s.initial_state.arm,
        workspace: s.workspace,
        progress_threshold: s.task.progress_threshold,
    }))
}

impl Grasping {
    /// Tip pose on the target, approaching along the ray from the arm base.
    pub fn pre_grasp_pose(&self, q: &SystemState) -> Pose2 {
        let t = &q.objects[self.target].pose;
        let b = &self.arm.base_pose;
        Pose2::new(t.x, t.y, (t.y - b.y).atan2(t.x - b.x))
    }

    /// Non-target objects within the clutter radius: (index, distance, dx, dy).
    fn clutter<'a>(&'a self, q: &'a SystemState) -> impl Iterator<Item = (usize, f64, f64, f64)> + 'a {
        let t = q.objects[self.target].pose;
        q.objects.iter().enumerate().filter_map(move |(j, o)| {
            if j == self.target {
                return None;
            }
            let (dx, dy) = (o.pose.x - t.x, o.pose.y - t.y);
            let d = dx.hypot(dy);
            (d < self.radius).then_some((j, d, dx, dy))
        })
    }
}

impl Task for Grasping {
    fn kind(&self) -> &'static str {
        KIND
    }

    fn goal(&self, q: &SystemState) -> bool {
        self.clutter(q).next().is_none() && ik(&self.pre_grasp_pose(q), &self.arm, &self.ik_seed).is_some()
    }

    fn heuristic(&self, q: &SystemState) -> f64 {
        self.clutter(q).map(|(_, d, _, _)| (self.radius - d).powi(2)).sum()
    }

    fn gradient(&self, q: &SystemState, i: usize) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (j, d, dx, dy) in self.clutter(q) {
            if d == 0.0 {
                continue;
            }
            // d/dp_j of (R - d)^2 is -2 (R - d) (p_j - p_t) / d.
            let k = -2.0 * (self.radius - d) / d;
            if i == j {
                g[0] += k * dx;
                g[1] += k * dy;
            } else if i == self.target {
                g[0] -= k * dx;
                g[1] -= k * dy;
            }
        }
        g
    }

    fn sample_goal_poses(&self, q: &SystemState, rng: &mut dyn RngCore) -> Vec<Pose2> {
        let t = q.objects[self.target].pose;
        (0..q.objects.len())
            .map(|j| {
                if j == self.target {
                    return t;
                }
                let mut pick = sample_in(&self.workspace, rng);
                for _ in 0..20 {
                    if (pick.0 - t.x).hypot(pick.1 - t.y) >= self.radius {
                        break;
                    }
                    pick = sample_in(&self.workspace, rng);
                }
                Pose2::new(pick.0, pick.1, random_angle(rng))
            })
            .collect()
    }

    fn progress_threshold(&self) -> Option<f64> {
        self.progress_threshold
    }
}
