//! System state and the validity predicates over it.

use serde::{Deserialize, Serialize};

use crate::arm::{ArmSpec, JointConfig};
use crate::geometry::{convex_collide, Convex, Pose2, Shape, Vec2};
use crate::scenario::Scenario;

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn centered(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self {
            min: [cx - width / 2.0, cy - height / 2.0],
            max: [cx + width / 2.0, cy + height / 2.0],
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(other.min[0], other.min[1]) && self.contains(other.max[0], other.max[1])
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(
            (self.min[0] + self.max[0]) / 2.0,
            (self.min[1] + self.max[1]) / 2.0,
        )
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        (
            x.clamp(self.min[0], self.max[0]),
            y.clamp(self.min[1], self.max[1]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub pose: Pose2,
    pub shape_id: usize,
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub arm: JointConfig,
    pub objects: Vec<ObjectState>,
}

impl SystemState {
    pub fn object_convex(&self, i: usize, shapes: &[Shape]) -> Convex {
        let o = &self.objects[i];
        shapes[o.shape_id].to_convex(&o.pose)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub shape: Shape,
    pub pose: Pose2,
}

fn arm_hits_obstacle(arm: &ArmSpec, q: &JointConfig, obstacles: &[Convex]) -> bool {
    if obstacles.is_empty() {
        return false;
    }
    let links = arm.link_capsules(q);
    let ee = arm.end_effector(q);
    obstacles.iter().any(|o| {
        convex_collide(&ee, o) || links.iter().any(|l| convex_collide(l, o))
    })
}

/// Arm-only part of the validity predicate: joint limits, static obstacles
/// and self-collision.
pub fn is_arm_valid(q: &JointConfig, s: &Scenario) -> bool {
    let arm = &s.params.arm;
    arm.within_limits(q) && !arm.self_collides(q) && !arm_hits_obstacle(arm, q, s.obstacle_convexes())
}

/// Membership in the valid state space: joints within limits, every object
/// centroid inside the workspace, and an arm clear of static obstacles and
/// of itself. Contacts involving movable objects are allowed.
///
/// # Panics
/// If the state's object count differs from the scenario's.
pub fn is_state_valid(q: &SystemState, s: &Scenario) -> bool {
    assert_eq!(
        q.objects.len(),
        s.num_objects(),
        "state has {} objects, scenario has {}",
        q.objects.len(),
        s.num_objects()
    );
    q.objects
        .iter()
        .all(|o| s.workspace.contains(o.pose.x, o.pose.y))
        && is_arm_valid(&q.arm, s)
}

/// Stricter predicate for transit motions: the arm must also keep its
/// end-effector off every movable object. Links travel above the objects.
pub fn is_transit_valid(q: &JointConfig, frozen: &SystemState, s: &Scenario) -> bool {
    if !is_arm_valid(q, s) {
        return false;
    }
    let ee = s.params.arm.end_effector(q);
    (0..frozen.objects.len()).all(|i| !convex_collide(&ee, &frozen.object_convex(i, &s.shapes)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::fk;
    use crate::scenario::test_support::open_scenario;

    #[test]
    fn home_state_is_valid() {
        let s = open_scenario(3);
        assert!(is_state_valid(&s.initial_state, &s));
        assert!(is_transit_valid(&s.initial_state.arm, &s.initial_state, &s));
    }

    #[test]
    fn arm_link_in_obstacle_is_invalid() {
        let mut s = open_scenario(1);
        let q = s.initial_state.arm;
        let p = s.params.arm.joint_positions(&q);
        let mid = (p[0] + p[1]) * 0.5;
        s.obstacles.push(Obstacle {
            shape: Shape::square(0.05),
            pose: Pose2::new(mid.x, mid.y, 0.0),
        });
        s.refresh();
        assert!(!is_state_valid(&s.initial_state, &s));
    }

    #[test]
    fn overlapping_objects_are_still_valid() {
        let mut s = open_scenario(2);
        let mut q = s.initial_state.clone();
        q.objects[1].pose = q.objects[0].pose;
        s.initial_state = q.clone();
        assert!(is_state_valid(&q, &s));
    }

    #[test]
    fn object_outside_workspace_is_invalid() {
        let s = open_scenario(2);
        let mut q = s.initial_state.clone();
        q.objects[0].pose.x = s.workspace.max[0] + 0.01;
        assert!(!is_state_valid(&q, &s));
    }

    #[test]
    fn end_effector_on_object_breaks_transit_validity_only() {
        let s = open_scenario(1);
        let mut q = s.initial_state.clone();
        let tip = fk(&q.arm, &s.params.arm);
        q.objects[0].pose = Pose2::new(tip.x, tip.y, 0.0);
        if s.workspace.contains(tip.x, tip.y) {
            assert!(is_state_valid(&q, &s));
        }
        assert!(!is_transit_valid(&q.arm, &q, &s));
    }

    #[test]
    #[should_panic(expected = "objects")]
    fn structural_mismatch_panics() {
        let s = open_scenario(2);
        let mut q = s.initial_state.clone();
        q.objects.pop();
        is_state_valid(&q, &s);
    }

    #[test]
    fn validity_is_pure() {
        let s = open_scenario(3);
        let q = s.initial_state.clone();
        let first = is_state_valid(&q, &s);
        for _ in 0..10 {
            assert_eq!(is_state_valid(&q, &s), first);
        }
    }
}
