use rand::RngCore;

use super::{random_angle, sample_in, Task, TaskError};
use crate::geometry::Pose2;
use crate::scenario::Scenario;
use crate::world::{Rect, SystemState};

pub const KIND: &str = "sorting_regions";

/// Every object must end inside the rectangle assigned to its class.
pub struct SortingRegions {
    regions: Vec<Rect>,
    progress_threshold: Option<f64>,
}

impl SortingRegions {
    pub fn new(regions: Vec<Rect>) -> Self {
        Self {
            regions,
            progress_threshold: None,
        }
    }
}

pub(super) fn build(s: &Scenario) -> Result<Box<dyn Task>, TaskError> {
    if s.goal_regions.len() < s.num_classes.max(1) {
        return Err(TaskError::MissingField {
            kind: KIND.into(),
            field: "goal_regions",
        });
    }
    Ok(Box::new(SortingRegions {
        regions: s.goal_regions.clone(),
        progress_threshold: s.task.progress_threshold,
    }))
}

impl Task for SortingRegions {
    fn kind(&self) -> &'static str {
        KIND
    }

    fn goal(&self, q: &SystemState) -> bool {
        q.objects
            .iter()
            .all(|o| self.regions[o.class_id].contains(o.pose.x, o.pose.y))
    }

    /// Sum of squared distances from each object to its class's region center.
    fn heuristic(&self, q: &SystemState) -> f64 {
        q.objects
            .iter()
            .map(|o| {
                let c = self.regions[o.class_id].center();
                (o.pose.x - c.x).powi(2) + (o.pose.y - c.y).powi(2)
            })
            .sum()
    }

    fn gradient(&self, q: &SystemState, i: usize) -> [f64; 2] {
        let o = &q.objects[i];
        let c = self.regions[o.class_id].center();
        [2.0 * (o.pose.x - c.x), 2.0 * (o.pose.y - c.y)]
    }

    fn sample_goal_poses(&self, q: &SystemState, rng: &mut dyn RngCore) -> Vec<Pose2> {
        q.objects
            .iter()
            .map(|o| {
                let (x, y) = sample_in(&self.regions[o.class_id], rng);
                Pose2::new(x, y, random_angle(rng))
            })
            .collect()
    }

    fn progress_threshold(&self) -> Option<f64> {
        self.progress_threshold
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::ObjectState;

    fn state(points: &[(f64, f64, usize)]) -> SystemState {
        SystemState {
            arm: [0.0; 3],
            objects: points
                .iter()
                .map(|&(x, y, c)| ObjectState {
                    pose: Pose2::new(x, y, 0.0),
                    shape_id: 0,
                    class_id: c,
                })
                .collect(),
        }
    }

    fn origin_task(classes: usize) -> SortingRegions {
        SortingRegions::new(vec![Rect::centered(0.0, 0.0, 0.2, 0.2); classes])
    }

    #[test]
    fn heuristic_fixtures() {
        assert_eq!(origin_task(1).heuristic(&state(&[(1.0, 2.0, 0)])), 5.0);
        assert_eq!(origin_task(1).heuristic(&state(&[(0.0, 0.0, 0)])), 0.0);
        assert_eq!(origin_task(1).heuristic(&state(&[(1.0, 0.0, 0), (0.0, 1.0, 0)])), 2.0);
    }

    #[test]
    fn gradient_fixtures() {
        let t = origin_task(1);
        assert_eq!(t.gradient(&state(&[(1.0, 2.0, 0)]), 0), [2.0, 4.0]);
        assert_eq!(t.gradient(&state(&[(0.0, 0.0, 0)]), 0), [0.0, 0.0]);
        let n = super::super::numeric_gradient(&t, &state(&[(1.0, 2.0, 0)]), 0);
        assert!((n[0] - 2.0).abs() < 1e-5 && (n[1] - 4.0).abs() < 1e-5);
    }

    #[test]
    fn goal_boundary() {
        let t = SortingRegions::new(vec![Rect::centered(0.0, 0.0, 0.2, 0.2), Rect::centered(1.0, 0.0, 0.2, 0.2)]);
        assert!(t.goal(&state(&[(0.0, 0.0, 0), (1.0, 0.0, 1)])));
        assert!(t.goal(&state(&[(0.1, 0.0, 0), (1.0, 0.0, 1)])));
        assert!(!t.goal(&state(&[(0.101, 0.0, 0), (1.0, 0.0, 1)])));
        assert!(!t.goal(&state(&[(1.0, 0.0, 0), (0.0, 0.0, 1)])));
    }

    #[test]
    fn goal_invariant_under_same_class_permutation() {
        let t = SortingRegions::new(vec![Rect::centered(0.0, 0.0, 0.2, 0.2), Rect::centered(1.0, 0.0, 0.2, 0.2)]);
        let a = state(&[(0.05, 0.0, 0), (0.3, 0.0, 0), (1.0, 0.0, 1)]);
        let b = state(&[(0.3, 0.0, 0), (0.05, 0.0, 0), (1.0, 0.0, 1)]);
        assert_eq!(t.goal(&a), t.goal(&b));
        assert_eq!(t.heuristic(&a), t.heuristic(&b));
    }

    #[test]
    fn zero_heuristic_implies_goal() {
        let t = SortingRegions::new(vec![Rect::centered(0.3, 0.4, 0.2, 0.2), Rect::centered(-0.3, 0.4, 0.2, 0.2)]);
        let q = state(&[(0.3, 0.4, 0), (-0.3, 0.4, 1), (0.3, 0.4, 0)]);
        assert_eq!(t.heuristic(&q), 0.0);
        assert!(t.goal(&q));
    }
}
