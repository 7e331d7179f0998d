use rand::{Rng, RngCore};

use super::{random_angle, sample_in, Task, TaskError};
use crate::geometry::{Pose2, Vec2};
use crate::scenario::Scenario;
use crate::world::{Rect, SystemState};

pub const KIND: &str = "sorting_free";

/// Gather each class into a tight cluster, clusters kept apart, anywhere
/// on the table.
pub struct SortingFree {
    d_in: f64,
    d_out: f64,
    num_classes: usize,
    workspace: Rect,
    progress_threshold: Option<f64>,
}

pub(super) fn build(s: &Scenario) -> Result<Box<dyn Task>, TaskError> {
    let d_in = s.task.require(s.task.cluster_d_in, "cluster_d_in")?;
    let d_out = s.task.require(s.task.separation_d_out, "separation_d_out")?;
    if d_in <= 0.0 || d_out <= 0.0 {
        return Err(TaskError::Invalid {
            kind: KIND.into(),
            message: "cluster distances must be positive".into(),
        });
    }
    Ok(Box::new(SortingFree::new(d_in, d_out, s.num_classes, s.workspace, s.task.progress_threshold)))
}

impl SortingFree {
    pub fn new(d_in: f64, d_out: f64, num_classes: usize, workspace: Rect, progress_threshold: Option<f64>) -> Self {
        Self {
            d_in,
            d_out,
            num_classes,
            workspace,
            progress_threshold,
        }
    }

    fn centroids(&self, q: &SystemState) -> Vec<Option<(Vec2, usize)>> {
        let mut acc = vec![(Vec2::zeros(), 0usize); self.num_classes];
        for o in &q.objects {
            acc[o.class_id].0 += o.pose.position();
            acc[o.class_id].1 += 1;
        }
        acc.into_iter()
            .map(|(sum, n)| (n > 0).then(|| (sum / n as f64, n)))
            .collect()
    }
}

impl Task for SortingFree {
    fn kind(&self) -> &'static str {
        KIND
    }

    fn goal(&self, q: &SystemState) -> bool {
        for (j, a) in q.objects.iter().enumerate() {
            for b in &q.objects[j + 1..] {
                if a.class_id == b.class_id && (a.pose.position() - b.pose.position()).norm() > self.d_in {
                    return false;
                }
            }
        }
        let c: Vec<_> = self.centroids(q).into_iter().flatten().collect();
        for (i, a) in c.iter().enumerate() {
            for b in &c[i + 1..] {
                if (a.0 - b.0).norm() < self.d_out {
                    return false;
                }
            }
        }
        true
    }

    /// Intra-class spread plus a hinge on inter-class centroid proximity.
    fn heuristic(&self, q: &SystemState) -> f64 {
        let mut h = 0.0;
        for (j, a) in q.objects.iter().enumerate() {
            for b in &q.objects[j + 1..] {
                if a.class_id == b.class_id {
                    h += (a.pose.position() - b.pose.position()).norm_squared();
                }
            }
        }
        let c: Vec<_> = self.centroids(q).into_iter().flatten().collect();
        for (i, a) in c.iter().enumerate() {
            for b in &c[i + 1..] {
                h += (self.d_out - (a.0 - b.0).norm()).max(0.0).powi(2);
            }
        }
        h
    }

    fn gradient(&self, q: &SystemState, m: usize) -> [f64; 2] {
        let me = &q.objects[m];
        let pm = me.pose.position();
        let mut g = Vec2::zeros();
        for (k, o) in q.objects.iter().enumerate() {
            if k != m && o.class_id == me.class_id {
                g += (pm - o.pose.position()) * 2.0;
            }
        }
        let cents = self.centroids(q);
        if let Some((ci, count)) = cents[me.class_id] {
            for (other, c) in cents.iter().enumerate() {
                let Some((cj, _)) = c else { continue };
                if other == me.class_id {
                    continue;
                }
                let diff = ci - cj;
                let d = diff.norm();
                if d < self.d_out && d > 0.0 {
                    g += diff * (-2.0 * (self.d_out - d) / d / count as f64);
                }
            }
        }
        [g.x, g.y]
    }

    fn sample_goal_poses(&self, q: &SystemState, rng: &mut dyn RngCore) -> Vec<Pose2> {
        let r = self.d_in / 2.0;
        let inner = Rect::new(
            [self.workspace.min[0] + r, self.workspace.min[1] + r],
            [self.workspace.max[0] - r, self.workspace.max[1] - r],
        );
        let mut centers: Vec<(f64, f64)> = Vec::with_capacity(self.num_classes);
        for _ in 0..self.num_classes {
            let mut pick = sample_in(&inner, rng);
            for _ in 0..20 {
                if centers.iter().all(|c| (c.0 - pick.0).hypot(c.1 - pick.1) >= self.d_out) {
                    break;
                }
                pick = sample_in(&inner, rng);
            }
            centers.push(pick);
        }
        q.objects
            .iter()
            .map(|o| {
                let (cx, cy) = centers[o.class_id];
                let rho = r * rng.random_range(0.0f64..1.0).sqrt();
                let phi = random_angle(rng);
                Pose2::new(cx + rho * phi.cos(), cy + rho * phi.sin(), random_angle(rng))
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

    fn task() -> SortingFree {
        SortingFree::new(0.1, 0.3, 2, Rect::new([-1.0, -1.0], [1.0, 1.0]), None)
    }

    #[test]
    fn clustered_and_separated_is_goal() {
        let q = state(&[(0.0, 0.0, 0), (0.05, 0.0, 0), (0.5, 0.0, 1), (0.55, 0.0, 1)]);
        assert!(task().goal(&q));
        let spread = state(&[(0.0, 0.0, 0), (0.2, 0.0, 0), (0.5, 0.0, 1), (0.55, 0.0, 1)]);
        assert!(!task().goal(&spread));
        let close = state(&[(0.0, 0.0, 0), (0.05, 0.0, 0), (0.2, 0.0, 1), (0.25, 0.0, 1)]);
        assert!(!task().goal(&close));
    }

    #[test]
    fn heuristic_hand_values() {
        // Intra: 0.05^2 twice; inter: centroids 0.5 apart, hinge inactive.
        let q = state(&[(0.0, 0.0, 0), (0.05, 0.0, 0), (0.5, 0.0, 1), (0.55, 0.0, 1)]);
        assert!((task().heuristic(&q) - 0.005).abs() < 1e-12);
        // Centroids 0.2 apart: hinge (0.3 - 0.2)^2.
        let q = state(&[(0.0, 0.0, 0), (0.2, 0.0, 1)]);
        assert!((task().heuristic(&q) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn goal_invariant_under_same_class_permutation() {
        let a = state(&[(0.0, 0.0, 0), (0.2, 0.1, 0), (0.5, 0.0, 1)]);
        let b = state(&[(0.2, 0.1, 0), (0.0, 0.0, 0), (0.5, 0.0, 1)]);
        assert_eq!(task().goal(&a), task().goal(&b));
        assert!((task().heuristic(&a) - task().heuristic(&b)).abs() < 1e-15);
    }
}
