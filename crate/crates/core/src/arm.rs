//! Three-link planar arm: forward kinematics, analytic Jacobian, closed-form
//! inverse kinematics and twist-to-joint-rate projection.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Convex, Pose2, Vec2};

pub type JointConfig = [f64; 3];

/// Relative residual above which a twist is considered unrealizable.
pub const SINGULARITY_RESIDUAL: f64 = 1e-3;
/// Joint rate (rad/s) above which a projected twist is rejected as near-singular.
pub const MAX_JOINT_RATE: f64 = 6.0;

const IK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmSpec {
    pub link_lengths: [f64; 3],
    pub joint_limits: [[f64; 2]; 3],
    /// Links are capsules of this total width.
    pub link_width: f64,
    pub base_pose: Pose2,
    /// The pusher is a disc of this radius centered on the arm tip.
    pub ee_radius: f64,
}

impl Default for ArmSpec {
    fn default() -> Self {
        Self {
            link_lengths: [0.5, 0.4, 0.3],
            joint_limits: [[-2.9, 2.9]; 3],
            link_width: 0.04,
            base_pose: Pose2::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
            ee_radius: 0.025,
        }
    }
}

impl ArmSpec {
    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        q.iter()
            .zip(&self.joint_limits)
            .all(|(a, [lo, hi])| *a >= *lo && *a <= *hi)
    }

    /// Base, elbow, wrist and tip positions.
    pub fn joint_positions(&self, q: &JointConfig) -> [Vec2; 4] {
        let mut pts = [self.base_pose.position(); 4];
        let mut angle = self.base_pose.theta;
        for i in 0..3 {
            angle += q[i];
            let (s, c) = angle.sin_cos();
            pts[i + 1] = pts[i] + Vec2::new(c, s) * self.link_lengths[i];
        }
        pts
    }

    pub fn link_capsules(&self, q: &JointConfig) -> [Convex; 3] {
        let p = self.joint_positions(q);
        let r = self.link_width / 2.0;
        [
            Convex::capsule(p[0], p[1], r),
            Convex::capsule(p[1], p[2], r),
            Convex::capsule(p[2], p[3], r),
        ]
    }

    pub fn end_effector(&self, q: &JointConfig) -> Convex {
        Convex::disc(self.joint_positions(q)[3], self.ee_radius)
    }

    /// True if non-adjacent arm parts overlap.
    pub fn self_collides(&self, q: &JointConfig) -> bool {
        let links = self.link_capsules(q);
        let ee = self.end_effector(q);
        crate::geometry::convex_collide(&links[0], &links[2])
            || crate::geometry::convex_collide(&links[0], &ee)
            || crate::geometry::convex_collide(&links[1], &ee)
    }
}

pub fn fk(config: &JointConfig, spec: &ArmSpec) -> Pose2 {
    let tip = spec.joint_positions(config)[3];
    let theta = spec.base_pose.theta + config.iter().sum::<f64>();
    Pose2::new(tip.x, tip.y, theta)
}

/// Maps joint rates to the end-effector twist `(vx, vy, omega)`.
pub fn jacobian(config: &JointConfig, spec: &ArmSpec) -> Matrix3<f64> {
    let p = spec.joint_positions(config);
    let tip = p[3];
    let mut j = Matrix3::zeros();
    for i in 0..3 {
        let r = tip - p[i];
        j[(0, i)] = -r.y;
        j[(1, i)] = r.x;
        j[(2, i)] = 1.0;
    }
    j
}

fn pose_error(target: &Pose2, current: &Pose2) -> Vector3<f64> {
    Vector3::new(
        target.x - current.x,
        target.y - current.y,
        wrap_angle(target.theta - current.theta),
    )
}

/// Closed-form inverse kinematics. Of the (up to two) elbow solutions
/// within the joint limits, returns the one closest to `seed_config`.
pub fn ik(target: &Pose2, spec: &ArmSpec, seed_config: &JointConfig) -> Option<JointConfig> {
    let [l1, l2, l3] = spec.link_lengths;
    let b = &spec.base_pose;
    let theta = target.theta;
    let wx = target.x - l3 * theta.cos() - b.x;
    let wy = target.y - l3 * theta.sin() - b.y;
    let d2 = wx * wx + wy * wy;
    let mut c2 = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if c2.abs() > 1.0 + IK_TOLERANCE {
        return None;
    }
    c2 = c2.clamp(-1.0, 1.0);
    let mut best: Option<(f64, JointConfig)> = None;
    for sign in [1.0, -1.0] {
        let q2 = sign * c2.acos();
        let q1 = wy.atan2(wx) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos()) - b.theta;
        let q3 = theta - b.theta - q1 - q2;
        let q = [wrap_angle(q1), wrap_angle(q2), wrap_angle(q3)];
        if !spec.within_limits(&q) {
            continue;
        }
        let d: f64 = q.iter().zip(seed_config).map(|(a, s)| (a - s).powi(2)).sum();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, q));
        }
    }
    best.map(|(_, q)| q)
}

/// Joint-space realization of a twist: one joint-rate vector per substep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct JointControl {
    pub steps: Vec<([f64; 3], f64)>,
}

impl JointControl {
    pub fn duration(&self) -> f64 {
        self.steps.iter().map(|(_, dt)| dt).sum()
    }

    /// Integrates the profile from `start`.
    pub fn apply(&self, start: &JointConfig) -> JointConfig {
        let mut q = *start;
        for (rate, dt) in &self.steps {
            for i in 0..3 {
                q[i] += rate[i] * dt;
            }
        }
        q
    }
}

/// Output of a successful projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSweep {
    pub control: JointControl,
    /// Configuration at the end of every substep; `configs[0]` is the start.
    pub configs: Vec<JointConfig>,
}

fn pinv_apply(j: &Matrix3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    let svd = j.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * 1e-9).max(1e-12);
    svd.pseudo_inverse(eps)
        .map(|p| p * v)
        .unwrap_or_else(|_| Vector3::zeros())
}

/// Number of integration substeps used for a control of `duration`.
pub fn substep_count(duration: f64, substep_dt: f64) -> usize {
    ((duration / substep_dt) - 1e-9).ceil().max(1.0) as usize
}

/// Re-evaluates `u = J^+(q) v` at every substep as the configuration moves,
/// correcting drift so the tip follows the exactly integrated twist.
///
/// Returns `None` when a joint limit is crossed, the twist lies outside the
/// Jacobian's range (relative residual above [`SINGULARITY_RESIDUAL`]),
/// the joint rates blow up near a singularity, or `arm_ok` rejects an
/// intermediate configuration.
pub fn jacobian_projection(
    v: &crate::physics::Twist2,
    start: &JointConfig,
    spec: &ArmSpec,
    substep_dt: f64,
    arm_ok: &dyn Fn(&JointConfig) -> bool,
) -> Option<ProjectedSweep> {
    let n = substep_count(v.duration, substep_dt);
    let h = v.duration / n as f64;
    let twist = Vector3::new(v.vx, v.vy, v.omega);
    let speed = twist.norm();
    let origin = fk(start, spec);
    let mut q = *start;
    let mut configs = Vec::with_capacity(n + 1);
    configs.push(q);
    let mut steps = Vec::with_capacity(n);
    if speed == 0.0 {
        for _ in 0..n {
            steps.push(([0.0; 3], h));
            configs.push(q);
        }
        return Some(ProjectedSweep {
            control: JointControl { steps },
            configs,
        });
    }
    for k in 1..=n {
        let j = jacobian(&q, spec);
        let u = pinv_apply(&j, &twist);
        let residual = (j * u - twist).norm() / speed;
        if residual > SINGULARITY_RESIDUAL {
            return None;
        }
        let t = k as f64 * h;
        let target = Pose2 {
            x: origin.x + v.vx * t,
            y: origin.y + v.vy * t,
            theta: origin.theta + v.omega * t,
        };
        let mut next = q;
        for i in 0..3 {
            next[i] += u[i] * h;
        }
        for _ in 0..3 {
            let e = pose_error(&target, &fk(&next, spec));
            if e.norm() < 1e-13 {
                break;
            }
            let dq = pinv_apply(&jacobian(&next, spec), &e);
            for i in 0..3 {
                next[i] += dq[i];
            }
        }
        let rate = [(next[0] - q[0]) / h, (next[1] - q[1]) / h, (next[2] - q[2]) / h];
        if rate.iter().any(|r| r.abs() > MAX_JOINT_RATE) {
            return None;
        }
        if !spec.within_limits(&next) || !arm_ok(&next) {
            return None;
        }
        let e = pose_error(&target, &fk(&next, spec));
        if e.x.hypot(e.y) > 1e-3 || e.z.abs() > 1e-3 {
            return None;
        }
        steps.push((rate, h));
        q = next;
        configs.push(q);
    }
    Some(ProjectedSweep {
        control: JointControl { steps },
        configs,
    })
}
