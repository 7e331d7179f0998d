//! Quasi-static planar pushing.
//!
//! The end-effector follows a commanded twist kinematically. After every
//! substep, overlapping bodies are separated by penetration projection:
//! objects yield to the end-effector, to objects that were pushed before
//! them, and to static obstacles. Objects carry no velocity between
//! substeps, so they stop as soon as the pusher does.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{fk, jacobian_projection, substep_count, JointConfig, JointControl};
use crate::geometry::{contact, wrap_angle, Convex, Pose2, Shape};
use crate::scenario::Scenario;
use crate::world::{is_arm_valid, SystemState};

/// End-effector velocity in the plane, held for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Twist2 {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    pub duration: f64,
}

impl Twist2 {
    pub fn new(vx: f64, vy: f64, omega: f64, duration: f64) -> Self {
        Self {
            vx,
            vy,
            omega,
            duration,
        }
    }

    pub fn zero(duration: f64) -> Self {
        Self::new(0.0, 0.0, 0.0, duration)
    }

    pub fn within_bounds(&self, max_linear: f64, max_angular: f64) -> bool {
        self.vx.abs() <= max_linear && self.vy.abs() <= max_linear && self.omega.abs() <= max_angular
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsParams {
    pub substep_dt: f64,
    pub max_resolve_iters: usize,
    pub contact_tolerance: f64,
    /// Scales the heuristic rotation of polygon objects under off-center pushes.
    pub rotation_coupling: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            substep_dt: 0.05,
            max_resolve_iters: 32,
            contact_tolerance: 1e-4,
            rotation_coupling: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Infeasible {
    #[error("twist cannot be realized by the arm")]
    Projection,
    #[error("contacts could not be resolved")]
    Jammed,
}

/// A simulated sweep.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub state: SystemState,
    pub control: JointControl,
    /// False if any intermediate state leaves the valid state space.
    pub in_manifold: bool,
    /// Number of substeps simulated.
    pub substeps: usize,
    /// Intermediate states, including start and end, when recording.
    pub trace: Vec<SystemState>,
}

struct Body {
    shape: usize,
    pose: Pose2,
    convex: Convex,
    active: bool,
}

fn refresh(body: &mut Body, shapes: &[Shape]) {
    body.convex = shapes[body.shape].to_convex(&body.pose);
}

/// Moves `body` out of `pusher` along the contact normal, rotating polygons
/// by the torque of the push about their centroid.
fn push_out(body: &mut Body, pusher: &Convex, fraction: f64, shapes: &[Shape], p: &PhysicsParams) -> f64 {
    let c = contact(&body.convex, pusher);
    let depth = c.depth();
    if depth <= p.contact_tolerance {
        return 0.0;
    }
    let d = c.normal * (depth * fraction);
    body.pose.x += d.x;
    body.pose.y += d.y;
    if matches!(shapes[body.shape], Shape::Polygon { .. }) && p.rotation_coupling > 0.0 {
        let r = c.point - body.pose.position();
        let r2 = r.norm_squared();
        if r2 > 1e-12 {
            let dtheta = p.rotation_coupling * (r.x * d.y - r.y * d.x) / r2;
            body.pose.theta = wrap_angle(body.pose.theta + dtheta);
        }
    }
    refresh(body, shapes);
    depth
}

fn near(a: &Convex, b: &Convex) -> bool {
    let reach = a.bound() + b.bound();
    (a.center() - b.center()).norm_squared() <= reach * reach
}

/// Separates overlapping bodies with the pusher held fixed. Returns the
/// largest residual penetration after the last iteration.
fn resolve(bodies: &mut [Body], pusher: Option<&Convex>, obstacles: &[Convex], shapes: &[Shape], p: &PhysicsParams) -> f64 {
    let n = bodies.len();
    for _ in 0..p.max_resolve_iters {
        let mut moved = false;
        if let Some(ee) = pusher {
            for b in bodies.iter_mut() {
                if near(&b.convex, ee) && push_out(b, ee, 1.0, shapes, p) > 0.0 {
                    b.active = true;
                    moved = true;
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if !near(&bodies[i].convex, &bodies[j].convex) {
                    continue;
                }
                let (left, right) = bodies.split_at_mut(j);
                let (bi, bj) = (&mut left[i], &mut right[0]);
                let depth = contact(&bj.convex, &bi.convex).depth();
                if depth <= p.contact_tolerance {
                    continue;
                }
                moved = true;
                match (bi.active, bj.active) {
                    (true, false) => {
                        let pusher = bi.convex.clone();
                        push_out(bj, &pusher, 1.0, shapes, p);
                        bj.active = true;
                    }
                    (false, true) => {
                        let pusher = bj.convex.clone();
                        push_out(bi, &pusher, 1.0, shapes, p);
                        bi.active = true;
                    }
                    _ => {
                        let pi = bi.convex.clone();
                        let pj = bj.convex.clone();
                        push_out(bj, &pi, 0.5, shapes, p);
                        push_out(bi, &pj, 0.5, shapes, p);
                    }
                }
            }
        }
        for b in bodies.iter_mut() {
            for o in obstacles {
                if near(&b.convex, o) && push_out(b, o, 1.0, shapes, p) > 0.0 {
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    residual(bodies, pusher, obstacles)
}

fn residual(bodies: &[Body], pusher: Option<&Convex>, obstacles: &[Convex]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, b) in bodies.iter().enumerate() {
        if let Some(ee) = pusher {
            if near(&b.convex, ee) {
                worst = worst.max(contact(&b.convex, ee).depth());
            }
        }
        for o in obstacles {
            if near(&b.convex, o) {
                worst = worst.max(contact(&b.convex, o).depth());
            }
        }
        for other in &bodies[i + 1..] {
            if near(&b.convex, &other.convex) {
                worst = worst.max(contact(&b.convex, &other.convex).depth());
            }
        }
    }
    worst
}

fn bodies_of(q: &SystemState, shapes: &[Shape]) -> Vec<Body> {
    q.objects
        .iter()
        .map(|o| Body {
            shape: o.shape_id,
            pose: o.pose,
            convex: shapes[o.shape_id].to_convex(&o.pose),
            active: false,
        })
        .collect()
}

fn write_back(q: &mut SystemState, bodies: &[Body]) {
    for (o, b) in q.objects.iter_mut().zip(bodies) {
        o.pose = b.pose;
    }
}

/// Simulates a sweep of twist `v` from `q`.
pub fn simulate(q: &SystemState, v: &Twist2, s: &Scenario, p: &PhysicsParams, record: bool) -> Result<Sweep, Infeasible> {
    let arm = &s.params.arm;
    let projected = jacobian_projection(v, &q.arm, arm, p.substep_dt, &|c| is_arm_valid(c, s))
        .ok_or(Infeasible::Projection)?;
    let obstacles = s.obstacle_convexes();
    let mut bodies = bodies_of(q, &s.shapes);
    let mut state = q.clone();
    let mut trace = Vec::new();
    if record {
        trace.push(state.clone());
    }
    let mut in_manifold = true;
    let substeps = projected.configs.len() - 1;
    let moving = v.vx != 0.0 || v.vy != 0.0 || v.omega != 0.0;
    for k in 1..=substeps {
        let cfg = projected.configs[k];
        // Arm validity between substeps, at a joint resolution of ~0.01 rad.
        let prev = projected.configs[k - 1];
        let span = (0..3).map(|i| (cfg[i] - prev[i]).abs()).fold(0.0, f64::max);
        let pieces = (span / 0.01).ceil() as usize;
        for m in 1..pieces {
            let t = m as f64 / pieces as f64;
            let mid: JointConfig = std::array::from_fn(|i| prev[i] + (cfg[i] - prev[i]) * t);
            if !is_arm_valid(&mid, s) {
                in_manifold = false;
            }
        }
        if moving {
            for b in bodies.iter_mut() {
                b.active = false;
            }
            let ee = arm.end_effector(&cfg);
            let worst = resolve(&mut bodies, Some(&ee), obstacles, &s.shapes, p);
            if worst > 10.0 * p.contact_tolerance {
                return Err(Infeasible::Jammed);
            }
        }
        state.arm = cfg;
        write_back(&mut state, &bodies);
        if !state.objects.iter().all(|o| s.workspace.contains(o.pose.x, o.pose.y)) {
            in_manifold = false;
        }
        if record {
            trace.push(state.clone());
        }
    }
    Ok(Sweep {
        state,
        control: projected.control,
        in_manifold,
        substeps,
        trace,
    })
}

/// The transition function: the state reached after sweeping `v` from `q`.
pub fn transition(q: &SystemState, v: &Twist2, s: &Scenario, p: &PhysicsParams) -> Result<SystemState, Infeasible> {
    simulate(q, v, s, p, false).map(|sw| sw.state)
}

/// True iff the whole sweep stays in the valid state space. The planar
/// end-effector satisfies the height and tilt constraints by construction.
pub fn sweep_manifold_check(q_start: &SystemState, v: &Twist2, s: &Scenario, p: &PhysicsParams) -> bool {
    simulate(q_start, v, s, p, false).is_ok_and(|sw| sw.in_manifold)
}

/// Separates objects that overlap each other, the end-effector or static
/// obstacles without moving the arm. Used after pose perturbations.
pub fn settle(q: &SystemState, s: &Scenario, p: &PhysicsParams) -> SystemState {
    let mut bodies = bodies_of(q, &s.shapes);
    let ee = s.params.arm.end_effector(&q.arm);
    resolve(&mut bodies, Some(&ee), s.obstacle_convexes(), &s.shapes, p);
    let mut out = q.clone();
    write_back(&mut out, &bodies);
    out
}

/// End-effector pose after integrating `v` exactly from `start`.
pub fn integrate_twist(start: &Pose2, v: &Twist2) -> Pose2 {
    Pose2::new(
        start.x + v.vx * v.duration,
        start.y + v.vy * v.duration,
        start.theta + v.omega * v.duration,
    )
}

pub fn substeps_for(v: &Twist2, p: &PhysicsParams) -> usize {
    substep_count(v.duration, p.substep_dt)
}

pub fn end_effector_pose(q: &SystemState, s: &Scenario) -> Pose2 {
    fk(&q.arm, &s.params.arm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{penetration_depth, Vec2};
    use crate::scenario::test_support::{open_scenario, scenario_with};
    use crate::world::{is_state_valid, Obstacle, ObjectState};

    #[test]
    fn zero_twist_is_identity() {
        let s = open_scenario(4);
        let q = s.initial_state.clone();
        let out = transition(&q, &Twist2::zero(0.5), &s, &PhysicsParams::default()).unwrap();
        assert_eq!(out, q);
    }

    /// Places a disc object directly ahead of the end-effector.
    fn head_on_setup(gap: f64) -> (Scenario, f64) {
        let probe = open_scenario(0);
        let start = crate::arm::ik(&Pose2::new(-0.1, 0.55, 0.0), &probe.params.arm, &probe.initial_state.arm).unwrap();
        let tip = crate::arm::fk(&start, &probe.params.arm);
        let r_obj = 0.03;
        let r_ee = probe.params.arm.ee_radius;
        let x = tip.x + r_ee + r_obj + gap;
        let mut s = scenario_with(vec![Shape::disc(r_obj)], vec![ObjectState { pose: Pose2::new(x, tip.y, 0.3), shape_id: 0, class_id: 0 }], vec![]);
        s.initial_state.arm = start;
        (s, x)
    }

    #[test]
    fn head_on_disc_push() {
        let gap = 0.01;
        let (s, x0) = head_on_setup(gap);
        let p = PhysicsParams::default();
        let v = Twist2::new(0.1, 0.0, 0.0, 0.5);
        let out = transition(&s.initial_state, &v, &s, &p).unwrap();
        let o = &out.objects[0];
        // Analytic oracle: the object moves by the tip travel past first contact.
        let travel = 0.1 * 0.5;
        let expected = x0 + (travel - gap);
        assert!((o.pose.x - expected).abs() <= 2.0 * p.contact_tolerance, "{} vs {}", o.pose.x, expected);
        assert!((o.pose.y - s.initial_state.objects[0].pose.y).abs() < 1e-9);
        assert_eq!(o.pose.theta, 0.3);
        let ee = s.params.arm.end_effector(&out.arm);
        let obj = out.object_convex(0, &s.shapes);
        assert!(contact(&obj, &ee).depth() <= p.contact_tolerance);
    }

    #[test]
    fn push_against_wall_comes_to_rest() {
        let probe = open_scenario(0);
        let start = crate::arm::ik(&Pose2::new(-0.1, 0.55, 0.0), &probe.params.arm, &probe.initial_state.arm).unwrap();
        let tip = crate::arm::fk(&start, &probe.params.arm);
        let r_obj = 0.03;
        let x = tip.x + probe.params.arm.ee_radius + r_obj + 0.005;
        let wall_x = x + r_obj + 0.02 + 0.01;
        let s = scenario_with(
            vec![Shape::disc(r_obj)],
            vec![ObjectState { pose: Pose2::new(x, tip.y, 0.0), shape_id: 0, class_id: 0 }],
            vec![Obstacle { shape: Shape::rectangle(0.04, 0.4), pose: Pose2::new(wall_x, tip.y, 0.0) }],
        );
        let mut s = s;
        s.initial_state.arm = start;
        let p = PhysicsParams::default();
        // Short enough that the tip itself never reaches the wall.
        let v = Twist2::new(0.1, 0.0, 0.0, 0.2);
        match transition(&s.initial_state, &v, &s, &p) {
            Ok(out) => {
                let o = &out.objects[0];
                let wall = &s.obstacles[0];
                let (dw, _) = penetration_depth(&s.shapes[0], &o.pose, &wall.shape, &wall.pose);
                assert!(dw <= p.contact_tolerance);
                let ee = s.params.arm.end_effector(&out.arm);
                assert!(contact(&out.object_convex(0, &s.shapes), &ee).depth() <= p.contact_tolerance);
            }
            Err(e) => assert_eq!(e, Infeasible::Jammed),
        }
        // Pressing further must report a jam rather than tunneling.
        let v = Twist2::new(0.1, 0.0, 0.0, 0.4);
        if let Ok(out) = transition(&s.initial_state, &v, &s, &p) {
            let o = &out.objects[0];
            assert!(o.pose.x < wall_x);
        }
    }

    #[test]
    fn sweep_into_obstacle_fails_manifold_check() {
        let probe = open_scenario(0);
        let tip = end_effector_pose(&probe.initial_state, &probe);
        let s = scenario_with(
            vec![],
            vec![],
            vec![Obstacle { shape: Shape::square(0.05), pose: Pose2::new(tip.x + 0.07, tip.y, 0.0) }],
        );
        let p = PhysicsParams::default();
        assert!(sweep_manifold_check(&s.initial_state, &Twist2::zero(0.5), &s, &p));
        assert!(!sweep_manifold_check(&s.initial_state, &Twist2::new(0.2, 0.0, 0.0, 0.5), &s, &p));
    }

    #[test]
    fn transition_is_deterministic_and_at_rest() {
        let s = open_scenario(5);
        let p = PhysicsParams::default();
        let q = s.initial_state.clone();
        let v = Twist2::new(0.15, 0.12, -0.4, 0.5);
        if let Ok(first) = transition(&q, &v, &s, &p) {
            for _ in 0..100 {
                assert_eq!(transition(&q, &v, &s, &p).unwrap(), first);
            }
            let rest = transition(&first, &Twist2::zero(0.5), &s, &p).unwrap();
            assert_eq!(rest, first);
        }
    }

    #[test]
    fn settle_separates_overlaps() {
        let s = open_scenario(3);
        let mut q = s.initial_state.clone();
        q.objects[1].pose = Pose2::new(q.objects[0].pose.x + 0.01, q.objects[0].pose.y, 0.0);
        let out = settle(&q, &s, &PhysicsParams::default());
        let d = contact(&out.object_convex(0, &s.shapes), &out.object_convex(1, &s.shapes)).depth();
        assert!(d <= 1e-3);
        assert!(is_state_valid(&out, &s));
        let _ = Vec2::zeros();
    }
}
