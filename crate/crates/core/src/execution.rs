//! Interleaved planning and execution: grow a forest until it shows
//! progress, execute the extracted segment under pose noise, observe,
//! respawn, and repeat until the goal is met or time runs out.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::JointControl;
use crate::clock::{self, Clock, CostModel};
use crate::physics::{settle, simulate, Infeasible, Twist2};
use crate::planner::{ParamSet, Planner, PlannerError};
use crate::rng::stream_seed;
use crate::scenario::Scenario;
use crate::task::{self, TaskError};
use crate::transit::{generate_path, validate_path, JointPath};
use crate::world::SystemState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionParams {
    /// Time budget in seconds.
    pub budget: f64,
    /// `virtual` or `wall`.
    pub clock: String,
    pub cost: CostModel,
    /// Angular noise as a multiple of the positional noise (rad per m).
    pub theta_noise_ratio: f64,
    pub max_transit_failures: usize,
}

impl Default for ExecutionParams {
    fn default() -> Self {
        Self {
            budget: 60.0,
            clock: "virtual".into(),
            cost: CostModel::default(),
            theta_noise_ratio: 4.0,
            max_transit_failures: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_pos: f64,
    pub sigma_theta: f64,
    /// Seed of the execution noise stream.
    pub rng_stream: u64,
}

impl NoiseModel {
    pub fn new(sigma_pos: f64, sigma_theta: f64, rng_stream: u64) -> Self {
        assert!(sigma_pos >= 0.0 && sigma_theta >= 0.0, "noise sigmas must be non-negative");
        Self {
            sigma_pos,
            sigma_theta,
            rng_stream,
        }
    }

    pub fn none() -> Self {
        Self::new(0.0, 0.0, 0)
    }

    /// The scenario's noise for trial `trial`.
    pub fn for_scenario(s: &Scenario, trial: u64) -> Self {
        Self::new(
            s.noise_sigma,
            s.noise_sigma * s.params.execution.theta_noise_ratio,
            stream_seed(s.seed, trial, "exec"),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_pos == 0.0 && self.sigma_theta == 0.0
    }
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("unknown clock `{0}`")]
    UnknownClock(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    BudgetExhausted,
    TransitFailures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedStep {
    /// Clock time when the control started.
    pub time: f64,
    pub twist: Twist2,
    /// Joint control realized from the actual start state.
    pub control: JointControl,
    pub start: SystemState,
    /// Planner's prediction for this control.
    pub planned: SystemState,
    /// Simulated outcome from the actual start state, before noise.
    pub reached: SystemState,
    pub observed: SystemState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedSegment {
    /// Observed state before the transit.
    pub start: SystemState,
    pub transit: JointPath,
    pub steps: Vec<ExecutedStep>,
    pub fallback: bool,
    /// Observed state at the end of the segment.
    pub observed: SystemState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub failure: Option<FailureReason>,
    /// Episode duration on its clock, planning and execution included.
    pub wall_time: f64,
    pub planning_time: f64,
    pub num_rearranging_actions: usize,
    pub num_segments: usize,
    pub num_transits: usize,
    /// Forests spawned after an executed segment.
    pub replanning_cycles: usize,
    /// Forests discarded at the size limit without an extractable leaf.
    pub respawns: usize,
    pub fallbacks: usize,
    pub trajectory: Vec<ExecutedSegment>,
    pub final_state: SystemState,
    pub seed: u64,
    pub trial: u64,
}

/// Gaussian pose noise on every object, clamped to the workspace, followed
/// by penetration resolution. Zero noise leaves `q` untouched.
pub fn perturb(q: &SystemState, s: &Scenario, noise: &NoiseModel, rng: &mut ChaCha8Rng) -> SystemState {
    if noise.is_zero() {
        return q.clone();
    }
    let pos = Normal::new(0.0, noise.sigma_pos).expect("finite sigma");
    let ang = Normal::new(0.0, noise.sigma_theta).expect("finite sigma");
    let mut out = q.clone();
    for o in &mut out.objects {
        let (x, y) = s.workspace.clamp(o.pose.x + pos.sample(rng), o.pose.y + pos.sample(rng));
        o.pose = crate::geometry::Pose2::new(x, y, o.pose.theta + ang.sample(rng));
    }
    let mut out = settle(&out, s, &s.params.physics);
    for o in &mut out.objects {
        let (x, y) = s.workspace.clamp(o.pose.x, o.pose.y);
        o.pose.x = x;
        o.pose.y = y;
    }
    out
}

/// Executes one control from `q`: returns the simulated outcome and the
/// observed (perturbed) state.
pub fn execute_control(
    q: &SystemState,
    twist: &Twist2,
    s: &Scenario,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> Result<(SystemState, JointControl, SystemState), Infeasible> {
    let sweep = simulate(q, twist, s, &s.params.physics, false)?;
    if !sweep.in_manifold {
        return Err(Infeasible::Projection);
    }
    let observed = perturb(&sweep.state, s, noise, rng);
    Ok((sweep.state, sweep.control, observed))
}

/// Chains [`execute_control`] over `twists`, stopping at the first control
/// that is infeasible from the actual state.
pub fn execute_controls(
    q: &SystemState,
    twists: &[Twist2],
    s: &Scenario,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> SystemState {
    let mut cur = q.clone();
    for v in twists {
        match execute_control(&cur, v, s, noise, rng) {
            Ok((_, _, observed)) => cur = observed,
            Err(_) => break,
        }
    }
    cur
}

struct Episode {
    clock: Box<dyn Clock>,
    budget: f64,
    result: EpisodeResult,
}

impl Episode {
    fn out_of_time(&self) -> bool {
        self.clock.now() >= self.budget
    }

    fn finish(mut self, q: SystemState, failure: Option<FailureReason>) -> EpisodeResult {
        self.result.success = failure.is_none();
        self.result.failure = failure;
        self.result.wall_time = self.clock.now();
        self.result.final_state = q;
        self.result
    }
}

/// Runs one episode on the scenario's trial-0 streams.
pub fn run_episode(s: &Scenario, params: &ParamSet, noise: &NoiseModel, time_budget: f64) -> Result<EpisodeResult, EpisodeError> {
    run_trial(s, params, noise, time_budget, 0)
}

pub fn run_trial(
    s: &Scenario,
    params: &ParamSet,
    noise: &NoiseModel,
    time_budget: f64,
    trial: u64,
) -> Result<EpisodeResult, EpisodeError> {
    let task = task::build(s)?;
    let exec = &s.params.execution;
    let clock = clock::make(&exec.clock, &exec.cost).ok_or_else(|| EpisodeError::UnknownClock(exec.clock.clone()))?;
    let mut planner = Planner::new(s, task.as_ref(), params.clone(), stream_seed(s.seed, trial, "plan"))?;
    let mut exec_rng = ChaCha8Rng::seed_from_u64(noise.rng_stream);
    let mut q = s.initial_state.clone();
    let mut ep = Episode {
        clock,
        budget: time_budget,
        result: EpisodeResult {
            success: false,
            failure: None,
            wall_time: 0.0,
            planning_time: 0.0,
            num_rearranging_actions: 0,
            num_segments: 0,
            num_transits: 0,
            replanning_cycles: 0,
            respawns: 0,
            fallbacks: 0,
            trajectory: Vec::new(),
            final_state: q.clone(),
            seed: s.seed,
            trial,
        },
    };
    if task.goal(&q) {
        return Ok(ep.finish(q, None));
    }
    let resolution = s.params.transit.resolution;
    loop {
        if ep.out_of_time() {
            return Ok(ep.finish(q, Some(FailureReason::BudgetExhausted)));
        }
        let t0 = ep.clock.now();
        if ep.result.num_segments > 0 {
            ep.result.replanning_cycles += 1;
        }
        let threshold = planner.progress_threshold(&q);
        let h_current = task.heuristic(&q);
        let mut forest = planner.spawn_forest(&q);
        ep.clock.charge(planner.take_work());
        let pair = loop {
            if ep.out_of_time() {
                ep.result.planning_time += ep.clock.now() - t0;
                return Ok(ep.finish(q, Some(FailureReason::BudgetExhausted)));
            }
            let added = planner.expand_forest(&mut forest);
            let pair = planner.evaluate_progress(&mut forest, added, h_current, threshold);
            ep.clock.charge(planner.take_work());
            if let Some(pair) = pair {
                break pair;
            }
            if forest.size() >= planner.params.s_max {
                ep.result.respawns += 1;
                forest = planner.spawn_forest(&q);
                ep.clock.charge(planner.take_work());
            }
        };
        ep.result.planning_time += ep.clock.now() - t0;

        // Transit, re-validated against the latest observation.
        let start = q.clone();
        let mut transit = pair.transit.clone();
        let mut failures = 0;
        while !validate_path(&transit, &q, s, resolution) {
            failures += 1;
            if failures > exec.max_transit_failures {
                return Ok(ep.finish(q, Some(FailureReason::TransitFailures)));
            }
            let seed = stream_seed(s.seed, trial, "transit") ^ (ep.result.num_segments as u64) << 8 ^ failures as u64;
            if let Ok(Some(p)) = generate_path(&q.arm, transit.end(), &q, s, s.params.transit.budget, seed) {
                transit = p;
            }
        }
        if !transit.is_trivial() {
            ep.result.num_transits += 1;
            ep.clock.advance(transit.length() / s.params.transit.joint_speed);
        }
        q.arm = *transit.end();

        let mut steps = Vec::with_capacity(pair.rearrange.len());
        for step in &pair.rearrange {
            if ep.out_of_time() {
                break;
            }
            let time = ep.clock.now();
            let Ok((reached, control, observed)) = execute_control(&q, &step.twist, s, noise, &mut exec_rng) else {
                break;
            };
            ep.clock.advance(step.twist.duration);
            ep.result.num_rearranging_actions += 1;
            steps.push(ExecutedStep {
                time,
                twist: step.twist,
                control,
                start: std::mem::replace(&mut q, observed.clone()),
                planned: step.predicted.clone(),
                reached,
                observed,
            });
        }
        ep.result.num_segments += 1;
        ep.result.fallbacks += pair.fallback as usize;
        ep.result.trajectory.push(ExecutedSegment {
            start,
            transit,
            steps,
            fallback: pair.fallback,
            observed: q.clone(),
        });
        if task.goal(&q) {
            return Ok(ep.finish(q, None));
        }
    }
}

/// One line per executed control: time, twist, predicted and observed state.
pub fn write_trajectory_jsonl(result: &EpisodeResult, out: &mut dyn Write) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Record<'a> {
        segment: usize,
        time: f64,
        twist: &'a Twist2,
        predicted: &'a SystemState,
        observed: &'a SystemState,
    }
    for (k, seg) in result.trajectory.iter().enumerate() {
        for step in &seg.steps {
            let rec = Record {
                segment: k,
                time: step.time,
                twist: &step.twist,
                predicted: &step.planned,
                observed: &step.observed,
            };
            serde_json::to_writer(&mut *out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use crate::scenario::test_support::open_scenario;
    use crate::world::is_state_valid;

    #[test]
    fn goal_at_start_is_immediate_success() {
        let mut s = open_scenario(1);
        s.initial_state.objects[0].pose = Pose2::new(0.3, 0.8, 0.0);
        let r = run_episode(&s, &ParamSet::default(), &NoiseModel::none(), 10.0).unwrap();
        assert!(r.success);
        assert_eq!(r.num_rearranging_actions, 0);
        assert_eq!(r.num_segments, 0);
        assert_eq!(r.wall_time, 0.0);
    }

    #[test]
    fn zero_noise_replays_predictions() {
        let s = open_scenario(1);
        let r = run_episode(&s, &ParamSet::default(), &NoiseModel::none(), 20.0).unwrap();
        assert!(r.num_segments >= 1);
        for seg in &r.trajectory {
            for st in &seg.steps {
                assert_eq!(st.planned, st.reached);
                assert_eq!(st.reached, st.observed);
            }
        }
    }

    #[test]
    fn perturbation_statistics_and_validity() {
        let s = open_scenario(1);
        let noise = NoiseModel::new(0.01, 0.04, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = &s.initial_state;
        let draws = 10_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            let p = perturb(q, &s, &noise, &mut rng);
            assert!(is_state_valid(&p, &s));
            sum += p.objects[0].pose.x - q.objects[0].pose.x;
        }
        // Per-axis displacement: mean zero; folded mean of |dx| checked in the integration suite.
        let mean = sum / draws as f64;
        assert!(mean.abs() < 3.0 * 0.01 / (draws as f64).sqrt() * 1.5);
    }

    #[test]
    fn jsonl_has_one_line_per_control() {
        let s = open_scenario(1);
        let r = run_episode(&s, &ParamSet::default(), &NoiseModel::none(), 20.0).unwrap();
        let mut buf = Vec::new();
        write_trajectory_jsonl(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), r.num_rearranging_actions);
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.get("twist").is_some() && v.get("observed").is_some());
        }
    }
}
