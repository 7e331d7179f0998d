//! Scenario generation and batch benchmarking.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::fk;
use crate::execution::{run_trial, EpisodeResult, NoiseModel};
use crate::geometry::{Pose2, Shape};
use crate::planner::ParamSet;
use crate::rng::stream_seed;
use crate::scenario::{default_home, default_workspace, Params, Scenario};
use crate::task::{self, TaskSpec};
use crate::world::{is_state_valid, ObjectState, Rect, SystemState};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("at least one object is required")]
    NoObjects,
    #[error("unknown task kind `{0}`")]
    UnknownTask(String),
    #[error("{kind} needs at least {min} classes, got {got}")]
    TooFewClasses { kind: String, min: usize, got: usize },
    #[error("could not place object {index} after {attempts} attempts; reduce num_objects or object_size")]
    OverPacked { index: usize, attempts: usize },
}

/// Knobs for [`generate_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub num_objects: usize,
    pub num_classes: usize,
    /// Side length of the square objects.
    pub object_size: f64,
    /// Minimum gap between objects at placement.
    pub spacing: f64,
    /// Side length of each goal region.
    pub region_size: f64,
    pub clutter_radius: f64,
    pub cluster_d_in: f64,
    pub separation_d_out: f64,
    /// Objects dropped inside the clutter radius of the grasp target.
    pub clutter_count: usize,
    pub noise_sigma: f64,
    pub budget: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_objects: 6,
            num_classes: 3,
            object_size: 0.05,
            spacing: 0.03,
            region_size: 0.2,
            clutter_radius: 0.12,
            cluster_d_in: 0.12,
            separation_d_out: 0.3,
            clutter_count: 3,
            noise_sigma: 0.0,
            budget: 60.0,
        }
    }
}

impl GenConfig {
    /// Desk-scale suite settings for a task kind.
    pub fn desk(kind: &str) -> Self {
        let base = Self::default();
        match kind {
            "sorting_regions" => Self { budget: 120.0, ..base },
            "sorting_free" => base,
            _ => Self {
                num_objects: 10,
                num_classes: 1,
                ..base
            },
        }
    }

    /// Paper-scale suite settings for a task kind.
    pub fn paper(kind: &str) -> Self {
        let base = Self::default();
        match kind {
            "sorting_regions" => Self {
                num_objects: 9,
                budget: 300.0,
                region_size: 0.22,
                ..base
            },
            "sorting_free" => Self {
                num_objects: 9,
                budget: 300.0,
                ..base
            },
            _ => Self {
                num_objects: 36,
                num_classes: 1,
                object_size: 0.04,
                spacing: 0.015,
                clutter_count: 5,
                budget: 180.0,
                ..base
            },
        }
    }
}

/// Goal regions along the far side of the table.
pub fn goal_regions(workspace: &Rect, num_classes: usize, size: f64) -> Vec<Rect> {
    let y = workspace.max[1] - 0.25;
    let span = workspace.width() * 0.6;
    (0..num_classes)
        .map(|i| {
            let x = if num_classes == 1 {
                0.0
            } else {
                -span / 2.0 + span * i as f64 / (num_classes - 1) as f64
            };
            let lift = if num_classes > 2 && (i == 0 || i == num_classes - 1) { -0.1 } else { 0.0 };
            Rect::centered(workspace.center().x + x, y + lift, size, size)
        })
        .collect()
}

/// Random valid initial placement for a task. Deterministic in `seed`.
pub fn generate_scenario(kind: &str, cfg: &GenConfig, seed: u64) -> Result<Scenario, GenError> {
    if cfg.num_objects == 0 {
        return Err(GenError::NoObjects);
    }
    if !task::kinds().contains(&kind) {
        return Err(GenError::UnknownTask(kind.into()));
    }
    let sorting = kind.starts_with("sorting");
    let classes = if sorting { cfg.num_classes } else { 1 };
    if sorting && classes < 1 || kind == "sorting_free" && classes < 2 {
        return Err(GenError::TooFewClasses {
            kind: kind.into(),
            min: 2,
            got: classes,
        });
    }
    let workspace = default_workspace();
    let regions = if kind == "sorting_regions" {
        goal_regions(&workspace, classes, cfg.region_size)
    } else {
        Vec::new()
    };
    let relocate = Rect::centered(0.3, 0.8, cfg.region_size, cfg.region_size);
    let spec = match kind {
        "sorting_regions" => TaskSpec::sorting_regions(),
        "sorting_free" => TaskSpec::sorting_free(cfg.cluster_d_in, cfg.separation_d_out),
        "relocating" => TaskSpec::relocating(0, relocate),
        _ => TaskSpec::grasping(0, cfg.clutter_radius),
    };
    let shapes = vec![Shape::square(cfg.object_size)];
    let half_diag = Shape::square(cfg.object_size).bounding_radius();
    let min_gap = 2.0 * half_diag + cfg.spacing;
    let inset = half_diag + 0.03;
    let area = Rect::new(
        [workspace.min[0] + inset, workspace.min[1] + inset + 0.1],
        [workspace.max[0] - inset, workspace.max[1] - inset],
    );
    let ring = cfg.clutter_radius.max(min_gap);
    let inner = Rect::new(
        [area.min[0] + ring, area.min[1] + ring],
        [area.max[0] - ring, area.max[1] - ring],
    );
    let mut params = Params::default();
    params.execution.budget = cfg.budget;
    let arm = &params.arm;
    let home = default_home();
    let home_tip = fk(&home, arm).position();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0, "gen"));
    let mut objects: Vec<ObjectState> = Vec::with_capacity(cfg.num_objects);
    for index in 0..cfg.num_objects {
        let class_id = index % classes;
        let near_target = kind == "grasping" && (1..=cfg.clutter_count).contains(&index);
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let (x, y) = if near_target {
                let t = objects[0].pose;
                let r = rng.random_range(min_gap..cfg.clutter_radius.max(min_gap * 1.01));
                let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                (t.x + r * phi.cos(), t.y + r * phi.sin())
            } else {
                (
                    rng.random_range(area.min[0]..=area.max[0]),
                    rng.random_range(area.min[1]..=area.max[1]),
                )
            };
            if !area.contains(x, y) {
                continue;
            }
            // The grasp target needs room for its clutter ring.
            if kind == "grasping" && index == 0 && !inner.contains(x, y) {
                continue;
            }
            let p = nalgebra::Vector2::new(x, y);
            if (p - home_tip).norm() < half_diag + arm.ee_radius + 0.05 {
                continue;
            }
            if objects.iter().any(|o| (o.pose.position() - p).norm() < min_gap) {
                continue;
            }
            if let Some(r) = regions.get(class_id) {
                if r.contains(x, y) {
                    continue;
                }
            }
            if kind == "relocating" && index == 0 && relocate.contains(x, y) {
                continue;
            }
            placed = Some(Pose2::new(x, y, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)));
            break;
        }
        let pose = placed.ok_or(GenError::OverPacked {
            index,
            attempts: MAX_PLACEMENT_ATTEMPTS,
        })?;
        objects.push(ObjectState {
            pose,
            shape_id: 0,
            class_id,
        });
    }
    let state = SystemState { arm: home, objects };
    let s = Scenario::new(workspace, shapes, Vec::new(), state, regions, spec, params, cfg.noise_sigma, seed);
    debug_assert!(is_state_valid(&s.initial_state, &s));
    Ok(s)
}

/// Summary statistics over successful trials only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation; zeros when empty.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub success: bool,
    pub time: f64,
    pub planning_time: f64,
    pub actions: usize,
    pub segments: usize,
    pub replanning_cycles: usize,
    /// Failure reason, if any.
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub planner: String,
    pub task: String,
    pub successes: usize,
    pub trials: usize,
    pub time: Stat,
    pub planning_time: Stat,
    pub actions: Stat,
    pub records: Vec<TrialRecord>,
}

impl ReportRow {
    pub fn from_records(planner: &str, task: &str, mut records: Vec<TrialRecord>) -> Self {
        records.sort_by_key(|r| r.trial);
        let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.success).collect();
        let pick = |f: fn(&TrialRecord) -> f64| Stat::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        Self {
            planner: planner.into(),
            task: task.into(),
            successes: ok.len(),
            trials: records.len(),
            time: pick(|r| r.time),
            planning_time: pick(|r| r.planning_time),
            actions: pick(|r| r.actions as f64),
            records,
        }
    }

    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    /// Mean action count, infinite when no trial succeeded.
    pub fn mean_actions(&self) -> f64 {
        if self.successes == 0 {
            f64::INFINITY
        } else {
            self.actions.mean
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub trials: usize,
    pub budget: f64,
    pub noise_sigma: f64,
    pub jobs: usize,
    pub params: ParamSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub version: String,
    pub config: BenchConfig,
    pub rows: Vec<ReportRow>,
}

pub fn version() -> String {
    format!("kdrrf-{}", env!("CARGO_PKG_VERSION"))
}

fn record_of(trial: u64, seed: u64, r: Result<EpisodeResult, String>) -> TrialRecord {
    match r {
        Ok(e) => TrialRecord {
            trial,
            seed,
            success: e.success,
            time: e.wall_time,
            planning_time: e.planning_time,
            actions: e.num_rearranging_actions,
            segments: e.num_segments,
            replanning_cycles: e.replanning_cycles,
            reason: e.failure.map(|f| format!("{f:?}")),
        },
        Err(msg) => TrialRecord {
            trial,
            seed,
            success: false,
            time: 0.0,
            planning_time: 0.0,
            actions: 0,
            segments: 0,
            replanning_cycles: 0,
            reason: Some(msg),
        },
    }
}

/// Runs one trial per scenario for each planner. Episode errors and panics
/// become failed trials.
pub fn run_benchmark(scenarios: &[Scenario], planners: &[&str], cfg: &BenchConfig) -> BenchmarkReport {
    let run_all = || {
        let mut rows = Vec::new();
        for &planner in planners {
            let params = cfg.params.clone().with_algorithm(planner);
            let records: Vec<TrialRecord> = scenarios
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    let trial = i as u64;
                    let mut noisy = NoiseModel::for_scenario(s, trial);
                    noisy.sigma_theta = cfg.noise_sigma * s.params.execution.theta_noise_ratio;
                    noisy.sigma_pos = cfg.noise_sigma;
                    let noise = noisy;
                    let outcome = std::panic::catch_unwind(|| run_trial(s, &params, &noise, cfg.budget, trial));
                    let r = match outcome {
                        Ok(Ok(e)) => Ok(e),
                        Ok(Err(e)) => Err(e.to_string()),
                        Err(_) => Err("episode panicked".to_string()),
                    };
                    record_of(trial, s.seed, r)
                })
                .collect();
            let kind = scenarios.first().map(|s| s.task.kind.clone()).unwrap_or_default();
            rows.push(ReportRow::from_records(planner, &kind, records));
        }
        rows
    };
    let rows = if cfg.jobs > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build() {
            Ok(pool) => pool.install(run_all),
            Err(_) => run_all(),
        }
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map(|p| p.install(run_all))
            .unwrap_or_else(|_| run_all())
    };
    BenchmarkReport {
        version: version(),
        config: cfg.clone(),
        rows,
    }
}

/// `trials` scenarios generated with seeds `seed, seed + 1, ...`.
pub fn scenario_suite(kind: &str, gen: &GenConfig, trials: usize, seed: u64) -> Result<Vec<Scenario>, GenError> {
    (0..trials as u64).map(|i| generate_scenario(kind, gen, seed.wrapping_add(i))).collect()
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn row(&self, planner: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.planner == planner)
    }

    /// Aligned plain-text table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:<16} {:>9} {:>18} {:>18}",
            "planner", "task", "success", "time (s)", "actions"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<8} {:<16} {:>9} {:>18} {:>18}",
                r.planner,
                r.task,
                format!("{}/{}", r.successes, r.trials),
                format!("{:.1} ± {:.1}", r.time.mean, r.time.std),
                format!("{:.1} ± {:.1}", r.actions.mean, r.actions.std),
            );
        }
        out
    }
}
