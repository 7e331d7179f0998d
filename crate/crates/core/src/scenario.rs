//! Scenarios and their JSON file format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{ArmSpec, JointConfig};
use crate::execution::ExecutionParams;
use crate::geometry::{Convex, Pose2, Shape, ShapeError};
use crate::physics::PhysicsParams;
use crate::planner::ParamSet;
use crate::task::{self, TaskSpec};
use crate::transit::TransitParams;
use crate::world::{is_state_valid, ObjectState, Obstacle, Rect, SystemState};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("shape {index}: {source}")]
    Shape { index: usize, source: ShapeError },
    #[error("object {0} references unknown shape {1}")]
    UnknownShape(usize, usize),
    #[error("goal regions are required by task `{0}` but missing or incomplete")]
    MissingGoalRegions(String),
    #[error("task `{0}` does not use goal regions")]
    UnexpectedGoalRegions(String),
    #[error("initial state is not valid")]
    InvalidInitialState,
    #[error("goal region {0} lies outside the workspace")]
    RegionOutsideWorkspace(usize),
    #[error(transparent)]
    Task(#[from] task::TaskError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Everything tunable that is not geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Params {
    pub planner: ParamSet,
    pub physics: PhysicsParams,
    pub arm: ArmSpec,
    pub transit: TransitParams,
    pub execution: ExecutionParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub workspace: Rect,
    pub obstacles: Vec<Obstacle>,
    pub shapes: Vec<Shape>,
    pub initial_state: SystemState,
    pub num_classes: usize,
    pub goal_regions: Vec<Rect>,
    pub task: TaskSpec,
    pub params: Params,
    /// Standard deviation of the per-action object position perturbation.
    pub noise_sigma: f64,
    pub seed: u64,
    obstacle_cache: Vec<Convex>,
}

impl Scenario {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        workspace: Rect,
        shapes: Vec<Shape>,
        obstacles: Vec<Obstacle>,
        initial_state: SystemState,
        goal_regions: Vec<Rect>,
        task: TaskSpec,
        params: Params,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        let num_classes = initial_state
            .objects
            .iter()
            .map(|o| o.class_id + 1)
            .max()
            .unwrap_or(0)
            .max(goal_regions.len());
        let mut s = Self {
            workspace,
            obstacles,
            shapes,
            initial_state,
            num_classes,
            goal_regions,
            task,
            params,
            noise_sigma,
            seed,
            obstacle_cache: Vec::new(),
        };
        s.refresh();
        s
    }

    /// Recomputes derived data after `obstacles` or `num_classes` inputs change.
    pub fn refresh(&mut self) {
        self.obstacle_cache = self
            .obstacles
            .iter()
            .map(|o| o.shape.to_convex(&o.pose))
            .collect();
        self.num_classes = self
            .initial_state
            .objects
            .iter()
            .map(|o| o.class_id + 1)
            .max()
            .unwrap_or(0)
            .max(self.goal_regions.len());
    }

    pub fn num_objects(&self) -> usize {
        self.initial_state.objects.len()
    }

    pub fn obstacle_convexes(&self) -> &[Convex] {
        &self.obstacle_cache
    }

    pub fn object_radius(&self, i: usize) -> f64 {
        self.shapes[self.initial_state.objects[i].shape_id].bounding_radius()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (index, shape) in self.shapes.iter().enumerate() {
            shape
                .validate()
                .map_err(|source| ScenarioError::Shape { index, source })?;
        }
        for (i, o) in self.initial_state.objects.iter().enumerate() {
            if o.shape_id >= self.shapes.len() {
                return Err(ScenarioError::UnknownShape(i, o.shape_id));
            }
        }
        let needs_regions = task::requires_goal_regions(&self.task.kind);
        if needs_regions && self.goal_regions.len() < self.num_classes.max(1) {
            return Err(ScenarioError::MissingGoalRegions(self.task.kind.clone()));
        }
        if !needs_regions && !self.goal_regions.is_empty() {
            return Err(ScenarioError::UnexpectedGoalRegions(self.task.kind.clone()));
        }
        for (i, r) in self.goal_regions.iter().enumerate() {
            if !self.workspace.contains_rect(r) {
                return Err(ScenarioError::RegionOutsideWorkspace(i));
            }
        }
        task::build(self)?;
        if !is_state_valid(&self.initial_state, self) {
            return Err(ScenarioError::InvalidInitialState);
        }
        Ok(())
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            workspace: self.workspace,
            shapes: self.shapes.clone(),
            obstacles: self.obstacles.clone(),
            objects: self
                .initial_state
                .objects
                .iter()
                .map(|o| ObjectEntry {
                    pose: o.pose,
                    shape: o.shape_id,
                    class: o.class_id,
                })
                .collect(),
            goal_regions: self.goal_regions.clone(),
            task: self.task.clone(),
            params: FileParams {
                planner: self.params.planner.clone(),
                physics: self.params.physics.clone(),
                arm: ArmEntry {
                    spec: self.params.arm.clone(),
                    initial_config: self.initial_state.arm,
                },
                transit: self.params.transit.clone(),
                execution: self.params.execution.clone(),
            },
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }

    pub fn from_file(f: ScenarioFile) -> Self {
        let objects = f
            .objects
            .iter()
            .map(|o| ObjectState {
                pose: o.pose.normalized(),
                shape_id: o.shape,
                class_id: o.class,
            })
            .collect();
        let initial_state = SystemState {
            arm: f.params.arm.initial_config,
            objects,
        };
        let params = Params {
            planner: f.params.planner,
            physics: f.params.physics,
            arm: f.params.arm.spec,
            transit: f.params.transit,
            execution: f.params.execution,
        };
        Self::new(
            f.workspace,
            f.shapes,
            f.obstacles,
            initial_state,
            f.goal_regions,
            f.task,
            params,
            f.noise_sigma,
            f.seed,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Ok(Self::from_file(file))
    }

    /// Loads and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let s = Self::from_json(&std::fs::read_to_string(path)?)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

/// On-disk layout. Lengths in meters, angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub workspace: Rect,
    pub shapes: Vec<Shape>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub objects: Vec<ObjectEntry>,
    #[serde(default)]
    pub goal_regions: Vec<Rect>,
    pub task: TaskSpec,
    #[serde(default)]
    pub params: FileParams,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub pose: Pose2,
    pub shape: usize,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct FileParams {
    pub planner: ParamSet,
    pub physics: PhysicsParams,
    pub arm: ArmEntry,
    pub transit: TransitParams,
    pub execution: ExecutionParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEntry {
    #[serde(flatten)]
    pub spec: ArmSpec,
    #[serde(default = "default_home")]
    pub initial_config: JointConfig,
}

impl Default for ArmEntry {
    fn default() -> Self {
        Self {
            spec: ArmSpec::default(),
            initial_config: default_home(),
        }
    }
}

/// Tucked configuration of the default arm: the tip rests near the base,
/// just inside the near edge of the default table.
pub fn default_home() -> JointConfig {
    [-1.6, 2.15, 1.28]
}

/// The default 1.2 m x 0.8 m table in front of the arm base.
pub fn default_workspace() -> Rect {
    Rect::new([-0.6, 0.2], [0.6, 1.0])
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::geometry::Pose2;

    pub fn scenario_with(shapes: Vec<Shape>, objects: Vec<ObjectState>, obstacles: Vec<Obstacle>) -> Scenario {
        let state = SystemState {
            arm: default_home(),
            objects,
        };
        let task = TaskSpec::relocating(0, Rect::centered(0.3, 0.8, 0.2, 0.2));
        Scenario::new(
            default_workspace(),
            shapes,
            obstacles,
            state,
            vec![],
            task,
            Params::default(),
            0.0,
            1,
        )
    }

    /// `n` square objects spread on a grid away from the arm.
    pub fn open_scenario(n: usize) -> Scenario {
        let objects = (0..n)
            .map(|i| ObjectState {
                pose: Pose2::new(-0.4 + 0.2 * (i % 5) as f64, 0.55 + 0.2 * (i / 5) as f64, 0.0),
                shape_id: 0,
                class_id: 0,
            })
            .collect();
        scenario_with(vec![Shape::square(0.05)], objects, vec![])
    }
}
