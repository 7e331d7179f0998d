//! Time sources for the planning budget.
//!
//! The virtual clock charges planner work through a fixed cost model, so an
//! episode's timing (and therefore its outcome) does not depend on the host.
//! The wall clock measures real elapsed time instead.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::registry::Registry;

/// Planner work done since the last charge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Work {
    /// Physics substeps simulated.
    pub substeps: usize,
    /// Configuration validity checks made by transit queries.
    pub checks: usize,
    /// Inverse-kinematics solves.
    pub ik_solves: usize,
}

impl Work {
    pub fn add(&mut self, other: Work) {
        self.substeps += other.substeps;
        self.checks += other.checks;
        self.ik_solves += other.ik_solves;
    }

    pub fn is_empty(&self) -> bool {
        *self == Work::default()
    }
}

/// Seconds charged per unit of work by the virtual clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub substep: f64,
    pub check: f64,
    pub ik_solve: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            substep: 1e-4,
            check: 5e-6,
            ik_solve: 5e-4,
        }
    }
}

impl CostModel {
    pub fn seconds(&self, w: &Work) -> f64 {
        w.substeps as f64 * self.substep + w.checks as f64 * self.check + w.ik_solves as f64 * self.ik_solve
    }
}

pub trait Clock: Send {
    fn name(&self) -> &'static str;
    /// Seconds since the episode started.
    fn now(&self) -> f64;
    /// Accounts for planner computation.
    fn charge(&mut self, work: Work);
    /// Accounts for simulated execution time.
    fn advance(&mut self, seconds: f64);
}

pub struct VirtualClock {
    cost: CostModel,
    elapsed: f64,
}

impl VirtualClock {
    pub fn new(cost: CostModel) -> Self {
        Self { cost, elapsed: 0.0 }
    }
}

impl Clock for VirtualClock {
    fn name(&self) -> &'static str {
        "virtual"
    }

    fn now(&self) -> f64 {
        self.elapsed
    }

    fn charge(&mut self, work: Work) {
        self.elapsed += self.cost.seconds(&work);
    }

    fn advance(&mut self, seconds: f64) {
        self.elapsed += seconds;
    }
}

pub struct WallClock {
    start: Instant,
    executed: f64,
}

impl WallClock {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            executed: 0.0,
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn name(&self) -> &'static str {
        "wall"
    }

    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64() + self.executed
    }

    fn charge(&mut self, _work: Work) {}

    fn advance(&mut self, seconds: f64) {
        self.executed += seconds;
    }
}

pub type ClockFactory = fn(&CostModel) -> Box<dyn Clock>;

fn registry() -> &'static Registry<ClockFactory> {
    static REGISTRY: std::sync::OnceLock<Registry<ClockFactory>> = std::sync::OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<ClockFactory> = Registry::new();
        r.register("virtual", |c| Box::new(VirtualClock::new(c.clone())));
        r.register("wall", |_| Box::new(WallClock::new()));
        r
    })
}

pub fn names() -> Vec<&'static str> {
    registry().names()
}

pub fn make(name: &str, cost: &CostModel) -> Option<Box<dyn Clock>> {
    registry().get(name).map(|f| f(cost))
}
