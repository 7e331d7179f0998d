//! Kinodynamic rearrangement planning with a forest of RRTs.
//!
//! A 3-link planar arm pushes objects on a table. The planner grows
//! several kinodynamic trees rooted at different arm configurations,
//! reaches them with contact-free transit motions, and executes partial
//! solutions as soon as they make enough heuristic progress.

pub mod arm;
pub mod bench;
pub mod clock;
pub mod execution;
pub mod geometry;
pub mod physics;
pub mod planner;
pub mod registry;
pub mod render;
pub mod rng;
pub mod scenario;
pub mod task;
pub mod transit;
pub mod world;

pub use execution::{run_episode, run_trial, EpisodeResult, NoiseModel};
pub use planner::{MotionPair, ParamSet};
pub use scenario::Scenario;
pub use world::SystemState;
