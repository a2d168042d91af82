//! Simulation core for a three-vehicle predecessor-following platoon: chassis
//! kinematics, spacing and steering controllers, a marker-camera model, the
//! fixed-step closed-loop engine and trace analysis.

pub mod analysis;
pub mod angle;
pub mod control;
pub mod numfmt;
pub mod perception;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod vehicle;

pub use scenario::{load_scenario, ScenarioError, ScenarioSpec};
pub use sim::{run_scenario, Simulation};
