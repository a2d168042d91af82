//! Longitudinal spacing control and the two geometric lateral laws.

mod lateral;
mod pid;

pub use lateral::{
    pure_pursuit_steer, resolve_lookahead, stanley_steer, LateralController, LateralErrors,
    Lookahead, PurePursuitConfig, StanleyConfig,
};
pub use pid::{pid_step, PidConfig, PidOutput, PidState};
