//! Minimal deterministic 2.5D indoor simulator: worlds, sensing, motion,
//! planning and episodes.

pub mod episode;
pub mod kinematics;
pub mod planner;
pub mod raycast;
pub mod sensor;
pub mod world;

pub use episode::{generate_episodes, load_episodes, save_episodes, EpisodeError, EpisodeGenConfig, EpisodeSpec};
pub use kinematics::{forward_target, AgentState, MotionConfig, StepError, StepOutcome};
pub use planner::{plan, PlanError, PlannerConfig};
pub use sensor::render as sense;
pub use world::{CellKind, World, WorldError};
