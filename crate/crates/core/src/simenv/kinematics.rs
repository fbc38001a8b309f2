use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::world::World;
use crate::actions::Action;
use crate::geometry::{normalize_angle, AgentPose};
use crate::semantic_map::DEFAULT_AGENT_RADIUS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    pub forward_step: f64,
    pub turn_angle_deg: f64,
    pub agent_radius: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            forward_step: 0.25,
            turn_angle_deg: 15.0,
            agent_radius: DEFAULT_AGENT_RADIUS,
        }
    }
}

impl MotionConfig {
    pub fn turn_angle(&self) -> f64 {
        self.turn_angle_deg.to_radians()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub new_pose: AgentPose,
    pub collided: bool,
    pub done: bool,
    pub steps_used: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    #[error("episode already finished")]
    EpisodeDone,
}

/// Pose after moving `pose` forward one step, or `None` if the swept agent
/// disk would touch a non-free cell.
pub fn forward_target(world: &World, pose: &AgentPose, cfg: &MotionConfig) -> Option<AgentPose> {
    let (sin, cos) = pose.yaw.sin_cos();
    let to = [pose.x + cfg.forward_step * cos, pose.y + cfg.forward_step * sin];
    if world.sweep_collides(pose.position(), to, cfg.agent_radius) {
        None
    } else {
        Some(AgentPose {
            x: to[0],
            y: to[1],
            ..*pose
        })
    }
}

/// Agent state over one episode. Heading is kept as the start yaw plus an
/// integer number of turns so that opposite rotations cancel exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pose: AgentPose,
    start_yaw: f64,
    turns: i64,
    steps_used: usize,
    max_steps: usize,
    done: bool,
    collisions: usize,
}

impl AgentState {
    pub fn new(start: AgentPose, max_steps: usize) -> Self {
        Self {
            pose: start,
            start_yaw: start.yaw,
            turns: 0,
            steps_used: 0,
            max_steps,
            done: max_steps == 0,
            collisions: 0,
        }
    }

    pub fn pose(&self) -> AgentPose {
        self.pose
    }

    pub fn steps_used(&self) -> usize {
        self.steps_used
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn collisions(&self) -> usize {
        self.collisions
    }

    pub fn step(&mut self, world: &World, action: Action, cfg: &MotionConfig) -> Result<StepOutcome, StepError> {
        if self.done {
            return Err(StepError::EpisodeDone);
        }
        let mut collided = false;
        match action {
            Action::Forward => match forward_target(world, &self.pose, cfg) {
                Some(p) => self.pose = p,
                None => {
                    collided = true;
                    self.collisions += 1;
                }
            },
            Action::TurnLeft | Action::TurnRight => {
                self.turns += if action == Action::TurnLeft { 1 } else { -1 };
                self.pose.yaw = if self.turns == 0 {
                    self.start_yaw
                } else {
                    normalize_angle(self.start_yaw + self.turns as f64 * cfg.turn_angle())
                };
            }
            Action::Stop => self.done = true,
        }
        self.steps_used += 1;
        if self.steps_used >= self.max_steps {
            self.done = true;
        }
        Ok(StepOutcome {
            new_pose: self.pose,
            collided,
            done: self.done,
            steps_used: self.steps_used,
        })
    }
}
