//! Decision layer: every policy speaks natural language, which the runner
//! turns into actions with the rule-based parser.

pub mod oracle;
pub mod scripted;
pub mod vlm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{oracle_action, oracle_decide, step_seed, utterance, OracleConfig, OraclePolicy};
pub use scripted::{GreedyPolicy, NoisyOraclePolicy, ScriptedPolicy};
pub use vlm::{VlmClient, VlmEndpointConfig, VlmError};

use crate::actions::Action;
use crate::annotation::{Palette, RgbImage};
use crate::geometry::{AgentPose, CameraIntrinsics, DepthFrame, SemanticMask};
use crate::simenv::planner::PlanError;
use crate::simenv::{EpisodeSpec, World};

/// What an image-based policy sees at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput {
    pub instruction: String,
    pub asm: RgbImage,
    pub observation: RgbImage,
    /// Earlier observations, oldest first.
    pub history_frames: Vec<RgbImage>,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutput {
    pub text: String,
    /// `None` when the text matched no action rule.
    pub parsed: Option<Action>,
    pub latency_s: f64,
}

/// Everything a policy may consult for one decision. Privileged policies
/// (the oracle) read the world and pose; image policies read `input`.
pub struct DecisionContext<'a> {
    pub world: &'a World,
    pub spec: &'a EpisodeSpec,
    pub pose: AgentPose,
    pub step_index: usize,
    pub input: Option<&'a PolicyInput>,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Vlm(#[from] VlmError),
    #[error("policy needs image input but none was provided")]
    MissingInput,
}

pub trait Policy {
    /// Whether the runner must build a [`PolicyInput`] every step.
    fn needs_images(&self) -> bool {
        false
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Result<PolicyOutput, PolicyError>;
}

const SKY: [u8; 3] = [24, 24, 36];

/// Colorized first-person view: object pixels in their palette colour,
/// everything else shaded grey by depth, out-of-range pixels dark.
pub fn colorize_observation(
    depth: &DepthFrame,
    mask: &SemanticMask,
    intr: &CameraIntrinsics,
    palette: &Palette,
) -> RgbImage {
    let mut img = RgbImage::new(depth.width as u32, depth.height as u32, SKY);
    for v in 0..depth.height {
        for u in 0..depth.width {
            let d = depth.get(u, v);
            if !intr.is_valid_depth(d) {
                continue;
            }
            let cat = mask.get(u, v);
            let color = if cat > 0 && (cat as usize) <= palette.len() {
                palette.color(cat as usize - 1)
            } else {
                let g = (230.0 - 180.0 * (d / intr.depth_max).clamp(0.0, 1.0)) as u8;
                [g, g, g]
            };
            img.put(u as u32, v as u32, color);
        }
    }
    img
}
