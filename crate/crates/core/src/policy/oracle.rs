//! Expert controller: A* on the world grid, line-of-sight waypoint, and a
//! rotate-or-forward rule on the agent's heading lattice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DecisionContext, Policy, PolicyError, PolicyOutput};
use crate::actions::{default_ruleset, Action, PatternRuleset};
use crate::geometry::{normalize_angle, AgentPose};
use crate::simenv::planner::{line_of_sight, plan, PlanError, PlannerConfig};
use crate::simenv::{forward_target, EpisodeSpec, MotionConfig, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// The oracle stops once this close to the goal. Kept well inside the
    /// metric success radius.
    pub stop_radius: f64,
    pub planner: PlannerConfig,
    pub motion: MotionConfig,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            stop_radius: 0.5,
            planner: PlannerConfig::default(),
            motion: MotionConfig::default(),
        }
    }
}

/// Wrappers the chosen phrase is embedded in. None contain a ruleset keyword.
const TEMPLATES: [&str; 5] = [
    "{}",
    "I will {} now.",
    "Next I should {}.",
    "Best action: {}.",
    "{} seems right.",
];

/// The discrete action the expert takes at `pose`.
///
/// Candidate headings are the current yaw plus whole turns. The oracle picks
/// the one closest to the bearing of the farthest visible path waypoint
/// among those whose forward step is collision-free, and rotates toward it
/// (or moves forward if it is the current heading). Without obstructions
/// this is the usual rule: rotate while the heading error exceeds half a
/// turn, else go forward. Since the candidate set is invariant under the
/// agent's own rotations, the choice cannot oscillate.
pub fn oracle_action(world: &World, pose: &AgentPose, goal: [f64; 2], cfg: &OracleConfig) -> Result<Action, PlanError> {
    if pose.distance_to(goal) <= cfg.stop_radius {
        return Ok(Action::Stop);
    }
    let cells = plan(world, pose.position(), goal, &cfg.planner)?;
    let mut pts: Vec<[f64; 2]> = cells.iter().map(|&c| world.cell_center(c)).collect();
    *pts.last_mut().expect("path has the goal cell") = goal;

    let here = world.cell_at(pose.x, pose.y).expect("planned from a free cell");
    let threshold = cfg.planner.preferred_clearance().min(world.clearance(here));
    let target = pts
        .iter()
        .rev()
        .find(|&&p| line_of_sight(world, pose.position(), p, threshold))
        .copied()
        .unwrap_or(pts[1.min(pts.len() - 1)]);
    let bearing = (target[1] - pose.y).atan2(target[0] - pose.x);

    let turn = cfg.motion.turn_angle();
    let half = (std::f64::consts::PI / turn).round() as i64;
    let mut best: Option<(f64, i64)> = None;
    for k in (0..=half).flat_map(|k| if k == 0 { vec![0] } else { vec![k, -k] }) {
        let heading = normalize_angle(pose.yaw + k as f64 * turn);
        let err = normalize_angle(bearing - heading).abs();
        if best.is_some_and(|(e, _)| err >= e - 1e-12) {
            continue;
        }
        if forward_target(world, &AgentPose { yaw: heading, ..*pose }, &cfg.motion).is_some() {
            best = Some((err, k));
        }
    }
    Ok(match best {
        Some((_, 0)) => Action::Forward,
        Some((_, k)) if k < 0 => Action::TurnRight,
        _ => Action::TurnLeft,
    })
}

/// Deterministic natural-language rendering of `action`.
pub fn utterance(action: Action, rules: &PatternRuleset, phrasing_seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(phrasing_seed);
    let phrases: Vec<&str> = rules.phrases(action).collect();
    let phrase = phrases[rng.gen_range(0..phrases.len())];
    let template = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
    let mut text = template.replacen("{}", phrase, 1);
    if template.starts_with("{}") {
        // sentence case for phrases leading the utterance
        let mut chars = text.chars();
        if let Some(first) = chars.next() {
            text = first.to_uppercase().chain(chars).collect();
        }
    }
    text
}

pub fn oracle_decide(
    world: &World,
    pose: &AgentPose,
    spec: &EpisodeSpec,
    phrasing_seed: u64,
    cfg: &OracleConfig,
    rules: &PatternRuleset,
) -> Result<PolicyOutput, PlanError> {
    let action = oracle_action(world, pose, spec.goal, cfg)?;
    Ok(PolicyOutput {
        text: utterance(action, rules, phrasing_seed),
        parsed: Some(action),
        latency_s: 0.0,
    })
}

/// Per-step phrasing seed derived from a run seed.
pub fn step_seed(seed: u64, step: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct OraclePolicy {
    pub cfg: OracleConfig,
    pub rules: PatternRuleset,
    pub seed: u64,
}

impl OraclePolicy {
    pub fn new(cfg: OracleConfig, seed: u64) -> Self {
        Self {
            cfg,
            rules: default_ruleset(),
            seed,
        }
    }
}

impl Policy for OraclePolicy {
    fn decide(&mut self, ctx: &DecisionContext) -> Result<PolicyOutput, PolicyError> {
        let mut out = oracle_decide(
            ctx.world,
            &ctx.pose,
            ctx.spec,
            step_seed(self.seed, ctx.step_index),
            &self.cfg,
            &self.rules,
        )?;
        // the label is text; what the runner acts on is its parse
        out.parsed = crate::actions::parse_action(&out.text, &self.rules).ok();
        Ok(out)
    }
}
