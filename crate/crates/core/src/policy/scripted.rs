use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::{oracle_decide, step_seed, utterance, OracleConfig};
use super::{DecisionContext, Policy, PolicyError, PolicyOutput};
use crate::actions::{default_ruleset, parse_action, Action, PatternRuleset};
use crate::geometry::normalize_angle;

/// Replays a fixed list of utterances, then repeats the last one.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    texts: Vec<String>,
    rules: PatternRuleset,
}

impl ScriptedPolicy {
    pub fn new<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        let texts: Vec<String> = texts.into_iter().map(Into::into).collect();
        assert!(!texts.is_empty(), "scripted policy needs at least one utterance");
        Self {
            texts,
            rules: default_ruleset(),
        }
    }

    pub fn constant(text: &str) -> Self {
        Self::new([text])
    }
}

impl Policy for ScriptedPolicy {
    fn decide(&mut self, ctx: &DecisionContext) -> Result<PolicyOutput, PolicyError> {
        let text = self.texts[ctx.step_index.min(self.texts.len() - 1)].clone();
        Ok(PolicyOutput {
            parsed: parse_action(&text, &self.rules).ok(),
            text,
            latency_s: 0.0,
        })
    }
}

/// The oracle, except that with probability `epsilon` it says a random
/// movement instead. A stand-in for an imperfect learned policy.
#[derive(Debug, Clone)]
pub struct NoisyOraclePolicy {
    pub cfg: OracleConfig,
    pub epsilon: f64,
    rules: PatternRuleset,
    rng: ChaCha8Rng,
    seed: u64,
}

impl NoisyOraclePolicy {
    pub fn new(cfg: OracleConfig, epsilon: f64, seed: u64) -> Self {
        Self {
            cfg,
            epsilon,
            rules: default_ruleset(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }
}

impl Policy for NoisyOraclePolicy {
    fn decide(&mut self, ctx: &DecisionContext) -> Result<PolicyOutput, PolicyError> {
        let phrasing = step_seed(self.seed, ctx.step_index);
        if self.rng.gen_bool(self.epsilon.clamp(0.0, 1.0)) {
            let a = [Action::Forward, Action::TurnLeft, Action::TurnRight][self.rng.gen_range(0..3)];
            return Ok(PolicyOutput {
                text: utterance(a, &self.rules, phrasing),
                parsed: Some(a),
                latency_s: 0.0,
            });
        }
        Ok(oracle_decide(
            ctx.world,
            &ctx.pose,
            ctx.spec,
            phrasing,
            &self.cfg,
            &self.rules,
        )?)
    }
}

/// Heads straight for the goal, ignoring walls: turns until roughly facing
/// it, then drives forward. Stops within `stop_radius`. Used to provoke
/// collisions.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    pub turn_angle: f64,
    pub stop_radius: f64,
    rules: PatternRuleset,
    seed: u64,
}

impl GreedyPolicy {
    pub fn new(turn_angle: f64, stop_radius: f64, seed: u64) -> Self {
        Self {
            turn_angle,
            stop_radius,
            rules: default_ruleset(),
            seed,
        }
    }
}

impl Policy for GreedyPolicy {
    fn decide(&mut self, ctx: &DecisionContext) -> Result<PolicyOutput, PolicyError> {
        let p = ctx.pose;
        let g = ctx.spec.goal;
        let action = if p.distance_to(g) <= self.stop_radius {
            Action::Stop
        } else {
            let err = normalize_angle((g[1] - p.y).atan2(g[0] - p.x) - p.yaw);
            if err > self.turn_angle / 2.0 {
                Action::TurnLeft
            } else if err < -self.turn_angle / 2.0 {
                Action::TurnRight
            } else {
                Action::Forward
            }
        };
        Ok(PolicyOutput {
            text: utterance(action, &self.rules, step_seed(self.seed, ctx.step_index)),
            parsed: Some(action),
            latency_s: 0.0,
        })
    }
}
