//! Closed-loop episode execution:
//! sense -> back-project -> grid -> map update -> annotate -> decide -> parse -> step.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::Action;
use crate::annotation::{annotate, AnnotationConfig, Palette, RgbImage};
use crate::geometry::{
    depth_to_points, project_to_grid, AgentPose, CameraIntrinsics, DepthFrame, GeometryError, HeightBand, SemanticMask,
};
use crate::metrics::{evaluate, MetricsError, NavMetrics, TrajectoryLog, DEFAULT_SUCCESS_RADIUS};
use crate::policy::{colorize_observation, DecisionContext, Policy, PolicyError, PolicyInput, PolicyOutput};
use crate::semantic_map::{CategoryTable, MapError, SemanticMap, DEFAULT_MAP_CELLS, DEFAULT_RESOLUTION};
use crate::simenv::{sense, AgentState, EpisodeSpec, MotionConfig, StepError, StepOutcome, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunnerConfig {
    pub intrinsics: CameraIntrinsics,
    pub map_cells: usize,
    pub map_resolution: f64,
    pub height_band: HeightBand,
    pub annotation: AnnotationConfig,
    pub motion: MotionConfig,
    pub success_radius: f64,
    /// Action taken when the policy's text matches no rule.
    pub nomatch_action: Action,
    /// Consecutive unparseable replies tolerated before the episode is cut.
    pub nomatch_budget: usize,
    /// Earlier observation frames kept for image policies.
    pub history_frames: usize,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default(),
            map_cells: DEFAULT_MAP_CELLS,
            map_resolution: DEFAULT_RESOLUTION,
            height_band: HeightBand::default(),
            annotation: AnnotationConfig::default(),
            motion: MotionConfig::default(),
            success_radius: DEFAULT_SUCCESS_RADIUS,
            nomatch_action: Action::TurnLeft,
            nomatch_budget: 10,
            history_frames: 2,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub text: String,
    /// Parse of `text`; `None` when the fallback action was used.
    pub parsed: Option<Action>,
    pub action: Action,
    pub collided: bool,
    pub pose: AgentPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRun {
    pub episode_id: String,
    pub log: TrajectoryLog,
    pub steps: Vec<StepTrace>,
    pub metrics: NavMetrics,
    /// Ended because the policy kept producing unparseable text.
    pub truncated: bool,
    pub nomatch_count: usize,
}

impl EpisodeRun {
    /// Deterministic JSON artifact (no timing information).
    pub fn trajectory_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run serializes") + "\n"
    }
}

/// One episode's mutable state: simulator, map and frame history.
pub struct EpisodeSession<'w> {
    world: &'w World,
    spec: EpisodeSpec,
    cfg: RunnerConfig,
    palette: Palette,
    map: SemanticMap,
    state: AgentState,
    depth: DepthFrame,
    mask: SemanticMask,
    history: VecDeque<RgbImage>,
    poses: Vec<AgentPose>,
    steps: Vec<StepTrace>,
}

impl<'w> EpisodeSession<'w> {
    /// Starts the episode and folds in the first observation.
    pub fn new(
        world: &'w World,
        spec: &EpisodeSpec,
        cfg: &RunnerConfig,
        categories: &CategoryTable,
    ) -> Result<Self, RunError> {
        cfg.intrinsics.validate()?;
        let map = SemanticMap::for_episode(
            cfg.map_cells,
            cfg.map_cells,
            cfg.map_resolution,
            &spec.start,
            categories.clone(),
            cfg.motion.agent_radius,
        )?;
        let (depth, mask) = sense(world, &spec.start, &cfg.intrinsics);
        let mut s = Self {
            world,
            spec: spec.clone(),
            cfg: cfg.clone(),
            palette: Palette::for_categories(categories.len()),
            map,
            state: AgentState::new(spec.start, spec.max_steps),
            depth,
            mask,
            history: VecDeque::new(),
            poses: vec![spec.start],
            steps: Vec::new(),
        };
        s.integrate()?;
        Ok(s)
    }

    fn integrate(&mut self) -> Result<(), RunError> {
        let pose = self.state.pose();
        let cloud = depth_to_points(&self.depth, &self.mask, &self.cfg.intrinsics, &pose)?;
        let hits = project_to_grid(&cloud, self.map.spec(), self.cfg.height_band);
        self.map.update(&hits, &pose)?;
        Ok(())
    }

    pub fn world(&self) -> &'w World {
        self.world
    }

    pub fn spec(&self) -> &EpisodeSpec {
        &self.spec
    }

    pub fn map(&self) -> &SemanticMap {
        &self.map
    }

    pub fn pose(&self) -> AgentPose {
        self.state.pose()
    }

    pub fn is_done(&self) -> bool {
        self.state.is_done()
    }

    pub fn step_index(&self) -> usize {
        self.state.steps_used()
    }

    pub fn palette(&self) -> &Palette {
        &self.palette
    }

    pub fn observation_image(&self) -> RgbImage {
        colorize_observation(&self.depth, &self.mask, &self.cfg.intrinsics, &self.palette)
    }

    pub fn asm_image(&self) -> RgbImage {
        annotate(&self.map, &self.cfg.annotation, &self.palette).image
    }

    pub fn policy_input(&self) -> PolicyInput {
        PolicyInput {
            instruction: self.spec.instruction.clone(),
            asm: self.asm_image(),
            observation: self.observation_image(),
            history_frames: self.history.iter().cloned().collect(),
            step_index: self.step_index(),
        }
    }

    pub fn decide(&self, policy: &mut dyn Policy) -> Result<PolicyOutput, PolicyError> {
        let input = policy.needs_images().then(|| self.policy_input());
        let ctx = DecisionContext {
            world: self.world,
            spec: &self.spec,
            pose: self.pose(),
            step_index: self.step_index(),
            input: input.as_ref(),
        };
        policy.decide(&ctx)
    }

    /// Executes `action`, then senses and updates the map at the new pose.
    pub fn apply(&mut self, action: Action, text: &str, parsed: Option<Action>) -> Result<StepOutcome, RunError> {
        let step = self.step_index();
        let out = self.state.step(self.world, action, &self.cfg.motion)?;
        if self.cfg.history_frames > 0 {
            if self.history.len() == self.cfg.history_frames {
                self.history.pop_front();
            }
            self.history.push_back(self.observation_image());
        }
        let (depth, mask) = sense(self.world, &out.new_pose, &self.cfg.intrinsics);
        self.depth = depth;
        self.mask = mask;
        self.integrate()?;
        self.poses.push(out.new_pose);
        self.steps.push(StepTrace {
            step,
            text: text.to_string(),
            parsed,
            action,
            collided: out.collided,
            pose: out.new_pose,
        });
        Ok(out)
    }

    pub fn trajectory(&self, stopped: bool) -> TrajectoryLog {
        TrajectoryLog {
            poses: self.poses.clone(),
            stopped,
            collisions: self.state.collisions(),
        }
    }

    pub fn steps(&self) -> &[StepTrace] {
        &self.steps
    }
}

/// Optional per-step outputs.
#[derive(Debug, Clone, Default)]
pub struct ArtifactOptions<'p> {
    /// Directory receiving `asm_NNNN.png` for every decision.
    pub asm_dir: Option<&'p Path>,
    /// Receives the final map snapshot.
    pub snapshot: Option<&'p Path>,
}

/// Runs `policy` until STOP, the step budget, or too many unparseable
/// replies; unparseable replies fall back to `cfg.nomatch_action`.
pub fn run_episode(
    world: &World,
    spec: &EpisodeSpec,
    policy: &mut dyn Policy,
    cfg: &RunnerConfig,
    categories: &CategoryTable,
    artifacts: &ArtifactOptions,
) -> Result<EpisodeRun, RunError> {
    let mut session = EpisodeSession::new(world, spec, cfg, categories)?;
    let mut stopped = false;
    let mut truncated = false;
    let mut nomatch_count = 0;
    let mut consecutive = 0;
    while !session.is_done() {
        if let Some(dir) = artifacts.asm_dir {
            let path = dir.join(format!("asm_{:04}.png", session.step_index()));
            session.asm_image().save_png(&path).map_err(|source| RunError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        let out = session.decide(policy)?;
        let action = match out.parsed {
            Some(a) => {
                consecutive = 0;
                a
            }
            None => {
                nomatch_count += 1;
                consecutive += 1;
                if consecutive > cfg.nomatch_budget {
                    truncated = true;
                    break;
                }
                cfg.nomatch_action
            }
        };
        session.apply(action, &out.text, out.parsed)?;
        stopped = action == Action::Stop;
    }
    if let Some(path) = artifacts.snapshot {
        std::fs::write(path, session.map().to_snapshot()).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    let log = session.trajectory(stopped);
    let metrics = evaluate(&log, spec, cfg.success_radius)?;
    Ok(EpisodeRun {
        episode_id: spec.episode_id.clone(),
        log,
        steps: session.steps().to_vec(),
        metrics,
        truncated,
        nomatch_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{OracleConfig, OraclePolicy, ScriptedPolicy};
    use crate::simenv::{generate_episodes, EpisodeGenConfig};

    fn world() -> World {
        let mut text = String::from("name unit_room\nresolution 0.05\nblock 4\ncategory c chair 0.45\ngrid\n");
        for r in 0..30 {
            let row: String = (0..30)
                .map(|c| match (r, c) {
                    (0 | 29, _) | (_, 0 | 29) => '#',
                    (12, 4..=18) => '#',
                    (20..=21, 20..=21) => 'c',
                    _ => '.',
                })
                .collect();
            text.push_str(&row);
            text.push('\n');
        }
        World::parse(&text, &CategoryTable::default_indoor()).unwrap()
    }

    fn small_cfg() -> RunnerConfig {
        RunnerConfig {
            map_cells: 256,
            ..Default::default()
        }
    }

    #[test]
    fn oracle_episode_succeeds() {
        let w = world();
        let eps = generate_episodes(&w, 3, 11, &EpisodeGenConfig::default()).unwrap();
        for e in &eps {
            let mut p = OraclePolicy::new(OracleConfig::default(), 5);
            let run = run_episode(
                &w,
                e,
                &mut p,
                &small_cfg(),
                &CategoryTable::default_indoor(),
                &Default::default(),
            )
            .unwrap();
            assert_eq!(run.metrics.sr, 1.0, "{}", e.episode_id);
            assert_eq!(run.log.collisions, 0);
            assert_eq!(run.log.poses.len(), run.steps.len() + 1);
            assert!(run.steps.iter().all(|s| s.parsed == Some(s.action)));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let w = world();
        let e = &generate_episodes(&w, 1, 2, &EpisodeGenConfig::default()).unwrap()[0];
        let go = || {
            let mut p = OraclePolicy::new(OracleConfig::default(), 9);
            run_episode(
                &w,
                e,
                &mut p,
                &small_cfg(),
                &CategoryTable::default_indoor(),
                &Default::default(),
            )
            .unwrap()
            .trajectory_json()
        };
        assert_eq!(go(), go());
    }

    #[test]
    fn nomatch_falls_back_then_truncates() {
        let w = world();
        let e = &generate_episodes(&w, 1, 2, &EpisodeGenConfig::default()).unwrap()[0];
        let cfg = RunnerConfig {
            nomatch_budget: 3,
            ..small_cfg()
        };
        let mut p = ScriptedPolicy::new(["hmm", "turn right", "no idea", "??", "what", "nothing"]);
        let run = run_episode(
            &w,
            e,
            &mut p,
            &cfg,
            &CategoryTable::default_indoor(),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(run.steps[0].action, Action::TurnLeft);
        assert_eq!(run.steps[0].parsed, None);
        assert_eq!(run.steps[1].action, Action::TurnRight);
        assert!(run.truncated);
        assert_eq!(run.steps.len(), 5);
        assert_eq!(run.metrics.sr, 0.0);
    }
}
