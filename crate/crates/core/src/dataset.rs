//! Step-wise training pairs in three phases: expert demonstrations (GT),
//! expert relabelling of another policy's rollouts (DAGGER) and expert
//! recovery after collisions (COLLISION).
//!
//! Layout under the dataset root:
//!
//! ```text
//! manifest.json
//! <phase>/<episode_id>/records.jsonl
//! <phase>/<episode_id>/obs_NNNN.png
//! <phase>/<episode_id>/asm_NNNN.png
//! ```
//!
//! Paths inside records are relative to the root.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actions::{default_ruleset, parse_action, Action, PatternRuleset};
use crate::geometry::AgentPose;
use crate::policy::{
    oracle_action, oracle_decide, step_seed, GreedyPolicy, OracleConfig, Policy, PolicyError, PolicyOutput,
};
use crate::runner::{EpisodeSession, RunError, RunnerConfig};
use crate::semantic_map::CategoryTable;
use crate::simenv::{EpisodeSpec, World};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Phase {
    Gt,
    Dagger,
    Collision,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Gt, Phase::Dagger, Phase::Collision];

    pub fn dir_name(self) -> &'static str {
        match self {
            Phase::Gt => "gt",
            Phase::Dagger => "dagger",
            Phase::Collision => "collision",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Gt => "GT",
            Phase::Dagger => "DAGGER",
            Phase::Collision => "COLLISION",
        })
    }
}

/// One training pair: the inputs the navigation model sees and the expert's
/// label. `pose` and `goal` pin down the simulator state so labels can be
/// re-derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode_id: String,
    pub scene: String,
    /// Index of the record within its episode file.
    pub step: usize,
    /// Simulator step at which the record was taken.
    pub sim_step: usize,
    pub observation_ref: String,
    pub asm_ref: String,
    pub instruction: String,
    pub action_text: String,
    pub action: Action,
    pub phase: Phase,
    pub pose: AgentPose,
    pub goal: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Complete,
    /// Cut short (step budget, NoMatch budget, or recovery cap).
    Truncated,
    /// Not collected, e.g. the goal is unreachable.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub episode_id: String,
    pub scene: String,
    pub records: usize,
    pub status: EpisodeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseInfo {
    pub config_sha256: String,
    pub seed: u64,
    /// Policy whose rollouts visited the recorded states.
    pub rollout: String,
    pub episodes: Vec<EpisodeEntry>,
}

impl PhaseInfo {
    pub fn records(&self) -> usize {
        self.episodes.iter().map(|e| e.records).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub gt: usize,
    pub dagger: usize,
    pub collision: usize,
    pub total: usize,
}

impl PhaseCounts {
    pub fn get(&self, phase: Phase) -> usize {
        match phase {
            Phase::Gt => self.gt,
            Phase::Dagger => self.dagger,
            Phase::Collision => self.collision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub counts: PhaseCounts,
    pub phases: BTreeMap<Phase, PhaseInfo>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            counts: PhaseCounts::default(),
            phases: BTreeMap::new(),
        }
    }
}

impl DatasetManifest {
    pub fn load(root: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = root.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|source| DatasetError::Json {
            path: path.display().to_string(),
            line: 0,
            source,
        })?;
        if m.format_version != FORMAT_VERSION {
            return Err(DatasetError::Version(m.format_version));
        }
        Ok(m)
    }

    fn recount(&mut self) {
        let n = |p| self.phases.get(&p).map_or(0, PhaseInfo::records);
        let (gt, dagger, collision) = (n(Phase::Gt), n(Phase::Dagger), n(Phase::Collision));
        self.counts = PhaseCounts {
            gt,
            dagger,
            collision,
            total: gt + dagger + collision,
        };
    }

    fn save(&self, root: &Path) -> Result<(), DatasetError> {
        let path = root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported dataset format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("episode {episode} refers to unknown scene {scene:?}")]
    UnknownScene { episode: String, scene: String },
    #[error("episode id {0:?} is not a safe directory name")]
    BadEpisodeId(String),
    #[error("duplicate episode id {0:?}")]
    DuplicateEpisode(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    pub runner: RunnerConfig,
    pub oracle: OracleConfig,
    /// Seeds label phrasing and rollout utterances.
    pub seed: u64,
    /// Collision sequences recorded per episode before the episode is cut.
    pub max_recoveries: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            runner: RunnerConfig::default(),
            oracle: OracleConfig::default(),
            seed: 0,
            max_recoveries: 3,
        }
    }
}

impl CollectConfig {
    /// Digest of everything that shapes a phase's records.
    pub fn sha256(&self, phase: Phase, rollout: &str) -> String {
        let v = serde_json::json!({ "phase": phase, "rollout": rollout, "config": self });
        hex(&Sha256::digest(v.to_string().as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the rollout policy for one episode.
pub type PolicyFactory<'a> = dyn Fn(&EpisodeSpec) -> Box<dyn Policy + Send> + Sync + 'a;

struct EpisodeWriter<'a> {
    root: &'a Path,
    rel: String,
    spec: &'a EpisodeSpec,
    phase: Phase,
    records: Vec<StepRecord>,
}

impl<'a> EpisodeWriter<'a> {
    fn create(root: &'a Path, phase: Phase, spec: &'a EpisodeSpec) -> Result<Self, DatasetError> {
        let rel = format!("{}/{}", phase.dir_name(), spec.episode_id);
        let dir = root.join(&rel);
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self {
            root,
            rel,
            spec,
            phase,
            records: Vec::new(),
        })
    }

    fn record(&mut self, session: &EpisodeSession, label: &PolicyOutput) -> Result<(), DatasetError> {
        let step = self.records.len();
        let action = label.parsed.expect("expert labels always parse");
        let obs = format!("{}/obs_{step:04}.png", self.rel);
        let asm = format!("{}/asm_{step:04}.png", self.rel);
        for (rel, img) in [(&obs, session.observation_image()), (&asm, session.asm_image())] {
            let path = self.root.join(rel);
            img.save_png(&path).map_err(|e| io_err(&path, e))?;
        }
        self.records.push(StepRecord {
            episode_id: self.spec.episode_id.clone(),
            scene: self.spec.scene.clone(),
            step,
            sim_step: session.step_index(),
            observation_ref: obs,
            asm_ref: asm,
            instruction: self.spec.instruction.clone(),
            action_text: label.text.clone(),
            action,
            phase: self.phase,
            pose: session.pose(),
            goal: self.spec.goal,
        });
        Ok(())
    }

    fn finish(self, status: EpisodeStatus, note: Option<String>) -> Result<EpisodeEntry, DatasetError> {
        let path = self.root.join(&self.rel).join(RECORDS_FILE);
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| io_err(&path, e))?);
        for r in &self.records {
            serde_json::to_writer(&mut f, r).expect("record serializes");
            f.write_all(b"\n").map_err(|e| io_err(&path, e))?;
        }
        f.flush().map_err(|e| io_err(&path, e))?;
        Ok(EpisodeEntry {
            episode_id: self.spec.episode_id.clone(),
            scene: self.spec.scene.clone(),
            records: self.records.len(),
            status,
            note,
        })
    }
}

struct Ctx<'a> {
    root: &'a Path,
    cfg: &'a CollectConfig,
    categories: &'a CategoryTable,
    rules: PatternRuleset,
}

impl Ctx<'_> {
    fn label(&self, session: &EpisodeSession) -> Result<PolicyOutput, crate::simenv::PlanError> {
        oracle_decide(
            session.world(),
            &session.pose(),
            session.spec(),
            step_seed(self.cfg.seed, session.step_index()),
            &self.cfg.oracle,
            &self.rules,
        )
    }
}

fn gt_episode(ctx: &Ctx, world: &World, spec: &EpisodeSpec) -> Result<EpisodeEntry, DatasetError> {
    let mut w = EpisodeWriter::create(ctx.root, Phase::Gt, spec)?;
    let mut session = EpisodeSession::new(world, spec, &ctx.cfg.runner, ctx.categories)?;
    while !session.is_done() {
        let label = match ctx.label(&session) {
            Ok(l) => l,
            Err(e) if w.records.is_empty() => return w.finish(EpisodeStatus::Skipped, Some(e.to_string())),
            Err(e) => return w.finish(EpisodeStatus::Truncated, Some(e.to_string())),
        };
        w.record(&session, &label)?;
        let a = label.parsed.expect("expert labels always parse");
        session.apply(a, &label.text, label.parsed)?;
        if a == Action::Stop {
            return w.finish(EpisodeStatus::Complete, None);
        }
    }
    w.finish(EpisodeStatus::Truncated, Some("step budget exhausted".into()))
}

fn dagger_episode(
    ctx: &Ctx,
    world: &World,
    spec: &EpisodeSpec,
    policy: &mut dyn Policy,
) -> Result<EpisodeEntry, DatasetError> {
    let mut w = EpisodeWriter::create(ctx.root, Phase::Dagger, spec)?;
    let mut session = EpisodeSession::new(world, spec, &ctx.cfg.runner, ctx.categories)?;
    let mut consecutive = 0;
    while !session.is_done() {
        let label = match ctx.label(&session) {
            Ok(l) => l,
            Err(e) if w.records.is_empty() => return w.finish(EpisodeStatus::Skipped, Some(e.to_string())),
            Err(e) => return w.finish(EpisodeStatus::Truncated, Some(e.to_string())),
        };
        w.record(&session, &label)?;
        let out = session.decide(policy)?;
        let action = match out.parsed {
            Some(a) => {
                consecutive = 0;
                a
            }
            None => {
                consecutive += 1;
                if consecutive > ctx.cfg.runner.nomatch_budget {
                    return w.finish(
                        EpisodeStatus::Truncated,
                        Some("rollout policy exceeded the NoMatch budget".into()),
                    );
                }
                ctx.cfg.runner.nomatch_action
            }
        };
        session.apply(action, &out.text, out.parsed)?;
        if action == Action::Stop {
            return w.finish(EpisodeStatus::Complete, None);
        }
    }
    w.finish(EpisodeStatus::Truncated, Some("step budget exhausted".into()))
}

/// Greedy straight-line rollout; after every collision the expert takes
/// over and each of its actions is recorded up to and including its next
/// FORWARD (or STOP), then the greedy rollout resumes.
fn collision_episode(ctx: &Ctx, world: &World, spec: &EpisodeSpec) -> Result<EpisodeEntry, DatasetError> {
    let mut w = EpisodeWriter::create(ctx.root, Phase::Collision, spec)?;
    let mut session = EpisodeSession::new(world, spec, &ctx.cfg.runner, ctx.categories)?;
    let mut greedy = GreedyPolicy::new(
        ctx.cfg.runner.motion.turn_angle(),
        ctx.cfg.oracle.stop_radius,
        ctx.cfg.seed,
    );
    let mut recoveries = 0;
    while !session.is_done() {
        let out = session.decide(&mut greedy)?;
        let action = out.parsed.unwrap_or(ctx.cfg.runner.nomatch_action);
        let step = session.apply(action, &out.text, out.parsed)?;
        if action == Action::Stop {
            return w.finish(EpisodeStatus::Complete, None);
        }
        if !step.collided {
            continue;
        }
        // the greedy stop radius equals the oracle's, and a blocked pose
        // cannot move forward, so the first expert label is a rotation
        let mut first = true;
        while !session.is_done() {
            let label = match ctx.label(&session) {
                Ok(l) => l,
                Err(e) => return w.finish(EpisodeStatus::Truncated, Some(e.to_string())),
            };
            let a = label.parsed.expect("expert labels always parse");
            if first && !a.is_rotation() {
                return Err(DatasetError::Invalid(format!(
                    "{}: expert answered {a} right after a collision",
                    spec.episode_id
                )));
            }
            first = false;
            w.record(&session, &label)?;
            session.apply(a, &label.text, label.parsed)?;
            if a == Action::Stop {
                return w.finish(EpisodeStatus::Complete, None);
            }
            if !a.is_rotation() {
                break;
            }
        }
        recoveries += 1;
        if recoveries >= ctx.cfg.max_recoveries {
            return w.finish(EpisodeStatus::Truncated, Some("recovery cap reached".into()));
        }
    }
    w.finish(EpisodeStatus::Truncated, Some("step budget exhausted".into()))
}

fn check_inputs<'w>(worlds: &'w [World], episodes: &[EpisodeSpec]) -> Result<Vec<&'w World>, DatasetError> {
    let mut seen = BTreeSet::new();
    episodes
        .iter()
        .map(|e| {
            let safe = !e.episode_id.is_empty()
                && !e.episode_id.starts_with('.')
                && e.episode_id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c));
            if !safe {
                return Err(DatasetError::BadEpisodeId(e.episode_id.clone()));
            }
            if !seen.insert(&e.episode_id) {
                return Err(DatasetError::DuplicateEpisode(e.episode_id.clone()));
            }
            worlds
                .iter()
                .find(|w| w.name == e.scene)
                .ok_or_else(|| DatasetError::UnknownScene {
                    episode: e.episode_id.clone(),
                    scene: e.scene.clone(),
                })
        })
        .collect()
}

type EpisodeFn<'a> = dyn Fn(&Ctx, &World, &EpisodeSpec) -> Result<EpisodeEntry, DatasetError> + Sync + 'a;

/// Replaces `phase` in the dataset at `root`, leaving other phases intact.
#[allow(clippy::too_many_arguments)]
fn collect_phase(
    phase: Phase,
    rollout: &str,
    worlds: &[World],
    episodes: &[EpisodeSpec],
    root: &Path,
    cfg: &CollectConfig,
    categories: &CategoryTable,
    run: &EpisodeFn,
) -> Result<DatasetManifest, DatasetError> {
    let scenes = check_inputs(worlds, episodes)?;
    std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    let mut manifest = if root.join(MANIFEST_FILE).exists() {
        DatasetManifest::load(root)?
    } else {
        DatasetManifest::default()
    };
    let phase_dir = root.join(phase.dir_name());
    if phase_dir.exists() {
        std::fs::remove_dir_all(&phase_dir).map_err(|e| io_err(&phase_dir, e))?;
    }
    std::fs::create_dir_all(&phase_dir).map_err(|e| io_err(&phase_dir, e))?;
    let ctx = Ctx {
        root,
        cfg,
        categories,
        rules: default_ruleset(),
    };
    let entries = episodes
        .par_iter()
        .zip(scenes)
        .map(|(spec, world)| run(&ctx, world, spec))
        .collect::<Result<Vec<_>, _>>()?;
    manifest.phases.insert(
        phase,
        PhaseInfo {
            config_sha256: cfg.sha256(phase, rollout),
            seed: cfg.seed,
            rollout: rollout.to_string(),
            episodes: entries,
        },
    );
    manifest.recount();
    manifest.save(root)?;
    Ok(manifest)
}

/// Phase I: expert rollouts labelled by the expert.
pub fn collect_gt(
    worlds: &[World],
    episodes: &[EpisodeSpec],
    out_dir: impl AsRef<Path>,
    cfg: &CollectConfig,
    categories: &CategoryTable,
) -> Result<DatasetManifest, DatasetError> {
    collect_phase(
        Phase::Gt,
        "oracle",
        worlds,
        episodes,
        out_dir.as_ref(),
        cfg,
        categories,
        &gt_episode,
    )
}

/// Phase II: states visited by `rollout`'s policies, labelled by the expert.
pub fn collect_dagger(
    worlds: &[World],
    episodes: &[EpisodeSpec],
    rollout_name: &str,
    rollout: &PolicyFactory,
    out_dir: impl AsRef<Path>,
    cfg: &CollectConfig,
    categories: &CategoryTable,
) -> Result<DatasetManifest, DatasetError> {
    let run = |ctx: &Ctx, world: &World, spec: &EpisodeSpec| {
        let mut policy = rollout(spec);
        dagger_episode(ctx, world, spec, policy.as_mut())
    };
    collect_phase(
        Phase::Dagger,
        rollout_name,
        worlds,
        episodes,
        out_dir.as_ref(),
        cfg,
        categories,
        &run,
    )
}

/// Phase III: expert recovery sequences after collisions provoked by a
/// greedy straight-to-goal rollout.
pub fn collect_collision(
    worlds: &[World],
    episodes: &[EpisodeSpec],
    out_dir: impl AsRef<Path>,
    cfg: &CollectConfig,
    categories: &CategoryTable,
) -> Result<DatasetManifest, DatasetError> {
    collect_phase(
        Phase::Collision,
        "greedy",
        worlds,
        episodes,
        out_dir.as_ref(),
        cfg,
        categories,
        &collision_episode,
    )
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<StepRecord>, DatasetError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| DatasetError::Json {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

/// Every record of `phase`, in manifest order.
pub fn phase_records(
    root: impl AsRef<Path>,
    manifest: &DatasetManifest,
    phase: Phase,
) -> Result<Vec<StepRecord>, DatasetError> {
    let root = root.as_ref();
    let Some(info) = manifest.phases.get(&phase) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for e in &info.episodes {
        out.extend(read_records(
            root.join(phase.dir_name()).join(&e.episode_id).join(RECORDS_FILE),
        )?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub counts: PhaseCounts,
    pub episodes: usize,
    /// Collision sequences (maximal runs of rotations ending in a
    /// non-rotation) found in the COLLISION phase.
    pub collision_sequences: usize,
}

/// Checks manifest counts against the records on disk, file references,
/// step contiguity, phase tags, and that every label parses to its action.
pub fn validate(root: impl AsRef<Path>) -> Result<ValidationReport, DatasetError> {
    let root = root.as_ref();
    let manifest = DatasetManifest::load(root)?;
    let rules = default_ruleset();
    let bad = |msg: String| Err(DatasetError::Invalid(msg));
    let mut counts = PhaseCounts::default();
    let mut episodes = 0;
    let mut collision_sequences = 0;
    for phase in Phase::ALL {
        let dir = root.join(phase.dir_name());
        let Some(info) = manifest.phases.get(&phase) else {
            if dir.exists() {
                return bad(format!(
                    "{} exists but the manifest has no {phase} phase",
                    dir.display()
                ));
            }
            continue;
        };
        if info.config_sha256.len() != 64 || !info.config_sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
            return bad(format!("{phase}: malformed config hash"));
        }
        let listed: BTreeSet<&str> = info.episodes.iter().map(|e| e.episode_id.as_str()).collect();
        if listed.len() != info.episodes.len() {
            return bad(format!("{phase}: duplicate episode entries"));
        }
        let entries = std::fs::read_dir(&dir).map_err(|e| io_err(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if !listed.contains(name.as_str()) {
                return bad(format!("{}: {name} is not listed in the manifest", dir.display()));
            }
        }
        let mut n = 0;
        for e in &info.episodes {
            let path = dir.join(&e.episode_id).join(RECORDS_FILE);
            let recs = read_records(&path)?;
            if recs.len() != e.records {
                return bad(format!(
                    "{}: manifest lists {} records, found {}",
                    path.display(),
                    e.records,
                    recs.len()
                ));
            }
            let mut prev_rotation = false;
            for (i, r) in recs.iter().enumerate() {
                let at = format!("{}, record {i}", path.display());
                if r.step != i {
                    return bad(format!("{at}: step {} breaks contiguity", r.step));
                }
                if r.phase != phase || r.episode_id != e.episode_id {
                    return bad(format!("{at}: tagged {} / {}", r.phase, r.episode_id));
                }
                match parse_action(&r.action_text, &rules) {
                    Ok(a) if a == r.action => {}
                    parsed => {
                        return bad(format!(
                            "{at}: {:?} parses to {parsed:?}, labelled {}",
                            r.action_text, r.action
                        ))
                    }
                }
                for rel in [&r.observation_ref, &r.asm_ref] {
                    if !root.join(rel).is_file() {
                        return bad(format!("{at}: missing {rel}"));
                    }
                }
                if phase == Phase::Collision {
                    if !prev_rotation {
                        if !r.action.is_rotation() {
                            return bad(format!("{at}: collision sequence begins with {}", r.action));
                        }
                        collision_sequences += 1;
                    }
                    prev_rotation = r.action.is_rotation();
                }
            }
            n += recs.len();
        }
        if n != info.records() {
            return bad(format!("{phase}: record total mismatch"));
        }
        match phase {
            Phase::Gt => counts.gt = n,
            Phase::Dagger => counts.dagger = n,
            Phase::Collision => counts.collision = n,
        }
        episodes += info.episodes.len();
    }
    counts.total = counts.gt + counts.dagger + counts.collision;
    if counts != manifest.counts {
        return bad(format!(
            "manifest counts {:?} differ from records on disk {counts:?}",
            manifest.counts
        ));
    }
    Ok(ValidationReport {
        counts,
        episodes,
        collision_sequences,
    })
}

/// Re-derives every DAGGER label with the expert at the recorded state and
/// returns `(checked, mismatched)`.
pub fn verify_dagger_labels(
    root: impl AsRef<Path>,
    worlds: &[World],
    oracle: &OracleConfig,
) -> Result<(usize, Vec<StepRecord>), DatasetError> {
    let root: PathBuf = root.as_ref().into();
    let manifest = DatasetManifest::load(&root)?;
    let recs = phase_records(&root, &manifest, Phase::Dagger)?;
    let mut bad = Vec::new();
    for r in &recs {
        let world = worlds
            .iter()
            .find(|w| w.name == r.scene)
            .ok_or_else(|| DatasetError::UnknownScene {
                episode: r.episode_id.clone(),
                scene: r.scene.clone(),
            })?;
        if oracle_action(world, &r.pose, r.goal, oracle).ok() != Some(r.action) {
            bad.push(r.clone());
        }
    }
    Ok((recs.len(), bad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{OraclePolicy, ScriptedPolicy};
    use crate::simenv::{generate_episodes, EpisodeGenConfig};

    fn world() -> World {
        let mut text = String::from("name unit_room\nresolution 0.05\nblock 4\ncategory c chair 0.45\ngrid\n");
        for r in 0..24 {
            let row: String = (0..24)
                .map(|c| match (r, c) {
                    (0 | 23, _) | (_, 0 | 23) => '#',
                    (10..=11, 6..=17) => '#',
                    _ => '.',
                })
                .collect();
            text.push_str(&row);
            text.push('\n');
        }
        World::parse(&text, &CategoryTable::default_indoor()).unwrap()
    }

    fn cfg() -> CollectConfig {
        CollectConfig {
            runner: RunnerConfig {
                map_cells: 256,
                ..Default::default()
            },
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn gt_and_dagger_with_oracle_rollout_agree() {
        let w = world();
        let eps = generate_episodes(&w, 3, 2, &EpisodeGenConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let table = CategoryTable::default_indoor();
        let c = cfg();
        collect_gt(std::slice::from_ref(&w), &eps, dir.path(), &c, &table).unwrap();
        let seed = c.seed;
        let oracle = c.oracle;
        let m = collect_dagger(
            std::slice::from_ref(&w),
            &eps,
            "oracle",
            &move |_: &EpisodeSpec| Box::new(OraclePolicy::new(oracle, seed)) as Box<dyn Policy + Send>,
            dir.path(),
            &c,
            &table,
        )
        .unwrap();
        assert!(m.counts.gt > 0);
        assert_eq!(m.counts.gt, m.counts.dagger);
        let gt = phase_records(dir.path(), &m, Phase::Gt).unwrap();
        let dg = phase_records(dir.path(), &m, Phase::Dagger).unwrap();
        for (a, b) in gt.iter().zip(&dg) {
            assert_eq!((a.pose, a.action, &a.action_text), (b.pose, b.action, &b.action_text));
        }
        let report = validate(dir.path()).unwrap();
        assert_eq!(report.counts, m.counts);
        assert_eq!(verify_dagger_labels(dir.path(), &[w], &c.oracle).unwrap().1, vec![]);
    }

    #[test]
    fn start_on_goal_gives_single_stop() {
        let w = world();
        let mut e = generate_episodes(&w, 1, 2, &EpisodeGenConfig::default())
            .unwrap()
            .remove(0);
        e.goal = e.start.position();
        e.reference_path = vec![e.goal, e.goal];
        let dir = tempfile::tempdir().unwrap();
        let m = collect_gt(&[w], &[e], dir.path(), &cfg(), &CategoryTable::default_indoor()).unwrap();
        let recs = phase_records(dir.path(), &m, Phase::Gt).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].action, Action::Stop);
    }

    #[test]
    fn empty_input_gives_valid_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = collect_dagger(
            &[],
            &[],
            "scripted",
            &|_: &EpisodeSpec| Box::new(ScriptedPolicy::constant("move forward")) as Box<dyn Policy + Send>,
            dir.path(),
            &cfg(),
            &CategoryTable::default_indoor(),
        )
        .unwrap();
        assert_eq!(m.counts.total, 0);
        assert_eq!(validate(dir.path()).unwrap().episodes, 0);
    }

    #[test]
    fn tampering_is_detected() {
        let w = world();
        let eps = generate_episodes(&w, 1, 4, &EpisodeGenConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = collect_gt(&[w], &eps, dir.path(), &cfg(), &CategoryTable::default_indoor()).unwrap();
        let recs = phase_records(dir.path(), &m, Phase::Gt).unwrap();
        std::fs::remove_file(dir.path().join(&recs[0].asm_ref)).unwrap();
        assert!(matches!(validate(dir.path()), Err(DatasetError::Invalid(_))));
    }

    #[test]
    fn unknown_scene_and_bad_ids_are_rejected() {
        let w = world();
        let mut e = generate_episodes(&w, 1, 4, &EpisodeGenConfig::default())
            .unwrap()
            .remove(0);
        let dir = tempfile::tempdir().unwrap();
        let table = CategoryTable::default_indoor();
        e.episode_id = "../escape".into();
        assert!(matches!(
            collect_gt(
                std::slice::from_ref(&w),
                std::slice::from_ref(&e),
                dir.path(),
                &cfg(),
                &table
            ),
            Err(DatasetError::BadEpisodeId(_))
        ));
        e.episode_id = "ok".into();
        e.scene = "elsewhere".into();
        assert!(matches!(
            collect_gt(&[w], &[e], dir.path(), &cfg(), &table),
            Err(DatasetError::UnknownScene { .. })
        ));
    }
}
