//! Run configuration: a TOML file overridden by command-line flags.
//!
//! Precedence is flags > file > built-in defaults. Relative paths in the
//! file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use mapnav::dataset::CollectConfig;
use mapnav::policy::{OracleConfig, VlmEndpointConfig};
use mapnav::runner::RunnerConfig;
use mapnav::semantic_map::CategoryTable;
use mapnav::simenv::{EpisodeGenConfig, World};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    #[default]
    Oracle,
    Vlm,
    Scripted,
}

/// Policy whose rollouts visit the states of the DAGGER phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RolloutKind {
    /// The expert with random actions mixed in.
    #[default]
    Noisy,
    /// Always says "move forward".
    Forward,
    Oracle,
    Vlm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedSection {
    /// Utterances replayed one per step; the last one repeats.
    pub texts: Vec<String>,
}

impl Default for ScriptedSection {
    fn default() -> Self {
        Self {
            texts: vec!["move forward".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectSection {
    pub rollout: RolloutKind,
    /// Random-action probability of the noisy rollout.
    pub epsilon: f64,
    pub max_recoveries: usize,
}

impl Default for CollectSection {
    fn default() -> Self {
        Self {
            rollout: RolloutKind::Noisy,
            epsilon: 0.3,
            max_recoveries: CollectConfig::default().max_recoveries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// World to walk in; a built-in 8 m room when unset.
    pub world: Option<PathBuf>,
    pub step_counts: Vec<usize>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            world: None,
            step_counts: vec![1, 10, 100, 300],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// World files, or directories of `*.world` files.
    pub worlds: Vec<PathBuf>,
    pub episodes: Option<PathBuf>,
    pub policy: PolicyKind,
    /// Single source of randomness: phrasing, rollouts, episode sampling.
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Worker threads for batch commands; 0 picks the number of cores.
    pub workers: usize,
    /// Object categories; the built-in indoor list when unset.
    pub categories: Option<Vec<String>>,
    pub runner: RunnerConfig,
    pub oracle: OracleConfig,
    pub episode_gen: EpisodeGenConfig,
    pub vlm: VlmEndpointConfig,
    pub scripted: ScriptedSection,
    pub collect: CollectSection,
    pub bench: BenchSection,
}

impl Settings {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
        let mut s: Settings = toml::from_str(&text).with_context(|| format!("{}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        s.worlds.iter_mut().for_each(rebase);
        s.episodes.as_mut().map(rebase);
        s.out_dir.as_mut().map(rebase);
        s.bench.world.as_mut().map(rebase);
        Ok(s)
    }

    /// Settings from an optional file, before flag overrides.
    pub fn from_file(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    /// Checks ranges and makes the expert and the simulator agree on the
    /// agent's body and step sizes.
    pub fn finalize(&mut self) -> anyhow::Result<()> {
        self.runner.intrinsics.validate()?;
        let m = &self.runner.motion;
        if !(m.forward_step > 0.0 && m.turn_angle_deg > 0.0 && m.turn_angle_deg < 180.0 && m.agent_radius > 0.0) {
            bail!("runner.motion: forward_step and agent_radius must be positive, turn_angle_deg in (0, 180)");
        }
        if !(self.runner.map_resolution > 0.0) || self.runner.map_cells < 16 {
            bail!("runner: map_resolution must be positive and map_cells at least 16");
        }
        if !(self.runner.success_radius > 0.0) {
            bail!("runner.success_radius must be positive");
        }
        if !(0.0..=1.0).contains(&self.collect.epsilon) {
            bail!("collect.epsilon must lie in [0, 1]");
        }
        self.oracle.motion = self.runner.motion;
        self.oracle.planner.agent_radius = self.runner.motion.agent_radius;
        self.episode_gen.planner.agent_radius = self.runner.motion.agent_radius;
        Ok(())
    }

    pub fn categories(&self) -> anyhow::Result<CategoryTable> {
        match &self.categories {
            Some(names) => Ok(CategoryTable::new(names.iter().cloned())?),
            None => Ok(CategoryTable::default_indoor()),
        }
    }

    pub fn collect_config(&self) -> CollectConfig {
        CollectConfig {
            runner: self.runner.clone(),
            oracle: self.oracle,
            seed: self.seed,
            max_recoveries: self.collect.max_recoveries,
        }
    }

    pub fn episodes_path(&self) -> anyhow::Result<&Path> {
        self.episodes
            .as_deref()
            .context("no episodes file given (--episodes or `episodes` in the config)")
    }
}

/// Expands directories to their `*.world` files, sorted by name.
pub fn world_paths(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("{}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "world"))
                .collect();
            found.sort();
            if found.is_empty() {
                bail!("{}: no .world files", p.display());
            }
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no world given (--world or `worlds` in the config)");
    }
    Ok(out)
}

pub fn load_worlds(paths: &[PathBuf], table: &CategoryTable) -> anyhow::Result<Vec<World>> {
    let worlds = world_paths(paths)?
        .iter()
        .map(|p| World::load(p, table))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, w) in worlds.iter().enumerate() {
        if worlds[..i].iter().any(|o| o.name == w.name) {
            bail!("two worlds are named {:?}", w.name);
        }
    }
    Ok(worlds)
}
