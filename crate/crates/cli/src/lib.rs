//! `mapnav` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or input error.

pub mod bench;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use mapnav::actions::default_ruleset;
use mapnav::annotation::{annotate, Palette};
use mapnav::dataset::{self, DatasetError, Phase, PolicyFactory};
use mapnav::metrics::{aggregate, summary_csv, write_jsonl, EpisodeMetrics};
use mapnav::policy::vlm::{HttpTransport, RecordingTransport, ReplayTransport, Transport};
use mapnav::policy::{NoisyOraclePolicy, OraclePolicy, Policy, PolicyError, ScriptedPolicy, VlmClient, VlmError};
use mapnav::runner::{run_episode, ArtifactOptions, EpisodeRun, RunError};
use mapnav::semantic_map::SemanticMap;
use mapnav::simenv::{generate_episodes, load_episodes, save_episodes, EpisodeSpec, World};

pub use config::{PolicyKind, RolloutKind, Settings};

/// A failure together with its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, missing or malformed input files (exit 2).
    Input(anyhow::Error),
    /// Everything else (exit 1).
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (CliError::Input(e) | CliError::Runtime(e)) = self;
        // many errors already quote their source in their own message
        let mut msg = e.to_string();
        for cause in e.chain().skip(1) {
            let c = cause.to_string();
            if !msg.contains(&c) {
                msg = format!("{msg}: {c}");
            }
        }
        f.write_str(&msg)
    }
}

type CliResult<T> = Result<T, CliError>;

trait Classify<T> {
    fn input(self) -> CliResult<T>;
    fn runtime(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> CliResult<T> {
        self.map_err(|e| CliError::Input(e.into()))
    }
    fn runtime(self) -> CliResult<T> {
        self.map_err(|e| CliError::Runtime(e.into()))
    }
}

/// Endpoint misconfiguration and unreadable recordings are input errors;
/// failures while talking to the endpoint are runtime errors.
fn classify_run(e: RunError) -> CliError {
    match e {
        RunError::Policy(PolicyError::Vlm(VlmError::Config(_))) => CliError::Input(e.into()),
        _ => CliError::Runtime(e.into()),
    }
}

fn classify_dataset(e: DatasetError) -> CliError {
    match e {
        DatasetError::UnknownScene { .. } | DatasetError::BadEpisodeId(_) | DatasetError::DuplicateEpisode(_) => {
            CliError::Input(e.into())
        }
        DatasetError::Run(r) => classify_run(r),
        _ => CliError::Runtime(e.into()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "mapnav", version, about = "Annotated semantic map navigation engine")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Inputs {
    /// World file or directory of .world files (repeatable).
    #[arg(long = "world")]
    pub worlds: Vec<PathBuf>,
    /// Episode file (JSON lines or a JSON array).
    #[arg(long)]
    pub episodes: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = number of cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct VlmFlags {
    /// Serve VLM replies from a recorded replay file instead of HTTP.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Record VLM exchanges to this file.
    #[arg(long, conflicts_with = "replay")]
    pub record: Option<PathBuf>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    Gt,
    Dagger,
    Collision,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write its trajectory and metrics.
    RunEpisode {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum)]
        policy: Option<PolicyKind>,
        /// Episode to run; the first one in the file by default.
        #[arg(long)]
        episode_id: Option<String>,
        /// Write the annotated map of every step as PNG.
        #[arg(long)]
        save_asm: bool,
        /// Write the final map snapshot here.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Utterances for the scripted policy (repeatable).
        #[arg(long = "say")]
        say: Vec<String>,
        #[command(flatten)]
        vlm: VlmFlags,
    },
    /// Run every episode and write per-episode and summary metrics.
    BatchEval {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum)]
        policy: Option<PolicyKind>,
    },
    /// Render the annotated map of a saved snapshot.
    RenderAsm {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Label placements JSON; next to the PNG by default.
        #[arg(long)]
        placements: Option<PathBuf>,
    },
    /// Compare map state size with a frame history over a scripted walk.
    BenchMemory {
        #[arg(long)]
        world: Option<PathBuf>,
        /// Checkpoints, comma separated.
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<usize>>,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Collect one phase of training pairs into a dataset directory.
    CollectDataset {
        #[arg(value_enum)]
        phase: PhaseArg,
        #[command(flatten)]
        inputs: Inputs,
        /// Rollout policy of the dagger phase.
        #[arg(long, value_enum)]
        rollout: Option<RolloutKind>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        vlm: VlmFlags,
    },
    /// Check a dataset directory; with worlds, also re-derive DAGGER labels.
    ValidateDataset {
        dir: PathBuf,
        #[arg(long = "world")]
        worlds: Vec<PathBuf>,
    },
    /// Print the built-in action phrase rules as JSON.
    DumpRules {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample episodes in a world.
    GenerateEpisodes {
        #[arg(long = "world")]
        worlds: Vec<PathBuf>,
        /// Episodes per world.
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args`, runs the command and returns the exit code. Output goes
/// to stdout, diagnostics to stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut s = Settings::from_file(cli.config.as_deref()).input()?;
    match cli.command {
        Command::RunEpisode {
            inputs,
            policy,
            episode_id,
            save_asm,
            snapshot,
            say,
            vlm,
        } => {
            apply_inputs(&mut s, &inputs, policy, &say, &vlm);
            s.finalize().input()?;
            cmd_run_episode(&s, episode_id.as_deref(), save_asm, snapshot.as_deref(), &vlm)
        }
        Command::BatchEval { inputs, policy } => {
            apply_inputs(&mut s, &inputs, policy, &[], &VlmFlags::default());
            s.finalize().input()?;
            cmd_batch_eval(&s)
        }
        Command::RenderAsm {
            snapshot,
            out,
            placements,
        } => cmd_render_asm(&s, &snapshot, &out, placements.as_deref()),
        Command::BenchMemory { world, steps, json } => {
            if world.is_some() {
                s.bench.world = world;
            }
            if let Some(st) = steps {
                s.bench.step_counts = st;
            }
            s.finalize().input()?;
            cmd_bench(&s, json.as_deref())
        }
        Command::CollectDataset {
            phase,
            inputs,
            rollout,
            epsilon,
            vlm,
        } => {
            apply_inputs(&mut s, &inputs, None, &[], &vlm);
            if let Some(r) = rollout {
                s.collect.rollout = r;
            }
            if let Some(e) = epsilon {
                s.collect.epsilon = e;
            }
            s.finalize().input()?;
            cmd_collect(&s, phase)
        }
        Command::ValidateDataset { dir, worlds } => {
            s.finalize().input()?;
            cmd_validate(&s, &dir, &worlds)
        }
        Command::DumpRules { out } => {
            let json = default_ruleset().to_json() + "\n";
            match out {
                Some(p) => std::fs::write(&p, json)
                    .with_context(|| p.display().to_string())
                    .runtime(),
                None => {
                    print!("{json}");
                    Ok(())
                }
            }
        }
        Command::GenerateEpisodes {
            worlds,
            count,
            seed,
            out,
        } => {
            if !worlds.is_empty() {
                s.worlds = worlds;
            }
            if let Some(v) = seed {
                s.seed = v;
            }
            s.finalize().input()?;
            cmd_generate(&s, count, &out)
        }
    }
}

fn apply_inputs(s: &mut Settings, i: &Inputs, policy: Option<PolicyKind>, say: &[String], vlm: &VlmFlags) {
    if !i.worlds.is_empty() {
        s.worlds = i.worlds.clone();
    }
    if let Some(p) = &i.episodes {
        s.episodes = Some(p.clone());
    }
    if let Some(v) = i.seed {
        s.seed = v;
    }
    if let Some(p) = &i.out {
        s.out_dir = Some(p.clone());
    }
    if let Some(w) = i.workers {
        s.workers = w;
    }
    if let Some(p) = policy {
        s.policy = p;
    }
    if !say.is_empty() {
        s.scripted.texts = say.to_vec();
    }
    if let Some(u) = &vlm.base_url {
        s.vlm.base_url = u.clone();
    }
    if let Some(m) = &vlm.model {
        s.vlm.model_name = m.clone();
    }
}

struct Loaded {
    worlds: Vec<World>,
    episodes: Vec<EpisodeSpec>,
    categories: mapnav::semantic_map::CategoryTable,
}

fn load_inputs(s: &Settings) -> CliResult<Loaded> {
    let categories = s.categories().input()?;
    let worlds = config::load_worlds(&s.worlds, &categories).input()?;
    let episodes = load_episodes(s.episodes_path().input()?).input()?;
    for e in &episodes {
        let w = find_world(&worlds, e).input()?;
        e.validate(w, s.runner.motion.agent_radius).input()?;
    }
    Ok(Loaded {
        worlds,
        episodes,
        categories,
    })
}

fn find_world<'w>(worlds: &'w [World], e: &EpisodeSpec) -> anyhow::Result<&'w World> {
    worlds.iter().find(|w| w.name == e.scene).ok_or_else(|| {
        anyhow!(
            "episode {} needs world {:?}, which was not loaded",
            e.episode_id,
            e.scene
        )
    })
}

fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().runtime()
}

fn out_dir(s: &Settings, default: &str) -> PathBuf {
    s.out_dir.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn create_dir(p: &Path) -> CliResult<()> {
    std::fs::create_dir_all(p)
        .with_context(|| p.display().to_string())
        .runtime()
}

fn write_file(p: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(p, bytes)
        .with_context(|| p.display().to_string())
        .runtime()
}

fn vlm_transport(s: &Settings, flags: &VlmFlags) -> CliResult<Box<dyn Transport>> {
    if let Some(p) = &flags.replay {
        return Ok(Box::new(ReplayTransport::load(p).input()?));
    }
    Ok(Box::new(HttpTransport::new(&s.vlm).input()?))
}

fn make_policy(s: &Settings, transport: Option<Box<dyn Transport>>) -> CliResult<Box<dyn Policy + Send>> {
    Ok(match s.policy {
        PolicyKind::Oracle => Box::new(OraclePolicy::new(s.oracle, s.seed)),
        PolicyKind::Scripted => {
            if s.scripted.texts.is_empty() {
                return Err(CliError::Input(anyhow!("scripted policy needs at least one utterance")));
            }
            Box::new(ScriptedPolicy::new(s.scripted.texts.clone()))
        }
        PolicyKind::Vlm => {
            let t = match transport {
                Some(t) => t,
                None => Box::new(HttpTransport::new(&s.vlm).input()?),
            };
            Box::new(VlmClient::new(s.vlm.clone(), t).input()?)
        }
    })
}

fn summary_line(run: &EpisodeRun) -> String {
    let m = run.metrics;
    format!(
        "{}: steps {} collisions {} | NE {:.3} OS {} SR {} SPL {:.4} nDTW {:.4}{}",
        run.episode_id,
        run.steps.len(),
        run.log.collisions,
        m.ne,
        m.os,
        m.sr,
        m.spl,
        m.ndtw,
        if run.truncated { " (truncated)" } else { "" }
    )
}

fn episode_metrics(run: &EpisodeRun) -> EpisodeMetrics {
    EpisodeMetrics {
        episode_id: run.episode_id.clone(),
        metrics: run.metrics,
        steps: run.steps.len(),
        collisions: run.log.collisions,
    }
}

fn cmd_run_episode(
    s: &Settings,
    episode_id: Option<&str>,
    save_asm: bool,
    snapshot: Option<&Path>,
    flags: &VlmFlags,
) -> CliResult<()> {
    let l = load_inputs(s)?;
    let spec = match episode_id {
        Some(id) => l.episodes.iter().find(|e| e.episode_id == id),
        None => l.episodes.first(),
    }
    .ok_or_else(|| CliError::Input(anyhow!("episode {} not found", episode_id.unwrap_or("(first)"))))?;
    let world = find_world(&l.worlds, spec).input()?;

    let recorder = match (&flags.record, s.policy) {
        (Some(_), PolicyKind::Vlm) => Some(Arc::new(RecordingTransport::new(HttpTransport::new(&s.vlm).input()?))),
        (Some(_), _) => return Err(CliError::Input(anyhow!("--record only applies to the vlm policy"))),
        _ => None,
    };
    let transport: Option<Box<dyn Transport>> = match (&recorder, s.policy) {
        (Some(r), _) => Some(Box::new(r.clone())),
        (None, PolicyKind::Vlm) => Some(vlm_transport(s, flags)?),
        _ => None,
    };
    let mut policy = make_policy(s, transport)?;

    let dir = out_dir(s, "runs").join(&spec.episode_id);
    create_dir(&dir)?;
    let asm_dir = dir.join("asm");
    if save_asm {
        create_dir(&asm_dir)?;
    }
    let artifacts = ArtifactOptions {
        asm_dir: save_asm.then_some(asm_dir.as_path()),
        snapshot,
    };
    let result = run_episode(world, spec, policy.as_mut(), &s.runner, &l.categories, &artifacts);
    if let (Some(r), Some(p)) = (&recorder, &flags.record) {
        let json = serde_json::to_string_pretty(&r.recording()).expect("recording serializes") + "\n";
        write_file(p, json)?;
    }
    let run = result.map_err(classify_run)?;
    write_file(&dir.join("trajectory.json"), run.trajectory_json())?;
    let metrics = serde_json::to_string_pretty(&episode_metrics(&run)).expect("metrics serialize") + "\n";
    write_file(&dir.join("metrics.json"), metrics)?;
    println!("{}", summary_line(&run));
    Ok(())
}

fn cmd_batch_eval(s: &Settings) -> CliResult<()> {
    let l = load_inputs(s)?;
    if s.policy == PolicyKind::Vlm && s.workers != 1 {
        eprintln!("note: vlm batch runs issue concurrent requests; use --workers 1 for a sequential run");
    }
    let out = out_dir(s, "eval");
    let traj_dir = out.join("trajectories");
    create_dir(&traj_dir)?;
    let runs = pool(s.workers)?.install(|| {
        l.episodes
            .par_iter()
            .map(|spec| {
                let world = find_world(&l.worlds, spec).input()?;
                let mut policy = make_policy(s, None)?;
                run_episode(
                    world,
                    spec,
                    policy.as_mut(),
                    &s.runner,
                    &l.categories,
                    &ArtifactOptions::default(),
                )
                .map_err(classify_run)
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    let mut records = Vec::with_capacity(runs.len());
    for run in &runs {
        write_file(
            &traj_dir.join(format!("{}.json", run.episode_id)),
            run.trajectory_json(),
        )?;
        println!("{}", summary_line(run));
        records.push(episode_metrics(run));
    }
    let summary = aggregate(&records);
    let jsonl = out.join("metrics.jsonl");
    write_jsonl(&jsonl, &records, &summary)
        .with_context(|| jsonl.display().to_string())
        .runtime()?;
    let csv = summary_csv(&summary);
    write_file(&out.join("summary.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_render_asm(s: &Settings, snapshot: &Path, out: &Path, placements: Option<&Path>) -> CliResult<()> {
    let bytes = std::fs::read(snapshot)
        .with_context(|| snapshot.display().to_string())
        .input()?;
    let map = SemanticMap::from_snapshot(&bytes)
        .with_context(|| snapshot.display().to_string())
        .input()?;
    let asm = annotate(
        &map,
        &s.runner.annotation,
        &Palette::for_categories(map.categories().len()),
    );
    write_file(out, asm.image.encode_png())?;
    let placements = placements
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_extension("json"));
    let json = serde_json::to_string_pretty(&asm.placements).expect("placements serialize") + "\n";
    write_file(&placements, json)?;
    println!("{} ({} labels)", out.display(), asm.placements.len());
    Ok(())
}

fn cmd_bench(s: &Settings, json: Option<&Path>) -> CliResult<()> {
    let categories = s.categories().input()?;
    let world = match &s.bench.world {
        Some(p) => World::load(p, &categories).input()?,
        None => bench::builtin_room(&categories),
    };
    if world.spawn_points().is_empty() {
        return Err(CliError::Input(anyhow!("world {} has no spawn point", world.name)));
    }
    if s.bench.step_counts.is_empty() || s.bench.step_counts.contains(&0) {
        return Err(CliError::Input(anyhow!("step counts must be positive")));
    }
    let report = bench::bench_memory(&world, &s.runner, &categories, &s.bench.step_counts).map_err(classify_run)?;
    print!("{}", report.table());
    if let Some(p) = json {
        write_file(
            p,
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        )?;
    }
    if !report.state_is_constant() {
        return Err(CliError::Runtime(anyhow!("map state size changed during the walk")));
    }
    Ok(())
}

fn cmd_collect(s: &Settings, phase: PhaseArg) -> CliResult<()> {
    let l = load_inputs(s)?;
    let out = out_dir(s, "dataset");
    let cfg = s.collect_config();
    let manifest = pool(s.workers)?.install(|| match phase {
        PhaseArg::Gt => dataset::collect_gt(&l.worlds, &l.episodes, &out, &cfg, &l.categories),
        PhaseArg::Collision => dataset::collect_collision(&l.worlds, &l.episodes, &out, &cfg, &l.categories),
        PhaseArg::Dagger => {
            let (oracle, seed, eps) = (s.oracle, s.seed, s.collect.epsilon);
            let vlm = s.vlm.clone();
            let factory: Box<PolicyFactory> = match s.collect.rollout {
                RolloutKind::Noisy => Box::new(move |_: &EpisodeSpec| {
                    Box::new(NoisyOraclePolicy::new(oracle, eps, seed)) as Box<dyn Policy + Send>
                }),
                RolloutKind::Forward => Box::new(|_: &EpisodeSpec| {
                    Box::new(ScriptedPolicy::constant("move forward")) as Box<dyn Policy + Send>
                }),
                RolloutKind::Oracle => {
                    Box::new(move |_: &EpisodeSpec| Box::new(OraclePolicy::new(oracle, seed)) as Box<dyn Policy + Send>)
                }
                RolloutKind::Vlm => {
                    // fail early on a bad endpoint configuration
                    if let Err(e) = VlmClient::http(vlm.clone()) {
                        return Err(DatasetError::Run(RunError::Policy(e.into())));
                    }
                    Box::new(move |_: &EpisodeSpec| {
                        Box::new(VlmClient::http(vlm.clone()).expect("validated above")) as Box<dyn Policy + Send>
                    })
                }
            };
            let name = match s.collect.rollout {
                RolloutKind::Noisy => format!("noisy_oracle({eps})"),
                RolloutKind::Forward => "always_forward".into(),
                RolloutKind::Oracle => "oracle".into(),
                RolloutKind::Vlm => format!("vlm({})", s.vlm.model_name),
            };
            dataset::collect_dagger(
                &l.worlds,
                &l.episodes,
                &name,
                factory.as_ref(),
                &out,
                &cfg,
                &l.categories,
            )
        }
    });
    let manifest = manifest.map_err(classify_dataset)?;
    let p = match phase {
        PhaseArg::Gt => Phase::Gt,
        PhaseArg::Dagger => Phase::Dagger,
        PhaseArg::Collision => Phase::Collision,
    };
    let info = &manifest.phases[&p];
    let skipped = info
        .episodes
        .iter()
        .filter(|e| e.status == dataset::EpisodeStatus::Skipped)
        .count();
    println!(
        "{p}: {} records from {} episodes ({skipped} skipped) -> {}",
        manifest.counts.get(p),
        info.episodes.len(),
        out.display()
    );
    println!(
        "dataset totals: GT {} DAGGER {} COLLISION {} total {}",
        manifest.counts.gt, manifest.counts.dagger, manifest.counts.collision, manifest.counts.total
    );
    Ok(())
}

fn cmd_validate(s: &Settings, dir: &Path, worlds: &[PathBuf]) -> CliResult<()> {
    if !dir.join(dataset::MANIFEST_FILE).is_file() {
        return Err(CliError::Input(anyhow!(
            "{}: no {}",
            dir.display(),
            dataset::MANIFEST_FILE
        )));
    }
    let report = dataset::validate(dir).runtime()?;
    println!(
        "valid: GT {} DAGGER {} COLLISION {} total {} ({} episodes, {} collision sequences)",
        report.counts.gt,
        report.counts.dagger,
        report.counts.collision,
        report.counts.total,
        report.episodes,
        report.collision_sequences
    );
    if !worlds.is_empty() {
        let categories = s.categories().input()?;
        let worlds = config::load_worlds(worlds, &categories).input()?;
        let (checked, bad) = dataset::verify_dagger_labels(dir, &worlds, &s.oracle).map_err(classify_dataset)?;
        if !bad.is_empty() {
            bail_runtime(format!(
                "{} of {checked} DAGGER labels differ from the expert, first: {} step {}",
                bad.len(),
                bad[0].episode_id,
                bad[0].step
            ))?;
        }
        println!("DAGGER labels re-derived: {checked} of {checked} match");
    }
    Ok(())
}

fn bail_runtime(msg: String) -> CliResult<()> {
    Err(CliError::Runtime(anyhow!(msg)))
}

fn cmd_generate(s: &Settings, count: usize, out: &Path) -> CliResult<()> {
    let categories = s.categories().input()?;
    let worlds = config::load_worlds(&s.worlds, &categories).input()?;
    let mut all = Vec::new();
    for (i, w) in worlds.iter().enumerate() {
        let eps = generate_episodes(w, count, s.seed.wrapping_add(i as u64), &s.episode_gen).runtime()?;
        all.extend(eps);
    }
    save_episodes(out, &all).runtime()?;
    println!("{} episodes -> {}", all.len(), out.display());
    Ok(())
}
