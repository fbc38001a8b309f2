use std::path::PathBuf;

use mapnav::actions::{default_ruleset, parse_action, Action};
use mapnav::dataset::{
    collect_collision, collect_dagger, collect_gt, phase_records, validate, verify_dagger_labels, CollectConfig, Phase,
    PolicyFactory,
};
use mapnav::geometry::AgentPose;
use mapnav::policy::{NoisyOraclePolicy, Policy, ScriptedPolicy};
use mapnav::semantic_map::CategoryTable;
use mapnav::simenv::{generate_episodes, EpisodeGenConfig, EpisodeSpec, World};

const WORLDS: [&str; 5] = [
    "empty_room",
    "open_room",
    "l_corridor",
    "cluttered_room",
    "apartment_small",
];

fn load(name: &str) -> World {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../fixtures/worlds/{name}.world"));
    World::load(p, &CategoryTable::default_indoor()).unwrap()
}

fn suite(per_world: usize) -> (Vec<World>, Vec<EpisodeSpec>) {
    let worlds: Vec<World> = WORLDS.iter().map(|n| load(n)).collect();
    let mut eps = Vec::new();
    for (i, w) in worlds.iter().enumerate() {
        eps.extend(generate_episodes(w, per_world, 40 + i as u64, &EpisodeGenConfig::default()).unwrap());
    }
    (worlds, eps)
}

#[test]
fn three_phases_on_fixture_suite() {
    let (worlds, eps) = suite(2);
    let table = CategoryTable::default_indoor();
    let cfg = CollectConfig {
        seed: 11,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let gt = collect_gt(&worlds, &eps, dir.path(), &cfg, &table).unwrap();
    let (oracle, seed) = (cfg.oracle, cfg.seed);
    let noisy: &PolicyFactory = &move |_| Box::new(NoisyOraclePolicy::new(oracle, 0.3, seed)) as Box<dyn Policy + Send>;
    collect_dagger(&worlds, &eps, "noisy_oracle(0.3)", noisy, dir.path(), &cfg, &table).unwrap();
    let m = collect_collision(&worlds, &eps, dir.path(), &cfg, &table).unwrap();
    eprintln!("counts {:?}", m.counts);

    assert_eq!(m.counts.gt, gt.counts.gt);
    assert!(m.counts.gt >= 10 * 4);
    assert!(m.counts.dagger > 0);
    assert_eq!(m.counts.total, m.counts.gt + m.counts.dagger + m.counts.collision);

    let report = validate(dir.path()).unwrap();
    assert_eq!(report.counts, m.counts);
    let (checked, bad) = verify_dagger_labels(dir.path(), &worlds, &cfg.oracle).unwrap();
    assert_eq!(checked, m.counts.dagger);
    assert!(bad.is_empty(), "{bad:?}");

    let rules = default_ruleset();
    for phase in Phase::ALL {
        for r in phase_records(dir.path(), &m, phase).unwrap() {
            assert_eq!(parse_action(&r.action_text, &rules), Ok(r.action));
            assert_eq!(r.phase, phase);
        }
    }
    // every GT episode ends on STOP
    let info = &m.phases[&Phase::Gt];
    assert!(info
        .episodes
        .iter()
        .all(|e| e.status == mapnav::dataset::EpisodeStatus::Complete));
}

#[test]
fn always_forward_in_corridor_is_relabelled() {
    let w = load("l_corridor");
    let eps = generate_episodes(&w, 3, 9, &EpisodeGenConfig::default()).unwrap();
    let table = CategoryTable::default_indoor();
    let cfg = CollectConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let fwd: &PolicyFactory = &|_| Box::new(ScriptedPolicy::constant("move forward")) as Box<dyn Policy + Send>;
    let m = collect_dagger(
        std::slice::from_ref(&w),
        &eps,
        "always_forward",
        fwd,
        dir.path(),
        &cfg,
        &table,
    )
    .unwrap();
    collect_gt(std::slice::from_ref(&w), &eps, dir.path(), &cfg, &table).unwrap();
    let dagger = phase_records(dir.path(), &m, Phase::Dagger).unwrap();
    let gt = phase_records(
        dir.path(),
        &mapnav::dataset::DatasetManifest::load(dir.path()).unwrap(),
        Phase::Gt,
    )
    .unwrap();
    let states = |v: &[mapnav::dataset::StepRecord]| v.iter().map(|r| r.pose).collect::<Vec<AgentPose>>();
    assert_ne!(states(&dagger), states(&gt));
    // labels still come from the expert, so some of them are turns
    assert!(dagger.iter().any(|r| r.action.is_rotation()));
    let (_, bad) = verify_dagger_labels(dir.path(), &[w], &cfg.oracle).unwrap();
    assert!(bad.is_empty());
    validate(dir.path()).unwrap();
}

#[test]
fn collision_recovery_sequences() {
    let table = CategoryTable::default_indoor();
    let cfg = CollectConfig::default();

    let w = load("cluttered_room");
    let eps = generate_episodes(&w, 10, 3, &EpisodeGenConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = collect_collision(std::slice::from_ref(&w), &eps, dir.path(), &cfg, &table).unwrap();
    let report = validate(dir.path()).unwrap();
    eprintln!(
        "cluttered_room: {} records, {} sequences",
        m.counts.collision, report.collision_sequences
    );
    assert!(report.collision_sequences >= 1);
    let recs = phase_records(dir.path(), &m, Phase::Collision).unwrap();
    // a sequence is a run of rotations closed by the resuming action
    let mut run = 0;
    let mut longest = 0;
    for r in &recs {
        run += 1;
        if !r.action.is_rotation() {
            longest = longest.max(run);
            run = 0;
        }
    }
    assert!(longest.max(run) >= 2);
    assert!(recs.iter().any(|r| r.action == Action::Forward));

    let w = load("empty_room");
    let eps = generate_episodes(&w, 5, 3, &EpisodeGenConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = collect_collision(std::slice::from_ref(&w), &eps, dir.path(), &cfg, &table).unwrap();
    assert_eq!(m.counts.collision, 0);
    validate(dir.path()).unwrap();
}
