//! Memory footprint of the map representation versus a frame history.

use std::time::Instant;

use serde::Serialize;

use mapnav::actions::Action;
use mapnav::runner::{EpisodeSession, RunError, RunnerConfig};
use mapnav::semantic_map::CategoryTable;
use mapnav::simenv::{EpisodeSpec, World};

/// Walk pattern: straight runs with turns in between, so the map keeps
/// growing and collisions are rare.
const PATTERN: [(Action, usize); 4] = [
    (Action::Forward, 8),
    (Action::TurnLeft, 5),
    (Action::Forward, 5),
    (Action::TurnRight, 4),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub steps: usize,
    /// Bytes of live map state.
    pub state_bytes: usize,
    /// Bytes of the serialized map snapshot.
    pub snapshot_bytes: usize,
    /// Bytes a history of every observation frame so far would need.
    pub history_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub world: String,
    pub map_cells: usize,
    pub channels: usize,
    pub frame_bytes: usize,
    pub rows: Vec<BenchRow>,
    /// Mean wall time per step of sensing plus map update (ms).
    pub mean_map_ms: f64,
    /// Mean wall time per step of annotation plus rendering (ms).
    pub mean_render_ms: f64,
    pub collisions: usize,
}

impl BenchReport {
    pub fn state_is_constant(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[0].state_bytes == w[1].state_bytes && w[0].snapshot_bytes == w[1].snapshot_bytes)
    }

    pub fn history_is_linear(&self) -> bool {
        self.rows.iter().all(|r| r.history_bytes == r.steps * self.frame_bytes)
    }

    pub fn table(&self) -> String {
        let mut head = format!("{:<24}", "representation");
        for r in &self.rows {
            head += &format!("{:>14}", format!("step {}", r.steps));
        }
        let line = |name: &str, f: &dyn Fn(&BenchRow) -> usize| {
            let mut s = format!("{name:<24}");
            for r in &self.rows {
                s += &format!("{:>14}", f(r));
            }
            s
        };
        [
            format!(
                "world {} | map {}x{} cells, {} channels | frame {} bytes",
                self.world, self.map_cells, self.map_cells, self.channels, self.frame_bytes
            ),
            head,
            line("map state (bytes)", &|r| r.state_bytes),
            line("map snapshot (bytes)", &|r| r.snapshot_bytes),
            line("frame history (bytes)", &|r| r.history_bytes),
            format!(
                "mean per-step time: map {:.3} ms, annotate+render {:.3} ms",
                self.mean_map_ms, self.mean_render_ms
            ),
        ]
        .join("\n")
            + "\n"
    }
}

/// Empty 8 m x 8 m room used when no world is given.
pub fn builtin_room(table: &CategoryTable) -> World {
    let n = 42;
    let mut text = String::from("name bench_room\nresolution 0.05\nblock 4\ngrid\n");
    for r in 0..n {
        for c in 0..n {
            text.push(match (r, c) {
                (0 | 1, _) | (_, 0 | 1) => '#',
                _ if r >= n - 2 || c >= n - 2 => '#',
                _ if (r, c) == (n / 2, n / 2) => 'S',
                _ => '.',
            });
        }
        text.push('\n');
    }
    World::parse(&text, table).expect("built-in room parses")
}

/// Walks `max(step_counts)` steps and samples the state size at each
/// checkpoint.
pub fn bench_memory(
    world: &World,
    cfg: &RunnerConfig,
    categories: &CategoryTable,
    step_counts: &[usize],
) -> Result<BenchReport, RunError> {
    let mut counts = step_counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let total = counts.last().copied().unwrap_or(0);
    let start = world.spawn_points()[0];
    let spec = EpisodeSpec {
        episode_id: "bench".into(),
        scene: world.name.clone(),
        instruction: "Walk around the room.".into(),
        start,
        goal: start.position(),
        reference_path: vec![start.position(), start.position()],
        max_steps: total + 1,
    };
    let mut session = EpisodeSession::new(world, &spec, cfg, categories)?;
    let frame_bytes = {
        let img = session.observation_image();
        img.width() as usize * img.height() as usize * 3
    };
    let channels = session.map().num_channels();
    let mut pattern = PATTERN.iter().flat_map(|&(a, n)| std::iter::repeat_n(a, n)).cycle();
    let (mut map_t, mut render_t) = (0.0, 0.0);
    let mut collisions = 0;
    let mut rows = Vec::new();
    for step in 1..=total {
        let a = pattern.next().expect("cycle is endless");
        let t = Instant::now();
        collisions += session.apply(a, a.name(), Some(a))?.collided as usize;
        map_t += t.elapsed().as_secs_f64();
        let t = Instant::now();
        std::hint::black_box(session.asm_image());
        render_t += t.elapsed().as_secs_f64();
        if counts.binary_search(&step).is_ok() {
            rows.push(BenchRow {
                steps: step,
                state_bytes: session.map().state_bytes(),
                snapshot_bytes: session.map().to_snapshot().len(),
                history_bytes: step * frame_bytes,
            });
        }
    }
    let per = |t: f64| if total == 0 { 0.0 } else { t * 1e3 / total as f64 };
    Ok(BenchReport {
        world: world.name.clone(),
        map_cells: cfg.map_cells,
        channels,
        frame_bytes,
        rows,
        mean_map_ms: per(map_t),
        mean_render_ms: per(render_t),
        collisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_state_and_linear_history() {
        let table = CategoryTable::default_indoor();
        let w = builtin_room(&table);
        let cfg = RunnerConfig {
            map_cells: 200,
            ..Default::default()
        };
        let r = bench_memory(&w, &cfg, &table, &[30, 1, 10]).unwrap();
        assert_eq!(r.rows.iter().map(|r| r.steps).collect::<Vec<_>>(), vec![1, 10, 30]);
        assert!(r.state_is_constant());
        assert!(r.history_is_linear());
        assert_eq!(r.frame_bytes, 160 * 120 * 3);
        assert!(r.table().contains("step 30"));
    }
}
