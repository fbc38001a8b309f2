//! Standard VLN episode metrics: NE, OS, SR, SPL and nDTW.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::AgentPose;
use crate::simenv::planner::polyline_length;
use crate::simenv::EpisodeSpec;

pub const DEFAULT_SUCCESS_RADIUS: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("trajectory log is empty")]
    EmptyLog,
    #[error("reference path needs at least 2 points, got {0}")]
    DegenerateReference(usize),
    #[error("success radius must be positive")]
    BadRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    /// Pose after every step, starting with the episode start.
    pub poses: Vec<AgentPose>,
    pub stopped: bool,
    pub collisions: usize,
}

impl TrajectoryLog {
    pub fn path_length(&self) -> f64 {
        let pts: Vec<[f64; 2]> = self.poses.iter().map(AgentPose::position).collect();
        polyline_length(&pts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavMetrics {
    pub ne: f64,
    pub os: f64,
    pub sr: f64,
    pub spl: f64,
    pub ndtw: f64,
}

/// Dynamic time warping distance with Euclidean point cost.
pub fn dtw(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for p in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let q = b[j - 1];
            let cost = (p[0] - q[0]).hypot(p[1] - q[1]);
            cur[j] = cost + prev[j].min(cur[j - 1]).min(prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// `L` is the length of the episode's reference path (a geodesic on the
/// world grid) and `P` the length travelled. When both are zero the agent
/// started on the goal and SPL equals SR.
pub fn evaluate(log: &TrajectoryLog, spec: &EpisodeSpec, success_radius: f64) -> Result<NavMetrics, MetricsError> {
    if log.poses.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    if spec.reference_path.len() < 2 {
        return Err(MetricsError::DegenerateReference(spec.reference_path.len()));
    }
    if !(success_radius > 0.0) {
        return Err(MetricsError::BadRadius);
    }
    let last = log.poses.last().unwrap();
    let ne = last.distance_to(spec.goal);
    let os = log.poses.iter().any(|p| p.distance_to(spec.goal) <= success_radius);
    let sr = log.stopped && ne <= success_radius;
    let l = polyline_length(&spec.reference_path);
    let p = log.path_length();
    let spl = match (sr, l.max(p)) {
        (false, _) => 0.0,
        (true, 0.0) => 1.0,
        (true, m) => l / m,
    };
    let pts: Vec<[f64; 2]> = log.poses.iter().map(AgentPose::position).collect();
    let d = dtw(&pts, &spec.reference_path);
    let ndtw = (-d / (spec.reference_path.len() as f64 * success_radius)).exp();
    Ok(NavMetrics {
        ne,
        os: os as u8 as f64,
        sr: sr as u8 as f64,
        spl,
        ndtw,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode_id: String,
    #[serde(flatten)]
    pub metrics: NavMetrics,
    pub steps: usize,
    pub collisions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub episodes: usize,
    pub ne: f64,
    pub os: f64,
    pub sr: f64,
    pub spl: f64,
    pub ndtw: f64,
    pub collisions: f64,
}

/// Unweighted means over episodes.
pub fn aggregate(records: &[EpisodeMetrics]) -> MetricsSummary {
    let n = records.len();
    let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / n as f64
        }
    };
    MetricsSummary {
        episodes: n,
        ne: mean(&|r| r.metrics.ne),
        os: mean(&|r| r.metrics.os),
        sr: mean(&|r| r.metrics.sr),
        spl: mean(&|r| r.metrics.spl),
        ndtw: mean(&|r| r.metrics.ndtw),
        collisions: mean(&|r| r.collisions as f64),
    }
}

/// One JSON line per episode followed by a `{"summary": ...}` line.
pub fn write_jsonl(
    path: impl AsRef<Path>,
    records: &[EpisodeMetrics],
    summary: &MetricsSummary,
) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    serde_json::to_writer(&mut f, &serde_json::json!({ "summary": summary }))?;
    f.write_all(b"\n")?;
    f.flush()
}

pub fn summary_csv(summary: &MetricsSummary) -> String {
    format!(
        "episodes,ne,os,sr,spl,ndtw,collisions\n{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
        summary.episodes, summary.ne, summary.os, summary.sr, summary.spl, summary.ndtw, summary.collisions
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(path: Vec<[f64; 2]>) -> EpisodeSpec {
        EpisodeSpec {
            episode_id: "t".into(),
            scene: "s".into(),
            instruction: String::new(),
            start: AgentPose::at(path[0][0], path[0][1], 0.0),
            goal: *path.last().unwrap(),
            reference_path: path,
            max_steps: 100,
        }
    }

    fn log(pts: &[[f64; 2]], stopped: bool) -> TrajectoryLog {
        TrajectoryLog {
            poses: pts.iter().map(|p| AgentPose::at(p[0], p[1], 0.0)).collect(),
            stopped,
            collisions: 0,
        }
    }

    fn line(n: usize, step: f64) -> Vec<[f64; 2]> {
        (0..n).map(|i| [i as f64 * step, 0.0]).collect()
    }

    #[test]
    fn identity_path() {
        let p = line(21, 0.25);
        let m = evaluate(&log(&p, true), &spec(p.clone()), 3.0).unwrap();
        assert_eq!(
            m,
            NavMetrics {
                ne: 0.0,
                os: 1.0,
                sr: 1.0,
                spl: 1.0,
                ndtw: 1.0
            }
        );
    }

    #[test]
    fn detour_halves_spl() {
        let reference = vec![[0.0, 0.0], [5.0, 0.0]];
        let walked = [[0.0, 0.0], [0.0, 2.5], [5.0, 2.5], [5.0, 0.0]];
        let m = evaluate(&log(&walked, true), &spec(reference), 3.0).unwrap();
        assert!((m.spl - 0.5).abs() < 1e-12);
    }

    #[test]
    fn oracle_success_without_success() {
        let reference = line(11, 1.0);
        // reaches the goal region, then walks back and stops 4 m short
        let walked = [[0.0, 0.0], [5.0, 0.0], [9.0, 0.0], [6.0, 0.0]];
        let m = evaluate(&log(&walked, true), &spec(reference), 3.0).unwrap();
        assert_eq!((m.os, m.sr, m.spl), (1.0, 0.0, 0.0));
        assert!((m.ne - 4.0).abs() < 1e-12);
        // reaching the goal without STOP is not success
        let m = evaluate(&log(&line(11, 1.0), false), &spec(line(11, 1.0)), 3.0).unwrap();
        assert_eq!((m.os, m.sr), (1.0, 0.0));
    }

    #[test]
    fn input_errors() {
        let p = line(3, 1.0);
        assert_eq!(
            evaluate(&log(&[], true), &spec(p.clone()), 3.0),
            Err(MetricsError::EmptyLog)
        );
        let mut s = spec(p.clone());
        s.reference_path.truncate(1);
        assert_eq!(
            evaluate(&log(&p, true), &s, 3.0),
            Err(MetricsError::DegenerateReference(1))
        );
        assert_eq!(
            evaluate(&log(&p, true), &spec(p.clone()), 0.0),
            Err(MetricsError::BadRadius)
        );
    }

    #[test]
    fn aggregate_is_unweighted_mean() {
        let rec = |sr: f64, steps| EpisodeMetrics {
            episode_id: "e".into(),
            metrics: NavMetrics {
                ne: 1.0,
                os: 1.0,
                sr,
                spl: sr,
                ndtw: 0.5,
            },
            steps,
            collisions: 0,
        };
        let s = aggregate(&[rec(1.0, 10), rec(0.0, 300)]);
        assert_eq!((s.episodes, s.sr, s.spl), (2, 0.5, 0.5));
        assert!(summary_csv(&s).starts_with("episodes,ne,os,sr,spl,ndtw,collisions\n2,"));
        assert_eq!(aggregate(&[]).episodes, 0);
    }

    proptest! {
        #[test]
        fn spl_bounded_by_sr(pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..30), stopped: bool) {
            let walked: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let m = evaluate(&log(&walked, stopped), &spec(line(9, 0.5)), 3.0).unwrap();
            prop_assert!(m.spl <= m.sr);
            prop_assert!(m.sr <= m.os);
            prop_assert!((0.0..=1.0).contains(&m.ndtw));
        }

        #[test]
        fn ndtw_drops_under_translation(dx in 0.01f64..3.0, dy in -3.0f64..3.0) {
            let r = vec![[0.0, 0.0], [1.0, 0.5], [2.0, 0.5], [3.0, 1.5]];
            let shifted: Vec<[f64; 2]> = r.iter().map(|p| [p[0] + dx, p[1] + dy]).collect();
            let same = evaluate(&log(&r, true), &spec(r.clone()), 3.0).unwrap();
            let moved = evaluate(&log(&shifted, true), &spec(r.clone()), 3.0).unwrap();
            prop_assert_eq!(same.ndtw, 1.0);
            prop_assert!(moved.ndtw < 1.0);
        }

        #[test]
        fn scale_consistency(pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..20), lambda in 0.1f64..10.0, stopped: bool) {
            let walked: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let reference = vec![[0.0, 0.0], [2.0, 1.0], [3.0, 3.0]];
            let scale = |v: &[[f64; 2]]| v.iter().map(|p| [p[0] * lambda, p[1] * lambda]).collect::<Vec<_>>();
            let a = evaluate(&log(&walked, stopped), &spec(reference.clone()), 2.0).unwrap();
            let b = evaluate(&log(&scale(&walked), stopped), &spec(scale(&reference)), 2.0 * lambda).unwrap();
            prop_assert!((a.ne * lambda - b.ne).abs() < 1e-9 * (1.0 + b.ne));
            prop_assert!((a.spl - b.spl).abs() < 1e-9);
            prop_assert!((a.ndtw - b.ndtw).abs() < 1e-9);
            prop_assert_eq!(a.os, b.os);
            prop_assert_eq!(a.sr, b.sr);
        }
    }
}
