//! Grid A* with clearance-aware costs, line-of-sight smoothing and polyline
//! helpers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::raycast::segment_cells;
use super::world::World;
use crate::geometry::Cell;
use crate::semantic_map::DEFAULT_AGENT_RADIUS;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("point ({0:.3}, {1:.3}) is outside the world or not on free floor")]
    NotFree(f64, f64),
    #[error("goal unreachable")]
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub agent_radius: f64,
    /// Extra clearance beyond the agent radius for preferred cells.
    pub safety_margin: f64,
    /// Cost multiplier for cells the agent fits in but without the margin.
    pub tight_penalty: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            agent_radius: DEFAULT_AGENT_RADIUS,
            safety_margin: 0.07,
            tight_penalty: 5.0,
        }
    }
}

impl PlannerConfig {
    pub fn preferred_clearance(&self) -> f64 {
        self.agent_radius + self.safety_margin
    }

    fn cost_factor(&self, world: &World, c: Cell) -> Option<f64> {
        if !world.is_free(c) {
            return None;
        }
        let cl = world.clearance(c);
        if cl >= self.preferred_clearance() {
            Some(1.0)
        } else if cl >= self.agent_radius {
            Some(self.tight_penalty)
        } else {
            None
        }
    }
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    idx: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, ties broken by lower index
        other.f.total_cmp(&self.f).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// 8-connected A* from the cell containing `from` to the cell containing
/// `to`. Step cost is the move length times the entered cell's cost factor;
/// the heuristic is straight-line distance. Diagonal moves may not cut
/// corners. The start and goal cells only need to be free.
pub fn plan(world: &World, from: [f64; 2], to: [f64; 2], cfg: &PlannerConfig) -> Result<Vec<Cell>, PlanError> {
    let start = world
        .cell_at(from[0], from[1])
        .filter(|&c| world.is_free(c))
        .ok_or(PlanError::NotFree(from[0], from[1]))?;
    let goal = world
        .cell_at(to[0], to[1])
        .filter(|&c| world.is_free(c))
        .ok_or(PlanError::NotFree(to[0], to[1]))?;
    let (w, h) = (world.width(), world.height());
    let res = world.resolution();
    let idx = |c: Cell| c.y * w + c.x;
    let factor = |c: Cell| {
        if c == start || c == goal {
            Some(1.0)
        } else {
            cfg.cost_factor(world, c)
        }
    };
    let heur = |c: Cell| {
        let dx = c.x as f64 - goal.x as f64;
        let dy = c.y as f64 - goal.y as f64;
        dx.hypot(dy) * res
    };

    let mut g = vec![f64::INFINITY; w * h];
    let mut parent = vec![usize::MAX; w * h];
    let mut closed = vec![false; w * h];
    let mut open = BinaryHeap::new();
    g[idx(start)] = 0.0;
    open.push(Open {
        f: heur(start),
        idx: idx(start),
    });

    while let Some(Open { idx: i, .. }) = open.pop() {
        if closed[i] {
            continue;
        }
        closed[i] = true;
        let c = Cell::new(i % w, i / w);
        if c == goal {
            let mut path = vec![c];
            let mut j = i;
            while parent[j] != usize::MAX {
                j = parent[j];
                path.push(Cell::new(j % w, j / w));
            }
            path.reverse();
            return Ok(path);
        }
        for (dx, dy) in [
            (1i64, 0i64),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ] {
            let (nx, ny) = (c.x as i64 + dx, c.y as i64 + dy);
            if !world.in_bounds(nx, ny) {
                continue;
            }
            let n = Cell::new(nx as usize, ny as usize);
            let Some(f) = factor(n) else { continue };
            if dx != 0 && dy != 0 {
                let a = Cell::new(nx as usize, c.y);
                let b = Cell::new(c.x, ny as usize);
                if factor(a).is_none() || factor(b).is_none() {
                    continue;
                }
            }
            let step = if dx != 0 && dy != 0 {
                std::f64::consts::SQRT_2
            } else {
                1.0
            } * res
                * f;
            let ng = g[i] + step;
            let ni = idx(n);
            if ng < g[ni] {
                g[ni] = ng;
                parent[ni] = i;
                open.push(Open {
                    f: ng + heur(n),
                    idx: ni,
                });
            }
        }
    }
    Err(PlanError::Unreachable)
}

/// Whether every cell the segment touches is free with at least
/// `min_clearance`.
pub fn line_of_sight(world: &World, a: [f64; 2], b: [f64; 2], min_clearance: f64) -> bool {
    let cells = segment_cells(world.width(), world.height(), world.resolution(), a, b);
    !cells.is_empty()
        && cells
            .iter()
            .all(|&c| world.is_free(c) && world.clearance(c) >= min_clearance)
}

/// Greedy string pulling: from `start`, jump to the farthest path cell centre
/// in line of sight, repeat, and finish exactly at `goal`.
pub fn smooth_path(
    world: &World,
    start: [f64; 2],
    goal: [f64; 2],
    cells: &[Cell],
    min_clearance: f64,
) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = cells.iter().map(|&c| world.cell_center(c)).collect();
    if let Some(last) = pts.last_mut() {
        *last = goal;
    } else {
        pts.push(goal);
    }
    let mut out = vec![start];
    let mut cur = start;
    let mut i = 0;
    while i < pts.len() {
        let mut best = i;
        for j in (i..pts.len()).rev() {
            if line_of_sight(world, cur, pts[j], min_clearance) {
                best = j;
                break;
            }
        }
        cur = pts[best];
        if out.last() != Some(&cur) {
            out.push(cur);
        }
        i = best + 1;
    }
    out
}

pub fn polyline_length(pts: &[[f64; 2]]) -> f64 {
    pts.windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum()
}

/// Points at every multiple of `spacing` meters of arc length along the
/// polyline, plus the final endpoint.
pub fn resample(pts: &[[f64; 2]], spacing: f64) -> Vec<[f64; 2]> {
    let Some(&last) = pts.last() else { return Vec::new() };
    let total = polyline_length(pts);
    let mut out = Vec::new();
    let mut seg = 0;
    let mut seg_start = 0.0;
    let mut k = 0usize;
    loop {
        let s = k as f64 * spacing;
        if s >= total - 1e-9 {
            break;
        }
        loop {
            let (a, b) = (pts[seg], pts[seg + 1]);
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if s <= seg_start + len || seg + 2 == pts.len() {
                let t = if len > 0.0 {
                    ((s - seg_start) / len).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                break;
            }
            seg_start += len;
            seg += 1;
        }
        k += 1;
    }
    out.push(last);
    out
}
