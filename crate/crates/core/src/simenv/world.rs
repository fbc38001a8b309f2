//! 2.5D grid worlds and their text format.
//!
//! ```text
//! # comment
//! name apartment_small
//! resolution 0.05
//! block 4
//! wall_height 2.5
//! category c chair 0.45
//! grid
//! ##########
//! #S...c...#
//! ##########
//! ```
//!
//! Each grid character expands to a `block x block` patch of cells. `#` is
//! wall, `.` free floor, `S` a free spawn point, and every `category` line
//! binds a glyph to an object category and its height. The first grid line
//! is the top (largest y) row of the world.

use std::path::Path;

use thiserror::Error;

use crate::geometry::{AgentPose, Cell, HeightBand};
use crate::semantic_map::CategoryTable;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}, column {col}: {msg}")]
    Cell { line: usize, col: usize, msg: String },
    #[error("unknown category {name:?} on line {line}")]
    UnknownCategory { line: usize, name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Free,
    Wall,
    Object,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldCategory {
    pub glyph: char,
    pub name: String,
    /// Id in the category table the world was loaded against.
    pub table_id: usize,
    pub height: f64,
}

#[derive(Debug, Clone)]
pub struct World {
    pub name: String,
    width: usize,
    height: usize,
    resolution: f64,
    kinds: Vec<CellKind>,
    /// 0 for none, otherwise table id + 1.
    categories: Vec<u16>,
    heights: Vec<f64>,
    clearance: Vec<f64>,
    spawn_points: Vec<AgentPose>,
    declared: Vec<WorldCategory>,
}

/// Clearance values are capped at this distance (meters).
pub const CLEARANCE_CAP: f64 = 1.0;

impl World {
    pub fn load(path: impl AsRef<Path>, table: &CategoryTable) -> Result<Self, WorldError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut world = Self::parse(&text, table)?;
        if world.name.is_empty() {
            world.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(world)
    }

    pub fn parse(text: &str, table: &CategoryTable) -> Result<Self, WorldError> {
        let mut name = String::new();
        let mut resolution = 0.05;
        let mut block = 1usize;
        let mut wall_height = 2.5;
        let mut declared: Vec<WorldCategory> = Vec::new();
        let mut grid: Vec<(usize, Vec<char>)> = Vec::new();
        let mut in_grid = false;

        let perr = |line: usize, msg: String| WorldError::Parse { line, msg };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            if in_grid {
                let row = raw.trim_end();
                if row.is_empty() {
                    continue;
                }
                grid.push((line_no, row.chars().collect()));
                continue;
            }
            let line = raw.split('#').next().unwrap_or("").trim();
            if raw.trim_start().starts_with('#') || line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| perr(line_no, format!("bad number {s:?}: {e}")))
            };
            match parts.as_slice() {
                ["name", n] => name = n.to_string(),
                ["resolution", v] => resolution = num(v)?,
                ["wall_height", v] => wall_height = num(v)?,
                ["block", v] => {
                    block = v.parse().map_err(|_| perr(line_no, format!("bad block size {v:?}")))?;
                    if block == 0 {
                        return Err(perr(line_no, "block must be positive".into()));
                    }
                }
                ["category", glyph, cat, h] => {
                    let mut chars = glyph.chars();
                    let g = chars.next().unwrap();
                    if chars.next().is_some() || "#.S".contains(g) {
                        return Err(perr(line_no, format!("invalid category glyph {glyph:?}")));
                    }
                    if declared.iter().any(|d| d.glyph == g) {
                        return Err(perr(line_no, format!("glyph {g:?} declared twice")));
                    }
                    let table_id = table.id_of(cat).ok_or_else(|| WorldError::UnknownCategory {
                        line: line_no,
                        name: cat.to_string(),
                    })?;
                    let height = num(h)?;
                    if !(height > 0.0) {
                        return Err(perr(line_no, "category height must be positive".into()));
                    }
                    declared.push(WorldCategory {
                        glyph: g,
                        name: cat.to_string(),
                        table_id,
                        height,
                    });
                }
                ["grid"] => in_grid = true,
                _ => return Err(perr(line_no, format!("unrecognized directive {line:?}"))),
            }
        }
        if !(resolution > 0.0) {
            return Err(perr(0, "resolution must be positive".into()));
        }
        if !(wall_height > 0.0) {
            return Err(perr(0, "wall_height must be positive".into()));
        }
        if grid.is_empty() {
            return Err(perr(0, "missing grid section".into()));
        }
        let cols = grid[0].1.len();
        if let Some((line, row)) = grid.iter().find(|(_, r)| r.len() != cols) {
            return Err(perr(*line, format!("row has {} columns, expected {cols}", row.len())));
        }

        let rows = grid.len();
        let (width, height) = (cols * block, rows * block);
        let mut kinds = vec![CellKind::Free; width * height];
        let mut categories = vec![0u16; width * height];
        let mut heights = vec![0.0; width * height];
        let mut spawn_points = Vec::new();
        for (r, (line, row)) in grid.iter().enumerate() {
            for (c, &ch) in row.iter().enumerate() {
                let boundary = r == 0 || c == 0 || r + 1 == rows || c + 1 == cols;
                let (kind, cat, h) = match ch {
                    '#' => (CellKind::Wall, 0, wall_height),
                    '.' | 'S' => (CellKind::Free, 0, 0.0),
                    g => match declared.iter().find(|d| d.glyph == g) {
                        Some(d) => (CellKind::Object, d.table_id as u16 + 1, d.height),
                        None => {
                            return Err(WorldError::Cell {
                                line: *line,
                                col: c + 1,
                                msg: format!("unknown glyph {g:?}"),
                            })
                        }
                    },
                };
                if boundary && kind != CellKind::Wall {
                    return Err(WorldError::Cell {
                        line: *line,
                        col: c + 1,
                        msg: "boundary cells must be walls".into(),
                    });
                }
                let y0 = (rows - 1 - r) * block;
                let x0 = c * block;
                for y in y0..y0 + block {
                    for x in x0..x0 + block {
                        let i = y * width + x;
                        kinds[i] = kind;
                        categories[i] = cat;
                        heights[i] = h;
                    }
                }
                if ch == 'S' {
                    // centre of the cell at the middle of the patch
                    let cx = ((x0 + block / 2) as f64 + 0.5) * resolution;
                    let cy = ((y0 + block / 2) as f64 + 0.5) * resolution;
                    spawn_points.push((r, c, AgentPose::at(cx, cy, 0.0)));
                }
            }
        }
        spawn_points.sort_by_key(|(r, c, _)| (*r, *c));
        let mut world = Self {
            name,
            width,
            height,
            resolution,
            kinds,
            categories,
            heights,
            clearance: Vec::new(),
            spawn_points: spawn_points.into_iter().map(|(_, _, p)| p).collect(),
            declared,
        };
        world.clearance = world.compute_clearance();
        Ok(world)
    }

    /// Distance from each cell centre to the nearest non-free cell, capped at
    /// [`CLEARANCE_CAP`]. Non-free cells get 0.
    fn compute_clearance(&self) -> Vec<f64> {
        let reach = (CLEARANCE_CAP / self.resolution).ceil() as i64 + 1;
        let blocked: Vec<(i64, i64)> = (0..self.height as i64)
            .flat_map(|y| (0..self.width as i64).map(move |x| (x, y)))
            .filter(|&(x, y)| self.kinds[y as usize * self.width + x as usize] != CellKind::Free)
            .collect();
        let mut out = vec![CLEARANCE_CAP; self.width * self.height];
        // squared cell-box distance in cell units from a centre offset (dx, dy)
        let box_dist2 = |dx: i64, dy: i64| {
            let ax = (dx.abs() as f64 - 0.5).max(0.0);
            let ay = (dy.abs() as f64 - 0.5).max(0.0);
            ax * ax + ay * ay
        };
        for &(bx, by) in &blocked {
            out[by as usize * self.width + bx as usize] = 0.0;
            for y in (by - reach).max(0)..=(by + reach).min(self.height as i64 - 1) {
                for x in (bx - reach).max(0)..=(bx + reach).min(self.width as i64 - 1) {
                    let i = y as usize * self.width + x as usize;
                    if out[i] == 0.0 {
                        continue;
                    }
                    let d = box_dist2(x - bx, y - by).sqrt() * self.resolution;
                    if d < out[i] {
                        out[i] = d;
                    }
                }
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn spawn_points(&self) -> &[AgentPose] {
        &self.spawn_points
    }

    /// Categories declared by the world file, in declaration order.
    pub fn declared_categories(&self) -> &[WorldCategory] {
        &self.declared
    }

    fn idx(&self, cell: Cell) -> usize {
        cell.y * self.width + cell.x
    }

    pub fn kind(&self, cell: Cell) -> CellKind {
        self.kinds[self.idx(cell)]
    }

    /// 0 for free and wall cells, otherwise table id + 1.
    pub fn category(&self, cell: Cell) -> u16 {
        self.categories[self.idx(cell)]
    }

    pub fn cell_height(&self, cell: Cell) -> f64 {
        self.heights[self.idx(cell)]
    }

    pub fn clearance(&self, cell: Cell) -> f64 {
        self.clearance[self.idx(cell)]
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        if !(x.is_finite() && y.is_finite()) {
            return None;
        }
        let cx = (x / self.resolution).floor() as i64;
        let cy = (y / self.resolution).floor() as i64;
        self.in_bounds(cx, cy).then(|| Cell::new(cx as usize, cy as usize))
    }

    pub fn cell_center(&self, cell: Cell) -> [f64; 2] {
        [
            (cell.x as f64 + 0.5) * self.resolution,
            (cell.y as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.kind(cell) == CellKind::Free
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_some_and(|c| self.is_free(c))
    }

    /// Whether a disk of `radius` swept from `from` to `to` touches any
    /// non-free cell (or leaves the grid).
    pub fn sweep_collides(&self, from: [f64; 2], to: [f64; 2], radius: f64) -> bool {
        let res = self.resolution;
        let lo_x = ((from[0].min(to[0]) - radius) / res).floor() as i64;
        let hi_x = ((from[0].max(to[0]) + radius) / res).floor() as i64;
        let lo_y = ((from[1].min(to[1]) - radius) / res).floor() as i64;
        let hi_y = ((from[1].max(to[1]) + radius) / res).floor() as i64;
        for y in lo_y..=hi_y {
            for x in lo_x..=hi_x {
                if self.in_bounds(x, y) && self.is_free(Cell::new(x as usize, y as usize)) {
                    continue;
                }
                let bmin = [x as f64 * res, y as f64 * res];
                let bmax = [bmin[0] + res, bmin[1] + res];
                if segment_box_distance(from, to, bmin, bmax) < radius {
                    return true;
                }
            }
        }
        false
    }

    pub fn disk_collides(&self, at: [f64; 2], radius: f64) -> bool {
        self.sweep_collides(at, at, radius)
    }

    /// Cells a depth sensor moving through the free space around `seed`
    /// can register as obstacles: faces of non-free cells (4-adjacent to
    /// reachable floor) that rise into `band`, plus whole object cells whose
    /// tops lie inside the band and below `camera_height`.
    pub fn obstacle_ground_truth(&self, seed: Cell, band: HeightBand, camera_height: f64) -> Vec<Cell> {
        let reach = self.reachable_free(seed);
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let c = Cell::new(x, y);
                let h = self.cell_height(c);
                if self.is_free(c) || h < band.low {
                    continue;
                }
                let top_visible = self.kind(c) == CellKind::Object && h <= band.high && h < camera_height;
                let face = [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    self.in_bounds(nx, ny) && reach[ny as usize * self.width + nx as usize]
                });
                if face || top_visible {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Flood fill of free cells 4-connected to `seed`.
    pub fn reachable_free(&self, seed: Cell) -> Vec<bool> {
        let mut seen = vec![false; self.width * self.height];
        if !self.is_free(seed) {
            return seen;
        }
        let mut stack = vec![seed];
        seen[self.idx(seed)] = true;
        while let Some(c) = stack.pop() {
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (c.x as i64 + dx, c.y as i64 + dy);
                if !self.in_bounds(nx, ny) {
                    continue;
                }
                let n = Cell::new(nx as usize, ny as usize);
                let i = self.idx(n);
                if !seen[i] && self.is_free(n) {
                    seen[i] = true;
                    stack.push(n);
                }
            }
        }
        seen
    }
}

fn point_box_distance(p: [f64; 2], bmin: [f64; 2], bmax: [f64; 2]) -> f64 {
    let dx = (bmin[0] - p[0]).max(0.0).max(p[0] - bmax[0]);
    let dy = (bmin[1] - p[1]).max(0.0).max(p[1] - bmax[1]);
    dx.hypot(dy)
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * vx + (p[1] - a[1]) * vy) / len2).clamp(0.0, 1.0)
    };
    (p[0] - a[0] - t * vx).hypot(p[1] - a[1] - t * vy)
}

/// Liang-Barsky clip test.
fn segment_hits_box(a: [f64; 2], b: [f64; 2], bmin: [f64; 2], bmax: [f64; 2]) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..2 {
        if d[axis] == 0.0 {
            if a[axis] < bmin[axis] || a[axis] > bmax[axis] {
                return false;
            }
            continue;
        }
        let inv = 1.0 / d[axis];
        let (mut ta, mut tb) = ((bmin[axis] - a[axis]) * inv, (bmax[axis] - a[axis]) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Exact distance between segment `a-b` and an axis-aligned box.
pub fn segment_box_distance(a: [f64; 2], b: [f64; 2], bmin: [f64; 2], bmax: [f64; 2]) -> f64 {
    if segment_hits_box(a, b, bmin, bmax) {
        return 0.0;
    }
    let corners = [bmin, [bmax[0], bmin[1]], bmax, [bmin[0], bmax[1]]];
    corners
        .iter()
        .map(|&c| point_segment_distance(c, a, b))
        .chain([point_box_distance(a, bmin, bmax), point_box_distance(b, bmin, bmax)])
        .fold(f64::INFINITY, f64::min)
}
