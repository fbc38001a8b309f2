//! Depth back-projection and top-down grid projection.
//!
//! Frames follow the usual image convention: `u` grows to the right, `v`
//! grows downward. The agent body frame is x forward, y left, z up; the
//! camera optical axis coincides with the body x axis.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),
    #[error("{what} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        what: &'static str,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let a = (angle + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can return exactly 2*pi for tiny negative inputs
    if a >= PI {
        a - 2.0 * PI
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub depth_min: f64,
    pub depth_max: f64,
}

impl Default for CameraIntrinsics {
    /// 160x120 sensor with a 90 degree horizontal field of view.
    fn default() -> Self {
        Self {
            fx: 80.0,
            fy: 80.0,
            cx: 80.0,
            cy: 60.0,
            width: 160,
            height: 120,
            depth_min: 0.1,
            depth_max: 10.0,
        }
    }
}

impl CameraIntrinsics {
    /// Square-pixel intrinsics from a horizontal field of view, principal
    /// point at `(width / 2, height / 2)`.
    pub fn from_hfov(width: usize, height: usize, hfov_deg: f64) -> Result<Self, GeometryError> {
        let f = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        let intr = Self {
            fx: f,
            fy: f,
            cx: (width / 2) as f64,
            cy: (height / 2) as f64,
            width,
            height,
            ..Self::default()
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("sensor resolution must be non-zero");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx outside [0, width)");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy outside [0, height)");
        }
        if !(self.depth_min > 0.0 && self.depth_min < self.depth_max) {
            return bad("depth range must satisfy 0 < depth_min < depth_max");
        }
        Ok(())
    }

    /// Whether a reading counts as a surface return. Readings at or beyond
    /// `depth_max` are sensor saturation and carry no geometry.
    pub fn is_valid_depth(&self, depth: f64) -> bool {
        depth >= self.depth_min && depth < self.depth_max
    }

    /// Body-frame point (forward, left, up) relative to the camera centre for
    /// pixel `(u, v)` at optical-axis depth `depth`.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        [depth, (self.cx - u) * depth / self.fx, (self.cy - v) * depth / self.fy]
    }

    /// Inverse of [`back_project`](Self::back_project): `(u, v, depth)`.
    pub fn project(&self, body: [f64; 3]) -> (f64, f64, f64) {
        let [forward, left, up] = body;
        (
            self.cx - left * self.fx / forward,
            self.cy - up * self.fy / forward,
            forward,
        )
    }
}

/// Planar agent pose plus the (per-episode constant) camera height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub camera_height: f64,
}

pub const DEFAULT_CAMERA_HEIGHT: f64 = 0.88;

impl AgentPose {
    pub fn new(x: f64, y: f64, yaw: f64, camera_height: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
            camera_height,
        }
    }

    pub fn at(x: f64, y: f64, yaw: f64) -> Self {
        Self::new(x, y, yaw, DEFAULT_CAMERA_HEIGHT)
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        (self.x - p[0]).hypot(self.y - p[1])
    }

    /// Body-frame offset (forward, left, up) to world coordinates.
    pub fn body_to_world(&self, body: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let [f, l, u] = body;
        [self.x + f * c - l * s, self.y + f * s + l * c, self.camera_height + u]
    }

    /// World coordinates to the body frame (forward, left, up).
    pub fn world_to_body(&self, world: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let dx = world[0] - self.x;
        let dy = world[1] - self.y;
        [dx * c + dy * s, -dx * s + dy * c, world[2] - self.camera_height]
    }
}

/// Row-major image buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

pub type DepthFrame = Frame<f64>;
pub type SemanticMask = Frame<u16>;

impl<T: Clone> Frame<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T: Copy> Frame<T> {
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// 0 = unlabeled, otherwise category table id + 1.
    pub category: u16,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SemanticPointCloud {
    pub points: Vec<SemanticPoint>,
}

impl SemanticPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_dims<T>(what: &'static str, frame: &Frame<T>, intr: &CameraIntrinsics) -> Result<(), GeometryError> {
    if frame.width != intr.width || frame.height != intr.height || frame.data.len() != frame.width * frame.height {
        return Err(GeometryError::DimensionMismatch {
            what,
            want_w: intr.width,
            want_h: intr.height,
            got_w: frame.width,
            got_h: frame.height,
        });
    }
    Ok(())
}

/// Back-projects every in-range depth pixel into a world-frame point tagged
/// with the mask category at that pixel.
pub fn depth_to_points(
    depth: &DepthFrame,
    mask: &SemanticMask,
    intr: &CameraIntrinsics,
    pose: &AgentPose,
) -> Result<SemanticPointCloud, GeometryError> {
    check_dims("depth", depth, intr)?;
    check_dims("mask", mask, intr)?;

    let mut points = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            let d = depth.get(u, v);
            if !intr.is_valid_depth(d) {
                continue;
            }
            let [x, y, z] = pose.body_to_world(intr.back_project(u as f64, v as f64, d));
            points.push(SemanticPoint {
                x,
                y,
                z,
                category: mask.get(u, v),
            });
        }
    }
    Ok(SemanticPointCloud { points })
}

/// Integer cell coordinates; `x` indexes columns, `y` indexes rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width_cells: usize,
    pub height_cells: usize,
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl GridSpec {
    pub fn new(
        width_cells: usize,
        height_cells: usize,
        resolution: f64,
        origin: [f64; 2],
    ) -> Result<Self, GeometryError> {
        let spec = Self {
            width_cells,
            height_cells,
            resolution,
            origin_x: origin[0],
            origin_y: origin[1],
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid whose centre cell `(W/2, H/2)` has its centre at `(x, y)`.
    pub fn centered_on(
        width_cells: usize,
        height_cells: usize,
        resolution: f64,
        x: f64,
        y: f64,
    ) -> Result<Self, GeometryError> {
        let ox = x - ((width_cells / 2) as f64 + 0.5) * resolution;
        let oy = y - ((height_cells / 2) as f64 + 0.5) * resolution;
        Self::new(width_cells, height_cells, resolution, [ox, oy])
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width_cells == 0 || self.height_cells == 0 {
            return Err(GeometryError::InvalidGrid("grid dimensions must be non-zero".into()));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(GeometryError::InvalidGrid("resolution must be positive".into()));
        }
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(GeometryError::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.width_cells * self.height_cells
    }

    /// Unbounded cell index of a world point.
    pub fn cell_index(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin_x) / self.resolution).floor() as i64,
            ((y - self.origin_y) / self.resolution).floor() as i64,
        )
    }

    pub fn contains_index(&self, ix: i64, iy: i64) -> bool {
        ix >= 0 && iy >= 0 && (ix as usize) < self.width_cells && (iy as usize) < self.height_cells
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<Cell> {
        if !(x.is_finite() && y.is_finite()) {
            return None;
        }
        let (ix, iy) = self.cell_index(x, y);
        self.contains_index(ix, iy).then(|| Cell::new(ix as usize, iy as usize))
    }

    pub fn cell_center(&self, cell: Cell) -> [f64; 2] {
        [
            self.origin_x + (cell.x as f64 + 0.5) * self.resolution,
            self.origin_y + (cell.y as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn center_cell(&self) -> Cell {
        Cell::new(self.width_cells / 2, self.height_cells / 2)
    }
}

/// Vertical band (world z, meters) whose returns count as obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeightBand {
    pub low: f64,
    pub high: f64,
}

impl Default for HeightBand {
    fn default() -> Self {
        Self { low: 0.10, high: 1.50 }
    }
}

impl HeightBand {
    pub fn contains(&self, z: f64) -> bool {
        z >= self.low && z <= self.high
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridHits {
    pub obstacle_cells: BTreeSet<Cell>,
    pub explored_cells: BTreeSet<Cell>,
    /// Keyed by point category (table id + 1); category 0 never appears.
    pub category_cells: BTreeMap<u16, BTreeSet<Cell>>,
    pub out_of_bounds: usize,
}

impl GridHits {
    pub fn is_empty(&self) -> bool {
        self.obstacle_cells.is_empty() && self.explored_cells.is_empty() && self.category_cells.is_empty()
    }
}

pub fn project_to_grid(cloud: &SemanticPointCloud, spec: &GridSpec, band: HeightBand) -> GridHits {
    let mut hits = GridHits::default();
    for p in &cloud.points {
        let Some(cell) = spec.cell_of(p.x, p.y) else {
            hits.out_of_bounds += 1;
            continue;
        };
        hits.explored_cells.insert(cell);
        if band.contains(p.z) {
            hits.obstacle_cells.insert(cell);
        }
        if p.category > 0 {
            hits.category_cells.entry(p.category).or_default().insert(cell);
        }
    }
    hits
}
