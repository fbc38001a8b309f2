//! The multi-channel top-down navigation memory.
//!
//! Channel layout: 0 obstacles, 1 explored, 2 agent position, 3 trajectory,
//! then one channel per object category. Every channel is a packed bitset
//! so the footprint depends only on `(C, W, H)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{AgentPose, Cell, GeometryError, GridHits, GridSpec};

pub const CH_OBSTACLE: usize = 0;
pub const CH_EXPLORED: usize = 1;
pub const CH_AGENT: usize = 2;
pub const CH_TRAJECTORY: usize = 3;
pub const CH_OBJECT_BASE: usize = 4;

pub const DEFAULT_MAP_CELLS: usize = 480;
pub const DEFAULT_RESOLUTION: f64 = 0.05;
pub const DEFAULT_AGENT_RADIUS: f64 = 0.18;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("category table must contain at least one category")]
    NoCategories,
    #[error("invalid category table: {0}")]
    InvalidCategories(String),
    #[error("pose ({x:.3}, {y:.3}) falls outside the map; episode aborted")]
    OutOfBounds { x: f64, y: f64 },
    #[error("hit category {0} has no map channel")]
    UnknownCategory(u16),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("snapshot: {0}")]
    Snapshot(#[from] SnapshotError),
}

#[derive(Debug, Error, PartialEq)]
pub enum SnapshotError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed trailer: {0}")]
    Trailer(String),
    #[error("invalid contents: {0}")]
    Invalid(String),
}

/// Dense id -> name table for the object categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTable {
    names: Vec<String>,
}

pub const DEFAULT_CATEGORIES: [&str; 16] = [
    "chair", "table", "sofa", "bed", "plant", "toilet", "tv", "sink", "bathtub", "cabinet", "counter", "shelf",
    "fridge", "stool", "lamp", "door",
];

impl CategoryTable {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, MapError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(MapError::NoCategories);
        }
        for (i, n) in names.iter().enumerate() {
            if n.trim().is_empty() {
                return Err(MapError::InvalidCategories(format!("category {i} has an empty name")));
            }
            if names[..i].contains(n) {
                return Err(MapError::InvalidCategories(format!("duplicate category name {n:?}")));
            }
        }
        if names.len() > u16::MAX as usize - 1 {
            return Err(MapError::InvalidCategories("too many categories".into()));
        }
        Ok(Self { names })
    }

    pub fn default_indoor() -> Self {
        Self::new(DEFAULT_CATEGORIES).expect("default categories are valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl Default for CategoryTable {
    fn default() -> Self {
        Self::default_indoor()
    }
}

/// Fixed-size bitset over a `width x height` grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitGrid {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl BitGrid {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            words: vec![0; (width * height).div_ceil(64)],
        }
    }

    #[inline]
    fn index(&self, cell: Cell) -> usize {
        debug_assert!(cell.x < self.width && cell.y < self.height);
        cell.y * self.width + cell.x
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, cell: Cell) -> bool {
        let i = self.index(cell);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, cell: Cell) {
        let i = self.index(cell);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn clear_all(&mut self) {
        self.words.fill(0);
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Set cells in row-major order.
    pub fn iter_ones(&self) -> impl Iterator<Item = Cell> + '_ {
        let width = self.width;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                let i = wi * 64 + bit;
                Some(Cell::new(i % width, i / width))
            })
        })
    }

    pub fn is_subset_of(&self, other: &BitGrid) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Packed bytes, bit `y * width + x` at byte `i / 8`, LSB first.
    pub fn packed_len(&self) -> usize {
        (self.width * self.height).div_ceil(8)
    }

    fn write_packed(&self, out: &mut Vec<u8>) {
        let n = self.packed_len();
        let start = out.len();
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(start + n);
    }

    fn read_packed(width: usize, height: usize, bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut grid = Self::new(width, height);
        let bits = width * height;
        for (wi, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            grid.words[wi] = u64::from_le_bytes(buf);
        }
        if !bits.is_multiple_of(64) {
            let last = grid.words.len() - 1;
            if grid.words[last] >> (bits % 64) != 0 {
                return Err(SnapshotError::Invalid("padding bits set".into()));
            }
        }
        Ok(grid)
    }
}

/// Cells of the rasterized segment from `a` to `b`, both ends included.
pub fn bresenham(a: Cell, b: Cell) -> Vec<Cell> {
    let (mut x, mut y) = (a.x as i64, a.y as i64);
    let (x1, y1) = (b.x as i64, b.y as i64);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy) as usize + 1);
    loop {
        out.push(Cell::new(x as usize, y as usize));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    spec: GridSpec,
    categories: CategoryTable,
    channels: Vec<BitGrid>,
    step_count: u64,
    agent_cell: Cell,
    agent_yaw: f64,
    agent_radius: f64,
}

impl SemanticMap {
    /// Fresh map with the agent marker and trajectory seed at `(W/2, H/2)`.
    pub fn new(spec: GridSpec, categories: CategoryTable, agent_radius: f64) -> Result<Self, MapError> {
        spec.validate()?;
        if categories.is_empty() {
            return Err(MapError::NoCategories);
        }
        let channels = (0..CH_OBJECT_BASE + categories.len())
            .map(|_| BitGrid::new(spec.width_cells, spec.height_cells))
            .collect();
        let center = spec.center_cell();
        let mut map = Self {
            spec,
            categories,
            channels,
            step_count: 0,
            agent_cell: center,
            agent_yaw: 0.0,
            agent_radius,
        };
        map.mark_agent(center);
        map.channels[CH_TRAJECTORY].set(center);
        Ok(map)
    }

    /// Map of `width x height` cells whose centre cell holds `start`.
    pub fn for_episode(
        width: usize,
        height: usize,
        resolution: f64,
        start: &AgentPose,
        categories: CategoryTable,
        agent_radius: f64,
    ) -> Result<Self, MapError> {
        let spec = GridSpec::centered_on(width, height, resolution, start.x, start.y)?;
        let mut map = Self::new(spec, categories, agent_radius)?;
        map.agent_yaw = start.yaw;
        Ok(map)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn categories(&self) -> &CategoryTable {
        &self.categories
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, index: usize) -> &BitGrid {
        &self.channels[index]
    }

    /// Channel for object category `id` (table id, zero-based).
    pub fn object_channel(&self, id: usize) -> &BitGrid {
        &self.channels[CH_OBJECT_BASE + id]
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn agent_cell(&self) -> Cell {
        self.agent_cell
    }

    pub fn agent_yaw(&self) -> f64 {
        self.agent_yaw
    }

    pub fn agent_radius(&self) -> f64 {
        self.agent_radius
    }

    /// Cells covered by the agent disk centred on `center`, clipped to the grid.
    pub fn agent_disk(&self, center: Cell) -> Vec<Cell> {
        let r_cells = self.agent_radius / self.spec.resolution;
        let reach = r_cells.floor() as i64;
        let mut out = Vec::new();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                if ((dx * dx + dy * dy) as f64) > r_cells * r_cells {
                    continue;
                }
                let (x, y) = (center.x as i64 + dx, center.y as i64 + dy);
                if self.spec.contains_index(x, y) {
                    out.push(Cell::new(x as usize, y as usize));
                }
            }
        }
        out
    }

    fn mark_agent(&mut self, center: Cell) {
        self.channels[CH_AGENT].clear_all();
        for c in self.agent_disk(center) {
            self.channels[CH_AGENT].set(c);
        }
    }

    /// Folds one timestep of observations and the new pose into the map.
    /// Nothing is modified when an error is returned.
    pub fn update(&mut self, hits: &GridHits, pose: &AgentPose) -> Result<(), MapError> {
        let cell = self
            .spec
            .cell_of(pose.x, pose.y)
            .ok_or(MapError::OutOfBounds { x: pose.x, y: pose.y })?;
        if let Some(&bad) = hits
            .category_cells
            .keys()
            .find(|&&k| k == 0 || k as usize > self.categories.len())
        {
            return Err(MapError::UnknownCategory(bad));
        }

        for &c in &hits.explored_cells {
            self.channels[CH_EXPLORED].set(c);
        }
        for &c in &hits.obstacle_cells {
            self.channels[CH_OBSTACLE].set(c);
            // keep obstacles within explored even for hand-built hits
            self.channels[CH_EXPLORED].set(c);
        }
        for (&cat, cells) in &hits.category_cells {
            let ch = CH_OBJECT_BASE + cat as usize - 1;
            for &c in cells {
                self.channels[ch].set(c);
            }
        }
        for c in bresenham(self.agent_cell, cell) {
            self.channels[CH_TRAJECTORY].set(c);
        }
        self.mark_agent(cell);
        self.agent_cell = cell;
        self.agent_yaw = pose.yaw;
        self.step_count += 1;
        Ok(())
    }

    /// Exact size of [`to_snapshot`](Self::to_snapshot) output.
    pub fn state_bytes(&self) -> usize {
        HEADER_LEN
            + FIXED_FIELDS_LEN
            + self.channels.iter().map(BitGrid::packed_len).sum::<usize>()
            + 4
            + self.trailer_json().len()
            + 4
    }

    fn trailer_json(&self) -> Vec<u8> {
        serde_json::to_vec(&Trailer {
            category_names: self.categories.names.clone(),
        })
        .expect("trailer serializes")
    }

    /// Little-endian binary snapshot; the layout is documented in the README.
    pub fn to_snapshot(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.state_bytes());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&(self.channels.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.width_cells as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.height_cells as u32).to_le_bytes());
        out.extend_from_slice(&self.spec.resolution.to_le_bytes());
        out.extend_from_slice(&self.spec.origin_x.to_le_bytes());
        out.extend_from_slice(&self.spec.origin_y.to_le_bytes());
        out.extend_from_slice(&self.agent_radius.to_le_bytes());
        out.extend_from_slice(&self.step_count.to_le_bytes());
        out.extend_from_slice(&(self.agent_cell.x as u32).to_le_bytes());
        out.extend_from_slice(&(self.agent_cell.y as u32).to_le_bytes());
        out.extend_from_slice(&self.agent_yaw.to_le_bytes());
        for ch in &self.channels {
            ch.write_packed(&mut out);
        }
        let trailer = self.trailer_json();
        out.extend_from_slice(&(trailer.len() as u32).to_le_bytes());
        out.extend_from_slice(&trailer);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != SNAPSHOT_MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(SnapshotError::UnsupportedVersion(version));
        }
        let _flags = r.u32()?;
        let c = r.u32()? as usize;
        let w = r.u32()? as usize;
        let h = r.u32()? as usize;
        let resolution = r.f64()?;
        let origin_x = r.f64()?;
        let origin_y = r.f64()?;
        let agent_radius = r.f64()?;
        let step_count = r.u64()?;
        let agent_cell = Cell::new(r.u32()? as usize, r.u32()? as usize);
        let agent_yaw = r.f64()?;

        if c <= CH_OBJECT_BASE || w == 0 || h == 0 {
            return Err(SnapshotError::Invalid(format!("bad dimensions C={c} W={w} H={h}")));
        }
        let per = (w * h).div_ceil(8);
        let need = c
            .checked_mul(per)
            .and_then(|n| n.checked_add(r.pos + 8))
            .ok_or_else(|| SnapshotError::Invalid("dimensions overflow".into()))?;
        if bytes.len() < need {
            return Err(SnapshotError::Truncated {
                need,
                have: bytes.len(),
            });
        }
        // verify the checksum before trusting any length field beyond this point
        let body_len = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
        let computed = crc32fast::hash(&bytes[..body_len]);
        if stored != computed {
            return Err(SnapshotError::Checksum { stored, computed });
        }
        let mut channels = Vec::with_capacity(c);
        for _ in 0..c {
            channels.push(BitGrid::read_packed(w, h, r.take(per)?)?);
        }
        let tlen = r.u32()? as usize;
        let trailer: Trailer =
            serde_json::from_slice(r.take(tlen)?).map_err(|e| SnapshotError::Trailer(e.to_string()))?;
        if r.pos != body_len {
            return Err(SnapshotError::Invalid("trailing bytes after trailer".into()));
        }
        let categories =
            CategoryTable::new(trailer.category_names).map_err(|e| SnapshotError::Trailer(e.to_string()))?;
        if categories.len() + CH_OBJECT_BASE != c {
            return Err(SnapshotError::Invalid(format!(
                "{} category names for {} object channels",
                categories.len(),
                c - CH_OBJECT_BASE
            )));
        }
        let spec =
            GridSpec::new(w, h, resolution, [origin_x, origin_y]).map_err(|e| SnapshotError::Invalid(e.to_string()))?;
        if agent_cell.x >= w || agent_cell.y >= h {
            return Err(SnapshotError::Invalid("agent cell outside grid".into()));
        }
        Ok(Self {
            spec,
            categories,
            channels,
            step_count,
            agent_cell,
            agent_yaw,
            agent_radius,
        })
    }
}

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"MNSEMMAP";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;
const FIXED_FIELDS_LEN: usize = 3 * 4 + 4 * 8 + 8 + 2 * 4 + 8;

#[derive(Serialize, Deserialize)]
struct Trailer {
    category_names: Vec<String>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(SnapshotError::Truncated {
                need: self.pos.saturating_add(n),
                have: self.bytes.len(),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
