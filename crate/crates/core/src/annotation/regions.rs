//! Connected components of an object channel.

use serde::{Deserialize, Serialize};

use crate::geometry::Cell;
use crate::semantic_map::{BitGrid, SemanticMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

/// A maximal connected set of cells in one object channel. Rows index the
/// map `y` axis and columns the `x` axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub category: usize,
    /// Row-major sorted.
    pub cells: Vec<Cell>,
    pub area: usize,
    /// `(row, col)` mean of member cell coordinates.
    pub centroid: (f64, f64),
    pub bbox: CellBox,
}

impl Region {
    fn from_cells(category: usize, mut cells: Vec<Cell>) -> Self {
        cells.sort_by_key(|c| (c.y, c.x));
        let area = cells.len();
        let (mut sr, mut sc) = (0u64, 0u64);
        let mut bbox = CellBox {
            min_row: usize::MAX,
            min_col: usize::MAX,
            max_row: 0,
            max_col: 0,
        };
        for c in &cells {
            sr += c.y as u64;
            sc += c.x as u64;
            bbox.min_row = bbox.min_row.min(c.y);
            bbox.max_row = bbox.max_row.max(c.y);
            bbox.min_col = bbox.min_col.min(c.x);
            bbox.max_col = bbox.max_col.max(c.x);
        }
        Self {
            category,
            area,
            centroid: (sr as f64 / area as f64, sc as f64 / area as f64),
            bbox,
            cells,
        }
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        parent[i as usize] = parent[parent[i as usize] as usize];
        i = parent[i as usize];
    }
    i
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labelling. Components come back ordered by their
/// first cell in row-major order.
pub fn connected_components(grid: &BitGrid, connectivity: Connectivity) -> Vec<Vec<Cell>> {
    let (w, h) = (grid.width(), grid.height());
    const NONE: u32 = u32::MAX;
    let mut labels = vec![NONE; w * h];
    let mut parent: Vec<u32> = Vec::new();

    for y in 0..h {
        for x in 0..w {
            if !grid.get(Cell::new(x, y)) {
                continue;
            }
            let mut neighbors = [NONE; 4];
            if x > 0 {
                neighbors[0] = labels[y * w + x - 1];
            }
            if y > 0 {
                neighbors[1] = labels[(y - 1) * w + x];
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        neighbors[2] = labels[(y - 1) * w + x - 1];
                    }
                    if x + 1 < w {
                        neighbors[3] = labels[(y - 1) * w + x + 1];
                    }
                }
            }
            let label = match neighbors.iter().copied().filter(|&l| l != NONE).min() {
                Some(l) => l,
                None => {
                    parent.push(parent.len() as u32);
                    (parent.len() - 1) as u32
                }
            };
            for &n in neighbors.iter().filter(|&&n| n != NONE) {
                union(&mut parent, label, n);
            }
            labels[y * w + x] = label;
        }
    }

    let mut slot = vec![NONE; parent.len()];
    let mut out: Vec<Vec<Cell>> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == NONE {
                continue;
            }
            let root = find(&mut parent, l) as usize;
            if slot[root] == NONE {
                slot[root] = out.len() as u32;
                out.push(Vec::new());
            }
            out[slot[root] as usize].push(Cell::new(x, y));
        }
    }
    out
}

/// Components of `grid` with at least `tau` cells, ordered by
/// `(min_row, min_col)` and then by first cell.
pub fn regions_of(grid: &BitGrid, category: usize, tau: usize, connectivity: Connectivity) -> Vec<Region> {
    let tau = tau.max(1);
    let mut regions: Vec<Region> = connected_components(grid, connectivity)
        .into_iter()
        .filter(|cells| cells.len() >= tau)
        .map(|cells| Region::from_cells(category, cells))
        .collect();
    regions.sort_by_key(|r| (r.bbox.min_row, r.bbox.min_col, r.cells[0].y, r.cells[0].x));
    regions
}

/// Regions of object category `category` (table id) in `map`.
pub fn extract_regions(map: &SemanticMap, category: usize, tau: usize) -> Vec<Region> {
    extract_regions_with(map, category, tau, Connectivity::Eight)
}

pub fn extract_regions_with(map: &SemanticMap, category: usize, tau: usize, connectivity: Connectivity) -> Vec<Region> {
    regions_of(map.object_channel(category), category, tau, connectivity)
}

/// Regions across every object channel, category by category.
pub fn extract_all_regions(map: &SemanticMap, tau: usize, connectivity: Connectivity) -> Vec<Region> {
    (0..map.categories().len())
        .flat_map(|id| extract_regions_with(map, id, tau, connectivity))
        .collect()
}
