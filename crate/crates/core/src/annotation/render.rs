use serde::{Deserialize, Serialize};

use super::image::{Rgb, RgbImage};
use super::labels::{BitmapFont, LabelPlacement};
use crate::geometry::Cell;
use crate::semantic_map::{SemanticMap, CH_AGENT, CH_EXPLORED, CH_OBSTACLE, CH_TRAJECTORY};

pub const UNEXPLORED: Rgb = [48, 48, 48];
pub const FREE: Rgb = [232, 232, 232];
pub const OBSTACLE: Rgb = [128, 128, 128];
pub const TRAJECTORY: Rgb = [220, 30, 30];
pub const AGENT: Rgb = [30, 90, 235];
pub const HEADING: Rgb = [255, 200, 0];
pub const LABEL_INK: Rgb = [0, 0, 0];
pub const LABEL_HALO: Rgb = [255, 255, 255];

const BASE_PALETTE: [Rgb; 16] = [
    [31, 119, 180],
    [44, 160, 44],
    [148, 103, 189],
    [140, 86, 75],
    [23, 190, 207],
    [188, 189, 34],
    [227, 119, 194],
    [255, 127, 14],
    [174, 199, 232],
    [152, 223, 138],
    [197, 176, 213],
    [196, 156, 148],
    [158, 218, 229],
    [219, 219, 141],
    [247, 182, 210],
    [255, 187, 120],
];

/// Category id -> fill colour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    colors: Vec<Rgb>,
}

impl Palette {
    pub fn new(colors: Vec<Rgb>) -> Self {
        Self { colors }
    }

    /// Fixed qualitative palette, extended deterministically past 16 entries.
    pub fn for_categories(n: usize) -> Self {
        let colors = (0..n)
            .map(|i| {
                if i < BASE_PALETTE.len() {
                    BASE_PALETTE[i]
                } else {
                    let h = (i as u32).wrapping_mul(2_654_435_761);
                    [
                        64 + (h >> 8) as u8 % 160,
                        64 + (h >> 16) as u8 % 160,
                        64 + (h >> 24) as u8 % 160,
                    ]
                }
            })
            .collect();
        Self { colors }
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn color(&self, category: usize) -> Rgb {
        self.colors[category]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedMap {
    pub image: RgbImage,
    pub placements: Vec<LabelPlacement>,
    pub source_step: u64,
}

impl AnnotatedMap {
    pub fn placements_json(&self) -> String {
        serde_json::to_string_pretty(&self.placements).expect("placements serialize")
    }
}

fn fill_cell(img: &mut RgbImage, map: &SemanticMap, scale: u32, cell: Cell, color: Rgb) {
    let h = map.spec().height_cells as u32;
    img.fill_rect(
        cell.x as u32 * scale,
        (h - 1 - cell.y as u32) * scale,
        scale,
        scale,
        color,
    );
}

/// Rasterizes the map with its labels. Layers, bottom to top: unexplored
/// background, explored floor, obstacles, object cells, trajectory, agent
/// disk with a heading tick, visible labels.
///
/// Panics if `palette` has fewer entries than the map has categories.
pub fn render_asm(map: &SemanticMap, placements: &[LabelPlacement], palette: &Palette, scale: u32) -> AnnotatedMap {
    assert!(
        palette.len() >= map.categories().len(),
        "palette does not cover all categories"
    );
    let scale = scale.max(1);
    let spec = map.spec();
    let mut img = RgbImage::new(
        spec.width_cells as u32 * scale,
        spec.height_cells as u32 * scale,
        UNEXPLORED,
    );

    for c in map.channel(CH_EXPLORED).iter_ones() {
        fill_cell(&mut img, map, scale, c, FREE);
    }
    for c in map.channel(CH_OBSTACLE).iter_ones() {
        fill_cell(&mut img, map, scale, c, OBSTACLE);
    }
    for id in 0..map.categories().len() {
        let color = palette.color(id);
        for c in map.object_channel(id).iter_ones() {
            fill_cell(&mut img, map, scale, c, color);
        }
    }
    for c in map.channel(CH_TRAJECTORY).iter_ones() {
        fill_cell(&mut img, map, scale, c, TRAJECTORY);
    }
    for c in map.channel(CH_AGENT).iter_ones() {
        fill_cell(&mut img, map, scale, c, AGENT);
    }
    draw_heading(&mut img, map, scale);

    for p in placements.iter().filter(|p| p.visible) {
        BitmapFont.draw(
            &mut img,
            &p.text,
            p.rendered_bbox.x,
            p.rendered_bbox.y,
            LABEL_INK,
            LABEL_HALO,
        );
    }
    AnnotatedMap {
        image: img,
        placements: placements.to_vec(),
        source_step: map.step_count(),
    }
}

fn draw_heading(img: &mut RgbImage, map: &SemanticMap, scale: u32) {
    let spec = map.spec();
    let cell = map.agent_cell();
    let s = scale as f64;
    let cx = (cell.x as f64 + 0.5) * s;
    let cy = (spec.height_cells as f64 - cell.y as f64 - 0.5) * s;
    let len = map.agent_radius() / spec.resolution * s * 1.6;
    let (sin, cos) = map.agent_yaw().sin_cos();
    let steps = (len.ceil() as i64).max(1) * 2;
    for i in 0..=steps {
        let t = len * i as f64 / steps as f64;
        // image y grows downward
        img.put_clipped((cx + t * cos).floor() as i64, (cy - t * sin).floor() as i64, HEADING);
    }
}
