//! Annotated semantic map: regions, text anchors, and the rendered raster.

pub mod image;
pub mod labels;
pub mod regions;
pub mod render;

use serde::{Deserialize, Serialize};

pub use image::{Rgb, RgbImage};
pub use labels::{place_labels, BitmapFont, LabelCanvas, LabelPlacement, PixelRect, TextMetrics};
pub use regions::{extract_all_regions, extract_regions, extract_regions_with, CellBox, Connectivity, Region};
pub use render::{render_asm, AnnotatedMap, Palette};

use crate::semantic_map::SemanticMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationConfig {
    /// Minimum region area in cells.
    pub tau: usize,
    /// Pixels per map cell.
    pub render_scale: u32,
    pub connectivity: Connectivity,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        Self {
            tau: 10,
            render_scale: 2,
            connectivity: Connectivity::Eight,
        }
    }
}

/// Region extraction, label layout and rendering in one call.
pub fn annotate(map: &SemanticMap, cfg: &AnnotationConfig, palette: &Palette) -> AnnotatedMap {
    let regions = extract_all_regions(map, cfg.tau, cfg.connectivity);
    let canvas = LabelCanvas {
        width_cells: map.spec().width_cells,
        height_cells: map.spec().height_cells,
        render_scale: cfg.render_scale.max(1),
    };
    let placements = place_labels(&regions, map.categories(), canvas, &BitmapFont);
    render_asm(map, &placements, palette, canvas.render_scale)
}
