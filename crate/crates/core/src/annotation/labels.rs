//! Text anchors and collision-free label layout.

use font8x8::{UnicodeFonts, BASIC_FONTS};
use serde::{Deserialize, Serialize};

use super::image::{Rgb, RgbImage};
use super::regions::Region;
use crate::semantic_map::CategoryTable;

/// Maximum number of spiral rings tried before a label is hidden.
pub const MAX_NUDGE_RINGS: i64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: i64,
    pub y: i64,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub fn intersects(&self, o: &PixelRect) -> bool {
        self.x < o.x + o.w as i64
            && o.x < self.x + self.w as i64
            && self.y < o.y + o.h as i64
            && o.y < self.y + self.h as i64
    }

    pub fn inside(&self, width: u32, height: u32) -> bool {
        self.x >= 0 && self.y >= 0 && self.x + self.w as i64 <= width as i64 && self.y + self.h as i64 <= height as i64
    }

    fn shifted(&self, dx: i64, dy: i64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPlacement {
    pub text: String,
    pub category: usize,
    /// Region centroid, `(row, col)` in map cells.
    pub anchor: (f64, f64),
    pub rendered_bbox: PixelRect,
    pub visible: bool,
}

/// Pixel extent of a rendered string, halo included.
pub trait TextMetrics {
    fn extent(&self, text: &str) -> (u32, u32);
}

impl<F: Fn(&str) -> (u32, u32)> TextMetrics for F {
    fn extent(&self, text: &str) -> (u32, u32) {
        self(text)
    }
}

/// Fixed 8x8 bitmap font with a one-pixel halo on every side.
#[derive(Debug, Clone, Copy, Default)]
pub struct BitmapFont;

impl BitmapFont {
    pub const GLYPH: u32 = 8;
    pub const HALO: u32 = 1;

    fn glyph(ch: char) -> [u8; 8] {
        BASIC_FONTS
            .get(ch)
            .or_else(|| BASIC_FONTS.get('?'))
            .expect("basic font has '?'")
    }

    /// Draws `text` with its halo box's top-left corner at `(x, y)`.
    pub fn draw(&self, img: &mut RgbImage, text: &str, x: i64, y: i64, ink: Rgb, halo: Rgb) {
        let ox = x + Self::HALO as i64;
        let oy = y + Self::HALO as i64;
        let pixels: Vec<(i64, i64)> = text
            .chars()
            .enumerate()
            .flat_map(|(i, ch)| {
                let rows = Self::glyph(ch);
                (0..8i64).flat_map(move |gy| {
                    (0..8i64)
                        .filter(move |&gx| rows[gy as usize] >> gx & 1 == 1)
                        .map(move |gx| (i as i64 * Self::GLYPH as i64 + gx, gy))
                })
            })
            .collect();
        for &(px, py) in &pixels {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    img.put_clipped(ox + px + dx, oy + py + dy, halo);
                }
            }
        }
        for &(px, py) in &pixels {
            img.put_clipped(ox + px, oy + py, ink);
        }
    }
}

impl TextMetrics for BitmapFont {
    fn extent(&self, text: &str) -> (u32, u32) {
        (
            text.chars().count() as u32 * Self::GLYPH + 2 * Self::HALO,
            Self::GLYPH + 2 * Self::HALO,
        )
    }
}

/// Raster geometry the labels are laid out on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelCanvas {
    pub width_cells: usize,
    pub height_cells: usize,
    pub render_scale: u32,
}

impl LabelCanvas {
    pub fn pixel_size(&self) -> (u32, u32) {
        (
            self.width_cells as u32 * self.render_scale,
            self.height_cells as u32 * self.render_scale,
        )
    }

    /// Pixel position of a `(row, col)` cell coordinate's centre. Rows are
    /// flipped so that +y points up in the image.
    pub fn to_pixel(&self, row: f64, col: f64) -> (f64, f64) {
        let s = self.render_scale as f64;
        ((col + 0.5) * s, (self.height_cells as f64 - row - 0.5) * s)
    }
}

fn spiral_offsets(rings: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for k in 1..=rings {
        let mut ring: Vec<(i64, i64)> = (-k..=k)
            .flat_map(|dy| (-k..=k).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx.abs().max(dy.abs()) == k)
            .collect();
        // nearest first, then a fixed angular order starting straight up
        ring.sort_by(|a, b| {
            let da = a.0 * a.0 + a.1 * a.1;
            let db = b.0 * b.0 + b.1 * b.1;
            da.cmp(&db).then_with(|| {
                let ang = |p: &(i64, i64)| (p.0 as f64).atan2(-p.1 as f64).rem_euclid(std::f64::consts::TAU);
                ang(a).total_cmp(&ang(b))
            })
        });
        out.extend(ring);
    }
    out
}

/// One placement per region, processed largest area first. A label that
/// collides with an already visible one is nudged along a square spiral;
/// if no free spot is found within [`MAX_NUDGE_RINGS`] it is hidden.
pub fn place_labels(
    regions: &[Region],
    names: &CategoryTable,
    canvas: LabelCanvas,
    metrics: &dyn TextMetrics,
) -> Vec<LabelPlacement> {
    let (img_w, img_h) = canvas.pixel_size();
    let mut order: Vec<&Region> = regions.iter().collect();
    order.sort_by_key(|r| std::cmp::Reverse(r.area));

    let offsets = spiral_offsets(MAX_NUDGE_RINGS);
    let mut visible: Vec<PixelRect> = Vec::new();
    let mut out = Vec::with_capacity(order.len());
    for region in order {
        let text = names.name(region.category).unwrap_or("?").to_string();
        let (w, h) = metrics.extent(&text);
        let (px, py) = canvas.to_pixel(region.centroid.0, region.centroid.1);
        let mut base = PixelRect {
            x: px.floor() as i64 - (w / 2) as i64,
            y: py.floor() as i64 - (h / 2) as i64,
            w,
            h,
        };
        // pull labels near the border back inside when they fit at all
        if w <= img_w && h <= img_h {
            base.x = base.x.clamp(0, (img_w - w) as i64);
            base.y = base.y.clamp(0, (img_h - h) as i64);
        }
        let step = (h / 2).max(1) as i64;
        let free = |r: &PixelRect| r.inside(img_w, img_h) && !visible.iter().any(|v| v.intersects(r));

        let chosen = std::iter::once(base)
            .chain(offsets.iter().map(|&(dx, dy)| base.shifted(dx * step, dy * step)))
            .find(|r| free(r));
        let (rect, shown) = match chosen {
            Some(r) => (r, true),
            None => (base, false),
        };
        if shown {
            visible.push(rect);
        }
        out.push(LabelPlacement {
            text,
            category: region.category,
            anchor: region.centroid,
            rendered_bbox: rect,
            visible: shown,
        });
    }
    out
}
