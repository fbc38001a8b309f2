//! Synthetic depth and semantic frames by ray casting the 2.5D world.

use super::raycast::traverse;
use super::world::World;
use crate::geometry::{AgentPose, CameraIntrinsics, DepthFrame, SemanticMask};

/// Surface returns are pushed this far (meters of forward depth) past the
/// surface so that their back-projection lands inside the cell that was hit
/// rather than on its boundary.
pub const SURFACE_BIAS: f64 = 1e-6;

struct Span {
    d_in: f64,
    d_out: f64,
    top: f64,
    category: u16,
}

/// Renders the depth (forward distance along the optical axis) and per-pixel
/// category (table id + 1, 0 for walls and floor) seen from `pose`.
/// Pixels with nothing in range read `depth_max`.
pub fn render(world: &World, pose: &AgentPose, intr: &CameraIntrinsics) -> (DepthFrame, SemanticMask) {
    let mut depth = DepthFrame::filled(intr.width, intr.height, intr.depth_max);
    let mut mask = SemanticMask::filled(intr.width, intr.height, 0);
    let (sin, cos) = pose.yaw.sin_cos();
    let h = pose.camera_height;
    let mut spans: Vec<Span> = Vec::new();

    for u in 0..intr.width {
        // body ray (1, a); horizontal range r = d * k for forward depth d
        let a = (intr.cx - u as f64) / intr.fx;
        let k = (1.0 + a * a).sqrt();
        let dir = [(cos - sin * a) / k, (sin + cos * a) / k];
        spans.clear();
        traverse(
            world.width(),
            world.height(),
            world.resolution(),
            pose.position(),
            dir,
            intr.depth_max * k,
            |cell, t_in, t_out| {
                if world.is_free(cell) {
                    return true;
                }
                let top = world.cell_height(cell);
                spans.push(Span {
                    d_in: t_in / k,
                    d_out: t_out / k,
                    top,
                    category: world.category(cell),
                });
                // nothing behind a cell that every ray hits side-on
                top < h + (intr.cy / intr.fy) * t_in / k
            },
        );

        for v in 0..intr.height {
            let m = (intr.cy - v as f64) / intr.fy;
            let d_floor = if m < 0.0 { -h / m } else { f64::INFINITY };
            let mut hit: Option<(f64, u16)> = None;
            for s in &spans {
                if d_floor <= s.d_in {
                    break;
                }
                let z_in = h + m * s.d_in;
                if z_in <= s.top {
                    hit = Some((s.d_in, s.category));
                    break;
                }
                if m < 0.0 {
                    let d_top = (s.top - h) / m;
                    if d_top <= s.d_out {
                        hit = Some((d_top, s.category));
                        break;
                    }
                }
            }
            let hit = hit.or(d_floor.is_finite().then_some((d_floor, 0)));
            if let Some((d, cat)) = hit {
                let d = d + SURFACE_BIAS;
                if d < intr.depth_max {
                    depth.set(u, v, if d < intr.depth_min { 0.0 } else { d });
                    mask.set(u, v, if d < intr.depth_min { 0 } else { cat });
                }
            }
        }
    }
    (depth, mask)
}
