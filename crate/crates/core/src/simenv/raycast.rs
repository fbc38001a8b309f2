use crate::geometry::Cell;

/// Grid traversal (Amanatides & Woo). Visits every cell a ray from `origin`
/// along the unit vector `dir` passes through, in order, with the entry and
/// exit distance in meters. Stops after `max_t`, on leaving the
/// `width x height` grid, or when `visit` returns `false`.
pub fn traverse(
    width: usize,
    height: usize,
    resolution: f64,
    origin: [f64; 2],
    dir: [f64; 2],
    max_t: f64,
    mut visit: impl FnMut(Cell, f64, f64) -> bool,
) {
    let mut cx = (origin[0] / resolution).floor() as i64;
    let mut cy = (origin[1] / resolution).floor() as i64;
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height;

    let axis = |p: f64, d: f64, c: i64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((c + 1) as f64 * resolution - p) / d, resolution / d)
        } else if d < 0.0 {
            (-1, (c as f64 * resolution - p) / d, -resolution / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (sx, mut tx, dtx) = axis(origin[0], dir[0], cx);
    let (sy, mut ty, dty) = axis(origin[1], dir[1], cy);

    let mut t = 0.0;
    while inside(cx, cy) && t <= max_t {
        let exit = tx.min(ty);
        if !visit(Cell::new(cx as usize, cy as usize), t, exit) {
            return;
        }
        t = exit;
        if tx < ty {
            cx += sx;
            tx += dtx;
        } else {
            cy += sy;
            ty += dty;
        }
    }
}

/// Cells touched by the segment `a-b`, in order.
pub fn segment_cells(width: usize, height: usize, resolution: f64, a: [f64; 2], b: [f64; 2]) -> Vec<Cell> {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    let mut out = Vec::new();
    if len == 0.0 {
        let (x, y) = ((a[0] / resolution).floor(), (a[1] / resolution).floor());
        if x >= 0.0 && y >= 0.0 && (x as usize) < width && (y as usize) < height {
            out.push(Cell::new(x as usize, y as usize));
        }
        return out;
    }
    traverse(width, height, resolution, a, [dx / len, dy / len], len, |c, t_in, _| {
        if t_in <= len {
            out.push(c);
        }
        true
    });
    out
}
