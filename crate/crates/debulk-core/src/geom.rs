//! Planar polygon and polyline helpers used by segmentation, meshing and
//! post-processing. Polygons are open vertex lists (last edge closes back to
//! the first vertex); positive signed area means counter-clockwise.

/// Shoelace signed area. Positive for counter-clockwise orientation.
pub fn polygon_signed_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % poly.len()];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

/// Area centroid; falls back to the vertex mean for degenerate polygons.
pub fn polygon_centroid(poly: &[[f64; 2]]) -> [f64; 2] {
    let a = polygon_signed_area(poly);
    if a.abs() > 1e-12 {
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..poly.len() {
            let [x0, y0] = poly[i];
            let [x1, y1] = poly[(i + 1) % poly.len()];
            let w = x0 * y1 - x1 * y0;
            cx += (x0 + x1) * w;
            cy += (y0 + y1) * w;
        }
        [cx / (6.0 * a), cy / (6.0 * a)]
    } else {
        let n = poly.len().max(1) as f64;
        let sx: f64 = poly.iter().map(|p| p[0]).sum();
        let sy: f64 = poly.iter().map(|p| p[1]).sum();
        [sx / n, sy / n]
    }
}

/// Point-in-polygon by crossing number; points on an edge count as inside.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    if poly.len() < 3 {
        return false;
    }
    let eps = 1e-9;
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[j];
        if dist_point_segment(p, a, b) <= eps {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let t = (p[1] - a[1]) / (b[1] - a[1]);
            let x = a[0] + t * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Euclidean distance from `p` to segment `ab`.
pub fn dist_point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let abx = b[0] - a[0];
    let aby = b[1] - a[1];
    let apx = p[0] - a[0];
    let apy = p[1] - a[1];
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = apx - t * abx;
    let dy = apy - t * aby;
    (dx * dx + dy * dy).sqrt()
}

/// Distance from `p` to the closed outline of `poly` (zero only on the outline).
pub fn dist_to_polygon_outline(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    if poly.is_empty() {
        return f64::INFINITY;
    }
    if poly.len() == 1 {
        let dx = p[0] - poly[0][0];
        let dy = p[1] - poly[0][1];
        return (dx * dx + dy * dy).sqrt();
    }
    let mut best = f64::INFINITY;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        best = best.min(dist_point_segment(p, poly[i], poly[j]));
        j = i;
    }
    best
}

/// Zero if `p` lies inside (or on) `poly`, otherwise the distance to its outline.
pub fn dist_outside_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    if point_in_polygon(p, poly) {
        0.0
    } else {
        dist_to_polygon_outline(p, poly)
    }
}

/// Total length of an open 3D polyline.
pub fn polyline_length3(pts: &[[f64; 3]]) -> f64 {
    pts.windows(2)
        .map(|w| {
            let dx = w[1][0] - w[0][0];
            let dy = w[1][1] - w[0][1];
            let dz = w[1][2] - w[0][2];
            (dx * dx + dy * dy + dz * dz).sqrt()
        })
        .sum()
}

/// Axis-aligned bounding box of a vertex list as (min, max).
pub fn bounding_box(pts: &[[f64; 2]]) -> Option<([f64; 2], [f64; 2])> {
    let first = pts.first()?;
    let mut lo = *first;
    let mut hi = *first;
    for p in pts {
        lo[0] = lo[0].min(p[0]);
        lo[1] = lo[1].min(p[1]);
        hi[0] = hi[0].max(p[0]);
        hi[1] = hi[1].max(p[1]);
    }
    Some((lo, hi))
}
