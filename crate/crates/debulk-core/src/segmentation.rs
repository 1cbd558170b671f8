//! Air-pocket segmentation: threshold the heightmap at the cut height, fill
//! enclosed holes, trace pocket boundaries with Moore neighbor tracing, and
//! extract per-pocket patches carrying the local ply and reference surfaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::grid::{BilinearSurface, Grid, HeightMap, ReferenceSurface};

/// Thresholds and filters for pocket extraction. Lengths in mm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSettings {
    /// Height above reference at which material counts as an air pocket.
    pub cut_height: f64,
    /// Minimum pocket surface area; smaller detections are discarded.
    pub area_tol_cm2: f64,
    /// Minimum pocket peak height; lower detections are discarded.
    pub peak_tol: f64,
    /// Padding added around the pocket bounding box for the patch surfaces.
    /// `None` picks three node spacings at the default meshing budget,
    /// 3 * sqrt(area / 100), per pocket.
    pub margin: Option<f64>,
    /// Pockets closer than this to the ply outline are flagged.
    pub ply_boundary_tol: f64,
}

impl Default for SegmentationSettings {
    fn default() -> Self {
        SegmentationSettings {
            cut_height: 2.0,
            area_tol_cm2: 2.0,
            peak_tol: 1.25,
            margin: None,
            ply_boundary_tol: 20.0,
        }
    }
}

/// Foreground mask aligned with a heightmap grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMask {
    origin: [f64; 2],
    spacing: [f64; 2],
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(origin: [f64; 2], spacing: [f64; 2], width: usize, height: usize) -> BinaryMask {
        BinaryMask {
            origin,
            spacing,
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[self.idx(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        let i = self.idx(row, col);
        self.bits[i] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn cell_to_world(&self, row: usize, col: usize) -> [f64; 2] {
        [
            self.origin[0] + col as f64 * self.spacing[0],
            self.origin[1] + row as f64 * self.spacing[1],
        ]
    }
}

/// Foreground = valid cells with height >= cut_height.
pub fn threshold_cut(hm: &HeightMap, cut_height: f64) -> BinaryMask {
    let mut mask = BinaryMask::new(hm.origin(), hm.spacing(), hm.width(), hm.height());
    for row in 0..hm.height() {
        for col in 0..hm.width() {
            if hm.is_valid(row, col) && hm.value(row, col) >= cut_height {
                mask.set(row, col, true);
            }
        }
    }
    mask
}

/// Fills background regions not connected to the raster border
/// (4-connectivity for background, complementary to the 8-connected
/// foreground). Idempotent.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    if w == 0 || h == 0 {
        return mask.clone();
    }
    let mut outside = vec![false; w * h];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let push = |stack: &mut Vec<(usize, usize)>, outside: &mut Vec<bool>, r: usize, c: usize| {
        let i = r * w + c;
        if !mask.bits[i] && !outside[i] {
            outside[i] = true;
            stack.push((r, c));
        }
    };
    for c in 0..w {
        push(&mut stack, &mut outside, 0, c);
        push(&mut stack, &mut outside, h - 1, c);
    }
    for r in 0..h {
        push(&mut stack, &mut outside, r, 0);
        push(&mut stack, &mut outside, r, w - 1);
    }
    while let Some((r, c)) = stack.pop() {
        if r > 0 {
            push(&mut stack, &mut outside, r - 1, c);
        }
        if r + 1 < h {
            push(&mut stack, &mut outside, r + 1, c);
        }
        if c > 0 {
            push(&mut stack, &mut outside, r, c - 1);
        }
        if c + 1 < w {
            push(&mut stack, &mut outside, r, c + 1);
        }
    }
    let mut out = mask.clone();
    for i in 0..w * h {
        if !out.bits[i] && !outside[i] {
            out.bits[i] = true;
        }
    }
    out
}

/// Labels 8-connected foreground components in deterministic row-major
/// discovery order. Returns (labels, count); labels are 1-based, 0 = none.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if mask.bits[j] && labels[j] == 0 {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Closed boundary of one foreground component, as the ordered pixel path
/// produced by Moore neighbor tracing and the same path in world
/// coordinates, counter-clockwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracedBoundary {
    pub component: u32,
    pub pixels: Vec<[u32; 2]>,
    pub polygon: Vec<[f64; 2]>,
}

// Neighbor ring for Moore tracing, in consistent rotational order.
const RING: [(i64, i64); 8] = [
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
];

fn moore_trace(mask: &BinaryMask, labels: &[u32], label: u32, start: (usize, usize)) -> Vec<[u32; 2]> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let fg = |r: i64, c: i64| -> bool {
        r >= 0 && c >= 0 && r < h && c < w && labels[r as usize * w as usize + c as usize] == label
    };
    let (sr, sc) = (start.0 as i64, start.1 as i64);
    let mut path: Vec<[u32; 2]> = vec![[start.0 as u32, start.1 as u32]];
    let mut cur = (sr, sc);
    // Backtrack starts to the west of the start pixel; the row-major scan
    // guarantees that cell is background (or out of bounds).
    let initial_back = (sr, sc - 1);
    let mut back = initial_back;
    let max_steps = 4 * (mask.width * mask.height + 4);
    for _ in 0..max_steps {
        // Scan the ring around cur, resuming just after the backtrack cell.
        let rel = (back.0 - cur.0, back.1 - cur.1);
        let start_at = RING
            .iter()
            .position(|&d| d == rel)
            .expect("backtrack is always 8-adjacent");
        let mut found = None;
        for step in 1..=8 {
            let k = (start_at + step) % 8;
            let (dr, dc) = RING[k];
            let (nr, nc) = (cur.0 + dr, cur.1 + dc);
            if fg(nr, nc) {
                found = Some((nr, nc));
                break;
            }
            back = (nr, nc);
        }
        let Some(next) = found else {
            return path; // isolated single pixel
        };
        // Stop when the walk re-enters the start pixel in the starting
        // state (same backtrack cell): the boundary cycle is complete.
        if next == (sr, sc) && back == initial_back {
            return path;
        }
        cur = next;
        path.push([cur.0 as u32, cur.1 as u32]);
    }
    path
}

/// Traces the outer boundary of every 8-connected foreground component,
/// ordered by component label. Polygons are counter-clockwise.
pub fn trace_boundaries(mask: &BinaryMask) -> Vec<TracedBoundary> {
    let (labels, count) = label_components(mask);
    let w = mask.width;
    let mut starts: Vec<Option<(usize, usize)>> = vec![None; count + 1];
    for i in 0..labels.len() {
        let l = labels[i] as usize;
        if l != 0 && starts[l].is_none() {
            starts[l] = Some((i / w, i % w));
        }
    }
    let mut out = Vec::with_capacity(count);
    for label in 1..=count as u32 {
        let start = starts[label as usize].unwrap();
        let mut pixels = moore_trace(mask, &labels, label, start);
        // Drop a duplicated closing pixel if the trace ended on the start.
        if pixels.len() > 1 && pixels.first() == pixels.last() {
            pixels.pop();
        }
        let mut polygon: Vec<[f64; 2]> = pixels
            .iter()
            .map(|&[r, c]| mask.cell_to_world(r as usize, c as usize))
            .collect();
        if geom::polygon_signed_area(&polygon) < 0.0 {
            pixels.reverse();
            polygon.reverse();
        }
        out.push(TracedBoundary {
            component: label,
            pixels,
            polygon,
        });
    }
    out
}

/// One detected air pocket with everything meshing and reporting need:
/// boundary polygon, interior pixels, and the local ply and reference
/// surfaces over a padded bounding box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AirPocketPatch {
    pub id: u32,
    /// Counter-clockwise pocket outline through threshold-cell centers, mm.
    pub boundary: Vec<[f64; 2]>,
    /// Interior cells (row, col) on the source heightmap grid.
    pub interior_pixels: Vec<[u32; 2]>,
    /// Georeference of the source heightmap grid.
    pub grid_origin: [f64; 2],
    pub grid_spacing: [f64; 2],
    /// Absolute ply surface z over the padded patch box.
    pub ply: BilinearSurface,
    /// Reference surface clipped to the same padded box.
    pub reference: BilinearSurface,
    /// Ply surface area inside the boundary.
    pub area_cm2: f64,
    /// Peak height above reference inside the boundary, mm.
    pub peak_mm: f64,
    /// Area centroid of the boundary polygon, mm.
    pub centroid: [f64; 2],
    /// Cut height that produced the boundary, mm.
    pub cut_height: f64,
    pub margin_mm: f64,
    /// The requested margin ran past the heightmap extent and was clipped.
    pub margin_clipped: bool,
    /// Pocket lies within ply_boundary_tol of the ply outline.
    pub near_ply_boundary: bool,
    /// Pocket touches scanner dropouts that are not benign.
    pub low_confidence: bool,
    /// Outlines of the valid (scanned ply) region, for boundary-node
    /// classification during meshing.
    pub ply_outline: Vec<Vec<[f64; 2]>>,
}

impl AirPocketPatch {
    /// Iterator over interior cell centers in world coordinates.
    pub fn interior_points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.interior_pixels.iter().map(move |&[r, c]| {
            [
                self.grid_origin[0] + c as f64 * self.grid_spacing[0],
                self.grid_origin[1] + r as f64 * self.grid_spacing[1],
            ]
        })
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<AirPocketPatch> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

/// Validity mask of the heightmap (the scanned ply footprint).
fn validity_mask(hm: &HeightMap) -> BinaryMask {
    let mut m = BinaryMask::new(hm.origin(), hm.spacing(), hm.width(), hm.height());
    for row in 0..hm.height() {
        for col in 0..hm.width() {
            m.set(row, col, hm.is_valid(row, col));
        }
    }
    m
}

/// Dropout blobs (8-connected invalid regions). A blob is benign when it
/// touches neither the raster border nor any cell at or above the cut
/// height; pockets adjacent to non-benign blobs are flagged low confidence.
fn non_benign_dropout_cells(hm: &HeightMap, cut_height: f64) -> Vec<bool> {
    let (w, h) = (hm.width(), hm.height());
    let mut inv = BinaryMask::new(hm.origin(), hm.spacing(), w, h);
    for row in 0..h {
        for col in 0..w {
            inv.set(row, col, !hm.is_valid(row, col));
        }
    }
    let (labels, count) = label_components(&inv);
    let mut benign = vec![true; count + 1];
    for row in 0..h {
        for col in 0..w {
            let l = labels[row * w + col] as usize;
            if l == 0 {
                continue;
            }
            if row == 0 || col == 0 || row == h - 1 || col == w - 1 {
                benign[l] = false;
                continue;
            }
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = ((row as i64 + dr) as usize, (col as i64 + dc) as usize);
                    if hm.is_valid(nr, nc) && hm.value(nr, nc) >= cut_height {
                        benign[l] = false;
                    }
                }
            }
        }
    }
    labels
        .iter()
        .map(|&l| l != 0 && !benign[l as usize])
        .collect()
}

/// Segments the heightmap and extracts pocket patches: threshold at
/// cut_height, fill holes, trace boundaries, filter by area and peak,
/// sort by descending area. Patch ids are 1-based after sorting.
pub fn extract_patches(
    hm: &HeightMap,
    reference: &ReferenceSurface,
    settings: &SegmentationSettings,
) -> Result<Vec<AirPocketPatch>> {
    if !reference.covers(hm) {
        return Err(Error::GridMismatch(
            "heightmap extent exceeds reference surface extent".into(),
        ));
    }
    let mask = fill_holes(&threshold_cut(hm, settings.cut_height));
    let boundaries = trace_boundaries(&mask);
    let (labels, _) = label_components(&mask);
    let (w, h) = (hm.width(), hm.height());
    let [dx, dy] = hm.spacing();

    let ply_outline: Vec<Vec<[f64; 2]>> = trace_boundaries(&validity_mask(hm))
        .into_iter()
        .map(|b| b.polygon)
        .collect();
    let suspect = non_benign_dropout_cells(hm, settings.cut_height);

    // Absolute ply z over the full grid: reference plus height, with
    // dropouts sitting at reference level.
    let ply_z = |row: usize, col: usize| -> f64 {
        let [x, y] = hm.cell_to_world(row, col);
        let base = reference.height(x, y);
        if hm.is_valid(row, col) {
            base + hm.value(row, col)
        } else {
            base
        }
    };

    let mut patches: Vec<AirPocketPatch> = Vec::new();
    for b in &boundaries {
        let interior: Vec<[u32; 2]> = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .filter(|&(r, c)| labels[r * w + c] == b.component)
            .map(|(r, c)| [r as u32, c as u32])
            .collect();

        let mut peak = f64::NEG_INFINITY;
        let mut area_mm2 = 0.0;
        let mut touches_suspect = false;
        for &[r, c] in &interior {
            let (r, c) = (r as usize, c as usize);
            if hm.is_valid(r, c) {
                peak = peak.max(hm.value(r, c));
            }
            // Central differences on the absolute ply surface; one-sided at
            // the raster edge.
            let (c0, c1) = (c.saturating_sub(1), (c + 1).min(w - 1));
            let (r0, r1) = (r.saturating_sub(1), (r + 1).min(h - 1));
            let gx = (ply_z(r, c1) - ply_z(r, c0)) / ((c1 - c0) as f64 * dx);
            let gy = (ply_z(r1, c) - ply_z(r0, c)) / ((r1 - r0) as f64 * dy);
            area_mm2 += dx * dy * (1.0 + gx * gx + gy * gy).sqrt();
            'scan: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    if suspect[nr as usize * w + nc as usize] {
                        touches_suspect = true;
                        break 'scan;
                    }
                }
            }
        }
        let area_cm2 = area_mm2 / 100.0;
        if area_cm2 < settings.area_tol_cm2 || peak < settings.peak_tol {
            continue;
        }

        // Padded patch box, clipped to the heightmap raster. The default
        // margin is three node spacings at the default meshing budget.
        let margin = settings.margin.unwrap_or(3.0 * area_cm2.sqrt());
        let (plo, phi) = geom::bounding_box(&b.polygon).expect("nonempty boundary");
        let margin_cells_x = (margin / dx).ceil() as i64;
        let margin_cells_y = (margin / dy).ceil() as i64;
        let c_lo = ((plo[0] - hm.origin()[0]) / dx).round() as i64 - margin_cells_x;
        let c_hi = ((phi[0] - hm.origin()[0]) / dx).round() as i64 + margin_cells_x;
        let r_lo = ((plo[1] - hm.origin()[1]) / dy).round() as i64 - margin_cells_y;
        let r_hi = ((phi[1] - hm.origin()[1]) / dy).round() as i64 + margin_cells_y;
        let margin_clipped =
            c_lo < 0 || r_lo < 0 || c_hi > (w as i64 - 1) || r_hi > (h as i64 - 1);
        let c_lo = c_lo.clamp(0, w as i64 - 1) as usize;
        let c_hi = c_hi.clamp(0, w as i64 - 1) as usize;
        let r_lo = r_lo.clamp(0, h as i64 - 1) as usize;
        let r_hi = r_hi.clamp(0, h as i64 - 1) as usize;
        if c_hi - c_lo < 1 || r_hi - r_lo < 1 {
            continue; // degenerate patch box
        }
        let box_origin = hm.cell_to_world(r_lo, c_lo);
        let bw = c_hi - c_lo + 1;
        let bh = r_hi - r_lo + 1;
        let mut ply_grid = Grid::new(box_origin, [dx, dy], bw, bh);
        let mut ref_grid = Grid::new(box_origin, [dx, dy], bw, bh);
        for r in 0..bh {
            for c in 0..bw {
                ply_grid.set_value(r, c, ply_z(r_lo + r, c_lo + c));
                let [x, y] = hm.cell_to_world(r_lo + r, c_lo + c);
                ref_grid.set_value(r, c, reference.height(x, y));
            }
        }

        let near_ply_boundary = b.polygon.iter().any(|&p| {
            ply_outline
                .iter()
                .any(|poly| geom::dist_to_polygon_outline(p, poly) <= settings.ply_boundary_tol)
        });

        patches.push(AirPocketPatch {
            id: 0,
            boundary: b.polygon.clone(),
            interior_pixels: interior,
            grid_origin: hm.origin(),
            grid_spacing: [dx, dy],
            ply: BilinearSurface::new(ply_grid)?,
            reference: BilinearSurface::new(ref_grid)?,
            area_cm2,
            peak_mm: peak,
            centroid: geom::polygon_centroid(&b.polygon),
            cut_height: settings.cut_height,
            margin_mm: margin,
            margin_clipped,
            near_ply_boundary,
            low_confidence: touches_suspect,
            ply_outline: ply_outline.clone(),
        });
    }
    patches.sort_by(|a, b| {
        b.area_cm2
            .total_cmp(&a.area_cm2)
            .then_with(|| a.interior_pixels[0].cmp(&b.interior_pixels[0]))
    });
    for (i, p) in patches.iter_mut().enumerate() {
        p.id = i as u32 + 1;
    }
    Ok(patches)
}
