//! Geometric ridge post-processing of a solved net: the coarse solver field
//! is rearranged into discretization-insensitive ridge cross-sections
//! (width two ply thicknesses, semicircular cap), every consolidated node is
//! offset to the compacted ply thickness, and the resulting heightfield over
//! the original pocket contour is reduced to an RMS crease/cease verdict.

use serde::{Deserialize, Serialize};

use crate::energy::MaterialParams;
use crate::error::{Error, Result};
use crate::geom;
use crate::grid::{BilinearSurface, Grid};
use crate::meshing::{PlyNet, F1_NEG, F1_POS, F2_NEG, F2_POS};
use crate::optimizer::SolveResult;
use crate::segmentation::AirPocketPatch;

/// Geometry of the ridge cross-section model, mm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModelParams {
    /// Nominal ply thickness t, mm.
    pub thickness: f64,
    /// Bulk factor beta (>= 1); consolidated thickness is t/beta.
    pub bulk_factor: f64,
}

impl RidgeModelParams {
    pub fn from_material(mat: &MaterialParams) -> RidgeModelParams {
        RidgeModelParams {
            thickness: mat.thickness_mm(),
            bulk_factor: mat.bulk_factor,
        }
    }

    /// Ridge footprint width: two ply thicknesses.
    pub fn ridge_width(&self) -> f64 {
        2.0 * self.thickness
    }

    /// Cap semicircle radius: one ply thickness.
    pub fn cap_radius(&self) -> f64 {
        self.thickness
    }

    /// Consolidated (debulked) ply thickness t/beta.
    pub fn consolidated(&self) -> f64 {
        self.thickness / self.bulk_factor
    }

    /// Excess length above which a section spawns a ridge: the excess at
    /// which the ridge height formula reaches the ply thickness.
    pub fn trigger_excess(&self) -> f64 {
        (std::f64::consts::PI - 2.0) * self.thickness
    }
}

/// Height of the ridge cross-section that stores a ply length `l_ply` over
/// a mold length `l_mold`: the mold carries two flat base runs of
/// (l_mold - 2t)/2 each, and the leftover ply length stands up as a ridge
/// of width 2t capped by a semicircle of radius t. All mm.
pub fn ridge_height(l_ply: f64, l_mold: f64, t: f64) -> Result<f64> {
    if l_mold <= 2.0 * t {
        return Err(Error::InvalidArgument(format!(
            "degenerate section: mold length {l_mold} mm within the ridge width {}",
            2.0 * t
        )));
    }
    let l_base = (l_mold - 2.0 * t) / 2.0;
    Ok((l_ply - 2.0 * l_base - std::f64::consts::PI * t) / 2.0 + t)
}

/// One stamped ridge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeInfo {
    /// Node index of the section apex.
    pub apex_node: u32,
    /// Fiber family (0 or 1) the cross-section runs along.
    pub family: usize,
    pub h_ridge_mm: f64,
    pub l_ply_mm: f64,
    pub l_mold_mm: f64,
    pub excess_mm: f64,
    /// Nodes on the ridge crest (the run orthogonal to the section).
    pub crest_nodes: usize,
}

/// Post-processed node field: heights above the mold, mm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostField {
    pub heights: Vec<f64>,
    pub adjusted: Vec<bool>,
    pub ridges: Vec<RidgeInfo>,
    /// Sections whose excess stayed below the ridge trigger.
    pub conforming_sections: usize,
}

/// Neighbor slot pairs per family: (negative, positive).
const FAMILY_SLOTS: [(usize, usize); 2] = [(F1_NEG, F1_POS), (F2_NEG, F2_POS)];

/// Maximal run of consecutive above-threshold nodes through `start` along
/// `family`, in net order (negative side first).
fn run_through(
    net: &PlyNet,
    above: &[bool],
    start: usize,
    family: usize,
) -> Vec<usize> {
    let (neg, pos) = FAMILY_SLOTS[family];
    let mut run = vec![start];
    let mut cur = start;
    while let Some(next) = step(net, cur, neg) {
        if !above[next] {
            break;
        }
        run.push(next);
        cur = next;
    }
    run.reverse();
    cur = start;
    while let Some(next) = step(net, cur, pos) {
        if !above[next] {
            break;
        }
        run.push(next);
        cur = next;
    }
    run
}

fn step(net: &PlyNet, from: usize, slot: usize) -> Option<usize> {
    let n = net.neighbors[from][slot];
    (n >= 0).then(|| n as usize)
}

/// Section node list: the run plus, when present, one anchoring node past
/// each end (the first node back on the consolidated ply).
fn section_with_anchors(net: &PlyNet, above: &[bool], run: &[usize], family: usize) -> Vec<usize> {
    let (neg, pos) = FAMILY_SLOTS[family];
    let mut nodes = Vec::with_capacity(run.len() + 2);
    if let Some(a) = step(net, run[0], neg) {
        debug_assert!(!above[a]);
        nodes.push(a);
    }
    nodes.extend_from_slice(run);
    if let Some(b) = step(net, run[run.len() - 1], pos) {
        debug_assert!(!above[b]);
        nodes.push(b);
    }
    nodes
}

/// Ply polyline length and mold arc length under a section, mm.
fn section_lengths(
    nodes_mm: &[[f64; 3]],
    reference: &BilinearSurface,
    section: &[usize],
) -> (f64, f64) {
    let mut l_ply = 0.0;
    let mut l_mold = 0.0;
    for w in section.windows(2) {
        let a = nodes_mm[w[0]];
        let b = nodes_mm[w[1]];
        l_ply +=
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        l_mold += reference.arc_length_over_segment([a[0], a[1]], [b[0], b[1]]);
    }
    (l_ply, l_mold)
}

/// Mold-arc coordinate of every section node, measured from the first.
fn section_arc_positions(
    nodes_mm: &[[f64; 3]],
    reference: &BilinearSurface,
    section: &[usize],
) -> Vec<f64> {
    let mut s = Vec::with_capacity(section.len());
    let mut acc = 0.0;
    s.push(0.0);
    for w in section.windows(2) {
        let a = nodes_mm[w[0]];
        let b = nodes_mm[w[1]];
        acc += reference.arc_length_over_segment([a[0], a[1]], [b[0], b[1]]);
        s.push(acc);
    }
    s
}

/// Ridge cross-section height above the consolidated base at arc distance
/// `ds` from the apex: a 2t-wide column with a semicircular cap.
fn ridge_profile(ds: f64, h: f64, params: &RidgeModelParams) -> f64 {
    let t = params.cap_radius();
    if ds.abs() < t {
        h - t + (t * t - ds * ds).sqrt()
    } else {
        params.consolidated()
    }
}

/// Rearranges the solved node heights into geometric ridges. `nodes_mm` is
/// the solved configuration; heights come back above the mold. Applying the
/// result to itself (z = mold + height) reproduces it.
pub fn apply_ridges(
    net: &PlyNet,
    nodes_mm: &[[f64; 3]],
    reference: &BilinearSurface,
    params: &RidgeModelParams,
) -> PostField {
    let n = net.len();
    let cons = params.consolidated();
    let t = params.thickness;
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let p = nodes_mm[i];
            p[2] - reference.height(p[0], p[1])
        })
        .collect();
    let above: Vec<bool> = d.iter().map(|&v| v > cons).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));

    let mut heights = d.clone();
    let mut adjusted = vec![false; n];
    let mut ridges = Vec::new();
    let mut conforming_sections = 0usize;

    for &apex in &order {
        if adjusted[apex] || !above[apex] {
            continue;
        }
        // Pick the cross-section family by the larger excess at the apex.
        let mut runs = Vec::new();
        let mut best_family = 0usize;
        let mut best_excess = f64::NEG_INFINITY;
        for family in 0..2 {
            let run = run_through(net, &above, apex, family);
            let section = section_with_anchors(net, &above, &run, family);
            let (l_ply, l_mold) = if section.len() >= 2 {
                section_lengths(nodes_mm, reference, &section)
            } else {
                (0.0, 0.0)
            };
            let excess = l_ply - l_mold;
            if excess > best_excess {
                best_excess = excess;
                best_family = family;
            }
            runs.push(run);
        }

        if best_excess <= params.trigger_excess() {
            // Conforming: the stored length fits the mold; keep the section
            // as solved so re-application leaves stamped fields alone.
            conforming_sections += 1;
            for &i in &runs[best_family] {
                adjusted[i] = true;
            }
            continue;
        }

        let family = best_family;
        let section = section_with_anchors(net, &above, &runs[family], family);
        let (l_ply, l_mold) = section_lengths(nodes_mm, reference, &section);
        let Ok(h) = ridge_height(l_ply, l_mold, t) else {
            // Mold run shorter than the ridge footprint: treat as
            // conforming rather than fail the whole pocket.
            conforming_sections += 1;
            for &i in &runs[family] {
                adjusted[i] = true;
            }
            continue;
        };

        // Stamp the ridge along the crest: the orthogonal above-mold run
        // carries the same cross-section height (one ridge line, no second
        // ridge evaluation).
        let crest = run_through(net, &above, apex, 1 - family);
        for &c in &crest {
            let c_run = run_through(net, &above, c, family);
            let c_section = section_with_anchors(net, &above, &c_run, family);
            let s = section_arc_positions(nodes_mm, reference, &c_section);
            let s_apex = s[c_section.iter().position(|&i| i == c).unwrap()];
            for (k, &i) in c_section.iter().enumerate() {
                if !above[i] {
                    continue; // anchors stay consolidated
                }
                heights[i] = ridge_profile(s[k] - s_apex, h, params);
                adjusted[i] = true;
            }
        }
        ridges.push(RidgeInfo {
            apex_node: apex as u32,
            family,
            h_ridge_mm: h,
            l_ply_mm: l_ply,
            l_mold_mm: l_mold,
            excess_mm: best_excess,
            crest_nodes: crest.len(),
        });
    }

    // Everything untouched consolidates onto the mold.
    for i in 0..n {
        if !adjusted[i] {
            heights[i] = cons;
        }
    }

    PostField {
        heights,
        adjusted,
        ridges,
        conforming_sections,
    }
}

/// Rasterizes a per-node height field onto the patch grid, masked to the
/// original pocket contour: linear interpolation over the net's lattice
/// quads (at the solved xy positions), nearest node where the net does not
/// cover a cell.
pub fn rasterize_over_contour(
    net: &PlyNet,
    nodes_mm: &[[f64; 3]],
    heights: &[f64],
    patch: &AirPocketPatch,
) -> Result<Grid> {
    let base = patch.ply.grid();
    let mut grid = Grid::new(base.origin(), base.spacing(), base.width(), base.height());
    let mut lattice_index = std::collections::HashMap::new();
    for (k, &l) in net.lattice.iter().enumerate() {
        lattice_index.insert((l[0], l[1]), k);
    }

    // Mark contour cells.
    let mut targets = Vec::new();
    for r in 0..grid.height() {
        for c in 0..grid.width() {
            let p = grid.cell_to_world(r, c);
            if geom::point_in_polygon(p, &patch.boundary) {
                targets.push((r, c));
            } else {
                grid.set_valid(r, c, false);
            }
        }
    }
    if targets.is_empty() {
        return Err(Error::EmptyInput(
            "no heightfield cells inside the pocket contour".into(),
        ));
    }

    // Linear interpolation over each lattice quad, split into 2 triangles.
    // Iterate in node order so ties on shared edges resolve the same way
    // every run.
    let mut raster = vec![f64::NAN; grid.width() * grid.height()];
    for (a, &l) in net.lattice.iter().enumerate() {
        let (i, j) = (l[0], l[1]);
        let (Some(&b), Some(&c2), Some(&d2)) = (
            lattice_index.get(&(i + 1, j)),
            lattice_index.get(&(i + 1, j + 1)),
            lattice_index.get(&(i, j + 1)),
        ) else {
            continue;
        };
        for tri in [[a, b, c2], [a, c2, d2]] {
            let q = [
                [nodes_mm[tri[0]][0], nodes_mm[tri[0]][1]],
                [nodes_mm[tri[1]][0], nodes_mm[tri[1]][1]],
                [nodes_mm[tri[2]][0], nodes_mm[tri[2]][1]],
            ];
            let h = [heights[tri[0]], heights[tri[1]], heights[tri[2]]];
            fill_triangle(&mut raster, &grid, q, h);
        }
    }
    let mut filled = vec![false; targets.len()];
    for (k, &(r, c)) in targets.iter().enumerate() {
        let v = raster[r * grid.width() + c];
        if v.is_finite() {
            grid.set_value(r, c, v);
            filled[k] = true;
        }
    }

    // Nearest-node fallback for contour cells outside the lattice hull.
    for (k, &(r, c)) in targets.iter().enumerate() {
        if filled[k] {
            continue;
        }
        let p = grid.cell_to_world(r, c);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, q) in nodes_mm.iter().enumerate() {
            let dd = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
            if dd < best_d {
                best_d = dd;
                best = i;
            }
        }
        grid.set_value(r, c, heights[best]);
    }
    Ok(grid)
}

/// Barycentric fill of one triangle into the scratch raster.
fn fill_triangle(raster: &mut [f64], grid: &Grid, q: [[f64; 2]; 3], h: [f64; 3]) {
    let min_x = q.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let max_x = q.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = q.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let max_y = q.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let [ox, oy] = grid.origin();
    let [dx, dy] = grid.spacing();
    let c0 = (((min_x - ox) / dx).floor().max(0.0)) as usize;
    let r0 = (((min_y - oy) / dy).floor().max(0.0)) as usize;
    let c1 = ((((max_x - ox) / dx).ceil()) as usize).min(grid.width().saturating_sub(1));
    let r1 = ((((max_y - oy) / dy).ceil()) as usize).min(grid.height().saturating_sub(1));
    let det = (q[1][0] - q[0][0]) * (q[2][1] - q[0][1]) - (q[2][0] - q[0][0]) * (q[1][1] - q[0][1]);
    if det.abs() < 1e-12 {
        return;
    }
    for r in r0..=r1 {
        for c in c0..=c1 {
            let [x, y] = grid.cell_to_world(r, c);
            let w1 = ((x - q[0][0]) * (q[2][1] - q[0][1]) - (q[2][0] - q[0][0]) * (y - q[0][1]))
                / det;
            let w2 = ((q[1][0] - q[0][0]) * (y - q[0][1]) - (x - q[0][0]) * (q[1][1] - q[0][1]))
                / det;
            let w0 = 1.0 - w1 - w2;
            let eps = -1e-9;
            if w0 >= eps && w1 >= eps && w2 >= eps {
                raster[r * grid.width() + c] = w0 * h[0] + w1 * h[1] + w2 * h[2];
            }
        }
    }
}

/// Crease/cease outcome for one pocket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Pocket predicted to consolidate flat.
    Cease,
    /// Pocket predicted to leave a wrinkle.
    Crease,
    /// Solver did not converge; manual check advised.
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Cease => "cease",
            Verdict::Crease => "crease",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Cease => write!(f, "cease"),
            Verdict::Crease => write!(f, "crease"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Per-pocket prediction record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DebulkReport {
    pub pocket_id: u32,
    pub verdict: Verdict,
    /// RMS of the post-processed heights over the pocket contour, mm.
    pub rms_mm: f64,
    pub threshold_mm: f64,
    /// Tallest point of the post-processed field, mm.
    pub predicted_max_mm: f64,
    /// Tallest ply-mold difference straight out of the solver, mm.
    pub raw_max_mm: f64,
    pub ridges: Vec<RidgeInfo>,
    pub conforming_sections: usize,
    pub converged: bool,
    /// Post-processed heightfield over the pocket contour.
    pub heightfield: Grid,
    pub notes: Vec<String>,
}

impl DebulkReport {
    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<DebulkReport> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

/// Default crease/cease RMS threshold: the nominal ply thickness, mm.
pub const DEFAULT_RMS_THRESHOLD: f64 = 0.3;

/// RMS verdict over a masked heightfield; cease only when the solver
/// converged and the RMS is at or below the threshold.
pub fn classify(
    pocket_id: u32,
    heightfield: &Grid,
    threshold_mm: f64,
    converged: bool,
) -> Result<(Verdict, f64)> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..heightfield.height() {
        for c in 0..heightfield.width() {
            if heightfield.is_valid(r, c) {
                sum += heightfield.value(r, c).powi(2);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyInput(format!(
            "pocket {pocket_id}: empty contour sample for RMS"
        )));
    }
    let rms = (sum / count as f64).sqrt();
    let verdict = if !converged {
        Verdict::Inconclusive
    } else if rms <= threshold_mm {
        Verdict::Cease
    } else {
        Verdict::Crease
    };
    Ok((verdict, rms))
}

/// Full post-processing of one solved pocket: ridge rearrangement,
/// rasterization over the original contour, RMS classification.
pub fn post_process(
    patch: &AirPocketPatch,
    net: &PlyNet,
    solve: &SolveResult,
    mat: &MaterialParams,
    threshold_mm: f64,
) -> Result<DebulkReport> {
    let params = RidgeModelParams::from_material(mat);
    let field = apply_ridges(net, &solve.nodes_mm, &patch.reference, &params);
    let heightfield = rasterize_over_contour(net, &solve.nodes_mm, &field.heights, patch)?;
    let (verdict, rms) = classify(patch.id, &heightfield, threshold_mm, solve.converged)?;
    let raw_max = solve
        .nodes_mm
        .iter()
        .map(|p| p[2] - patch.reference.height(p[0], p[1]))
        .fold(f64::NEG_INFINITY, f64::max);
    let predicted_max = field.heights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut notes = Vec::new();
    if solve.lifted_start {
        notes.push("initial configuration penetrated the mold and was lifted".into());
    }
    if patch.low_confidence {
        notes.push("scan dropouts inside the pocket; low confidence".into());
    }
    if !field.ridges.is_empty() {
        notes.push(format!(
            "{} ridge(s); cross-sections taken along the larger-excess fiber direction",
            field.ridges.len()
        ));
    }
    Ok(DebulkReport {
        pocket_id: patch.id,
        verdict,
        rms_mm: rms,
        threshold_mm,
        predicted_max_mm: predicted_max,
        raw_max_mm: raw_max,
        ridges: field.ridges,
        conforming_sections: field.conforming_sections,
        converged: solve.converged,
        heightfield,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshing::NodeClass;
    use approx::assert_relative_eq;

    #[test]
    fn ridge_height_matches_hand_values() {
        // Triangle scenario: ply 18.6 mm over a 17.4643 mm mold span.
        let l_mold = 2.0 * (9.3f64 * 9.3 - 3.2 * 3.2).sqrt();
        let h = ridge_height(18.6, l_mold, 0.3).unwrap();
        assert_relative_eq!(h, 0.697, epsilon = 5e-4);
        // Zero excess: h = t (4 - pi) / 2.
        let h0 = ridge_height(20.0, 20.0, 0.3).unwrap();
        assert_relative_eq!(h0, 0.3 * (4.0 - std::f64::consts::PI) / 2.0, epsilon = 1e-12);
        // Excess of 2.8825 mm over any mold span gives 1.57 mm.
        let h3 = ridge_height(50.0 + 2.8825, 50.0, 0.3).unwrap();
        assert_relative_eq!(h3, 1.57, epsilon = 5e-4);
        // Degenerate mold span errors.
        assert!(ridge_height(1.0, 0.5, 0.3).is_err());
    }

    #[test]
    fn trigger_excess_is_where_ridge_reaches_thickness() {
        let p = RidgeModelParams {
            thickness: 0.3,
            bulk_factor: 1.2,
        };
        let l_mold = 30.0;
        let h = ridge_height(l_mold + p.trigger_excess(), l_mold, p.thickness).unwrap();
        assert_relative_eq!(h, p.thickness, epsilon = 1e-12);
        assert_relative_eq!(p.consolidated(), 0.25, epsilon = 1e-12);
        assert_relative_eq!(p.ridge_width(), 0.6, epsilon = 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn ridge_height_monotone_and_length_preserving(
            l_mold in 5.0f64..200.0,
            excess in 0.0f64..20.0,
            more in 0.01f64..5.0,
        ) {
            let t = 0.3;
            let h = ridge_height(l_mold + excess, l_mold, t).unwrap();
            let h2 = ridge_height(l_mold + excess + more, l_mold, t).unwrap();
            // Monotone in excess.
            proptest::prop_assert!(h2 > h);
            // The section is a length-preserving rearrangement:
            // 2 l_base + 2 (h - t) + pi t = l_ply exactly.
            let l_base = (l_mold - 2.0 * t) / 2.0;
            let rebuilt = 2.0 * l_base + 2.0 * (h - t) + std::f64::consts::PI * t;
            proptest::prop_assert!((rebuilt - (l_mold + excess)).abs() < 1e-9);
        }
    }

    /// Straight chain of `n` nodes along x with given heights, spacing mm.
    fn chain_net(heights_mm: &[f64], delta: f64) -> (PlyNet, Vec<[f64; 3]>) {
        let n = heights_mm.len();
        let nodes: Vec<[f64; 3]> = (0..n)
            .map(|i| [i as f64 * delta, 0.0, 0.0])
            .collect();
        let mut neighbors = vec![[-1i32; 4]; n];
        for i in 0..n {
            if i + 1 < n {
                neighbors[i][F1_POS] = (i + 1) as i32;
            }
            if i > 0 {
                neighbors[i][F1_NEG] = (i - 1) as i32;
            }
        }
        let net = PlyNet {
            patch_id: 1,
            nodes: nodes.clone(),
            neighbors,
            class: vec![NodeClass::Interior; n],
            lattice: (0..n as i32).map(|i| [i, 0]).collect(),
            delta,
            patch_area_m2: 1e-3,
        };
        // Solved configuration: same xy, given z. Segment lengths in the
        // solved shape exceed the base span (that's the excess).
        let solved: Vec<[f64; 3]> = (0..n)
            .map(|i| [i as f64 * delta, 0.0, heights_mm[i]])
            .collect();
        (net, solved)
    }

    fn flat_ref() -> BilinearSurface {
        BilinearSurface::from_fn([-50.0, -50.0], [10.0, 10.0], 21, 21, |_, _| 0.0).unwrap()
    }

    fn params() -> RidgeModelParams {
        RidgeModelParams {
            thickness: 0.3,
            bulk_factor: 1.2,
        }
    }

    #[test]
    fn triangle_bump_becomes_single_ridge_on_plateau() {
        // Fig-8-like triangle: apex 3.2 mm between mold-level anchors at
        // +/- 9.3 mm chord spacing... here spacing is the xy projection, so
        // use 8.7321 mm cells: ply segments are sqrt(8.7321^2 + 3.2^2) = 9.3.
        let half = (9.3f64 * 9.3 - 3.2 * 3.2).sqrt();
        let (net, solved) = chain_net(&[0.0, 3.2, 0.0], half);
        let field = apply_ridges(&net, &solved, &flat_ref(), &params());
        assert_eq!(field.ridges.len(), 1);
        let r = &field.ridges[0];
        assert_relative_eq!(r.l_ply_mm, 18.6, epsilon = 1e-9);
        assert_relative_eq!(r.l_mold_mm, 2.0 * half, epsilon = 1e-9);
        assert_relative_eq!(r.h_ridge_mm, 0.697, epsilon = 5e-4);
        // Apex carries the ridge, anchors consolidate to 0.25.
        assert_relative_eq!(field.heights[1], r.h_ridge_mm);
        assert_relative_eq!(field.heights[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(field.heights[2], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn chain_below_consolidated_thickness_flattens_uniformly() {
        let (net, solved) = chain_net(&[0.0, 0.1, 0.2, 0.1, 0.0], 5.0);
        let field = apply_ridges(&net, &solved, &flat_ref(), &params());
        assert!(field.ridges.is_empty());
        for &h in &field.heights {
            assert_relative_eq!(h, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn sub_trigger_section_keeps_solved_heights() {
        // Above the consolidated thickness but excess (~0.02 mm) far below
        // the ridge trigger (~0.343 mm): the section conforms in place.
        let (net, solved) = chain_net(&[0.0, 0.3, 0.4, 0.3, 0.0], 5.0);
        let field = apply_ridges(&net, &solved, &flat_ref(), &params());
        assert!(field.ridges.is_empty());
        assert_eq!(field.conforming_sections, 1);
        assert_relative_eq!(field.heights[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(field.heights[1], 0.3, epsilon = 1e-12);
        assert_relative_eq!(field.heights[2], 0.4, epsilon = 1e-12);
        assert_relative_eq!(field.heights[3], 0.3, epsilon = 1e-12);
        assert_relative_eq!(field.heights[4], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn two_disjoint_bumps_give_two_equal_ridges() {
        let mut h = vec![0.0; 11];
        h[2] = 3.2;
        h[8] = 3.2;
        let (net, solved) = chain_net(&h, (9.3f64 * 9.3 - 3.2 * 3.2).sqrt());
        let field = apply_ridges(&net, &solved, &flat_ref(), &params());
        assert_eq!(field.ridges.len(), 2);
        assert_relative_eq!(
            field.ridges[0].h_ridge_mm,
            field.ridges[1].h_ridge_mm,
            epsilon = 1e-12
        );
        let apexes: Vec<u32> = field.ridges.iter().map(|r| r.apex_node).collect();
        assert!(apexes.contains(&2) && apexes.contains(&8));
    }

    #[test]
    fn apply_ridges_is_idempotent() {
        let mut h = vec![0.0; 11];
        h[2] = 3.2;
        h[7] = 2.1;
        h[8] = 2.4;
        let (net, solved) = chain_net(&h, (9.3f64 * 9.3 - 3.2 * 3.2).sqrt());
        let reference = flat_ref();
        let p = params();
        let first = apply_ridges(&net, &solved, &reference, &p);
        // Re-apply to the post-processed configuration.
        let stamped: Vec<[f64; 3]> = net
            .nodes
            .iter()
            .zip(&first.heights)
            .map(|(q, &hh)| [q[0], q[1], reference.height(q[0], q[1]) + hh])
            .collect();
        let second = apply_ridges(&net, &stamped, &reference, &p);
        for (a, b) in first.heights.iter().zip(&second.heights) {
            assert!((a - b).abs() < 1e-9, "heights differ: {a} vs {b}");
        }
        assert!(second.ridges.is_empty(), "restamped ridges appeared");
    }

    #[test]
    fn classify_thresholds_inclusive_and_inconclusive() {
        let mut g = Grid::new([0.0, 0.0], [1.0, 1.0], 4, 4);
        for r in 0..4 {
            for c in 0..4 {
                g.set_value(r, c, 0.25);
            }
        }
        let (v, rms) = classify(1, &g, 0.3, true).unwrap();
        assert_eq!(v, Verdict::Cease);
        assert_relative_eq!(rms, 0.25, epsilon = 1e-12);
        // Exactly at the threshold: cease (inclusive). 0.25 squares and
        // square-roots exactly in binary floating point.
        let (v, rms) = classify(1, &g, 0.25, true).unwrap();
        assert_eq!(v, Verdict::Cease);
        assert_relative_eq!(rms, 0.25, epsilon = 1e-12);
        // Above: crease.
        g.set_value(0, 0, 3.0);
        let (v, _) = classify(1, &g, 0.3, true).unwrap();
        assert_eq!(v, Verdict::Crease);
        // Non-converged solve: inconclusive regardless of RMS.
        let (v, _) = classify(1, &g, 0.3, false).unwrap();
        assert_eq!(v, Verdict::Inconclusive);
        // Empty mask: error.
        let mut empty = Grid::new([0.0, 0.0], [1.0, 1.0], 2, 2);
        for r in 0..2 {
            for c in 0..2 {
                empty.set_valid(r, c, false);
            }
        }
        assert!(classify(1, &empty, 0.3, true).is_err());
    }
}
