//! Pin-jointed net meshing over a pocket patch: two families of fiber paths
//! traced from a seed point across the ply surface, filled outward per
//! quadrant so that every segment has chord length Delta, then trimmed at
//! one spacing outside the pocket boundary and classified into interior,
//! fixed-boundary and free-boundary nodes.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom;
use crate::grid::BilinearSurface;
use crate::segmentation::AirPocketPatch;

/// Neighbor slots per node: +/- along fiber family 1, +/- along family 2.
pub const F1_POS: usize = 0;
pub const F1_NEG: usize = 1;
pub const F2_POS: usize = 2;
pub const F2_NEG: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    /// On or above the pocket; fully mobile.
    Interior,
    /// On the mold outside the pocket, far from the ply edge; clamped.
    FixedBoundary,
    /// On the mold outside the pocket but near the ply edge; mobile with
    /// friction against the mold.
    FreeBoundary,
}

/// Meshing knobs. Lengths in mm, angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshConfig {
    /// Approximate node budget; sets the spacing Delta.
    pub target_nodes: usize,
    /// Fiber family directions in the xy plane.
    pub fiber_angles: [f64; 2],
    /// Seed the net at the pocket peak instead of the boundary centroid.
    pub seed_at_peak: bool,
    /// Max |z - reference| for a trimmed node to count as mold contact.
    pub mold_contact_tol: f64,
    /// Boundary nodes within this distance of the ply outline are free.
    pub ply_boundary_tol: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            target_nodes: 100,
            fiber_angles: [0.0, 90.0],
            seed_at_peak: false,
            mold_contact_tol: 1.0,
            ply_boundary_tol: 20.0,
        }
    }
}

/// Pin-jointed fiber net over one pocket. Node coordinates in mm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlyNet {
    pub patch_id: u32,
    pub nodes: Vec<[f64; 3]>,
    /// Neighbor node index per slot (F1_POS..F2_NEG), -1 when absent.
    pub neighbors: Vec<[i32; 4]>,
    pub class: Vec<NodeClass>,
    /// Fiber lattice coordinate (i along family 1, j along family 2).
    pub lattice: Vec<[i32; 2]>,
    /// Segment chord length, mm.
    pub delta: f64,
    /// Pocket ply surface area, m^2 (drives the load shares).
    pub patch_area_m2: f64,
}

impl PlyNet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Unique segments as (lower index, higher index) pairs, in
    /// deterministic order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (i, nb) in self.neighbors.iter().enumerate() {
            for &slot in &[F1_POS, F2_POS] {
                let j = nb[slot];
                if j >= 0 {
                    out.push((i as u32, j as u32));
                }
            }
        }
        out
    }

    pub fn count_class(&self, class: NodeClass) -> usize {
        self.class.iter().filter(|&&c| c == class).count()
    }

    /// Structural sanity: index bounds, neighbor symmetry, edge lengths.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len() as i32;
        if self.neighbors.len() != self.nodes.len()
            || self.class.len() != self.nodes.len()
            || self.lattice.len() != self.nodes.len()
        {
            return Err(Error::Meshing("net arrays disagree in length".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Meshing("net spacing must be positive".into()));
        }
        for (i, nb) in self.neighbors.iter().enumerate() {
            for (slot, &j) in nb.iter().enumerate() {
                if j < -1 || j >= n {
                    return Err(Error::Meshing(format!("node {i}: neighbor out of range")));
                }
                if j >= 0 {
                    let back = [F1_NEG, F1_POS, F2_NEG, F2_POS][slot];
                    if self.neighbors[j as usize][back] != i as i32 {
                        return Err(Error::Meshing(format!(
                            "asymmetric adjacency between {i} and {j}"
                        )));
                    }
                }
            }
            let mut seen: Vec<i32> = nb.iter().copied().filter(|&j| j >= 0).collect();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != nb.iter().filter(|&&j| j >= 0).count() {
                return Err(Error::Meshing(format!("node {i}: duplicate neighbor")));
            }
        }
        Ok(())
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<PlyNet> {
        let f = std::fs::File::open(path)?;
        let net: PlyNet = serde_json::from_reader(std::io::BufReader::new(f))?;
        net.validate()?;
        Ok(net)
    }
}

/// Node spacing from the pocket surface area and node budget:
/// sqrt(area / target), clamped to [2 * thickness, extent / 3]. All mm.
/// Fails when the clamp window is empty (pocket narrower than six plies).
pub fn choose_discretization(
    area_cm2: f64,
    target_nodes: usize,
    thickness_mm: f64,
    extent_mm: f64,
) -> Result<f64> {
    let raw = (area_cm2 * 100.0 / target_nodes.max(1) as f64).sqrt();
    let lo = 2.0 * thickness_mm;
    let hi = extent_mm / 3.0;
    if hi < lo {
        return Err(Error::Meshing(format!(
            "patch too small to mesh: extent {extent_mm} mm under {} mm floor",
            3.0 * lo
        )));
    }
    Ok(raw.clamp(lo, hi))
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Walks the surface from `from` along direction `t` (3D, tangent-ish) in
/// small vertically projected substeps, re-projecting the direction onto the
/// local tangent plane, until the chord from `from` reaches `delta`; then
/// bisects the final substep so the chord is exact. Returns the landed node
/// and the outgoing direction, or None when the walk leaves the surface.
fn march_next(
    surface: &BilinearSurface,
    from: [f64; 3],
    t: [f64; 3],
    delta: f64,
) -> Option<([f64; 3], [f64; 3])> {
    let sub = delta / 8.0;
    let mut p = from;
    let mut t = t;
    for _ in 0..200 {
        let txy = (t[0] * t[0] + t[1] * t[1]).sqrt();
        if txy < 1e-9 {
            return None; // vertical tangent: not a heightfield direction
        }
        let (dx, dy) = (t[0] / txy, t[1] / txy);
        let step = |s: f64| -> Option<[f64; 3]> {
            let x = p[0] + s * sub * dx;
            let y = p[1] + s * sub * dy;
            surface.contains(x, y).then(|| surface.point(x, y))
        };
        let q = step(1.0)?;
        if dist3(q, from) >= delta {
            // Chord is monotone along the substep; bisect to land exactly.
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if dist3(step(mid)?, from) >= delta {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let landed = step(0.5 * (lo + hi))?;
            let (_, gx, gy) = surface.height_and_gradient(landed[0], landed[1]);
            let n = normalize3([-gx, -gy, 1.0]);
            let sec = normalize3([landed[0] - p[0], landed[1] - p[1], landed[2] - p[2]]);
            let dot = sec[0] * n[0] + sec[1] * n[1] + sec[2] * n[2];
            let out = normalize3([sec[0] - dot * n[0], sec[1] - dot * n[1], sec[2] - dot * n[2]]);
            return Some((landed, out));
        }
        // Advance and bend the direction with the surface.
        let (_, gx, gy) = surface.height_and_gradient(q[0], q[1]);
        let n = normalize3([-gx, -gy, 1.0]);
        let sec = normalize3([q[0] - p[0], q[1] - p[1], q[2] - p[2]]);
        let dot = sec[0] * n[0] + sec[1] * n[1] + sec[2] * n[2];
        t = normalize3([sec[0] - dot * n[0], sec[1] - dot * n[1], sec[2] - dot * n[2]]);
        p = q;
    }
    None
}

/// Solves for the quadrant node at distance `delta` from both parents `a`
/// and `b`, constrained to the surface, by 2D Newton started from the
/// parallelogram guess. Rejects roots far from the guess (wrong branch).
fn solve_quadrant_node(
    surface: &BilinearSurface,
    a: [f64; 3],
    b: [f64; 3],
    guess_xy: [f64; 2],
    delta: f64,
) -> Option<[f64; 3]> {
    let mut x = guess_xy[0];
    let mut y = guess_xy[1];
    let tol = 1e-12 * delta * delta;
    for _ in 0..100 {
        if !surface.contains(x, y) {
            return None;
        }
        let (z, gx, gy) = surface.height_and_gradient(x, y);
        let q = [x, y, z];
        let f1 = (q[0] - a[0]).powi(2) + (q[1] - a[1]).powi(2) + (q[2] - a[2]).powi(2)
            - delta * delta;
        let f2 = (q[0] - b[0]).powi(2) + (q[1] - b[1]).powi(2) + (q[2] - b[2]).powi(2)
            - delta * delta;
        if f1.abs() <= tol && f2.abs() <= tol {
            let g = surface.point(guess_xy[0], guess_xy[1]);
            if dist3(q, g) > delta {
                return None;
            }
            return Some(q);
        }
        let j11 = 2.0 * ((q[0] - a[0]) + (q[2] - a[2]) * gx);
        let j12 = 2.0 * ((q[1] - a[1]) + (q[2] - a[2]) * gy);
        let j21 = 2.0 * ((q[0] - b[0]) + (q[2] - b[2]) * gx);
        let j22 = 2.0 * ((q[1] - b[1]) + (q[2] - b[2]) * gy);
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-14 * delta * delta {
            return None;
        }
        let mut sx = (f1 * j22 - f2 * j12) / det;
        let mut sy = (j11 * f2 - j21 * f1) / det;
        let sn = (sx * sx + sy * sy).sqrt();
        let cap = 0.5 * delta;
        if sn > cap {
            sx *= cap / sn;
            sy *= cap / sn;
        }
        x -= sx;
        y -= sy;
    }
    None
}

/// Builds the pin-jointed net for a pocket patch.
pub fn mesh_patch(patch: &AirPocketPatch, config: &MeshConfig, thickness_mm: f64) -> Result<PlyNet> {
    let surface = &patch.ply;
    let (blo, bhi) =
        geom::bounding_box(&patch.boundary).ok_or_else(|| Error::Meshing("empty boundary".into()))?;
    let extent = (bhi[0] - blo[0]).max(bhi[1] - blo[1]);
    if extent <= 0.0 {
        return Err(Error::Meshing("degenerate patch extent".into()));
    }
    let delta = choose_discretization(patch.area_cm2, config.target_nodes, thickness_mm, extent)?;

    let seed_xy = if config.seed_at_peak {
        let mut best = patch.centroid;
        let mut best_h = f64::NEG_INFINITY;
        for [x, y] in patch.interior_points() {
            let h = surface.height(x, y) - patch.reference.height(x, y);
            if h > best_h {
                best_h = h;
                best = [x, y];
            }
        }
        best
    } else {
        patch.centroid
    };
    if !surface.contains(seed_xy[0], seed_xy[1]) {
        return Err(Error::Meshing("seed point outside patch surface".into()));
    }

    let keep = |xy: [f64; 2]| -> bool {
        surface.contains(xy[0], xy[1])
            && geom::dist_outside_polygon(xy, &patch.boundary) <= delta
    };

    let seed = surface.point(seed_xy[0], seed_xy[1]);
    let mut positions: Vec<[f64; 3]> = vec![seed];
    let mut index: HashMap<(i32, i32), usize> = HashMap::new();
    index.insert((0, 0), 0);

    // Fiber axes: march from the seed in the four half-directions.
    let (_, sgx, sgy) = surface.height_and_gradient(seed[0], seed[1]);
    for (family, &angle_deg) in config.fiber_angles.iter().enumerate() {
        let a = angle_deg.to_radians();
        let dir_xy = [a.cos(), a.sin()];
        for &sign in &[1i32, -1i32] {
            let s = sign as f64;
            let mut t = normalize3([
                s * dir_xy[0],
                s * dir_xy[1],
                s * (sgx * dir_xy[0] + sgy * dir_xy[1]),
            ]);
            let mut p = seed;
            let mut step_idx = 1i32;
            loop {
                let Some((q, t_next)) = march_next(surface, p, t, delta) else {
                    // The walk ran off the patch surface. If the line was
                    // still inside the pocket it never reached the trim
                    // boundary: the patch carries too little surround.
                    if geom::dist_outside_polygon([p[0], p[1]], &patch.boundary) == 0.0 {
                        return Err(Error::Meshing(format!(
                            "margin too small: net line left patch {} surface inside the pocket",
                            patch.id
                        )));
                    }
                    break;
                };
                if !keep([q[0], q[1]]) {
                    break;
                }
                let key = if family == 0 {
                    (sign * step_idx, 0)
                } else {
                    (0, sign * step_idx)
                };
                positions.push(q);
                index.insert(key, positions.len() - 1);
                p = q;
                t = t_next;
                step_idx += 1;
            }
        }
    }

    // Quadrant fill: node (i, j) from parents (i - si, j), (i, j - sj) and
    // diagonal (i - si, j - sj) for each sign pair (si, sj).
    let max_steps = (4.0 * extent / delta).ceil() as i32 + 4;
    for &(si, sj) in &[(1i32, 1i32), (1, -1), (-1, 1), (-1, -1)] {
        for jj in 1..=max_steps {
            let mut any_in_row = false;
            for ii in 1..=max_steps {
                let key = (si * ii, sj * jj);
                let pa = index.get(&(si * (ii - 1), sj * jj)).copied();
                let pb = index.get(&(si * ii, sj * (jj - 1))).copied();
                let pc = index.get(&(si * (ii - 1), sj * (jj - 1))).copied();
                let (Some(pa), Some(pb), Some(pc)) = (pa, pb, pc) else {
                    continue;
                };
                let a = positions[pa];
                let b = positions[pb];
                let c = positions[pc];
                let guess = [a[0] + b[0] - c[0], a[1] + b[1] - c[1]];
                let Some(q) = solve_quadrant_node(surface, a, b, guess, delta) else {
                    continue;
                };
                if !keep([q[0], q[1]]) {
                    continue;
                }
                positions.push(q);
                index.insert(key, positions.len() - 1);
                any_in_row = true;
            }
            if !any_in_row {
                break;
            }
        }
    }

    // Deterministic node order: sort lattice keys, remap.
    let mut keys: Vec<(i32, i32)> = index.keys().copied().collect();
    keys.sort_unstable();
    let mut nodes = Vec::with_capacity(keys.len());
    let mut lattice = Vec::with_capacity(keys.len());
    let mut remap: HashMap<(i32, i32), usize> = HashMap::with_capacity(keys.len());
    for (new_idx, &key) in keys.iter().enumerate() {
        nodes.push(positions[index[&key]]);
        lattice.push([key.0, key.1]);
        remap.insert(key, new_idx);
    }
    let mut neighbors = vec![[-1i32; 4]; nodes.len()];
    for (idx, &(i, j)) in keys.iter().enumerate() {
        let mut link = |slot: usize, key: (i32, i32)| {
            if let Some(&other) = remap.get(&key) {
                neighbors[idx][slot] = other as i32;
            }
        };
        link(F1_POS, (i + 1, j));
        link(F1_NEG, (i - 1, j));
        link(F2_POS, (i, j + 1));
        link(F2_NEG, (i, j - 1));
    }

    // Classification: inside the pocket polygon = interior; outside it and
    // resting on the mold = boundary (free when near the ply edge).
    let mut class = Vec::with_capacity(nodes.len());
    for p in &nodes {
        let xy = [p[0], p[1]];
        let d_out = geom::dist_outside_polygon(xy, &patch.boundary);
        if d_out == 0.0 {
            class.push(NodeClass::Interior);
            continue;
        }
        let on_mold = (p[2] - patch.reference.height(xy[0], xy[1])).abs() <= config.mold_contact_tol;
        if !on_mold {
            class.push(NodeClass::Interior);
            continue;
        }
        let near_edge = patch
            .ply_outline
            .iter()
            .any(|poly| geom::dist_to_polygon_outline(xy, poly) <= config.ply_boundary_tol);
        class.push(if near_edge {
            NodeClass::FreeBoundary
        } else {
            NodeClass::FixedBoundary
        });
    }
    if !class
        .iter()
        .any(|&c| c == NodeClass::FixedBoundary || c == NodeClass::FreeBoundary)
    {
        return Err(Error::Meshing(format!(
            "open net: patch {} has no mold-contact boundary nodes within the trim band",
            patch.id
        )));
    }

    let net = PlyNet {
        patch_id: patch.id,
        nodes,
        neighbors,
        class,
        lattice,
        delta,
        patch_area_m2: patch.area_cm2 * 1e-4,
    };
    if net.len() < 9 || net.edges().is_empty() {
        return Err(Error::Meshing(format!(
            "net too small ({} nodes) for patch {}; pocket may be under-resolved",
            net.len(),
            patch.id
        )));
    }
    net.validate()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::build_heightmap;
    use crate::segmentation::{extract_patches, SegmentationSettings};
    use crate::synth::{generate, MoldKind, PocketSpec, SceneSpec};
    use approx::assert_relative_eq;

    fn scene_patch(mold: MoldKind, peak: f64, r: f64) -> AirPocketPatch {
        let spec = SceneSpec {
            mold,
            extent: [160.0, 160.0],
            pitch: 1.0,
            ply_outline: None,
            ply_inset: 5.0,
            pockets: vec![PocketSpec {
                center: [0.0, 0.0],
                rx: r,
                ry: r,
                peak,
            }],
            noise_std: 0.0,
            outlier_fraction: 0.0,
            cut_height: 2.0,
        };
        let scene = generate(&spec, 0).unwrap();
        let hm = build_heightmap(&scene.cloud, &scene.reference, 1.0).unwrap();
        let settings = SegmentationSettings {
            margin: Some(30.0),
            ..SegmentationSettings::default()
        };
        let mut patches = extract_patches(&hm, &scene.reference, &settings).unwrap();
        assert_eq!(patches.len(), 1);
        patches.pop().unwrap()
    }

    #[test]
    fn spacing_rule_and_clamps() {
        // 438 cm^2 at 100 nodes: sqrt(43800/100) = 20.93 mm.
        let d = choose_discretization(438.0, 100, 0.3, 300.0).unwrap();
        assert!((d - 20.928).abs() < 0.01, "got {d}");
        assert_relative_eq!(d, 438f64.sqrt());
        // 5.35 cm^2 at 100 nodes: sqrt(535/100) = 2.31 mm.
        let d = choose_discretization(5.35, 100, 0.3, 100.0).unwrap();
        assert!((d - 2.313).abs() < 0.01, "got {d}");
        // Quadrupling the node budget halves the spacing.
        assert_relative_eq!(
            choose_discretization(438.0, 400, 0.3, 300.0).unwrap(),
            438f64.sqrt() / 2.0,
            epsilon = 1e-12
        );
        // Lower clamp at 2 * thickness.
        assert_relative_eq!(choose_discretization(0.01, 1000, 0.3, 100.0).unwrap(), 0.6);
        // Upper clamp at extent / 3.
        assert_relative_eq!(choose_discretization(1000.0, 4, 0.3, 60.0).unwrap(), 20.0);
        // Pocket narrower than six plies cannot be meshed at all.
        let err = choose_discretization(0.01, 100, 0.3, 1.5).unwrap_err();
        assert!(err.to_string().contains("patch too small to mesh"), "{err}");
    }

    #[test]
    fn flat_pocket_net_is_square_lattice() {
        let patch = scene_patch(MoldKind::Flat, 8.0, 30.0);
        let net = mesh_patch(&patch, &MeshConfig::default(), 0.3).unwrap();
        net.validate().unwrap();
        assert!(net.len() >= 40, "got {} nodes", net.len());
        // Every edge has chord length Delta to 1e-6 relative.
        for (i, j) in net.edges() {
            let d = dist3(net.nodes[i as usize], net.nodes[j as usize]);
            assert!(
                (d - net.delta).abs() <= 1e-6 * net.delta,
                "edge {i}-{j}: {d} vs {}",
                net.delta
            );
        }
        // The seed sits at the lattice origin.
        let seed_idx = net.lattice.iter().position(|&l| l == [0, 0]).unwrap();
        assert_relative_eq!(net.nodes[seed_idx][0], patch.centroid[0], epsilon = 1e-9);
        // Some nodes must be anchored on the mold, none near the ply edge here.
        assert!(net.count_class(NodeClass::FixedBoundary) > 0);
        assert_eq!(net.count_class(NodeClass::FreeBoundary), 0);
        assert!(net.count_class(NodeClass::Interior) > 0);
        // Nodes inside the pocket keep a full 4-neighbor stencil.
        for k in 0..net.len() {
            let inside =
                geom::dist_outside_polygon([net.nodes[k][0], net.nodes[k][1]], &patch.boundary)
                    == 0.0;
            if inside {
                let deg = net.neighbors[k].iter().filter(|&&j| j >= 0).count();
                assert_eq!(deg, 4, "pocket node {k} has degree {deg}");
            }
        }
        // Fixed nodes really rest on the mold.
        for k in 0..net.len() {
            if net.class[k] == NodeClass::FixedBoundary {
                let zr = patch.reference.height(net.nodes[k][0], net.nodes[k][1]);
                assert!((net.nodes[k][2] - zr).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn shallow_rim_pocket_is_an_open_net() {
        // A wide, low dome whose skirt never drops to the mold within one
        // node spacing of the trim boundary: no node can be anchored.
        let patch = scene_patch(MoldKind::Flat, 3.3, 60.0);
        let err = mesh_patch(&patch, &MeshConfig::default(), 0.3).unwrap_err();
        assert!(err.to_string().contains("open net"), "{err}");
    }

    #[test]
    fn meshing_is_deterministic() {
        let patch = scene_patch(MoldKind::Flat, 8.0, 30.0);
        let a = mesh_patch(&patch, &MeshConfig::default(), 0.3).unwrap();
        let b = mesh_patch(&patch, &MeshConfig::default(), 0.3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn curved_mold_chords_match_circle_geometry() {
        // On a cylinder of radius R the chord between nodes Delta apart on
        // the surface subtends arc 2 R asin(Delta / 2R) >= Delta; node xy
        // spacing shrinks on the flanks but chords stay Delta.
        let patch = scene_patch(MoldKind::Cylinder { radius: 300.0 }, 8.0, 30.0);
        let net = mesh_patch(&patch, &MeshConfig::default(), 0.3).unwrap();
        for (i, j) in net.edges() {
            let d = dist3(net.nodes[i as usize], net.nodes[j as usize]);
            assert!((d - net.delta).abs() <= 1e-6 * net.delta);
        }
        // A family-1 path crossing the crown: its xy extent must be smaller
        // than its node count times Delta (the path bends down the flank).
        let on_axis: Vec<usize> = (0..net.len()).filter(|&k| net.lattice[k][1] == 0).collect();
        let xs: Vec<f64> = on_axis.iter().map(|&k| net.nodes[k][0]).collect();
        let span = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(span < (on_axis.len() - 1) as f64 * net.delta - 1e-6);
    }

    #[test]
    fn nodes_extend_at_most_delta_outside_boundary() {
        let patch = scene_patch(MoldKind::Flat, 8.0, 30.0);
        let net = mesh_patch(&patch, &MeshConfig::default(), 0.3).unwrap();
        for p in &net.nodes {
            let d = geom::dist_outside_polygon([p[0], p[1]], &patch.boundary);
            assert!(d <= net.delta + 1e-9, "node {d} mm outside trim band");
        }
    }

    #[test]
    fn free_band_classification_near_ply_edge() {
        // Pocket close to the ply outline: some boundary nodes become free.
        let spec = SceneSpec {
            mold: MoldKind::Flat,
            extent: [160.0, 160.0],
            pitch: 1.0,
            ply_outline: None,
            ply_inset: 5.0,
            pockets: vec![PocketSpec {
                center: [-45.0, 0.0],
                rx: 25.0,
                ry: 25.0,
                peak: 8.0,
            }],
            noise_std: 0.0,
            outlier_fraction: 0.0,
            cut_height: 2.0,
        };
        let scene = generate(&spec, 0).unwrap();
        let hm = build_heightmap(&scene.cloud, &scene.reference, 1.0).unwrap();
        let patches =
            extract_patches(&hm, &scene.reference, &SegmentationSettings::default()).unwrap();
        let net = mesh_patch(&patches[0], &MeshConfig::default(), 0.3).unwrap();
        assert!(net.count_class(NodeClass::FreeBoundary) > 0);
        assert!(net.count_class(NodeClass::FixedBoundary) > 0);
        // Free nodes are all on the side toward the ply edge (x < center).
        for k in 0..net.len() {
            if net.class[k] == NodeClass::FreeBoundary {
                assert!(net.nodes[k][0] < -30.0, "free node at x={}", net.nodes[k][0]);
            }
        }
    }

    #[test]
    fn net_json_roundtrip_and_validation() {
        let patch = scene_patch(MoldKind::Flat, 8.0, 30.0);
        let net = mesh_patch(&patch, &MeshConfig::default(), 0.3).unwrap();
        let dir = std::env::temp_dir().join("debulk-mesh-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.json");
        net.write_json(&path).unwrap();
        let back = PlyNet::read_json(&path).unwrap();
        assert_eq!(net, back);

        let mut broken = net.clone();
        broken.neighbors[0][F1_POS] = 9999;
        assert!(broken.validate().is_err());
    }

    #[test]
    fn seed_at_peak_moves_origin() {
        // Off-center peak inside an elliptical pocket.
        let spec = SceneSpec {
            mold: MoldKind::Flat,
            extent: [160.0, 160.0],
            pitch: 1.0,
            ply_outline: None,
            ply_inset: 5.0,
            pockets: vec![
                PocketSpec {
                    center: [0.0, 0.0],
                    rx: 35.0,
                    ry: 25.0,
                    peak: 5.0,
                },
                PocketSpec {
                    center: [12.0, 0.0],
                    rx: 12.0,
                    ry: 12.0,
                    peak: 6.0,
                },
            ],
            noise_std: 0.0,
            outlier_fraction: 0.0,
            cut_height: 2.0,
        };
        let scene = generate(&spec, 0).unwrap();
        let hm = build_heightmap(&scene.cloud, &scene.reference, 1.0).unwrap();
        let patches =
            extract_patches(&hm, &scene.reference, &SegmentationSettings::default()).unwrap();
        assert_eq!(patches.len(), 1); // overlapping bumps merge into one pocket
        let cfg = MeshConfig {
            seed_at_peak: true,
            ..MeshConfig::default()
        };
        let net = mesh_patch(&patches[0], &cfg, 0.3).unwrap();
        let seed_idx = net.lattice.iter().position(|&l| l == [0, 0]).unwrap();
        // Peak of the combined surface is near x = 12, not the centroid.
        assert!((net.nodes[seed_idx][0] - 12.0).abs() <= 2.0);
    }
}
