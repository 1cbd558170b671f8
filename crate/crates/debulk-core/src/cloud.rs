//! Organized scanner point clouds and scan preparation: statistical outlier
//! removal, median smoothing, and heightmap construction against the mold
//! reference surface. Coordinates are in mm.

use serde::{Deserialize, Serialize};
use std::io::{Read as _, Write as _};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{HeightMap, ReferenceSurface};

pub const DEFAULT_KNN: usize = 4;
pub const DEFAULT_MEDIAN_WINDOW: usize = 5;
pub const DEFAULT_HEIGHTMAP_SPACING: f64 = 1.0;

const CLOUD_MAGIC: &[u8; 8] = b"DBKCLD01";

/// Rigid transform from the scanner frame into the mold frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub fn identity() -> RigidTransform {
        RigidTransform {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0, 0.0, 0.0],
        }
    }

    pub fn is_identity(&self) -> bool {
        self == &RigidTransform::identity()
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }
}

/// Scanner output: one point per pixel on a width x height raster, with
/// validity flags for dropouts. Points are stored in the scanner frame;
/// `transform` maps them into the mold frame.
#[derive(Clone, Debug, PartialEq)]
pub struct OrganizedPointCloud {
    width: usize,
    height: usize,
    points: Vec<[f64; 3]>,
    valid: Vec<bool>,
    pub transform: RigidTransform,
}

/// Outlier-removal report: the mean `m` and standard deviation `s` of the
/// per-point mean k-nearest-neighbor distances, and how many points were
/// flagged (mean distance above m + s) and invalidated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiseStats {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub removed: usize,
}

impl OrganizedPointCloud {
    pub fn new(width: usize, height: usize) -> OrganizedPointCloud {
        OrganizedPointCloud {
            width,
            height,
            points: vec![[0.0; 3]; width * height],
            valid: vec![false; width * height],
            transform: RigidTransform::identity(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    pub fn point(&self, row: usize, col: usize) -> [f64; 3] {
        self.points[self.idx(row, col)]
    }

    pub fn set_point(&mut self, row: usize, col: usize, p: [f64; 3]) {
        let i = self.idx(row, col);
        self.points[i] = p;
        self.valid[i] = true;
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[self.idx(row, col)]
    }

    pub fn invalidate(&mut self, row: usize, col: usize) {
        let i = self.idx(row, col);
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Point mapped into the mold frame.
    pub fn point_in_mold_frame(&self, row: usize, col: usize) -> [f64; 3] {
        self.transform.apply(self.point(row, col))
    }

    /// Binary cloud file; values round-trip bit-exactly.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(128 + self.points.len() * 25);
        buf.extend_from_slice(CLOUD_MAGIC);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for r in &self.transform.rotation {
            for v in r {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in &self.transform.translation {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for (p, &ok) in self.points.iter().zip(&self.valid) {
            for v in p {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.push(ok as u8);
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<OrganizedPointCloud> {
        let show = path.display().to_string();
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut at = 0usize;
        let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
            if *at + n > bytes.len() {
                return Err(Error::format(&show, "truncated cloud file"));
            }
            let s = &bytes[*at..*at + n];
            *at += n;
            Ok(s)
        };
        let f64_at = |at: &mut usize| -> Result<f64> {
            Ok(f64::from_le_bytes(take(at, 8)?.try_into().unwrap()))
        };
        if take(&mut at, 8)? != CLOUD_MAGIC {
            return Err(Error::format(&show, "not a cloud file (bad magic)"));
        }
        let width = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let mut transform = RigidTransform::identity();
        for r in 0..3 {
            for c in 0..3 {
                transform.rotation[r][c] = f64_at(&mut at)?;
            }
        }
        for t in 0..3 {
            transform.translation[t] = f64_at(&mut at)?;
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::format(&show, "cloud dimensions overflow"))?;
        let mut cloud = OrganizedPointCloud::new(width, height);
        cloud.transform = transform;
        for i in 0..n {
            let p = [f64_at(&mut at)?, f64_at(&mut at)?, f64_at(&mut at)?];
            let ok = take(&mut at, 1)?[0] != 0;
            cloud.points[i] = p;
            cloud.valid[i] = ok;
        }
        if at != bytes.len() {
            return Err(Error::format(&show, "trailing bytes after cloud data"));
        }
        Ok(cloud)
    }

    /// CSV interchange format with header `row,col,x,y,z,valid`. Pixels
    /// absent from the file are invalid. The rigid transform is not carried
    /// (assumed identity / already in the mold frame).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["row", "col", "x", "y", "z", "valid"])?;
        for row in 0..self.height {
            for col in 0..self.width {
                let p = self.point(row, col);
                w.write_record([
                    row.to_string(),
                    col.to_string(),
                    p[0].to_string(),
                    p[1].to_string(),
                    p[2].to_string(),
                    (self.is_valid(row, col) as u8).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<OrganizedPointCloud> {
        let show = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let mut rows: Vec<(usize, usize, [f64; 3], bool)> = Vec::new();
        let mut max_row = 0usize;
        let mut max_col = 0usize;
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() < 6 {
                return Err(Error::format(&show, "expected 6 columns: row,col,x,y,z,valid"));
            }
            let parse_u = |i: usize| -> Result<usize> {
                rec[i].trim().parse::<usize>().map_err(|e| {
                    Error::format(&show, format!("column {}: {e}", i))
                })
            };
            let parse_f = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|e| {
                    Error::format(&show, format!("column {}: {e}", i))
                })
            };
            let (r, c) = (parse_u(0)?, parse_u(1)?);
            let p = [parse_f(2)?, parse_f(3)?, parse_f(4)?];
            let ok = rec[5].trim() != "0";
            max_row = max_row.max(r);
            max_col = max_col.max(c);
            rows.push((r, c, p, ok));
        }
        if rows.is_empty() {
            return Err(Error::EmptyInput(format!("{show}: no data rows")));
        }
        let mut cloud = OrganizedPointCloud::new(max_col + 1, max_row + 1);
        let mut seen = vec![false; cloud.points.len()];
        for (r, c, p, ok) in rows {
            let i = r * cloud.width + c;
            if seen[i] {
                return Err(Error::format(&show, format!("duplicate pixel ({r}, {c})")));
            }
            seen[i] = true;
            cloud.points[i] = p;
            cloud.valid[i] = ok;
        }
        Ok(cloud)
    }
}

/// Uniform grid of bucketed point indices for exact k-nearest-neighbor
/// queries by expanding cell rings: every point in a cell at Chebyshev cell
/// distance d > w from the query cell lies at least w * cell_size away, so
/// once the k-th best distance drops below w * cell_size the search is done.
struct SpatialHash {
    cell: f64,
    buckets: std::collections::HashMap<[i64; 3], Vec<usize>>,
}

impl SpatialHash {
    fn key(cell: f64, p: [f64; 3]) -> [i64; 3] {
        [
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        ]
    }

    fn build(points: &[[f64; 3]], cell: f64) -> SpatialHash {
        let mut buckets: std::collections::HashMap<[i64; 3], Vec<usize>> =
            std::collections::HashMap::new();
        for (i, &p) in points.iter().enumerate() {
            buckets.entry(Self::key(cell, p)).or_default().push(i);
        }
        SpatialHash { cell, buckets }
    }

    /// Mean distance from points[i] to its k nearest other points.
    fn mean_knn(&self, points: &[[f64; 3]], i: usize, k: usize, max_ring: i64) -> f64 {
        let p = points[i];
        let center = Self::key(self.cell, p);
        // Sorted max-first list of the k smallest distances found so far.
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        let mut w: i64 = 0;
        loop {
            for dx in -w..=w {
                for dy in -w..=w {
                    for dz in -w..=w {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != w {
                            continue;
                        }
                        let key = [center[0] + dx, center[1] + dy, center[2] + dz];
                        let Some(bucket) = self.buckets.get(&key) else {
                            continue;
                        };
                        for &j in bucket {
                            if j == i {
                                continue;
                            }
                            let q = points[j];
                            let d = ((q[0] - p[0]).powi(2)
                                + (q[1] - p[1]).powi(2)
                                + (q[2] - p[2]).powi(2))
                            .sqrt();
                            let pos = best.partition_point(|&b| b > d);
                            best.insert(pos, d);
                            if best.len() > k {
                                best.remove(0);
                            }
                        }
                    }
                }
            }
            if best.len() == k && best[0] <= w as f64 * self.cell {
                break;
            }
            if w > max_ring {
                break;
            }
            w += 1;
        }
        debug_assert_eq!(best.len(), k);
        best.iter().sum::<f64>() / best.len() as f64
    }
}

/// Statistical outlier removal: flags points whose mean distance to their k
/// nearest neighbors exceeds m + s, where m and s are the mean and
/// (population) standard deviation of that statistic over all valid points.
/// Flagged points are invalidated; coordinates are untouched.
pub fn denoise(
    cloud: &OrganizedPointCloud,
    k: usize,
) -> Result<(OrganizedPointCloud, DenoiseStats)> {
    if k == 0 {
        return Err(Error::InvalidArgument("denoise: k must be at least 1".into()));
    }
    let n_valid = cloud.valid_count();
    if n_valid <= k {
        return Err(Error::EmptyInput(format!(
            "denoise: need more than k={k} valid points, have {n_valid}"
        )));
    }
    let mut indices: Vec<usize> = Vec::with_capacity(n_valid);
    let mut points: Vec<[f64; 3]> = Vec::with_capacity(n_valid);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for row in 0..cloud.height() {
        for col in 0..cloud.width() {
            if cloud.is_valid(row, col) {
                let p = cloud.point(row, col);
                indices.push(row * cloud.width() + col);
                points.push(p);
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        }
    }
    let diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2))
        .sqrt()
        .max(1e-9);
    // Cell size targets a few points per bucket for flat-ish clouds.
    let cell = (diag / (n_valid as f64).sqrt()).max(1e-9);
    let hash = SpatialHash::build(&points, cell);
    let max_ring = (diag / cell).ceil() as i64 + 1;
    let mut means: Vec<(usize, f64)> = Vec::with_capacity(n_valid);
    for (slot, &i) in indices.iter().enumerate() {
        means.push((i, hash.mean_knn(&points, slot, k, max_ring)));
    }
    let m = means.iter().map(|&(_, d)| d).sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|&(_, d)| (d - m) * (d - m)).sum::<f64>() / means.len() as f64;
    let s = var.sqrt();
    let mut out = cloud.clone();
    let mut removed = 0usize;
    for &(i, d) in &means {
        if d > m + s {
            out.valid[i] = false;
            removed += 1;
        }
    }
    Ok((out, DenoiseStats { k, mean: m, std: s, removed }))
}

/// Median filter on z only, over an odd `window` x `window` pixel
/// neighborhood clipped at the raster edge; only valid pixels contribute,
/// and the validity mask is unchanged.
pub fn median_filter(cloud: &OrganizedPointCloud, window: usize) -> Result<OrganizedPointCloud> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "median_filter: window must be odd and positive, got {window}"
        )));
    }
    let half = window / 2;
    let mut out = cloud.clone();
    let mut buf: Vec<f64> = Vec::with_capacity(window * window);
    for row in 0..cloud.height() {
        for col in 0..cloud.width() {
            if !cloud.is_valid(row, col) {
                continue;
            }
            buf.clear();
            let r0 = row.saturating_sub(half);
            let r1 = (row + half).min(cloud.height() - 1);
            let c0 = col.saturating_sub(half);
            let c1 = (col + half).min(cloud.width() - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    if cloud.is_valid(r, c) {
                        buf.push(cloud.point(r, c)[2]);
                    }
                }
            }
            buf.sort_unstable_by(|a, b| a.total_cmp(b));
            let m = buf.len();
            let med = if m % 2 == 1 {
                buf[m / 2]
            } else {
                0.5 * (buf[m / 2 - 1] + buf[m / 2])
            };
            let i = out.idx(row, col);
            out.points[i][2] = med;
        }
    }
    Ok(out)
}

/// Rasterizes height-above-reference onto a regular grid of the given
/// spacing covering the valid points' xy bounding box. Multiple points in a
/// cell are averaged; empty cells are invalid. Every valid point must lie
/// within the reference surface extent.
pub fn build_heightmap(
    cloud: &OrganizedPointCloud,
    reference: &ReferenceSurface,
    spacing: f64,
) -> Result<HeightMap> {
    if spacing <= 0.0 {
        return Err(Error::InvalidArgument("heightmap spacing must be positive".into()));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut any = false;
    for row in 0..cloud.height() {
        for col in 0..cloud.width() {
            if !cloud.is_valid(row, col) {
                continue;
            }
            let p = cloud.point_in_mold_frame(row, col);
            if !reference.contains(p[0], p[1]) {
                return Err(Error::OutsideReference { x: p[0], y: p[1] });
            }
            lo[0] = lo[0].min(p[0]);
            lo[1] = lo[1].min(p[1]);
            hi[0] = hi[0].max(p[0]);
            hi[1] = hi[1].max(p[1]);
            any = true;
        }
    }
    if !any {
        return Err(Error::EmptyInput("build_heightmap: no valid points".into()));
    }
    let width = ((hi[0] - lo[0]) / spacing).round() as usize + 1;
    let height = ((hi[1] - lo[1]) / spacing).round() as usize + 1;
    let mut sum = vec![0.0f64; width * height];
    let mut count = vec![0u32; width * height];
    for row in 0..cloud.height() {
        for col in 0..cloud.width() {
            if !cloud.is_valid(row, col) {
                continue;
            }
            let p = cloud.point_in_mold_frame(row, col);
            let c = (((p[0] - lo[0]) / spacing).round() as usize).min(width - 1);
            let r = (((p[1] - lo[1]) / spacing).round() as usize).min(height - 1);
            let h = p[2] - reference.height(p[0], p[1]);
            sum[r * width + c] += h;
            count[r * width + c] += 1;
        }
    }
    let mut hm = HeightMap::new(lo, [spacing, spacing], width, height);
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if count[i] > 0 {
                hm.set_value(r, c, sum[i] / count[i] as f64);
            } else {
                hm.set_valid(r, c, false);
            }
        }
    }
    Ok(hm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BilinearSurface;
    use approx::assert_relative_eq;

    /// Brute-force m + s outlier oracle: all pairwise distances, k smallest.
    fn brute_force_removals(cloud: &OrganizedPointCloud, k: usize) -> Vec<usize> {
        let mut pts: Vec<(usize, [f64; 3])> = Vec::new();
        for r in 0..cloud.height() {
            for c in 0..cloud.width() {
                if cloud.is_valid(r, c) {
                    pts.push((r * cloud.width() + c, cloud.point(r, c)));
                }
            }
        }
        let mut means = Vec::new();
        for (i, (_, p)) in pts.iter().enumerate() {
            let mut ds: Vec<f64> = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, (_, q))| {
                    ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2)).sqrt()
                })
                .collect();
            ds.sort_unstable_by(|a, b| a.total_cmp(b));
            means.push(ds[..k].iter().sum::<f64>() / k as f64);
        }
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let s =
            (means.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / means.len() as f64).sqrt();
        pts.iter()
            .zip(&means)
            .filter(|&(_, &d)| d > m + s)
            .map(|((i, _), _)| *i)
            .collect()
    }

    fn grid_cloud(n: usize, pitch: f64) -> OrganizedPointCloud {
        let mut cloud = OrganizedPointCloud::new(n, n);
        for r in 0..n {
            for c in 0..n {
                cloud.set_point(r, c, [c as f64 * pitch, r as f64 * pitch, 0.0]);
            }
        }
        cloud
    }

    #[test]
    fn knn_matches_brute_force_on_flat_grid() {
        // A clean 10x10 grid is NOT uniform under the m + s rule: corner
        // points have larger mean 4-NN distance and land above threshold.
        let cloud = grid_cloud(10, 1.0);
        let expect = brute_force_removals(&cloud, 4);
        let (out, stats) = denoise(&cloud, 4).unwrap();
        let got: Vec<usize> = (0..100).filter(|&i| cloud.valid[i] && !out.valid[i]).collect();
        assert_eq!(got, expect);
        assert_eq!(stats.removed, expect.len());
        assert_eq!(got, vec![0, 9, 90, 99]); // exactly the four corners
        assert!(stats.std > 0.0);
    }

    #[test]
    fn single_far_outlier_is_removed_and_inflated_std_protects_corners() {
        let mut cloud = grid_cloud(10, 1.0);
        let p = cloud.point(5, 5);
        cloud.set_point(5, 5, [p[0], p[1], 50.0]);
        let (out, stats) = denoise(&cloud, 4).unwrap();
        let removed: Vec<usize> =
            (0..100).filter(|&i| cloud.valid[i] && !out.valid[i]).collect();
        assert_eq!(removed, vec![5 * 10 + 5]);
        assert_eq!(stats.removed, 1);
        assert_eq!(removed, brute_force_removals(&cloud, 4));
    }

    #[test]
    fn uniform_neighborhoods_remove_nothing() {
        // Corners of a cube: every point sees bit-identical neighbor
        // distances (3 edges, 3 face diagonals, 1 space diagonal), so s = 0
        // exactly and no point exceeds m + s.
        let mut cloud = OrganizedPointCloud::new(8, 1);
        for i in 0..8u32 {
            let p = [
                (i & 1) as f64 * 10.0,
                ((i >> 1) & 1) as f64 * 10.0,
                ((i >> 2) & 1) as f64 * 10.0,
            ];
            cloud.set_point(0, i as usize, p);
        }
        let (out, stats) = denoise(&cloud, 4).unwrap();
        assert_eq!(stats.std, 0.0);
        assert_eq!(stats.removed, 0);
        assert_eq!(out.valid_count(), 8);
    }

    #[test]
    fn knn_matches_brute_force_on_noisy_cloud() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut cloud = OrganizedPointCloud::new(20, 20);
        for r in 0..20 {
            for c in 0..20 {
                if rng.gen_bool(0.9) {
                    cloud.set_point(
                        r,
                        c,
                        [
                            c as f64 * 2.0 + rng.gen_range(-0.2..0.2),
                            r as f64 * 2.0 + rng.gen_range(-0.2..0.2),
                            rng.gen_range(-0.5..0.5),
                        ],
                    );
                }
            }
        }
        let expect = brute_force_removals(&cloud, 4);
        let (out, _) = denoise(&cloud, 4).unwrap();
        let got: Vec<usize> = (0..400).filter(|&i| cloud.valid[i] && !out.valid[i]).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn denoise_rejects_degenerate_inputs() {
        let cloud = grid_cloud(2, 1.0);
        assert!(denoise(&cloud, 0).is_err());
        assert!(denoise(&cloud, 4).is_err()); // 4 points, need > k
    }

    #[test]
    fn median_replaces_spike_and_keeps_mask() {
        let mut cloud = grid_cloud(7, 1.0);
        for r in 0..7 {
            for c in 0..7 {
                let p = cloud.point(r, c);
                cloud.set_point(r, c, [p[0], p[1], 3.0]);
            }
        }
        let p = cloud.point(3, 3);
        cloud.set_point(3, 3, [p[0], p[1], 80.0]);
        cloud.invalidate(1, 1);
        let out = median_filter(&cloud, 5).unwrap();
        assert_relative_eq!(out.point(3, 3)[2], 3.0);
        assert!(!out.is_valid(1, 1));
        assert_eq!(out.valid_count(), cloud.valid_count());
        // xy untouched
        assert_eq!(out.point(3, 3)[0], p[0]);
        assert_eq!(out.point(3, 3)[1], p[1]);
    }

    #[test]
    fn median_window_must_be_odd() {
        let cloud = grid_cloud(4, 1.0);
        assert!(median_filter(&cloud, 4).is_err());
        assert!(median_filter(&cloud, 0).is_err());
        assert!(median_filter(&cloud, 1).is_ok()); // identity
    }

    #[test]
    fn median_stays_within_window_bounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut cloud = grid_cloud(9, 1.0);
        for r in 0..9 {
            for c in 0..9 {
                let p = cloud.point(r, c);
                cloud.set_point(r, c, [p[0], p[1], rng.gen_range(-5.0..5.0)]);
            }
        }
        let out = median_filter(&cloud, 3).unwrap();
        for r in 0..9usize {
            for c in 0..9usize {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for rr in r.saturating_sub(1)..=(r + 1).min(8) {
                    for cc in c.saturating_sub(1)..=(c + 1).min(8) {
                        lo = lo.min(cloud.point(rr, cc)[2]);
                        hi = hi.max(cloud.point(rr, cc)[2]);
                    }
                }
                let z = out.point(r, c)[2];
                assert!(z >= lo - 1e-12 && z <= hi + 1e-12);
            }
        }
    }

    fn flat_reference(extent: f64, z: f64) -> ReferenceSurface {
        BilinearSurface::from_fn(
            [-extent, -extent],
            [5.0, 5.0],
            (2.0 * extent / 5.0) as usize + 1,
            (2.0 * extent / 5.0) as usize + 1,
            |_, _| z,
        )
        .unwrap()
    }

    #[test]
    fn heightmap_of_offset_plane_is_constant() {
        let reference = flat_reference(50.0, 10.0);
        let mut cloud = OrganizedPointCloud::new(21, 21);
        for r in 0..21 {
            for c in 0..21 {
                cloud.set_point(r, c, [c as f64 - 10.0, r as f64 - 10.0, 12.5]);
            }
        }
        let hm = build_heightmap(&cloud, &reference, 1.0).unwrap();
        assert_eq!((hm.width(), hm.height()), (21, 21));
        assert_eq!(hm.valid_count(), 21 * 21);
        for r in 0..hm.height() {
            for c in 0..hm.width() {
                assert_relative_eq!(hm.value(r, c), 2.5, epsilon = 1e-12);
            }
        }
        // Georeference roundtrip: cell centers map back to themselves.
        let [x, y] = hm.cell_to_world(4, 17);
        assert_eq!(hm.world_to_cell(x, y), Some((4, 17)));
    }

    #[test]
    fn heightmap_averages_cell_collisions_and_marks_gaps() {
        let reference = flat_reference(50.0, 0.0);
        let mut cloud = OrganizedPointCloud::new(3, 1);
        // Two points land in the same 1 mm cell, one far away.
        cloud.set_point(0, 0, [0.0, 0.0, 1.0]);
        cloud.set_point(0, 1, [0.2, 0.0, 3.0]);
        cloud.set_point(0, 2, [4.0, 0.0, 5.0]);
        let hm = build_heightmap(&cloud, &reference, 1.0).unwrap();
        assert_eq!((hm.width(), hm.height()), (5, 1));
        assert_relative_eq!(hm.value(0, 0), 2.0);
        assert!(!hm.is_valid(0, 2)); // no point near x = 2
        assert_relative_eq!(hm.value(0, 4), 5.0);
    }

    #[test]
    fn heightmap_requires_reference_coverage() {
        let reference = flat_reference(5.0, 0.0);
        let mut cloud = OrganizedPointCloud::new(2, 1);
        cloud.set_point(0, 0, [0.0, 0.0, 1.0]);
        cloud.set_point(0, 1, [100.0, 0.0, 1.0]);
        match build_heightmap(&cloud, &reference, 1.0) {
            Err(Error::OutsideReference { .. }) => {}
            other => panic!("expected OutsideReference, got {other:?}"),
        }
    }

    #[test]
    fn cloud_binary_roundtrip_bit_exact() {
        let mut cloud = grid_cloud(5, 0.7);
        cloud.invalidate(2, 3);
        cloud.transform.translation = [1.0, -2.0, 3.5];
        let dir = std::env::temp_dir().join("debulk-cloud-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.dbc");
        cloud.write_binary(&path).unwrap();
        let back = OrganizedPointCloud::read_binary(&path).unwrap();
        assert_eq!(cloud, back);
    }

    #[test]
    fn cloud_csv_roundtrip() {
        let mut cloud = grid_cloud(4, 1.5);
        cloud.invalidate(1, 2);
        let dir = std::env::temp_dir().join("debulk-cloud-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        cloud.write_csv(&path).unwrap();
        let back = OrganizedPointCloud::read_csv(&path).unwrap();
        assert_eq!(cloud, back);
    }
}
