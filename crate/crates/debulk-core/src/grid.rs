//! Regular 2D grids with a validity mask, and bilinear surfaces built on
//! them. Grids are row-major; cell (row, col) sits at world
//! (origin_x + col*dx, origin_y + row*dy). Units are the caller's (the
//! pipeline uses millimeters).

use serde::{Deserialize, Serialize};
use std::io::{Read as _, Write as _};
use std::path::Path;

use crate::error::{Error, Result};

const GRID_MAGIC: &[u8; 8] = b"DBKGRID1";

/// Scalar field sampled on a regular grid, with per-cell validity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    origin: [f64; 2],
    spacing: [f64; 2],
    width: usize,
    height: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

/// Height difference field (scanned ply minus reference), in mm.
pub type HeightMap = Grid;

impl Grid {
    pub fn new(origin: [f64; 2], spacing: [f64; 2], width: usize, height: usize) -> Grid {
        assert!(spacing[0] > 0.0 && spacing[1] > 0.0, "spacing must be positive");
        Grid {
            origin,
            spacing,
            width,
            height,
            values: vec![0.0; width * height],
            mask: vec![true; width * height],
        }
    }

    /// Builds a fully valid grid by sampling `f(x, y)` at every cell center.
    pub fn from_fn(
        origin: [f64; 2],
        spacing: [f64; 2],
        width: usize,
        height: usize,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Grid {
        let mut g = Grid::new(origin, spacing, width, height);
        for row in 0..height {
            for col in 0..width {
                let v = f(g.x_at(col), g.y_at(row));
                g.values[row * width + col] = v;
            }
        }
        g
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

    pub fn x_at(&self, col: usize) -> f64 {
        self.origin[0] + col as f64 * self.spacing[0]
    }

    pub fn y_at(&self, row: usize) -> f64 {
        self.origin[1] + row as f64 * self.spacing[1]
    }

    pub fn cell_to_world(&self, row: usize, col: usize) -> [f64; 2] {
        [self.x_at(col), self.y_at(row)]
    }

    /// Nearest cell for a world point, or None outside the grid.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = ((x - self.origin[0]) / self.spacing[0]).round();
        let row = ((y - self.origin[1]) / self.spacing[1]).round();
        if col < 0.0 || row < 0.0 || col as usize >= self.width || row as usize >= self.height {
            None
        } else {
            Some((row as usize, col as usize))
        }
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[self.idx(row, col)]
    }

    pub fn set_value(&mut self, row: usize, col: usize, v: f64) {
        let i = self.idx(row, col);
        self.values[i] = v;
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.mask[self.idx(row, col)]
    }

    pub fn set_valid(&mut self, row: usize, col: usize, valid: bool) {
        let i = self.idx(row, col);
        self.mask[i] = valid;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// World extent spanned by cell centers: (min corner, max corner).
    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        (
            self.origin,
            [
                self.origin[0] + (self.width.max(1) - 1) as f64 * self.spacing[0],
                self.origin[1] + (self.height.max(1) - 1) as f64 * self.spacing[1],
            ],
        )
    }

    /// Writes the binary grid format. Values round-trip bit-exactly.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(48 + self.values.len() * 9);
        buf.extend_from_slice(GRID_MAGIC);
        for v in [self.origin[0], self.origin[1], self.spacing[0], self.spacing[1]] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for &m in &self.mask {
            buf.push(m as u8);
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Grid> {
        let show = path.display().to_string();
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut at = 0usize;
        let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
            if *at + n > bytes.len() {
                return Err(Error::format(&show, "truncated grid file"));
            }
            let s = &bytes[*at..*at + n];
            *at += n;
            Ok(s)
        };
        if take(&mut at, 8)? != GRID_MAGIC {
            return Err(Error::format(&show, "not a grid file (bad magic)"));
        }
        let mut f64s = [0.0; 4];
        for slot in &mut f64s {
            *slot = f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
        }
        let width = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::format(&show, "grid dimensions overflow"))?;
        if f64s[2] <= 0.0 || f64s[3] <= 0.0 {
            return Err(Error::format(&show, "non-positive spacing"));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()));
        }
        let mut mask = Vec::with_capacity(n);
        for _ in 0..n {
            mask.push(take(&mut at, 1)?[0] != 0);
        }
        if at != bytes.len() {
            return Err(Error::format(&show, "trailing bytes after grid data"));
        }
        Ok(Grid {
            origin: [f64s[0], f64s[1]],
            spacing: [f64s[2], f64s[3]],
            width,
            height,
            values,
            mask,
        })
    }
}

/// Bilinear interpolant over a fully valid grid. Piecewise-bilinear, C0
/// across cell edges; the gradient is evaluated per cell and is
/// discontinuous across edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilinearSurface {
    grid: Grid,
}

/// Mold reference surface z = F_ref(x, y), in mm over mm coordinates.
pub type ReferenceSurface = BilinearSurface;

impl BilinearSurface {
    /// Requires every cell valid and at least 2x2 cells.
    pub fn new(grid: Grid) -> Result<BilinearSurface> {
        if grid.width < 2 || grid.height < 2 {
            return Err(Error::InvalidArgument(
                "bilinear surface needs at least 2x2 samples".into(),
            ));
        }
        if !grid.mask.iter().all(|&m| m) {
            return Err(Error::InvalidArgument(
                "bilinear surface requires a fully valid grid".into(),
            ));
        }
        Ok(BilinearSurface { grid })
    }

    pub fn from_fn(
        origin: [f64; 2],
        spacing: [f64; 2],
        width: usize,
        height: usize,
        f: impl FnMut(f64, f64) -> f64,
    ) -> Result<BilinearSurface> {
        BilinearSurface::new(Grid::from_fn(origin, spacing, width, height, f))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        self.grid.extent()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (lo, hi) = self.extent();
        x >= lo[0] && x <= hi[0] && y >= lo[1] && y <= hi[1]
    }

    /// Whether `other`'s valid extent lies inside this surface's extent.
    pub fn covers(&self, other: &Grid) -> bool {
        let (lo, hi) = other.extent();
        self.contains(lo[0], lo[1]) && self.contains(hi[0], hi[1])
    }

    fn locate(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let g = &self.grid;
        let fx = (x - g.origin[0]) / g.spacing[0];
        let fy = (y - g.origin[1]) / g.spacing[1];
        // Clamp into the cell range so evaluation is total; callers check
        // `contains` when outside-extent queries are an error.
        let cx = fx.clamp(0.0, (g.width - 2) as f64 + 1.0);
        let cy = fy.clamp(0.0, (g.height - 2) as f64 + 1.0);
        let col = (cx.floor() as usize).min(g.width - 2);
        let row = (cy.floor() as usize).min(g.height - 2);
        (row, col, cx - col as f64, cy - row as f64)
    }

    /// Interpolated height at (x, y), clamped to the grid extent.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        let (row, col, u, v) = self.locate(x, y);
        let g = &self.grid;
        let z00 = g.value(row, col);
        let z01 = g.value(row, col + 1);
        let z10 = g.value(row + 1, col);
        let z11 = g.value(row + 1, col + 1);
        (1.0 - u) * (1.0 - v) * z00 + u * (1.0 - v) * z01 + (1.0 - u) * v * z10 + u * v * z11
    }

    /// Height and in-cell analytic gradient (dz/dx, dz/dy) at (x, y).
    pub fn height_and_gradient(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (row, col, u, v) = self.locate(x, y);
        let g = &self.grid;
        let z00 = g.value(row, col);
        let z01 = g.value(row, col + 1);
        let z10 = g.value(row + 1, col);
        let z11 = g.value(row + 1, col + 1);
        let z =
            (1.0 - u) * (1.0 - v) * z00 + u * (1.0 - v) * z01 + (1.0 - u) * v * z10 + u * v * z11;
        let dzdx = ((1.0 - v) * (z01 - z00) + v * (z11 - z10)) / g.spacing[0];
        let dzdy = ((1.0 - u) * (z10 - z00) + u * (z11 - z01)) / g.spacing[1];
        (z, dzdx, dzdy)
    }

    /// 3D point on the surface above (x, y).
    pub fn point(&self, x: f64, y: f64) -> [f64; 3] {
        [x, y, self.height(x, y)]
    }

    /// Arc length of the surface curve above the straight XY segment from
    /// `a` to `b`, by dense trapezoid quadrature (kinks at cell edges make
    /// higher-order rules pointless).
    pub fn arc_length_over_segment(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let dx = b[0] - a[0];
        let dy = b[1] - a[1];
        let len = (dx * dx + dy * dy).sqrt();
        if len == 0.0 {
            return 0.0;
        }
        let h = self.grid.spacing[0].min(self.grid.spacing[1]);
        let n = ((len / (0.125 * h)).ceil() as usize).clamp(8, 20_000);
        let tx = dx / len;
        let ty = dy / len;
        let integrand = |t: f64| -> f64 {
            let (_, gx, gy) = self.height_and_gradient(a[0] + t * dx, a[1] + t * dy);
            let slope = gx * tx + gy * ty;
            (1.0 + slope * slope).sqrt()
        };
        let mut acc = 0.5 * (integrand(0.0) + integrand(1.0));
        for i in 1..n {
            acc += integrand(i as f64 / n as f64);
        }
        acc * len / n as f64
    }
}
