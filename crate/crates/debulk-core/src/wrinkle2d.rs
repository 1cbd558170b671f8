//! Finely discretized 2D ply cross-section under vacuum debulk: an
//! inextensible node chain with bending stiffness and gravity is pressed
//! onto a mold profile by load-stepped pressure acting normal to the ply.
//! This is the reference model the geometric ridge cross-section is
//! validated against.

use serde::{Deserialize, Serialize};

use crate::energy::MaterialParams;
use crate::error::{Error, Result};
use crate::optimizer::{minimize_constrained, ConstrainedProblem, SolverConfig};

/// Mold section profile z = f(x), mm in / mm out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MoldProfile2D {
    /// Horizontal line at the given height.
    Flat { z: f64 },
    /// Piecewise-linear profile through (x, z) samples sorted by x;
    /// clamped outside the sampled range.
    Polyline { points: Vec<[f64; 2]> },
}

impl MoldProfile2D {
    /// Height and slope at `x`, mm.
    pub fn height_and_slope(&self, x: f64) -> (f64, f64) {
        match self {
            MoldProfile2D::Flat { z } => (*z, 0.0),
            MoldProfile2D::Polyline { points } => {
                if points.is_empty() {
                    return (0.0, 0.0);
                }
                if x <= points[0][0] {
                    return (points[0][1], 0.0);
                }
                let last = points[points.len() - 1];
                if x >= last[0] {
                    return (last[1], 0.0);
                }
                let k = points.partition_point(|p| p[0] <= x);
                let a = points[k - 1];
                let b = points[k];
                let run = b[0] - a[0];
                if run <= 0.0 {
                    return (a[1], 0.0);
                }
                let s = (x - a[0]) / run;
                let slope = (b[1] - a[1]) / run;
                (a[1] + s * (b[1] - a[1]), slope)
            }
        }
    }

    pub fn height(&self, x: f64) -> f64 {
        self.height_and_slope(x).0
    }

    fn validate(&self) -> Result<()> {
        if let MoldProfile2D::Polyline { points } = self {
            if points.len() < 2 {
                return Err(Error::InvalidArgument(
                    "mold polyline needs at least two points".into(),
                ));
            }
            if points.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(Error::InvalidArgument(
                    "mold polyline x-coordinates must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Boundary condition at a chain end.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndCondition {
    Fixed,
    Free,
}

/// 2D ply cross-section: an ordered chain of nodes with per-segment rest
/// lengths, above a mold profile. Coordinates in mm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ply2D {
    pub nodes: Vec<[f64; 2]>,
    pub rest_lengths: Vec<f64>,
    pub ends: [EndCondition; 2],
    pub mold: MoldProfile2D,
}

impl Ply2D {
    /// Chain through the given points with rest lengths measured from them.
    pub fn from_points(
        nodes: Vec<[f64; 2]>,
        ends: [EndCondition; 2],
        mold: MoldProfile2D,
    ) -> Result<Ply2D> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument(
                "chain needs at least two nodes".into(),
            ));
        }
        let rest_lengths = nodes
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .collect();
        let ply = Ply2D {
            nodes,
            rest_lengths,
            ends,
            mold,
        };
        ply.validate()?;
        Ok(ply)
    }

    /// Symmetric triangle bump re-discretized into `segments` equal
    /// arc-length pieces: base corners at (-half_span, 0) and
    /// (half_span, 0), apex at (0, apex) over a flat mold at z = 0.
    pub fn triangle(half_span: f64, apex: f64, segments: usize) -> Result<Ply2D> {
        if half_span <= 0.0 || apex <= 0.0 {
            return Err(Error::InvalidArgument(
                "triangle half-span and apex must be positive".into(),
            ));
        }
        if segments < 2 {
            return Err(Error::InvalidArgument(
                "triangle needs at least two segments".into(),
            ));
        }
        let side = (half_span * half_span + apex * apex).sqrt();
        let total = 2.0 * side;
        let nodes = (0..=segments)
            .map(|k| {
                let s = total * k as f64 / segments as f64;
                if s <= side {
                    let f = s / side;
                    [-half_span + f * half_span, f * apex]
                } else {
                    let f = (s - side) / side;
                    [f * half_span, (1.0 - f) * apex]
                }
            })
            .collect();
        Ply2D::from_points(nodes, [EndCondition::Fixed; 2], MoldProfile2D::Flat { z: 0.0 })
    }

    /// Straight horizontal chain at height `z` from `x0` to `x1`.
    pub fn straight(x0: f64, x1: f64, z: f64, segments: usize) -> Result<Ply2D> {
        if segments < 1 || x1 <= x0 {
            return Err(Error::InvalidArgument(
                "straight chain needs x1 > x0 and at least one segment".into(),
            ));
        }
        let nodes = (0..=segments)
            .map(|k| [x0 + (x1 - x0) * k as f64 / segments as f64, z])
            .collect();
        Ply2D::from_points(nodes, [EndCondition::Fixed; 2], MoldProfile2D::Flat { z: 0.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() != self.rest_lengths.len() + 1 {
            return Err(Error::InvalidArgument(
                "rest length count must be node count - 1".into(),
            ));
        }
        if self.rest_lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidArgument(
                "segment rest lengths must be positive".into(),
            ));
        }
        self.mold.validate()?;
        // Chain must be simple at rest: no two non-adjacent segments cross.
        let n = self.nodes.len();
        for i in 0..n - 1 {
            for j in i + 2..n - 1 {
                if segments_cross(
                    self.nodes[i],
                    self.nodes[i + 1],
                    self.nodes[j],
                    self.nodes[j + 1],
                ) {
                    return Err(Error::InvalidArgument(format!(
                        "chain self-intersects between segments {i} and {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn total_rest_length(&self) -> f64 {
        self.rest_lengths.iter().sum()
    }
}

/// Proper crossing test for segments ab and cd (shared endpoints excluded
/// by the caller's index stride).
fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| -> f64 {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Chain configuration after one load step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub step: usize,
    /// Pressure applied during this step, Pa (0 for the initial state).
    pub pressure_pa: f64,
    pub nodes: Vec<[f64; 2]>,
    /// Chain length in this configuration, mm.
    pub length_mm: f64,
    /// Tallest height above the mold, mm.
    pub apex_mm: f64,
    pub converged: bool,
    /// Some segment points backwards in x (fold past vertical tangency);
    /// self-contact is not modeled, treat with care.
    pub folded: bool,
    pub objective: f64,
    /// Objective of the step-start configuration under this step's load
    /// (the previous solution re-evaluated with the new pressure).
    pub start_objective: f64,
    pub max_eq_residual_rel: f64,
    pub max_penetration_m: f64,
    pub inner_iterations: usize,
    pub function_evaluations: usize,
}

/// Full load-stepped simulation trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wrinkle2DResult {
    /// Index 0 is the initial configuration; one entry per load step after.
    pub states: Vec<ChainState>,
    pub rest_length_mm: f64,
    /// Every step converged (a false entry truncates the trace).
    pub converged: bool,
    pub folded: bool,
    /// Final tallest height above the mold, mm.
    pub apex_mm: f64,
    /// Outer-surface width of the final ridge, mm: the chain's x-extent
    /// at half the apex height plus one ply thickness, since the chain
    /// traces the midline of a ply one thickness deep (0 when the chain
    /// ends flat).
    pub width_mm: f64,
}

impl Wrinkle2DResult {
    /// Per-step chain coordinates as CSV (step, node, x_mm, z_mm).
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "node", "x_mm", "z_mm"])?;
        for state in &self.states {
            for (i, p) in state.nodes.iter().enumerate() {
                w.write_record(&[
                    state.step.to_string(),
                    i.to_string(),
                    format!("{:.6}", p[0]),
                    format!("{:.6}", p[1]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// One load step of the 2D chain as a constrained minimization, SI units.
#[derive(Clone)]
struct ChainProblem {
    /// Step-start configuration, m (pressure work reference).
    x_start: Vec<f64>,
    rest_m: Vec<f64>,
    /// Frozen nodal pressure force for this step, N per unit depth.
    force: Vec<[f64; 2]>,
    /// Gravity weight per node, N per unit depth.
    weight: Vec<f64>,
    fixed: Vec<bool>,
    kb: f64,
    /// Mold height and slope at x (m in, m out).
    mold_m: MoldM,
    /// Non-fixed node indices carrying a contact constraint.
    contact: Vec<usize>,
    /// Self-contact clearance, m: the chain is the midline of a ply of
    /// this thickness, so two of its walls pressed together can close no
    /// further than one thickness. Zero disables self-contact.
    self_clearance: f64,
    /// One-sided quadratic penalty stiffness for self-contact, N/m per
    /// unit depth.
    self_stiffness: f64,
    /// Node pairs closer along the chain than this many segments never
    /// register self-contact (they are nearer than the clearance at rest).
    self_exclusion: usize,
    /// Reusable x-interval bins for the self-contact broad phase.
    scratch: std::cell::RefCell<ContactBins>,
}

/// Segment indices binned by midpoint x interval, rebuilt per evaluation.
/// Clamping the bin count merges only the far-end bins, which keeps the
/// ±1-bin neighborhood a superset of every pair within one cell width.
#[derive(Clone, Default)]
struct ContactBins {
    bins: Vec<Vec<u32>>,
    active: usize,
    x_min: f64,
    inv_cell: f64,
}

impl ContactBins {
    fn rebuild(&mut self, x: &[f64], n_segments: usize, cell: f64) {
        let n = x.len() / 2;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            lo = lo.min(x[2 * i]);
            hi = hi.max(x[2 * i]);
        }
        self.active = (((hi - lo) / cell).ceil() as usize + 1).clamp(1, 4 * n.max(1));
        if self.bins.len() < self.active {
            self.bins.resize_with(self.active, Vec::new);
        }
        for b in &mut self.bins[..self.active] {
            b.clear();
        }
        self.x_min = lo;
        self.inv_cell = 1.0 / cell;
        for j in 0..n_segments {
            let mid = 0.5 * (x[2 * j] + x[2 * (j + 1)]);
            let b = self.bin_of(mid);
            self.bins[b].push(j as u32);
        }
    }

    fn bin_of(&self, x: f64) -> usize {
        (((x - self.x_min) * self.inv_cell).max(0.0) as usize).min(self.active - 1)
    }
}

#[derive(Clone)]
struct MoldM(MoldProfile2D);

impl MoldM {
    fn height_and_slope(&self, x_m: f64) -> (f64, f64) {
        let (z_mm, slope) = self.0.height_and_slope(x_m * 1e3);
        (z_mm * 1e-3, slope)
    }
}

/// theta / sin(theta) with a series fallback near zero.
fn theta_over_sin(theta: f64, sin: f64) -> f64 {
    if theta < 1e-4 {
        let t2 = theta * theta;
        1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    } else {
        theta / sin
    }
}

impl ChainProblem {
    fn n_nodes(&self) -> usize {
        self.weight.len()
    }
}

impl ConstrainedProblem for ChainProblem {
    fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    fn objective(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let n = self.n_nodes();
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            g.fill(0.0);
        }
        let p = |i: usize| [x[2 * i], x[2 * i + 1]];
        let mut total = 0.0;

        // Bending at interior nodes: U = 1/2 kb theta^2 with theta the
        // turning angle between consecutive segments.
        for i in 1..n - 1 {
            let a = p(i - 1);
            let m = p(i);
            let b = p(i + 1);
            let u = [m[0] - a[0], m[1] - a[1]];
            let v = [b[0] - m[0], b[1] - m[1]];
            let lu = (u[0] * u[0] + u[1] * u[1]).sqrt();
            let lv = (v[0] * v[0] + v[1] * v[1]).sqrt();
            if lu <= 0.0 || lv <= 0.0 {
                continue;
            }
            let mut c = (u[0] * v[0] + u[1] * v[1]) / (lu * lv);
            c = c.clamp(-1.0 + 1e-12, 1.0);
            let theta = c.acos();
            total += 0.5 * self.kb * theta * theta;
            if let Some(g) = g.as_deref_mut() {
                let du_dc = -self.kb * theta_over_sin(theta, theta.sin());
                let inv = 1.0 / (lu * lv);
                let dc_du = [
                    v[0] * inv - c * u[0] / (lu * lu),
                    v[1] * inv - c * u[1] / (lu * lu),
                ];
                let dc_dv = [
                    u[0] * inv - c * v[0] / (lv * lv),
                    u[1] * inv - c * v[1] / (lv * lv),
                ];
                // a gets -dc_du, b gets dc_dv, the middle the difference.
                g[2 * (i - 1)] += du_dc * -dc_du[0];
                g[2 * (i - 1) + 1] += du_dc * -dc_du[1];
                g[2 * i] += du_dc * (dc_du[0] - dc_dv[0]);
                g[2 * i + 1] += du_dc * (dc_du[1] - dc_dv[1]);
                g[2 * (i + 1)] += du_dc * dc_dv[0];
                g[2 * (i + 1) + 1] += du_dc * dc_dv[1];
            }
        }

        // Gravity: weight descends, potential w * (z - z_start).
        for i in 0..n {
            total += self.weight[i] * (x[2 * i + 1] - self.x_start[2 * i + 1]);
            if let Some(g) = g.as_deref_mut() {
                g[2 * i + 1] += self.weight[i];
            }
        }

        // Pressure work with forces frozen at the step start:
        // potential -F . (p - p_start).
        for i in 0..n {
            let f = self.force[i];
            total -= f[0] * (x[2 * i] - self.x_start[2 * i])
                + f[1] * (x[2 * i + 1] - self.x_start[2 * i + 1]);
            if let Some(g) = g.as_deref_mut() {
                g[2 * i] -= f[0];
                g[2 * i + 1] -= f[1];
            }
        }

        // Self-contact: the chain is the midline of a ply one clearance
        // deep, so the two walls of a fold pressed together stop one
        // clearance apart instead of passing through each other. One-sided
        // quadratic penalty on node-to-segment distance; the closest-point
        // parameter is held fixed for the gradient (envelope theorem).
        if self.self_clearance > 0.0 {
            let n_seg = self.rest_m.len();
            let max_rest = self.rest_m.iter().fold(0.0f64, |m, &l| m.max(l));
            let cell = self.self_clearance + max_rest;
            let mut bins = self.scratch.borrow_mut();
            bins.rebuild(x, n_seg, cell);
            let r2 = self.self_clearance * self.self_clearance;
            for i in 0..n {
                let p = [x[2 * i], x[2 * i + 1]];
                let b = bins.bin_of(p[0]);
                let lo = b.saturating_sub(1);
                let hi = (b + 1).min(bins.active - 1);
                for bb in lo..=hi {
                    for &js in &bins.bins[bb] {
                        let j = js as usize;
                        let to_j = i.abs_diff(j);
                        let to_j1 = i.abs_diff(j + 1);
                        if to_j.min(to_j1) <= self.self_exclusion {
                            continue;
                        }
                        let a = [x[2 * j], x[2 * j + 1]];
                        let bq = [x[2 * (j + 1)], x[2 * (j + 1) + 1]];
                        let ex = bq[0] - a[0];
                        let ez = bq[1] - a[1];
                        let px = p[0] - a[0];
                        let pz = p[1] - a[1];
                        let ee = ex * ex + ez * ez;
                        let t = if ee > 0.0 {
                            ((px * ex + pz * ez) / ee).clamp(0.0, 1.0)
                        } else {
                            0.0
                        };
                        let cx = px - t * ex;
                        let cz = pz - t * ez;
                        let d2 = cx * cx + cz * cz;
                        if d2 >= r2 {
                            continue;
                        }
                        let d = d2.sqrt().max(1e-12);
                        let gap = self.self_clearance - d;
                        total += 0.5 * self.self_stiffness * gap * gap;
                        if let Some(g) = g.as_deref_mut() {
                            let f = -self.self_stiffness * gap / d;
                            let gx = f * cx;
                            let gz = f * cz;
                            g[2 * i] += gx;
                            g[2 * i + 1] += gz;
                            g[2 * j] -= (1.0 - t) * gx;
                            g[2 * j + 1] -= (1.0 - t) * gz;
                            g[2 * (j + 1)] -= t * gx;
                            g[2 * (j + 1) + 1] -= t * gz;
                        }
                    }
                }
            }
        }

        if let Some(g) = g.as_deref_mut() {
            self.project_gradient(g);
        }
        total
    }

    fn eq_count(&self) -> usize {
        self.rest_m.len()
    }

    /// Segment stretch len - rest, meters. Absolute (not relative) keeps
    /// the jacobian O(1) so the float-noise floor of the augmented
    /// Lagrangian gradient stays far below the stationarity tolerance even
    /// for very short segments.
    fn eq_residuals(&self, x: &[f64], out: &mut [f64]) {
        for (j, rest) in self.rest_m.iter().enumerate() {
            let dx = x[2 * (j + 1)] - x[2 * j];
            let dz = x[2 * (j + 1) + 1] - x[2 * j + 1];
            out[j] = (dx * dx + dz * dz).sqrt() - rest;
        }
    }

    fn add_eq_jacobian(&self, x: &[f64], w: &[f64], grad: &mut [f64]) {
        for j in 0..self.rest_m.len() {
            if w[j] == 0.0 {
                continue;
            }
            let dx = x[2 * (j + 1)] - x[2 * j];
            let dz = x[2 * (j + 1) + 1] - x[2 * j + 1];
            let len = (dx * dx + dz * dz).sqrt().max(1e-30);
            let s = w[j] / len;
            grad[2 * j] -= s * dx;
            grad[2 * j + 1] -= s * dz;
            grad[2 * (j + 1)] += s * dx;
            grad[2 * (j + 1) + 1] += s * dz;
        }
    }

    fn ineq_count(&self) -> usize {
        self.contact.len()
    }

    /// Mold clearance: f(x) - z <= 0, meters.
    fn ineq_residuals(&self, x: &[f64], out: &mut [f64]) {
        for (k, &i) in self.contact.iter().enumerate() {
            let (h, _) = self.mold_m.height_and_slope(x[2 * i]);
            out[k] = h - x[2 * i + 1];
        }
    }

    fn add_ineq_jacobian(&self, x: &[f64], w: &[f64], grad: &mut [f64]) {
        for (k, &i) in self.contact.iter().enumerate() {
            if w[k] == 0.0 {
                continue;
            }
            let (_, slope) = self.mold_m.height_and_slope(x[2 * i]);
            grad[2 * i] += w[k] * slope;
            grad[2 * i + 1] -= w[k];
        }
    }

    fn project_gradient(&self, grad: &mut [f64]) {
        for (i, &fixed) in self.fixed.iter().enumerate() {
            if fixed {
                grad[2 * i] = 0.0;
                grad[2 * i + 1] = 0.0;
            }
        }
    }
}

fn chain_length_mm(nodes: &[[f64; 2]]) -> f64 {
    nodes
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

fn max_stretch_rel(nodes: &[[f64; 2]], rest_mm: &[f64]) -> f64 {
    nodes
        .windows(2)
        .zip(rest_mm)
        .map(|(w, &rest)| {
            let len = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            ((len - rest) / rest).abs()
        })
        .fold(0.0, f64::max)
}

fn apex_mm(nodes: &[[f64; 2]], mold: &MoldProfile2D) -> f64 {
    nodes
        .iter()
        .map(|p| p[1] - mold.height(p[0]))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn is_folded(nodes: &[[f64; 2]]) -> bool {
    nodes.windows(2).any(|w| w[1][0] - w[0][0] <= 0.0)
}

/// Midline width of the final bump at half its apex height: x-extent of
/// the contiguous run of chain around the apex lying above apex/2. The
/// chain is the midline of a ply one thickness deep, so the visible
/// outer-surface ridge is one thickness wider than this.
fn half_height_width_mm(nodes: &[[f64; 2]], mold: &MoldProfile2D, apex: f64) -> f64 {
    if apex <= 0.0 {
        return 0.0;
    }
    let h: Vec<f64> = nodes.iter().map(|p| p[1] - mold.height(p[0])).collect();
    let i_apex = h
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let half = apex / 2.0;
    // Walk outwards to the half-height crossings and interpolate x.
    let mut left = nodes[i_apex][0];
    for i in (1..=i_apex).rev() {
        if h[i - 1] <= half {
            let f = (half - h[i - 1]) / (h[i] - h[i - 1]).max(1e-30);
            left = nodes[i - 1][0] + f * (nodes[i][0] - nodes[i - 1][0]);
            break;
        }
        left = nodes[i - 1][0];
    }
    let mut right = nodes[i_apex][0];
    for i in i_apex..nodes.len() - 1 {
        if h[i + 1] <= half {
            let f = (half - h[i + 1]) / (h[i] - h[i + 1]).max(1e-30);
            right = nodes[i + 1][0] + f * (nodes[i][0] - nodes[i + 1][0]);
            break;
        }
        right = nodes[i + 1][0];
    }
    (right - left).abs()
}

/// Load-stepped 2D debulk with chain-scaled solver settings.
pub fn simulate_2d(ply: &Ply2D, mat: &MaterialParams, steps: usize) -> Result<Wrinkle2DResult> {
    let cfg = SolverConfig {
        // Tight enough that even the worst-case signed sum of hundreds of
        // per-segment slack errors stays under 1e-6 of the chain length.
        constraint_tol: 5e-11,
        ..SolverConfig::default()
    };
    simulate_2d_with(ply, mat, steps, &cfg)
}

/// Load-stepped 2D debulk: at each step s of `steps`, pressure s·P/steps
/// acts along the current inward segment normals (frozen per step, split
/// half to each endpoint), and bending + gravity − pressure work is
/// minimized subject to segment inextensibility and non-penetration.
///
/// The chain additionally repels itself within one ply thickness
/// (penalty springs on node-to-segment distance): the squeeze on the two
/// walls of a forming fold otherwise gains work without bound as they
/// pass through each other, and the simulated ridge collapses to roughly
/// half its physical height. Pressed walls stopping one thickness apart
/// is what arrests a real fold, and is the same idealization the
/// geometric ridge post-processor is built on.
pub fn simulate_2d_with(
    ply: &Ply2D,
    mat: &MaterialParams,
    steps: usize,
    cfg: &SolverConfig,
) -> Result<Wrinkle2DResult> {
    if steps < 1 {
        return Err(Error::InvalidArgument("need at least one load step".into()));
    }
    ply.validate()?;
    mat.validate()?;
    cfg.validate()?;
    // Unless the caller pins one, cap inner steps at half the shortest
    // segment: the bending barrier between a standing wrinkle and a
    // collapsed fold is about one segment wide, and an unbounded line
    // search tunnels through it instead of settling on the near side.
    let mut cfg = cfg.clone();
    if cfg.max_step.is_none() {
        let min_rest = ply
            .rest_lengths
            .iter()
            .fold(f64::INFINITY, |m, &l| m.min(l));
        cfg.max_step = Some(min_rest * 1e-3 / 2.0);
    }
    let cfg = &cfg;

    let n = ply.nodes.len();
    let mut fixed = vec![false; n];
    fixed[0] = ply.ends[0] == EndCondition::Fixed;
    fixed[n - 1] = ply.ends[1] == EndCondition::Fixed;
    let contact: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    let rest_m: Vec<f64> = ply.rest_lengths.iter().map(|l| l * 1e-3).collect();
    let kb = mat.bend_stiffness();
    // Self-contact scales: the chain is the ply midline, so fold walls
    // stop one thickness apart. Pairs nearer along the chain than
    // 1.2 clearances of arc are never in contact (a straight chain keeps
    // them farther apart than the clearance; the tightest physical cap,
    // radius t/2, keeps its across-pairs just beyond the window). The
    // penalty stiffness holds penetration near 1% of the clearance under
    // the full nodal pressure load.
    let min_rest_m = rest_m.iter().fold(f64::INFINITY, |m, &l| m.min(l));
    let mean_rest_m = rest_m.iter().sum::<f64>() / rest_m.len() as f64;
    let self_clearance = mat.thickness;
    let self_exclusion = ((1.2 * self_clearance / min_rest_m).ceil() as usize).max(1);
    let self_stiffness = (100.0 * mat.pressure * mean_rest_m / self_clearance).max(1e6);
    // Per-node weight: half of each adjacent segment's mass, unit depth.
    let weight: Vec<f64> = (0..n)
        .map(|i| {
            let mut l = 0.0;
            if i > 0 {
                l += rest_m[i - 1] / 2.0;
            }
            if i < n - 1 {
                l += rest_m[i] / 2.0;
            }
            mat.density * mat.thickness * l * mat.gravity
        })
        .collect();
    let mold_m = MoldM(ply.mold.clone());

    let mut x: Vec<f64> = ply
        .nodes
        .iter()
        .flat_map(|p| [p[0] * 1e-3, p[1] * 1e-3])
        .collect();

    let to_nodes = |x: &[f64]| -> Vec<[f64; 2]> {
        x.chunks_exact(2).map(|c| [c[0] * 1e3, c[1] * 1e3]).collect()
    };
    let initial_nodes = to_nodes(&x);
    let mut states = vec![ChainState {
        step: 0,
        pressure_pa: 0.0,
        length_mm: chain_length_mm(&initial_nodes),
        apex_mm: apex_mm(&initial_nodes, &ply.mold),
        folded: is_folded(&initial_nodes),
        converged: true,
        objective: 0.0,
        start_objective: 0.0,
        max_eq_residual_rel: 0.0,
        max_penetration_m: 0.0,
        inner_iterations: 0,
        function_evaluations: 0,
        nodes: initial_nodes,
    }];
    let mut all_converged = true;
    let mut folded = states[0].folded;

    for step in 1..=steps {
        let pressure = mat.pressure * step as f64 / steps as f64;
        // Freeze pressure forces from the step-start geometry: each
        // segment pushes p·len along its inward normal, half per endpoint.
        let mut force = vec![[0.0f64; 2]; n];
        for j in 0..n - 1 {
            let dx = x[2 * (j + 1)] - x[2 * j];
            let dz = x[2 * (j + 1) + 1] - x[2 * j + 1];
            let len = (dx * dx + dz * dz).sqrt();
            if len <= 0.0 {
                continue;
            }
            // Inward normal for a left-to-right chain with the bag above:
            // rotate the segment direction -90 degrees.
            let nx = dz / len;
            let nz = -dx / len;
            let f = pressure * len / 2.0;
            force[j][0] += f * nx;
            force[j][1] += f * nz;
            force[j + 1][0] += f * nx;
            force[j + 1][1] += f * nz;
        }
        let problem = ChainProblem {
            x_start: x.clone(),
            rest_m: rest_m.clone(),
            force,
            weight: weight.clone(),
            fixed: fixed.clone(),
            kb,
            mold_m: mold_m.clone(),
            contact: contact.clone(),
            self_clearance,
            self_stiffness,
            self_exclusion,
            scratch: std::cell::RefCell::new(ContactBins::default()),
        };
        let start_objective = problem.objective(&x, None);
        let outcome = minimize_constrained(&problem, x.clone(), cfg, None);
        x = outcome.x;
        let nodes = to_nodes(&x);
        folded |= is_folded(&nodes);
        all_converged &= outcome.converged;
        states.push(ChainState {
            step,
            pressure_pa: pressure,
            length_mm: chain_length_mm(&nodes),
            apex_mm: apex_mm(&nodes, &ply.mold),
            folded: is_folded(&nodes),
            converged: outcome.converged,
            objective: outcome.objective,
            start_objective,
            max_eq_residual_rel: max_stretch_rel(&nodes, &ply.rest_lengths),
            max_penetration_m: outcome.max_ineq_violation,
            inner_iterations: outcome.inner_iterations,
            function_evaluations: outcome.function_evaluations,
            nodes,
        });
        if !outcome.converged {
            // Partial trace: stop loading a chain the solver lost.
            break;
        }
    }

    let last = states.last().unwrap();
    let apex = last.apex_mm;
    let mut width = half_height_width_mm(&last.nodes, &ply.mold, apex);
    if width > 0.0 {
        // Midline extent to visible outer-surface ridge width.
        width += mat.thickness_mm();
    }
    Ok(Wrinkle2DResult {
        rest_length_mm: ply.total_rest_length(),
        converged: all_converged,
        folded,
        apex_mm: apex,
        width_mm: width,
        states,
    })
}
