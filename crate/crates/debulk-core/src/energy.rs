//! Discrete potential energy of a pin-jointed fiber net under vacuum
//! debulk: fiber bending at nodes, in-plane shear at quadrant corners,
//! gravity and vacuum work released on descent, and smoothed Coulomb
//! friction on free boundary nodes sliding over the mold.
//!
//! Everything here runs in SI units (meters, Newtons, Joules); net geometry
//! arrives in millimeters and is converted once at model build time.

use serde::{Deserialize, Serialize};

use crate::meshing::{NodeClass, PlyNet, F1_NEG, F1_POS, F2_NEG, F2_POS};

/// Ply and process parameters, SI units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialParams {
    /// Fiber-direction Young's modulus, Pa.
    pub youngs_modulus: f64,
    /// In-plane shear modulus, Pa.
    pub shear_modulus: f64,
    /// Ply thickness, m.
    pub thickness: f64,
    /// Ply density, kg/m^3.
    pub density: f64,
    /// Ply-mold Coulomb friction coefficient.
    pub friction: f64,
    /// Bulk factor: uncompacted over consolidated thickness (>= 1).
    pub bulk_factor: f64,
    /// Debulk vacuum pressure, Pa.
    pub pressure: f64,
    /// Gravitational acceleration, m/s^2.
    pub gravity: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            youngs_modulus: 3.6e8,
            shear_modulus: 4.0e7,
            thickness: 3.0e-4,
            density: 1048.0,
            friction: 0.4,
            bulk_factor: 1.2,
            pressure: 1.0e5,
            gravity: 9.81,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> crate::Result<()> {
        let positive = [
            self.youngs_modulus,
            self.shear_modulus,
            self.thickness,
            self.density,
            self.gravity,
        ];
        // Zero pressure is a legitimate load case (gravity-only sag).
        if positive.iter().any(|&v| !(v > 0.0))
            || self.friction < 0.0
            || self.pressure < 0.0
        {
            return Err(crate::Error::InvalidArgument(
                "material parameters must be positive (friction and pressure >= 0)".into(),
            ));
        }
        if !(self.bulk_factor >= 1.0) {
            return Err(crate::Error::InvalidArgument(
                "bulk factor must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Nodal bending stiffness k_b = E t^3 / 12, J/rad^2.
    pub fn bend_stiffness(&self) -> f64 {
        self.youngs_modulus * self.thickness.powi(3) / 12.0
    }

    /// Corner shear stiffness k_s = G (delta/2)^2 t for node spacing
    /// `delta_m` (meters), J/rad^2.
    pub fn shear_stiffness(&self, delta_m: f64) -> f64 {
        self.shear_modulus * (delta_m / 2.0).powi(2) * self.thickness
    }

    /// Ply thickness in millimeters (the unit used by nets and reports).
    pub fn thickness_mm(&self) -> f64 {
        self.thickness * 1e3
    }
}

/// Energy bookkeeping for one configuration. Work terms (`gravity`,
/// `vacuum`) are positive when the net has descended from its initial
/// shape; `total` is the potential being minimized:
/// bend + shear - gravity - vacuum + friction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub bend: f64,
    pub shear: f64,
    pub gravity: f64,
    pub vacuum: f64,
    pub friction: f64,
    pub total: f64,
}

/// Horizontal-slip smoothing width for the friction term, meters.
pub const FRICTION_SMOOTHING_M: f64 = 1e-6;

const QUADRANTS: [[usize; 2]; 4] = [
    [F1_POS, F2_POS],
    [F2_POS, F1_NEG],
    [F1_NEG, F2_NEG],
    [F2_NEG, F1_POS],
];

/// Potential-energy evaluator for one net. Degrees of freedom are the
/// flattened node coordinates in meters, `[x0, y0, z0, x1, ...]`.
#[derive(Clone, Debug)]
pub struct EnergyModel {
    /// Bending stiffness per node and fiber family, J/rad^2.
    pub kb: f64,
    /// Shear stiffness per quadrant corner, J/rad^2.
    pub ks: f64,
    /// Per-node gravity load, N (down).
    pub w_grav: f64,
    /// Per-node vacuum load, N (down).
    pub w_vac: f64,
    /// Per-node friction force scale on free boundary nodes, N.
    pub w_fric: f64,
    /// Initial dof vector, meters.
    pub x0: Vec<f64>,
    neighbors: Vec<[i32; 4]>,
    fixed: Vec<bool>,
    sliding: Vec<bool>,
    eps: f64,
}

impl EnergyModel {
    pub fn new(net: &PlyNet, params: &MaterialParams) -> EnergyModel {
        let n = net.len() as f64;
        let area = net.patch_area_m2;
        let delta_m = net.delta * 1e-3;
        let w_vac = params.pressure * area / n;
        EnergyModel {
            kb: params.bend_stiffness(),
            ks: params.shear_stiffness(delta_m),
            w_grav: area * params.thickness * params.density * params.gravity / n,
            w_vac,
            w_fric: params.friction * w_vac,
            x0: net
                .nodes
                .iter()
                .flat_map(|p| p.iter().map(|v| v * 1e-3))
                .collect(),
            neighbors: net.neighbors.clone(),
            fixed: net
                .class
                .iter()
                .map(|&c| c == NodeClass::FixedBoundary)
                .collect(),
            sliding: net
                .class
                .iter()
                .map(|&c| c == NodeClass::FreeBoundary)
                .collect(),
            eps: FRICTION_SMOOTHING_M,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.fixed.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.x0.len()
    }

    pub fn is_node_fixed(&self, i: usize) -> bool {
        self.fixed[i]
    }

    /// Zeroes gradient entries of clamped nodes so they never move.
    pub fn project_fixed(&self, grad: &mut [f64]) {
        for (i, &fix) in self.fixed.iter().enumerate() {
            if fix {
                grad[3 * i] = 0.0;
                grad[3 * i + 1] = 0.0;
                grad[3 * i + 2] = 0.0;
            }
        }
    }

    /// Total potential, gradient written into `grad` (fixed dofs zeroed).
    pub fn energy_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let total = self.accumulate(x, Some(grad)).total;
        self.project_fixed(grad);
        total
    }

    /// Per-term energy breakdown at `x`.
    pub fn terms(&self, x: &[f64]) -> EnergyTerms {
        self.accumulate(x, None)
    }

    /// Breakdown with the raw gradient accumulated into `grad` (no fixed-dof
    /// projection; callers adding constraint forces project afterwards).
    pub fn terms_and_grad(&self, x: &[f64], grad: Option<&mut [f64]>) -> EnergyTerms {
        self.accumulate(x, grad)
    }

    fn accumulate(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> EnergyTerms {
        let p = |i: usize| -> [f64; 3] { [x[3 * i], x[3 * i + 1], x[3 * i + 2]] };
        let mut t = EnergyTerms::default();

        for i in 0..self.n_nodes() {
            let nb = self.neighbors[i];
            let pi = p(i);

            // Fiber bending: one angle per family with both neighbors.
            for (slot_prev, slot_next) in [(F1_NEG, F1_POS), (F2_NEG, F2_POS)] {
                let (a, b) = (nb[slot_prev], nb[slot_next]);
                if a < 0 || b < 0 {
                    continue;
                }
                let (a, b) = (a as usize, b as usize);
                let (e, dc_da, dc_dp, dc_db) = angle_energy(p(a), pi, p(b), self.kb);
                t.bend += e.0;
                if let Some(g) = grad.as_deref_mut() {
                    add3(g, a, scale(dc_da, e.1));
                    add3(g, i, scale(dc_dp, e.1));
                    add3(g, b, scale(dc_db, e.1));
                }
            }

            // In-plane shear: one angle per quadrant corner present.
            for [s1, s2] in QUADRANTS {
                let (q1, q2) = (nb[s1], nb[s2]);
                if q1 < 0 || q2 < 0 {
                    continue;
                }
                let (q1, q2) = (q1 as usize, q2 as usize);
                let (e, dc_dq1, dc_dp, dc_dq2) =
                    corner_energy(p(q1), pi, p(q2), self.ks);
                t.shear += e.0;
                if let Some(g) = grad.as_deref_mut() {
                    add3(g, q1, scale(dc_dq1, e.1));
                    add3(g, i, scale(dc_dp, e.1));
                    add3(g, q2, scale(dc_dq2, e.1));
                }
            }

            // Gravity and vacuum work released on descent.
            let dz_down = self.x0[3 * i + 2] - x[3 * i + 2];
            t.gravity += self.w_grav * dz_down;
            t.vacuum += self.w_vac * dz_down;
            if let Some(g) = grad.as_deref_mut() {
                g[3 * i + 2] += self.w_grav + self.w_vac;
            }

            // Friction against the mold on sliding (free boundary) nodes,
            // smoothed so the dissipation has a gradient at zero slip.
            if self.sliding[i] {
                let dx = x[3 * i] - self.x0[3 * i];
                let dy = x[3 * i + 1] - self.x0[3 * i + 1];
                let r = (dx * dx + dy * dy + self.eps * self.eps).sqrt();
                t.friction += self.w_fric * (r - self.eps);
                if let Some(g) = grad.as_deref_mut() {
                    g[3 * i] += self.w_fric * dx / r;
                    g[3 * i + 1] += self.w_fric * dy / r;
                }
            }
        }

        t.total = t.bend + t.shear - t.gravity - t.vacuum + t.friction;
        t
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(v: [f64; 3], s: f64) -> [f64; 3] {
    [v[0] * s, v[1] * s, v[2] * s]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(v: [f64; 3]) -> f64 {
    dot(v, v).sqrt()
}

fn add3(g: &mut [f64], i: usize, v: [f64; 3]) {
    g[3 * i] += v[0];
    g[3 * i + 1] += v[1];
    g[3 * i + 2] += v[2];
}

/// theta / sin(theta), stable through theta = 0.
fn theta_over_sin(theta: f64, sin_theta: f64) -> f64 {
    if theta < 1e-4 {
        let t2 = theta * theta;
        1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    } else {
        theta / sin_theta
    }
}

/// Bending energy 1/2 k theta^2 of the kink at `p` between segments a->p
/// and p->b, with the chain-rule factors dU/d(node). Returns
/// ((energy, dU/dc), dc/da, dc/dp, dc/db) where c is the turning cosine.
#[allow(clippy::type_complexity)]
fn angle_energy(
    a: [f64; 3],
    p: [f64; 3],
    b: [f64; 3],
    k: f64,
) -> ((f64, f64), [f64; 3], [f64; 3], [f64; 3]) {
    let u = sub(p, a);
    let v = sub(b, p);
    let (lu, lv) = (norm(u), norm(v));
    if lu < 1e-15 || lv < 1e-15 {
        return ((0.0, 0.0), [0.0; 3], [0.0; 3], [0.0; 3]);
    }
    let uh = scale(u, 1.0 / lu);
    let vh = scale(v, 1.0 / lv);
    let c = dot(uh, vh).clamp(-1.0 + 1e-12, 1.0);
    let theta = c.acos();
    let energy = 0.5 * k * theta * theta;
    // dU/dc = -k theta / sin(theta).
    let du_dc = -k * theta_over_sin(theta, (1.0 - c * c).sqrt());
    // c = uh . vh with u = p - a, v = b - p.
    let dc_du = scale(sub(vh, scale(uh, c)), 1.0 / lu);
    let dc_dv = scale(sub(uh, scale(vh, c)), 1.0 / lv);
    (
        (energy, du_dc),
        scale(dc_du, -1.0),
        sub(dc_du, dc_dv),
        dc_dv,
    )
}

/// Shear energy 1/2 k (pi/2 - phi)^2 of the corner at `p` spanned by edges
/// p->q1 and p->q2. Returns ((energy, dU/dc), dc/dq1, dc/dp, dc/dq2).
#[allow(clippy::type_complexity)]
fn corner_energy(
    q1: [f64; 3],
    p: [f64; 3],
    q2: [f64; 3],
    k: f64,
) -> ((f64, f64), [f64; 3], [f64; 3], [f64; 3]) {
    let e1 = sub(q1, p);
    let e2 = sub(q2, p);
    let (l1, l2) = (norm(e1), norm(e2));
    if l1 < 1e-15 || l2 < 1e-15 {
        return ((0.0, 0.0), [0.0; 3], [0.0; 3], [0.0; 3]);
    }
    let h1 = scale(e1, 1.0 / l1);
    let h2 = scale(e2, 1.0 / l2);
    let c = dot(h1, h2).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    let phi = c.acos();
    let gamma = std::f64::consts::FRAC_PI_2 - phi;
    let energy = 0.5 * k * gamma * gamma;
    // dU/dphi = -k gamma; dphi/dc = -1/sin(phi).
    let du_dc = k * gamma / (1.0 - c * c).sqrt();
    let dc_de1 = scale(sub(h2, scale(h1, c)), 1.0 / l1);
    let dc_de2 = scale(sub(h1, scale(h2, c)), 1.0 / l2);
    (
        (energy, du_dc),
        dc_de1,
        scale(add(dc_de1, dc_de2), -1.0),
        dc_de2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Hand-built nx x ny flat lattice net, spacing mm, all interior
    /// except a configurable class map.
    fn lattice_net(nx: i32, ny: i32, delta: f64, area_m2: f64) -> PlyNet {
        let mut nodes = Vec::new();
        let mut lattice = Vec::new();
        let mut keys = std::collections::HashMap::new();
        for i in 0..nx {
            for j in 0..ny {
                keys.insert((i, j), nodes.len());
                nodes.push([i as f64 * delta, j as f64 * delta, 0.0]);
                lattice.push([i, j]);
            }
        }
        let mut neighbors = vec![[-1i32; 4]; nodes.len()];
        for (&(i, j), &idx) in &keys {
            let mut link = |slot: usize, key: (i32, i32)| {
                if let Some(&other) = keys.get(&key) {
                    neighbors[idx][slot] = other as i32;
                }
            };
            link(F1_POS, (i + 1, j));
            link(F1_NEG, (i - 1, j));
            link(F2_POS, (i, j + 1));
            link(F2_NEG, (i, j - 1));
        }
        PlyNet {
            patch_id: 1,
            class: vec![NodeClass::Interior; nodes.len()],
            nodes,
            neighbors,
            lattice,
            delta,
            patch_area_m2: area_m2,
        }
    }

    /// Minimal 3-node chain along family 1 with a kink angle at the middle.
    fn kinked_chain(theta: f64, delta: f64) -> PlyNet {
        let a = [0.0, 0.0, 0.0];
        let p = [delta, 0.0, 0.0];
        let b = [delta + delta * theta.cos(), delta * theta.sin(), 0.0];
        PlyNet {
            patch_id: 1,
            nodes: vec![a, p, b],
            neighbors: vec![
                [1, -1, -1, -1],
                [2, 0, -1, -1],
                [-1, 1, -1, -1],
            ],
            class: vec![NodeClass::Interior; 3],
            lattice: vec![[0, 0], [1, 0], [2, 0]],
            delta,
            patch_area_m2: 0.0438,
        }
    }

    #[test]
    fn stiffness_constants_match_hand_values() {
        let m = MaterialParams::default();
        // E t^3 / 12 = 3.6e8 * (3e-4)^3 / 12 = 8.1e-4 J/rad^2.
        assert_relative_eq!(m.bend_stiffness(), 8.1e-4, epsilon = 1e-12);
        // G (delta/2)^2 t at delta = 10 mm: 4e7 * 2.5e-5 * 3e-4 = 0.3.
        assert_relative_eq!(m.shear_stiffness(0.01), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn bend_energy_matches_hand_value() {
        // One kink of 0.2 rad: U = 1/2 * 8.1e-4 * 0.04 = 1.62e-5 J.
        let net = kinked_chain(0.2, 10.0);
        let model = EnergyModel::new(&net, &MaterialParams::default());
        let t = model.terms(&model.x0);
        assert_relative_eq!(t.bend, 1.62e-5, max_relative = 1e-9);
        assert_eq!(t.shear, 0.0);
        assert_eq!(t.gravity, 0.0);
        assert_eq!(t.friction, 0.0);
    }

    #[test]
    fn shear_energy_matches_hand_value() {
        // Single corner at phi = 60 deg, delta = 10 mm:
        // U = 1/2 * 0.3 * (pi/6)^2 = 0.0411233673 J.
        let phi = std::f64::consts::FRAC_PI_3;
        let net = PlyNet {
            patch_id: 1,
            nodes: vec![
                [0.0, 0.0, 0.0],
                [10.0, 0.0, 0.0],
                [10.0 * phi.cos(), 10.0 * phi.sin(), 0.0],
            ],
            neighbors: vec![[1, -1, 2, -1], [-1, 0, -1, -1], [-1, -1, -1, 0]],
            class: vec![NodeClass::Interior; 3],
            lattice: vec![[0, 0], [1, 0], [0, 1]],
            delta: 10.0,
            patch_area_m2: 0.0438,
        };
        let model = EnergyModel::new(&net, &MaterialParams::default());
        let t = model.terms(&model.x0);
        let gamma = std::f64::consts::FRAC_PI_2 - phi;
        assert_relative_eq!(t.shear, 0.5 * 0.3 * gamma * gamma, max_relative = 1e-12);
        assert_relative_eq!(t.shear, 0.0411234, max_relative = 1e-5);
        assert_eq!(t.bend, 0.0);
    }

    #[test]
    fn descent_work_matches_hand_values() {
        // 100-node net over 0.0438 m^2: per-node vacuum load 43.8 N, so a
        // 1 mm drop of one node releases 4.38e-2 J; gravity likewise
        // releases A t rho g / N * 1 mm.
        let net = lattice_net(10, 10, 5.0, 0.0438);
        let m = MaterialParams::default();
        let model = EnergyModel::new(&net, &m);
        assert_relative_eq!(model.w_vac, 43.8, epsilon = 1e-9);
        let mut x = model.x0.clone();
        x[3 * 55 + 2] -= 1e-3;
        let t = model.terms(&x);
        assert_relative_eq!(t.vacuum, 4.38e-2, max_relative = 1e-12);
        let w_grav = 0.0438 * 3e-4 * 1048.0 * 9.81 / 100.0;
        assert_relative_eq!(t.gravity, w_grav * 1e-3, max_relative = 1e-12);
        assert_relative_eq!(t.gravity, 1.351e-6, max_relative = 1e-3);
        // Rising instead of dropping flips the sign (work done against it).
        x[3 * 55 + 2] += 2e-3;
        let t = model.terms(&x);
        assert_relative_eq!(t.vacuum, -4.38e-2, max_relative = 1e-12);
    }

    #[test]
    fn friction_matches_smoothed_slip() {
        let mut net = lattice_net(3, 3, 10.0, 0.0438);
        net.class[4] = NodeClass::FreeBoundary;
        let m = MaterialParams::default();
        let model = EnergyModel::new(&net, &m);
        // w_fric = mu P A / N = 0.4 * 1e5 * 0.0438 / 9.
        let w = 0.4 * 1e5 * 0.0438 / 9.0;
        assert_relative_eq!(model.w_fric, w, epsilon = 1e-9);
        let mut x = model.x0.clone();
        x[3 * 4] += 2e-3; // 2 mm slide
        let t = model.terms(&x);
        let slip = (4e-6f64 + 1e-12).sqrt() - 1e-6;
        assert_relative_eq!(t.friction, w * slip, max_relative = 1e-12);
        // Non-sliding nodes dissipate nothing.
        x[3 * 0] += 2e-3;
        assert_relative_eq!(model.terms(&x).friction, w * slip, max_relative = 1e-12);
    }

    #[test]
    fn flat_net_at_rest_has_zero_energy() {
        let net = lattice_net(6, 6, 8.0, 0.02);
        let model = EnergyModel::new(&net, &MaterialParams::default());
        let mut g = vec![0.0; model.n_dofs()];
        let e = model.energy_and_grad(&model.x0, &mut g);
        assert_eq!(e, 0.0);
        // Only the descent loads pull on a flat resting net.
        for i in 0..model.n_nodes() {
            assert_eq!(g[3 * i], 0.0);
            assert_eq!(g[3 * i + 1], 0.0);
            assert_relative_eq!(g[3 * i + 2], model.w_grav + model.w_vac);
        }
    }

    #[test]
    fn elastic_terms_are_translation_invariant() {
        let net = lattice_net(5, 5, 7.0, 0.01);
        let model = EnergyModel::new(&net, &MaterialParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut x = model.x0.clone();
        for v in x.iter_mut() {
            *v += rng.gen_range(-1e-3..1e-3);
        }
        let t0 = model.terms(&x);
        let mut shifted = x.clone();
        for i in 0..model.n_nodes() {
            shifted[3 * i] += 0.731;
            shifted[3 * i + 1] -= 0.214;
        }
        let t1 = model.terms(&shifted);
        assert_relative_eq!(t0.bend, t1.bend, max_relative = 1e-9);
        assert_relative_eq!(t0.shear, t1.shear, max_relative = 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut net = lattice_net(4, 4, 9.0, 0.015);
        // Mix of classes: clamp two corners, let an edge slide.
        net.class[0] = NodeClass::FixedBoundary;
        net.class[15] = NodeClass::FixedBoundary;
        net.class[3] = NodeClass::FreeBoundary;
        net.class[7] = NodeClass::FreeBoundary;
        let model = EnergyModel::new(&net, &MaterialParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut x = model.x0.clone();
        for v in x.iter_mut() {
            // Keep slips far from the friction smoothing scale.
            *v += rng.gen_range(2e-4..8e-4) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        }
        let mut g = vec![0.0; model.n_dofs()];
        let f0 = model.energy_and_grad(&x, &mut g);
        assert!(f0.is_finite());
        let h = 1e-7;
        for d in 0..model.n_dofs() {
            let node = d / 3;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[d] += h;
            xm[d] -= h;
            let fd = (model.terms(&xp).total - model.terms(&xm).total) / (2.0 * h);
            if model.is_node_fixed(node) {
                assert_eq!(g[d], 0.0, "fixed dof {d} must have zero gradient");
            } else {
                assert!(
                    (g[d] - fd).abs() <= 1e-6 * (1.0 + fd.abs().max(g[d].abs())),
                    "dof {d}: analytic {} vs fd {}",
                    g[d],
                    fd
                );
            }
        }
    }

    #[test]
    fn straight_chain_bend_gradient_is_finite_and_restoring() {
        // Near-straight chain: the guarded theta/sin(theta) region.
        let net = kinked_chain(1e-6, 10.0);
        let model = EnergyModel::new(&net, &MaterialParams::default());
        let mut g = vec![0.0; 9];
        let e = model.energy_and_grad(&model.x0, &mut g);
        assert!(e >= 0.0 && e < 1e-15);
        assert!(g.iter().all(|v| v.is_finite()));
        // Push the middle node sideways: energy must rise.
        let mut x = model.x0.clone();
        x[3 * 1 + 1] += 1e-4;
        assert!(model.terms(&x).bend > model.terms(&model.x0).bend);
    }
}
