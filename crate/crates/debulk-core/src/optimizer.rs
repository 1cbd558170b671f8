//! Constrained minimization of the net potential: a limited-memory BFGS
//! inner minimizer driven by an augmented-Lagrangian outer loop over fiber
//! inextensibility equalities and mold non-penetration inequalities.
//!
//! The machinery is generic over [`ConstrainedProblem`] so the planar chain
//! model reuses it; [`solve`] ties it to a [`PlyNet`] and a reference
//! surface. Solver degrees of freedom are in meters; net geometry converts
//! at the boundary.

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyModel, EnergyTerms, MaterialParams};
use crate::grid::BilinearSurface;
use crate::meshing::{NodeClass, PlyNet};

/// A smooth objective with equality constraints c(x) = 0 and inequality
/// constraints g(x) <= 0. Jacobians are exposed as weighted accumulations
/// (grad += sum_k w_k grad c_k) so problems never materialize full matrices.
pub trait ConstrainedProblem {
    fn n_dofs(&self) -> usize;
    /// Objective value; gradient overwritten into `grad` when given.
    fn objective(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64;

    fn eq_count(&self) -> usize;
    fn eq_residuals(&self, x: &[f64], out: &mut [f64]);
    fn add_eq_jacobian(&self, x: &[f64], w: &[f64], grad: &mut [f64]);

    fn ineq_count(&self) -> usize;
    fn ineq_residuals(&self, x: &[f64], out: &mut [f64]);
    fn add_ineq_jacobian(&self, x: &[f64], w: &[f64], grad: &mut [f64]);

    /// Zero gradient entries of clamped dofs (none by default).
    fn project_gradient(&self, _grad: &mut [f64]) {}
}

/// Solver knobs. Residual tolerances are in the constraint's own units
/// (meters for the net problem); stationarity in objective-gradient units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Maximum allowed |c| and max(g, 0) at the solution.
    pub constraint_tol: f64,
    /// Infinity-norm bound on the (projected) Lagrangian gradient.
    pub stationarity_tol: f64,
    /// Starting quadratic penalty. Kept stiff by default: a soft penalty
    /// lets a taut inextensible net fall straight through the constraint
    /// manifold into a spurious flattened minimum it cannot leave.
    pub penalty_initial: f64,
    pub penalty_growth: f64,
    pub penalty_cap: f64,
    /// Multiplier updates are accepted while the violation stays under an
    /// acceptance bar that tightens by this factor per accepted update;
    /// otherwise the penalty grows.
    pub violation_improvement: f64,
    /// Inner loop stops at max(stationarity_tol, rel * initial grad norm).
    pub inner_grad_rel: f64,
    pub lbfgs_memory: usize,
    /// Quasi-static external load ramp; 1 applies everything at once.
    pub load_steps: usize,
    /// Per-iteration cap on the inner step (metres, infinity norm). Thin
    /// bending barriers between folded and unfolded chain states are about
    /// one segment wide; an uncapped line search can tunnel straight
    /// through them, so quasi-static problems should cap steps near the
    /// segment length. `None` leaves steps uncapped.
    pub max_step: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer: 40,
            max_inner: 2000,
            constraint_tol: 1e-6,
            stationarity_tol: 1e-3,
            penalty_initial: 1e6,
            penalty_growth: 10.0,
            penalty_cap: 1e12,
            violation_improvement: 0.25,
            inner_grad_rel: 1e-3,
            lbfgs_memory: 10,
            load_steps: 1,
            max_step: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.constraint_tol > 0.0 && self.stationarity_tol > 0.0) {
            return Err(crate::Error::Solver(
                "tolerances must be positive".into(),
            ));
        }
        if self.load_steps == 0 || self.max_outer == 0 || self.max_inner == 0 {
            return Err(crate::Error::Solver(
                "iteration and load-step counts must be positive".into(),
            ));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(crate::Error::Solver(
                    "max_step must be positive when set".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One outer-iteration record for tracing and monotonicity checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub inner_iterations: usize,
    pub objective: f64,
    pub max_eq_residual: f64,
    pub max_ineq_violation: f64,
    pub penalty: f64,
    pub grad_inf: f64,
    /// Running minimum objective over feasible iterates, NaN until one is
    /// seen.
    pub best_feasible_objective: f64,
}

/// Outcome of a constrained minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub eq_multipliers: Vec<f64>,
    pub ineq_multipliers: Vec<f64>,
    pub penalty: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub function_evaluations: usize,
    pub max_eq_residual: f64,
    pub max_ineq_violation: f64,
    pub grad_inf: f64,
    pub converged: bool,
    pub outer_log: Vec<OuterRecord>,
}

struct LbfgsParams {
    memory: usize,
    max_iters: usize,
    gtol: f64,
    /// Infinity-norm bound on each accepted step (metres).
    max_step: f64,
}

struct LbfgsOutcome {
    x: Vec<f64>,
    grad: Vec<f64>,
    grad_inf: f64,
    iterations: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &a| m.max(a.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking. `eval` returns the value
/// and overwrites the gradient.
fn lbfgs<F: FnMut(&[f64], &mut [f64]) -> f64>(
    mut eval: F,
    x0: Vec<f64>,
    params: &LbfgsParams,
) -> LbfgsOutcome {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = eval(&x, &mut g);
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new(); // (s, y, 1/y.s)
    let mut stalls = 0usize;

    let mut iter = 0usize;
    while iter < params.max_iters {
        let g_inf = inf_norm(&g);
        if g_inf <= params.gtol {
            break;
        }

        // Two-loop recursion for d = -H g.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = vec![0.0; history.len()];
        for (k, (s, y, inv_ys)) in history.iter().enumerate().rev() {
            let a = inv_ys * dot(s, &d);
            alphas[k] = a;
            for i in 0..n {
                d[i] -= a * y[i];
            }
        }
        if let Some((s, y, _)) = history.last() {
            let gamma = dot(s, y) / dot(y, y).max(1e-300);
            for v in d.iter_mut() {
                *v *= gamma;
            }
        }
        for (k, (s, y, inv_ys)) in history.iter().enumerate() {
            let b = inv_ys * dot(y, &d);
            for i in 0..n {
                d[i] += (alphas[k] - b) * s[i];
            }
        }

        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // Curvature information went bad: restart from steepest descent.
            history.clear();
            for i in 0..n {
                d[i] = -g[i];
            }
            slope = dot(&g, &d);
            if slope >= 0.0 {
                break; // zero gradient on the free dofs
            }
        }

        // Backtracking line search on the Armijo condition. The trial step
        // is capped in displacement so descent cannot leap a narrow energy
        // barrier in a single move.
        let d_inf = inf_norm(&d).max(1e-300);
        let mut alpha = if history.is_empty() {
            (1.0 / d_inf).min(1.0)
        } else {
            1.0
        };
        alpha = alpha.min(params.max_step / d_inf);
        let mut x_new = vec![0.0; n];
        let mut g_new = vec![0.0; n];
        let mut f_new;
        let mut ok = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + alpha * d[i];
            }
            f_new = eval(&x_new, &mut g_new);
            if f_new <= f + 1e-4 * alpha * slope && f_new.is_finite() {
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                let ys = dot(&y, &s);
                if ys > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    if history.len() == params.memory {
                        history.remove(0);
                    }
                    history.push((s, y, 1.0 / ys));
                }
                // Stall detection on vanishing relative decrease.
                if (f - f_new).abs() <= 1e-15 * (1.0 + f.abs()) {
                    stalls += 1;
                } else {
                    stalls = 0;
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                f = f_new;
                ok = true;
                break;
            }
            alpha *= 0.5;
        }
        iter += 1;
        if !ok || stalls >= 2 {
            break;
        }
    }

    let grad_inf = inf_norm(&g);
    LbfgsOutcome {
        x,
        grad: g,
        grad_inf,
        iterations: iter,
    }
}

/// Augmented-Lagrangian minimization of a [`ConstrainedProblem`] from `x0`.
/// Per-outer records stream to `trace` as CSV when given. The returned
/// iterate is the best feasible one seen (falling back to the last).
pub fn minimize_constrained<P: ConstrainedProblem>(
    problem: &P,
    x0: Vec<f64>,
    cfg: &SolverConfig,
    mut trace: Option<&mut dyn std::io::Write>,
) -> ConstrainedOutcome {
    let n = problem.n_dofs();
    let m_eq = problem.eq_count();
    let m_in = problem.ineq_count();
    let mut lam = vec![0.0; m_eq];
    let mut mu = vec![0.0; m_in];
    let mut rho = cfg.penalty_initial;

    let mut c = vec![0.0; m_eq];
    let mut gv = vec![0.0; m_in];
    let violation = |c: &[f64], gv: &[f64]| -> (f64, f64) {
        (inf_norm(c), gv.iter().fold(0.0f64, |m, &v| m.max(v)))
    };

    let mut x = x0;
    let mut evals = 0usize;
    let mut inner_total = 0usize;

    // Seed best-feasible tracking with the start point.
    problem.eq_residuals(&x, &mut c);
    problem.ineq_residuals(&x, &mut gv);
    let (v_eq0, v_in0) = violation(&c, &gv);
    let mut best: Option<(f64, Vec<f64>)> = if v_eq0 <= cfg.constraint_tol
        && v_in0 <= cfg.constraint_tol
    {
        let pi = problem.objective(&x, None);
        evals += 1;
        Some((pi, x.clone()))
    } else {
        None
    };
    // Multiplier updates are accepted only when the violation clears this
    // bar, which tightens after every accepted update; otherwise the
    // penalty grows. Keeps wild early iterates from poisoning the
    // multipliers and keeps the penalty moderate once iterates settle.
    let mut accept = 1.0f64;

    let mut outer_log = Vec::new();
    let mut last_grad_inf = f64::INFINITY;
    let mut converged = false;
    let mut outer = 0usize;

    if let Some(w) = trace.as_deref_mut() {
        let _ = writeln!(
            w,
            "outer,inner_iters,objective,max_eq,max_ineq,penalty,grad_inf"
        );
    }

    while outer < cfg.max_outer {
        // Inner unconstrained minimization of the augmented Lagrangian.
        let mut scratch_c = vec![0.0; m_eq];
        let mut scratch_g = vec![0.0; m_in];
        let mut w_eq = vec![0.0; m_eq];
        let mut w_in = vec![0.0; m_in];
        let mut inner_evals = 0usize;
        let mut eval = |x: &[f64], grad: &mut [f64]| -> f64 {
            inner_evals += 1;
            let mut f = problem.objective(x, Some(grad));
            problem.eq_residuals(x, &mut scratch_c);
            problem.ineq_residuals(x, &mut scratch_g);
            for k in 0..m_eq {
                let ck = scratch_c[k];
                f += lam[k] * ck + 0.5 * rho * ck * ck;
                w_eq[k] = lam[k] + rho * ck;
            }
            for j in 0..m_in {
                let t = mu[j] + rho * scratch_g[j];
                // psi(g, mu, rho) = (max(0, mu + rho g)^2 - mu^2) / (2 rho)
                if t > 0.0 {
                    f += (t * t - mu[j] * mu[j]) / (2.0 * rho);
                    w_in[j] = t;
                } else {
                    f -= mu[j] * mu[j] / (2.0 * rho);
                    w_in[j] = 0.0;
                }
            }
            problem.add_eq_jacobian(x, &w_eq, grad);
            problem.add_ineq_jacobian(x, &w_in, grad);
            problem.project_gradient(grad);
            f
        };

        // Probe the starting gradient for the relative inner tolerance.
        let mut g0 = vec![0.0; n];
        let _ = eval(&x, &mut g0);
        let gtol = cfg
            .stationarity_tol
            .max(cfg.inner_grad_rel * inf_norm(&g0));
        let out = lbfgs(
            &mut eval,
            x,
            &LbfgsParams {
                memory: cfg.lbfgs_memory,
                max_iters: cfg.max_inner,
                gtol,
                max_step: cfg.max_step.unwrap_or(f64::INFINITY),
            },
        );
        drop(out.grad);
        x = out.x;
        evals += inner_evals;
        inner_total += out.iterations;
        last_grad_inf = out.grad_inf;

        problem.eq_residuals(&x, &mut c);
        problem.ineq_residuals(&x, &mut gv);
        let (v_eq, v_in) = violation(&c, &gv);
        let v = v_eq.max(v_in);
        let pi = problem.objective(&x, None);
        evals += 1;

        let feasible = v <= cfg.constraint_tol;
        if feasible && best.as_ref().map_or(true, |(b, _)| pi < *b) {
            best = Some((pi, x.clone()));
        }

        let record = OuterRecord {
            outer,
            inner_iterations: out.iterations,
            objective: pi,
            max_eq_residual: v_eq,
            max_ineq_violation: v_in,
            penalty: rho,
            grad_inf: out.grad_inf,
            best_feasible_objective: best.as_ref().map_or(f64::NAN, |(b, _)| *b),
        };
        if let Some(w) = trace.as_deref_mut() {
            let _ = writeln!(
                w,
                "{},{},{},{},{},{},{}",
                record.outer,
                record.inner_iterations,
                record.objective,
                record.max_eq_residual,
                record.max_ineq_violation,
                record.penalty,
                record.grad_inf
            );
        }
        outer_log.push(record);
        outer += 1;

        if v <= accept.max(cfg.constraint_tol) {
            // The iterate is trustworthy: first-order multiplier update,
            // bounded so a wild step cannot poison later ones, and a
            // tighter acceptance bar for the next one.
            for k in 0..m_eq {
                lam[k] = (lam[k] + rho * c[k]).clamp(-cfg.penalty_cap, cfg.penalty_cap);
            }
            for j in 0..m_in {
                mu[j] = (mu[j] + rho * gv[j]).clamp(0.0, cfg.penalty_cap);
            }
            accept *= cfg.violation_improvement;
            if feasible && out.grad_inf <= cfg.stationarity_tol {
                converged = true;
                break;
            }
        } else {
            // Off-schedule violation: more curvature, multipliers as-is.
            rho = (rho * cfg.penalty_growth).min(cfg.penalty_cap);
        }
    }

    // The answer is the best feasible iterate when one exists.
    if let Some((pi_best, x_best)) = &best {
        let pi_last = problem.objective(&x, None);
        evals += 1;
        problem.eq_residuals(&x, &mut c);
        problem.ineq_residuals(&x, &mut gv);
        let (v_eq, v_in) = violation(&c, &gv);
        let last_feasible = v_eq.max(v_in) <= cfg.constraint_tol;
        if !last_feasible || *pi_best < pi_last {
            x = x_best.clone();
        }
    }
    problem.eq_residuals(&x, &mut c);
    problem.ineq_residuals(&x, &mut gv);
    let (v_eq, v_in) = violation(&c, &gv);
    let objective = problem.objective(&x, None);
    evals += 1;

    ConstrainedOutcome {
        x,
        objective,
        eq_multipliers: lam,
        ineq_multipliers: mu,
        penalty: rho,
        outer_iterations: outer,
        inner_iterations: inner_total,
        function_evaluations: evals,
        max_eq_residual: v_eq,
        max_ineq_violation: v_in,
        grad_inf: last_grad_inf,
        converged: converged && v_eq.max(v_in) <= cfg.constraint_tol,
        outer_log,
    }
}

/// Net solve outcome. Node coordinates are back in millimeters; residuals
/// stay in meters (the solver's internal unit). Two results compare equal
/// when everything except the wall time matches, so identical inputs can be
/// checked for bit-identical numerics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveResult {
    pub patch_id: u32,
    pub nodes_mm: Vec<[f64; 3]>,
    pub energy: EnergyTerms,
    pub pi_initial: f64,
    pub pi_final: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub function_evaluations: usize,
    pub max_eq_residual_m: f64,
    pub max_penetration_m: f64,
    pub stationarity_norm: f64,
    pub converged: bool,
    /// The start point penetrated the mold and was lifted minimally in z.
    pub lifted_start: bool,
    pub load_steps: usize,
    pub wall_time_s: f64,
}

impl PartialEq for SolveResult {
    fn eq(&self, other: &Self) -> bool {
        self.patch_id == other.patch_id
            && self.nodes_mm == other.nodes_mm
            && self.energy == other.energy
            && self.pi_initial == other.pi_initial
            && self.pi_final == other.pi_final
            && self.outer_iterations == other.outer_iterations
            && self.inner_iterations == other.inner_iterations
            && self.function_evaluations == other.function_evaluations
            && self.max_eq_residual_m == other.max_eq_residual_m
            && self.max_penetration_m == other.max_penetration_m
            && self.stationarity_norm == other.stationarity_norm
            && self.converged == other.converged
            && self.lifted_start == other.lifted_start
            && self.load_steps == other.load_steps
    }
}

impl SolveResult {
    pub fn write_json(&self, path: &std::path::Path) -> crate::Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> crate::Result<SolveResult> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

/// The net problem: energy model objective, one inextensibility equality
/// per segment (skipping segments with both ends clamped), one
/// non-penetration inequality per movable node.
pub struct NetProblem<'a> {
    pub model: &'a EnergyModel,
    /// Mold surface in millimeters.
    pub reference: &'a BilinearSurface,
    /// Segment endpoints (movable-relevant edges only).
    pub edges: Vec<(u32, u32)>,
    /// Per-segment rest length, meters.
    pub rest_m: Vec<f64>,
    /// Nodes with a contact constraint (all non-clamped nodes).
    pub contact_nodes: Vec<u32>,
}

impl<'a> NetProblem<'a> {
    pub fn new(
        net: &PlyNet,
        model: &'a EnergyModel,
        reference: &'a BilinearSurface,
    ) -> NetProblem<'a> {
        let mut edges = Vec::new();
        let mut rest_m = Vec::new();
        for (i, j) in net.edges() {
            let fixed = net.class[i as usize] == NodeClass::FixedBoundary
                && net.class[j as usize] == NodeClass::FixedBoundary;
            if fixed {
                continue; // constant residual
            }
            let a = net.nodes[i as usize];
            let b = net.nodes[j as usize];
            let len_mm = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2))
                .sqrt();
            edges.push((i, j));
            rest_m.push(len_mm * 1e-3);
        }
        let contact_nodes = (0..net.len() as u32)
            .filter(|&i| net.class[i as usize] != NodeClass::FixedBoundary)
            .collect();
        NetProblem {
            model,
            reference,
            edges,
            rest_m,
            contact_nodes,
        }
    }
}

impl ConstrainedProblem for NetProblem<'_> {
    fn n_dofs(&self) -> usize {
        self.model.n_dofs()
    }

    fn objective(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        match grad {
            Some(g) => {
                g.fill(0.0);
                self.model.terms_and_grad(x, Some(g)).total
            }
            None => self.model.terms_and_grad(x, None).total,
        }
    }

    fn eq_count(&self) -> usize {
        self.edges.len()
    }

    fn eq_residuals(&self, x: &[f64], out: &mut [f64]) {
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            let (i, j) = (3 * i as usize, 3 * j as usize);
            let d = ((x[j] - x[i]).powi(2)
                + (x[j + 1] - x[i + 1]).powi(2)
                + (x[j + 2] - x[i + 2]).powi(2))
            .sqrt();
            out[k] = d - self.rest_m[k];
        }
    }

    fn add_eq_jacobian(&self, x: &[f64], w: &[f64], grad: &mut [f64]) {
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            if w[k] == 0.0 {
                continue;
            }
            let (i, j) = (3 * i as usize, 3 * j as usize);
            let e = [x[j] - x[i], x[j + 1] - x[i + 1], x[j + 2] - x[i + 2]];
            let d = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
            if d < 1e-15 {
                continue;
            }
            for a in 0..3 {
                let v = w[k] * e[a] / d;
                grad[j + a] += v;
                grad[i + a] -= v;
            }
        }
    }

    fn ineq_count(&self) -> usize {
        self.contact_nodes.len()
    }

    fn ineq_residuals(&self, x: &[f64], out: &mut [f64]) {
        for (k, &i) in self.contact_nodes.iter().enumerate() {
            let i = 3 * i as usize;
            let z_ref_mm = self.reference.height(x[i] * 1e3, x[i + 1] * 1e3);
            out[k] = z_ref_mm * 1e-3 - x[i + 2];
        }
    }

    fn add_ineq_jacobian(&self, x: &[f64], w: &[f64], grad: &mut [f64]) {
        for (k, &i) in self.contact_nodes.iter().enumerate() {
            if w[k] == 0.0 {
                continue;
            }
            let i = 3 * i as usize;
            let (_, gx, gy) = self
                .reference
                .height_and_gradient(x[i] * 1e3, x[i + 1] * 1e3);
            grad[i] += w[k] * gx;
            grad[i + 1] += w[k] * gy;
            grad[i + 2] -= w[k];
        }
    }

    fn project_gradient(&self, grad: &mut [f64]) {
        self.model.project_fixed(grad);
    }
}

/// Solves the debulk equilibrium of one net against the mold. Never fails:
/// non-convergence is reported through the `converged` flag with the best
/// iterate, per the pipeline's "inconclusive" downgrade path.
pub fn solve(
    net: &PlyNet,
    material: &MaterialParams,
    reference: &BilinearSurface,
    cfg: &SolverConfig,
) -> crate::Result<SolveResult> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let full = EnergyModel::new(net, material);

    // Feasibility lift: raise any movable node that starts below the mold.
    let mut x = full.x0.clone();
    let mut lifted_start = false;
    for i in 0..full.n_nodes() {
        if full.is_node_fixed(i) {
            continue;
        }
        let z_ref = reference.height(x[3 * i] * 1e3, x[3 * i + 1] * 1e3) * 1e-3;
        if x[3 * i + 2] < z_ref {
            if z_ref - x[3 * i + 2] > cfg.constraint_tol {
                lifted_start = true;
            }
            x[3 * i + 2] = z_ref;
        }
    }
    let x_start = x.clone();

    let mut evals = 0usize;
    let mut outers = 0usize;
    let mut inners = 0usize;
    let mut last: Option<ConstrainedOutcome> = None;
    for step in 1..=cfg.load_steps {
        // External (pressure-driven) loads ramp with the step; gravity and
        // the as-meshed geometry are present throughout.
        let scale = step as f64 / cfg.load_steps as f64;
        let mut model = full.clone();
        model.w_vac = full.w_vac * scale;
        model.w_fric = full.w_fric * scale;
        let problem = NetProblem::new(net, &model, reference);
        let out = minimize_constrained(&problem, x, cfg, None);
        x = out.x.clone();
        evals += out.function_evaluations;
        outers += out.outer_iterations;
        inners += out.inner_iterations;
        last = Some(out);
    }
    let out = last.expect("load_steps >= 1");

    let problem = NetProblem::new(net, &full, reference);
    let pi_initial = problem.objective(&x_start, None);
    let terms = full.terms(&out.x);
    let nodes_mm = out
        .x
        .chunks_exact(3)
        .map(|p| [p[0] * 1e3, p[1] * 1e3, p[2] * 1e3])
        .collect();

    Ok(SolveResult {
        patch_id: net.patch_id,
        nodes_mm,
        energy: terms,
        pi_initial,
        pi_final: terms.total,
        outer_iterations: outers,
        inner_iterations: inners,
        function_evaluations: evals,
        max_eq_residual_m: out.max_eq_residual,
        max_penetration_m: out.max_ineq_violation,
        stationarity_norm: out.grad_inf,
        converged: out.converged,
        lifted_start,
        load_steps: cfg.load_steps,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
