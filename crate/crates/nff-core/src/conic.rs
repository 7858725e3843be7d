//! Complex group-L1 conic refinement and the conventional full-array baseline.
//!
//! The program is
//!
//! ```text
//! minimize    Σ_q |w_q|
//! subject to  A_main·w = 1            (focal sample, complex equality)
//!             |A_SL·w| ≤ rho_SL       (sidelobe-tagged focal-plane samples)
//!             |A_Z·w|  ≤ axial_bound  (on-axis samples, z ≠ z0)
//! ```
//!
//! solved by a deterministic over-relaxed ADMM with adaptive penalty on the
//! splitting u = x, s = B·x: the x-update is an exact equality-constrained
//! least squares (one cached Cholesky factorization), the u-update is the
//! complex soft threshold, the s-update is a magnitude-ball projection. The
//! complex prox operations are exactly the second-order-cone prox/projection
//! of the (Re, Im) lifting.
//!
//! When the active set is closed under the mirror maps and the sample sets
//! are mirror-symmetric, the problem is restricted to the mirror-invariant
//! subspace first: columns collapse to orbit sums with objective weight =
//! orbit size, and one representative row stands for each mirrored row
//! quadruple. By convexity and group invariance this has the same optimum as
//! the full problem, and per-orbit weight magnitudes are equal exactly.

use std::io::{BufRead, Write as IoWrite};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynthError};
use crate::field::{PropagationMatrix, SamplingGrids};
use crate::geometry::MirrorMaps;
use crate::linalg::{dot_conj, dot_plain, CMat, CVec, CholeskyFactor};
use crate::omp::OmpState;

/// Tolerance used when matching the axial sample that duplicates the focal z.
const Z_MATCH_TOL: f64 = 1e-9;


#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iterations: usize,
    /// Initial ADMM penalty ρ.
    pub penalty: f64,
    /// Residual-balancing self-adaptation of ρ.
    pub adaptive_penalty: bool,
    /// Over-relaxation factor α ∈ (0, 2).
    pub over_relaxation: f64,
    /// Relative slack for the independent feasibility post-check.
    pub feasibility_slack: f64,
    /// Iterations between termination checks.
    pub check_interval: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_abs: 1e-8,
            eps_rel: 1e-6,
            max_iterations: 20_000,
            penalty: 1.0,
            adaptive_penalty: true,
            over_relaxation: 1.7,
            feasibility_slack: 1e-6,
            check_interval: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return Err(SynthError::InvalidArgument("solver tolerances must be positive".into()));
        }
        if !(self.penalty > 0.0) {
            return Err(SynthError::InvalidArgument("penalty must be positive".into()));
        }
        if !(self.over_relaxation > 0.0 && self.over_relaxation < 2.0) {
            return Err(SynthError::InvalidArgument("over_relaxation must lie in (0, 2)".into()));
        }
        if self.max_iterations == 0 || self.check_interval == 0 {
            return Err(SynthError::InvalidArgument("iteration counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Weights over the problem's columns (the active set, in caller order).
    pub weights: Vec<Complex64>,
    /// Σ|w_q|.
    pub objective: f64,
    pub status: SolveStatus,
    /// Outcome of the independent constraint post-check at the configured
    /// feasibility slack.
    pub feasible: bool,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub wall_time: f64,
}

/// Mirror structure of an assembled problem, in active-column / sidelobe-row
/// index spaces.
#[derive(Debug, Clone)]
pub struct ProblemSymmetry {
    /// Per mirror map: image of each active column.
    pub col_maps: [Vec<usize>; 3],
    /// Per mirror map: image of each sidelobe row.
    pub sl_row_maps: [Vec<usize>; 3],
}

/// The assembled conic program over the active columns.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    /// Focal-sample row (1 × n).
    pub a_main: Vec<Complex64>,
    /// Sidelobe rows (m_s × n).
    pub a_sl: CMat,
    /// Axial rows (m_z × n), focal z excluded.
    pub a_z: CMat,
    /// Linear-scale sidelobe bound, in (0, 1].
    pub rho_sl: f64,
    /// Linear-scale axial bound (E_max normalized to 1).
    pub axial_bound: f64,
    pub symmetry: Option<ProblemSymmetry>,
}

impl ConicProblem {
    pub fn cols(&self) -> usize {
        self.a_main.len()
    }
}

/// Partition the propagation-matrix rows by tag and restrict to the active
/// columns. `matrix` must span the focal-plane points followed by the axial
/// points of `grids`.
pub fn assemble_problem(
    matrix: &PropagationMatrix,
    grids: &SamplingGrids,
    active: &[usize],
    rho_sl_db: f64,
) -> Result<ConicProblem> {
    if active.is_empty() {
        return Err(SynthError::InvalidArgument("assemble_problem: empty active set".into()));
    }
    {
        let mut seen = std::collections::HashSet::new();
        for &a in active {
            if a >= matrix.cols() || !seen.insert(a) {
                return Err(SynthError::InvalidArgument(format!(
                    "assemble_problem: bad active index {a}"
                )));
            }
        }
    }
    let expected_rows = grids.focal_plane.len() + grids.axial.len();
    if matrix.rows() != expected_rows {
        return Err(SynthError::DimensionMismatch(format!(
            "matrix has {} rows, grids describe {expected_rows} points",
            matrix.rows()
        )));
    }
    let focal = grids.focal_point();
    if focal.x != 0.0 || focal.y != 0.0 {
        return Err(SynthError::InvalidConfiguration(
            "focal sample must lie at (0, 0, z0)".into(),
        ));
    }
    let rho_sl = 10f64.powf(rho_sl_db / 20.0);
    if !(rho_sl > 0.0 && rho_sl <= 1.0) {
        return Err(SynthError::InvalidArgument(format!(
            "rho_SL = {rho_sl} (from {rho_sl_db} dB) must lie in (0, 1]"
        )));
    }
    let sl_rows = grids.sidelobe_indices();
    if sl_rows.is_empty() {
        return Err(SynthError::InvalidConfiguration("no sidelobe-tagged samples".into()));
    }
    let offset = grids.axial_row_offset();
    let z_rows: Vec<usize> = grids
        .axial
        .iter()
        .enumerate()
        .filter(|(_, p)| (p.z - grids.z0).abs() > Z_MATCH_TOL)
        .map(|(i, _)| offset + i)
        .collect();

    let cols = matrix.entries.gather_columns(active);
    let a_main = {
        let (rr, ri) = cols.row(grids.focal_index);
        rr.iter().zip(ri).map(|(&re, &im)| Complex64::new(re, im)).collect::<Vec<_>>()
    };
    let a_sl = cols.gather_rows(&sl_rows);
    let a_z = cols.gather_rows(&z_rows);
    Ok(ConicProblem { a_main, a_sl, a_z, rho_sl, axial_bound: 1.0, symmetry: None })
}

fn coord_key(v: f64) -> u64 {
    // Normalize −0.0 so mirrored coordinates hash identically.
    (if v == 0.0 { 0.0 } else { v }).to_bits()
}

/// Mirror structure of the assembled problem, if the active set is
/// orbit-closed and every sidelobe sample has its mirror images in the grid.
pub fn problem_symmetry(
    maps: &MirrorMaps,
    grids: &SamplingGrids,
    active: &[usize],
) -> Option<ProblemSymmetry> {
    if !maps.is_closed(active) {
        return None;
    }
    let col_of: std::collections::HashMap<usize, usize> =
        active.iter().enumerate().map(|(c, &el)| (el, c)).collect();
    let mut col_maps: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (slot, map) in col_maps.iter_mut().zip(maps.maps()) {
        for &el in active {
            slot.push(*col_of.get(&map[el])?);
        }
    }

    let sl_rows = grids.sidelobe_indices();
    let row_of: std::collections::HashMap<(u64, u64), usize> = sl_rows
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            let p = grids.focal_plane[i].point;
            ((coord_key(p.x), coord_key(p.y)), r)
        })
        .collect();
    let mut sl_row_maps: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (k, slot) in sl_row_maps.iter_mut().enumerate() {
        for &i in &sl_rows {
            let p = grids.focal_plane[i].point;
            let (mx, my) = match k {
                0 => (-p.x, p.y),
                1 => (p.x, -p.y),
                _ => (-p.x, -p.y),
            };
            slot.push(*row_of.get(&(coord_key(mx), coord_key(my)))?);
        }
    }
    Some(ProblemSymmetry { col_maps, sl_row_maps })
}

/// Independent constraint verification (plain dot products, no solver state).
#[derive(Debug, Clone, Copy)]
pub struct FeasibilityReport {
    pub equality_error: f64,
    pub max_sidelobe: f64,
    pub max_axial: f64,
    pub rho_sl: f64,
    pub axial_bound: f64,
}

impl FeasibilityReport {
    pub fn passes(&self, slack: f64) -> bool {
        self.equality_error <= slack
            && self.max_sidelobe <= self.rho_sl * (1.0 + slack) + 1e-8
            && self.max_axial <= self.axial_bound * (1.0 + slack)
    }
}

pub fn feasibility_check(problem: &ConicProblem, weights: &[Complex64]) -> FeasibilityReport {
    let eq = dot_plain(&problem.a_main, weights) - Complex64::new(1.0, 0.0);
    let mut max_sl = 0.0f64;
    for i in 0..problem.a_sl.rows() {
        let v = dot_plain(&problem.a_sl.row_as_complex(i), weights).norm();
        max_sl = max_sl.max(v);
    }
    let mut max_z = 0.0f64;
    for i in 0..problem.a_z.rows() {
        let v = dot_plain(&problem.a_z.row_as_complex(i), weights).norm();
        max_z = max_z.max(v);
    }
    FeasibilityReport {
        equality_error: eq.norm(),
        max_sidelobe: max_sl,
        max_axial: max_z,
        rho_sl: problem.rho_sl,
        axial_bound: problem.axial_bound,
    }
}

// ── reduced (mirror-invariant) form ─────────────────────────────────────────

struct Reduced {
    /// Collapsed focal row (column-equilibrated variables).
    e: Vec<Complex64>,
    /// Stacked, row-scaled, column-equilibrated magnitude rows with their
    /// equality component removed: original row = γ·e + d, and since every
    /// iterate keeps e·x = 1 exactly, |row·x| = |γ + d·x|.
    b: CMat,
    /// Scaled bounds, one per row of `b`.
    bounds: Vec<f64>,
    /// Scaled equality offsets γ, one per row of `b`.
    offsets: Vec<Complex64>,
    /// Objective weight per reduced variable (orbit size / column scale).
    group_w: Vec<f64>,
    /// Original active-column indices per reduced variable.
    lift: Vec<Vec<usize>>,
    /// Per-variable column scale; original weight = solved value / scale.
    col_scale: Vec<f64>,
}

fn close_indices(n: usize, maps: &[Vec<usize>; 3]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; n];
    let mut groups = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let mut g = vec![i, maps[0][i], maps[1][i], maps[2][i]];
        g.sort_unstable();
        g.dedup();
        for &m in &g {
            seen[m] = true;
        }
        groups.push(g);
    }
    groups
}

fn build_reduced(problem: &ConicProblem) -> Reduced {
    let n = problem.cols();
    let (col_groups, row_groups) = match &problem.symmetry {
        Some(sym) => (
            close_indices(n, &sym.col_maps),
            close_indices(problem.a_sl.rows(), &sym.sl_row_maps),
        ),
        None => (
            (0..n).map(|i| vec![i]).collect(),
            (0..problem.a_sl.rows()).map(|i| vec![i]).collect(),
        ),
    };
    let nv = col_groups.len();
    let mut e = vec![Complex64::new(0.0, 0.0); nv];
    for (j, g) in col_groups.iter().enumerate() {
        for &q in g {
            e[j] += problem.a_main[q];
        }
    }
    let sl_reps: Vec<usize> = row_groups.iter().map(|g| g[0]).collect();
    let mc = sl_reps.len() + problem.a_z.rows();
    let mut b = CMat::zeros(mc, nv);
    let mut bounds = Vec::with_capacity(mc);
    for (r, &row) in sl_reps.iter().enumerate() {
        for (j, g) in col_groups.iter().enumerate() {
            let mut v = Complex64::new(0.0, 0.0);
            for &q in g {
                v += problem.a_sl.get(row, q);
            }
            b.set(r, j, v);
        }
        bounds.push(problem.rho_sl);
    }
    for i in 0..problem.a_z.rows() {
        let r = sl_reps.len() + i;
        for (j, g) in col_groups.iter().enumerate() {
            let mut v = Complex64::new(0.0, 0.0);
            for &q in g {
                v += problem.a_z.get(i, q);
            }
            b.set(r, j, v);
        }
        bounds.push(problem.axial_bound);
    }
    // Remove each row's equality component: row = γ·e + d with γ chosen to
    // minimize ‖d‖. The axial samples straddling the focus are nearly
    // parallel to e (|E| ≈ E_max by continuity), which makes the raw
    // magnitude constraints tangent to the equality manifold and stalls the
    // splitting; in the (γ, d) form the constrained quantity is the field
    // *difference* from the focal sample and the degeneracy disappears.
    let e_norm_sqr: f64 = e.iter().map(|z| z.norm_sqr()).sum();
    let mut offsets = vec![Complex64::new(0.0, 0.0); mc];
    if e_norm_sqr > 0.0 {
        for i in 0..mc {
            let mut ov = Complex64::new(0.0, 0.0);
            for j in 0..nv {
                ov += e[j].conj() * b.get(i, j);
            }
            let gamma = ov / e_norm_sqr;
            // Only rows nearly parallel to the equality benefit; for the rest
            // the centered-disc form converges faster.
            let corr_sqr = gamma.norm_sqr() * e_norm_sqr / b.row_norm(i).powi(2).max(1e-300);
            if corr_sqr > 0.8 {
                for j in 0..nv {
                    b.set(i, j, b.get(i, j) - gamma * e[j]);
                }
                offsets[i] = gamma;
            }
        }
    }
    // Unit-norm rows (scaling a magnitude constraint is exact).
    let mut scale = Vec::with_capacity(mc);
    for i in 0..mc {
        let nrm = b.row_norm(i);
        scale.push(if nrm > 1e-300 { 1.0 / nrm } else { 1.0 });
    }
    b.scale_rows(&scale);
    for ((bi, off), d) in bounds.iter_mut().zip(&mut offsets).zip(&scale) {
        *bi *= d;
        *off *= d;
    }
    // Column equilibration: near-array axial rows give the central columns
    // norms an order of magnitude above the rest, which stalls the splitting.
    // Solve in v = D·x with unit-norm columns and map the objective weights.
    let mut col_scale = Vec::with_capacity(nv);
    for j in 0..nv {
        let mut s = 0.0f64;
        for i in 0..mc {
            s += b.get(i, j).norm_sqr();
        }
        let nrm = s.sqrt();
        col_scale.push(if nrm > 1e-300 { nrm } else { 1.0 });
    }
    for i in 0..mc {
        for j in 0..nv {
            b.set(i, j, b.get(i, j) / col_scale[j]);
        }
    }
    let mut group_w: Vec<f64> = col_groups.iter().map(|g| g.len() as f64).collect();
    for (w, d) in group_w.iter_mut().zip(&col_scale) {
        *w /= d;
    }
    for (ej, d) in e.iter_mut().zip(&col_scale) {
        *ej /= *d;
    }
    Reduced { e, b, bounds, offsets, group_w, lift: col_groups, col_scale }
}

// ── ADMM core ────────────────────────────────────────────────────────────────

fn axpy_relaxed(alpha: f64, a: &[Complex64], b: &[Complex64], out: &mut Vec<Complex64>) {
    out.clear();
    out.extend(a.iter().zip(b).map(|(x, y)| alpha * x + (1.0 - alpha) * y));
}

struct AdmmOutcome {
    x: Vec<Complex64>,
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
    converged: bool,
    infeasible: bool,
}

fn run_admm(
    red: &Reduced,
    config: &SolverConfig,
    warm: Option<Vec<Complex64>>,
    bound_factor: f64,
) -> Result<AdmmOutcome> {
    let bounds: Vec<f64> = red.bounds.iter().map(|b| b * bound_factor).collect();
    let nv = red.e.len();
    let mc = red.b.rows();
    let alpha = config.over_relaxation;

    // G = I + BᴴB, factored once; the equality is handled through its
    // Schur complement: x = x̃ − ν·g with g = G⁻¹ē and ν = (e·x̃ − 1)/(e·g).
    let mut g_mat = red.b.gram();
    for i in 0..nv {
        g_mat[i * nv + i] += Complex64::new(1.0, 0.0);
    }
    let chol = CholeskyFactor::new(&g_mat, nv)?;
    drop(g_mat);
    let a_vec: Vec<Complex64> = red.e.iter().map(|z| z.conj()).collect();
    let g_vec = chol.solve(&a_vec);
    let gamma = dot_conj(&a_vec, &g_vec).re;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(SynthError::InvalidArgument(
            "conic: focal row is numerically zero; equality cannot be normalized".into(),
        ));
    }

    let mut x: Vec<Complex64> = match warm {
        Some(w0) => {
            let denom = dot_plain(&red.e, &w0);
            if denom.norm() > 1e-12 {
                w0.iter().map(|z| z / denom).collect()
            } else {
                g_vec.iter().map(|z| z / gamma).collect()
            }
        }
        None => g_vec.iter().map(|z| z / gamma).collect(),
    };
    let mut u = x.clone();
    let mut p = vec![Complex64::new(0.0, 0.0); nv];
    let mut bx = CVec::zeros(mc);
    {
        let xv = CVec::from_complex(&x);
        red.b.matvec(&xv, &mut bx);
    }
    let mut s = CVec::zeros(mc);
    for i in 0..mc {
        let w = red.offsets[i] + bx.get(i);
        let nrm = w.norm();
        let w = if nrm > bounds[i] { w * (bounds[i] / nrm) } else { w };
        let v = w - red.offsets[i];
        s.re[i] = v.re;
        s.im[i] = v.im;
    }
    let mut q = CVec::zeros(mc);

    let mut rho = config.penalty;
    // The reduced problem is row/column equilibrated, so the useful penalty
    // range is narrow; a runaway ρ freezes the splitting entirely.
    const RHO_MIN: f64 = 1e-4;
    const RHO_MAX: f64 = 1e4;

    let mut h_u: Vec<Complex64> = Vec::with_capacity(nv);
    let mut rhs = vec![Complex64::new(0.0, 0.0); nv];
    let mut sq = CVec::zeros(mc);
    let mut adj = CVec::zeros(nv);

    let mut iterations = 0;
    let mut r_pri = f64::INFINITY;
    let mut r_dua = f64::INFINITY;
    let mut converged = false;
    let mut infeasible = false;
    let mut best_violation = f64::INFINITY;
    let mut stalled_checks = 0usize;

    for k in 1..=config.max_iterations {
        iterations = k;
        let checking = k % config.check_interval == 0 || k == config.max_iterations;
        let (u_old, s_old) = if checking { (Some(u.clone()), Some(s.clone())) } else { (None, None) };

        // x-update: argmin ‖x − (u−p)‖² + ‖Bx − (s−q)‖²  s.t.  e·x = 1.
        for i in 0..mc {
            sq.re[i] = s.re[i] - q.re[i];
            sq.im[i] = s.im[i] - q.im[i];
        }
        red.b.adjoint_matvec(&sq, &mut adj);
        for j in 0..nv {
            rhs[j] = (u[j] - p[j]) + adj.get(j);
        }
        let xt = chol.solve(&rhs);
        let nu = (dot_plain(&red.e, &xt) - Complex64::new(1.0, 0.0)) / gamma;
        for j in 0..nv {
            x[j] = xt[j] - nu * g_vec[j];
        }
        {
            let xv = CVec::from_complex(&x);
            red.b.matvec(&xv, &mut bx);
        }

        // u-update: group soft threshold at group_w/ρ, with over-relaxation.
        axpy_relaxed(alpha, &x, &u, &mut h_u);
        for j in 0..nv {
            let v = h_u[j] + p[j];
            let t = red.group_w[j] / rho;
            let nrm = v.norm();
            u[j] = if nrm <= t { Complex64::new(0.0, 0.0) } else { v * (1.0 - t / nrm) };
        }
        // s-update: projection onto |γ_i + s_i| ≤ bound_i (disc offset by the
        // row's equality component).
        for i in 0..mc {
            let hr = alpha * bx.re[i] + (1.0 - alpha) * s.re[i];
            let hi = alpha * bx.im[i] + (1.0 - alpha) * s.im[i];
            let vr = hr + q.re[i];
            let vi = hi + q.im[i];
            let off = red.offsets[i];
            let wr = vr + off.re;
            let wi = vi + off.im;
            let nrm = (wr * wr + wi * wi).sqrt();
            let (sr, si) = if nrm > bounds[i] {
                let f = bounds[i] / nrm;
                (wr * f - off.re, wi * f - off.im)
            } else {
                (vr, vi)
            };
            // dual update folded in: q += h − s_new
            q.re[i] += hr - sr;
            q.im[i] += hi - si;
            s.re[i] = sr;
            s.im[i] = si;
        }
        for j in 0..nv {
            p[j] = p[j] + h_u[j] - u[j];
        }

        if checking {
            let u_old = u_old.unwrap();
            let s_old = s_old.unwrap();
            // Primal residual: (x − u, Bx − s).
            let mut rp = 0.0;
            for j in 0..nv {
                rp += (x[j] - u[j]).norm_sqr();
            }
            for i in 0..mc {
                let dr = bx.re[i] - s.re[i];
                let di = bx.im[i] - s.im[i];
                rp += dr * dr + di * di;
            }
            let rp = rp.sqrt();
            // Dual residual: ρ‖(u − u_old) + Bᴴ(s − s_old)‖.
            let mut ds = CVec::zeros(mc);
            for i in 0..mc {
                ds.re[i] = s.re[i] - s_old.re[i];
                ds.im[i] = s.im[i] - s_old.im[i];
            }
            red.b.adjoint_matvec(&ds, &mut adj);
            let mut rd = 0.0;
            for j in 0..nv {
                rd += ((u[j] - u_old[j]) + adj.get(j)).norm_sqr();
            }
            let rd = rho * rd.sqrt();

            let norm_x: f64 = x.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let norm_bx = bx.norm();
            let norm_u: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let norm_s = s.norm();
            let scale_pri = (norm_x + norm_bx * norm_bx)
                .sqrt()
                .max((norm_u + norm_s * norm_s).sqrt());
            red.b.adjoint_matvec(&q, &mut adj);
            let mut aty = 0.0;
            for j in 0..nv {
                aty += (p[j] + adj.get(j)).norm_sqr();
            }
            let scale_dua = rho * aty.sqrt();
            let dim_pri = (2 * (nv + mc)) as f64;
            let dim_dua = (2 * nv) as f64;
            let eps_pri = config.eps_abs * dim_pri.sqrt() + config.eps_rel * scale_pri;
            let eps_dua = config.eps_abs * dim_dua.sqrt() + config.eps_rel * scale_dua;

            r_pri = rp;
            r_dua = rd;
            if std::env::var_os("NFF_ADMM_TRACE").is_some() && k % 1000 == 0 {
                eprintln!(
                    "admm k={k} rho={rho:.3e} rp={rp:.3e}/{eps_pri:.3e} rd={rd:.3e}/{eps_dua:.3e} bv={best_violation:.6} st={stalled_checks}"
                );
            }
            if rp <= eps_pri && rd <= eps_dua {
                converged = true;
                break;
            }

            // Infeasibility heuristic: the scaled dual ρ(p, q) diverges while
            // the attainable violation ratio stalls above 1.
            let mut violation = 0.0f64;
            for i in 0..mc {
                let v = (red.offsets[i] + bx.get(i)).norm();
                violation = violation.max(v / bounds[i]);
            }
            if violation < best_violation * 0.999 {
                best_violation = violation;
                stalled_checks = 0;
            } else {
                stalled_checks += 1;
            }
            // Infeasibility: the attainable violation stalls materially above
            // the bounds for a long stretch. Degenerate-but-feasible problems
            // (tangent axial rows) keep improving, slowly, and their duals may
            // legitimately diverge (no strict interior), so only the primal
            // signal is trusted.
            const STALL_CHECKS: usize = 1000;
            if k >= 20_000 && best_violation > 2.0 && stalled_checks >= STALL_CHECKS {
                infeasible = true;
                break;
            }

            // Residual balancing, applied sparingly: per-check adaptation
            // couples with the over-relaxed iteration into a limit cycle.
            if config.adaptive_penalty && !converged && k % (50 * config.check_interval) == 0 {
                let rp_n = rp / scale_pri.max(1e-300);
                let rd_n = rd / scale_dua.max(1e-300);
                if rp_n > 0.0 && rd_n > 0.0 {
                    let factor = (rp_n / rd_n).sqrt().clamp(0.2, 5.0);
                    if (factor - 1.0).abs() > 0.2 {
                        let new_rho = (rho * factor).clamp(RHO_MIN, RHO_MAX);
                        let ratio = new_rho / rho;
                        if (ratio - 1.0).abs() > 1e-12 {
                            rho = new_rho;
                            let inv = 1.0 / ratio;
                            for v in &mut p {
                                *v *= inv;
                            }
                            for i in 0..mc {
                                q.re[i] *= inv;
                                q.im[i] *= inv;
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(AdmmOutcome { x, iterations, primal_residual: r_pri, dual_residual: r_dua, converged, infeasible })
}

/// Restore e·x = 1 exactly with the minimum-norm shift.
fn restore_equality(e: &[Complex64], x: &mut [Complex64]) {
    let err = Complex64::new(1.0, 0.0) - dot_plain(e, x);
    let enorm: f64 = e.iter().map(|z| z.norm_sqr()).sum();
    if enorm > 0.0 {
        for (xj, ej) in x.iter_mut().zip(e) {
            *xj += ej.conj() * (err / enorm);
        }
    }
}

/// Feasibility polish: over-relaxed sequential projections (POCS) onto each
/// violated magnitude set, inside the null space of the equality row so
/// e·x = 1 cannot drift. The ADMM iterate arrives with per-row violations in
/// the 1e-3 grade or below; the convex intersection is nonempty, so the
/// sweeps converge and the objective moves only at that scale.
fn polish(red: &Reduced, x: &mut Vec<Complex64>, bound_factor: f64) {
    const MAX_SWEEPS: usize = 20_000;
    const RELAX: f64 = 1.6;
    let nv = red.e.len();
    let mc = red.b.rows();
    restore_equality(&red.e, x);
    if nv <= 1 {
        return;
    }
    let enorm: f64 = red.e.iter().map(|z| z.norm_sqr()).sum();
    if enorm <= 0.0 {
        return;
    }
    let mut bx = CVec::zeros(mc);
    let mut best = x.clone();
    let mut best_ratio = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let xv = CVec::from_complex(x);
        red.b.matvec(&xv, &mut bx);
        let mut worst = 0.0f64;
        let mut violated: Vec<usize> = Vec::new();
        for i in 0..mc {
            let r = (red.offsets[i] + bx.get(i)).norm() / (red.bounds[i] * bound_factor);
            worst = worst.max(r);
            if r > 1.0 {
                violated.push(i);
            }
        }
        if worst < best_ratio {
            best_ratio = worst;
            best = x.clone();
        }
        if violated.is_empty() {
            return;
        }
        for &i in &violated {
            // Fresh row value (earlier projections in this sweep moved x).
            let mut v = red.offsets[i];
            for j in 0..nv {
                v += red.b.get(i, j) * x[j];
            }
            let nrm = v.norm();
            let target = red.bounds[i] * bound_factor * (1.0 - 1e-12);
            if nrm <= target {
                continue;
            }
            let phase = v / nrm;
            // Min-norm step with e·delta = 0 and row·delta = phase·(target − |v|).
            let rbar: Vec<Complex64> = (0..nv).map(|j| red.b.get(i, j).conj()).collect();
            let overlap: Complex64 = red.e.iter().zip(&rbar).map(|(e, r)| e * r).sum();
            let rnorm_sqr: f64 = rbar.iter().map(|z| z.norm_sqr()).sum();
            let denom: f64 = rnorm_sqr - overlap.norm_sqr() / enorm;
            // Rows nearly parallel to the equality cannot be fixed by a small
            // in-manifold step; the weighted splitting already drives them
            // inside the backed-off bound.
            if denom <= 2.5e-3 * rnorm_sqr {
                continue;
            }
            let tau = phase * (target - nrm) * (RELAX / denom);
            for j in 0..nv {
                let pr = rbar[j] - red.e[j].conj() * (overlap / enorm);
                x[j] += pr * tau;
            }
        }
    }
    // Keep the best iterate seen if the sweeps did not finish.
    {
        let xv = CVec::from_complex(x);
        red.b.matvec(&xv, &mut bx);
        let mut worst = 0.0f64;
        for i in 0..mc {
            worst =
                worst.max((red.offsets[i] + bx.get(i)).norm() / (red.bounds[i] * bound_factor));
        }
        if worst > best_ratio {
            *x = best;
        }
    }
    restore_equality(&red.e, x);
    if std::env::var_os("NFF_ADMM_TRACE").is_some() {
        let xv = CVec::from_complex(x);
        red.b.matvec(&xv, &mut bx);
        let mut worst = 0.0f64;
        let mut count = 0usize;
        for i in 0..mc {
            let r = (red.offsets[i] + bx.get(i)).norm() / (red.bounds[i] * bound_factor);
            if r > 1.0 {
                count += 1;
            }
            worst = worst.max(r);
        }
        eprintln!("polish end: worst {worst:.12}, violated {count}/{mc}");
    }
}

/// Solve the conic program (cold start).
pub fn solve_conic(problem: &ConicProblem, config: &SolverConfig) -> Result<SolveReport> {
    solve_conic_warm(problem, config, None)
}

/// Solve with an optional warm start (weights over the problem's columns).
pub fn solve_conic_warm(
    problem: &ConicProblem,
    config: &SolverConfig,
    warm: Option<&[Complex64]>,
) -> Result<SolveReport> {
    config.validate()?;
    let t0 = Instant::now();
    let red = build_reduced(problem);

    // Reduce the warm start onto the invariant subspace (orbit mean), in the
    // equilibrated variables.
    let warm_red = warm.map(|w| {
        red.lift
            .iter()
            .zip(&red.col_scale)
            .map(|(g, &d)| {
                let mut s = Complex64::new(0.0, 0.0);
                for &q in g {
                    s += w[q];
                }
                s * (d / g.len() as f64)
            })
            .collect::<Vec<_>>()
    });

    // Back the bounds off slightly inside the splitting so the returned
    // point clears the true bounds with margin; the offset tracks the
    // configured tolerance, so tight runs are unaffected.
    let back_off = (10.0 * config.eps_rel).min(5e-4);
    let mut out = run_admm(&red, config, warm_red, 1.0 - back_off)?;

    let mut status = if out.infeasible {
        SolveStatus::Infeasible
    } else if out.converged {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIterations
    };

    if status != SolveStatus::Infeasible {
        // Feasibility polish only refines near-feasible iterates; a badly
        // unconverged solve keeps its honest field.
        let mut worst = 0.0f64;
        {
            let xv = CVec::from_complex(&out.x);
            let mut bx = CVec::zeros(red.b.rows());
            red.b.matvec(&xv, &mut bx);
            for i in 0..red.b.rows() {
                worst = worst.max((red.offsets[i] + bx.get(i)).norm() / red.bounds[i]);
            }
        }
        if worst <= 1.01 {
            polish(&red, &mut out.x, 1.0 - 0.5 * back_off);
        }
    }

    // Lift to the active-column space, undoing the column equilibration.
    let n = problem.cols();
    let mut weights = vec![Complex64::new(0.0, 0.0); n];
    for (j, g) in red.lift.iter().enumerate() {
        let v = out.x[j] / red.col_scale[j];
        for &q in g {
            weights[q] = v;
        }
    }

    let check = feasibility_check(problem, &weights);
    let feasible = check.passes(config.feasibility_slack);
    if status == SolveStatus::Optimal && !feasible {
        if std::env::var_os("NFF_ADMM_TRACE").is_some() {
            eprintln!("downgrade: {check:?}");
        }
        log::warn!(
            "converged iterate failed the independent post-check \
             (eq {:.3e}, sl {:.6e}/{:.6e}, z {:.6e}); downgrading status",
            check.equality_error,
            check.max_sidelobe,
            check.rho_sl,
            check.max_axial
        );
        status = SolveStatus::MaxIterations;
    }

    let objective = weights.iter().map(|z| z.norm()).sum();
    Ok(SolveReport {
        weights,
        objective,
        status,
        feasible,
        iterations: out.iterations,
        primal_residual: out.primal_residual,
        dual_residual: out.dual_residual,
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

/// Refinement over the OMP active set, embedded into a full-length vector.
#[derive(Debug)]
pub struct Refined {
    pub report: SolveReport,
    /// Weights over the full array; zeros outside the active set.
    pub full_weights: Vec<Complex64>,
}

pub fn refine(
    matrix: &PropagationMatrix,
    grids: &SamplingGrids,
    omp_state: &OmpState,
    rho_sl_db: f64,
    config: &SolverConfig,
    mirror_maps: Option<&MirrorMaps>,
) -> Result<Refined> {
    if omp_state.active_set.is_empty() {
        return Err(SynthError::InvalidArgument("refine: OMP active set is empty".into()));
    }
    let mut problem = assemble_problem(matrix, grids, &omp_state.active_set, rho_sl_db)?;
    if let Some(maps) = mirror_maps {
        problem.symmetry = problem_symmetry(maps, grids, &omp_state.active_set);
    }
    let warm = if omp_state.weights.len() == omp_state.active_set.len() {
        Some(omp_state.weights.as_slice())
    } else {
        None
    };
    let report = solve_conic_warm(&problem, config, warm)?;
    if report.status == SolveStatus::Infeasible {
        return Err(SynthError::Infeasible(format!(
            "refinement infeasible for {} active elements at rho_SL = {} dB; raise rho_SL or s_max",
            omp_state.active_set.len(),
            rho_sl_db
        )));
    }
    let mut full = vec![Complex64::new(0.0, 0.0); matrix.cols()];
    for (k, &el) in omp_state.active_set.iter().enumerate() {
        full[el] = report.weights[k];
    }
    Ok(Refined { report, full_weights: full })
}

/// The conventional method: the same conic program over all N columns, with
/// no pre-selection and no symmetry structure.
pub fn baseline_full_l1(
    matrix: &PropagationMatrix,
    grids: &SamplingGrids,
    rho_sl_db: f64,
    config: &SolverConfig,
) -> Result<SolveReport> {
    let all: Vec<usize> = (0..matrix.cols()).collect();
    let problem = assemble_problem(matrix, grids, &all, rho_sl_db)?;
    solve_conic(&problem, config)
}

// ── plain-text problem dump/load ─────────────────────────────────────────────

const DUMP_HEADER: &str = "nff-conic-problem v1";

fn write_block(w: &mut impl IoWrite, name: &str, m: &CMat) -> std::io::Result<()> {
    writeln!(w, "{name} {} {}", m.rows(), m.cols())?;
    for i in 0..m.rows() {
        let mut line = String::new();
        for j in 0..m.cols() {
            let v = m.get(i, j);
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{} {}", v.re, v.im));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Dump in a plain-text format (dimensions header + row-major complex
/// entries) for cross-checking against external solvers.
pub fn dump_problem(problem: &ConicProblem, w: &mut impl IoWrite) -> Result<()> {
    writeln!(w, "{DUMP_HEADER}")?;
    writeln!(w, "rho_sl {}", problem.rho_sl)?;
    writeln!(w, "axial_bound {}", problem.axial_bound)?;
    let main = CMat::from_fn(1, problem.cols(), |_, j| problem.a_main[j]);
    write_block(w, "main", &main)?;
    write_block(w, "sl", &problem.a_sl)?;
    write_block(w, "axial", &problem.a_z)?;
    Ok(())
}

fn parse_block(
    lines: &mut impl Iterator<Item = std::io::Result<String>>,
    name: &str,
) -> Result<CMat> {
    let header = lines
        .next()
        .ok_or_else(|| SynthError::Parse(format!("missing {name} block")))??;
    let mut parts = header.split_whitespace();
    let tag = parts.next().unwrap_or("");
    if tag != name {
        return Err(SynthError::Parse(format!("expected block '{name}', found '{tag}'")));
    }
    let rows: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| SynthError::Parse(format!("bad {name} dimensions")))?;
    let cols: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| SynthError::Parse(format!("bad {name} dimensions")))?;
    let mut m = CMat::zeros(rows, cols);
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| SynthError::Parse(format!("{name}: missing row {i}")))??;
        let mut vals = line.split_whitespace();
        for j in 0..cols {
            let re: f64 = vals
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| SynthError::Parse(format!("{name}: bad entry ({i}, {j})")))?;
            let im: f64 = vals
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| SynthError::Parse(format!("{name}: bad entry ({i}, {j})")))?;
            m.set(i, j, Complex64::new(re, im));
        }
    }
    Ok(m)
}

pub fn load_problem(r: impl BufRead) -> Result<ConicProblem> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| SynthError::Parse("empty dump".into()))??;
    if header.trim() != DUMP_HEADER {
        return Err(SynthError::Parse(format!("unexpected header '{header}'")));
    }
    let mut scalar = |name: &str| -> Result<f64> {
        let line = lines
            .next()
            .ok_or_else(|| SynthError::Parse(format!("missing scalar {name}")))??;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(name) {
            return Err(SynthError::Parse(format!("expected scalar '{name}'")));
        }
        parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| SynthError::Parse(format!("bad scalar {name}")))
    };
    let rho_sl = scalar("rho_sl")?;
    let axial_bound = scalar("axial_bound")?;
    let main = parse_block(&mut lines, "main")?;
    if main.rows() != 1 {
        return Err(SynthError::Parse("main block must have one row".into()));
    }
    let a_sl = parse_block(&mut lines, "sl")?;
    let a_z = parse_block(&mut lines, "axial")?;
    if a_sl.cols() != main.cols() || a_z.cols() != main.cols() {
        return Err(SynthError::Parse("inconsistent column counts".into()));
    }
    Ok(ConicProblem {
        a_main: main.row_as_complex(0),
        a_sl,
        a_z,
        rho_sl,
        axial_bound,
        symmetry: None,
    })
}

#[cfg(test)]
mod tests;
