//! Quadrant-symmetric orthogonal matching pursuit pre-selection.
//!
//! Each iteration correlates the residual with every unselected column
//! (Hermitian inner product), picks the best first-quadrant representative,
//! admits its whole mirror orbit, refits all admitted columns by least
//! squares, and recomputes the residual from scratch.

use num_complex::Complex64;

use crate::error::{Result, SynthError};
use crate::field::PropagationMatrix;
use crate::geometry::SymmetryOrbit;
use crate::linalg::{min_norm_lstsq, norm2, CVec};

#[derive(Debug, Clone)]
pub struct OmpConfig {
    /// Maximum number of orbit selections (first-quadrant picks) per run.
    pub s_max: usize,
    /// Residual-norm stopping threshold.
    pub epsilon: f64,
    /// Relative tolerance for correlation argmax ties.
    pub correlation_tie_tol: f64,
}

impl Default for OmpConfig {
    fn default() -> Self {
        Self { s_max: 16, epsilon: 1e-3, correlation_tie_tol: 1e-12 }
    }
}

impl OmpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s_max < 1 {
            return Err(SynthError::InvalidArgument("s_max must be ≥ 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(SynthError::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmpStop {
    /// ‖target‖ was already below epsilon; nothing selected.
    TargetBelowEpsilon,
    ResidualBelowEpsilon,
    MaxSelections,
    /// Correlations vanished after at least one selection.
    Stagnated,
}

#[derive(Debug, Clone)]
pub struct OmpState {
    /// target − A_S·weights, recomputed (not accumulated).
    pub residual: Vec<Complex64>,
    /// Selection-ordered union of whole symmetry orbits.
    pub active_set: Vec<usize>,
    /// Least-squares weights over `active_set`.
    pub weights: Vec<Complex64>,
    pub iteration: usize,
    pub selected_orbits: Vec<SymmetryOrbit>,
    /// ‖residual‖₂ after each iteration.
    pub residual_trace: Vec<f64>,
    pub stop: OmpStop,
    pub rank_deficient: bool,
}

/// c_j = |column_jᴴ · residual|, zeroed on the excluded set.
pub fn correlations(
    matrix: &PropagationMatrix,
    residual: &[Complex64],
    excluded: &[usize],
) -> Result<Vec<f64>> {
    if residual.len() != matrix.rows() {
        return Err(SynthError::DimensionMismatch(format!(
            "residual has {} entries, matrix has {} rows",
            residual.len(),
            matrix.rows()
        )));
    }
    let r = CVec::from_complex(residual);
    let mut out = CVec::zeros(matrix.cols());
    matrix.entries.adjoint_matvec(&r, &mut out);
    let mut c: Vec<f64> = (0..matrix.cols()).map(|j| out.get(j).norm()).collect();
    for &j in excluded {
        if j < c.len() {
            c[j] = 0.0;
        }
    }
    Ok(c)
}

/// Orbit of the best first-quadrant representative; ties go to the smallest
/// element index.
pub fn select_orbit<'a>(
    c: &[f64],
    orbits: &'a [SymmetryOrbit],
    quadrant: &[usize],
    tie_tol: f64,
) -> Result<&'a SymmetryOrbit> {
    let quad: std::collections::HashSet<usize> = quadrant.iter().copied().collect();
    let mut best: Option<(&SymmetryOrbit, f64)> = None;
    for orbit in orbits {
        if !quad.contains(&orbit.representative) {
            continue;
        }
        let v = c[orbit.representative];
        if v <= 0.0 {
            continue;
        }
        match best {
            None => best = Some((orbit, v)),
            Some((_, bv)) => {
                // Orbits are scanned in ascending representative order, so a
                // within-tolerance tie keeps the earlier (smaller) index.
                if v > bv * (1.0 + tie_tol) {
                    best = Some((orbit, v));
                }
            }
        }
    }
    best.map(|(o, _)| o).ok_or(SynthError::Stagnation)
}

#[derive(Debug, Clone)]
pub struct LstsqFit {
    pub weights: Vec<Complex64>,
    pub rank: usize,
    pub rank_deficient: bool,
}

/// Least-squares weights for the active columns against the target; minimum
/// norm when the submatrix is rank deficient.
pub fn least_squares_fit(
    matrix: &PropagationMatrix,
    active: &[usize],
    target: &[Complex64],
) -> Result<LstsqFit> {
    if active.is_empty() {
        return Err(SynthError::InvalidArgument("least_squares_fit: empty active set".into()));
    }
    let sub = matrix.entries.gather_columns(active);
    let res = min_norm_lstsq(sub.to_col_major(), sub.rows(), sub.cols(), target, 1e-12)?;
    let deficient = res.rank < active.len();
    if deficient {
        log::warn!(
            "active-column submatrix is rank deficient ({} < {}); using minimum-norm weights",
            res.rank,
            active.len()
        );
    }
    Ok(LstsqFit { weights: res.x, rank: res.rank, rank_deficient: deficient })
}

fn residual_of(
    matrix: &PropagationMatrix,
    active: &[usize],
    weights: &[Complex64],
    target: &[Complex64],
) -> Vec<Complex64> {
    let sub = matrix.entries.gather_columns(active);
    let x = CVec::from_complex(weights);
    let mut ax = CVec::zeros(sub.rows());
    sub.matvec(&x, &mut ax);
    target
        .iter()
        .enumerate()
        .map(|(i, y)| y - ax.get(i))
        .collect()
}

/// Algorithm: correlate → select orbit → refit → recompute residual, until
/// ‖r‖ < ε, s_max selections, or stagnation.
pub fn omp_preselect(
    matrix: &PropagationMatrix,
    target: &[Complex64],
    orbits: &[SymmetryOrbit],
    quadrant: &[usize],
    config: &OmpConfig,
) -> Result<OmpState> {
    config.validate()?;
    if target.len() != matrix.rows() {
        return Err(SynthError::DimensionMismatch(format!(
            "target has {} entries, matrix has {} rows",
            target.len(),
            matrix.rows()
        )));
    }
    let target_norm = norm2(target);
    if target_norm == 0.0 {
        return Err(SynthError::InvalidArgument("omp_preselect: target is zero".into()));
    }
    let mut state = OmpState {
        residual: target.to_vec(),
        active_set: Vec::new(),
        weights: Vec::new(),
        iteration: 0,
        selected_orbits: Vec::new(),
        residual_trace: Vec::new(),
        stop: OmpStop::MaxSelections,
        rank_deficient: false,
    };
    if target_norm < config.epsilon {
        state.stop = OmpStop::TargetBelowEpsilon;
        return Ok(state);
    }

    for iter in 1..=config.s_max {
        let c = correlations(matrix, &state.residual, &state.active_set)?;
        let orbit = match select_orbit(&c, orbits, quadrant, config.correlation_tie_tol) {
            Ok(o) => o,
            Err(SynthError::Stagnation) if iter > 1 => {
                state.stop = OmpStop::Stagnated;
                break;
            }
            Err(e) => return Err(e),
        };
        state.active_set.extend(orbit.members.iter().copied());
        state.selected_orbits.push(orbit.clone());
        let fit = least_squares_fit(matrix, &state.active_set, target)?;
        state.rank_deficient |= fit.rank_deficient;
        state.weights = fit.weights;
        state.residual = residual_of(matrix, &state.active_set, &state.weights, target);
        state.iteration = iter;
        state.residual_trace.push(norm2(&state.residual));
        if *state.residual_trace.last().unwrap() < config.epsilon {
            state.stop = OmpStop::ResidualBelowEpsilon;
            break;
        }
    }
    Ok(state)
}
