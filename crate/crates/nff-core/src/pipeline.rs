//! End-to-end orchestration: configuration → grids/matrix → OMP → conic
//! refinement (with escalation on infeasibility) → field evaluation →
//! metrics, plus the full-array baseline path, the sparsity sweep, and
//! per-stage wall-clock timing.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conic::{baseline_full_l1, refine, SolveStatus, SolverConfig};
use crate::error::{Result, SynthError};
use crate::field::{
    build_axial_grid, build_focal_plane_grid, build_propagation_matrix, build_target_field,
    evaluate_field_direct, ElementPatternModel, PropagationMatrix, SamplingGrids,
};
use crate::geometry::{
    build_grid_layout, first_quadrant_indices, mirror_maps, symmetry_orbits_from_maps,
    ArrayGeometry, MirrorMaps, SymmetryOrbit, DEFAULT_POSITION_TOL,
};
use crate::metrics::{
    compute_metrics, MetricSet, NormalizationRule, StageTimings, SynthesisResult,
};
use crate::omp::{omp_preselect, OmpConfig, OmpState};

fn default_pattern() -> ElementPatternModel {
    ElementPatternModel::YDipole
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArraySpec {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    #[serde(default = "default_pattern")]
    pub pattern: ElementPatternModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FocusSpec {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FocalPlaneSpec {
    pub extent: f64,
    pub points_per_side: usize,
    /// Mainlobe exclusion radius; defaults to the desired beamwidth.
    #[serde(default)]
    pub exclusion_radius: Option<f64>,
    /// Read-out grid density for fields/metrics; defaults to
    /// 2·points_per_side + 1 (odd, so the axis cuts lie on the lattice).
    #[serde(default)]
    pub eval_points_per_side: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxialSpec {
    pub z_min: f64,
    pub z_max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisSpec {
    /// Desired 3 dB beamwidth in wavelengths (also the default exclusion radius).
    pub beamwidth_target: f64,
    pub rho_sl_db: f64,
    /// OMP residual stopping threshold ε.
    pub epsilon: f64,
    /// OMP orbit-selection budget (first-quadrant picks).
    pub s_max: usize,
    #[serde(default)]
    pub normalization: NormalizationRule,
    /// Reserved reproducibility switch: the pipeline itself is seed-free and
    /// deterministic; this flag additionally pins sweep execution to one job.
    #[serde(default = "default_true")]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub array: ArraySpec,
    pub focus: FocusSpec,
    pub focal_plane: FocalPlaneSpec,
    pub axial: AxialSpec,
    pub synthesis: SynthesisSpec,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl SynthesisConfig {
    pub fn exclusion_radius(&self) -> f64 {
        self.focal_plane.exclusion_radius.unwrap_or(self.synthesis.beamwidth_target)
    }

    pub fn eval_points_per_side(&self) -> usize {
        self.focal_plane
            .eval_points_per_side
            .unwrap_or(2 * self.focal_plane.points_per_side + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.array.nx == 0 || self.array.ny == 0 || !(self.array.spacing > 0.0) {
            return Err(SynthError::InvalidConfiguration("bad array specification".into()));
        }
        if self.focus.x != 0.0 || self.focus.y != 0.0 {
            return Err(SynthError::InvalidConfiguration(
                "focal point must lie on the array axis (x = y = 0)".into(),
            ));
        }
        if !(self.focus.z > 0.0) {
            return Err(SynthError::InvalidConfiguration("focal z must be positive".into()));
        }
        if self.focus.z < self.axial.z_min || self.focus.z > self.axial.z_max {
            return Err(SynthError::InvalidConfiguration(format!(
                "focal z = {} outside the axial span [{}, {}]",
                self.focus.z, self.axial.z_min, self.axial.z_max
            )));
        }
        let excl = self.exclusion_radius();
        if !(excl > 0.0) || excl >= self.focal_plane.extent / 2.0 {
            return Err(SynthError::InvalidConfiguration(format!(
                "exclusion radius {excl} must lie in (0, extent/2)"
            )));
        }
        if !(self.synthesis.epsilon > 0.0) {
            return Err(SynthError::InvalidConfiguration("epsilon must be positive".into()));
        }
        if self.synthesis.s_max == 0 {
            return Err(SynthError::InvalidConfiguration("s_max must be ≥ 1".into()));
        }
        self.solver.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub s_max_list: Vec<usize>,
    pub base: SynthesisConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub s_max: usize,
    pub active_count: usize,
    pub sparsity_pct: f64,
    pub sll_db: f64,
    pub beamwidth: Option<f64>,
    /// OMP + solve time for this point (the matrix is shared by the sweep).
    pub time_s: f64,
    pub status: String,
}

/// Shared experiment scaffolding: geometry, symmetry structure, constraint
/// grids/matrix, and the read-out grids.
pub struct Workspace {
    pub geometry: ArrayGeometry,
    pub maps: MirrorMaps,
    pub orbits: Vec<SymmetryOrbit>,
    pub quadrant: Vec<usize>,
    pub grids: SamplingGrids,
    pub eval_grids: SamplingGrids,
    pub matrix: PropagationMatrix,
    pub matrix_build_time: f64,
}

pub fn build_workspace(config: &SynthesisConfig) -> Result<Workspace> {
    config.validate()?;
    let geometry = build_grid_layout(config.array.nx, config.array.ny, config.array.spacing)?;
    let maps = mirror_maps(&geometry, DEFAULT_POSITION_TOL)?;
    let orbits = symmetry_orbits_from_maps(&geometry, &maps)?;
    let quadrant = first_quadrant_indices(&geometry);
    let grids = build_focal_plane_grid(
        config.focal_plane.extent,
        config.focal_plane.points_per_side,
        config.focus.z,
        config.exclusion_radius(),
    )?
    .with_axial(build_axial_grid(config.axial.z_min, config.axial.z_max, config.axial.count)?);
    let eval_grids = build_focal_plane_grid(
        config.focal_plane.extent,
        config.eval_points_per_side(),
        config.focus.z,
        config.exclusion_radius(),
    )?
    .with_axial(build_axial_grid(config.axial.z_min, config.axial.z_max, config.axial.count)?);

    let t0 = Instant::now();
    let matrix =
        build_propagation_matrix(&geometry, &grids.all_points(), config.array.pattern)?;
    let matrix_build_time = t0.elapsed().as_secs_f64();
    Ok(Workspace {
        geometry,
        maps,
        orbits,
        quadrant,
        grids,
        eval_grids,
        matrix,
        matrix_build_time,
    })
}

fn focal_row_view(ws: &Workspace) -> PropagationMatrix {
    let rows: Vec<usize> = (0..ws.grids.focal_plane.len()).collect();
    PropagationMatrix {
        entries: ws.matrix.entries.gather_rows(&rows),
        row_points: ws.matrix.row_points[..rows.len()].to_vec(),
        col_elements: ws.matrix.col_elements.clone(),
    }
}

/// Evaluate the read-out fields and metrics for a full-length weight vector.
#[allow(clippy::too_many_arguments)]
fn finish_result(
    ws: &Workspace,
    config: &SynthesisConfig,
    weights: Vec<Complex64>,
    mut timings: StageTimings,
    solve_status: SolveStatus,
    solve_iterations: usize,
    solve_objective: f64,
    omp_trace: Vec<f64>,
    active_set: Vec<usize>,
) -> Result<SynthesisResult> {
    let t0 = Instant::now();
    let focal_pts: Vec<_> = ws.eval_grids.focal_plane.iter().map(|t| t.point).collect();
    let focal_plane_field =
        evaluate_field_direct(&ws.geometry, &focal_pts, config.array.pattern, &weights)?;
    let axial_field =
        evaluate_field_direct(&ws.geometry, &ws.eval_grids.axial, config.array.pattern, &weights)?;
    timings.evaluate = t0.elapsed().as_secs_f64();
    timings.total = timings.matrix_build + timings.omp + timings.solve;

    let metrics: MetricSet = compute_metrics(
        &ws.geometry,
        config.array.pattern,
        &weights,
        &ws.eval_grids,
        &focal_plane_field,
        &axial_field,
        config.synthesis.normalization,
        timings.total,
    )?;
    Ok(SynthesisResult {
        geometry: ws.geometry.clone(),
        pattern: config.array.pattern,
        weights,
        grids: ws.eval_grids.clone(),
        focal_plane_field,
        axial_field,
        metrics,
        timings,
        solve_status,
        solve_iterations,
        solve_objective,
        omp_trace,
        active_set,
    })
}

/// OMP pre-selection followed by conic refinement; infeasible refinements
/// escalate s_max by 2 orbits per retry, up to 5 retries.
pub fn run_proposed(config: &SynthesisConfig) -> Result<SynthesisResult> {
    let ws = build_workspace(config)?;
    run_proposed_in(&ws, config)
}

pub fn run_proposed_in(ws: &Workspace, config: &SynthesisConfig) -> Result<SynthesisResult> {
    const ESCALATION_STEP: usize = 2;
    const ESCALATION_CAP: usize = 5;

    let focal_matrix = focal_row_view(ws);
    let target = build_target_field(&ws.grids);

    let mut timings = StageTimings { matrix_build: ws.matrix_build_time, ..Default::default() };
    let mut escalation: Vec<usize> = Vec::new();
    let mut last_active = 0usize;

    for attempt in 0..=ESCALATION_CAP {
        let s_max = config.synthesis.s_max + ESCALATION_STEP * attempt;
        escalation.push(s_max);
        let omp_cfg = OmpConfig {
            s_max,
            epsilon: config.synthesis.epsilon,
            ..Default::default()
        };
        let t0 = Instant::now();
        let omp: OmpState =
            omp_preselect(&focal_matrix, &target, &ws.orbits, &ws.quadrant, &omp_cfg)?;
        timings.omp += t0.elapsed().as_secs_f64();
        if omp.active_set.is_empty() {
            return Err(SynthError::InvalidConfiguration(
                "OMP selected no elements (epsilon exceeds the target norm)".into(),
            ));
        }
        if attempt > 0 && omp.active_set.len() <= last_active {
            return Err(SynthError::Infeasible(format!(
                "escalation stalled: active set stuck at {} elements (trace {:?})",
                omp.active_set.len(),
                escalation
            )));
        }
        last_active = omp.active_set.len();

        let t1 = Instant::now();
        match refine(
            &ws.matrix,
            &ws.grids,
            &omp,
            config.synthesis.rho_sl_db,
            &config.solver,
            Some(&ws.maps),
        ) {
            Ok(refined) => {
                timings.solve += t1.elapsed().as_secs_f64();
                if !refined.report.feasible {
                    // Not flagged infeasible outright, but the returned point
                    // misses the post-check: the active set is too small in
                    // practice, so escalate just the same.
                    log::info!(
                        "refinement at s_max = {s_max} missed the feasibility post-check; escalating"
                    );
                    continue;
                }
                return finish_result(
                    ws,
                    config,
                    refined.full_weights,
                    timings,
                    refined.report.status,
                    refined.report.iterations,
                    refined.report.objective,
                    omp.residual_trace.clone(),
                    omp.active_set.clone(),
                );
            }
            Err(SynthError::Infeasible(msg)) => {
                timings.solve += t1.elapsed().as_secs_f64();
                log::info!(
                    "refinement infeasible at s_max = {s_max} ({msg}); escalating"
                );
            }
            Err(other) => return Err(other),
        }
    }
    Err(SynthError::Infeasible(format!(
        "refinement stayed infeasible after escalation (s_max trace {:?}); raise rho_SL or s_max",
        escalation
    )))
}

/// The conventional method: one full-array conic solve, no pre-selection, no
/// symmetry.
pub fn run_baseline(config: &SynthesisConfig) -> Result<SynthesisResult> {
    let ws = build_workspace(config)?;
    run_baseline_in(&ws, config)
}

pub fn run_baseline_in(ws: &Workspace, config: &SynthesisConfig) -> Result<SynthesisResult> {
    let mut timings = StageTimings { matrix_build: ws.matrix_build_time, ..Default::default() };
    let t0 = Instant::now();
    let report = baseline_full_l1(&ws.matrix, &ws.grids, config.synthesis.rho_sl_db, &config.solver)?;
    timings.solve = t0.elapsed().as_secs_f64();
    if report.status == SolveStatus::Infeasible {
        return Err(SynthError::Infeasible(
            "baseline full-array problem reported infeasible".into(),
        ));
    }
    let weights = report.weights.clone();
    let active: Vec<usize> = (0..ws.geometry.len()).collect();
    finish_result(
        ws,
        config,
        weights,
        timings,
        report.status,
        report.iterations,
        report.objective,
        Vec::new(),
        active,
    )
}

fn sweep_point(ws: &Workspace, base: &SynthesisConfig, s_max: usize) -> SweepRow {
    let mut cfg = base.clone();
    cfg.synthesis.s_max = s_max;
    let t0 = Instant::now();
    match run_proposed_in(ws, &cfg) {
        Ok(res) => SweepRow {
            s_max,
            active_count: crate::metrics::active_count(
                &res.weights,
                crate::metrics::ACTIVITY_THRESHOLD,
            ),
            sparsity_pct: res.metrics.sparsity_pct,
            sll_db: res.metrics.sll_db,
            beamwidth: res.metrics.beamwidth,
            time_s: res.timings.omp + res.timings.solve,
            status: format!("{:?}", res.solve_status),
        },
        Err(e) => SweepRow {
            s_max,
            active_count: 0,
            sparsity_pct: f64::NAN,
            sll_db: f64::NAN,
            beamwidth: None,
            time_s: t0.elapsed().as_secs_f64(),
            status: format!("failed: {e}"),
        },
    }
}

/// Per-s_max proposed runs over a shared matrix; point failures are recorded
/// and the sweep continues. `jobs` bounds sweep concurrency; results are
/// identical for any job count (timings excepted), and configs with the
/// deterministic flag pin execution to one job.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<Vec<SweepRow>> {
    if spec.s_max_list.is_empty() {
        return Err(SynthError::InvalidArgument("sweep list is empty".into()));
    }
    if spec.s_max_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SynthError::InvalidArgument(
            "sweep s_max values must be strictly increasing".into(),
        ));
    }
    let mut jobs = jobs.max(1).min(spec.s_max_list.len());
    if spec.base.synthesis.deterministic && jobs > 1 {
        log::warn!("deterministic config pins the sweep to one job (requested {jobs})");
        jobs = 1;
    }
    let ws = build_workspace(&spec.base)?;
    if jobs == 1 {
        return Ok(spec
            .s_max_list
            .iter()
            .map(|&s| sweep_point(&ws, &spec.base, s))
            .collect());
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let rows: Vec<std::sync::Mutex<Option<SweepRow>>> =
        spec.s_max_list.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= spec.s_max_list.len() {
                    break;
                }
                let row = sweep_point(&ws, &spec.base, spec.s_max_list[i]);
                *rows[i].lock().unwrap() = Some(row);
            });
        }
    });
    Ok(rows.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect())
}

/// baseline synthesis time / proposed synthesis time, on matching configs.
pub fn speedup(proposed: &SynthesisResult, baseline: &SynthesisResult) -> Result<f64> {
    let same_array = proposed.geometry.nx == baseline.geometry.nx
        && proposed.geometry.ny == baseline.geometry.ny
        && proposed.geometry.spacing == baseline.geometry.spacing;
    let same_grids = proposed.grids.z0 == baseline.grids.z0
        && proposed.grids.focal_plane.len() == baseline.grids.focal_plane.len()
        && proposed.grids.axial.len() == baseline.grids.axial.len()
        && proposed.pattern == baseline.pattern;
    if !same_array || !same_grids {
        return Err(SynthError::InvalidComparison(
            "speedup requires identical array and grid configurations".into(),
        ));
    }
    if !(proposed.timings.total > 0.0) {
        return Err(SynthError::InvalidComparison("proposed run has zero synthesis time".into()));
    }
    Ok(baseline.timings.total / proposed.timings.total)
}

/// Re-score externally supplied weights on a config's evaluation grids
/// without synthesizing (drives `evaluate` in the CLI).
pub fn evaluate_weights(
    config: &SynthesisConfig,
    weights: Vec<Complex64>,
) -> Result<SynthesisResult> {
    config.validate()?;
    let geometry = build_grid_layout(config.array.nx, config.array.ny, config.array.spacing)?;
    if weights.len() != geometry.len() {
        return Err(SynthError::InvalidArgument(format!(
            "weights file has {} entries, array has {} elements",
            weights.len(),
            geometry.len()
        )));
    }
    let maps = mirror_maps(&geometry, DEFAULT_POSITION_TOL)?;
    let orbits = symmetry_orbits_from_maps(&geometry, &maps)?;
    let quadrant = first_quadrant_indices(&geometry);
    let grids = build_focal_plane_grid(
        config.focal_plane.extent,
        config.focal_plane.points_per_side,
        config.focus.z,
        config.exclusion_radius(),
    )?
    .with_axial(build_axial_grid(config.axial.z_min, config.axial.z_max, config.axial.count)?);
    let eval_grids = build_focal_plane_grid(
        config.focal_plane.extent,
        config.eval_points_per_side(),
        config.focus.z,
        config.exclusion_radius(),
    )?
    .with_axial(build_axial_grid(config.axial.z_min, config.axial.z_max, config.axial.count)?);
    let ws = Workspace {
        geometry,
        maps,
        orbits,
        quadrant,
        grids,
        eval_grids,
        // The evaluation path never touches the constraint matrix; an empty
        // one keeps Workspace uniform.
        matrix: PropagationMatrix {
            entries: crate::linalg::CMat::zeros(0, 0),
            row_points: Vec::new(),
            col_elements: Vec::new(),
        },
        matrix_build_time: 0.0,
    };
    let timings = StageTimings::default();
    let active: Vec<usize> = weights
        .iter()
        .enumerate()
        .filter(|(_, w)| w.norm() > 0.0)
        .map(|(i, _)| i)
        .collect();
    let objective = weights.iter().map(|z| z.norm()).sum();
    finish_result(
        &ws,
        config,
        weights,
        timings,
        SolveStatus::Optimal,
        0,
        objective,
        Vec::new(),
        active,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Small, fast configuration used across the pipeline tests.
    pub(crate) fn tiny_config() -> SynthesisConfig {
        SynthesisConfig {
            array: ArraySpec {
                nx: 5,
                ny: 5,
                spacing: 0.5,
                pattern: ElementPatternModel::YDipole,
            },
            focus: FocusSpec { x: 0.0, y: 0.0, z: 2.0 },
            focal_plane: FocalPlaneSpec {
                extent: 2.5,
                points_per_side: 11,
                exclusion_radius: None,
                eval_points_per_side: Some(23),
            },
            axial: AxialSpec { z_min: 0.5, z_max: 4.0, count: 15 },
            synthesis: SynthesisSpec {
                beamwidth_target: 0.6,
                rho_sl_db: -10.0,
                epsilon: 1e-3,
                s_max: 8,
                normalization: NormalizationRule::FocalContribution,
                deterministic: true,
            },
            solver: SolverConfig::default(),
        }
    }

    #[test]
    fn validation_catches_cross_field_errors() {
        let mut c = tiny_config();
        c.focus.z = 10.0; // outside the axial span
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.focal_plane.exclusion_radius = Some(2.0); // ≥ extent/2
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.focus.x = 0.5;
        assert!(c.validate().is_err());
        assert!(tiny_config().validate().is_ok());
    }

    #[test]
    fn proposed_run_is_reproducible_bitwise() {
        let cfg = tiny_config();
        let a = run_proposed(&cfg).unwrap();
        let b = run_proposed(&cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.metrics.sll_db, b.metrics.sll_db);
        assert_eq!(a.metrics.sparsity_pct, b.metrics.sparsity_pct);
        assert_eq!(a.metrics.beamwidth, b.metrics.beamwidth);
    }

    #[test]
    fn proposed_run_field_matches_weights() {
        let cfg = tiny_config();
        let res = run_proposed(&cfg).unwrap();
        assert_eq!(res.solve_status, SolveStatus::Optimal);
        // Stored fields are exactly the evaluation of the stored weights.
        let pts: Vec<_> = res.grids.focal_plane.iter().map(|t| t.point).collect();
        let again =
            evaluate_field_direct(&res.geometry, &pts, res.pattern, &res.weights).unwrap();
        assert_eq!(again, res.focal_plane_field);
        // Active set is orbit-closed.
        let maps = mirror_maps(&res.geometry, DEFAULT_POSITION_TOL).unwrap();
        assert!(maps.is_closed(&res.active_set));
    }

    #[test]
    fn baseline_objective_dominated_by_proposed() {
        let cfg = tiny_config();
        let ws = build_workspace(&cfg).unwrap();
        let prop = run_proposed_in(&ws, &cfg).unwrap();
        let base = run_baseline_in(&ws, &cfg).unwrap();
        // Slack covers the solver tolerance plus the bound back-off.
        assert!(base.solve_objective <= prop.solve_objective * (1.0 + 2e-4));
    }

    #[test]
    fn degenerate_single_element_run() {
        let mut cfg = tiny_config();
        cfg.array.nx = 1;
        cfg.array.ny = 1;
        cfg.array.pattern = ElementPatternModel::Isotropic;
        cfg.synthesis.rho_sl_db = 0.0;
        cfg.synthesis.s_max = 1;
        // Single element: the axial field is monotone, so the axial span must
        // start at the focus for the constraints to be satisfiable.
        cfg.axial = AxialSpec { z_min: 2.0, z_max: 4.0, count: 9 };
        let res = run_proposed(&cfg).unwrap();
        assert_eq!(res.active_set.len(), 1);
        assert!(res.metrics.sll_db < 0.0);
        assert!(res.metrics.sll_db > -1.0, "single element barely focuses: {}", res.metrics.sll_db);
        assert!(res.metrics.beamwidth.is_none(), "one element has no 3 dB width inside the grid");
    }

    #[test]
    fn escalation_recovers_from_sparse_start() {
        // s_max = 1 selects only the origin element, which cannot meet −10 dB;
        // escalation must grow the active set until the solve is feasible.
        let mut cfg = tiny_config();
        cfg.synthesis.s_max = 1;
        let res = run_proposed(&cfg).unwrap();
        assert!(res.active_set.len() > 1, "escalation should have grown the active set");
        assert_eq!(res.solve_status, SolveStatus::Optimal);
    }

    #[test]
    fn sweep_single_point_matches_run_proposed() {
        let cfg = tiny_config();
        let spec = SweepSpec { s_max_list: vec![cfg.synthesis.s_max], base: cfg.clone() };
        let rows = run_sweep(&spec, 1).unwrap();
        assert_eq!(rows.len(), 1);
        let direct = run_proposed(&cfg).unwrap();
        assert_eq!(rows[0].sll_db, direct.metrics.sll_db);
        assert_eq!(rows[0].sparsity_pct, direct.metrics.sparsity_pct);
        assert!(rows[0].status.contains("Optimal"));
    }

    #[test]
    fn sweep_validates_input_and_survives_failures() {
        let cfg = tiny_config();
        assert!(run_sweep(&SweepSpec { s_max_list: vec![], base: cfg.clone() }, 1).is_err());
        assert!(run_sweep(&SweepSpec { s_max_list: vec![3, 3], base: cfg.clone() }, 1).is_err());
        // An infeasible point (−60 dB at tiny s_max cannot escalate far enough
        // on a 5×5 array) is recorded, not fatal.
        let mut hard = cfg.clone();
        hard.synthesis.rho_sl_db = -60.0;
        let rows = run_sweep(&SweepSpec { s_max_list: vec![1, 2], base: hard }, 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().any(|r| r.status.starts_with("failed")));
    }

    #[test]
    fn speedup_checks_configs() {
        let cfg = tiny_config();
        let ws = build_workspace(&cfg).unwrap();
        let prop = run_proposed_in(&ws, &cfg).unwrap();
        let base = run_baseline_in(&ws, &cfg).unwrap();
        let s = speedup(&prop, &base).unwrap();
        assert!(s > 0.0);
        assert_relative_eq!(s, base.timings.total / prop.timings.total);
        // Identical runs → ratio 1 (same timings object).
        assert_relative_eq!(speedup(&prop, &prop).unwrap(), 1.0);

        let mut other = tiny_config();
        other.array.nx = 7;
        let ws2 = build_workspace(&other).unwrap();
        let prop2 = run_proposed_in(&ws2, &other).unwrap();
        assert!(matches!(speedup(&prop2, &base), Err(SynthError::InvalidComparison(_))));
    }

    #[test]
    fn evaluate_weights_round_trips_metrics() {
        let cfg = tiny_config();
        let res = run_proposed(&cfg).unwrap();
        let again = evaluate_weights(&cfg, res.weights.clone()).unwrap();
        assert_eq!(again.metrics.sll_db, res.metrics.sll_db);
        assert_eq!(again.metrics.beamwidth, res.metrics.beamwidth);
        assert_eq!(again.metrics.sparsity_pct, res.metrics.sparsity_pct);
        assert_eq!(again.metrics.peak_field, res.metrics.peak_field);
        assert_eq!(again.metrics.focal_shift, res.metrics.focal_shift);
        // Size mismatch is rejected.
        assert!(evaluate_weights(&cfg, vec![Complex64::new(1.0, 0.0); 3]).is_err());
    }
}
