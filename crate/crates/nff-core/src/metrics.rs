//! Metric extraction: sparsity, 3 dB beamwidth, sidelobe level, focal shift,
//! peak field, and the synthesized-result container.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conic::SolveStatus;
use crate::error::{Result, SynthError};
use crate::field::{element_pattern, ElementPatternModel, SamplingGrids};
use crate::geometry::ArrayGeometry;

/// Relative amplitude below which an element counts as inactive.
pub const ACTIVITY_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationRule {
    /// Scale so Σ|w_q| = N_active (unit average excitation amplitude).
    SumAmplitude,
    /// Scale so the mean per-element field-magnitude contribution at the
    /// focal sample is 1: Σ|w_q|·|A(focal, q)| = N_active. This matches the
    /// order of magnitude of the paper's |E_p| column.
    FocalContribution,
}

impl Default for NormalizationRule {
    fn default() -> Self {
        NormalizationRule::FocalContribution
    }
}

#[derive(Debug, Clone, Copy)]
pub enum CutAxis {
    X,
    Y,
}

/// Table-style metric summary. `beamwidth` and `focal_shift` are `None` when
/// the corresponding metric is undefined for the solution (e.g. a single
/// element never crosses its own −3 dB level inside the grid).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricSet {
    #[serde(rename = "S(%)")]
    pub sparsity_pct: f64,
    #[serde(rename = "BW/lambda")]
    pub beamwidth: Option<f64>,
    #[serde(rename = "SLL(dB)")]
    pub sll_db: f64,
    #[serde(rename = "|Ep|")]
    pub peak_field: f64,
    #[serde(rename = "|Ep|_raw")]
    pub peak_field_raw: f64,
    #[serde(rename = "dz/lambda")]
    pub focal_shift: Option<f64>,
    /// Synthesis wall time; carried in the manifest, not in metrics.json.
    #[serde(skip)]
    pub runtime: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub matrix_build: f64,
    pub omp: f64,
    pub solve: f64,
    pub evaluate: f64,
    /// matrix_build + omp + solve (synthesis only; evaluation is reporting).
    pub total: f64,
}

/// A synthesized (or re-evaluated) solution with its fields and metrics.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub geometry: ArrayGeometry,
    pub pattern: ElementPatternModel,
    /// Full-length weights; zeros outside the active set.
    pub weights: Vec<Complex64>,
    /// Evaluation grids the stored fields were computed on.
    pub grids: SamplingGrids,
    pub focal_plane_field: Vec<Complex64>,
    pub axial_field: Vec<Complex64>,
    pub metrics: MetricSet,
    pub timings: StageTimings,
    pub solve_status: SolveStatus,
    pub solve_iterations: usize,
    pub solve_objective: f64,
    pub omp_trace: Vec<f64>,
    pub active_set: Vec<usize>,
}

/// 100 · count(|w| > threshold·max|w|) / N.
pub fn sparsity(weights: &[Complex64], amplitude_threshold: f64) -> Result<f64> {
    let max = weights.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return Err(SynthError::UndefinedMetric("sparsity of an all-zero weight vector".into()));
    }
    let n_active = weights.iter().filter(|z| z.norm() > amplitude_threshold * max).count();
    Ok(100.0 * n_active as f64 / weights.len() as f64)
}

pub fn active_count(weights: &[Complex64], amplitude_threshold: f64) -> usize {
    let max = weights.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    weights.iter().filter(|z| z.norm() > amplitude_threshold * max).count()
}

fn bits(v: f64) -> u64 {
    (if v == 0.0 { 0.0 } else { v }).to_bits()
}

/// |E| along the axis cut through (0, 0, z0), sorted by the cut coordinate.
///
/// If the lattice lacks a row on the axis (even per-side counts), the two
/// bracketing rows are blended linearly; the focal sample itself provides the
/// exact value at the origin.
fn axis_cut(
    field: &[Complex64],
    grids: &SamplingGrids,
    axis: CutAxis,
) -> Result<Vec<(f64, f64)>> {
    if field.len() != grids.focal_plane.len() {
        return Err(SynthError::DimensionMismatch(format!(
            "focal-plane field has {} entries, grid has {}",
            field.len(),
            grids.focal_plane.len()
        )));
    }
    let coord = |p: &crate::geometry::Point3| match axis {
        CutAxis::X => (p.x, p.y),
        CutAxis::Y => (p.y, p.x),
    };
    // Perpendicular offsets present in the lattice; the appended focal
    // sample is not a lattice row and must not narrow the bracket.
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    for (i, t) in grids.focal_plane.iter().enumerate() {
        if i == grids.focal_index {
            continue;
        }
        let (_, perp) = coord(&t.point);
        if perp <= 0.0 && lo.map_or(true, |v| perp > v) {
            lo = Some(perp);
        }
        if perp >= 0.0 && hi.map_or(true, |v| perp < v) {
            hi = Some(perp);
        }
    }
    let (lo, hi) = match (lo, hi) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(SynthError::MetricOutOfRange(
                "cut axis is not bracketed by the focal-plane grid".into(),
            ))
        }
    };
    let mut row_lo: std::collections::BTreeMap<u64, (f64, f64)> = Default::default();
    let mut row_hi: std::collections::BTreeMap<u64, (f64, f64)> = Default::default();
    for (i, t) in grids.focal_plane.iter().enumerate() {
        if i == grids.focal_index {
            continue;
        }
        let (along, perp) = coord(&t.point);
        let mag = field[i].norm();
        if perp == lo {
            row_lo.insert(bits(along), (along, mag));
        }
        if perp == hi {
            row_hi.insert(bits(along), (along, mag));
        }
    }
    let t = if hi > lo { (0.0 - lo) / (hi - lo) } else { 0.0 };
    let mut cut: Vec<(f64, f64)> = Vec::new();
    for (k, &(along, mag_lo)) in &row_lo {
        if let Some(&(_, mag_hi)) = row_hi.get(k) {
            cut.push((along, (1.0 - t) * mag_lo + t * mag_hi));
        }
    }
    // Exact focal sample at the origin.
    let focal_mag = field[grids.focal_index].norm();
    cut.retain(|&(x, _)| x != 0.0);
    cut.push((0.0, focal_mag));
    cut.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(cut)
}

/// Width of the |E| ≥ peak/√2 interval along the cut, endpoints from linear
/// interpolation.
pub fn beamwidth_3db(
    focal_plane_field: &[Complex64],
    grids: &SamplingGrids,
    axis: CutAxis,
) -> Result<f64> {
    let cut = axis_cut(focal_plane_field, grids, axis)?;
    let center = cut
        .iter()
        .position(|&(x, _)| x == 0.0)
        .ok_or_else(|| SynthError::MetricOutOfRange("cut misses the focal sample".into()))?;
    let peak = cut[center].1;
    if !(peak > 0.0) {
        return Err(SynthError::UndefinedMetric("zero field at the focal sample".into()));
    }
    if cut.iter().any(|&(_, v)| v > peak * (1.0 + 1e-9)) {
        return Err(SynthError::MetricOutOfRange(
            "focal sample is not the maximum along the cut".into(),
        ));
    }
    let level = peak / 2f64.sqrt();
    let crossing = |mut idx: usize, step: isize| -> Option<f64> {
        loop {
            let next = idx as isize + step;
            if next < 0 || next as usize >= cut.len() {
                return None;
            }
            let (x0, v0) = cut[idx];
            let (x1, v1) = cut[next as usize];
            if v1 < level {
                // linear interpolation between (x0, v0) and (x1, v1)
                let f = (v0 - level) / (v0 - v1);
                return Some(x0 + f * (x1 - x0));
            }
            idx = next as usize;
        }
    };
    let right = crossing(center, 1).ok_or_else(|| {
        SynthError::MetricOutOfRange("3 dB level not crossed within the grid (+)".into())
    })?;
    let left = crossing(center, -1).ok_or_else(|| {
        SynthError::MetricOutOfRange("3 dB level not crossed within the grid (−)".into())
    })?;
    Ok(right - left)
}

/// 20·log10(max sidelobe |E| / focal |E|).
pub fn sidelobe_level(focal_plane_field: &[Complex64], grids: &SamplingGrids) -> Result<f64> {
    if focal_plane_field.len() != grids.focal_plane.len() {
        return Err(SynthError::DimensionMismatch(format!(
            "focal-plane field has {} entries, grid has {}",
            focal_plane_field.len(),
            grids.focal_plane.len()
        )));
    }
    let sl = grids.sidelobe_indices();
    if sl.is_empty() {
        return Err(SynthError::UndefinedMetric("no sidelobe-tagged samples".into()));
    }
    let focal = focal_plane_field[grids.focal_index].norm();
    if !(focal > 0.0) {
        return Err(SynthError::UndefinedMetric("zero field at the focal sample".into()));
    }
    let max_sl = sl.iter().map(|&i| focal_plane_field[i].norm()).fold(0.0, f64::max);
    Ok(20.0 * (max_sl / focal).log10())
}

/// Parabolic-refined axial peak: (refined z, refined |E|).
fn axial_peak(axial_field: &[Complex64], grids: &SamplingGrids) -> Result<(f64, f64, bool)> {
    if axial_field.len() != grids.axial.len() {
        return Err(SynthError::DimensionMismatch(format!(
            "axial field has {} entries, grid has {}",
            axial_field.len(),
            grids.axial.len()
        )));
    }
    if grids.axial.len() < 2 {
        return Err(SynthError::UndefinedMetric("axial grid too small".into()));
    }
    let mags: Vec<f64> = axial_field.iter().map(|z| z.norm()).collect();
    let (imax, &peak) = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    if imax == 0 || imax == mags.len() - 1 {
        // Peak at grid boundary: not bracketed, no refinement possible.
        return Ok((grids.axial[imax].z, peak, false));
    }
    let (ym, y0, yp) = (mags[imax - 1], mags[imax], mags[imax + 1]);
    let denom = ym - 2.0 * y0 + yp;
    let h = grids.axial[imax + 1].z - grids.axial[imax].z;
    if denom >= 0.0 {
        return Ok((grids.axial[imax].z, peak, true));
    }
    let delta = 0.5 * (ym - yp) / denom;
    let z = grids.axial[imax].z + delta * h;
    let v = y0 - 0.25 * (ym - yp) * delta;
    Ok((z, v, true))
}

/// |argmax_z |E(0,0,z)| − z0| with 3-point parabolic refinement.
pub fn focal_shift(axial_field: &[Complex64], grids: &SamplingGrids, z0: f64) -> Result<f64> {
    let zspan = (grids.axial.first().map(|p| p.z), grids.axial.last().map(|p| p.z));
    if let (Some(a), Some(b)) = zspan {
        if z0 < a || z0 > b {
            return Err(SynthError::InvalidArgument(format!(
                "axial grid [{a}, {b}] does not span z0 = {z0}"
            )));
        }
    }
    let (z, _, bracketed) = axial_peak(axial_field, grids)?;
    if !bracketed {
        return Err(SynthError::MetricOutOfRange(format!(
            "axial peak at the grid boundary z = {z}; shift not bracketed"
        )));
    }
    Ok((z - z0).abs())
}

/// Per-element focal-row magnitude, pattern/distance.
fn focal_row_magnitudes(
    geometry: &ArrayGeometry,
    grids: &SamplingGrids,
    pattern: ElementPatternModel,
) -> Result<Vec<f64>> {
    let focal = grids.focal_point();
    geometry
        .positions
        .iter()
        .map(|el| Ok(element_pattern(pattern, *el, focal)? / el.distance(&focal)))
        .collect()
}

/// Peak |E| on the axis after rescaling the weights by the normalization
/// rule. Returns (normalized, raw).
pub fn peak_field(result: &SynthesisResult, rule: NormalizationRule) -> Result<(f64, f64)> {
    peak_field_parts(
        &result.geometry,
        result.pattern,
        &result.weights,
        &result.grids,
        &result.axial_field,
        rule,
    )
}

pub fn peak_field_parts(
    geometry: &ArrayGeometry,
    pattern: ElementPatternModel,
    weights: &[Complex64],
    grids: &SamplingGrids,
    axial_field: &[Complex64],
    rule: NormalizationRule,
) -> Result<(f64, f64)> {
    let n_active = active_count(weights, ACTIVITY_THRESHOLD);
    if n_active == 0 {
        return Err(SynthError::UndefinedMetric("peak field of all-zero weights".into()));
    }
    let (_, raw_peak, _) = axial_peak(axial_field, grids)?;
    let scale = match rule {
        NormalizationRule::SumAmplitude => {
            let sum: f64 = weights.iter().map(|z| z.norm()).sum();
            n_active as f64 / sum
        }
        NormalizationRule::FocalContribution => {
            let row = focal_row_magnitudes(geometry, grids, pattern)?;
            let sum: f64 = weights.iter().zip(&row).map(|(w, a)| w.norm() * a).sum();
            n_active as f64 / sum
        }
    };
    Ok((raw_peak * scale, raw_peak))
}

/// Assemble the full metric set; beamwidth/focal-shift failures degrade to
/// `None` (degenerate solutions), everything else propagates.
#[allow(clippy::too_many_arguments)]
pub fn compute_metrics(
    geometry: &ArrayGeometry,
    pattern: ElementPatternModel,
    weights: &[Complex64],
    grids: &SamplingGrids,
    focal_plane_field: &[Complex64],
    axial_field: &[Complex64],
    rule: NormalizationRule,
    runtime: f64,
) -> Result<MetricSet> {
    let s = sparsity(weights, ACTIVITY_THRESHOLD)?;
    let sll = sidelobe_level(focal_plane_field, grids)?;
    let bw = beamwidth_3db(focal_plane_field, grids, CutAxis::X).ok();
    let dz = focal_shift(axial_field, grids, grids.z0).ok();
    let (ep, ep_raw) =
        peak_field_parts(geometry, pattern, weights, grids, axial_field, rule)?;
    Ok(MetricSet {
        sparsity_pct: s,
        beamwidth: bw,
        sll_db: sll,
        peak_field: ep,
        peak_field_raw: ep_raw,
        focal_shift: dz,
        runtime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_axial_grid, build_focal_plane_grid};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sparsity_table_values() {
        // 55 of 121 → 45.5% (Table-class value), 79 of 441 → 17.9%.
        let mut w = vec![c(0.0, 0.0); 121];
        for v in w.iter_mut().take(55) {
            *v = c(0.3, -0.1);
        }
        let s = sparsity(&w, ACTIVITY_THRESHOLD).unwrap();
        assert_relative_eq!(s, 100.0 * 55.0 / 121.0, epsilon = 1e-12);
        assert_relative_eq!(s, 45.5, epsilon = 0.05);

        let mut w = vec![c(0.0, 0.0); 441];
        for v in w.iter_mut().take(79) {
            *v = c(0.0, 1.0);
        }
        let s = sparsity(&w, ACTIVITY_THRESHOLD).unwrap();
        assert_relative_eq!(s, 100.0 * 79.0 / 441.0, epsilon = 1e-12);
        assert_relative_eq!(s, 17.9, epsilon = 0.05);

        let w = vec![c(1.0, 0.0); 10];
        assert_relative_eq!(sparsity(&w, ACTIVITY_THRESHOLD).unwrap(), 100.0);

        assert!(sparsity(&vec![c(0.0, 0.0); 4], ACTIVITY_THRESHOLD).is_err());
    }

    #[test]
    fn sparsity_is_scale_invariant() {
        let w: Vec<Complex64> = (0..50)
            .map(|i| if i % 3 == 0 { c(0.0, 0.0) } else { c(i as f64, -1.0) })
            .collect();
        let a = sparsity(&w, ACTIVITY_THRESHOLD).unwrap();
        let scaled: Vec<Complex64> = w.iter().map(|z| z * 731.0).collect();
        let b = sparsity(&scaled, ACTIVITY_THRESHOLD).unwrap();
        assert_eq!(a, b);
    }

    fn gaussian_grids(points_per_side: usize) -> SamplingGrids {
        build_focal_plane_grid(4.0, points_per_side, 5.0, 0.9)
            .unwrap()
            .with_axial(build_axial_grid(1.0, 9.0, 81).unwrap())
    }

    #[test]
    fn beamwidth_of_gaussian_matches_closed_form() {
        // |E| = exp(−r²/(2σ²)) has 3 dB full width 2σ√(ln 2).
        let sigma = 0.7;
        for pps in [41usize, 40] {
            let grids = gaussian_grids(pps);
            let field: Vec<Complex64> = grids
                .focal_plane
                .iter()
                .map(|t| {
                    let r2 = t.point.x * t.point.x + t.point.y * t.point.y;
                    c((-r2 / (2.0 * sigma * sigma)).exp(), 0.0)
                })
                .collect();
            let bw = beamwidth_3db(&field, &grids, CutAxis::X).unwrap();
            let want = 2.0 * sigma * (2f64.ln()).sqrt();
            assert_relative_eq!(bw, want, max_relative = 5e-3);
            let bw_y = beamwidth_3db(&field, &grids, CutAxis::Y).unwrap();
            assert_relative_eq!(bw_y, want, max_relative = 5e-3);
        }
    }

    #[test]
    fn beamwidth_rejects_flat_field() {
        let grids = gaussian_grids(21);
        let field = vec![c(1.0, 0.0); grids.focal_plane.len()];
        assert!(matches!(
            beamwidth_3db(&field, &grids, CutAxis::X),
            Err(SynthError::MetricOutOfRange(_))
        ));
    }

    #[test]
    fn sidelobe_level_synthetic() {
        let grids = gaussian_grids(21);
        let mut field = vec![c(0.0, 0.0); grids.focal_plane.len()];
        field[grids.focal_index] = c(1.0, 0.0);
        let sl = grids.sidelobe_indices();
        field[sl[3]] = c(0.0, 0.1);
        let v = sidelobe_level(&field, &grids).unwrap();
        assert_relative_eq!(v, -20.0, epsilon = 1e-12);
    }

    #[test]
    fn focal_shift_synthetic() {
        let grids = gaussian_grids(21);
        // Peak exactly at z0 → shift 0 (sampled at z0 thanks to odd spacing).
        let field: Vec<Complex64> = grids
            .axial
            .iter()
            .map(|p| c((-(p.z - 5.0) * (p.z - 5.0)).exp(), 0.0))
            .collect();
        let dz = focal_shift(&field, &grids, 5.0).unwrap();
        assert!(dz < 1e-9, "dz = {dz}");

        // Sub-sample offset recovered by the parabola (grid step 0.1).
        let z_peak = 5.03;
        let field: Vec<Complex64> = grids
            .axial
            .iter()
            .map(|p| c((-(p.z - z_peak) * (p.z - z_peak) / 0.5).exp(), 0.0))
            .collect();
        let dz = focal_shift(&field, &grids, 5.0).unwrap();
        assert_relative_eq!(dz, 0.03, epsilon = 2e-3);

        // Monotone field peaks at the boundary → flagged.
        let field: Vec<Complex64> = grids.axial.iter().map(|p| c(1.0 / p.z, 0.0)).collect();
        assert!(matches!(
            focal_shift(&field, &grids, 5.0),
            Err(SynthError::MetricOutOfRange(_))
        ));
    }

    #[test]
    fn peak_field_single_element_and_invariances() {
        use crate::field::{build_propagation_matrix, evaluate_field};
        let geometry = crate::geometry::build_grid_layout(1, 1, 0.5).unwrap();
        // Axial grid starting at the focus: the monotone 1/R field peaks at the
        // first sample, giving exactly 1/R under unit weight.
        let grids = build_focal_plane_grid(2.0, 5, 2.0, 0.5)
            .unwrap()
            .with_axial(build_axial_grid(2.0, 4.0, 9).unwrap());
        let m = build_propagation_matrix(
            &geometry,
            &grids.axial,
            ElementPatternModel::Isotropic,
        )
        .unwrap();
        let w = vec![c(1.0, 0.0)];
        let axial_field = evaluate_field(&m, &w).unwrap();
        let (ep, raw) = peak_field_parts(
            &geometry,
            ElementPatternModel::Isotropic,
            &w,
            &grids,
            &axial_field,
            NormalizationRule::SumAmplitude,
        )
        .unwrap();
        assert_relative_eq!(raw, 0.5, epsilon = 1e-12);
        assert_relative_eq!(ep, 0.5, epsilon = 1e-12);

        // Doubling the weights changes nothing after normalization.
        let w2 = vec![c(2.0, 0.0)];
        let axial2 = evaluate_field(&m, &w2).unwrap();
        let (ep2, _) = peak_field_parts(
            &geometry,
            ElementPatternModel::Isotropic,
            &w2,
            &grids,
            &axial2,
            NormalizationRule::SumAmplitude,
        )
        .unwrap();
        assert_relative_eq!(ep, ep2, epsilon = 1e-12);

        // Global phase rotation changes nothing.
        let w3 = vec![Complex64::from_polar(1.0, 1.234)];
        let axial3 = evaluate_field(&m, &w3).unwrap();
        let (ep3, _) = peak_field_parts(
            &geometry,
            ElementPatternModel::Isotropic,
            &w3,
            &grids,
            &axial3,
            NormalizationRule::SumAmplitude,
        )
        .unwrap();
        assert_relative_eq!(ep, ep3, epsilon = 1e-12);

        assert!(peak_field_parts(
            &geometry,
            ElementPatternModel::Isotropic,
            &[c(0.0, 0.0)],
            &grids,
            &axial_field,
            NormalizationRule::SumAmplitude,
        )
        .is_err());
    }
}
