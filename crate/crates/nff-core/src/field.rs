//! Sampling grids, element pattern, the near-field propagation matrix, and
//! field evaluation.
//!
//! The kernel is f(r)·exp(−j·k·R)/R with k = 2π and R the element-to-point
//! distance; every matrix entry carries both the spreading factor and the
//! element pattern.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynthError};
use crate::geometry::{ArrayGeometry, Point3};
use crate::linalg::{cdot_plain, CMat, CVec};

/// Distance below which element and observation point count as coincident.
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementPatternModel {
    Isotropic,
    YDipole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointTag {
    Mainlobe,
    Sidelobe,
}

#[derive(Debug, Clone, Copy)]
pub struct TaggedPoint {
    pub point: Point3,
    pub tag: PointTag,
}

/// Focal-plane samples (tagged mainlobe/sidelobe), axial samples, and the
/// location of the focal sample itself.
#[derive(Debug, Clone)]
pub struct SamplingGrids {
    pub focal_plane: Vec<TaggedPoint>,
    pub axial: Vec<Point3>,
    /// Index of the (0, 0, z0) sample within `focal_plane`.
    pub focal_index: usize,
    pub z0: f64,
    pub exclusion_radius: f64,
}

impl SamplingGrids {
    pub fn focal_point(&self) -> Point3 {
        self.focal_plane[self.focal_index].point
    }

    /// Focal-plane points followed by axial points; the row layout used by
    /// the propagation matrix throughout the pipeline.
    pub fn all_points(&self) -> Vec<Point3> {
        let mut pts: Vec<Point3> = self.focal_plane.iter().map(|t| t.point).collect();
        pts.extend(self.axial.iter().copied());
        pts
    }

    /// Indices of sidelobe-tagged samples within `focal_plane`.
    pub fn sidelobe_indices(&self) -> Vec<usize> {
        self.focal_plane
            .iter()
            .enumerate()
            .filter(|(_, t)| t.tag == PointTag::Sidelobe)
            .map(|(i, _)| i)
            .collect()
    }

    /// Row offset of the first axial point in `all_points`.
    pub fn axial_row_offset(&self) -> usize {
        self.focal_plane.len()
    }

    pub fn with_axial(mut self, axial: Vec<Point3>) -> Self {
        self.axial = axial;
        self
    }
}

/// Values t·step with integer t symmetric about 0, so v[i] == −v[count−1−i]
/// exactly.
fn symmetric_linspace(extent: f64, count: usize) -> Vec<f64> {
    let half_step = extent / (2.0 * (count as f64 - 1.0));
    (0..count)
        .map(|i| ((2 * i as i64 - (count as i64 - 1)) as f64) * half_step)
        .collect()
}

/// Uniform points_per_side² lattice at z = z0 spanning
/// [−side_extent/2, side_extent/2]², tagged by the mainlobe exclusion radius,
/// with the exact focal sample appended when the lattice misses it.
pub fn build_focal_plane_grid(
    side_extent: f64,
    points_per_side: usize,
    z0: f64,
    exclusion_radius: f64,
) -> Result<SamplingGrids> {
    if points_per_side < 2 {
        return Err(SynthError::InvalidArgument(format!(
            "points_per_side must be ≥ 2, got {points_per_side}"
        )));
    }
    if !(side_extent > 0.0 && side_extent.is_finite()) {
        return Err(SynthError::InvalidArgument(format!(
            "side_extent must be positive, got {side_extent}"
        )));
    }
    if !(z0 > 0.0 && z0.is_finite()) {
        return Err(SynthError::InvalidArgument(format!("z0 must be positive, got {z0}")));
    }
    if !(exclusion_radius > 0.0) || exclusion_radius >= side_extent / 2.0 {
        return Err(SynthError::InvalidConfiguration(format!(
            "exclusion radius {exclusion_radius} must lie in (0, extent/2 = {}) or no sidelobe \
             samples remain",
            side_extent / 2.0
        )));
    }

    let axis = symmetric_linspace(side_extent, points_per_side);
    let mut focal_plane = Vec::with_capacity(points_per_side * points_per_side + 1);
    let mut focal_index = None;
    for &y in &axis {
        for &x in &axis {
            let r = (x * x + y * y).sqrt();
            let tag = if r < exclusion_radius { PointTag::Mainlobe } else { PointTag::Sidelobe };
            if x == 0.0 && y == 0.0 {
                focal_index = Some(focal_plane.len());
            }
            focal_plane.push(TaggedPoint { point: Point3::new(x, y, z0), tag });
        }
    }
    let focal_index = match focal_index {
        Some(i) => i,
        None => {
            focal_plane.push(TaggedPoint {
                point: Point3::new(0.0, 0.0, z0),
                tag: PointTag::Mainlobe,
            });
            focal_plane.len() - 1
        }
    };
    Ok(SamplingGrids { focal_plane, axial: Vec::new(), focal_index, z0, exclusion_radius })
}

/// Uniform on-axis samples (0, 0, z), inclusive endpoints.
pub fn build_axial_grid(z_min: f64, z_max: f64, count: usize) -> Result<Vec<Point3>> {
    if !(z_min > 0.0) {
        return Err(SynthError::InvalidArgument(format!(
            "z_min must be positive (kernel singular at the element plane), got {z_min}"
        )));
    }
    if !(z_min < z_max) {
        return Err(SynthError::InvalidArgument(format!(
            "need z_min < z_max, got [{z_min}, {z_max}]"
        )));
    }
    if count < 2 {
        return Err(SynthError::InvalidArgument(format!("axial count must be ≥ 2, got {count}")));
    }
    Ok((0..count)
        .map(|i| {
            let t = i as f64 / (count as f64 - 1.0);
            Point3::new(0.0, 0.0, z_min + t * (z_max - z_min))
        })
        .collect())
}

/// Copolarized element pattern toward an observation point, in [0, 1].
pub fn element_pattern(
    model: ElementPatternModel,
    element_pos: Point3,
    obs_pos: Point3,
) -> Result<f64> {
    let d = element_pos.distance(&obs_pos);
    if d <= SINGULAR_TOL {
        return Err(SynthError::SingularGeometry(format!(
            "observation point ({}, {}, {}) coincides with element at ({}, {}, {})",
            obs_pos.x, obs_pos.y, obs_pos.z, element_pos.x, element_pos.y, element_pos.z
        )));
    }
    Ok(match model {
        ElementPatternModel::Isotropic => 1.0,
        ElementPatternModel::YDipole => {
            let uy = (obs_pos.y - element_pos.y) / d;
            (1.0 - uy * uy).max(0.0).sqrt()
        }
    })
}

/// Complex near-field transfer matrix from element weights to sampled field.
#[derive(Debug, Clone)]
pub struct PropagationMatrix {
    pub entries: CMat,
    pub row_points: Vec<Point3>,
    pub col_elements: Vec<usize>,
}

impl PropagationMatrix {
    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }
}

fn kernel(model: ElementPatternModel, element: Point3, obs: Point3) -> Result<Complex64> {
    let d = element.distance(&obs);
    if d <= SINGULAR_TOL {
        return Err(SynthError::SingularGeometry(format!(
            "observation point ({}, {}, {}) coincides with element at ({}, {}, {})",
            obs.x, obs.y, obs.z, element.x, element.y, element.z
        )));
    }
    let f = element_pattern(model, element, obs)?;
    let (s, c) = (TAU * d).sin_cos();
    // exp(−j·k·d)/d scaled by the pattern
    Ok(Complex64::new(c * f / d, -s * f / d))
}

/// Entry (p, q) = f_q(r_p)·exp(−j·k·|r_p − r_q|)/|r_p − r_q|, k = 2π.
pub fn build_propagation_matrix(
    geometry: &ArrayGeometry,
    points: &[Point3],
    model: ElementPatternModel,
) -> Result<PropagationMatrix> {
    let m = points.len();
    let n = geometry.len();
    let mut entries = CMat::zeros(m, n);
    for (i, p) in points.iter().enumerate() {
        for (q, el) in geometry.positions.iter().enumerate() {
            entries.set(i, q, kernel(model, *el, *p)?);
        }
    }
    Ok(PropagationMatrix {
        entries,
        row_points: points.to_vec(),
        col_elements: (0..n).collect(),
    })
}

/// field = matrix · weights.
pub fn evaluate_field(matrix: &PropagationMatrix, weights: &[Complex64]) -> Result<Vec<Complex64>> {
    if weights.len() != matrix.cols() {
        return Err(SynthError::DimensionMismatch(format!(
            "weight vector has {} entries, matrix has {} columns",
            weights.len(),
            matrix.cols()
        )));
    }
    let x = CVec::from_complex(weights);
    let mut out = CVec::zeros(matrix.rows());
    matrix.entries.matvec(&x, &mut out);
    Ok(out.to_complex())
}

/// Field at arbitrary points without materializing the matrix. Each point's
/// sum runs in the same element order and accumulation pattern as
/// [`evaluate_field`], so the two paths agree bit for bit.
pub fn evaluate_field_direct(
    geometry: &ArrayGeometry,
    points: &[Point3],
    model: ElementPatternModel,
    weights: &[Complex64],
) -> Result<Vec<Complex64>> {
    if weights.len() != geometry.len() {
        return Err(SynthError::DimensionMismatch(format!(
            "weight vector has {} entries, geometry has {} elements",
            weights.len(),
            geometry.len()
        )));
    }
    let n = geometry.len();
    let w = CVec::from_complex(weights);
    let mut row_re = vec![0.0; n];
    let mut row_im = vec![0.0; n];
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        for (q, el) in geometry.positions.iter().enumerate() {
            let v = kernel(model, *el, *p)?;
            row_re[q] = v.re;
            row_im[q] = v.im;
        }
        let (re, im) = cdot_plain(&row_re, &row_im, &w.re, &w.im);
        out.push(Complex64::new(re, im));
    }
    Ok(out)
}

/// OMP target: unit impulse at the focal sample over the focal-plane grid.
pub fn build_target_field(grids: &SamplingGrids) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); grids.focal_plane.len()];
    y[grids.focal_index] = Complex64::new(1.0, 0.0);
    y
}
