//! Planar array layouts and their four-quadrant mirror symmetry.
//!
//! All coordinates are in wavelengths; array elements sit on the z = 0 plane.
//! Grid layouts are built so that mirrored coordinates are bit-identical
//! (negation of an exactly-representable product), which keeps every symmetry
//! operation downstream exact.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SynthError};

/// Default position-matching tolerance for orbit construction, in wavelengths.
pub const DEFAULT_POSITION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Element positions of a centrosymmetric planar array.
#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    pub positions: Vec<Point3>,
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
}

impl ArrayGeometry {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// One equivalence class of elements under (x, y) → (±x, ±y).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymmetryOrbit {
    /// Member with x ≥ 0, y ≥ 0 (ties broken by smallest index).
    pub representative: usize,
    /// All distinct mirror images of the representative, sorted. Size 1, 2 or 4.
    pub members: Vec<usize>,
}

impl SymmetryOrbit {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Index permutations realizing the three nontrivial mirror maps.
#[derive(Debug, Clone)]
pub struct MirrorMaps {
    /// (x, y) → (−x, y)
    pub flip_x: Vec<usize>,
    /// (x, y) → (x, −y)
    pub flip_y: Vec<usize>,
    /// (x, y) → (−x, −y)
    pub flip_xy: Vec<usize>,
}

impl MirrorMaps {
    pub fn maps(&self) -> [&[usize]; 3] {
        [&self.flip_x, &self.flip_y, &self.flip_xy]
    }

    /// True if `indices` is closed under all three mirror maps.
    pub fn is_closed(&self, indices: &[usize]) -> bool {
        let set: std::collections::HashSet<usize> = indices.iter().copied().collect();
        indices.iter().all(|&i| {
            set.contains(&self.flip_x[i]) && set.contains(&self.flip_y[i]) && set.contains(&self.flip_xy[i])
        })
    }
}

/// Uniform nx × ny grid centered on the origin.
///
/// Coordinates are (i − (n−1)/2)·spacing computed from exact integers, so the
/// layout is exactly centrosymmetric and odd grids contain (0, 0, 0).
pub fn build_grid_layout(nx: usize, ny: usize, spacing: f64) -> Result<ArrayGeometry> {
    if nx == 0 || ny == 0 {
        return Err(SynthError::InvalidArgument(format!(
            "grid counts must be positive, got {nx}×{ny}"
        )));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(SynthError::InvalidArgument(format!(
            "spacing must be positive and finite, got {spacing}"
        )));
    }
    let coord = |i: usize, n: usize| -> f64 {
        // 2i − (n−1) is an exact integer; × spacing/2 keeps mirrored values
        // as exact negations of each other.
        ((2 * i as i64 - (n as i64 - 1)) as f64) * (0.5 * spacing)
    };
    let mut positions = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            positions.push(Point3::new(coord(ix, nx), coord(iy, ny), 0.0));
        }
    }
    Ok(ArrayGeometry { positions, nx, ny, spacing })
}

fn find_position(geometry: &ArrayGeometry, x: f64, y: f64, tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in geometry.positions.iter().enumerate() {
        let d = ((p.x - x).powi(2) + (p.y - y).powi(2)).sqrt();
        if d <= tol {
            match best {
                Some((_, bd)) if bd <= d => {}
                _ => best = Some((i, d)),
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Build the three mirror permutations; errors if any element lacks an image.
pub fn mirror_maps(geometry: &ArrayGeometry, tol: f64) -> Result<MirrorMaps> {
    let n = geometry.len();
    let mut flip_x = vec![0usize; n];
    let mut flip_y = vec![0usize; n];
    let mut flip_xy = vec![0usize; n];
    for (i, p) in geometry.positions.iter().enumerate() {
        let images = [(-p.x, p.y), (p.x, -p.y), (-p.x, -p.y)];
        let slots: [&mut Vec<usize>; 3] = [&mut flip_x, &mut flip_y, &mut flip_xy];
        for ((ix, iy), slot) in images.iter().zip(slots) {
            match find_position(geometry, *ix, *iy, tol) {
                Some(j) => slot[i] = j,
                None => {
                    return Err(SynthError::SymmetryViolation { index: i, x: p.x, y: p.y, tol })
                }
            }
        }
    }
    Ok(MirrorMaps { flip_x, flip_y, flip_xy })
}

/// Partition the element set into mirror orbits.
///
/// Representatives are the members with x ≥ 0 and y ≥ 0 (closed first
/// quadrant); the orbit list is sorted by representative index.
pub fn symmetry_orbits(geometry: &ArrayGeometry, tol: f64) -> Result<Vec<SymmetryOrbit>> {
    let maps = mirror_maps(geometry, tol)?;
    symmetry_orbits_from_maps(geometry, &maps)
}

pub fn symmetry_orbits_from_maps(
    geometry: &ArrayGeometry,
    maps: &MirrorMaps,
) -> Result<Vec<SymmetryOrbit>> {
    let n = geometry.len();
    let mut seen = vec![false; n];
    let mut orbits = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let mut members = vec![i, maps.flip_x[i], maps.flip_y[i], maps.flip_xy[i]];
        members.sort_unstable();
        members.dedup();
        for &m in &members {
            seen[m] = true;
        }
        // Representative: smallest index with x ≥ 0 and y ≥ 0.
        let rep = members
            .iter()
            .copied()
            .find(|&m| geometry.positions[m].x >= 0.0 && geometry.positions[m].y >= 0.0)
            .ok_or_else(|| SynthError::SymmetryViolation {
                index: i,
                x: geometry.positions[i].x,
                y: geometry.positions[i].y,
                tol: DEFAULT_POSITION_TOL,
            })?;
        orbits.push(SymmetryOrbit { representative: rep, members });
    }
    orbits.sort_by_key(|o| o.representative);
    Ok(orbits)
}

/// Indices in the closed first quadrant (axes included).
pub fn first_quadrant_indices(geometry: &ArrayGeometry) -> Vec<usize> {
    geometry
        .positions
        .iter()
        .enumerate()
        .filter(|(_, p)| p.x >= 0.0 && p.y >= 0.0)
        .map(|(i, _)| i)
        .collect()
}
