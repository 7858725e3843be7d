//! CSV export/import of layouts, weights, fields, traces, and sweep tables.
//!
//! Full round-trip decimal precision, comma separators, one header row,
//! LF line endings.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{Result, SynthError};
use crate::geometry::{ArrayGeometry, Point3};
use crate::omp::OmpState;
use crate::pipeline::SweepRow;

/// Floor for dB columns so zero-field samples stay finite in CSV.
const DB_FLOOR: f64 = -400.0;

pub fn write_layout_csv(geometry: &ArrayGeometry, w: &mut impl Write) -> Result<()> {
    writeln!(w, "index,x,y,z")?;
    for (i, p) in geometry.positions.iter().enumerate() {
        writeln!(w, "{i},{},{},{}", p.x, p.y, p.z)?;
    }
    Ok(())
}

pub fn write_weights_csv(weights: &[Complex64], w: &mut impl Write) -> Result<()> {
    writeln!(w, "index,re,im,abs,phase")?;
    for (i, z) in weights.iter().enumerate() {
        writeln!(w, "{i},{},{},{},{}", z.re, z.im, z.norm(), z.arg())?;
    }
    Ok(())
}

/// Read a weights CSV (index, re, im, …); rows may arrive in any order but
/// must cover 0..n exactly once.
pub fn read_weights_csv(r: impl BufRead) -> Result<Vec<Complex64>> {
    let mut rows: Vec<(usize, Complex64)> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (lineno == 0 && trimmed.starts_with("index")) {
            continue;
        }
        let mut parts = trimmed.split(',');
        let idx: usize = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| SynthError::Parse(format!("weights line {}: bad index", lineno + 1)))?;
        let re: f64 = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| SynthError::Parse(format!("weights line {}: bad re", lineno + 1)))?;
        let im: f64 = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| SynthError::Parse(format!("weights line {}: bad im", lineno + 1)))?;
        rows.push((idx, Complex64::new(re, im)));
    }
    let n = rows.len();
    let mut out = vec![None; n];
    for (idx, v) in rows {
        if idx >= n || out[idx].is_some() {
            return Err(SynthError::Parse(format!("weights index {idx} out of range or repeated")));
        }
        out[idx] = Some(v);
    }
    Ok(out.into_iter().map(|v| v.unwrap()).collect())
}

/// Field samples as x, y, z, Re(E), Im(E), |E|, dB relative to `reference`.
pub fn write_field_csv(
    points: &[Point3],
    field: &[Complex64],
    reference: f64,
    w: &mut impl Write,
) -> Result<()> {
    if points.len() != field.len() {
        return Err(SynthError::DimensionMismatch(format!(
            "{} points vs {} field samples",
            points.len(),
            field.len()
        )));
    }
    writeln!(w, "x,y,z,re,im,abs,db")?;
    for (p, e) in points.iter().zip(field) {
        let mag = e.norm();
        let db = if reference > 0.0 && mag > 0.0 {
            (20.0 * (mag / reference).log10()).max(DB_FLOOR)
        } else {
            DB_FLOOR
        };
        writeln!(w, "{},{},{},{},{},{},{}", p.x, p.y, p.z, e.re, e.im, mag, db)?;
    }
    Ok(())
}

/// Per-iteration OMP trace: iteration, selected representative, orbit size,
/// residual norm.
pub fn write_omp_trace_csv(state: &OmpState, w: &mut impl Write) -> Result<()> {
    writeln!(w, "iteration,representative,orbit_size,residual_norm")?;
    for (k, (orbit, r)) in state
        .selected_orbits
        .iter()
        .zip(&state.residual_trace)
        .enumerate()
    {
        writeln!(w, "{},{},{},{}", k + 1, orbit.representative, orbit.size(), r)?;
    }
    Ok(())
}

pub fn write_sweep_csv(rows: &[SweepRow], w: &mut impl Write) -> Result<()> {
    writeln!(w, "s_max,active_count,sparsity_pct,sll_db,beamwidth,time_s,status")?;
    for r in rows {
        let bw = r.beamwidth.map_or(String::new(), |v| v.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.s_max, r.active_count, r.sparsity_pct, r.sll_db, bw, r.time_s, r.status
        )?;
    }
    Ok(())
}
