//! `nff` — synthesize, baseline, sweep, and evaluate commands for the sparse
//! near-field focusing engine.
//!
//! Exit codes: 0 ok, 2 invalid config/input, 3 infeasible, 4 IO failure.
//! Set `NFF_LOG` (error/warn/info/debug) for diagnostics on stderr.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::json;

use nff_core::error::SynthError;
use nff_core::field::evaluate_field_direct;
use nff_core::geometry::Point3;
use nff_core::io as nio;
use nff_core::metrics::SynthesisResult;
use nff_core::pipeline::{
    evaluate_weights, run_baseline, run_proposed, run_sweep, SweepSpec, SynthesisConfig,
};

#[derive(Parser)]
#[command(name = "nff", version, about = "Sparse near-field-focused array synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-stage synthesis: symmetric OMP pre-selection + conic refinement.
    Synthesize(RunArgs),
    /// Conventional full-array L1 solve on the same constraints.
    Baseline(RunArgs),
    /// Proposed-path runs over a list of s_max values.
    Sweep(SweepArgs),
    /// Re-score an existing weights file on a config's grids.
    Evaluate(EvalArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Replace prior results in the output directory.
    #[arg(long)]
    overwrite: bool,
    /// Also write the per-iteration OMP trace (synthesize only).
    #[arg(long)]
    trace: bool,
    /// Override the configured sidelobe bound, in dB.
    #[arg(long, value_name = "DB")]
    rho_sll_db: Option<f64>,
    /// Override the configured OMP selection budget.
    #[arg(long)]
    s_max: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    overwrite: bool,
    /// Comma-separated, strictly increasing s_max values, e.g. 2,4,8.
    #[arg(long, value_name = "LIST")]
    s_max_list: String,
    /// Concurrent sweep points (deterministic configs pin this to 1).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_name = "DB")]
    rho_sll_db: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// weights.csv produced by synthesize/baseline (index, re, im, …).
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    overwrite: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NFF_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synthesize(args) => cmd_run(&args, "synthesize"),
        Command::Baseline(args) => cmd_run(&args, "baseline"),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &SynthError) -> u8 {
    match e {
        SynthError::InvalidConfiguration(_)
        | SynthError::InvalidArgument(_)
        | SynthError::Parse(_)
        | SynthError::UndefinedMetric(_)
        | SynthError::DimensionMismatch(_)
        | SynthError::InvalidComparison(_) => 2,
        SynthError::Infeasible(_) | SynthError::Stagnation => 3,
        SynthError::Io(_) => 4,
        _ => 1,
    }
}

fn load_config(path: &Path) -> Result<SynthesisConfig, SynthError> {
    let text = fs::read_to_string(path)?;
    let config: SynthesisConfig =
        toml::from_str(&text).map_err(|e| SynthError::Parse(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Refuse to clobber prior results unless --overwrite is given.
fn prepare_out_dir(out: &Path, overwrite: bool) -> Result<(), SynthError> {
    if out.join("manifest.json").exists() && !overwrite {
        return Err(SynthError::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!(
                "{} already holds results; pass --overwrite to replace them",
                out.display()
            ),
        )));
    }
    fs::create_dir_all(out)?;
    Ok(())
}

fn create(out: &Path, name: &str) -> Result<BufWriter<fs::File>, SynthError> {
    Ok(BufWriter::new(fs::File::create(out.join(name))?))
}

/// Everything both run commands write: layout, weights, field maps, cuts,
/// metrics; returns the output-file inventory.
fn write_run_outputs(
    result: &SynthesisResult,
    config: &SynthesisConfig,
    out: &Path,
) -> Result<Vec<String>, SynthError> {
    let mut outputs = Vec::new();
    let mut push = |name: &str| outputs.push(name.to_string());

    let mut w = create(out, "layout.csv")?;
    nio::write_layout_csv(&result.geometry, &mut w)?;
    push("layout.csv");

    let mut w = create(out, "weights.csv")?;
    nio::write_weights_csv(&result.weights, &mut w)?;
    push("weights.csv");

    let focal_ref = result.focal_plane_field[result.grids.focal_index].norm();
    let focal_pts: Vec<Point3> = result.grids.focal_plane.iter().map(|t| t.point).collect();
    let mut w = create(out, "field_xy.csv")?;
    nio::write_field_csv(&focal_pts, &result.focal_plane_field, focal_ref, &mut w)?;
    push("field_xy.csv");

    // xz slice through y = 0 spanning the focal-plane extent and axial range.
    let nx = config.eval_points_per_side();
    let nz = config.axial.count;
    let mut xz_pts = Vec::with_capacity(nx * nz);
    for iz in 0..nz {
        let t = iz as f64 / (nz as f64 - 1.0);
        let z = config.axial.z_min + t * (config.axial.z_max - config.axial.z_min);
        for ix in 0..nx {
            let x = ((2 * ix as i64 - (nx as i64 - 1)) as f64)
                * (config.focal_plane.extent / (2.0 * (nx as f64 - 1.0)));
            xz_pts.push(Point3::new(x, 0.0, z));
        }
    }
    let xz_field = evaluate_field_direct(&result.geometry, &xz_pts, result.pattern, &result.weights)?;
    let mut w = create(out, "field_xz.csv")?;
    nio::write_field_csv(&xz_pts, &xz_field, focal_ref, &mut w)?;
    push("field_xz.csv");

    let mut w = create(out, "axial_cut.csv")?;
    nio::write_field_csv(&result.grids.axial, &result.axial_field, focal_ref, &mut w)?;
    push("axial_cut.csv");

    // Lateral x cut at (y = 0, z = z0) on the read-out lattice.
    let lat_pts: Vec<Point3> = (0..nx)
        .map(|ix| {
            let x = ((2 * ix as i64 - (nx as i64 - 1)) as f64)
                * (config.focal_plane.extent / (2.0 * (nx as f64 - 1.0)));
            Point3::new(x, 0.0, config.focus.z)
        })
        .collect();
    let lat_field =
        evaluate_field_direct(&result.geometry, &lat_pts, result.pattern, &result.weights)?;
    let mut w = create(out, "lateral_cut.csv")?;
    nio::write_field_csv(&lat_pts, &lat_field, focal_ref, &mut w)?;
    push("lateral_cut.csv");

    let mut w = create(out, "metrics.json")?;
    serde_json::to_writer_pretty(&mut w, &result.metrics)
        .map_err(|e| SynthError::Parse(e.to_string()))?;
    w.write_all(b"\n")?;
    push("metrics.json");

    Ok(outputs)
}

fn write_manifest(
    out: &Path,
    command: &str,
    config: &SynthesisConfig,
    result: Option<&SynthesisResult>,
    mut outputs: Vec<String>,
    extra: serde_json::Value,
) -> Result<(), SynthError> {
    outputs.push("manifest.json".to_string());
    let mut doc = json!({
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "outputs": outputs,
    });
    if let Some(r) = result {
        doc["timings"] = serde_json::to_value(r.timings).unwrap();
        doc["solve"] = json!({
            "status": format!("{:?}", r.solve_status),
            "iterations": r.solve_iterations,
            "objective": r.solve_objective,
            "active_elements": r.active_set.len(),
        });
        doc["metrics"] = serde_json::to_value(&r.metrics).unwrap();
    }
    if !extra.is_null() {
        doc["extra"] = extra;
    }
    let mut w = create(out, "manifest.json")?;
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| SynthError::Parse(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

fn print_summary(kind: &str, r: &SynthesisResult) {
    println!("{kind}: status {:?} in {} iterations", r.solve_status, r.solve_iterations);
    println!(
        "  S(%) {:.1}   BW/lambda {}   SLL(dB) {:.2}   |Ep| {:.2}   dz/lambda {}",
        r.metrics.sparsity_pct,
        r.metrics.beamwidth.map_or("n/a".into(), |v| format!("{v:.3}")),
        r.metrics.sll_db,
        r.metrics.peak_field,
        r.metrics.focal_shift.map_or("n/a".into(), |v| format!("{v:.3}")),
    );
    println!(
        "  time(s): matrix {:.3} + omp {:.3} + solve {:.3} = {:.3} (evaluate {:.3})",
        r.timings.matrix_build, r.timings.omp, r.timings.solve, r.timings.total, r.timings.evaluate
    );
}

fn cmd_run(args: &RunArgs, kind: &str) -> Result<(), SynthError> {
    let mut config = load_config(&args.config)?;
    if let Some(db) = args.rho_sll_db {
        config.synthesis.rho_sl_db = db;
    }
    if let Some(s) = args.s_max {
        config.synthesis.s_max = s;
    }
    config.validate()?;
    prepare_out_dir(&args.out, args.overwrite)?;

    let result = match kind {
        "synthesize" => run_proposed(&config)?,
        _ => run_baseline(&config)?,
    };
    let mut outputs = write_run_outputs(&result, &config, &args.out)?;
    if args.trace && kind == "synthesize" {
        // Re-derive the trace from the stored run.
        let mut w = create(&args.out, "omp_trace.csv")?;
        writeln!(w, "iteration,residual_norm")?;
        for (k, r) in result.omp_trace.iter().enumerate() {
            writeln!(w, "{},{}", k + 1, r)?;
        }
        outputs.push("omp_trace.csv".to_string());
    }
    write_manifest(&args.out, kind, &config, Some(&result), outputs, serde_json::Value::Null)?;
    print_summary(kind, &result);
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), SynthError> {
    let mut config = load_config(&args.config)?;
    if let Some(db) = args.rho_sll_db {
        config.synthesis.rho_sl_db = db;
        config.validate()?;
    }
    let s_max_list: Vec<usize> = args
        .s_max_list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| SynthError::InvalidArgument(format!("bad s_max value '{s}'")))
        })
        .collect::<Result<_, _>>()?;
    if s_max_list.is_empty() {
        return Err(SynthError::InvalidArgument("sweep list is empty".into()));
    }
    prepare_out_dir(&args.out, args.overwrite)?;

    let spec = SweepSpec { s_max_list, base: config.clone() };
    let rows = run_sweep(&spec, args.jobs)?;
    let mut w = create(&args.out, "sweep.csv")?;
    nio::write_sweep_csv(&rows, &mut w)?;
    drop(w);
    let succeeded = rows.iter().filter(|r| !r.status.starts_with("failed")).count();
    write_manifest(
        &args.out,
        "sweep",
        &config,
        None,
        vec!["sweep.csv".to_string()],
        json!({ "points": rows.len(), "succeeded": succeeded }),
    )?;
    for r in &rows {
        println!(
            "s_max {:>3}: active {:>4}  SLL {:>8.2} dB  time {:>8.3} s  {}",
            r.s_max, r.active_count, r.sll_db, r.time_s, r.status
        );
    }
    if succeeded == 0 {
        return Err(SynthError::Infeasible("every sweep point failed".into()));
    }
    Ok(())
}

fn cmd_evaluate(args: &EvalArgs) -> Result<(), SynthError> {
    let config = load_config(&args.config)?;
    let text = fs::File::open(&args.weights)?;
    let weights: Vec<Complex64> = nio::read_weights_csv(std::io::BufReader::new(text))?;
    prepare_out_dir(&args.out, args.overwrite)?;
    let result = evaluate_weights(&config, weights)?;
    let outputs = write_run_outputs(&result, &config, &args.out)?;
    write_manifest(&args.out, "evaluate", &config, Some(&result), outputs, serde_json::Value::Null)?;
    print_summary("evaluate", &result);
    Ok(())
}
