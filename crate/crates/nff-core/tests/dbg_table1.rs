use nff_core::pipeline::*;
use nff_core::field::ElementPatternModel;
use nff_core::metrics::NormalizationRule;
use nff_core::conic::SolverConfig;

fn table1_config(s_max: usize) -> SynthesisConfig {
    SynthesisConfig {
        array: ArraySpec { nx: 11, ny: 11, spacing: 0.5, pattern: ElementPatternModel::YDipole },
        focus: FocusSpec { x: 0.0, y: 0.0, z: 5.0 },
        focal_plane: FocalPlaneSpec { extent: 5.0, points_per_side: 50, exclusion_radius: None, eval_points_per_side: None },
        axial: AxialSpec { z_min: 0.1, z_max: 10.0, count: 100 },
        synthesis: SynthesisSpec {
            beamwidth_target: 1.08, rho_sl_db: -20.0, epsilon: 1e-3, s_max,
            normalization: NormalizationRule::FocalContribution, deterministic: true,
        },
        solver: SolverConfig::default(),
    }
}

#[test]
#[ignore]
fn dbg_table1() {
    let cfg = table1_config(16);
    let ws = build_workspace(&cfg).unwrap();
    println!("matrix {}x{} built in {:.3}s", ws.matrix.rows(), ws.matrix.cols(), ws.matrix_build_time);
    let t = std::time::Instant::now();
    let prop = run_proposed_in(&ws, &cfg).unwrap();
    println!("proposed wall {:.3}s", t.elapsed().as_secs_f64());
    println!("prop: status {:?} iters {} active {} S% {:.2} BW {:?} SLL {:.3} Ep {:.2} raw {:.3} dz {:?}",
        prop.solve_status, prop.solve_iterations, prop.active_set.len(),
        prop.metrics.sparsity_pct, prop.metrics.beamwidth, prop.metrics.sll_db,
        prop.metrics.peak_field, prop.metrics.peak_field_raw, prop.metrics.focal_shift);
    println!("prop timings: {:?}", prop.timings);
    let t = std::time::Instant::now();
    let base = run_baseline_in(&ws, &cfg).unwrap();
    println!("baseline wall {:.3}s", t.elapsed().as_secs_f64());
    println!("base: status {:?} iters {} S% {:.2} BW {:?} SLL {:.3} Ep {:.2} raw {:.3} dz {:?}",
        base.solve_status, base.solve_iterations,
        base.metrics.sparsity_pct, base.metrics.beamwidth, base.metrics.sll_db,
        base.metrics.peak_field, base.metrics.peak_field_raw, base.metrics.focal_shift);
    println!("base timings: {:?}", base.timings);
    println!("speedup {:.2}", speedup(&prop, &base).unwrap());
}
