//! Two-scale cantilever verification: a hollow segment condensed from a 3D
//! model replaces three beam elements; displacements along the beam are
//! compared with the all-beam model.
//!
//! `cargo run --release --example cantilever_verification [--refined]`

use fcm_frame::scenario::{run_cantilever, CantileverOptions};

fn main() -> fcm_frame::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let refined = std::env::args().any(|a| a == "--refined");
    let options = if refined { CantileverOptions::refined() } else { CantileverOptions::desk() };
    let report = run_cantilever(&options, None)?;
    println!("{} global DOFs, superelement valid: {}", report.n_dofs, report.validation.passed);
    for s in report.samples.iter().step_by(4) {
        let e = s.error.map_or("undefined".to_string(), |e| format!("{e:.3e}"));
        println!("x = {:7.1} mm  reference uz = {:.6e}  two-scale uz = {:.6e}  error {e}", s.position_mm[0], s.reference_mm[2], s.two_scale_mm[2]);
    }
    println!("max error {:.3e} (threshold {:.1e}): {}", report.max_error, options.threshold, if report.passed { "pass" } else { "fail" });
    if let Some(local) = report.local_max_error {
        println!("resolved 3D field along the segment: max error {local:.3e}");
    }
    for (stage, t) in &report.timings {
        println!("{stage}: {t:.1} s");
    }
    Ok(())
}
