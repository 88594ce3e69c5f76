//! Full pipeline from a job file: condensation, global frame solution and
//! local stress recovery, with the local field written as VTK.
//!
//! `cargo run --release --example two_scale_job [job.toml] [out_dir]`

use std::path::PathBuf;

use fcm_frame::io::LoadedJob;
use fcm_frame::twoscale::{run_job, RunOptions};

fn main() -> fcm_frame::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let job_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/jobs/tube_segment.toml"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("fcm-frame-example"));
    let job = LoadedJob::from_path(&job_path)?.to_job()?;
    let report = run_job(&job, &RunOptions::default())?;

    for c in &report.condensed {
        println!("{}: {}×{} superelement, valid: {}", c.name, c.stiffness.k(), c.stiffness.k(), c.validation.passed);
    }
    let (node, u) = report.solution.max_translation();
    println!("largest frame displacement {u:.4e} mm at node {node}");
    std::fs::create_dir_all(&out)?;
    for l in &report.local {
        let s = &l.stress.summary;
        println!(
            "{}: peak von Mises {:.4e} MPa at {:?} mm; energy ½bᵀKb = {:.6e}, field = {:.6e} N·mm",
            l.name, s.max_von_mises, s.location, l.boundary_energy, s.strain_energy
        );
        let path = out.join(format!("{}.vtk", l.name));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        l.stress.field.write_vtk(&mut f, &l.name, 2)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
