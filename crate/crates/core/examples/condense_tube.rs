//! Condenses a hollow circular tube segment and compares the 12×12 result
//! with the closed-form Timoshenko element.
//!
//! `cargo run --release --example condense_tube -- [nx ny nz p depth length_mm]`

use fcm_frame::beam::{local_stiffness_timoshenko, CrossSection, Material};
use fcm_frame::condense::{condense_substructure, validate_condensed, SubstructureSpec};
use fcm_frame::fcm::FcmParameters;
use fcm_frame::geometry::{Aabb, Domain, ImplicitShape, InterfaceSection};
use nalgebra::{DMatrix, Point3, Vector3};

fn main() -> fcm_frame::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let get = |i: usize, d: usize| args.get(i).copied().unwrap_or(d);
    let (length, r_in, r_out) = (get(5, 200) as f64, 20.0, 30.0);
    let material = Material::steel();
    let shape = ImplicitShape::HollowCylinder {
        base_mm: [0.0; 3],
        axis: [1.0, 0.0, 0.0],
        length_mm: length,
        inner_radius_mm: r_in,
        outer_radius_mm: r_out,
    };
    let domain = Domain::implicit(shape, 10, material)?;
    let interfaces = vec![
        InterfaceSection::disk(Point3::origin(), -Vector3::x(), r_out, 1)?,
        InterfaceSection::disk(Point3::new(length, 0.0, 0.0), Vector3::x(), r_out, 2)?,
    ];
    let mut fcm = FcmParameters::new([get(0, 20), get(1, 8), get(2, 8)]);
    fcm.degree = get(3, 3);
    fcm.octree_depth = get(4, 3) as u32;
    let grid_box = Aabb::new(Point3::new(0.0, -r_out, -r_out), Point3::new(length, r_out, r_out));
    let spec = SubstructureSpec::new(domain, interfaces, fcm).with_grid_box(grid_box);

    let t = std::time::Instant::now();
    let (condensed, basis) = condense_substructure(&spec)?;
    println!("{} DOFs, condensed in {:.1} s", basis.system.n_dofs(), t.elapsed().as_secs_f64());
    println!("timings {:?}", basis.timings);
    let report = validate_condensed(&condensed.matrix, Some(condensed.asymmetry));
    println!("validation passed: {} {:?}", report.passed, report.messages);

    let section = CrossSection::hollow_circular(r_in, r_out, material.poisson_ratio())?;
    let oracle = local_stiffness_timoshenko(&material, &section, length);
    let oracle = DMatrix::from_iterator(12, 12, oracle.iter().copied());
    let scale = oracle.amax();
    let mut worst: f64 = 0.0;
    println!("{:>4} {:>4} {:>16} {:>16} {:>9}", "i", "j", "fcm", "beam", "rel");
    for i in 0..12 {
        for j in i..12 {
            let (a, b) = (condensed.matrix[(i, j)], oracle[(i, j)]);
            if b.abs() > 1e-9 * scale {
                let rel = (a - b).abs() / b.abs();
                worst = worst.max(rel);
                println!("{i:>4} {j:>4} {a:>16.6e} {b:>16.6e} {rel:>9.2e}");
            } else if a.abs() > 1e-6 * scale {
                println!("{i:>4} {j:>4} {a:>16.6e} {b:>16.6e}   spurious");
            }
        }
    }
    println!("max relative deviation of nonzero entries: {worst:.3e}");
    Ok(())
}
