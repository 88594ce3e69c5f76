//! Timoshenko beam cantilever: tip deflection against the closed form for a
//! slender and a stocky beam, plus end actions and the buckling check.
//!
//! `cargo run --example beam_cantilever`

use fcm_frame::beam::{assemble_and_solve, euler_buckling_check, internal_actions, CrossSection, FrameModel, Material, Support};
use nalgebra::Point3;

fn main() -> fcm_frame::Result<()> {
    let steel = Material::steel();
    let section = CrossSection::hollow_circular(20.0, 30.0, steel.poisson_ratio())?;
    let p = 1000.0;
    println!("{:>8} {:>6} {:>16} {:>16} {:>10}", "L mm", "elems", "tip uz mm", "closed form", "rel err");
    for length in [2000.0, 150.0] {
        for n in [1, 4] {
            let mut m = FrameModel::new();
            for i in 0..=n {
                m.add_node(i as u32 + 1, Point3::new(length * i as f64 / n as f64, 0.0, 0.0));
                if i > 0 {
                    m.add_element(i as u32, i as u32 + 1, steel, section);
                }
            }
            m.set_support(1, Support::clamped());
            m.add_load(n as u32 + 1, [-p, 0.0, p, 0.0, 0.0, 0.0]);
            let s = assemble_and_solve(&m)?;
            let tip = s.displacement(n as u32 + 1).expect("tip node")[2];
            let bending = p * length.powi(3) / (3.0 * steel.young_modulus() * section.iy);
            let shear = p * length / (section.kappa * steel.shear_modulus() * section.area);
            let exact = bending + shear;
            println!("{length:>8} {n:>6} {tip:>16.9e} {exact:>16.9e} {:>10.2e}", (tip - exact).abs() / exact);
            if n == 1 {
                let f = internal_actions(&m, 0, &s)?;
                let check = euler_buckling_check(&steel, &section, length, f[6], 2.0);
                println!("         end actions at the clamp {:?}", &f.as_slice()[..6]);
                println!("         axial {:.1} N, buckling ratio {:.4} (free-clamped, K = 2)", f[6], check.ratio);
            }
        }
    }
    Ok(())
}
