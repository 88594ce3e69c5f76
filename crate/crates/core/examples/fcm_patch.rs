//! Finite cell patch test: an affine displacement imposed weakly on the
//! faces of a block that sits inside a larger grid is reproduced in the
//! interior; the error shrinks with the octree depth.
//!
//! `cargo run --release --example fcm_patch`

use std::sync::Arc;

use fcm_frame::beam::Material;
use fcm_frame::fcm::{box_faces, CellGrid, FcmSystem, QuadratureScheme, DEFAULT_PENALTY};
use fcm_frame::geometry::{Aabb, Domain, ImplicitShape};
use nalgebra::{Matrix3, Point3, Vector3};

fn main() -> fcm_frame::Result<()> {
    let a = Vector3::new(1e-2, -2e-2, 5e-3);
    let b = Matrix3::new(1e-3, 2e-4, -3e-4, 5e-4, -8e-4, 1e-4, 0.0, 3e-4, 6e-4);
    let exact = |x: &Point3<f64>| a + b * x.coords;
    for (label, min, max) in [
        ("faces on grid planes", [10.0, 10.0, 8.0], [30.0, 20.0, 16.0]),
        ("faces inside cells", [2.0, 1.0, 4.0], [37.0, 18.0, 22.0]),
    ] {
        let shape = ImplicitShape::Box { min_mm: min, max_mm: max };
        let block = Aabb::new(Point3::from(min), Point3::from(max));
        let grid_box = Aabb::new(Point3::origin(), Point3::new(40.0, 30.0, 24.0));
        for depth in [1, 2, 4] {
            let domain = Domain::implicit(shape.clone(), 10, Material::steel())?;
            let grid = Arc::new(CellGrid::new(&domain, grid_box, [4, 3, 3], 2)?);
            let mut sys = FcmSystem::assemble(domain, grid, &QuadratureScheme::with_depth(depth), DEFAULT_PENALTY);
            let faces = sys.surface_quadrature(&box_faces(&block))?;
            sys.constrain(&faces);
            let f = sys.penalty_load(&faces, exact);
            let field = sys.field(sys.factorize()?.solve(&f))?;
            let mut worst: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for k in 0..10 {
                for j in 0..10 {
                    for i in 0..10 {
                        let t = Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) / 10.0;
                        let x = block.min + block.extent().component_mul(&t);
                        worst = worst.max((field.displacement(&x)? - exact(&x)).norm());
                        scale = scale.max(exact(&x).norm());
                    }
                }
            }
            println!("{label}, octree depth {depth}: relative error {:.3e} at 1000 points", worst / scale);
        }
    }
    Ok(())
}
