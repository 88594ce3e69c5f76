//! Loads a triangulated surface, classifies points against it and builds a
//! finite cell grid around it.
//!
//! `cargo run --example stl_classify [file.stl]`; without an argument a
//! 40 × 20 × 20 mm box is generated in memory.

use fcm_frame::beam::Material;
use fcm_frame::fcm::{build_grid, CellState};
use fcm_frame::geometry::{load_triangle_surface, Domain};
use nalgebra::Point3;

fn box_stl(size: [f64; 3]) -> String {
    let v = |i: usize| [if i & 1 != 0 { size[0] } else { 0.0 }, if i & 2 != 0 { size[1] } else { 0.0 }, if i & 4 != 0 { size[2] } else { 0.0 }];
    // two outward-oriented triangles per face
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let mut s = String::from("solid box\n");
    for q in quads {
        for t in [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] {
            s.push_str("  facet normal 0 0 0\n    outer loop\n");
            for i in t {
                let p = v(i);
                s.push_str(&format!("      vertex {} {} {}\n", p[0], p[1], p[2]));
            }
            s.push_str("    endloop\n  endfacet\n");
        }
    }
    s + "endsolid box\n"
}

fn main() -> fcm_frame::Result<()> {
    let bytes = match std::env::args().nth(1) {
        Some(path) => std::fs::read(path)?,
        None => box_stl([40.0, 20.0, 20.0]).into_bytes(),
    };
    let surface = load_triangle_surface(&bytes)?;
    println!("{} triangles, watertight: {}", surface.triangles().len(), surface.is_watertight());
    let domain = Domain::surface(surface, 10, Material::steel())?;
    let b = domain.bounding_box().expect("non-empty surface");
    println!("bounding box {:?} .. {:?}", b.min.coords.as_slice(), b.max.coords.as_slice());
    let centre = Point3::from((b.min.coords + b.max.coords) * 0.5);
    for p in [centre, b.min - (b.max - b.min) * 0.1, Point3::new(centre.x, centre.y, b.max.z + 1.0)] {
        let c = domain.classify_point(&p);
        println!("point {:?}: {:?} (fallback ray: {})", p.coords.as_slice(), c.membership, c.fallback);
    }
    let grid = build_grid(&domain, [8, 4, 4], 2, 3.0)?;
    let count = |s: CellState| (0..grid.n_cells()).filter(|&c| grid.state(c) == s).count();
    println!(
        "grid {:?}: {} inside, {} cut, {} outside cells, {} DOFs",
        grid.resolution(),
        count(CellState::Inside),
        count(CellState::Cut),
        count(CellState::Outside),
        grid.n_dofs()
    );
    Ok(())
}
