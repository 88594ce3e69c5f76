use std::collections::BTreeMap;

use nalgebra::{DMatrix, Point3, Vector3};

use super::basis::shape_functions;
use super::grid::CellGrid;
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::sparse::SymCsc;

/// One surface quadrature point already located in its cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub cell: u32,
    pub xi: [f64; 3],
    pub x: Point3<f64>,
    pub weight: f64,
}

/// Surface quadrature over triangles clipped to the grid cells, grouped by
/// cell in ascending order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfaceQuadrature {
    pub points: Vec<SurfacePoint>,
}

impl SurfaceQuadrature {
    pub fn area(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points grouped by cell.
    pub fn by_cell(&self) -> BTreeMap<u32, Vec<&SurfacePoint>> {
        let mut m: BTreeMap<u32, Vec<&SurfacePoint>> = BTreeMap::new();
        for p in &self.points {
            m.entry(p.cell).or_default().push(p);
        }
        m
    }

    pub fn merged(parts: &[SurfaceQuadrature]) -> SurfaceQuadrature {
        let mut points: Vec<SurfacePoint> = parts.iter().flat_map(|q| q.points.iter().copied()).collect();
        points.sort_by_key(|p| p.cell);
        SurfaceQuadrature { points }
    }
}

/// Degree-5 seven-point rule on the reference triangle: (barycentric a, b, weight).
const TRI7: [(f64, f64, f64); 7] = [
    (1.0 / 3.0, 1.0 / 3.0, 0.225),
    (0.059_715_871_789_769_82, 0.470_142_064_105_115_1, 0.132_394_152_788_506_18),
    (0.470_142_064_105_115_1, 0.059_715_871_789_769_82, 0.132_394_152_788_506_18),
    (0.470_142_064_105_115_1, 0.470_142_064_105_115_1, 0.132_394_152_788_506_18),
    (0.797_426_985_353_087_3, 0.101_286_507_323_456_34, 0.125_939_180_544_827_15),
    (0.101_286_507_323_456_34, 0.797_426_985_353_087_3, 0.125_939_180_544_827_15),
    (0.101_286_507_323_456_34, 0.101_286_507_323_456_34, 0.125_939_180_544_827_15),
];

/// Sutherland–Hodgman against one axis plane; vertices within `tol` of the
/// plane count as inside so that faces lying on cell boundaries survive.
fn clip(poly: Vec<Point3<f64>>, axis: usize, value: f64, keep_below: bool, tol: f64) -> Vec<Point3<f64>> {
    let inside = |p: &Point3<f64>| if keep_below { p[axis] <= value + tol } else { p[axis] >= value - tol };
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (ia, ib) = (inside(&a), inside(&b));
        if ia {
            out.push(a);
        }
        if ia != ib {
            let t = (value - a[axis]) / (b[axis] - a[axis]);
            let mut q = a + (b - a) * t;
            q[axis] = value;
            out.push(q);
        }
    }
    out
}

/// Builds the surface quadrature of a triangulated region. Triangles are
/// clipped to every cell they overlap; pieces lying in a grid plane are
/// given to one cell only (the first active one containing their centroid).
/// Points outside the physical domain or in inactive cells are dropped.
pub fn surface_quadrature(grid: &CellGrid, domain: &Domain, triangles: &[[Point3<f64>; 3]]) -> Result<SurfaceQuadrature> {
    let bbox = grid.bounding_box();
    let h = grid.cell_size();
    let res = grid.resolution();
    let tol = 1e-9 * h.norm();
    let mut points = Vec::new();
    for tri in triangles {
        let mut range = [[0usize; 2]; 3];
        for k in 0..3 {
            let lo = tri.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
            let hi = tri.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
            if hi < bbox.min[k] - tol || lo > bbox.max[k] + tol {
                range[k] = [1, 0];
                continue;
            }
            let c0 = ((lo - bbox.min[k] - tol) / h[k]).floor().max(0.0) as usize;
            let c1 = ((hi - bbox.min[k] + tol) / h[k]).floor().max(0.0) as usize;
            range[k] = [c0.min(res[k] - 1), c1.min(res[k] - 1)];
        }
        if range.iter().any(|r| r[0] > r[1]) {
            continue;
        }
        for ck in range[2][0]..=range[2][1] {
            for cj in range[1][0]..=range[1][1] {
                for ci in range[0][0]..=range[0][1] {
                    let cell = grid.cell_index(ci, cj, ck);
                    let b = grid.cell_box(cell);
                    let mut poly = tri.to_vec();
                    for k in 0..3 {
                        poly = clip(poly, k, b.min[k], false, tol);
                        if poly.is_empty() {
                            break;
                        }
                        poly = clip(poly, k, b.max[k], true, tol);
                        if poly.is_empty() {
                            break;
                        }
                    }
                    if poly.len() < 3 {
                        continue;
                    }
                    let centroid = Point3::from(poly.iter().map(|p| p.coords).sum::<Vector3<f64>>() / poly.len() as f64);
                    match grid.locate(&centroid) {
                        Ok((owner, _)) if owner == cell => {}
                        _ => continue,
                    }
                    for t in 1..poly.len() - 1 {
                        let (a, bb, c) = (poly[0], poly[t], poly[t + 1]);
                        let area = 0.5 * (bb - a).cross(&(c - a)).norm();
                        if area <= 0.0 {
                            continue;
                        }
                        for &(l1, l2, w) in &TRI7 {
                            let x = a + (bb - a) * l1 + (c - a) * l2;
                            if !domain.is_inside(&x) {
                                continue;
                            }
                            let mut xi = grid.to_reference(cell, &x);
                            for v in &mut xi {
                                *v = v.clamp(-1.0, 1.0);
                            }
                            points.push(SurfacePoint {
                                cell: cell as u32,
                                xi,
                                x,
                                weight: w * area,
                            });
                        }
                    }
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyRegion(format!(
            "{} triangle(s) yield no quadrature point inside an active cell",
            triangles.len()
        )));
    }
    points.sort_by_key(|p| p.cell);
    Ok(SurfaceQuadrature { points })
}

/// `β ∫ Nᵀ N dΓ` on the grid sparsity `pattern`.
pub fn penalty_matrix(grid: &CellGrid, quadrature: &SurfaceQuadrature, beta: f64, pattern: &SymCsc) -> SymCsc {
    let mut m = pattern.zeros_like();
    add_penalty_matrix(grid, quadrature, beta, &mut m);
    m
}

pub fn add_penalty_matrix(grid: &CellGrid, quadrature: &SurfaceQuadrature, beta: f64, target: &mut SymCsc) {
    let p = grid.degree();
    for (cell, pts) in quadrature.by_cell() {
        let functions = grid.cell_functions(cell as usize);
        let nb = functions.len();
        let mut mass = DMatrix::<f64>::zeros(nb, nb);
        for sp in pts {
            let s = shape_functions(p, sp.xi);
            let v = nalgebra::DVector::from_column_slice(&s.values);
            mass.ger(beta * sp.weight, &v, &v, 1.0);
        }
        for a in 0..nb {
            for b in 0..nb {
                let fa = functions[a] as usize;
                let fb = functions[b] as usize;
                if fa < fb {
                    continue;
                }
                for c in 0..3 {
                    target.add(3 * fa + c, 3 * fb + c, mass[(a, b)]);
                }
            }
        }
    }
}

/// `∫ Nᵀ g(x) dΓ` for a vector field `g`.
pub fn surface_load(grid: &CellGrid, quadrature: &SurfaceQuadrature, g: impl Fn(&Point3<f64>) -> Vector3<f64>) -> Vec<f64> {
    let mut f = vec![0.0; grid.n_dofs()];
    add_surface_load(grid, quadrature, 1.0, g, &mut f);
    f
}

fn add_surface_load(
    grid: &CellGrid,
    quadrature: &SurfaceQuadrature,
    scale: f64,
    g: impl Fn(&Point3<f64>) -> Vector3<f64>,
    f: &mut [f64],
) {
    let p = grid.degree();
    for (cell, pts) in quadrature.by_cell() {
        let functions = grid.cell_functions(cell as usize);
        for sp in pts {
            let value = g(&sp.x);
            if value == Vector3::zeros() {
                continue;
            }
            let s = shape_functions(p, sp.xi);
            for (a, &fa) in functions.iter().enumerate() {
                let w = scale * sp.weight * s.values[a];
                for c in 0..3 {
                    f[3 * fa as usize + c] += w * value[c];
                }
            }
        }
    }
}

/// Weak Dirichlet condition: returns `β ∫ Nᵀ N dΓ` and `β ∫ Nᵀ u_p dΓ`.
pub fn penalty_dirichlet(
    grid: &CellGrid,
    quadrature: &SurfaceQuadrature,
    prescribed: impl Fn(&Point3<f64>) -> Vector3<f64>,
    beta: f64,
    pattern: &SymCsc,
) -> (SymCsc, Vec<f64>) {
    let m = penalty_matrix(grid, quadrature, beta, pattern);
    let mut f = vec![0.0; grid.n_dofs()];
    add_surface_load(grid, quadrature, beta, prescribed, &mut f);
    (m, f)
}

/// Consistent nodal load of a surface traction `t(x)` (N/mm²).
pub fn neumann_load(grid: &CellGrid, quadrature: &SurfaceQuadrature, traction: impl Fn(&Point3<f64>) -> Vector3<f64>) -> Vec<f64> {
    surface_load(grid, quadrature, traction)
}

/// Axis-aligned rectangle split into two triangles, for faces of boxes.
pub fn rectangle(corner: Point3<f64>, edge_a: Vector3<f64>, edge_b: Vector3<f64>) -> Vec<[Point3<f64>; 3]> {
    vec![
        [corner, corner + edge_a, corner + edge_a + edge_b],
        [corner, corner + edge_a + edge_b, corner + edge_b],
    ]
}

/// The six faces of a box as twelve triangles.
pub fn box_faces(b: &crate::geometry::Aabb) -> Vec<[Point3<f64>; 3]> {
    let e = b.extent();
    let (ex, ey, ez) = (Vector3::x() * e.x, Vector3::y() * e.y, Vector3::z() * e.z);
    let mut t = Vec::with_capacity(12);
    t.extend(rectangle(b.min, ey, ez));
    t.extend(rectangle(b.min + ex, ey, ez));
    t.extend(rectangle(b.min, ex, ez));
    t.extend(rectangle(b.min + ey, ex, ez));
    t.extend(rectangle(b.min, ex, ey));
    t.extend(rectangle(b.min + ez, ex, ey));
    t
}
