//! Finite cell method for 3D linear elasticity on Cartesian grids.

mod basis;
mod boundary;
mod field;
mod grid;
mod integration;

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use basis::{functions_per_cell, integrated_legendre, legendre, shape_functions, ShapeValues};
pub use boundary::{
    add_penalty_matrix, box_faces, neumann_load, penalty_dirichlet, penalty_matrix, rectangle, surface_load, surface_quadrature,
    SurfacePoint, SurfaceQuadrature,
};
pub use field::{stress_from_strain, von_mises, ElasticField, FieldValue};
pub use grid::{build_grid, classify_box, CellGrid, CellState};
pub use integration::{
    cell_stiffness, gauss_legendre, octree_leaves, reference_cell_stiffness, GradientIntegrals, QuadratureScheme, RefBox,
};

use crate::error::Result;
use crate::geometry::Domain;
use crate::sparse::{Cholesky, SymCsc};

/// Default penalty parameter for weak Dirichlet conditions.
pub const DEFAULT_PENALTY: f64 = 1e14;

/// Discretization settings of one node model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcmParameters {
    pub resolution: [usize; 3],
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_depth")]
    pub octree_depth: u32,
    #[serde(default = "default_alpha")]
    pub alpha_exponent: u32,
    #[serde(default = "default_penalty")]
    pub penalty: f64,
    /// Enlargement of the domain bounding box on each side, mm.
    #[serde(default)]
    pub margin_mm: f64,
}

fn default_degree() -> usize {
    3
}
fn default_depth() -> u32 {
    4
}
fn default_alpha() -> u32 {
    10
}
fn default_penalty() -> f64 {
    DEFAULT_PENALTY
}

impl FcmParameters {
    pub fn new(resolution: [usize; 3]) -> Self {
        Self {
            resolution,
            degree: default_degree(),
            octree_depth: default_depth(),
            alpha_exponent: default_alpha(),
            penalty: DEFAULT_PENALTY,
            margin_mm: 0.0,
        }
    }

    pub fn scheme(&self) -> QuadratureScheme {
        QuadratureScheme::with_depth(self.octree_depth)
    }
}

/// Unconstrained stiffness `K = Σ_cells ∫ ε(v) : α C : ε(u)`.
///
/// Cell matrices are computed in parallel in fixed-size chunks and added in
/// cell order, so the result does not depend on the thread count.
pub fn assemble_unconstrained(grid: &CellGrid, domain: &Domain, scheme: &QuadratureScheme) -> SymCsc {
    let mut k = grid.sparsity_pattern();
    let (lambda, mu) = domain.material.lame();
    let reference = reference_cell_stiffness(grid, lambda, mu, scheme);
    for chunk in grid.active_cells().chunks(64) {
        let mats: Vec<Option<DMatrix<f64>>> = chunk
            .par_iter()
            .map(|&c| match grid.state(c as usize) {
                CellState::Inside => None,
                _ => Some(cell_stiffness(grid, domain, c as usize, scheme, &reference)),
            })
            .collect();
        for (&c, m) in chunk.iter().zip(&mats) {
            k.add_block(&grid.cell_dofs(c as usize), m.as_ref().unwrap_or(&reference));
        }
    }
    k
}

/// Assembled node model: unconstrained stiffness plus accumulated penalty
/// terms of constrained surface regions.
#[derive(Debug, Clone)]
pub struct FcmSystem {
    grid: Arc<CellGrid>,
    domain: Domain,
    stiffness: Arc<SymCsc>,
    penalty: SymCsc,
    beta: f64,
}

impl FcmSystem {
    pub fn assemble(domain: Domain, grid: Arc<CellGrid>, scheme: &QuadratureScheme, beta: f64) -> Self {
        let t0 = Instant::now();
        let stiffness = assemble_unconstrained(&grid, &domain, scheme);
        log::info!(
            "assembled {} DOFs, {} stored entries in {:.2} s",
            grid.n_dofs(),
            stiffness.nnz(),
            t0.elapsed().as_secs_f64()
        );
        let penalty = stiffness.zeros_like();
        Self {
            grid,
            domain,
            stiffness: Arc::new(stiffness),
            penalty,
            beta,
        }
    }

    /// Builds the grid from parameters and assembles.
    pub fn from_parameters(domain: Domain, params: &FcmParameters, grid_box: Option<crate::geometry::Aabb>) -> Result<Self> {
        let domain = Domain {
            alpha_exponent: params.alpha_exponent,
            ..domain
        };
        let grid = match grid_box {
            Some(b) => CellGrid::new(&domain, b, params.resolution, params.degree)?,
            None => build_grid(&domain, params.resolution, params.degree, params.margin_mm)?,
        };
        Ok(Self::assemble(domain, Arc::new(grid), &params.scheme(), params.penalty))
    }

    pub fn grid(&self) -> &Arc<CellGrid> {
        &self.grid
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn stiffness(&self) -> &Arc<SymCsc> {
        &self.stiffness
    }

    pub fn penalty_matrix(&self) -> &SymCsc {
        &self.penalty
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_dofs(&self) -> usize {
        self.grid.n_dofs()
    }

    pub fn surface_quadrature(&self, triangles: &[[Point3<f64>; 3]]) -> Result<SurfaceQuadrature> {
        surface_quadrature(&self.grid, &self.domain, triangles)
    }

    /// Adds `β ∫ Nᵀ N` over a region to the constraint matrix.
    pub fn constrain(&mut self, region: &SurfaceQuadrature) {
        add_penalty_matrix(&self.grid, region, self.beta, &mut self.penalty);
    }

    /// `β ∫ Nᵀ u_p` over a region.
    pub fn penalty_load(&self, region: &SurfaceQuadrature, prescribed: impl Fn(&Point3<f64>) -> Vector3<f64>) -> Vec<f64> {
        let mut f = surface_load(&self.grid, region, prescribed);
        f.iter_mut().for_each(|v| *v *= self.beta);
        f
    }

    /// Factorizes `K + Σ β ∫ Nᵀ N`; the handle serves any number of solves.
    pub fn factorize(&self) -> Result<Cholesky> {
        let t0 = Instant::now();
        let mut a = (*self.stiffness).clone();
        a.add_scaled(1.0, &self.penalty);
        let chol = Cholesky::factorize(Arc::new(a))?;
        log::info!("factorized {} DOFs in {:.2} s", self.n_dofs(), t0.elapsed().as_secs_f64());
        Ok(chol)
    }

    pub fn field(&self, coefficients: Vec<f64>) -> Result<ElasticField> {
        ElasticField::new(self.grid.clone(), coefficients, self.domain.material)
    }

    /// Strain energy `½ uᵀ K u` of the unconstrained stiffness.
    pub fn strain_energy(&self, coefficients: &[f64]) -> f64 {
        0.5 * self.stiffness.quadratic_form(coefficients)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::Material;
    use crate::geometry::ImplicitShape;

    fn cube(alpha: u32) -> Domain {
        let shape = ImplicitShape::Box {
            min_mm: [0.0; 3],
            max_mm: [1.0, 1.0, 1.0],
        };
        Domain::implicit(shape, alpha, Material::steel()).unwrap()
    }

    #[test]
    fn single_cell_equals_cell_matrix() {
        let d = cube(10);
        let g = build_grid(&d, [1, 1, 1], 2, 0.0).unwrap();
        let k = assemble_unconstrained(&g, &d, &QuadratureScheme::default());
        let (l, m) = d.material.lame();
        let cell = reference_cell_stiffness(&g, l, m, &QuadratureScheme::default());
        // the single cell's local order coincides with the compact numbering here
        let dofs = g.cell_dofs(0);
        let dense = k.to_dense();
        for a in 0..dofs.len() {
            for b in 0..dofs.len() {
                assert_eq!(dense[(dofs[a] as usize, dofs[b] as usize)], cell[(a, b)]);
            }
        }
    }

    #[test]
    fn rigid_translation_in_nullspace() {
        let shape = ImplicitShape::Sphere {
            center_mm: [0.5, 0.5, 0.5],
            radius_mm: 0.45,
        };
        let d = Domain::implicit(shape, 10, Material::steel()).unwrap();
        let g = build_grid(&d, [3, 3, 3], 2, 0.05).unwrap();
        let k = assemble_unconstrained(&g, &d, &QuadratureScheme::with_depth(2));
        for dir in [Vector3::x(), Vector3::y(), Vector3::z()] {
            let r = g.affine_coefficients(|_| dir);
            let res = crate::sparse::norm(&k.mul_vec(&r));
            let bound = 1e-12 * k.max_abs() * crate::sparse::norm(&r);
            assert!(res <= bound, "{res} > {bound}");
        }
        let theta = Vector3::new(0.3, -0.2, 0.1);
        let r = g.affine_coefficients(|x| theta.cross(&x.coords));
        let res = crate::sparse::norm(&k.mul_vec(&r));
        assert!(res <= 1e-12 * k.max_abs() * crate::sparse::norm(&r));
    }

    #[test]
    fn depth_does_not_touch_uncut_cells() {
        let d = cube(10);
        let g = CellGrid::new(&d, crate::geometry::Aabb::new(Point3::origin(), Point3::new(1.5, 1.0, 1.0)), [3, 2, 2], 2)
            .unwrap();
        let (l, m) = d.material.lame();
        let reference = reference_cell_stiffness(&g, l, m, &QuadratureScheme::default());
        for c in 0..g.n_cells() {
            if g.state(c) == CellState::Inside {
                let a = cell_stiffness(&g, &d, c, &QuadratureScheme::with_depth(1), &reference);
                let b = cell_stiffness(&g, &d, c, &QuadratureScheme::with_depth(3), &reference);
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let d = cube(10);
        let grid = Arc::new(build_grid(&d, [2, 2, 2], 2, 0.0).unwrap());
        let mut sys = FcmSystem::assemble(d, grid, &QuadratureScheme::default(), DEFAULT_PENALTY);
        let face = sys
            .surface_quadrature(&rectangle(Point3::origin(), Vector3::y(), Vector3::z()))
            .unwrap();
        sys.constrain(&face);
        let chol = sys.factorize().unwrap();
        let x = chol.solve(&vec![0.0; sys.n_dofs()]);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    fn solve_patch(domain: Domain, grid_box: crate::geometry::Aabb, res: [usize; 3], p: usize, depth: u32) -> f64 {
        let block = domain.bounding_box().unwrap();
        let grid = Arc::new(CellGrid::new(&domain, grid_box, res, p).unwrap());
        let mut sys = FcmSystem::assemble(domain, grid, &QuadratureScheme::with_depth(depth), DEFAULT_PENALTY);
        let a = Vector3::new(1e-3, -2e-3, 5e-4);
        let b = nalgebra::Matrix3::new(1e-3, 2e-4, -3e-4, 5e-4, -8e-4, 1e-4, 0.0, 3e-4, 6e-4);
        let exact = |x: &Point3<f64>| a + b * x.coords;
        let faces = sys.surface_quadrature(&box_faces(&block)).unwrap();
        sys.constrain(&faces);
        let f = sys.penalty_load(&faces, exact);
        let field = sys.field(sys.factorize().unwrap().solve(&f)).unwrap();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in 0..10 {
            for j in 0..10 {
                for i in 0..10 {
                    let t = Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) / 10.0;
                    let x = block.min + block.extent().component_mul(&t);
                    let e = exact(&x);
                    worst = worst.max((field.displacement(&x).unwrap() - e).norm());
                    scale = scale.max(e.norm());
                }
            }
        }
        worst / scale
    }

    fn block(min: [f64; 3], max: [f64; 3]) -> Domain {
        Domain::implicit(ImplicitShape::Box { min_mm: min, max_mm: max }, 10, Material::steel()).unwrap()
    }

    #[test]
    fn patch_test_on_fitted_block() {
        let d = block([0.0; 3], [2.0, 1.0, 1.0]);
        let b = d.bounding_box().unwrap();
        for p in [2, 3] {
            let err = solve_patch(d.clone(), b, [4, 2, 2], p, 2);
            assert!(err < 1e-6, "p={p}: {err}");
        }
    }

    #[test]
    fn patch_test_with_cut_neighbour_cells() {
        // faces on grid planes, surrounded by cut and outside cells
        let d = block([0.5, 0.5, 0.4], [1.5, 1.0, 0.8]);
        let grid_box = crate::geometry::Aabb::new(Point3::origin(), Point3::new(2.0, 1.5, 1.2));
        let err = solve_patch(d, grid_box, [4, 3, 3], 2, 3);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn patch_test_on_unaligned_block_improves_with_depth() {
        // non-aligned faces: the quadrature only approximates the domain
        let d = block([0.1, 0.05, 0.2], [1.85, 0.9, 1.1]);
        let grid_box = crate::geometry::Aabb::new(Point3::origin(), Point3::new(2.0, 1.0, 1.2));
        let coarse = solve_patch(d.clone(), grid_box, [4, 2, 3], 2, 1);
        let fine = solve_patch(d, grid_box, [4, 2, 3], 2, 4);
        assert!(fine < 0.5 * coarse, "{fine} vs {coarse}");
    }

    fn cut_bar(alpha: u32) -> Vec<Vector3<f64>> {
        let shape = ImplicitShape::Box {
            min_mm: [0.0; 3],
            max_mm: [1.3, 1.0, 1.0],
        };
        let d = Domain::implicit(shape, alpha, Material::steel()).unwrap();
        let grid_box = crate::geometry::Aabb::new(Point3::origin(), Point3::new(1.5, 1.0, 1.0));
        let grid = Arc::new(CellGrid::new(&d, grid_box, [3, 2, 2], 2).unwrap());
        let mut sys = FcmSystem::assemble(d, grid, &QuadratureScheme::with_depth(3), DEFAULT_PENALTY);
        let clamp = sys.surface_quadrature(&rectangle(Point3::origin(), Vector3::y(), Vector3::z())).unwrap();
        sys.constrain(&clamp);
        let end = sys
            .surface_quadrature(&rectangle(Point3::new(1.3, 0.0, 0.0), Vector3::y(), Vector3::z()))
            .unwrap();
        let f = neumann_load(&sys.grid, &end, |_| Vector3::new(10.0, 0.0, -5.0));
        let u = sys.factorize().unwrap().solve(&f);
        let field = sys.field(u).unwrap();
        (0..=10)
            .map(|i| field.displacement(&Point3::new(0.13 * i as f64, 0.5, 0.5)).unwrap())
            .collect()
    }

    #[test]
    fn alpha_exponent_barely_changes_solution() {
        let a = cut_bar(8);
        let b = cut_bar(10);
        let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(scale > 0.0);
        assert!(diff < 1e-4 * scale, "{diff} vs {scale}");
    }
}
