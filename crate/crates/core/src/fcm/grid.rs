use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use super::basis::functions_per_cell;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Domain};
use crate::sparse::SymCsc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellState {
    /// every sample outside the physical domain; dropped from the DOF map
    Outside,
    /// every sample inside
    Inside,
    Cut,
}

/// Cartesian cell grid with a tensor-product hierarchic basis of degree `p`.
///
/// Along each axis the 1D function index of grid line `i` is `i p`, and the
/// internal mode `m >= 2` of cell `i` has index `i p + m - 1`. A 3D function
/// is a triple of such indices; only functions supported by an active cell
/// receive DOFs, three per function (`dof = 3 f + component`).
#[derive(Debug, Clone)]
pub struct CellGrid {
    bbox: Aabb,
    resolution: [usize; 3],
    p: usize,
    h: Vector3<f64>,
    states: Vec<CellState>,
    active: Vec<u32>,
    function_ids: Vec<u32>,
    n_functions: usize,
}

const INACTIVE: u32 = u32::MAX;

/// Classification of a box by its 3×3×3 sample lattice.
pub fn classify_box(domain: &Domain, b: &Aabb) -> CellState {
    let mut inside = 0;
    for k in 0..3 {
        for j in 0..3 {
            for i in 0..3 {
                let x = Point3::new(
                    b.min.x + 0.5 * i as f64 * (b.max.x - b.min.x),
                    b.min.y + 0.5 * j as f64 * (b.max.y - b.min.y),
                    b.min.z + 0.5 * k as f64 * (b.max.z - b.min.z),
                );
                if domain.is_inside(&x) {
                    inside += 1;
                }
            }
        }
    }
    match inside {
        0 => CellState::Outside,
        27 => CellState::Inside,
        _ => CellState::Cut,
    }
}

/// Grid over the domain bounding box enlarged by `margin` (mm) on every side.
pub fn build_grid(domain: &Domain, resolution: [usize; 3], p: usize, margin: f64) -> Result<CellGrid> {
    let bbox = domain
        .bounding_box()
        .ok_or_else(|| Error::Grid("domain has no finite bounding box; give the grid box explicitly".into()))?;
    CellGrid::new(domain, bbox.expanded(margin), resolution, p)
}

impl CellGrid {
    pub fn new(domain: &Domain, bbox: Aabb, resolution: [usize; 3], p: usize) -> Result<Self> {
        if resolution.iter().any(|&n| n == 0) {
            return Err(Error::Grid(format!("resolution must be at least 1 per axis, got {resolution:?}")));
        }
        if !(1..=8).contains(&p) {
            return Err(Error::Grid(format!("polynomial degree must lie in 1..=8, got {p}")));
        }
        let extent = bbox.extent();
        if !(extent.x > 0.0 && extent.y > 0.0 && extent.z > 0.0) {
            return Err(Error::Grid(format!("degenerate grid box {bbox:?}")));
        }
        let h = Vector3::new(
            extent.x / resolution[0] as f64,
            extent.y / resolution[1] as f64,
            extent.z / resolution[2] as f64,
        );
        let n_cells = resolution.iter().product::<usize>();
        let mut grid = CellGrid {
            bbox,
            resolution,
            p,
            h,
            states: Vec::new(),
            active: Vec::new(),
            function_ids: Vec::new(),
            n_functions: 0,
        };
        grid.states = (0..n_cells)
            .into_par_iter()
            .map(|c| classify_box(domain, &grid.cell_box(c)))
            .collect();
        grid.active = (0..n_cells as u32)
            .filter(|&c| grid.states[c as usize] != CellState::Outside)
            .collect();
        if grid.active.is_empty() {
            return Err(Error::Grid("no cell intersects the physical domain".into()));
        }
        grid.number_functions();
        Ok(grid)
    }

    fn lattice(&self) -> [usize; 3] {
        [
            self.resolution[0] * self.p + 1,
            self.resolution[1] * self.p + 1,
            self.resolution[2] * self.p + 1,
        ]
    }

    fn number_functions(&mut self) {
        let g = self.lattice();
        let mut used = vec![false; g[0] * g[1] * g[2]];
        for &c in &self.active {
            for f in self.lattice_functions(c as usize) {
                used[f] = true;
            }
        }
        let mut next = 0u32;
        self.function_ids = used
            .iter()
            .map(|&u| {
                if u {
                    next += 1;
                    next - 1
                } else {
                    INACTIVE
                }
            })
            .collect();
        self.n_functions = next as usize;
    }

    fn global_1d(&self, cell: usize, mode: usize) -> usize {
        match mode {
            0 => cell * self.p,
            1 => (cell + 1) * self.p,
            m => cell * self.p + m - 1,
        }
    }

    /// Lattice function ids of a cell in local order.
    fn lattice_functions(&self, cell: usize) -> Vec<usize> {
        let [ci, cj, ck] = self.cell_coords(cell);
        let g = self.lattice();
        let n = self.p + 1;
        let mut out = Vec::with_capacity(n * n * n);
        for c in 0..n {
            let gz = self.global_1d(ck, c);
            for b in 0..n {
                let gy = self.global_1d(cj, b);
                for a in 0..n {
                    let gx = self.global_1d(ci, a);
                    out.push(gx + g[0] * (gy + g[1] * gz));
                }
            }
        }
        out
    }

    pub fn bounding_box(&self) -> Aabb {
        self.bbox
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn cell_size(&self) -> Vector3<f64> {
        self.h
    }

    pub fn n_cells(&self) -> usize {
        self.states.len()
    }

    pub fn n_functions(&self) -> usize {
        self.n_functions
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.n_functions
    }

    pub fn state(&self, cell: usize) -> CellState {
        self.states[cell]
    }

    pub fn is_active(&self, cell: usize) -> bool {
        self.states[cell] != CellState::Outside
    }

    /// Active cells in ascending index order.
    pub fn active_cells(&self) -> &[u32] {
        &self.active
    }

    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution[0] * (j + self.resolution[1] * k)
    }

    pub fn cell_coords(&self, cell: usize) -> [usize; 3] {
        let [nx, ny, _] = self.resolution;
        [cell % nx, (cell / nx) % ny, cell / (nx * ny)]
    }

    pub fn cell_box(&self, cell: usize) -> Aabb {
        let [i, j, k] = self.cell_coords(cell);
        let min = self.bbox.min + Vector3::new(i as f64 * self.h.x, j as f64 * self.h.y, k as f64 * self.h.z);
        Aabb::new(min, min + self.h)
    }

    /// Compact function ids of an active cell in local order.
    pub fn cell_functions(&self, cell: usize) -> Vec<u32> {
        self.lattice_functions(cell)
            .into_iter()
            .map(|f| self.function_ids[f])
            .collect()
    }

    /// Global DOFs of an active cell; local DOF `3 a + component`.
    pub fn cell_dofs(&self, cell: usize) -> Vec<u32> {
        let fs = self.cell_functions(cell);
        debug_assert_eq!(fs.len(), functions_per_cell(self.p));
        fs.iter().flat_map(|&f| (0..3).map(move |c| 3 * f + c)).collect()
    }

    pub fn to_reference(&self, cell: usize, x: &Point3<f64>) -> [f64; 3] {
        let b = self.cell_box(cell);
        let mut xi = [0.0; 3];
        for k in 0..3 {
            xi[k] = 2.0 * (x[k] - b.min[k]) / self.h[k] - 1.0;
        }
        xi
    }

    pub fn to_physical(&self, cell: usize, xi: [f64; 3]) -> Point3<f64> {
        let b = self.cell_box(cell);
        Point3::new(
            b.min.x + 0.5 * (xi[0] + 1.0) * self.h.x,
            b.min.y + 0.5 * (xi[1] + 1.0) * self.h.y,
            b.min.z + 0.5 * (xi[2] + 1.0) * self.h.z,
        )
    }

    /// Active cell containing `x` and the reference coordinates of `x` in it.
    /// Points on shared faces prefer the lowest-index active cell.
    pub fn locate(&self, x: &Point3<f64>) -> Result<(usize, [f64; 3])> {
        let tol = 1e-10 * self.h.norm();
        let mut ranges = [[0usize; 2]; 3];
        for k in 0..3 {
            if !(x[k] >= self.bbox.min[k] - tol && x[k] <= self.bbox.max[k] + tol) {
                return Err(Error::OutsideGrid { x: x.x, y: x.y, z: x.z });
            }
            let n = self.resolution[k];
            let lo = ((x[k] - tol - self.bbox.min[k]) / self.h[k]).floor().max(0.0) as usize;
            let hi = ((x[k] + tol - self.bbox.min[k]) / self.h[k]).floor().max(0.0) as usize;
            ranges[k] = [lo.min(n - 1), hi.min(n - 1)];
        }
        for k in ranges[2][0]..=ranges[2][1] {
            for j in ranges[1][0]..=ranges[1][1] {
                for i in ranges[0][0]..=ranges[0][1] {
                    let c = self.cell_index(i, j, k);
                    if self.is_active(c) {
                        let mut xi = self.to_reference(c, x);
                        for v in &mut xi {
                            *v = v.clamp(-1.0, 1.0);
                        }
                        return Ok((c, xi));
                    }
                }
            }
        }
        Err(Error::OutsideGrid { x: x.x, y: x.y, z: x.z })
    }

    /// Coefficients of an affine (or trilinear) field: vertex functions take
    /// the field value at their vertex, higher modes are zero.
    pub fn affine_coefficients(&self, field: impl Fn(&Point3<f64>) -> Vector3<f64>) -> Vec<f64> {
        let g = self.lattice();
        let p = self.p;
        let mut out = vec![0.0; self.n_dofs()];
        for (lf, &f) in self.function_ids.iter().enumerate() {
            if f == INACTIVE {
                continue;
            }
            let c = [lf % g[0], (lf / g[0]) % g[1], lf / (g[0] * g[1])];
            if c.iter().any(|&i| i % p != 0) {
                continue;
            }
            let x = self.bbox.min
                + Vector3::new(
                    (c[0] / p) as f64 * self.h.x,
                    (c[1] / p) as f64 * self.h.y,
                    (c[2] / p) as f64 * self.h.z,
                );
            let v = field(&x);
            for k in 0..3 {
                out[3 * f as usize + k] = v[k];
            }
        }
        out
    }

    /// Zero matrix with the sparsity pattern of all couplings through active
    /// cells.
    pub fn sparsity_pattern(&self) -> SymCsc {
        let g = self.lattice();
        let p = self.p;
        // lattice id of each compact function
        let mut lattice_of = vec![0usize; self.n_functions];
        for (lf, &f) in self.function_ids.iter().enumerate() {
            if f != INACTIVE {
                lattice_of[f as usize] = lf;
            }
        }
        let cell_range = |idx: usize, n: usize| -> [usize; 2] {
            if idx % p == 0 {
                let v = idx / p;
                [v.saturating_sub(1), v.min(n - 1)]
            } else {
                [idx / p, idx / p]
            }
        };
        let columns: Vec<Vec<u32>> = (0..self.n_functions)
            .into_par_iter()
            .map(|f| {
                let lf = lattice_of[f];
                let coords = [lf % g[0], (lf / g[0]) % g[1], lf / (g[0] * g[1])];
                let ranges: [[usize; 2]; 3] =
                    std::array::from_fn(|d| cell_range(coords[d], self.resolution[d]));
                let mut neighbours = Vec::new();
                for gz in ranges[2][0] * p..=(ranges[2][1] + 1) * p {
                    let rz = cell_range(gz, self.resolution[2]);
                    for gy in ranges[1][0] * p..=(ranges[1][1] + 1) * p {
                        let ry = cell_range(gy, self.resolution[1]);
                        for gx in ranges[0][0] * p..=(ranges[0][1] + 1) * p {
                            let other = self.function_ids[gx + g[0] * (gy + g[1] * gz)];
                            if other == INACTIVE || (other as usize) < f {
                                continue;
                            }
                            let rx = cell_range(gx, self.resolution[0]);
                            let shared = [
                                [ranges[0][0].max(rx[0]), ranges[0][1].min(rx[1])],
                                [ranges[1][0].max(ry[0]), ranges[1][1].min(ry[1])],
                                [ranges[2][0].max(rz[0]), ranges[2][1].min(rz[1])],
                            ];
                            let mut coupled = false;
                            'search: for k in shared[2][0]..=shared[2][1] {
                                for j in shared[1][0]..=shared[1][1] {
                                    for i in shared[0][0]..=shared[0][1] {
                                        if self.is_active(self.cell_index(i, j, k)) {
                                            coupled = true;
                                            break 'search;
                                        }
                                    }
                                }
                            }
                            if coupled {
                                neighbours.push(other);
                            }
                        }
                    }
                }
                neighbours.sort_unstable();
                neighbours
            })
            .collect();
        let mut dof_columns = Vec::with_capacity(self.n_dofs());
        for (f, nb) in columns.iter().enumerate() {
            for ci in 0..3u32 {
                let mut rows = Vec::with_capacity(3 * nb.len());
                for &o in nb {
                    for cj in 0..3u32 {
                        if o as usize > f || cj >= ci {
                            rows.push(3 * o + cj);
                        }
                    }
                }
                dof_columns.push(rows);
            }
        }
        SymCsc::from_columns(self.n_dofs(), dof_columns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::Material;
    use crate::geometry::ImplicitShape;

    fn cube_domain() -> Domain {
        let shape = ImplicitShape::Box {
            min_mm: [0.0, 0.0, 0.0],
            max_mm: [2.0, 2.0, 2.0],
        };
        Domain::implicit(shape, 10, Material::steel()).unwrap()
    }

    #[test]
    fn cube_fills_grid() {
        let g = build_grid(&cube_domain(), [2, 2, 2], 2, 0.0).unwrap();
        assert_eq!(g.active_cells().len(), 8);
        assert!((0..8).all(|c| g.state(c) == CellState::Inside));
        assert_eq!(g.n_functions(), 125);
    }

    #[test]
    fn sphere_drops_corners() {
        let shape = ImplicitShape::Sphere {
            center_mm: [0.0, 0.0, 0.0],
            radius_mm: 0.99,
        };
        let d = Domain::implicit(shape, 10, Material::steel()).unwrap();
        let g = CellGrid::new(&d, Aabb::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0)), [6, 6, 6], 2).unwrap();
        for corner in [g.cell_index(0, 0, 0), g.cell_index(5, 5, 5), g.cell_index(0, 5, 0)] {
            assert_eq!(g.state(corner), CellState::Outside);
        }
        // sampling oracle: a cell is active iff one of its 27 lattice samples is inside
        for c in 0..g.n_cells() {
            let b = g.cell_box(c);
            let mut any = false;
            for k in 0..3 {
                for j in 0..3 {
                    for i in 0..3 {
                        let x = b.min + Vector3::new(i as f64, j as f64, k as f64).component_mul(&(0.5 * g.cell_size()));
                        any |= x.coords.norm() <= 0.99;
                    }
                }
            }
            assert_eq!(any, g.is_active(c), "cell {c}");
        }
    }

    #[test]
    fn shared_dofs_between_neighbours() {
        let g = build_grid(&cube_domain(), [2, 1, 1], 3, 0.0).unwrap();
        let a = g.cell_functions(0);
        let b = g.cell_functions(1);
        let shared: Vec<_> = a.iter().filter(|f| b.contains(f)).collect();
        // the face x = 1 carries (p+1)^2 functions
        assert_eq!(shared.len(), 16);
        // bijection: every active (cell, local) pair maps to a valid id and ids cover 0..n
        let mut seen = vec![false; g.n_functions()];
        for &c in g.active_cells() {
            for f in g.cell_functions(c as usize) {
                seen[f as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn pattern_covers_cell_blocks() {
        let shape = ImplicitShape::Sphere {
            center_mm: [0.0, 0.0, 0.0],
            radius_mm: 1.0,
        };
        let d = Domain::implicit(shape, 10, Material::steel()).unwrap();
        let g = build_grid(&d, [3, 3, 3], 2, 0.0).unwrap();
        let pattern = g.sparsity_pattern();
        let mut expected = std::collections::BTreeSet::new();
        for &c in g.active_cells() {
            let dofs = g.cell_dofs(c as usize);
            for &r in &dofs {
                for &s in &dofs {
                    if r >= s {
                        expected.insert((r, s));
                    }
                }
            }
        }
        assert_eq!(pattern.nnz(), expected.len());
        for (r, s) in expected {
            assert!(pattern.position(r as usize, s as usize).is_some());
        }
    }

    #[test]
    fn locate_points() {
        let g = build_grid(&cube_domain(), [2, 2, 2], 2, 0.0).unwrap();
        let (c, xi) = g.locate(&Point3::new(1.5, 0.5, 0.5)).unwrap();
        assert_eq!(c, g.cell_index(1, 0, 0));
        assert!(xi.iter().all(|v| v.abs() < 1e-12));
        assert!(g.locate(&Point3::new(2.0, 2.0, 2.0)).is_ok());
        assert!(matches!(g.locate(&Point3::new(3.0, 0.0, 0.0)), Err(Error::OutsideGrid { .. })));
    }
}
