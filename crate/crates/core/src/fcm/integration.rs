use nalgebra::{DMatrix, Point3};
use serde::{Deserialize, Serialize};

use super::basis::{functions_per_cell, integrated_legendre};
use super::grid::{classify_box, CellGrid, CellState};
use crate::geometry::{Aabb, Domain};

/// Gauss-Legendre points and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Octree depth for cut cells and Gauss points per direction per leaf
/// (`None` means `p + 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureScheme {
    pub depth: u32,
    pub points_per_direction: Option<usize>,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        Self {
            depth: 4,
            points_per_direction: None,
        }
    }
}

impl QuadratureScheme {
    pub fn with_depth(depth: u32) -> Self {
        Self {
            depth,
            points_per_direction: None,
        }
    }

    pub fn points(&self, p: usize) -> usize {
        self.points_per_direction.unwrap_or(p + 1)
    }
}

/// Sub-box of a cell in reference coordinates.
pub type RefBox = [[f64; 2]; 3];

const FULL: RefBox = [[-1.0, 1.0]; 3];

fn physical_box(cell: &Aabb, r: &RefBox) -> Aabb {
    let map = |k: usize, t: f64| cell.min[k] + 0.5 * (t + 1.0) * (cell.max[k] - cell.min[k]);
    Aabb::new(
        Point3::new(map(0, r[0][0]), map(1, r[1][0]), map(2, r[2][0])),
        Point3::new(map(0, r[0][1]), map(1, r[1][1]), map(2, r[2][1])),
    )
}

/// Octree leaves of a cell: sub-boxes whose 27 samples disagree are split
/// until `depth`; sub-boxes with all samples outside are kept too, since
/// the indicator is evaluated per quadrature point.
pub fn octree_leaves(domain: &Domain, cell: &Aabb, depth: u32) -> Vec<RefBox> {
    let mut out = Vec::new();
    split(domain, cell, FULL, depth, &mut out);
    out
}

fn split(domain: &Domain, cell: &Aabb, r: RefBox, remaining: u32, out: &mut Vec<RefBox>) {
    if remaining == 0 || classify_box(domain, &physical_box(cell, &r)) != CellState::Cut {
        out.push(r);
        return;
    }
    let mid = [0.5 * (r[0][0] + r[0][1]), 0.5 * (r[1][0] + r[1][1]), 0.5 * (r[2][0] + r[2][1])];
    for c in 0..8 {
        let mut child = r;
        for k in 0..3 {
            if c >> k & 1 == 0 {
                child[k][1] = mid[k];
            } else {
                child[k][0] = mid[k];
            }
        }
        split(domain, cell, child, remaining - 1, out);
    }
}

/// Integrals `D_ij[a, b] = ∫ w ∂_i N_a ∂_j N_b` over a cell, accumulated leaf
/// by leaf with sum factorization. Entry `(i, j)` is stored at `3 i + j`,
/// indexed by the per-direction index pairs `(s1, s2, s3)`, `s_d = a_d n + b_d`.
pub struct GradientIntegrals {
    p: usize,
    nq: usize,
    h: [f64; 3],
    gauss: (Vec<f64>, Vec<f64>),
    d: [Vec<f64>; 9],
}

impl GradientIntegrals {
    pub fn new(p: usize, nq: usize, h: [f64; 3]) -> Self {
        let nb = functions_per_cell(p);
        Self {
            p,
            nq,
            h,
            gauss: gauss_legendre(nq),
            d: std::array::from_fn(|_| vec![0.0; nb * nb]),
        }
    }

    /// Physical quadrature points of a leaf, x fastest.
    pub fn leaf_points(&self, cell: &Aabb, r: &RefBox) -> Vec<Point3<f64>> {
        let nq = self.nq;
        let coord = |k: usize, q: usize| {
            let t = 0.5 * (r[k][0] + r[k][1]) + 0.5 * (r[k][1] - r[k][0]) * self.gauss.0[q];
            cell.min[k] + 0.5 * (t + 1.0) * (cell.max[k] - cell.min[k])
        };
        let mut pts = Vec::with_capacity(nq * nq * nq);
        for qz in 0..nq {
            for qy in 0..nq {
                for qx in 0..nq {
                    pts.push(Point3::new(coord(0, qx), coord(1, qy), coord(2, qz)));
                }
            }
        }
        pts
    }

    /// Adds the leaf contribution with per-point weight factors `chi`
    /// (x fastest, length `nq³`).
    pub fn add_leaf(&mut self, r: &RefBox, chi: &[f64]) {
        let n = self.p + 1;
        let nq = self.nq;
        let n2 = n * n;
        // 1D tables: f[d][k][m * nq + q], k = 0 value, k = 1 physical derivative
        let mut f = [[vec![0.0; n * nq], vec![0.0; n * nq]], [vec![0.0; n * nq], vec![0.0; n * nq]], [
            vec![0.0; n * nq],
            vec![0.0; n * nq],
        ]];
        let mut w = [vec![0.0; nq], vec![0.0; nq], vec![0.0; nq]];
        let mut v = vec![0.0; n];
        let mut dv = vec![0.0; n];
        for d in 0..3 {
            let half = 0.5 * (r[d][1] - r[d][0]);
            let mid = 0.5 * (r[d][0] + r[d][1]);
            for q in 0..nq {
                let t = mid + half * self.gauss.0[q];
                integrated_legendre(self.p, t, &mut v, &mut dv);
                for m in 0..n {
                    f[d][0][m * nq + q] = v[m];
                    f[d][1][m * nq + q] = dv[m] * 2.0 / self.h[d];
                }
                w[d][q] = self.gauss.1[q] * half * 0.5 * self.h[d];
            }
        }
        let mut weights = vec![0.0; nq * nq * nq];
        let mut any = false;
        for qz in 0..nq {
            for qy in 0..nq {
                for qx in 0..nq {
                    let idx = qx + nq * (qy + nq * qz);
                    weights[idx] = w[0][qx] * w[1][qy] * w[2][qz] * chi[idx];
                    any |= chi[idx] != 0.0;
                }
            }
        }
        if !any {
            return;
        }
        // products of 1D tables for the four (value|derivative)² variants
        let pair = |d: usize, v: usize| -> Vec<f64> {
            let (k, l) = (v >> 1, v & 1);
            let mut out = vec![0.0; n2 * nq];
            for a in 0..n {
                for b in 0..n {
                    for q in 0..nq {
                        out[(a * n + b) * nq + q] = f[d][k][a * nq + q] * f[d][l][b * nq + q];
                    }
                }
            }
            out
        };
        let pairs: [[Vec<f64>; 4]; 3] = std::array::from_fn(|d| std::array::from_fn(|v| pair(d, v)));
        // contract z once per z variant: t1[v][(qx, qy), s3]
        let t1: [Vec<f64>; 4] = std::array::from_fn(|v| {
            let pz = &pairs[2][v];
            let mut t = vec![0.0; nq * nq * n2];
            for qx in 0..nq {
                for qy in 0..nq {
                    let row = &mut t[(qx * nq + qy) * n2..(qx * nq + qy + 1) * n2];
                    for qz in 0..nq {
                        let wq = weights[qx + nq * (qy + nq * qz)];
                        if wq == 0.0 {
                            continue;
                        }
                        for s3 in 0..n2 {
                            row[s3] += wq * pz[s3 * nq + qz];
                        }
                    }
                }
            }
            t
        });
        let variant = |d: usize, i: usize, j: usize| 2 * (d == i) as usize + (d == j) as usize;
        let block = n2 * n2;
        let mut t2 = vec![0.0; nq * block];
        for i in 0..3 {
            for j in 0..3 {
                // contract y: t2[qx, (s2, s3)]
                let py = &pairs[1][variant(1, i, j)];
                let src1 = &t1[variant(2, i, j)];
                t2.iter_mut().for_each(|x| *x = 0.0);
                for qx in 0..nq {
                    for s2 in 0..n2 {
                        let out = &mut t2[qx * block + s2 * n2..qx * block + (s2 + 1) * n2];
                        for qy in 0..nq {
                            let c = py[s2 * nq + qy];
                            let src = &src1[(qx * nq + qy) * n2..(qx * nq + qy + 1) * n2];
                            for (o, s) in out.iter_mut().zip(src) {
                                *o += c * s;
                            }
                        }
                    }
                }
                // contract x into the (s1, s2, s3) ordered accumulator
                let px = &pairs[0][variant(0, i, j)];
                let dst = &mut self.d[3 * i + j];
                for s1 in 0..n2 {
                    let out = &mut dst[s1 * block..(s1 + 1) * block];
                    for qx in 0..nq {
                        let c = px[s1 * nq + qx];
                        for (o, s) in out.iter_mut().zip(&t2[qx * block..(qx + 1) * block]) {
                            *o += c * s;
                        }
                    }
                }
            }
        }
    }

    /// `D_ij[a, b]` for basis indices `a`, `b` (x fastest).
    fn entry(&self, ij: usize, a: usize, b: usize) -> f64 {
        let n = self.p + 1;
        let (a1, a2, a3) = (a % n, (a / n) % n, a / (n * n));
        let (b1, b2, b3) = (b % n, (b / n) % n, b / (n * n));
        let n2 = n * n;
        let s = ((a1 * n + b1) * n2 + (a2 * n + b2)) * n2 + (a3 * n + b3);
        self.d[ij][s]
    }

    /// Isotropic elasticity matrix from the gradient integrals; local DOF
    /// `3 a + component`.
    pub fn elasticity_matrix(&self, lambda: f64, mu: f64) -> DMatrix<f64> {
        let nb = functions_per_cell(self.p);
        let mut k = DMatrix::zeros(3 * nb, 3 * nb);
        for a in 0..nb {
            for b in 0..nb {
                let lap = self.entry(0, a, b) + self.entry(4, a, b) + self.entry(8, a, b);
                for i in 0..3 {
                    for j in 0..3 {
                        let mut v = lambda * self.entry(3 * i + j, a, b) + mu * self.entry(3 * j + i, a, b);
                        if i == j {
                            v += mu * lap;
                        }
                        k[(3 * a + i, 3 * b + j)] = v;
                    }
                }
            }
        }
        // exact symmetry
        for r in 0..3 * nb {
            for c in 0..r {
                let m = 0.5 * (k[(r, c)] + k[(c, r)]);
                k[(r, c)] = m;
                k[(c, r)] = m;
            }
        }
        k
    }
}

/// Stiffness of a fully physical cell of the grid (identical for every cell).
pub fn reference_cell_stiffness(grid: &CellGrid, lambda: f64, mu: f64, scheme: &QuadratureScheme) -> DMatrix<f64> {
    let h = grid.cell_size();
    let nq = scheme.points(grid.degree());
    let mut gi = GradientIntegrals::new(grid.degree(), nq, [h.x, h.y, h.z]);
    gi.add_leaf(&FULL, &vec![1.0; nq * nq * nq]);
    gi.elasticity_matrix(lambda, mu)
}

/// Stiffness `∫ ε(v) : α C : ε(u)` of one active cell.
///
/// Uncut cells use a single-level rule with α = 1. Cut cells integrate the
/// physical part over octree leaves with the indicator evaluated at every
/// quadrature point, using `α = α_f + (1 - α_f) χ` so that the fictitious
/// share is the exact `α_f` multiple of the full-cell matrix.
pub fn cell_stiffness(
    grid: &CellGrid,
    domain: &Domain,
    cell: usize,
    scheme: &QuadratureScheme,
    reference: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (lambda, mu) = domain.material.lame();
    match grid.state(cell) {
        CellState::Inside => reference.clone(),
        CellState::Outside => reference * domain.fictitious_alpha(),
        CellState::Cut => {
            let h = grid.cell_size();
            let nq = scheme.points(grid.degree());
            let bx = grid.cell_box(cell);
            let mut gi = GradientIntegrals::new(grid.degree(), nq, [h.x, h.y, h.z]);
            for leaf in octree_leaves(domain, &bx, scheme.depth) {
                let chi: Vec<f64> = gi
                    .leaf_points(&bx, &leaf)
                    .iter()
                    .map(|x| if domain.is_inside(x) { 1.0 } else { 0.0 })
                    .collect();
                gi.add_leaf(&leaf, &chi);
            }
            let alpha = domain.fictitious_alpha();
            let mut k = gi.elasticity_matrix(lambda, mu);
            k *= 1.0 - alpha;
            k += reference * alpha;
            k
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::Material;
    use crate::fcm::basis::shape_functions;
    use crate::fcm::grid::build_grid;
    use crate::geometry::ImplicitShape;

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for n in 1..10 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    /// Point-by-point oracle: K = Σ w Bᵀ C B with explicit strain matrices.
    fn pointwise_cell_matrix(p: usize, h: [f64; 3], lambda: f64, mu: f64, r: &RefBox, nq: usize) -> DMatrix<f64> {
        let nb = functions_per_cell(p);
        let (gx, gw) = gauss_legendre(nq);
        let mut c = DMatrix::<f64>::zeros(6, 6);
        for i in 0..3 {
            for j in 0..3 {
                c[(i, j)] = lambda;
            }
            c[(i, i)] += 2.0 * mu;
            c[(i + 3, i + 3)] = mu;
        }
        let mut k = DMatrix::zeros(3 * nb, 3 * nb);
        for qz in 0..nq {
            for qy in 0..nq {
                for qx in 0..nq {
                    let q = [qx, qy, qz];
                    let mut xi = [0.0; 3];
                    let mut w = 1.0;
                    for d in 0..3 {
                        let half = 0.5 * (r[d][1] - r[d][0]);
                        xi[d] = 0.5 * (r[d][0] + r[d][1]) + half * gx[q[d]];
                        w *= gw[q[d]] * half * 0.5 * h[d];
                    }
                    let s = shape_functions(p, xi);
                    let mut b = DMatrix::zeros(6, 3 * nb);
                    for a in 0..nb {
                        let g = [
                            s.gradients[a][0] * 2.0 / h[0],
                            s.gradients[a][1] * 2.0 / h[1],
                            s.gradients[a][2] * 2.0 / h[2],
                        ];
                        b[(0, 3 * a)] = g[0];
                        b[(1, 3 * a + 1)] = g[1];
                        b[(2, 3 * a + 2)] = g[2];
                        b[(3, 3 * a)] = g[1];
                        b[(3, 3 * a + 1)] = g[0];
                        b[(4, 3 * a + 1)] = g[2];
                        b[(4, 3 * a + 2)] = g[1];
                        b[(5, 3 * a)] = g[2];
                        b[(5, 3 * a + 2)] = g[0];
                    }
                    k += b.transpose() * &c * b * w;
                }
            }
        }
        k
    }

    #[test]
    fn sum_factorization_matches_pointwise_quadrature() {
        let h = [2.0, 3.0, 1.5];
        let (lambda, mu) = Material::steel().lame();
        for p in [1, 2, 3] {
            let nq = p + 1;
            let r: RefBox = [[-1.0, 0.0], [-0.5, 1.0], [-1.0, 1.0]];
            let mut gi = GradientIntegrals::new(p, nq, h);
            gi.add_leaf(&r, &vec![1.0; nq * nq * nq]);
            let k = gi.elasticity_matrix(lambda, mu);
            let oracle = pointwise_cell_matrix(p, h, lambda, mu, &r, nq);
            let err = (&k - &oracle).abs().max() / oracle.abs().max();
            assert!(err < 1e-13, "p={p}: {err}");
        }
    }

    fn half_space_domain(cut: f64) -> Domain {
        let shape = ImplicitShape::HalfSpace {
            point_mm: [cut, 0.0, 0.0],
            normal: [1.0, 0.0, 0.0],
        };
        Domain::implicit(shape, 10, Material::steel()).unwrap()
    }

    #[test]
    fn reference_cell_rigid_modes_and_rank() {
        let box_shape = ImplicitShape::Box {
            min_mm: [0.0; 3],
            max_mm: [1.0, 1.0, 1.0],
        };
        let d = Domain::implicit(box_shape, 10, Material::steel()).unwrap();
        let g = build_grid(&d, [1, 1, 1], 2, 0.0).unwrap();
        let (l, m) = d.material.lame();
        let k = reference_cell_stiffness(&g, l, m, &QuadratureScheme::default());
        let eig = k.clone().symmetric_eigen().eigenvalues;
        let max = eig.max();
        assert_eq!(eig.iter().filter(|v| v.abs() < 1e-9 * max).count(), 6);
        assert!(eig.min() > -1e-9 * max);
    }

    #[test]
    fn fictitious_cell_is_scaled() {
        // cell entirely outside the half space x <= -1
        let d = half_space_domain(-10.0);
        let bx_domain = half_space_domain(5.0);
        let g = CellGrid::new(&bx_domain, Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0)), [1, 1, 1], 2).unwrap();
        let (l, m) = d.material.lame();
        let scheme = QuadratureScheme::with_depth(2);
        let reference = reference_cell_stiffness(&g, l, m, &scheme);
        // force the cut path: every point outside
        let nq = 3;
        let mut gi = GradientIntegrals::new(2, nq, [1.0; 3]);
        for leaf in octree_leaves(&d, &g.cell_box(0), 2) {
            let chi: Vec<f64> = gi.leaf_points(&g.cell_box(0), &leaf).iter().map(|x| d.indicator(x)).collect();
            gi.add_leaf(&leaf, &chi);
        }
        let k = gi.elasticity_matrix(l, m);
        let expected = &reference * 1e-10;
        assert!((&k - &expected).abs().max() <= 1e-12 * expected.abs().max());
    }

    #[test]
    fn octree_converges_to_body_fitted_half_cell() {
        // planar cut not aligned with any octree level
        let cut = 0.4;
        let d = half_space_domain(cut);
        let cell = Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0));
        let g = CellGrid::new(&d, cell, [1, 1, 1], 2).unwrap();
        assert_eq!(g.state(0), CellState::Cut);
        let (l, m) = d.material.lame();
        let fitted_ref: RefBox = [[-1.0, 2.0 * cut - 1.0], [-1.0, 1.0], [-1.0, 1.0]];
        let mut oracle = GradientIntegrals::new(2, 3, [1.0; 3]);
        oracle.add_leaf(&fitted_ref, &[1.0; 27]);
        let reference = reference_cell_stiffness(&g, l, m, &QuadratureScheme::default());
        let mut body_fitted = oracle.elasticity_matrix(l, m) * (1.0 - 1e-10);
        body_fitted += &reference * 1e-10;
        let mut last = f64::INFINITY;
        for depth in 0..=4 {
            let k = cell_stiffness(&g, &d, 0, &QuadratureScheme::with_depth(depth), &reference);
            let err = (&k - &body_fitted).norm() / body_fitted.norm();
            assert!(err < last, "depth {depth}: {err} >= {last}");
            last = err;
        }
        assert!(last < 0.05);
    }
}
