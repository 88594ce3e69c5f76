use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::{DMatrix, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::element::{element_rotation, local_stiffness_timoshenko, timoshenko_shape_functions, Vector12};
use super::{CrossSection, Material};
use crate::error::{Error, Result};
use crate::sparse::{norm, Cholesky, SymCsc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamElement {
    pub nodes: [u32; 2],
    pub material: Material,
    pub section: CrossSection,
    /// Vector in the local x-z plane; global z when omitted in model files.
    pub reference: Vector3<f64>,
}

/// Per-DOF support condition. Fixed DOFs carry the prescribed value
/// (zero unless a support motion is given).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub fixed: [bool; 6],
    pub prescribed: [f64; 6],
}

impl Support {
    pub fn clamped() -> Self {
        Self {
            fixed: [true; 6],
            prescribed: [0.0; 6],
        }
    }

    pub fn pinned() -> Self {
        Self {
            fixed: [true, true, true, false, false, false],
            prescribed: [0.0; 6],
        }
    }
}

/// Condensed stiffness attached to frame nodes; DOFs ordered node by node as
/// (ux, uy, uz, rx, ry, rz) in global axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Superelement {
    pub matrix: DMatrix<f64>,
    pub nodes: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameModel {
    pub nodes: BTreeMap<u32, Point3<f64>>,
    pub elements: Vec<BeamElement>,
    pub supports: BTreeMap<u32, Support>,
    pub loads: BTreeMap<u32, [f64; 6]>,
    pub superelements: Vec<Superelement>,
}

/// Nodal displacements (mm) and rotations (rad), and support reactions (N, N·mm).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSolution {
    node_ids: Vec<u32>,
    displacements: Vec<[f64; 6]>,
    reactions: BTreeMap<u32, [f64; 6]>,
    residual: f64,
}

impl GlobalSolution {
    fn index(&self, node: u32) -> Option<usize> {
        self.node_ids.binary_search(&node).ok()
    }

    /// Rebuilds a solution from stored nodal values.
    pub fn from_parts(
        displacements: BTreeMap<u32, [f64; 6]>,
        reactions: BTreeMap<u32, [f64; 6]>,
        residual: f64,
    ) -> Self {
        Self {
            node_ids: displacements.keys().copied().collect(),
            displacements: displacements.into_values().collect(),
            reactions,
            residual,
        }
    }

    pub fn node_ids(&self) -> &[u32] {
        &self.node_ids
    }

    /// Nodal values keyed by node id.
    pub fn nodal(&self) -> BTreeMap<u32, [f64; 6]> {
        self.node_ids.iter().copied().zip(self.displacements.iter().copied()).collect()
    }

    pub fn displacement(&self, node: u32) -> Option<[f64; 6]> {
        self.index(node).map(|i| self.displacements[i])
    }

    pub fn translation(&self, node: u32) -> Option<Vector3<f64>> {
        self.displacement(node).map(|d| Vector3::new(d[0], d[1], d[2]))
    }

    /// Reactions at supported nodes; entries of free DOFs are zero.
    pub fn reactions(&self) -> &BTreeMap<u32, [f64; 6]> {
        &self.reactions
    }

    /// Relative residual of the solved free-DOF system.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Global DOF vector in node-id order.
    pub fn dof_vector(&self) -> Vec<f64> {
        self.displacements.iter().flatten().copied().collect()
    }

    pub fn max_translation(&self) -> (u32, f64) {
        self.node_ids
            .iter()
            .zip(&self.displacements)
            .map(|(&id, d)| (id, Vector3::new(d[0], d[1], d[2]).norm()))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
    }
}

impl FrameModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: u32, position: Point3<f64>) -> &mut Self {
        self.nodes.insert(id, position);
        self
    }

    pub fn add_element(&mut self, a: u32, b: u32, material: Material, section: CrossSection) -> &mut Self {
        self.elements.push(BeamElement {
            nodes: [a, b],
            material,
            section,
            reference: Vector3::z(),
        });
        self
    }

    pub fn set_support(&mut self, node: u32, support: Support) -> &mut Self {
        self.supports.insert(node, support);
        self
    }

    pub fn add_load(&mut self, node: u32, load: [f64; 6]) -> &mut Self {
        let entry = self.loads.entry(node).or_insert([0.0; 6]);
        for (e, l) in entry.iter_mut().zip(load) {
            *e += l;
        }
        self
    }

    pub fn add_superelement(&mut self, matrix: DMatrix<f64>, nodes: Vec<u32>) -> &mut Self {
        self.superelements.push(Superelement { matrix, nodes });
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.elements.iter().enumerate() {
            let [a, b] = e.nodes;
            let pa = self
                .nodes
                .get(&a)
                .ok_or_else(|| Error::Model(format!("element {i} references missing node {a}")))?;
            let pb = self
                .nodes
                .get(&b)
                .ok_or_else(|| Error::Model(format!("element {i} references missing node {b}")))?;
            if !((pb - pa).norm() > 1e-12) {
                return Err(Error::Model(format!("element {i} has zero length")));
            }
        }
        for id in self.supports.keys() {
            if !self.nodes.contains_key(id) {
                return Err(Error::Model(format!("support references missing node {id}")));
            }
        }
        for id in self.loads.keys() {
            if !self.nodes.contains_key(id) {
                return Err(Error::Model(format!("load references missing node {id}")));
            }
        }
        for (i, s) in self.superelements.iter().enumerate() {
            let k = s.matrix.nrows();
            if s.matrix.ncols() != k || k != 6 * s.nodes.len() {
                return Err(Error::Assembly(format!(
                    "superelement {i}: matrix is {}x{} but {} node(s) are attached (k must be 6 per node)",
                    s.matrix.nrows(),
                    s.matrix.ncols(),
                    s.nodes.len()
                )));
            }
            let distinct: BTreeSet<_> = s.nodes.iter().collect();
            if distinct.len() != s.nodes.len() {
                return Err(Error::Assembly(format!("superelement {i} attaches a node twice")));
            }
            for id in &s.nodes {
                if !self.nodes.contains_key(id) {
                    return Err(Error::Assembly(format!("superelement {i} attaches missing node {id}")));
                }
            }
        }
        Ok(())
    }

    fn node_index(&self) -> BTreeMap<u32, usize> {
        self.nodes.keys().enumerate().map(|(i, &id)| (id, i)).collect()
    }

    pub fn element_length(&self, element: usize) -> f64 {
        let [a, b] = self.elements[element].nodes;
        (self.nodes[&b] - self.nodes[&a]).norm()
    }

    /// Global 12×12 element stiffness `Tᵀ K_local T`.
    pub fn element_global_stiffness(&self, element: usize) -> Result<DMatrix<f64>> {
        let e = &self.elements[element];
        let [a, b] = e.nodes;
        let rot = element_rotation(&self.nodes[&a], &self.nodes[&b], &e.reference)?;
        let k = local_stiffness_timoshenko(&e.material, &e.section, rot.length);
        let t = rot.transform();
        let kg = t.transpose() * k * t;
        Ok(DMatrix::from_column_slice(12, 12, kg.as_slice()))
    }

    /// Element DOF vector (global axes) extracted from a solution.
    pub fn element_dofs(&self, element: usize, solution: &GlobalSolution) -> Result<Vector12> {
        let mut u = Vector12::zeros();
        for (n, id) in self.elements[element].nodes.iter().enumerate() {
            let d = solution
                .displacement(*id)
                .ok_or_else(|| Error::Unsolved(format!("node {id} missing from the solution")))?;
            for k in 0..6 {
                u[6 * n + k] = d[k];
            }
        }
        Ok(u)
    }

    /// Displacement at parameter `s` in [0, 1] along an element, in global axes,
    /// using the element's own Timoshenko interpolation.
    pub fn element_displacement_at(&self, element: usize, solution: &GlobalSolution, s: f64) -> Result<Vector3<f64>> {
        let e = &self.elements[element];
        let [a, b] = e.nodes;
        let rot = element_rotation(&self.nodes[&a], &self.nodes[&b], &e.reference)?;
        let u = rot.transform() * self.element_dofs(element, solution)?;
        let l = rot.length;
        let m = &e.material;
        let sec = &e.section;
        let phi = |i: f64| 12.0 * m.young_modulus() * i / (sec.kappa * m.shear_modulus() * sec.area * l * l);
        let ax = (1.0 - s) * u[0] + s * u[6];
        // bending in x-y uses rotation about z; bending in x-z has w' = -theta_y
        let nz = timoshenko_shape_functions(s, l, phi(sec.iz));
        let v = nz[0] * u[1] + nz[1] * u[5] + nz[2] * u[7] + nz[3] * u[11];
        let ny = timoshenko_shape_functions(s, l, phi(sec.iy));
        let w = ny[0] * u[2] - ny[1] * u[4] + ny[2] * u[8] - ny[3] * u[10];
        Ok(rot.to_global(&Vector3::new(ax, v, w)))
    }
}

/// Assembles beam elements and superelements, eliminates supported DOFs and
/// solves `K u = f`.
pub fn assemble_and_solve(model: &FrameModel) -> Result<GlobalSolution> {
    model.validate()?;
    let index = model.node_index();
    let ndof = 6 * index.len();
    let dof = |id: u32, k: usize| 6 * index[&id] + k;

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (i, e) in model.elements.iter().enumerate() {
        let kg = model.element_global_stiffness(i)?;
        let g: Vec<usize> = e.nodes.iter().flat_map(|&id| (0..6).map(move |k| (id, k))).map(|(id, k)| dof(id, k)).collect();
        push_block(&mut triplets, &g, &kg);
    }
    for s in &model.superelements {
        let g: Vec<usize> = s.nodes.iter().flat_map(|&id| (0..6).map(move |k| (id, k))).map(|(id, k)| dof(id, k)).collect();
        push_block(&mut triplets, &g, &s.matrix);
    }
    let full = SymCsc::from_triplets(ndof, &triplets);

    let mut prescribed = vec![None; ndof];
    for (&id, s) in &model.supports {
        for k in 0..6 {
            if s.fixed[k] {
                prescribed[dof(id, k)] = Some(s.prescribed[k]);
            }
        }
    }
    let mut f = vec![0.0; ndof];
    for (&id, load) in &model.loads {
        for k in 0..6 {
            f[dof(id, k)] += load[k];
        }
    }

    let free: Vec<usize> = (0..ndof).filter(|&i| prescribed[i].is_none()).collect();
    let mut free_pos = vec![usize::MAX; ndof];
    for (p, &i) in free.iter().enumerate() {
        free_pos[i] = p;
    }
    let mut u = vec![0.0; ndof];
    for i in 0..ndof {
        if let Some(v) = prescribed[i] {
            u[i] = v;
        }
    }
    // rhs = f_free - K_fp u_p
    let ku_p = full.mul_vec(&u);
    let rhs: Vec<f64> = free.iter().map(|&i| f[i] - ku_p[i]).collect();

    let mut residual = 0.0;
    if !free.is_empty() {
        let mut reduced = Vec::new();
        for &(i, j, v) in &triplets {
            if free_pos[i] != usize::MAX && free_pos[j] != usize::MAX {
                reduced.push((free_pos[i], free_pos[j], v));
            }
        }
        let kff = SymCsc::from_triplets(free.len(), &reduced);
        let (x, res) = solve_checked(kff, &rhs)?;
        residual = res;
        for (p, &i) in free.iter().enumerate() {
            u[i] = x[p];
        }
    }

    let ku = full.mul_vec(&u);
    let mut reactions = BTreeMap::new();
    for (&id, s) in &model.supports {
        let mut r = [0.0; 6];
        for k in 0..6 {
            if s.fixed[k] {
                let i = dof(id, k);
                r[k] = ku[i] - f[i];
            }
        }
        reactions.insert(id, r);
    }

    Ok(GlobalSolution {
        node_ids: index.keys().copied().collect(),
        displacements: u.chunks(6).map(|c| [c[0], c[1], c[2], c[3], c[4], c[5]]).collect(),
        reactions,
        residual,
    })
}

/// Pushes the lower triangle of a symmetric block.
fn push_block(triplets: &mut Vec<(usize, usize, f64)>, global: &[usize], block: &DMatrix<f64>) {
    for (a, &ga) in global.iter().enumerate() {
        for (b, &gb) in global.iter().enumerate() {
            let v = block[(a, b)];
            if ga >= gb && v != 0.0 {
                triplets.push((ga, gb, v));
            }
        }
    }
}

/// Condition limit of the diagonally scaled system beyond which the frame is
/// treated as a mechanism.
const MECHANISM_LIMIT: f64 = 1e13;

fn solve_checked(k: SymCsc, rhs: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = k.dim();
    let diag = k.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        let zeros = diag.iter().filter(|&&d| !(d > 0.0)).count();
        return Err(Error::Singular {
            zero_modes: zeros,
            detail: format!("free DOF {i} has no stiffness"),
        });
    }
    let k = Arc::new(k);
    let chol = Cholesky::factorize(k.clone())?;

    // probe: a mechanism shows up as an enormous response of the scaled system
    let probe: Vec<f64> = (0..n).map(|i| diag[i].sqrt() * if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
    let z = chol.solve(&probe);
    let scaled: Vec<f64> = (0..n).map(|i| z[i] * diag[i].sqrt()).collect();
    if norm(&scaled) > MECHANISM_LIMIT * norm(&probe) {
        let count = if n <= 3000 {
            let eig = k.to_dense().symmetric_eigen().eigenvalues;
            let max = eig.abs().max();
            eig.iter().filter(|&&v| v <= 1e-12 * max).count().max(1)
        } else {
            1
        };
        return Err(Error::Singular {
            zero_modes: count,
            detail: "near-zero pivot in the free-DOF stiffness".into(),
        });
    }

    let x = chol.solve(rhs);
    let res = chol.relative_residual(&x, rhs);
    if res > 1e-10 {
        return Err(Error::Factorization(format!("relative residual {res:e} exceeds 1e-10")));
    }
    Ok((x, res))
}

/// End forces and moments `K_local T u_e` in element-local axes. Index 6 is
/// the axial force at node b: positive in tension.
pub fn internal_actions(model: &FrameModel, element: usize, solution: &GlobalSolution) -> Result<Vector12> {
    let e = &model.elements[element];
    let [a, b] = e.nodes;
    let rot = element_rotation(&model.nodes[&a], &model.nodes[&b], &e.reference)?;
    let k = local_stiffness_timoshenko(&e.material, &e.section, rot.length);
    Ok(k * (rot.transform() * model.element_dofs(element, solution)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucklingCheck {
    pub pass: bool,
    /// compression / critical load; zero for members in tension
    pub ratio: f64,
    pub critical_load: f64,
}

/// Euler check `P_cr = π² E I_min / (K L)²`. `axial_force` is positive in
/// tension; only compression is checked.
pub fn euler_buckling_check(
    material: &Material,
    section: &CrossSection,
    length: f64,
    axial_force: f64,
    effective_length_factor: f64,
) -> BucklingCheck {
    let kl = effective_length_factor * length;
    let critical_load = std::f64::consts::PI.powi(2) * material.young_modulus() * section.min_inertia() / (kl * kl);
    let compression = (-axial_force).max(0.0);
    let ratio = compression / critical_load;
    BucklingCheck {
        pass: compression < critical_load,
        ratio,
        critical_load,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn cantilever(n_el: usize, length: f64, section: CrossSection, tip: [f64; 6]) -> FrameModel {
        let mut m = FrameModel::new();
        for i in 0..=n_el {
            m.add_node(i as u32, Point3::new(length * i as f64 / n_el as f64, 0.0, 0.0));
        }
        for i in 0..n_el {
            m.add_element(i as u32, i as u32 + 1, Material::steel(), section);
        }
        m.set_support(0, Support::clamped());
        m.add_load(n_el as u32, tip);
        m
    }

    #[test]
    fn timoshenko_cantilever_tip_deflection() {
        let sec = CrossSection::circular(30.0, 0.3).unwrap();
        let mat = Material::steel();
        let (p, l) = (1000.0, 1500.0);
        for n_el in [1, 3, 15] {
            let m = cantilever(n_el, l, sec, [0.0, 0.0, p, 0.0, 0.0, 0.0]);
            let s = assemble_and_solve(&m).unwrap();
            let exact = p * l.powi(3) / (3.0 * mat.young_modulus() * sec.iy)
                + p * l / (sec.kappa * mat.shear_modulus() * sec.area);
            let w = s.displacement(n_el as u32).unwrap()[2];
            assert!((w - exact).abs() / exact < 1e-10, "{n_el}: {w} vs {exact}");
        }
    }

    #[test]
    fn zero_load_gives_zero_displacement() {
        let sec = CrossSection::circular(10.0, 0.3).unwrap();
        let m = cantilever(4, 400.0, sec, [0.0; 6]);
        let s = assemble_and_solve(&m).unwrap();
        assert!(s.dof_vector().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prescribed_support_motion_is_exact() {
        let sec = CrossSection::circular(10.0, 0.3).unwrap();
        let mut m = cantilever(3, 300.0, sec, [0.0; 6]);
        m.set_support(
            0,
            Support {
                fixed: [true; 6],
                prescribed: [0.5, -0.25, 0.125, 0.0, 0.0, 0.0],
            },
        );
        let s = assemble_and_solve(&m).unwrap();
        assert_eq!(s.displacement(0).unwrap()[..3], [0.5, -0.25, 0.125]);
        // rigid translation of the whole cantilever
        for id in 1..=3 {
            let d = s.displacement(id).unwrap();
            assert!((d[0] - 0.5).abs() < 1e-12 && (d[1] + 0.25).abs() < 1e-12 && (d[2] - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn internal_actions_statics() {
        let sec = CrossSection::circular(20.0, 0.3).unwrap();
        let (p, l) = (250.0, 1200.0);
        let m = cantilever(4, l, sec, [0.0, 0.0, p, 0.0, 0.0, 0.0]);
        let s = assemble_and_solve(&m).unwrap();
        let root = internal_actions(&m, 0, &s).unwrap();
        // end moment at the clamp about local y equals P L
        assert!((root[4].abs() - p * l).abs() / (p * l) < 1e-10);
        assert!((root[2] + p).abs() < 1e-8);
        let r = s.reactions()[&0];
        assert!((r[2] + p).abs() < 1e-8);
        assert!((r[4] - p * l).abs() / (p * l) < 1e-10);
    }

    #[test]
    fn axial_stretch_gives_ea_over_l() {
        let sec = CrossSection::circular(5.0, 0.3).unwrap();
        let mut m = FrameModel::new();
        m.add_node(1, Point3::origin()).add_node(2, Point3::new(0.0, 200.0, 0.0));
        m.add_element(1, 2, Material::steel(), sec);
        m.set_support(1, Support::clamped());
        m.set_support(
            2,
            Support {
                fixed: [true; 6],
                prescribed: [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            },
        );
        let s = assemble_and_solve(&m).unwrap();
        let f = internal_actions(&m, 0, &s).unwrap();
        let ea_l = 2.0e5 * sec.area / 200.0;
        assert!((f[6] - ea_l).abs() / ea_l < 1e-12);
        assert!((f[0] + ea_l).abs() / ea_l < 1e-12);
    }

    #[test]
    fn rigid_motion_has_no_internal_actions() {
        let sec = CrossSection::circular(5.0, 0.3).unwrap();
        let mut m = FrameModel::new();
        m.add_node(1, Point3::new(1.0, 2.0, 3.0)).add_node(2, Point3::new(101.0, 52.0, -7.0));
        m.add_element(1, 2, Material::steel(), sec);
        let theta = Vector3::new(1e-3, -2e-3, 5e-4);
        let t = Vector3::new(0.1, 0.2, -0.3);
        let mut u = Vec::new();
        for id in [1u32, 2] {
            let x = m.nodes[&id].coords;
            let d = t + theta.cross(&x);
            u.push([d.x, d.y, d.z, theta.x, theta.y, theta.z]);
        }
        let sol = GlobalSolution {
            node_ids: vec![1, 2],
            displacements: u,
            reactions: BTreeMap::new(),
            residual: 0.0,
        };
        let f = internal_actions(&m, 0, &sol).unwrap();
        assert!(f.abs().max() < 1e-8, "{f}");
    }

    #[test]
    fn mechanism_is_reported() {
        let sec = CrossSection::circular(5.0, 0.3).unwrap();
        let mut m = cantilever(2, 200.0, sec, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        m.supports.clear();
        m.set_support(0, Support::pinned());
        match assemble_and_solve(&m) {
            Err(Error::Singular { zero_modes, .. }) => assert_eq!(zero_modes, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn superelement_must_match_node_count() {
        let sec = CrossSection::circular(5.0, 0.3).unwrap();
        let mut m = cantilever(2, 200.0, sec, [0.0; 6]);
        m.add_superelement(DMatrix::zeros(6, 6), vec![1, 2]);
        assert!(matches!(assemble_and_solve(&m), Err(Error::Assembly(_))));
        m.superelements[0] = Superelement {
            matrix: DMatrix::zeros(6, 6),
            nodes: vec![99],
        };
        assert!(matches!(assemble_and_solve(&m), Err(Error::Assembly(_))));
    }

    #[test]
    fn interpolation_matches_exact_cantilever_curve() {
        let sec = CrossSection::hollow_circular(20.0, 30.0, 0.3).unwrap();
        let mat = Material::steel();
        let (p, l) = (10.0, 400.0);
        let m = cantilever(1, l, sec, [0.0, p, p, 0.0, 0.0, 0.0]);
        let s = assemble_and_solve(&m).unwrap();
        for i in 0..=8 {
            let x = l * i as f64 / 8.0;
            let exact = p * x * x * (3.0 * l - x) / (6.0 * mat.young_modulus() * sec.iy)
                + p * x / (sec.kappa * mat.shear_modulus() * sec.area);
            let u = m.element_displacement_at(0, &s, x / l).unwrap();
            assert!((u.y - exact).abs() <= 1e-10 * exact.abs().max(1e-12), "{x}: {} {exact}", u.y);
            assert!((u.z - exact).abs() <= 1e-10 * exact.abs().max(1e-12), "{x}: {} {exact}", u.z);
        }
    }

    #[test]
    fn euler_check() {
        let mat = Material::steel();
        let sec = CrossSection::circular(14.0, 0.3).unwrap();
        let c = euler_buckling_check(&mat, &sec, 1000.0, 1000.0, 1.0);
        assert!(c.pass && c.ratio == 0.0);
        // pi^2 E (pi r^4 / 4) / L^2 with r = 14, L = 1000
        assert!((c.critical_load - 59_556.856_247_519_89).abs() < 1e-6);
        let half = euler_buckling_check(&mat, &sec, 1000.0, -0.5 * c.critical_load, 1.0);
        assert!(half.pass && (half.ratio - 0.5).abs() < 1e-15);
        let over = euler_buckling_check(&mat, &sec, 1000.0, -1.5 * c.critical_load, 1.0);
        assert!(!over.pass);
        let fixed = euler_buckling_check(&mat, &sec, 1000.0, 0.0, 0.5);
        assert!((fixed.critical_load - 4.0 * c.critical_load).abs() < 1e-6);
    }

    fn random_frame(seed: u64) -> FrameModel {
        let mut state = seed;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut m = FrameModel::new();
        for i in 0..6u32 {
            m.add_node(i, Point3::new(400.0 * rnd(), 400.0 * rnd(), 300.0 * i as f64));
        }
        let sec = CrossSection::new(300.0, 2.0e4, 3.5e4, 4.0e4, 0.8).unwrap();
        for i in 0..5u32 {
            m.add_element(i, i + 1, Material::steel(), sec);
            m.elements.last_mut().unwrap().reference = Vector3::new(rnd(), rnd(), rnd());
        }
        m.add_element(0, 3, Material::steel(), sec);
        m.set_support(0, Support::clamped());
        for i in 1..6u32 {
            m.add_load(i, [rnd() * 100.0, rnd() * 100.0, rnd() * 100.0, rnd() * 1e4, rnd() * 1e4, rnd() * 1e4]);
        }
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn frame_invariance(seed in 0u64..10_000, ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0, angle in -3.0f64..3.0) {
            let axis = Vector3::new(ax, ay, az);
            prop_assume!(axis.norm() > 1e-2);
            let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            let m = random_frame(seed);
            let mut rm = m.clone();
            for p in rm.nodes.values_mut() {
                *p = r * *p;
            }
            for e in &mut rm.elements {
                e.reference = r * e.reference;
            }
            for l in rm.loads.values_mut() {
                let f = r * Vector3::new(l[0], l[1], l[2]);
                let mo = r * Vector3::new(l[3], l[4], l[5]);
                *l = [f.x, f.y, f.z, mo.x, mo.y, mo.z];
            }
            let s = assemble_and_solve(&m).unwrap();
            let rs = assemble_and_solve(&rm).unwrap();
            let scale = s.dof_vector().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for id in m.nodes.keys() {
                let d = s.displacement(*id).unwrap();
                let rd = rs.displacement(*id).unwrap();
                let u = r * Vector3::new(d[0], d[1], d[2]);
                let t = r * Vector3::new(d[3], d[4], d[5]);
                prop_assert!((u - Vector3::new(rd[0], rd[1], rd[2])).norm() <= 1e-9 * scale);
                prop_assert!((t - Vector3::new(rd[3], rd[4], rd[5])).norm() <= 1e-9 * scale);
            }
        }

        #[test]
        fn superposition(seed in 0u64..10_000) {
            let m1 = random_frame(seed);
            let mut m2 = random_frame(seed ^ 0x5555);
            m2.nodes = m1.nodes.clone();
            m2.elements = m1.elements.clone();
            let mut both = m1.clone();
            for (id, l) in &m2.loads {
                both.add_load(*id, *l);
            }
            let a = assemble_and_solve(&m1).unwrap().dof_vector();
            let b = assemble_and_solve(&m2).unwrap().dof_vector();
            let c = assemble_and_solve(&both).unwrap().dof_vector();
            let scale = c.iter().fold(0.0f64, |x, v| x.max(v.abs()));
            for i in 0..c.len() {
                prop_assert!((a[i] + b[i] - c[i]).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn euler_bernoulli_limit() {
        let base = CrossSection::circular(10.0, 0.3).unwrap();
        let mat = Material::steel();
        let stiff = CrossSection { kappa: 1e12, ..base };
        let (p, l) = (1.0, 2000.0);
        let m = cantilever(10, l, stiff, [0.0, 0.0, p, 0.0, 0.0, 0.0]);
        let w = assemble_and_solve(&m).unwrap().displacement(10).unwrap()[2];
        let eb = p * l.powi(3) / (3.0 * mat.young_modulus() * base.iy);
        assert!((w - eb).abs() / eb < 1e-6);
    }

    #[test]
    fn tree_scale_model_solves_quickly() {
        // 985 elements in a braced lattice column
        let sec = CrossSection::circular(20.0, 0.3).unwrap();
        let mut m = FrameModel::new();
        let levels = 123;
        for k in 0..levels {
            for (j, (x, y)) in [(0.0, 0.0), (500.0, 0.0), (500.0, 500.0), (0.0, 500.0)].iter().enumerate() {
                m.add_node((4 * k + j) as u32, Point3::new(*x, *y, 400.0 * k as f64));
            }
        }
        for k in 0..levels {
            for j in 0..4 {
                let a = (4 * k + j) as u32;
                let b = (4 * k + (j + 1) % 4) as u32;
                m.add_element(a, b, Material::steel(), sec);
                if k + 1 < levels {
                    m.add_element(a, a + 4, Material::steel(), sec);
                }
            }
        }
        while m.elements.len() < 985 {
            let k = m.elements.len() % (levels - 1);
            m.add_element((4 * k) as u32, (4 * k + 6) as u32, Material::steel(), sec);
        }
        assert_eq!(m.elements.len(), 985);
        for j in 0..4 {
            m.set_support(j, Support::clamped());
        }
        m.add_load((4 * (levels - 1)) as u32, [1000.0, 500.0, -15_000.0, 0.0, 0.0, 0.0]);
        let t0 = std::time::Instant::now();
        let s = assemble_and_solve(&m).unwrap();
        let elapsed = t0.elapsed().as_secs_f64();
        assert!(s.residual() < 1e-10);
        assert!(elapsed < 1.0, "solve took {elapsed} s");
    }
}
