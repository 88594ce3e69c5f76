//! Static condensation of a resolved node model onto its interface DOFs.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::time::Instant;

use nalgebra::{DMatrix, Point3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fcm::{FcmParameters, FcmSystem, SurfaceQuadrature};
use crate::geometry::{Aabb, Domain, Geometry, InterfaceSection, INTERFACE_DOF_NAMES};

/// Disk interfaces are triangulated with this many rings and sectors.
pub const DEFAULT_DISK_RINGS: usize = 12;
pub const DEFAULT_DISK_SEGMENTS: usize = 96;

/// Everything that determines a condensed stiffness.
#[derive(Debug, Clone)]
pub struct SubstructureSpec {
    pub domain: Domain,
    pub interfaces: Vec<InterfaceSection>,
    pub fcm: FcmParameters,
    /// Explicit grid box; the domain bounding box plus margin otherwise.
    pub grid_box: Option<Aabb>,
    pub disk_rings: usize,
    pub disk_segments: usize,
}

impl SubstructureSpec {
    pub fn new(domain: Domain, interfaces: Vec<InterfaceSection>, fcm: FcmParameters) -> Self {
        Self {
            domain,
            interfaces,
            fcm,
            grid_box: None,
            disk_rings: DEFAULT_DISK_RINGS,
            disk_segments: DEFAULT_DISK_SEGMENTS,
        }
    }

    pub fn with_grid_box(mut self, b: Aabb) -> Self {
        self.grid_box = Some(b);
        self
    }

    pub fn k(&self) -> usize {
        6 * self.interfaces.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.interfaces.is_empty() {
            return Err(Error::Model("substructure has no interfaces".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.interfaces {
            if !seen.insert(s.node_id()) {
                return Err(Error::Model(format!("two interfaces attach to node {}", s.node_id())));
            }
        }
        Ok(())
    }

    /// Interface DOF labels in matrix order.
    pub fn dof_order(&self) -> Vec<InterfaceDof> {
        self.interfaces
            .iter()
            .flat_map(|s| (0..6).map(move |c| InterfaceDof { node: s.node_id(), component: c }))
            .collect()
    }

    pub fn interface_triangles(&self, i: usize) -> Result<Vec<[Point3<f64>; 3]>> {
        self.interfaces[i].triangulate(self.disk_rings, self.disk_segments)
    }

    /// SHA-256 over a canonical description of geometry, material, interfaces
    /// and discretization.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"fcm-frame substructure v1\n");
        match &self.domain.geometry {
            Geometry::Implicit(shape) => {
                h.update(b"implicit ");
                h.update(serde_json::to_vec(shape).expect("shape serializes"));
            }
            Geometry::Surface(s) => {
                h.update(b"surface ");
                for t in s.triangles() {
                    for v in &t.vertices {
                        for c in v.iter() {
                            h.update(c.to_le_bytes());
                        }
                    }
                }
            }
        }
        h.update(b"\nalpha ");
        h.update(self.domain.alpha_exponent.to_le_bytes());
        let m = &self.domain.material;
        h.update(m.young_modulus().to_le_bytes());
        h.update(m.poisson_ratio().to_le_bytes());
        h.update(b"\ninterfaces ");
        h.update(serde_json::to_vec(&self.interfaces).expect("interfaces serialize"));
        h.update(b"\nfcm ");
        h.update(serde_json::to_vec(&self.fcm).expect("parameters serialize"));
        h.update(b"\ngrid ");
        h.update(serde_json::to_vec(&self.grid_box).expect("box serializes"));
        h.update(self.disk_rings.to_le_bytes());
        h.update(self.disk_segments.to_le_bytes());
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// One row/column of a condensed matrix: frame node and component
/// (0..3 translations, 3..6 rotations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InterfaceDof {
    pub node: u32,
    pub component: usize,
}

impl std::fmt::Display for InterfaceDof {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.node, INTERFACE_DOF_NAMES[self.component])
    }
}

/// Plane-section motion `u(x) = t + θ × (x − c)` (linearized rotation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub centroid: Point3<f64>,
    pub translation: Vector3<f64>,
    pub rotation: Vector3<f64>,
}

impl RigidMotion {
    pub fn from_dofs(centroid: Point3<f64>, dofs: &[f64]) -> Self {
        Self {
            centroid,
            translation: Vector3::new(dofs[0], dofs[1], dofs[2]),
            rotation: Vector3::new(dofs[3], dofs[4], dofs[5]),
        }
    }

    pub fn at(&self, x: &Point3<f64>) -> Vector3<f64> {
        self.translation + self.rotation.cross(&(x - self.centroid))
    }
}

/// Prescribed interface motions of unit case `i`: interface `i / 6` moves by
/// the unit plane-section motion of component `i % 6`; all others are held.
pub fn unit_deformation_bc(spec: &SubstructureSpec, i: usize) -> Result<Vec<(usize, RigidMotion)>> {
    let k = spec.k();
    if i >= k {
        return Err(Error::InvalidIndex { index: i, k });
    }
    Ok(spec
        .interfaces
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut dofs = [0.0; 6];
            if j == i / 6 {
                dofs[i % 6] = 1.0;
            }
            (j, RigidMotion::from_dofs(s.centroid(), &dofs))
        })
        .collect())
}

/// Columns are full-field coefficient vectors of the unit cases.
#[derive(Debug)]
pub struct ChangeOfBasis {
    pub n: DMatrix<f64>,
    pub system: FcmSystem,
    pub interface_quadrature: Vec<SurfaceQuadrature>,
    /// Relative trace mismatch of each column on its own interface.
    pub trace_errors: Vec<f64>,
    pub timings: CondenseTimings,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CondenseTimings {
    pub assemble_s: f64,
    pub factorize_s: f64,
    pub solve_s: f64,
}

const TRACE_WARNING: f64 = 1e-3;

/// Builds the node model, constrains all interfaces at once, factorizes once
/// and solves the `k` unit cases.
pub fn compute_change_of_basis(spec: &SubstructureSpec) -> Result<ChangeOfBasis> {
    spec.validate()?;
    let t0 = Instant::now();
    let mut system = FcmSystem::from_parameters(spec.domain.clone(), &spec.fcm, spec.grid_box)?;
    let mut quads = Vec::with_capacity(spec.interfaces.len());
    for (i, s) in spec.interfaces.iter().enumerate() {
        let tris = spec.interface_triangles(i)?;
        let q = system.surface_quadrature(&tris).map_err(|e| match e {
            Error::EmptyRegion(m) => Error::EmptyRegion(format!("interface {i} (node {}): {m}", s.node_id())),
            other => other,
        })?;
        system.constrain(&q);
        quads.push(q);
    }
    let assemble_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let chol = system.factorize()?;
    let factorize_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let k = spec.k();
    let n_dofs = system.n_dofs();
    let columns: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let j = i / 6;
            let motion = unit_deformation_bc(spec, i).expect("index in range")[j].1;
            system.penalty_load(&quads[j], |x| motion.at(x))
        })
        .collect();
    let mut rhs = DMatrix::zeros(n_dofs, k);
    for (i, c) in columns.iter().enumerate() {
        rhs.column_mut(i).copy_from_slice(c);
    }
    let n = chol.solve_many(&rhs);
    let solve_s = t2.elapsed().as_secs_f64();

    let mut trace_errors = vec![0.0; k];
    for i in 0..k {
        let field = system.field(n.column(i).iter().copied().collect())?;
        let motions = unit_deformation_bc(spec, i)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, m) in &motions {
            for p in &quads[*j].points {
                let u = field.evaluate_in_cell(p.cell as usize, p.xi).displacement;
                let g = m.at(&p.x);
                num += p.weight * (u - g).norm_squared();
                den += p.weight * g.norm_squared();
            }
        }
        trace_errors[i] = (num / den).sqrt();
        if trace_errors[i] > TRACE_WARNING {
            log::warn!(
                "unit case {i} ({}) deviates from its prescribed interface motion by {:.2e}",
                spec.dof_order()[i],
                trace_errors[i]
            );
        }
    }
    log::info!(
        "change of basis: {k} cases on {n_dofs} DOFs (assemble {assemble_s:.2} s, factorize {factorize_s:.2} s, solve {solve_s:.2} s)"
    );
    Ok(ChangeOfBasis {
        n,
        system,
        interface_quadrature: quads,
        trace_errors,
        timings: CondenseTimings {
            assemble_s,
            factorize_s,
            solve_s,
        },
    })
}

/// Superelement matrix with its DOF order and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedStiffness {
    pub matrix: DMatrix<f64>,
    pub dof_order: Vec<InterfaceDof>,
    pub provenance: String,
    /// `max|M − Mᵀ| / max|M|` before symmetrization.
    pub asymmetry: f64,
}

impl CondensedStiffness {
    pub fn k(&self) -> usize {
        self.matrix.nrows()
    }

    /// Frame nodes in interface order.
    pub fn nodes(&self) -> Vec<u32> {
        self.dof_order.iter().step_by(6).map(|d| d.node).collect()
    }
}

/// `Nᵀ K N`, symmetrized.
pub fn condense(k: &crate::sparse::SymCsc, n: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, _) = condense_raw(k, n)?;
    Ok(m)
}

fn condense_raw(k: &crate::sparse::SymCsc, n: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if k.dim() != n.nrows() {
        return Err(Error::Dimension(format!(
            "stiffness is {0}×{0} but the basis has {1} rows",
            k.dim(),
            n.nrows()
        )));
    }
    let kn = k.mul_mat(n);
    let m = n.transpose() * kn;
    let scale = m.amax();
    let asym = if scale > 0.0 { (&m - m.transpose()).amax() / scale } else { 0.0 };
    Ok(((&m + m.transpose()) * 0.5, asym))
}

/// Full pipeline: change of basis, then `Nᵀ K N`.
pub fn condense_substructure(spec: &SubstructureSpec) -> Result<(CondensedStiffness, ChangeOfBasis)> {
    let basis = compute_change_of_basis(spec)?;
    let (matrix, asymmetry) = condense_raw(basis.system.stiffness(), &basis.n)?;
    Ok((
        CondensedStiffness {
            matrix,
            dof_order: spec.dof_order(),
            provenance: spec.hash(),
            asymmetry,
        },
        basis,
    ))
}

/// `k × 6` matrix whose columns are the rigid motions (three translations,
/// three rotations about `origin`) expressed on interface DOFs.
pub fn rigid_body_modes(centroids: &[Point3<f64>], origin: &Point3<f64>) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(6 * centroids.len(), 6);
    for (j, c) in centroids.iter().enumerate() {
        for a in 0..3 {
            r[(6 * j + a, a)] = 1.0;
            let w = Vector3::ith(a, 1.0);
            let u = w.cross(&(c - origin));
            for b in 0..3 {
                r[(6 * j + b, 3 + a)] = u[b];
            }
            r[(6 * j + 3 + a, 3 + a)] = 1.0;
        }
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub k: usize,
    /// `max|K − Kᵀ| / max|K|` of the matrix as given.
    pub symmetry_error: f64,
    /// Asymmetry before symmetrization, when known.
    pub raw_asymmetry: Option<f64>,
    /// Largest reciprocity violation `|K_ij − K_ji|` and where.
    pub reciprocity: (usize, usize, f64),
    pub eigenvalues: Vec<f64>,
    pub lambda_max: f64,
    pub near_zero: usize,
    pub negative: Vec<f64>,
    pub passed: bool,
    pub messages: Vec<String>,
}

pub const SYMMETRY_TOL: f64 = 1e-8;
pub const RAW_ASYMMETRY_TOL: f64 = 1e-6;
pub const NULLITY_TOL: f64 = 1e-6;

/// Symmetry, spectrum and rigid-body nullity checks.
pub fn validate_condensed(matrix: &DMatrix<f64>, raw_asymmetry: Option<f64>) -> ValidationReport {
    let k = matrix.nrows();
    let mut messages = Vec::new();
    let scale = matrix.amax();
    let mut recip = (0, 0, 0.0);
    for i in 0..k {
        for j in i + 1..k {
            let d = (matrix[(i, j)] - matrix[(j, i)]).abs();
            if d > recip.2 {
                recip = (i, j, d);
            }
        }
    }
    let symmetry_error = if scale > 0.0 { recip.2 / scale } else { 0.0 };
    let sym = (matrix + matrix.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = if k > 0 {
        SymmetricEigen::new(sym).eigenvalues.iter().copied().collect()
    } else {
        Vec::new()
    };
    eigenvalues.sort_by(f64::total_cmp);
    let lambda_max = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = NULLITY_TOL * lambda_max;
    let near_zero = eigenvalues.iter().filter(|v| v.abs() < tol).count();
    let negative: Vec<f64> = eigenvalues.iter().copied().filter(|&v| v <= -tol).collect();

    let mut passed = true;
    if !matrix.iter().all(|v| v.is_finite()) {
        passed = false;
        messages.push("matrix has non-finite entries".into());
    }
    if matrix.ncols() != k || k % 6 != 0 || k == 0 {
        passed = false;
        messages.push(format!("matrix is {}×{}, expected 6p×6p", k, matrix.ncols()));
    }
    if symmetry_error > SYMMETRY_TOL {
        passed = false;
        messages.push(format!(
            "symmetry error {symmetry_error:.3e} at ({}, {}) exceeds {SYMMETRY_TOL:e}",
            recip.0, recip.1
        ));
    }
    if let Some(a) = raw_asymmetry {
        if a > RAW_ASYMMETRY_TOL {
            passed = false;
            messages.push(format!("raw asymmetry {a:.3e} before symmetrization exceeds {RAW_ASYMMETRY_TOL:e}"));
        }
    }
    if near_zero != 6 {
        passed = false;
        messages.push(format!("{near_zero} near-zero eigenvalues, expected 6 rigid-body modes"));
    }
    if !negative.is_empty() {
        passed = false;
        messages.push(format!("{} negative eigenvalue(s), smallest {:.3e}", negative.len(), negative[0]));
    }
    ValidationReport {
        k,
        symmetry_error,
        raw_asymmetry,
        reciprocity: recip,
        eigenvalues,
        lambda_max,
        near_zero,
        negative,
        passed,
        messages,
    }
}

const MATRIX_MAGIC: &str = "# fcm-frame condensed stiffness v1";

/// Text form: header lines, then one row per line in shortest round-trip
/// decimal notation.
pub fn write_matrix(out: &mut impl Write, c: &CondensedStiffness) -> Result<()> {
    let k = c.k();
    writeln!(out, "{MATRIX_MAGIC}")?;
    writeln!(out, "k {k}")?;
    writeln!(out, "provenance {}", c.provenance)?;
    writeln!(out, "asymmetry {:?}", c.asymmetry)?;
    writeln!(out, "units length=mm force=N rotation=rad K[t,t]=N/mm K[t,r]=N K[r,r]=N*mm")?;
    write!(out, "dofs")?;
    for d in &c.dof_order {
        write!(out, " {d}")?;
    }
    writeln!(out)?;
    for i in 0..k {
        let row: Vec<String> = (0..k).map(|j| format!("{:?}", c.matrix[(i, j)])).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_matrix(input: impl BufRead) -> Result<CondensedStiffness> {
    let err = |line: usize, message: String| Error::MatrixFormat { line, message };
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((n, Err(e))) => Err(err(n, e.to_string())),
            None => Err(err(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let (n, magic) = next("header")?;
    if magic.trim() != MATRIX_MAGIC {
        return Err(err(n, format!("expected `{MATRIX_MAGIC}`")));
    }
    let field = |n: usize, line: &str, key: &str| -> Result<String> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(|s| s.trim().to_string())
            .ok_or_else(|| err(n, format!("expected `{key} ...`")))
    };
    let (n, l) = next("k")?;
    let k: usize = field(n, &l, "k")?.parse().map_err(|e| err(n, format!("bad k: {e}")))?;
    let (n, l) = next("provenance")?;
    let provenance = field(n, &l, "provenance")?;
    let (n, l) = next("asymmetry")?;
    let asymmetry: f64 = field(n, &l, "asymmetry")?
        .parse()
        .map_err(|e| err(n, format!("bad asymmetry: {e}")))?;
    let (n, l) = next("units")?;
    field(n, &l, "units")?;
    let (n, l) = next("dofs")?;
    let dof_text = field(n, &l, "dofs").or_else(|_| if k == 0 && l.trim() == "dofs" { Ok(String::new()) } else { Err(err(n, "expected `dofs ...`".into())) })?;
    let mut dof_order = Vec::with_capacity(k);
    for tok in dof_text.split_whitespace() {
        let (node, comp) = tok.split_once(':').ok_or_else(|| err(n, format!("bad dof `{tok}`")))?;
        let node: u32 = node.parse().map_err(|_| err(n, format!("bad node in `{tok}`")))?;
        let component = INTERFACE_DOF_NAMES
            .iter()
            .position(|&c| c == comp)
            .ok_or_else(|| err(n, format!("bad component in `{tok}`")))?;
        dof_order.push(InterfaceDof { node, component });
    }
    if dof_order.len() != k {
        return Err(err(n, format!("{} dofs listed, k = {k}", dof_order.len())));
    }
    let mut matrix = DMatrix::zeros(k, k);
    for i in 0..k {
        let (n, l) = next("matrix row")?;
        let vals: Vec<&str> = l.split_whitespace().collect();
        if vals.len() != k {
            return Err(err(n, format!("row {i} has {} values, expected {k}", vals.len())));
        }
        for (j, v) in vals.iter().enumerate() {
            matrix[(i, j)] = v.parse().map_err(|e| err(n, format!("bad value `{v}`: {e}")))?;
        }
    }
    Ok(CondensedStiffness {
        matrix,
        dof_order,
        provenance,
        asymmetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::{local_stiffness_timoshenko, CrossSection, Material};
    use crate::fcm::DEFAULT_PENALTY;
    use crate::geometry::ImplicitShape;
    use crate::sparse::SymCsc;
    use proptest::prelude::*;

    fn bar_spec(p: usize, res: [usize; 3]) -> SubstructureSpec {
        let shape = ImplicitShape::Box {
            min_mm: [0.0, -1.0, -1.0],
            max_mm: [4.0, 1.0, 1.0],
        };
        let domain = Domain::implicit(shape, 10, Material::steel()).unwrap();
        let face = |x: f64, node| {
            InterfaceSection::patch(
                crate::fcm::rectangle(Point3::new(x, -1.0, -1.0), Vector3::y() * 2.0, Vector3::z() * 2.0),
                Vector3::x() * if x == 0.0 { -1.0 } else { 1.0 },
                node,
            )
            .unwrap()
        };
        let mut fcm = FcmParameters::new(res);
        fcm.degree = p;
        fcm.octree_depth = 1;
        SubstructureSpec::new(domain, vec![face(0.0, 1), face(4.0, 2)], fcm)
    }

    #[test]
    fn unit_cases() {
        let spec = bar_spec(1, [2, 1, 1]);
        let bc = unit_deformation_bc(&spec, 0).unwrap();
        assert_eq!(bc.len(), 2);
        assert_eq!(bc[0].1.at(&Point3::new(0.0, 0.3, 0.1)), Vector3::x());
        assert_eq!(bc[1].1.at(&Point3::new(4.0, 0.3, 0.1)), Vector3::zeros());
        // rotation about z at the centroid of interface 2
        let bc = unit_deformation_bc(&spec, 11).unwrap();
        let c = spec.interfaces[1].centroid();
        assert_eq!(bc[1].1.at(&c), Vector3::zeros());
        assert!((bc[1].1.at(&(c + Vector3::x())) - Vector3::y()).norm() < 1e-15);
        assert!(matches!(unit_deformation_bc(&spec, 12), Err(Error::InvalidIndex { index: 12, k: 12 })));
    }

    proptest! {
        #[test]
        fn translation_cases_superpose(a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64,
                                        x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64) {
            let spec = bar_spec(1, [2, 1, 1]);
            let p = Point3::new(x, y, z);
            let sum: Vector3<f64> = [a, b, c].iter().enumerate()
                .map(|(i, w)| unit_deformation_bc(&spec, i).unwrap()[0].1.at(&p) * *w)
                .sum();
            prop_assert!((sum - Vector3::new(a, b, c)).norm() < 1e-14);
        }
    }

    #[test]
    fn identity_basis_returns_k() {
        let k = SymCsc::from_triplets(3, &[(0, 0, 4.0), (1, 0, -1.0), (1, 1, 3.0), (2, 2, 2.0), (2, 1, 0.5)]);
        let n = DMatrix::identity(3, 3);
        assert_eq!(condense(&k, &n).unwrap(), k.to_dense());
        assert!(matches!(condense(&k, &DMatrix::identity(2, 2)), Err(Error::Dimension(_))));
    }

    #[test]
    fn beam_matrix_validates() {
        let m = Material::steel();
        let s = CrossSection::circular(30.0, m.poisson_ratio()).unwrap();
        let ke = local_stiffness_timoshenko(&m, &s, 200.0);
        let r = validate_condensed(&DMatrix::from_iterator(12, 12, ke.iter().copied()), None);
        assert!(r.passed, "{:?}", r.messages);
        assert_eq!(r.near_zero, 6);
    }

    #[test]
    fn negative_eigenvalue_flagged() {
        let mut m = DMatrix::<f64>::identity(6, 6);
        m[(2, 2)] = -0.5;
        let r = validate_condensed(&m, None);
        assert!(!r.passed);
        assert_eq!(r.negative.len(), 1);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let mut matrix = DMatrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                matrix[(i, j)] = (1.0 + i as f64).powf(7.3) / (3.0 + j as f64) * if (i + j) % 2 == 0 { 1.0 } else { -1e-9 };
            }
        }
        matrix[(0, 5)] = f64::MIN_POSITIVE;
        matrix[(5, 0)] = 1.0 / 3.0;
        let c = CondensedStiffness {
            matrix,
            dof_order: (0..6).map(|component| InterfaceDof { node: 42, component }).collect(),
            provenance: "ab12".into(),
            asymmetry: 1.25e-17,
        };
        let mut buf = Vec::new();
        write_matrix(&mut buf, &c).unwrap();
        let back = read_matrix(&buf[..]).unwrap();
        assert_eq!(back.matrix.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), c.matrix.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back, c);
        let mut again = Vec::new();
        write_matrix(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn malformed_matrix_file_reports_line() {
        let text = format!("{MATRIX_MAGIC}\nk 6\nprovenance x\nasymmetry 0.0\nunits u\ndofs 1:ux 1:uy\n");
        match read_matrix(text.as_bytes()) {
            Err(Error::MatrixFormat { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_tracks_inputs() {
        let a = bar_spec(1, [2, 1, 1]);
        let mut b = bar_spec(1, [2, 1, 1]);
        assert_eq!(a.hash(), b.hash());
        b.fcm.penalty = 1e12;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn bar_condensation_properties() {
        let spec = bar_spec(2, [4, 1, 1]);
        let (c, basis) = condense_substructure(&spec).unwrap();
        assert_eq!(c.k(), 12);
        assert_eq!(c.nodes(), vec![1, 2]);
        assert!(basis.trace_errors.iter().all(|&e| e < 1e-3), "{:?}", basis.trace_errors);
        let report = validate_condensed(&c.matrix, Some(c.asymmetry));
        assert!(report.passed, "{:?}", report.messages);

        let centroids: Vec<_> = spec.interfaces.iter().map(|s| s.centroid()).collect();
        let r = rigid_body_modes(&centroids, &Point3::new(1.0, 2.0, 3.0));
        let energy = r.transpose() * &c.matrix * &r;
        assert!(energy.amax() < NULLITY_TOL * report.lambda_max, "{}", energy.amax());

        // rigid translation on every interface gives a constant interior field
        let t = basis.n.column(0) + basis.n.column(6);
        let field = basis.system.field(t.iter().copied().collect()).unwrap();
        for x in [Point3::new(0.5, 0.2, -0.3), Point3::new(2.0, 0.0, 0.0), Point3::new(3.7, -0.9, 0.9)] {
            assert!((field.displacement(&x).unwrap() - Vector3::x()).norm() < 1e-6);
        }
    }

    #[test]
    fn stiffness_is_linear_in_young_modulus() {
        let a = bar_spec(1, [2, 1, 1]);
        let mut b = a.clone();
        b.domain.material = a.domain.material.scaled(3.0).unwrap();
        b.fcm.penalty = 3.0 * DEFAULT_PENALTY;
        let ka = condense_substructure(&a).unwrap().0.matrix;
        let kb = condense_substructure(&b).unwrap().0.matrix;
        assert!((kb - ka.clone() * 3.0).amax() <= 1e-10 * 3.0 * ka.amax());
    }
}
