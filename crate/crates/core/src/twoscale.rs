//! Local-to-global assembly of superelements and global-to-local stress
//! recovery.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam::{assemble_and_solve, FrameModel, GlobalSolution};
use crate::condense::{
    condense_substructure, read_matrix, rigid_body_modes, validate_condensed, write_matrix, CondensedStiffness,
    RigidMotion, SubstructureSpec, ValidationReport,
};
use crate::error::{Error, Result};
use crate::fcm::{gauss_legendre, CellState, ElasticField, FcmSystem, SurfaceQuadrature};
use crate::geometry::Geometry;
use crate::sparse::Cholesky;

/// Adds each condensed matrix to a copy of the frame as a superelement on the
/// nodes named by its DOF order.
pub fn assemble_superelements(frame: &FrameModel, condensed: &[CondensedStiffness]) -> Result<FrameModel> {
    let mut model = frame.clone();
    for (s, c) in condensed.iter().enumerate() {
        let k = c.k();
        if c.matrix.ncols() != k || k % 6 != 0 || c.dof_order.len() != k {
            return Err(Error::Model(format!("superelement {s}: inconsistent size {k}")));
        }
        for (i, d) in c.dof_order.iter().enumerate() {
            if d.component != i % 6 || d.node != c.dof_order[i - i % 6].node {
                return Err(Error::Model(format!("superelement {s}: DOF order must be node-major (ux..rz)")));
            }
        }
        let nodes = c.nodes();
        for n in &nodes {
            if !frame.nodes.contains_key(n) {
                return Err(Error::Model(format!("superelement {s} attaches to missing node {n}")));
            }
        }
        model.add_superelement(c.matrix.clone(), nodes);
    }
    model.validate()?;
    Ok(model)
}

/// Interface motions `(u, θ)` taken from the global solution, in the order of
/// the substructure interfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBoundaryData {
    pub nodes: Vec<u32>,
    pub values: Vec<[f64; 6]>,
}

impl LocalBoundaryData {
    pub fn zeros(nodes: Vec<u32>) -> Self {
        let values = vec![[0.0; 6]; nodes.len()];
        Self { nodes, values }
    }

    pub fn as_vector(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn from_vector(nodes: Vec<u32>, v: &[f64]) -> Result<Self> {
        if v.len() != 6 * nodes.len() {
            return Err(Error::Dimension(format!("{} values for {} interfaces", v.len(), nodes.len())));
        }
        let values = v.chunks(6).map(|c| c.try_into().expect("chunk of 6")).collect();
        Ok(Self { nodes, values })
    }
}

pub fn extract_boundary_data(solution: Option<&GlobalSolution>, nodes: &[u32]) -> Result<LocalBoundaryData> {
    let solution = solution.ok_or_else(|| Error::Unsolved("no global solution available".into()))?;
    let values = nodes
        .iter()
        .map(|&n| {
            solution
                .displacement(n)
                .ok_or_else(|| Error::Unsolved(format!("node {n} is not part of the global solution")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalBoundaryData {
        nodes: nodes.to_vec(),
        values,
    })
}

/// Constrained and factorized node model; serves any number of boundary
/// data sets.
pub struct LocalModel {
    spec: SubstructureSpec,
    system: FcmSystem,
    quadrature: Vec<SurfaceQuadrature>,
    factor: Cholesky,
    samples: Vec<(usize, [f64; 3], Point3<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressSummary {
    /// MPa
    pub max_von_mises: f64,
    /// mm
    pub location: [f64; 3],
    pub max_displacement: f64,
    pub samples: usize,
    /// N·mm
    pub strain_energy: f64,
}

pub struct LocalStress {
    pub field: ElasticField,
    pub summary: StressSummary,
}

impl LocalModel {
    pub fn new(spec: &SubstructureSpec) -> Result<Self> {
        spec.validate()?;
        let mut system = FcmSystem::from_parameters(spec.domain.clone(), &spec.fcm, spec.grid_box)?;
        let mut quadrature = Vec::with_capacity(spec.interfaces.len());
        for i in 0..spec.interfaces.len() {
            let q = system.surface_quadrature(&spec.interface_triangles(i)?)?;
            system.constrain(&q);
            quadrature.push(q);
        }
        let factor = system.factorize()?;
        let samples = stress_samples(&system);
        Ok(Self {
            spec: spec.clone(),
            system,
            quadrature,
            factor,
            samples,
        })
    }

    pub fn system(&self) -> &FcmSystem {
        &self.system
    }

    pub fn nodes(&self) -> Vec<u32> {
        self.spec.interfaces.iter().map(|s| s.node_id()).collect()
    }

    /// Plane-section load vector for interface motions `b`.
    pub fn load(&self, data: &LocalBoundaryData) -> Result<Vec<f64>> {
        if data.nodes != self.nodes() {
            return Err(Error::Dimension(format!(
                "boundary data for nodes {:?}, substructure interfaces {:?}",
                data.nodes,
                self.nodes()
            )));
        }
        let mut f = vec![0.0; self.system.n_dofs()];
        for (i, s) in self.spec.interfaces.iter().enumerate() {
            let m = RigidMotion::from_dofs(s.centroid(), &data.values[i]);
            if m.translation == Vector3::zeros() && m.rotation == Vector3::zeros() {
                continue;
            }
            let fi = self.system.penalty_load(&self.quadrature[i], |x| m.at(x));
            f.iter_mut().zip(fi).for_each(|(a, b)| *a += b);
        }
        Ok(f)
    }

    /// Resolved field for interface motions `b`. The least-squares rigid-body
    /// part of `b` is imposed exactly as an affine field and only the
    /// remainder goes through the penalty solve, so stresses are not obtained
    /// by cancellation against a large rigid displacement.
    pub fn solve(&self, data: &LocalBoundaryData) -> Result<LocalStress> {
        let (rigid, deformation) = self.split_rigid(data)?;
        let f = self.load(&deformation)?;
        let mut u = self.factor.solve(&f);
        let res = self.factor.relative_residual(&u, &f);
        if res > 1e-8 {
            return Err(Error::Factorization(format!("local solve residual {res:.2e}")));
        }
        let energy = self.system.strain_energy(&u);
        let r = self.system.grid().affine_coefficients(|x| rigid.at(x));
        u.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        let field = self.system.field(u)?;
        let summary = summarize(&field, &self.samples, energy);
        Ok(LocalStress { field, summary })
    }

    /// Splits `b = R c + d` with `R` the rigid-body modes on the interface
    /// DOFs and `c` the least-squares fit.
    fn split_rigid(&self, data: &LocalBoundaryData) -> Result<(RigidMotion, LocalBoundaryData)> {
        let centroids: Vec<Point3<f64>> = self.spec.interfaces.iter().map(|s| s.centroid()).collect();
        let origin = Point3::from(centroids.iter().map(|c| c.coords).sum::<Vector3<f64>>() / centroids.len() as f64);
        let modes = rigid_body_modes(&centroids, &origin);
        let b = DMatrix::from_column_slice(6 * centroids.len(), 1, &data.as_vector());
        let normal = modes.transpose() * &modes;
        let c = normal
            .cholesky()
            .ok_or_else(|| Error::Dimension("interface centroids do not determine a rigid motion".into()))?
            .solve(&(modes.transpose() * &b));
        let d = b - &modes * &c;
        let rigid = RigidMotion::from_dofs(origin, c.as_slice());
        Ok((rigid, LocalBoundaryData::from_vector(data.nodes.clone(), d.as_slice())?))
    }
}

/// Gauss points of cut cells that lie in the physical domain, plus the
/// vertices of a triangulated node surface.
fn stress_samples(system: &FcmSystem) -> Vec<(usize, [f64; 3], Point3<f64>)> {
    let grid = system.grid();
    let domain = system.domain();
    let (pts, _) = gauss_legendre(grid.degree() + 1);
    let mut out = Vec::new();
    for &c in grid.active_cells() {
        let c = c as usize;
        if grid.state(c) != CellState::Cut {
            continue;
        }
        for &z in &pts {
            for &y in &pts {
                for &x in &pts {
                    let xi = [x, y, z];
                    let p = grid.to_physical(c, xi);
                    if domain.is_inside(&p) {
                        out.push((c, xi, p));
                    }
                }
            }
        }
    }
    if let Geometry::Surface(s) = &domain.geometry {
        let mut verts: Vec<Point3<f64>> = s.triangles().iter().flat_map(|t| t.vertices).collect();
        verts.sort_by(|a, b| a.coords.as_slice().partial_cmp(b.coords.as_slice()).expect("finite"));
        verts.dedup();
        for v in verts {
            if let Ok((c, xi)) = grid.locate(&v) {
                out.push((c, xi, v));
            }
        }
    }
    out
}

fn summarize(field: &ElasticField, samples: &[(usize, [f64; 3], Point3<f64>)], strain_energy: f64) -> StressSummary {
    let mut best = (0.0, Point3::origin());
    let mut max_u: f64 = 0.0;
    for (c, xi, x) in samples {
        let v = field.evaluate_in_cell(*c, *xi);
        if v.von_mises > best.0 {
            best = (v.von_mises, *x);
        }
        max_u = max_u.max(v.displacement.norm());
    }
    StressSummary {
        max_von_mises: best.0,
        location: [best.1.x, best.1.y, best.1.z],
        max_displacement: max_u,
        samples: samples.len(),
        strain_energy,
    }
}

/// One-shot local analysis: builds, constrains, factorizes and solves.
pub fn local_stress_analysis(spec: &SubstructureSpec, data: &LocalBoundaryData) -> Result<LocalStress> {
    LocalModel::new(spec)?.solve(data)
}

/// Default magnitude below which a reference displacement makes the relative
/// error undefined, mm.
pub const UNDEFINED_BELOW: f64 = 1e-12;

/// `|u_ref − u_ts| / |u_ref|` per sample; `None` where `|u_ref| < eps`.
pub fn pointwise_error(u_ref: &[Vector3<f64>], u_ts: &[Vector3<f64>], eps: f64) -> Result<Vec<Option<f64>>> {
    if u_ref.len() != u_ts.len() {
        return Err(Error::Dimension(format!(
            "{} reference samples vs {} two-scale samples",
            u_ref.len(),
            u_ts.len()
        )));
    }
    Ok(u_ref
        .iter()
        .zip(u_ts)
        .map(|(r, t)| {
            let n = r.norm();
            (n >= eps).then(|| (r - t).norm() / n)
        })
        .collect())
}

/// Where a substructure's stiffness comes from.
#[derive(Debug, Clone)]
pub enum SubstructureSource {
    Spec(Box<SubstructureSpec>),
    Precomputed(CondensedStiffness),
}

#[derive(Debug, Clone)]
pub struct SubstructureEntry {
    pub name: String,
    pub source: SubstructureSource,
    pub local_stress: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TwoScaleJob {
    pub frame: FrameModel,
    pub substructures: Vec<SubstructureEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub cache: Option<PathBuf>,
}

pub struct CondensedResult {
    pub name: String,
    pub stiffness: CondensedStiffness,
    pub validation: ValidationReport,
    pub cache_hit: bool,
}

pub struct LocalResult {
    pub name: String,
    pub data: LocalBoundaryData,
    pub stress: LocalStress,
    /// `½ bᵀ K_k b`, N·mm
    pub boundary_energy: f64,
}

pub struct JobReport {
    pub model: FrameModel,
    pub solution: GlobalSolution,
    pub condensed: Vec<CondensedResult>,
    pub local: Vec<LocalResult>,
    /// Stage name and wall time in seconds, in execution order.
    pub timings: Vec<(String, f64)>,
}

/// File name of a cached matrix.
pub fn cache_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("{hash}.kmat"))
}

/// Condensed stiffness from the content-addressed cache, computing and
/// storing it on a miss. Writes go through a temporary file and a rename.
pub fn condense_cached(spec: &SubstructureSpec, cache: Option<&Path>) -> Result<(CondensedStiffness, bool)> {
    let hash = spec.hash();
    if let Some(dir) = cache {
        let path = cache_path(dir, &hash);
        if path.exists() {
            let c = read_matrix(BufReader::new(fs::File::open(&path)?))?;
            if c.provenance == hash && c.dof_order == spec.dof_order() {
                log::info!("cache hit {}", path.display());
                return Ok((c, true));
            }
            log::warn!("ignoring stale cache entry {}", path.display());
        }
    }
    let (c, _) = condense_substructure(spec)?;
    if let Some(dir) = cache {
        fs::create_dir_all(dir)?;
        let path = cache_path(dir, &hash);
        let tmp = dir.join(format!(".{hash}.{}.tmp", std::process::id()));
        {
            let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
            write_matrix(&mut f, &c)?;
            std::io::Write::flush(&mut f)?;
        }
        fs::rename(&tmp, &path)?;
    }
    Ok((c, false))
}

/// Condense → assemble → solve → local stress, with stage-tagged errors.
pub fn run_job(job: &TwoScaleJob, options: &RunOptions) -> Result<JobReport> {
    let mut timings = Vec::new();
    let t = Instant::now();
    let condensed: Vec<CondensedResult> = job
        .substructures
        .par_iter()
        .map(|s| {
            let (stiffness, cache_hit) = match &s.source {
                SubstructureSource::Precomputed(c) => (c.clone(), false),
                SubstructureSource::Spec(spec) => condense_cached(spec, options.cache.as_deref())
                    .map_err(|e| e.in_stage(format!("condense {}", s.name)))?,
            };
            let validation = validate_condensed(&stiffness.matrix, Some(stiffness.asymmetry));
            if !validation.passed {
                log::warn!("superelement {} failed validation: {:?}", s.name, validation.messages);
            }
            Ok(CondensedResult {
                name: s.name.clone(),
                stiffness,
                validation,
                cache_hit,
            })
        })
        .collect::<Result<_>>()?;
    timings.push(("condense".to_string(), t.elapsed().as_secs_f64()));

    for s in &job.substructures {
        if let SubstructureSource::Spec(spec) = &s.source {
            for w in centroid_mismatches(spec, &job.frame) {
                log::warn!("{}: {w}", s.name);
            }
        }
    }

    let t = Instant::now();
    let stiffnesses: Vec<CondensedStiffness> = condensed.iter().map(|c| c.stiffness.clone()).collect();
    let model = assemble_superelements(&job.frame, &stiffnesses).map_err(|e| e.in_stage("assemble"))?;
    timings.push(("assemble".to_string(), t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let solution = assemble_and_solve(&model).map_err(|e| e.in_stage("solve"))?;
    timings.push(("solve".to_string(), t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let local = job
        .substructures
        .par_iter()
        .zip(&condensed)
        .filter(|(s, _)| s.local_stress)
        .map(|(s, c)| {
            let stage = || format!("local stress {}", s.name);
            let SubstructureSource::Spec(spec) = &s.source else {
                return Err(Error::Model("local stress needs the node geometry, not only a matrix".into()).in_stage(stage()));
            };
            let data = extract_boundary_data(Some(&solution), &c.stiffness.nodes()).map_err(|e| e.in_stage(stage()))?;
            let stress = local_stress_analysis(spec, &data).map_err(|e| e.in_stage(stage()))?;
            let b = DMatrix::from_column_slice(c.stiffness.k(), 1, &data.as_vector());
            let boundary_energy = 0.5 * (b.transpose() * &c.stiffness.matrix * &b)[(0, 0)];
            Ok(LocalResult {
                name: s.name.clone(),
                data,
                stress,
                boundary_energy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    timings.push(("local".to_string(), t.elapsed().as_secs_f64()));

    Ok(JobReport {
        model,
        solution,
        condensed,
        local,
        timings,
    })
}

/// Interfaces whose centroid differs from the attached frame node by more
/// than 1e-6 mm.
pub fn centroid_mismatches(spec: &SubstructureSpec, frame: &FrameModel) -> Vec<String> {
    spec.interfaces
        .iter()
        .filter_map(|s| {
            let node = frame.nodes.get(&s.node_id())?;
            let d = (s.centroid() - node).norm();
            (d > 1e-6).then(|| format!("interface centroid is {d:.3e} mm away from frame node {}", s.node_id()))
        })
        .collect()
}
