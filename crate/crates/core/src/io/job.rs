//! TOML job files: schema, validation and conversion into a [`TwoScaleJob`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::beam::{BeamElement, CrossSection, FrameModel, Material, Support};
use crate::condense::{read_matrix, SubstructureSpec, DEFAULT_DISK_RINGS, DEFAULT_DISK_SEGMENTS};
use crate::error::{Error, Result};
use crate::fcm::FcmParameters;
use crate::geometry::{load_triangle_surface, Aabb, Domain, Geometry, ImplicitShape, InterfaceSection};
use crate::scenario::CantileverOverrides;
use crate::twoscale::{SubstructureEntry, SubstructureSource, TwoScaleJob};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobFile {
    #[serde(default)]
    pub materials: Vec<NamedMaterial>,
    #[serde(default)]
    pub sections: Vec<SectionInput>,
    #[serde(default)]
    pub nodes: Vec<NodeInput>,
    #[serde(default)]
    pub elements: Vec<ElementInput>,
    #[serde(default)]
    pub supports: Vec<SupportInput>,
    #[serde(default)]
    pub loads: Vec<LoadInput>,
    #[serde(default)]
    pub substructures: Vec<SubstructureInput>,
    #[serde(default)]
    pub outputs: OutputOptions,
    /// Overrides for the built-in cantilever verification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cantilever: Option<CantileverOverrides>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMaterial {
    pub name: String,
    pub young_modulus_mpa: f64,
    pub poisson_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum SectionInput {
    Circular {
        name: String,
        radius_mm: f64,
    },
    HollowCircular {
        name: String,
        inner_radius_mm: f64,
        outer_radius_mm: f64,
    },
    Generic {
        name: String,
        area_mm2: f64,
        iy_mm4: f64,
        iz_mm4: f64,
        torsion_mm4: f64,
        shear_factor: f64,
    },
}

impl SectionInput {
    pub fn name(&self) -> &str {
        match self {
            SectionInput::Circular { name, .. }
            | SectionInput::HollowCircular { name, .. }
            | SectionInput::Generic { name, .. } => name,
        }
    }

    /// Section properties; Cowper factors use the element material's ν.
    pub fn properties(&self, nu: f64) -> Result<CrossSection> {
        match *self {
            SectionInput::Circular { radius_mm, .. } => CrossSection::circular(radius_mm, nu),
            SectionInput::HollowCircular {
                inner_radius_mm,
                outer_radius_mm,
                ..
            } => CrossSection::hollow_circular(inner_radius_mm, outer_radius_mm, nu),
            SectionInput::Generic {
                area_mm2,
                iy_mm4,
                iz_mm4,
                torsion_mm4,
                shear_factor,
                ..
            } => {
                if shear_factor > 1.0 {
                    return Err(Error::Domain(format!("shear factor must lie in (0, 1], got {shear_factor}")));
                }
                CrossSection::new(area_mm2, iy_mm4, iz_mm4, torsion_mm4, shear_factor)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeInput {
    pub id: u32,
    pub position_mm: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementInput {
    pub nodes: [u32; 2],
    pub material: String,
    pub section: String,
    /// Vector in the local x-z plane; global z when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedDof {
    All,
    Translations,
    Rotations,
    Ux,
    Uy,
    Uz,
    Rx,
    Ry,
    Rz,
}

impl FixedDof {
    fn dofs(self) -> &'static [usize] {
        match self {
            FixedDof::All => &[0, 1, 2, 3, 4, 5],
            FixedDof::Translations => &[0, 1, 2],
            FixedDof::Rotations => &[3, 4, 5],
            FixedDof::Ux => &[0],
            FixedDof::Uy => &[1],
            FixedDof::Uz => &[2],
            FixedDof::Rx => &[3],
            FixedDof::Ry => &[4],
            FixedDof::Rz => &[5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportInput {
    pub node: u32,
    pub fixed: Vec<FixedDof>,
    /// Support motion of the fixed translations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement_mm: Option<[f64; 3]>,
    /// Support motion of the fixed rotations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_rad: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadInput {
    pub node: u32,
    #[serde(default)]
    pub force_n: [f64; 3],
    #[serde(default)]
    pub moment_nmm: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstructureInput {
    pub name: String,
    /// Precomputed condensed stiffness file; excludes `geometry`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
    #[serde(default)]
    pub interfaces: Vec<InterfaceInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fcm: Option<FcmParameters>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_box_mm: Option<BoxInput>,
    #[serde(default)]
    pub local_stress: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryInput {
    Stl(PathBuf),
    Implicit(ImplicitShape),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxInput {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceInput {
    pub node: u32,
    /// Outward normal of the interface section.
    pub normal: [f64; 3],
    /// Disk centre; the frame node position when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid_mm: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_mm: Option<f64>,
    /// Explicit triangles on the node boundary instead of a disk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_mm: Option<Vec<[[f64; 3]; 3]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    #[serde(default = "yes")]
    pub vtk: bool,
    #[serde(default = "default_subdivisions")]
    pub vtk_subdivisions: usize,
}

fn yes() -> bool {
    true
}

fn default_subdivisions() -> usize {
    2
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            vtk: true,
            vtk_subdivisions: default_subdivisions(),
        }
    }
}

fn point(a: [f64; 3]) -> Point3<f64> {
    Point3::new(a[0], a[1], a[2])
}

fn vector(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn located(what: impl std::fmt::Display, e: impl std::fmt::Display) -> Error {
    Error::Job(format!("{what}: {e}"))
}

/// A parsed job together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedJob {
    pub file: JobFile,
    pub base_dir: PathBuf,
    /// Exact bytes of the job file.
    pub bytes: Vec<u8>,
}

impl LoadedJob {
    pub fn from_path(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| located(path.display(), e))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let file = parse_job(&bytes).map_err(|e| match e {
            Error::Job(m) => Error::Job(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok(Self { file, base_dir, bytes })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Files referenced by the job (STL geometry and precomputed matrices).
    pub fn referenced_files(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for s in &self.file.substructures {
            if let Some(m) = &s.matrix {
                out.push(self.resolve(m));
            }
            if let Some(GeometryInput::Stl(p)) = &s.geometry {
                out.push(self.resolve(p));
            }
        }
        out
    }

    pub fn to_job(&self) -> Result<TwoScaleJob> {
        build_job(&self.file, |p| self.resolve(p))
    }
}

/// Parses and validates a job document. Syntax errors carry line and column.
pub fn parse_job(bytes: &[u8]) -> Result<JobFile> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Job(format!("job file is not UTF-8 at byte {}", e.valid_up_to())))?;
    let file: JobFile = toml::from_str(text).map_err(|e| Error::Job(e.to_string().trim_end().to_string()))?;
    check_references(&file)?;
    Ok(file)
}

fn check_references(file: &JobFile) -> Result<()> {
    let mut names = BTreeSet::new();
    for (i, m) in file.materials.iter().enumerate() {
        if !names.insert(m.name.as_str()) {
            return Err(located(format!("materials[{i}]"), format!("duplicate material `{}`", m.name)));
        }
        Material::new(m.young_modulus_mpa, m.poisson_ratio).map_err(|e| located(format!("materials[{i}]"), e))?;
    }
    let mut names = BTreeSet::new();
    for (i, s) in file.sections.iter().enumerate() {
        if !names.insert(s.name()) {
            return Err(located(format!("sections[{i}]"), format!("duplicate section `{}`", s.name())));
        }
    }
    let mut ids = BTreeSet::new();
    for (i, n) in file.nodes.iter().enumerate() {
        if !ids.insert(n.id) {
            return Err(located(format!("nodes[{i}]"), format!("duplicate node id {}", n.id)));
        }
        if n.position_mm.iter().any(|v| !v.is_finite()) {
            return Err(located(format!("nodes[{i}]"), "position must be finite"));
        }
    }
    let node = |what: String, id: u32| {
        if ids.contains(&id) {
            Ok(())
        } else {
            Err(located(what, format!("unknown node {id}")))
        }
    };
    for (i, e) in file.elements.iter().enumerate() {
        node(format!("elements[{i}].nodes"), e.nodes[0])?;
        node(format!("elements[{i}].nodes"), e.nodes[1])?;
        if !file.materials.iter().any(|m| m.name == e.material) {
            return Err(located(format!("elements[{i}].material"), format!("unknown material `{}`", e.material)));
        }
        if !file.sections.iter().any(|s| s.name() == e.section) {
            return Err(located(format!("elements[{i}].section"), format!("unknown section `{}`", e.section)));
        }
    }
    let mut supported = BTreeSet::new();
    for (i, s) in file.supports.iter().enumerate() {
        node(format!("supports[{i}].node"), s.node)?;
        if !supported.insert(s.node) {
            return Err(located(format!("supports[{i}]"), format!("node {} is supported twice", s.node)));
        }
        if s.fixed.is_empty() {
            return Err(located(format!("supports[{i}].fixed"), "no fixed DOFs listed"));
        }
    }
    for (i, l) in file.loads.iter().enumerate() {
        node(format!("loads[{i}].node"), l.node)?;
    }
    let mut names = BTreeSet::new();
    for (i, s) in file.substructures.iter().enumerate() {
        let at = format!("substructures[{i}] `{}`", s.name);
        if s.name.is_empty() || s.name.contains(['/', '\\']) {
            return Err(located(at, "name must be non-empty and free of path separators"));
        }
        if !names.insert(s.name.as_str()) {
            return Err(located(at, "duplicate substructure name"));
        }
        match (&s.matrix, &s.geometry) {
            (Some(_), Some(_)) => return Err(located(at, "give either `matrix` or `geometry`, not both")),
            (None, None) => return Err(located(at, "missing `matrix` or `geometry`")),
            (Some(_), None) => {
                if s.local_stress {
                    return Err(located(at, "local stress needs `geometry`"));
                }
            }
            (None, Some(_)) => {
                let Some(m) = &s.material else {
                    return Err(located(at, "missing `material`"));
                };
                if !file.materials.iter().any(|x| &x.name == m) {
                    return Err(located(format!("{at}.material"), format!("unknown material `{m}`")));
                }
                if s.fcm.is_none() {
                    return Err(located(at, "missing `fcm` parameters"));
                }
            }
        }
        if s.interfaces.is_empty() {
            return Err(located(at, "at least one interface is required (k = 6 per interface)"));
        }
        let mut attached = BTreeSet::new();
        for (j, f) in s.interfaces.iter().enumerate() {
            let what = format!("{at}.interfaces[{j}]");
            node(what.clone(), f.node)?;
            if !attached.insert(f.node) {
                return Err(located(what, format!("node {} is attached twice", f.node)));
            }
            if s.geometry.is_some() && f.radius_mm.is_some() == f.patch_mm.is_some() {
                return Err(located(what, "give exactly one of `radius_mm` or `patch_mm`"));
            }
        }
    }
    Ok(())
}

/// Frame model of the job (beams, supports, loads; no superelements).
pub fn build_frame(file: &JobFile) -> Result<FrameModel> {
    let materials: BTreeMap<&str, Material> = file
        .materials
        .iter()
        .map(|m| Ok((m.name.as_str(), Material::new(m.young_modulus_mpa, m.poisson_ratio)?)))
        .collect::<Result<_>>()?;
    let sections: BTreeMap<&str, &SectionInput> = file.sections.iter().map(|s| (s.name(), s)).collect();
    let mut frame = FrameModel::new();
    for n in &file.nodes {
        frame.add_node(n.id, point(n.position_mm));
    }
    for (i, e) in file.elements.iter().enumerate() {
        let material = materials[e.material.as_str()];
        let section = sections[e.section.as_str()]
            .properties(material.poisson_ratio())
            .map_err(|err| located(format!("elements[{i}].section"), err))?;
        frame.elements.push(BeamElement {
            nodes: e.nodes,
            material,
            section,
            reference: vector(e.reference.unwrap_or([0.0, 0.0, 1.0])),
        });
    }
    for s in &file.supports {
        let mut support = Support {
            fixed: [false; 6],
            prescribed: [0.0; 6],
        };
        for f in &s.fixed {
            for &d in f.dofs() {
                support.fixed[d] = true;
            }
        }
        let motion = [s.displacement_mm.unwrap_or_default(), s.rotation_rad.unwrap_or_default()].concat();
        for d in 0..6 {
            if support.fixed[d] {
                support.prescribed[d] = motion[d];
            }
        }
        frame.set_support(s.node, support);
    }
    for l in &file.loads {
        frame.add_load(l.node, [l.force_n, l.moment_nmm].concat().try_into().expect("six entries"));
    }
    Ok(frame)
}

/// Substructure spec of one geometry-based entry.
pub fn build_spec(
    file: &JobFile,
    s: &SubstructureInput,
    resolve: impl Fn(&Path) -> PathBuf,
) -> Result<SubstructureSpec> {
    let at = format!("substructure `{}`", s.name);
    let m = file
        .materials
        .iter()
        .find(|m| Some(&m.name) == s.material.as_ref())
        .ok_or_else(|| located(&at, "missing material"))?;
    let material = Material::new(m.young_modulus_mpa, m.poisson_ratio)?;
    let fcm = s.fcm.ok_or_else(|| located(&at, "missing `fcm` parameters"))?;
    let geometry = match s.geometry.as_ref().ok_or_else(|| located(&at, "missing geometry"))? {
        GeometryInput::Implicit(shape) => Geometry::Implicit(shape.clone()),
        GeometryInput::Stl(p) => {
            let path = resolve(p);
            let bytes = fs::read(&path).map_err(|e| located(path.display(), e))?;
            let surface = load_triangle_surface(&bytes).map_err(|e| located(path.display(), e))?;
            Geometry::Surface(std::sync::Arc::new(surface))
        }
    };
    let domain = Domain::new(geometry, fcm.alpha_exponent, material).map_err(|e| located(&at, e))?;
    let mut interfaces = Vec::with_capacity(s.interfaces.len());
    for (j, f) in s.interfaces.iter().enumerate() {
        let what = format!("{at}, interface {j}");
        let node = file
            .nodes
            .iter()
            .find(|n| n.id == f.node)
            .ok_or_else(|| located(&what, format!("unknown node {}", f.node)))?;
        let section = match (&f.radius_mm, &f.patch_mm) {
            (Some(r), None) => {
                InterfaceSection::disk(point(f.centroid_mm.unwrap_or(node.position_mm)), vector(f.normal), *r, f.node)
            }
            (None, Some(tris)) => {
                let tris = tris.iter().map(|t| [point(t[0]), point(t[1]), point(t[2])]).collect();
                InterfaceSection::patch(tris, vector(f.normal), f.node)
            }
            _ => return Err(located(what, "give exactly one of `radius_mm` or `patch_mm`")),
        }
        .map_err(|e| located(&what, e))?;
        interfaces.push(section);
    }
    let mut spec = SubstructureSpec::new(domain, interfaces, fcm);
    spec.disk_rings = DEFAULT_DISK_RINGS;
    spec.disk_segments = DEFAULT_DISK_SEGMENTS;
    if let Some(b) = s.grid_box_mm {
        spec = spec.with_grid_box(Aabb::new(point(b.min), point(b.max)));
    }
    spec.validate().map_err(|e| located(&at, e))?;
    Ok(spec)
}

/// Converts a validated job document into the pipeline's job type.
pub fn build_job(file: &JobFile, resolve: impl Fn(&Path) -> PathBuf) -> Result<TwoScaleJob> {
    let frame = build_frame(file)?;
    let mut substructures = Vec::with_capacity(file.substructures.len());
    for s in &file.substructures {
        let source = match &s.matrix {
            Some(p) => {
                let path = resolve(p);
                let f = fs::File::open(&path).map_err(|e| located(path.display(), e))?;
                let c = read_matrix(std::io::BufReader::new(f)).map_err(|e| located(path.display(), e))?;
                let nodes: Vec<u32> = s.interfaces.iter().map(|f| f.node).collect();
                if c.nodes() != nodes {
                    return Err(located(
                        format!("substructure `{}`", s.name),
                        format!("matrix couples nodes {:?} but the interfaces list {:?}", c.nodes(), nodes),
                    ));
                }
                SubstructureSource::Precomputed(c)
            }
            None => SubstructureSource::Spec(Box::new(build_spec(file, s, &resolve)?)),
        };
        substructures.push(SubstructureEntry {
            name: s.name.clone(),
            source,
            local_stress: s.local_stress,
        });
    }
    Ok(TwoScaleJob { frame, substructures })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FRAME: &str = r#"
[[materials]]
name = "steel"
young_modulus_mpa = 2.0e5
poisson_ratio = 0.3

[[sections]]
name = "rod"
shape = "circular"
radius_mm = 30.0

[[nodes]]
id = 1
position_mm = [0.0, 0.0, 0.0]

[[nodes]]
id = 2
position_mm = [100.0, 0.0, 0.0]

[[elements]]
nodes = [1, 2]
material = "steel"
section = "rod"

[[supports]]
node = 1
fixed = ["all"]

[[loads]]
node = 2
force_n = [0.0, 0.0, 1.0]
"#;

    #[test]
    fn frame_job_builds() {
        let file = parse_job(FRAME.as_bytes()).unwrap();
        let frame = build_frame(&file).unwrap();
        assert_eq!(frame.nodes.len(), 2);
        assert_eq!(frame.supports[&1], Support::clamped());
        assert_eq!(frame.loads[&2], [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(frame.elements[0].section, CrossSection::circular(30.0, 0.3).unwrap());
    }

    #[test]
    fn unknown_key_is_located() {
        let text = FRAME.replace("radius_mm = 30.0", "radius_mm = 30.0\ndiameter = 60.0");
        let err = parse_job(text.as_bytes()).unwrap_err().to_string();
        // the tagged section table is reported at its header
        assert!(err.contains("line 7"), "{err}");
        assert!(err.contains("diameter"), "{err}");
    }

    #[test]
    fn missing_reference_is_named() {
        let text = FRAME.replace("section = \"rod\"", "section = \"bar\"");
        let err = parse_job(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("elements[0].section") && err.contains("bar"), "{err}");
        let text = FRAME.replace("node = 2\nforce_n", "node = 7\nforce_n");
        let err = parse_job(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("loads[0].node") && err.contains('7'), "{err}");
    }

    #[test]
    fn substructure_needs_interfaces() {
        let text = format!(
            "{FRAME}\n[[substructures]]\nname = \"j\"\nmaterial = \"steel\"\nfcm = {{ resolution = [2, 2, 2] }}\n\
             geometry = {{ implicit = {{ kind = \"sphere\", center_mm = [0.0, 0.0, 0.0], radius_mm = 10.0 }} }}\n"
        );
        let err = parse_job(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("at least one interface"), "{err}");
    }

    #[test]
    fn support_motion_applies_to_fixed_dofs_only() {
        let text = FRAME.replace(
            "fixed = [\"all\"]",
            "fixed = [\"translations\", \"rx\"]\ndisplacement_mm = [1.0, 2.0, 3.0]\nrotation_rad = [0.1, 0.2, 0.3]",
        );
        let frame = build_frame(&parse_job(text.as_bytes()).unwrap()).unwrap();
        let s = frame.supports[&1];
        assert_eq!(s.fixed, [true, true, true, true, false, false]);
        assert_eq!(s.prescribed, [1.0, 2.0, 3.0, 0.1, 0.0, 0.0]);
    }

    #[test]
    fn round_trips_through_serde() {
        let file = parse_job(FRAME.as_bytes()).unwrap();
        let text = toml::to_string(&file).unwrap();
        assert_eq!(parse_job(text.as_bytes()).unwrap(), file);
    }
}
