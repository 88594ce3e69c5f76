//! Built-in analysis scenarios: the two-scale cantilever verification and a
//! synthetic five-arm joint embedded in a small frame.

use std::path::Path;
use std::time::Instant;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::beam::{assemble_and_solve, BeamElement, CrossSection, FrameModel, GlobalSolution, Material, Support};
use crate::condense::{validate_condensed, CondensedStiffness, SubstructureSpec, ValidationReport};
use crate::error::Result;
use crate::fcm::FcmParameters;
use crate::geometry::{Aabb, Domain, ImplicitShape, InterfaceSection};
use crate::twoscale::{
    assemble_superelements, condense_cached, extract_boundary_data, pointwise_error, LocalModel, SubstructureEntry,
    SubstructureSource, TwoScaleJob, UNDEFINED_BELOW,
};

/// Optional overrides of the cantilever defaults, as given in a job file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CantileverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_lengths_mm: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_length_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_n: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_nmm: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fcm: Option<FcmParameters>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_profile: Option<bool>,
}

/// Cantilever A-B-C-D clamped at A: solid circular segments AB and CD, a
/// hollow segment BC that is condensed from a 3D model, end load at D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CantileverOptions {
    /// Lengths of AB, BC and CD.
    pub segment_lengths_mm: [f64; 3],
    pub element_length_mm: f64,
    pub radius_mm: f64,
    pub inner_radius_mm: f64,
    pub material: Material,
    pub force_n: [f64; 3],
    pub moment_nmm: [f64; 3],
    /// Discretization of the condensed segment.
    pub fcm: FcmParameters,
    /// Pass iff the largest defined pointwise error is below this value.
    pub threshold: f64,
    /// Also sample the resolved 3D field along BC (one extra factorization).
    pub local_profile: bool,
}

impl CantileverOptions {
    /// Desk resolution: 20×8×8 cells, p = 3, octree depth 3.
    pub fn desk() -> Self {
        Self {
            segment_lengths_mm: [1000.0, 200.0, 1000.0],
            element_length_mm: 100.0,
            radius_mm: 30.0,
            inner_radius_mm: 20.0,
            material: Material::steel(),
            force_n: [0.0, 0.0, 1.0],
            moment_nmm: [0.0, 0.0, 100.0],
            fcm: FcmParameters {
                octree_depth: 3,
                ..FcmParameters::new([20, 8, 8])
            },
            threshold: 5e-3,
            local_profile: true,
        }
    }

    /// Refined resolution: 24×10×10 cells, p = 3, octree depth 4.
    pub fn refined() -> Self {
        Self {
            fcm: FcmParameters {
                octree_depth: 4,
                ..FcmParameters::new([24, 10, 10])
            },
            threshold: 1e-3,
            ..Self::desk()
        }
    }

    pub fn apply(&mut self, o: &CantileverOverrides) {
        if let Some(v) = o.segment_lengths_mm {
            self.segment_lengths_mm = v;
        }
        if let Some(v) = o.element_length_mm {
            self.element_length_mm = v;
        }
        if let Some(v) = o.force_n {
            self.force_n = v;
        }
        if let Some(v) = o.moment_nmm {
            self.moment_nmm = v;
        }
        if let Some(v) = o.fcm {
            self.fcm = v;
        }
        if let Some(v) = o.threshold {
            self.threshold = v;
        }
        if let Some(v) = o.local_profile {
            self.local_profile = v;
        }
    }

    fn x_b(&self) -> f64 {
        self.segment_lengths_mm[0]
    }

    fn x_c(&self) -> f64 {
        self.segment_lengths_mm[0] + self.segment_lengths_mm[1]
    }

    fn divisions(&self, length: f64) -> usize {
        ((length / self.element_length_mm).round() as usize).max(1)
    }

    fn solid(&self) -> Result<CrossSection> {
        CrossSection::circular(self.radius_mm, self.material.poisson_ratio())
    }

    fn hollow(&self) -> Result<CrossSection> {
        CrossSection::hollow_circular(self.inner_radius_mm, self.radius_mm, self.material.poisson_ratio())
    }

    /// Frame node ids of B and C.
    pub fn interface_nodes(&self) -> [u32; 2] {
        let nb = self.divisions(self.segment_lengths_mm[0]) as u32 + 1;
        [nb, nb + 1]
    }

    /// Beam model without BC: AB and CD elements first, in the same order as
    /// in [`Self::reference_frame`].
    pub fn outer_frame(&self) -> Result<FrameModel> {
        let mut m = FrameModel::new();
        let solid = self.solid()?;
        let [ab, _, cd] = self.segment_lengths_mm;
        let n_ab = self.divisions(ab);
        let n_cd = self.divisions(cd);
        let mut id = 1;
        for i in 0..=n_ab {
            m.add_node(id, Point3::new(ab * i as f64 / n_ab as f64, 0.0, 0.0));
            if i > 0 {
                m.add_element(id - 1, id, self.material, solid);
            }
            id += 1;
        }
        for i in 0..=n_cd {
            m.add_node(id, Point3::new(self.x_c() + cd * i as f64 / n_cd as f64, 0.0, 0.0));
            if i > 0 {
                m.add_element(id - 1, id, self.material, solid);
            }
            id += 1;
        }
        m.set_support(1, Support::clamped());
        m.add_load(id - 1, [self.force_n, self.moment_nmm].concat().try_into().expect("six entries"));
        Ok(m)
    }

    /// All-beam reference: the outer frame plus BC as hollow beam elements.
    pub fn reference_frame(&self) -> Result<FrameModel> {
        let mut m = self.outer_frame()?;
        let hollow = self.hollow()?;
        let [b, c] = self.interface_nodes();
        let n_bc = self.divisions(self.segment_lengths_mm[1]);
        let mut prev = b;
        for i in 1..=n_bc {
            let next = if i == n_bc {
                c
            } else {
                let id = 10_000 + i as u32;
                m.add_node(id, Point3::new(self.x_b() + self.segment_lengths_mm[1] * i as f64 / n_bc as f64, 0.0, 0.0));
                id
            };
            m.add_element(prev, next, self.material, hollow);
            prev = next;
        }
        Ok(m)
    }

    /// 3D model of BC with disk interfaces at B and C.
    pub fn segment_spec(&self) -> Result<SubstructureSpec> {
        let [b, c] = self.interface_nodes();
        let r = self.radius_mm;
        let shape = ImplicitShape::HollowCylinder {
            base_mm: [self.x_b(), 0.0, 0.0],
            axis: [1.0, 0.0, 0.0],
            length_mm: self.segment_lengths_mm[1],
            inner_radius_mm: self.inner_radius_mm,
            outer_radius_mm: r,
        };
        let domain = Domain::implicit(shape, self.fcm.alpha_exponent, self.material)?;
        let interfaces = vec![
            InterfaceSection::disk(Point3::new(self.x_b(), 0.0, 0.0), -Vector3::x(), r, b)?,
            InterfaceSection::disk(Point3::new(self.x_c(), 0.0, 0.0), Vector3::x(), r, c)?,
        ];
        let grid_box = Aabb::new(Point3::new(self.x_b(), -r, -r), Point3::new(self.x_c(), r, r));
        Ok(SubstructureSpec::new(domain, interfaces, self.fcm).with_grid_box(grid_box))
    }
}

/// Reference and two-scale displacement at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub position_mm: [f64; 3],
    pub reference_mm: [f64; 3],
    pub two_scale_mm: [f64; 3],
    /// `None` where the reference displacement is below the threshold.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CantileverReport {
    pub options: CantileverOptions,
    pub n_dofs: usize,
    pub validation: ValidationReport,
    /// Samples on the beam segments AB and CD.
    pub samples: Vec<ErrorSample>,
    pub max_error: f64,
    pub worst: Option<ErrorSample>,
    /// Ring-averaged resolved displacements along BC (informative only).
    pub local_samples: Vec<ErrorSample>,
    pub local_max_error: Option<f64>,
    pub passed: bool,
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
    #[serde(skip)]
    pub cache_hit: bool,
    #[serde(skip)]
    pub condensed: Option<CondensedStiffness>,
}

fn arr(v: Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn error_samples(points: &[Point3<f64>], reference: &[Vector3<f64>], two_scale: &[Vector3<f64>]) -> Result<Vec<ErrorSample>> {
    let e = pointwise_error(reference, two_scale, UNDEFINED_BELOW)?;
    Ok(points
        .iter()
        .zip(reference.iter().zip(two_scale))
        .zip(e)
        .map(|((p, (r, t)), error)| ErrorSample {
            position_mm: [p.x, p.y, p.z],
            reference_mm: arr(*r),
            two_scale_mm: arr(*t),
            error,
        })
        .collect())
}

fn max_error(samples: &[ErrorSample]) -> (f64, Option<ErrorSample>) {
    let mut best: (f64, Option<ErrorSample>) = (0.0, None);
    for s in samples {
        if let Some(e) = s.error {
            if best.1.is_none() || e > best.0 {
                best = (e, Some(s.clone()));
            }
        }
    }
    best
}

/// Points at quarter stations of every beam element of AB and CD.
fn beam_samples(
    model: &FrameModel,
    solution: &GlobalSolution,
    n_elements: usize,
) -> Result<(Vec<Point3<f64>>, Vec<Vector3<f64>>)> {
    let mut pts = Vec::new();
    let mut u = Vec::new();
    for e in 0..n_elements {
        let [a, b] = model.elements[e].nodes;
        let (pa, pb) = (model.nodes[&a], model.nodes[&b]);
        for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let p = pa + (pb - pa) * s;
            if pts.last().is_some_and(|q: &Point3<f64>| (q - p).norm() < 1e-9) {
                continue;
            }
            pts.push(p);
            u.push(model.element_displacement_at(e, solution, s)?);
        }
    }
    Ok((pts, u))
}

/// Runs the cantilever comparison; the condensed matrix goes through the
/// content-addressed cache when `cache` is given.
pub fn run_cantilever(options: &CantileverOptions, cache: Option<&Path>) -> Result<CantileverReport> {
    let mut timings = Vec::new();
    let spec = options.segment_spec()?;
    let t = Instant::now();
    let (condensed, cache_hit) = condense_cached(&spec, cache).map_err(|e| e.in_stage("condense BC"))?;
    timings.push(("condense".to_string(), t.elapsed().as_secs_f64()));
    let validation = validate_condensed(&condensed.matrix, Some(condensed.asymmetry));

    let t = Instant::now();
    let outer = options.outer_frame()?;
    let n_beam = outer.elements.len();
    let two_scale = assemble_superelements(&outer, std::slice::from_ref(&condensed)).map_err(|e| e.in_stage("assemble"))?;
    let ts_solution = assemble_and_solve(&two_scale).map_err(|e| e.in_stage("solve two-scale"))?;
    let reference = options.reference_frame()?;
    let ref_solution = assemble_and_solve(&reference).map_err(|e| e.in_stage("solve reference"))?;
    timings.push(("global".to_string(), t.elapsed().as_secs_f64()));

    let (pts, u_ref) = beam_samples(&reference, &ref_solution, n_beam)?;
    let (_, u_ts) = beam_samples(&two_scale, &ts_solution, n_beam)?;
    let samples = error_samples(&pts, &u_ref, &u_ts)?;
    let (max, worst) = max_error(&samples);

    let mut local_samples = Vec::new();
    if options.local_profile {
        let t = Instant::now();
        let local = LocalModel::new(&spec).map_err(|e| e.in_stage("local model"))?;
        let data = extract_boundary_data(Some(&ts_solution), &local.nodes())?;
        let field = local.solve(&data).map_err(|e| e.in_stage("local solve"))?.field;
        let n_bc = options.divisions(options.segment_lengths_mm[1]);
        let stations = 10;
        let ring = 0.5 * (options.inner_radius_mm + options.radius_mm);
        let mut pts = Vec::new();
        let mut u_ref = Vec::new();
        let mut u_ts = Vec::new();
        for i in 0..=stations {
            let s = i as f64 / stations as f64;
            let x = options.x_b() + options.segment_lengths_mm[1] * s;
            let along = s * n_bc as f64;
            let e = (along.floor() as usize).min(n_bc - 1);
            u_ref.push(reference.element_displacement_at(n_beam + e, &ref_solution, along - e as f64)?);
            let mut avg = Vector3::zeros();
            let m = 8;
            for k in 0..m {
                let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
                avg += field.displacement(&Point3::new(x, ring * phi.cos(), ring * phi.sin()))?;
            }
            u_ts.push(avg / m as f64);
            pts.push(Point3::new(x, 0.0, 0.0));
        }
        local_samples = error_samples(&pts, &u_ref, &u_ts)?;
        timings.push(("local".to_string(), t.elapsed().as_secs_f64()));
    }
    let local_max_error = (!local_samples.is_empty()).then(|| max_error(&local_samples).0);

    Ok(CantileverReport {
        options: options.clone(),
        n_dofs: two_scale.nodes.len() * 6,
        passed: worst.is_some() && max < options.threshold,
        validation,
        samples,
        max_error: max,
        worst,
        local_samples,
        local_max_error,
        timings,
        cache_hit,
        condensed: Some(condensed),
    })
}

/// Error profile as CSV: position, reference and two-scale displacement
/// magnitudes and the pointwise error (`undefined` where not defined).
pub fn error_profile_csv(samples: &[ErrorSample]) -> String {
    let mut out = String::from("x_mm,y_mm,z_mm,reference_mm,two_scale_mm,error\n");
    for s in samples {
        let n = |v: [f64; 3]| Vector3::from(v).norm();
        let e = s.error.map_or("undefined".to_string(), |e| format!("{e:?}"));
        out.push_str(&format!(
            "{:?},{:?},{:?},{:?},{:?},{e}\n",
            s.position_mm[0],
            s.position_mm[1],
            s.position_mm[2],
            n(s.reference_mm),
            n(s.two_scale_mm)
        ));
    }
    out
}

/// Five-arm joint: a spherical shell with four horizontal branch arms and a
/// downward trunk arm, attached to circular beams. Wall thickness controls
/// the joint compliance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticNode {
    pub shell_radius_mm: f64,
    pub shell_thickness_mm: f64,
    pub arm_radius_mm: f64,
    /// Distance from the joint centre to each interface.
    pub arm_length_mm: f64,
    pub beam_length_mm: f64,
    pub beam_elements: usize,
    pub material: Material,
    /// Load at each branch tip.
    pub tip_force_n: [f64; 3],
    pub fcm: FcmParameters,
}

/// Outward arm directions: +x, -x, +y, -y branches, then the -z trunk.
pub const ARM_DIRECTIONS: [[f64; 3]; 5] = [
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, -1.0],
];

impl SyntheticNode {
    /// Desk-scale joint: 10×10×8 cells, p = 3, octree depth 3.
    pub fn new(shell_thickness_mm: f64) -> Self {
        Self {
            shell_radius_mm: 30.0,
            shell_thickness_mm,
            arm_radius_mm: 12.0,
            arm_length_mm: 50.0,
            beam_length_mm: 500.0,
            beam_elements: 5,
            material: Material::steel(),
            tip_force_n: [50.0, 0.0, -200.0],
            fcm: FcmParameters {
                octree_depth: 3,
                ..FcmParameters::new([10, 10, 8])
            },
        }
    }

    pub fn shape(&self) -> ImplicitShape {
        let mut solids = vec![ImplicitShape::Sphere {
            center_mm: [0.0; 3],
            radius_mm: self.shell_radius_mm,
        }];
        for d in ARM_DIRECTIONS {
            solids.push(ImplicitShape::Cylinder {
                base_mm: [0.0; 3],
                axis: d,
                length_mm: self.arm_length_mm,
                radius_mm: self.arm_radius_mm,
            });
        }
        ImplicitShape::Difference {
            base: Box::new(ImplicitShape::Union { shapes: solids }),
            subtract: Box::new(ImplicitShape::Sphere {
                center_mm: [0.0; 3],
                radius_mm: self.shell_radius_mm - self.shell_thickness_mm,
            }),
        }
    }

    /// Frame node id of arm `i`'s interface.
    pub fn interface_node(i: usize) -> u32 {
        i as u32 + 1
    }

    fn direction(i: usize) -> Vector3<f64> {
        Vector3::from(ARM_DIRECTIONS[i])
    }

    pub fn spec(&self) -> Result<SubstructureSpec> {
        let domain = Domain::implicit(self.shape(), self.fcm.alpha_exponent, self.material)?;
        let interfaces = (0..5)
            .map(|i| {
                let d = Self::direction(i);
                InterfaceSection::disk(Point3::from(d * self.arm_length_mm), d, self.arm_radius_mm, Self::interface_node(i))
            })
            .collect::<Result<Vec<_>>>()?;
        let a = self.arm_length_mm;
        let grid_box = Aabb::new(Point3::new(-a, -a, -a), Point3::new(a, a, self.shell_radius_mm));
        Ok(SubstructureSpec::new(domain, interfaces, self.fcm).with_grid_box(grid_box))
    }

    /// Beams from each interface outward; trunk foot clamped, branch tips loaded.
    pub fn frame(&self) -> Result<FrameModel> {
        let mut m = FrameModel::new();
        let section = CrossSection::circular(self.arm_radius_mm, self.material.poisson_ratio())?;
        for i in 0..5 {
            let d = Self::direction(i);
            let base = Self::interface_node(i);
            m.add_node(base, Point3::from(d * self.arm_length_mm));
            let mut prev = base;
            for j in 1..=self.beam_elements {
                let id = 100 * base + j as u32;
                let r = self.arm_length_mm + self.beam_length_mm * j as f64 / self.beam_elements as f64;
                m.add_node(id, Point3::from(d * r));
                // keep the reference off the element axis for the vertical trunk
                let reference = if i == 4 { Vector3::x() } else { Vector3::z() };
                m.elements.push(BeamElement {
                    nodes: [prev, id],
                    material: self.material,
                    section,
                    reference,
                });
                prev = id;
            }
            if i == 4 {
                m.set_support(prev, Support::clamped());
            } else {
                let f = self.tip_force_n;
                m.add_load(prev, [f[0], f[1], f[2], 0.0, 0.0, 0.0]);
            }
        }
        Ok(m)
    }

    pub fn job(&self, local_stress: bool) -> Result<TwoScaleJob> {
        Ok(TwoScaleJob {
            frame: self.frame()?,
            substructures: vec![SubstructureEntry {
                name: "joint".into(),
                source: SubstructureSource::Spec(Box::new(self.spec()?)),
                local_stress,
            }],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_frame_matches_outer_frame_prefix() {
        let o = CantileverOptions::desk();
        let outer = o.outer_frame().unwrap();
        let reference = o.reference_frame().unwrap();
        assert_eq!(outer.elements.len(), 20);
        assert_eq!(reference.elements.len(), 22);
        assert_eq!(&reference.elements[..20], &outer.elements[..]);
        assert_eq!(o.interface_nodes(), [11, 12]);
        assert_eq!(outer.nodes[&11].x, 1000.0);
        assert_eq!(outer.nodes[&12].x, 1200.0);
        assert_eq!(outer.loads[&22], [0.0, 0.0, 1.0, 0.0, 0.0, 100.0]);
    }

    #[test]
    fn exact_segment_matrix_gives_zero_error() {
        // the all-beam BC condensed to B and C is exactly the reference
        let o = CantileverOptions::desk();
        let reference = o.reference_frame().unwrap();
        let ref_solution = assemble_and_solve(&reference).unwrap();
        let mut outer = o.outer_frame().unwrap();
        let [b, c] = o.interface_nodes();
        let k = {
            let mut seg = FrameModel::new();
            seg.add_node(b, reference.nodes[&b]);
            seg.add_node(c, reference.nodes[&c]);
            seg.add_element(b, c, o.material, o.hollow().unwrap());
            seg.element_global_stiffness(0).unwrap()
        };
        // a prismatic beam under end loads is nodally exact with one or two elements
        outer.add_superelement(k, vec![b, c]);
        let ts = assemble_and_solve(&outer).unwrap();
        let (pts, u_ref) = beam_samples(&reference, &ref_solution, 20).unwrap();
        let (_, u_ts) = beam_samples(&outer, &ts, 20).unwrap();
        let s = error_samples(&pts, &u_ref, &u_ts).unwrap();
        assert!(max_error(&s).0 < 1e-10, "{}", max_error(&s).0);
    }

    #[test]
    fn undefined_samples_are_reported_at_the_clamp() {
        let o = CantileverOptions::desk();
        let reference = o.reference_frame().unwrap();
        let sol = assemble_and_solve(&reference).unwrap();
        let (pts, u) = beam_samples(&reference, &sol, 20).unwrap();
        let s = error_samples(&pts, &u, &u).unwrap();
        assert_eq!(s[0].error, None);
        assert_eq!(max_error(&s).0, 0.0);
        let csv = error_profile_csv(&s);
        assert!(csv.lines().nth(1).unwrap().ends_with("undefined"));
        assert_eq!(csv.lines().count(), s.len() + 1);
    }

    #[test]
    fn overrides_apply() {
        let mut o = CantileverOptions::desk();
        o.apply(&CantileverOverrides {
            threshold: Some(0.0),
            segment_lengths_mm: Some([500.0, 200.0, 500.0]),
            ..Default::default()
        });
        assert_eq!(o.threshold, 0.0);
        assert_eq!(o.interface_nodes(), [6, 7]);
    }

    #[test]
    fn synthetic_node_geometry() {
        let n = SyntheticNode::new(10.0);
        let s = n.shape();
        assert!(s.contains(&Point3::new(25.0, 0.0, 0.0)));
        assert!(!s.contains(&Point3::new(10.0, 0.0, 0.0)));
        assert!(s.contains(&Point3::new(45.0, 0.0, 5.0)));
        assert!(s.contains(&Point3::new(0.0, 0.0, -45.0)));
        assert!(!s.contains(&Point3::new(0.0, 0.0, 45.0)));
        let spec = n.spec().unwrap();
        assert_eq!(spec.k(), 30);
        let frame = n.frame().unwrap();
        frame.validate().unwrap();
        assert_eq!(frame.elements.len(), 25);
        assert_eq!(frame.loads.len(), 4);
        let job = n.job(false).unwrap();
        assert_eq!(job.substructures.len(), 1);
    }
}
