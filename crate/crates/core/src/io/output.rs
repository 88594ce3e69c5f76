//! Deterministic result writers. Floating-point values are printed in their
//! shortest round-trip form so identical results give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::beam::{euler_buckling_check, internal_actions, FrameModel, GlobalSolution};
use crate::error::{Error, Result};

/// `node,ux_mm,uy_mm,uz_mm,rx_rad,ry_rad,rz_rad`.
pub fn displacements_csv(solution: &GlobalSolution) -> String {
    let mut out = String::from("node,ux_mm,uy_mm,uz_mm,rx_rad,ry_rad,rz_rad\n");
    for (id, d) in solution.nodal() {
        row(&mut out, &id.to_string(), &d);
    }
    out
}

/// Support reactions in global axes.
pub fn reactions_csv(solution: &GlobalSolution) -> String {
    let mut out = String::from("node,fx_n,fy_n,fz_n,mx_nmm,my_nmm,mz_nmm\n");
    for (id, r) in solution.reactions() {
        row(&mut out, &id.to_string(), r);
    }
    out
}

fn row(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        let _ = write!(out, ",{v:?}");
    }
    out.push('\n');
}

/// End forces and moments of every beam element in its local axes, the
/// axial force (tension positive) and the Euler buckling ratio.
pub fn internal_actions_csv(model: &FrameModel, solution: &GlobalSolution) -> Result<String> {
    let mut out = String::from("element,node_a,node_b");
    for end in ["a", "b"] {
        for q in ["fx_n", "fy_n", "fz_n", "mx_nmm", "my_nmm", "mz_nmm"] {
            let _ = write!(out, ",{q}_{end}");
        }
    }
    out.push_str(",axial_force_n,buckling_ratio\n");
    for (i, e) in model.elements.iter().enumerate() {
        let f = internal_actions(model, i, solution)?;
        let axial = f[6];
        let check = euler_buckling_check(&e.material, &e.section, model.element_length(i), axial, 1.0);
        let mut values: Vec<f64> = f.iter().copied().collect();
        values.extend([axial, check.ratio]);
        row(&mut out, &format!("{i},{},{}", e.nodes[0], e.nodes[1]), &values);
    }
    Ok(out)
}

/// Legacy VTK polydata of the frame: beam elements and superelement
/// attachments as lines, nodal displacement and rotation vectors.
pub fn frame_vtk(model: &FrameModel, solution: &GlobalSolution, title: &str) -> String {
    let index: BTreeMap<u32, usize> = model.nodes.keys().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut lines: Vec<[usize; 2]> = model.elements.iter().map(|e| [index[&e.nodes[0]], index[&e.nodes[1]]]).collect();
    for s in &model.superelements {
        for w in s.nodes.windows(2) {
            lines.push([index[&w[0]], index[&w[1]]]);
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\n{}\nASCII\nDATASET POLYDATA", title.replace('\n', " "));
    let _ = writeln!(out, "POINTS {} double", model.nodes.len());
    for p in model.nodes.values() {
        let _ = writeln!(out, "{:?} {:?} {:?}", p.x, p.y, p.z);
    }
    let _ = writeln!(out, "LINES {} {}", lines.len(), 3 * lines.len());
    for l in &lines {
        let _ = writeln!(out, "2 {} {}", l[0], l[1]);
    }
    let _ = writeln!(out, "POINT_DATA {}", model.nodes.len());
    for (name, offset) in [("u", 0), ("rotation", 3)] {
        let _ = writeln!(out, "VECTORS {name} double");
        for id in model.nodes.keys() {
            let d = solution.displacement(*id).unwrap_or([0.0; 6]);
            let _ = writeln!(out, "{:?} {:?} {:?}", d[offset], d[offset + 1], d[offset + 2]);
        }
    }
    out
}

/// Global solution stored between `solve-global` and `local-stress`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredSolution {
    /// Hash of the job inputs the solution belongs to.
    pub job_hash: String,
    pub residual: f64,
    /// Per node: ux, uy, uz (mm), rx, ry, rz (rad).
    pub displacements: BTreeMap<u32, [f64; 6]>,
    /// Per supported node: forces (N) and moments (N·mm).
    pub reactions: BTreeMap<u32, [f64; 6]>,
}

impl StoredSolution {
    pub fn new(job_hash: String, solution: &GlobalSolution) -> Self {
        Self {
            job_hash,
            residual: solution.residual(),
            displacements: solution.nodal(),
            reactions: solution.reactions().clone(),
        }
    }

    pub fn solution(&self) -> GlobalSolution {
        GlobalSolution::from_parts(self.displacements.clone(), self.reactions.clone(), self.residual)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Job(format!("stored global solution: {e}")))
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::{assemble_and_solve, CrossSection, Material, Support};
    use nalgebra::Point3;

    fn cantilever() -> (FrameModel, GlobalSolution) {
        let mut m = FrameModel::new();
        m.add_node(1, Point3::origin());
        m.add_node(2, Point3::new(100.0, 0.0, 0.0));
        m.add_element(1, 2, Material::steel(), CrossSection::circular(10.0, 0.3).unwrap());
        m.set_support(1, Support::clamped());
        m.add_load(2, [-10.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let s = assemble_and_solve(&m).unwrap();
        (m, s)
    }

    #[test]
    fn csv_values_round_trip() {
        let (_, s) = cantilever();
        let csv = displacements_csv(&s);
        let line = csv.lines().nth(2).unwrap();
        let uz: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(uz, s.displacement(2).unwrap()[2]);
        let r = reactions_csv(&s);
        let fz: f64 = r.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
        assert!((fz + 1.0).abs() < 1e-9);
    }

    #[test]
    fn internal_actions_report_compression() {
        let (m, s) = cantilever();
        let csv = internal_actions_csv(&m, &s).unwrap();
        let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
        let values: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        let col = header.iter().position(|h| *h == "axial_force_n").unwrap();
        let n: f64 = values[col].parse().unwrap();
        assert!((n + 10.0).abs() < 1e-9);
        let ratio: f64 = values[col + 1].parse().unwrap();
        assert!(ratio > 0.0);
    }

    #[test]
    fn stored_solution_round_trips() {
        let (_, s) = cantilever();
        let stored = StoredSolution::new("abc".into(), &s);
        let back = StoredSolution::from_json(&to_json(&stored).unwrap()).unwrap();
        assert_eq!(back, stored);
        assert_eq!(back.solution().displacement(2), s.displacement(2));
    }

    #[test]
    fn vtk_lists_every_node() {
        let (m, s) = cantilever();
        let vtk = frame_vtk(&m, &s, "t");
        assert!(vtk.contains("POINTS 2 double"));
        assert!(vtk.contains("LINES 1 3"));
        assert!(vtk.contains("VECTORS rotation double"));
    }
}
