use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interface DOF order: three translations then three rotations, global axes.
pub const INTERFACE_DOF_NAMES: [&str; 6] = ["ux", "uy", "uz", "rx", "ry", "rz"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SectionShape {
    /// Flat disk of the given radius (mm) centred at the centroid.
    Disk { radius: f64 },
    /// Explicit triangles on the node boundary.
    Patch { triangles: Vec<[Point3<f64>; 3]> },
}

/// One beam-to-node interface surface. The six coupled DOFs are expressed in
/// global axes, ordered as [`INTERFACE_DOF_NAMES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSection {
    centroid: Point3<f64>,
    normal: Vector3<f64>,
    shape: SectionShape,
    node_id: u32,
}

/// Origin and orthonormal right-handed triad `(normal, axis1, axis2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionFrame {
    pub origin: Point3<f64>,
    pub normal: Vector3<f64>,
    pub axis1: Vector3<f64>,
    pub axis2: Vector3<f64>,
}

fn unit_normal(normal: Vector3<f64>) -> Result<Vector3<f64>> {
    let len = normal.norm();
    if !(len > 1e-300) || !len.is_finite() {
        return Err(Error::Geometry(format!("degenerate section normal {normal:?}")));
    }
    Ok(normal / len)
}

impl InterfaceSection {
    pub fn disk(centroid: Point3<f64>, normal: Vector3<f64>, radius: f64, node_id: u32) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Geometry(format!("disk radius must be positive, got {radius}")));
        }
        Ok(Self {
            centroid,
            normal: unit_normal(normal)?,
            shape: SectionShape::Disk { radius },
            node_id,
        })
    }

    /// Triangle patch; the centroid is the area-weighted patch centroid.
    pub fn patch(triangles: Vec<[Point3<f64>; 3]>, normal: Vector3<f64>, node_id: u32) -> Result<Self> {
        let mut area = 0.0;
        let mut moment = Vector3::zeros();
        for [a, b, c] in &triangles {
            let ta = 0.5 * (b - a).cross(&(c - a)).norm();
            area += ta;
            moment += ta * (a.coords + b.coords + c.coords) / 3.0;
        }
        if !(area > 1e-12) {
            return Err(Error::Geometry("interface patch has zero area".into()));
        }
        Ok(Self {
            centroid: Point3::from(moment / area),
            normal: unit_normal(normal)?,
            shape: SectionShape::Patch { triangles },
            node_id,
        })
    }

    pub fn centroid(&self) -> Point3<f64> {
        self.centroid
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }

    pub fn shape(&self) -> &SectionShape {
        &self.shape
    }

    pub fn node_id(&self) -> u32 {
        self.node_id
    }

    pub fn frame(&self) -> Result<SectionFrame> {
        section_frame(self)
    }

    /// Surface triangulation used for boundary quadrature. Disks are split into
    /// `rings` concentric rings of `segments` sectors each.
    pub fn triangulate(&self, rings: usize, segments: usize) -> Result<Vec<[Point3<f64>; 3]>> {
        match &self.shape {
            SectionShape::Patch { triangles } => Ok(triangles.clone()),
            SectionShape::Disk { radius } => {
                let f = self.frame()?;
                let rings = rings.max(1);
                let segments = segments.max(3);
                let at = |r: f64, k: usize| {
                    let t = std::f64::consts::TAU * k as f64 / segments as f64;
                    f.origin + r * (t.cos() * f.axis1 + t.sin() * f.axis2)
                };
                let mut out = Vec::with_capacity(segments * (2 * rings - 1));
                let dr = radius / rings as f64;
                for k in 0..segments {
                    out.push([f.origin, at(dr, k), at(dr, k + 1)]);
                }
                for j in 1..rings {
                    let (r0, r1) = (dr * j as f64, dr * (j + 1) as f64);
                    for k in 0..segments {
                        out.push([at(r0, k), at(r1, k), at(r1, k + 1)]);
                        out.push([at(r0, k), at(r1, k + 1), at(r0, k + 1)]);
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Local frame of an interface: origin at the centroid, first in-plane axis the
/// normalized projection of the global axis least aligned with the normal.
pub fn section_frame(s: &InterfaceSection) -> Result<SectionFrame> {
    let n = unit_normal(s.normal)?;
    let mut best = 0;
    for d in 1..3 {
        if n[d].abs() < n[best].abs() {
            best = d;
        }
    }
    let e = Vector3::ith(best, 1.0);
    let axis1 = (e - n * n.dot(&e)).normalize();
    let axis2 = n.cross(&axis1);
    Ok(SectionFrame {
        origin: s.centroid,
        normal: n,
        axis1,
        axis2,
    })
}
