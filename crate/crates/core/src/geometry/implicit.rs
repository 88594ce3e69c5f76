use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::Aabb;

/// Constructive solid built from analytic primitives. All lengths in mm.
///
/// Membership is closed: points on the boundary are inside. For a difference
/// `base - subtract` this means the faces left by the subtracted solid belong
/// to the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImplicitShape {
    Sphere {
        center_mm: [f64; 3],
        radius_mm: f64,
    },
    Cylinder {
        base_mm: [f64; 3],
        axis: [f64; 3],
        length_mm: f64,
        radius_mm: f64,
    },
    HollowCylinder {
        base_mm: [f64; 3],
        axis: [f64; 3],
        length_mm: f64,
        inner_radius_mm: f64,
        outer_radius_mm: f64,
    },
    Box {
        min_mm: [f64; 3],
        max_mm: [f64; 3],
    },
    /// Points with `(x - point) · normal <= 0`.
    HalfSpace { point_mm: [f64; 3], normal: [f64; 3] },
    Union { shapes: Vec<ImplicitShape> },
    Intersection { shapes: Vec<ImplicitShape> },
    Difference {
        base: std::boxed::Box<ImplicitShape>,
        subtract: std::boxed::Box<ImplicitShape>,
    },
}

fn v(a: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn unit(a: &[f64; 3]) -> Vector3<f64> {
    let n = v(a);
    let len = n.norm();
    if len > 0.0 {
        n / len
    } else {
        n
    }
}

/// Squared radial distance from the axis and the axial coordinate.
fn cylinder_coords(p: &Point3<f64>, base: &[f64; 3], axis: &[f64; 3]) -> (f64, f64) {
    let a = unit(axis);
    let d = p.coords - v(base);
    let s = d.dot(&a);
    let radial = d - a * s;
    (radial.norm_squared(), s)
}

fn cylinder_box(base: &[f64; 3], axis: &[f64; 3], length: f64, radius: f64) -> Aabb {
    let a = unit(axis);
    let b0 = v(base);
    let b1 = b0 + a * length;
    let mut out = Aabb::empty();
    for d in 0..3 {
        let r = radius * (1.0 - a[d] * a[d]).max(0.0).sqrt();
        out.min[d] = b0[d].min(b1[d]) - r;
        out.max[d] = b0[d].max(b1[d]) + r;
    }
    out
}

impl ImplicitShape {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        self.test(p, true)
    }

    /// `closed = true` includes the boundary, `false` tests the open interior.
    fn test(&self, p: &Point3<f64>, closed: bool) -> bool {
        let le = |a: f64, b: f64| if closed { a <= b } else { a < b };
        match self {
            ImplicitShape::Sphere {
                center_mm,
                radius_mm,
            } => le((p.coords - v(center_mm)).norm_squared(), radius_mm * radius_mm),
            ImplicitShape::Cylinder {
                base_mm,
                axis,
                length_mm,
                radius_mm,
            } => {
                let (rho2, s) = cylinder_coords(p, base_mm, axis);
                le(0.0, s) && le(s, *length_mm) && le(rho2, radius_mm * radius_mm)
            }
            ImplicitShape::HollowCylinder {
                base_mm,
                axis,
                length_mm,
                inner_radius_mm,
                outer_radius_mm,
            } => {
                let (rho2, s) = cylinder_coords(p, base_mm, axis);
                le(0.0, s)
                    && le(s, *length_mm)
                    && le(inner_radius_mm * inner_radius_mm, rho2)
                    && le(rho2, outer_radius_mm * outer_radius_mm)
            }
            ImplicitShape::Box { min_mm, max_mm } => {
                (0..3).all(|d| le(min_mm[d], p[d]) && le(p[d], max_mm[d]))
            }
            ImplicitShape::HalfSpace { point_mm, normal } => {
                le((p.coords - v(point_mm)).dot(&unit(normal)), 0.0)
            }
            ImplicitShape::Union { shapes } => shapes.iter().any(|s| s.test(p, closed)),
            ImplicitShape::Intersection { shapes } => {
                !shapes.is_empty() && shapes.iter().all(|s| s.test(p, closed))
            }
            ImplicitShape::Difference { base, subtract } => {
                base.test(p, closed) && !subtract.test(p, !closed)
            }
        }
    }

    /// Bounding box, `None` when the shape is unbounded (a bare half-space).
    pub fn bounding_box(&self) -> Option<Aabb> {
        match self {
            ImplicitShape::Sphere {
                center_mm,
                radius_mm,
            } => {
                let c = Point3::from(v(center_mm));
                let r = Vector3::repeat(*radius_mm);
                Some(Aabb::new(c - r, c + r))
            }
            ImplicitShape::Cylinder {
                base_mm,
                axis,
                length_mm,
                radius_mm,
            } => Some(cylinder_box(base_mm, axis, *length_mm, *radius_mm)),
            ImplicitShape::HollowCylinder {
                base_mm,
                axis,
                length_mm,
                outer_radius_mm,
                ..
            } => Some(cylinder_box(base_mm, axis, *length_mm, *outer_radius_mm)),
            ImplicitShape::Box { min_mm, max_mm } => Some(Aabb::new(
                Point3::from(v(min_mm)),
                Point3::from(v(max_mm)),
            )),
            ImplicitShape::HalfSpace { .. } => None,
            ImplicitShape::Union { shapes } => {
                let mut out = Aabb::empty();
                for s in shapes {
                    out = out.union(&s.bounding_box()?);
                }
                (!out.is_empty()).then_some(out)
            }
            ImplicitShape::Intersection { shapes } => {
                let mut out: Option<Aabb> = None;
                for s in shapes {
                    if let Some(b) = s.bounding_box() {
                        out = Some(match out {
                            Some(o) => o.intersection(&b),
                            None => b,
                        });
                    }
                }
                out.filter(|b| !b.is_empty())
            }
            ImplicitShape::Difference { base, .. } => base.bounding_box(),
        }
    }
}
