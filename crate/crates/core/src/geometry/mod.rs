//! Node geometry: triangle surfaces, implicit primitives, point membership and
//! beam-to-node interface sections.

mod implicit;
mod section;
mod stl;

use std::sync::Arc;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::beam::Material;
use crate::error::{Error, Result};

pub use implicit::ImplicitShape;
pub use section::{InterfaceSection, SectionFrame, SectionShape, INTERFACE_DOF_NAMES};
pub use stl::{load_triangle_surface, Triangle, TriangleSurface};

/// Axis-aligned box in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    pub fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|d| self.min[d] > self.max[d])
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        for d in 0..3 {
            self.min[d] = self.min[d].min(p[d]);
            self.max[d] = self.max[d].max(p[d]);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        out.grow(&other.min);
        out.grow(&other.max);
        out
    }

    pub fn intersection(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for d in 0..3 {
            out.min[d] = out.min[d].max(other.min[d]);
            out.max[d] = out.max[d].min(other.max[d]);
        }
        out
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|d| p[d] >= self.min[d] && p[d] <= self.max[d])
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        let m = Vector3::repeat(margin);
        Aabb::new(self.min - m, self.max + m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Membership {
    Inside,
    Outside,
}

impl Membership {
    pub fn is_inside(self) -> bool {
        self == Membership::Inside
    }
}

/// Result of a membership query. `fallback` is set when the surface is not
/// watertight and the answer comes from a majority vote over three axis rays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointClass {
    pub membership: Membership,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub enum Geometry {
    Surface(Arc<TriangleSurface>),
    Implicit(ImplicitShape),
}

impl Geometry {
    pub fn bounding_box(&self) -> Option<Aabb> {
        match self {
            Geometry::Surface(s) => Some(s.bounding_box()),
            Geometry::Implicit(shape) => shape.bounding_box(),
        }
    }
}

/// Physical geometry of one structural node together with the exponent of the
/// fictitious-domain indicator and the node material.
#[derive(Debug, Clone)]
pub struct Domain {
    pub geometry: Geometry,
    pub alpha_exponent: u32,
    pub material: Material,
}

impl Domain {
    pub fn new(geometry: Geometry, alpha_exponent: u32, material: Material) -> Result<Self> {
        if alpha_exponent == 0 {
            return Err(Error::Domain("alpha exponent must be a positive integer".into()));
        }
        if !(5..=10).contains(&alpha_exponent) {
            log::warn!("alpha exponent {alpha_exponent} outside the usual range 5..=10");
        }
        Ok(Self {
            geometry,
            alpha_exponent,
            material,
        })
    }

    pub fn implicit(shape: ImplicitShape, alpha_exponent: u32, material: Material) -> Result<Self> {
        Self::new(Geometry::Implicit(shape), alpha_exponent, material)
    }

    pub fn surface(surface: TriangleSurface, alpha_exponent: u32, material: Material) -> Result<Self> {
        Self::new(Geometry::Surface(Arc::new(surface)), alpha_exponent, material)
    }

    /// Indicator value assigned to fictitious points, `10^-k`.
    pub fn fictitious_alpha(&self) -> f64 {
        10f64.powi(-(self.alpha_exponent as i32))
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        self.geometry.bounding_box()
    }

    pub fn classify_point(&self, p: &Point3<f64>) -> PointClass {
        match &self.geometry {
            Geometry::Implicit(shape) => PointClass {
                membership: if shape.contains(p) {
                    Membership::Inside
                } else {
                    Membership::Outside
                },
                fallback: false,
            },
            Geometry::Surface(s) => s.classify(p),
        }
    }

    pub fn is_inside(&self, p: &Point3<f64>) -> bool {
        self.classify_point(p).membership.is_inside()
    }

    /// Indicator function: 1 inside the physical domain, `10^-k` outside.
    pub fn indicator(&self, p: &Point3<f64>) -> f64 {
        if self.is_inside(p) {
            1.0
        } else {
            self.fictitious_alpha()
        }
    }
}

pub fn classify_point(domain: &Domain, p: &Point3<f64>) -> PointClass {
    domain.classify_point(p)
}

pub fn indicator(domain: &Domain, p: &Point3<f64>) -> f64 {
    domain.indicator(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tube() -> Domain {
        let shape = ImplicitShape::HollowCylinder {
            base_mm: [0.0, 0.0, 0.0],
            axis: [0.0, 0.0, 1.0],
            length_mm: 100.0,
            inner_radius_mm: 20.0,
            outer_radius_mm: 30.0,
        };
        Domain::implicit(shape, 10, Material::steel()).unwrap()
    }

    #[test]
    fn hollow_cylinder_membership() {
        let d = tube();
        assert_eq!(
            d.classify_point(&Point3::new(25.0, 0.0, 50.0)).membership,
            Membership::Inside
        );
        assert_eq!(
            d.classify_point(&Point3::new(10.0, 0.0, 50.0)).membership,
            Membership::Outside
        );
        // boundary counts as inside
        assert!(d.is_inside(&Point3::new(30.0, 0.0, 50.0)));
        assert!(d.is_inside(&Point3::new(0.0, 20.0, 0.0)));
    }

    #[test]
    fn indicator_values() {
        let d = tube();
        assert_eq!(d.indicator(&Point3::new(25.0, 0.0, 1.0)), 1.0);
        assert_eq!(d.indicator(&Point3::new(0.0, 0.0, 1.0)), 1e-10);
        let d5 = Domain {
            alpha_exponent: 5,
            ..d
        };
        assert_eq!(d5.indicator(&Point3::new(0.0, 0.0, 1.0)), 1e-5);
    }

    #[test]
    fn zero_alpha_exponent_rejected() {
        let shape = ImplicitShape::Sphere {
            center_mm: [0.0; 3],
            radius_mm: 1.0,
        };
        assert!(Domain::implicit(shape, 0, Material::steel()).is_err());
    }
}
