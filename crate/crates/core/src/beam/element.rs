use nalgebra::{Matrix3, Point3, SMatrix, SVector, Vector3};

use super::{CrossSection, Material};
use crate::error::{Error, Result};

pub type Matrix12 = SMatrix<f64, 12, 12>;
pub type Vector12 = SVector<f64, 12>;

/// Two-node Timoshenko element stiffness in local axes.
///
/// DOF order per node: axial displacement, shear displacements along local y
/// and z, twist, bending rotations about local y and z.
pub fn local_stiffness_timoshenko(mat: &Material, sec: &CrossSection, length: f64) -> Matrix12 {
    let e = mat.young_modulus();
    let g = mat.shear_modulus();
    let l = length;
    let (l2, l3) = (l * l, l * l * l);
    let phi_z = 12.0 * e * sec.iz / (sec.kappa * g * sec.area * l2);
    let phi_y = 12.0 * e * sec.iy / (sec.kappa * g * sec.area * l2);
    let hz = 1.0 + phi_z;
    let hy = 1.0 + phi_y;

    let ea = e * sec.area / l;
    let gj = g * sec.torsion / l;
    let z12 = 12.0 * e * sec.iz / (hz * l3);
    let z6 = 6.0 * e * sec.iz / (hz * l2);
    let z4 = (4.0 + phi_z) * e * sec.iz / (hz * l);
    let z2 = (2.0 - phi_z) * e * sec.iz / (hz * l);
    let y12 = 12.0 * e * sec.iy / (hy * l3);
    let y6 = 6.0 * e * sec.iy / (hy * l2);
    let y4 = (4.0 + phi_y) * e * sec.iy / (hy * l);
    let y2 = (2.0 - phi_y) * e * sec.iy / (hy * l);

    let mut k = Matrix12::zeros();
    let mut set = |i: usize, j: usize, v: f64| {
        k[(i, j)] = v;
        k[(j, i)] = v;
    };
    set(0, 0, ea);
    set(1, 1, z12);
    set(2, 2, y12);
    set(3, 3, gj);
    set(4, 2, -y6);
    set(4, 4, y4);
    set(5, 1, z6);
    set(5, 5, z4);
    set(6, 0, -ea);
    set(6, 6, ea);
    set(7, 1, -z12);
    set(7, 5, -z6);
    set(7, 7, z12);
    set(8, 2, -y12);
    set(8, 4, y6);
    set(8, 8, y12);
    set(9, 3, -gj);
    set(9, 9, gj);
    set(10, 2, -y6);
    set(10, 4, y2);
    set(10, 8, y6);
    set(10, 10, y4);
    set(11, 1, z6);
    set(11, 5, z2);
    set(11, 7, -z6);
    set(11, 11, z4);
    k
}

/// Local axes of an element: rows of `axes` are the local x, y, z directions
/// in global coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementRotation {
    pub axes: Matrix3<f64>,
    pub length: f64,
    /// Set when the reference vector was parallel to the axis and a fallback was used.
    pub fallback: bool,
}

impl ElementRotation {
    /// 12×12 block-diagonal transform mapping global DOFs to local DOFs.
    pub fn transform(&self) -> Matrix12 {
        let mut t = Matrix12::zeros();
        for b in 0..4 {
            t.fixed_view_mut::<3, 3>(3 * b, 3 * b).copy_from(&self.axes);
        }
        t
    }

    pub fn to_local(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.axes * v
    }

    pub fn to_global(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.axes.transpose() * v
    }
}

/// Local x runs from `a` to `b`; the reference vector fixes the local x-z
/// plane: y = normalize(ref × x), z = x × y. When the reference is parallel
/// to the axis, global z and then global x are tried.
pub fn element_rotation(a: &Point3<f64>, b: &Point3<f64>, reference: &Vector3<f64>) -> Result<ElementRotation> {
    let d = b - a;
    let length = d.norm();
    if !(length > 1e-12) {
        return Err(Error::Model(format!("zero-length element between {a:?} and {b:?}")));
    }
    let x = d / length;
    let candidates = [*reference, Vector3::z(), Vector3::x()];
    for (i, r) in candidates.iter().enumerate() {
        let rn = r.norm();
        if !(rn > 0.0) {
            continue;
        }
        let y = (r / rn).cross(&x);
        if y.norm() < 1e-8 {
            continue;
        }
        let y = y.normalize();
        let z = x.cross(&y);
        if i > 0 {
            log::warn!("element reference vector {reference:?} parallel to axis {x:?}; using fallback {r:?}");
        }
        let axes = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        return Ok(ElementRotation {
            axes,
            length,
            fallback: i > 0,
        });
    }
    unreachable!("global z and global x cannot both be parallel to a unit vector")
}

/// Interdependent Timoshenko interpolation for transverse displacement at
/// `xi` in [0, 1]: weights of (w1, theta1, w2, theta2) for bending in the
/// local x-y plane.
pub fn timoshenko_shape_functions(xi: f64, length: f64, phi: f64) -> [f64; 4] {
    let h = 1.0 + phi;
    let (x2, x3) = (xi * xi, xi * xi * xi);
    [
        (2.0 * x3 - 3.0 * x2 - phi * xi + h) / h,
        length * (x3 - (2.0 + 0.5 * phi) * x2 + (1.0 + 0.5 * phi) * xi) / h,
        (-2.0 * x3 + 3.0 * x2 + phi * xi) / h,
        length * (x3 - (1.0 - 0.5 * phi) * x2 - 0.5 * phi * xi) / h,
    ]
}
