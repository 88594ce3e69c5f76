//! 3D Timoshenko space frames: section properties, element stiffness,
//! coordinate transformation, assembly with superelements and solution.

mod element;
mod frame;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use element::{
    element_rotation, local_stiffness_timoshenko, timoshenko_shape_functions, ElementRotation, Matrix12,
    Vector12,
};
pub use frame::{
    assemble_and_solve, euler_buckling_check, internal_actions, BeamElement, BucklingCheck, FrameModel,
    GlobalSolution, Superelement, Support,
};

/// Linear isotropic material. Units: MPa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MaterialInput", into = "MaterialInput")]
pub struct Material {
    e: f64,
    nu: f64,
    g: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialInput {
    young_modulus_mpa: f64,
    poisson_ratio: f64,
}

impl TryFrom<MaterialInput> for Material {
    type Error = Error;
    fn try_from(m: MaterialInput) -> Result<Self> {
        Material::new(m.young_modulus_mpa, m.poisson_ratio)
    }
}

impl From<Material> for MaterialInput {
    fn from(m: Material) -> Self {
        MaterialInput {
            young_modulus_mpa: m.e,
            poisson_ratio: m.nu,
        }
    }
}

impl Material {
    pub fn new(young_modulus: f64, poisson_ratio: f64) -> Result<Self> {
        if !(young_modulus > 0.0) || !young_modulus.is_finite() {
            return Err(Error::Domain(format!("Young's modulus must be positive, got {young_modulus}")));
        }
        if !(poisson_ratio > -1.0 && poisson_ratio < 0.5) {
            return Err(Error::Domain(format!("Poisson ratio must lie in (-1, 0.5), got {poisson_ratio}")));
        }
        Ok(Self {
            e: young_modulus,
            nu: poisson_ratio,
            g: young_modulus / (2.0 * (1.0 + poisson_ratio)),
        })
    }

    /// Structural steel, E = 2.0e5 MPa, nu = 0.3.
    pub fn steel() -> Self {
        Self::new(2.0e5, 0.3).expect("valid constants")
    }

    pub fn young_modulus(&self) -> f64 {
        self.e
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.nu
    }

    pub fn shear_modulus(&self) -> f64 {
        self.g
    }

    /// Lamé parameters (lambda, mu).
    pub fn lame(&self) -> (f64, f64) {
        let lambda = self.e * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu));
        (lambda, self.g)
    }

    /// Same material with Young's modulus multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.e * factor, self.nu)
    }
}

/// Beam cross-section. Units: mm², mm⁴.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub area: f64,
    pub iy: f64,
    pub iz: f64,
    pub torsion: f64,
    pub kappa: f64,
}

impl CrossSection {
    pub fn new(area: f64, iy: f64, iz: f64, torsion: f64, kappa: f64) -> Result<Self> {
        for (name, v) in [("A", area), ("Iy", iy), ("Iz", iz), ("J", torsion), ("kappa", kappa)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("section property {name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            area,
            iy,
            iz,
            torsion,
            kappa,
        })
    }

    /// Solid circle with Cowper's shear correction factor.
    pub fn circular(radius: f64, nu: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("radius must be positive, got {radius}")));
        }
        let i = PI * radius.powi(4) / 4.0;
        Ok(Self {
            area: PI * radius * radius,
            iy: i,
            iz: i,
            torsion: 2.0 * i,
            kappa: 6.0 * (1.0 + nu) / (7.0 + 6.0 * nu),
        })
    }

    /// Annulus with Cowper's hollow-circle shear correction factor.
    pub fn hollow_circular(inner_radius: f64, outer_radius: f64, nu: f64) -> Result<Self> {
        if !(inner_radius > 0.0 && inner_radius < outer_radius) {
            return Err(Error::Domain(format!(
                "hollow section needs 0 < r_in < r_out, got r_in = {inner_radius}, r_out = {outer_radius}"
            )));
        }
        let i = PI * (outer_radius.powi(4) - inner_radius.powi(4)) / 4.0;
        let m2 = (inner_radius / outer_radius).powi(2);
        let q = (1.0 + m2) * (1.0 + m2);
        Ok(Self {
            area: PI * (outer_radius * outer_radius - inner_radius * inner_radius),
            iy: i,
            iz: i,
            torsion: 2.0 * i,
            kappa: 6.0 * (1.0 + nu) * q / ((7.0 + 6.0 * nu) * q + (20.0 + 12.0 * nu) * m2),
        })
    }

    pub fn min_inertia(&self) -> f64 {
        self.iy.min(self.iz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shear_modulus_is_derived() {
        let m = Material::new(2.0e5, 0.3).unwrap();
        assert!((m.shear_modulus() - 2.0e5 / 2.6).abs() / m.shear_modulus() < 1e-12);
        assert!(Material::new(-1.0, 0.3).is_err());
        assert!(Material::new(1.0, 0.5).is_err());
        assert!(Material::new(1.0, -1.0).is_err());
    }

    #[test]
    fn circular_section_closed_forms() {
        let s = CrossSection::circular(30.0, 0.3).unwrap();
        assert!((s.area - 2827.433_388_230_814).abs() < 1e-9);
        assert!((s.iy - 636_172.512_351_933).abs() < 1e-6);
        assert_eq!(s.iy, s.iz);
        assert_eq!(s.torsion, 2.0 * s.iy);
        assert!((s.kappa - 0.886_363_636_363_636_4).abs() < 1e-15);
        let unit = CrossSection::circular(1.0, 0.0).unwrap();
        assert!((unit.kappa - 6.0 / 7.0).abs() < 1e-15);
        assert!(CrossSection::circular(0.0, 0.3).is_err());
    }

    #[test]
    fn hollow_section_closed_forms() {
        let s = CrossSection::hollow_circular(20.0, 30.0, 0.3).unwrap();
        assert!((s.area - 1570.796_326_794_896_5).abs() < 1e-9);
        assert!((s.iy - 510_508.806_208_341_4).abs() < 1e-6);
        // Cowper hollow circle at m = 2/3, nu = 0.3, evaluated independently
        assert!((s.kappa - 0.564_104_758_644_299_9).abs() < 1e-12);
        let thin_bore = CrossSection::hollow_circular(1e-9, 30.0, 0.3).unwrap();
        let solid = CrossSection::circular(30.0, 0.3).unwrap();
        assert!((thin_bore.kappa - solid.kappa).abs() < 1e-12);
        assert!(CrossSection::hollow_circular(30.0, 30.0, 0.3).is_err());
        assert!(CrossSection::hollow_circular(31.0, 30.0, 0.3).is_err());
    }

    #[test]
    fn material_serde_uses_units() {
        let m: Material = serde_json::from_str(r#"{"young_modulus_mpa": 2e5, "poisson_ratio": 0.3}"#).unwrap();
        assert_eq!(m, Material::steel());
        assert!(serde_json::from_str::<Material>(r#"{"young_modulus_mpa": 2e5, "poisson_ratio": 0.7}"#).is_err());
    }
}
