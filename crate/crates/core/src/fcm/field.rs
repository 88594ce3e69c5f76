use std::io::Write;
use std::sync::Arc;

use nalgebra::{Matrix3, Point3, Vector3};

use super::basis::shape_functions;
use super::grid::CellGrid;
use crate::beam::Material;
use crate::error::{Error, Result};

/// Displacement field `u = Σ N_i û_i` with strain and stress evaluation.
#[derive(Debug, Clone)]
pub struct ElasticField {
    grid: Arc<CellGrid>,
    coefficients: Vec<f64>,
    material: Material,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub displacement: Vector3<f64>,
    pub strain: Matrix3<f64>,
    pub stress: Matrix3<f64>,
    pub von_mises: f64,
}

pub fn stress_from_strain(material: &Material, strain: &Matrix3<f64>) -> Matrix3<f64> {
    let (lambda, mu) = material.lame();
    Matrix3::identity() * (lambda * strain.trace()) + strain * (2.0 * mu)
}

pub fn von_mises(stress: &Matrix3<f64>) -> f64 {
    let dev = stress - Matrix3::identity() * (stress.trace() / 3.0);
    (1.5 * dev.component_mul(&dev).sum()).sqrt()
}

impl ElasticField {
    pub fn new(grid: Arc<CellGrid>, coefficients: Vec<f64>, material: Material) -> Result<Self> {
        if coefficients.len() != grid.n_dofs() {
            return Err(Error::Dimension(format!(
                "{} coefficients for a grid with {} DOFs",
                coefficients.len(),
                grid.n_dofs()
            )));
        }
        Ok(Self {
            grid,
            coefficients,
            material,
        })
    }

    pub fn grid(&self) -> &Arc<CellGrid> {
        &self.grid
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn evaluate(&self, x: &Point3<f64>) -> Result<FieldValue> {
        let (cell, xi) = self.grid.locate(x)?;
        Ok(self.evaluate_in_cell(cell, xi))
    }

    pub fn displacement(&self, x: &Point3<f64>) -> Result<Vector3<f64>> {
        self.evaluate(x).map(|v| v.displacement)
    }

    pub fn evaluate_in_cell(&self, cell: usize, xi: [f64; 3]) -> FieldValue {
        let s = shape_functions(self.grid.degree(), xi);
        let h = self.grid.cell_size();
        let functions = self.grid.cell_functions(cell);
        let mut u = Vector3::zeros();
        let mut grad = Matrix3::zeros();
        for (a, &f) in functions.iter().enumerate() {
            let g = Vector3::new(
                s.gradients[a][0] * 2.0 / h.x,
                s.gradients[a][1] * 2.0 / h.y,
                s.gradients[a][2] * 2.0 / h.z,
            );
            for c in 0..3 {
                let coef = self.coefficients[3 * f as usize + c];
                u[c] += s.values[a] * coef;
                for k in 0..3 {
                    grad[(c, k)] += coef * g[k];
                }
            }
        }
        let strain = 0.5 * (grad + grad.transpose());
        let stress = stress_from_strain(&self.material, &strain);
        FieldValue {
            displacement: u,
            strain,
            stress,
            von_mises: von_mises(&stress),
        }
    }

    /// Legacy VTK unstructured grid: each active cell is split into
    /// `subdivisions³` hexahedra; point data `u` (mm) and `vonMises` (MPa).
    pub fn write_vtk(&self, out: &mut impl Write, title: &str, subdivisions: usize) -> Result<()> {
        let s = subdivisions.max(1);
        let per_cell = (s + 1).pow(3);
        let cells = self.grid.active_cells();
        let mut points = Vec::with_capacity(cells.len() * per_cell);
        let mut values = Vec::with_capacity(cells.len() * per_cell);
        for &c in cells {
            for k in 0..=s {
                for j in 0..=s {
                    for i in 0..=s {
                        let xi = [
                            -1.0 + 2.0 * i as f64 / s as f64,
                            -1.0 + 2.0 * j as f64 / s as f64,
                            -1.0 + 2.0 * k as f64 / s as f64,
                        ];
                        points.push(self.grid.to_physical(c as usize, xi));
                        values.push(self.evaluate_in_cell(c as usize, xi));
                    }
                }
            }
        }
        writeln!(out, "# vtk DataFile Version 3.0")?;
        writeln!(out, "{}", title.replace('\n', " "))?;
        writeln!(out, "ASCII")?;
        writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(out, "POINTS {} double", points.len())?;
        for p in &points {
            writeln!(out, "{:e} {:e} {:e}", p.x, p.y, p.z)?;
        }
        let n_hex = cells.len() * s * s * s;
        writeln!(out, "CELLS {} {}", n_hex, 9 * n_hex)?;
        let id = |base: usize, i: usize, j: usize, k: usize| base + i + (s + 1) * (j + (s + 1) * k);
        for (ci, _) in cells.iter().enumerate() {
            let base = ci * per_cell;
            for k in 0..s {
                for j in 0..s {
                    for i in 0..s {
                        writeln!(
                            out,
                            "8 {} {} {} {} {} {} {} {}",
                            id(base, i, j, k),
                            id(base, i + 1, j, k),
                            id(base, i + 1, j + 1, k),
                            id(base, i, j + 1, k),
                            id(base, i, j, k + 1),
                            id(base, i + 1, j, k + 1),
                            id(base, i + 1, j + 1, k + 1),
                            id(base, i, j + 1, k + 1)
                        )?;
                    }
                }
            }
        }
        writeln!(out, "CELL_TYPES {n_hex}")?;
        for _ in 0..n_hex {
            writeln!(out, "12")?;
        }
        writeln!(out, "POINT_DATA {}", points.len())?;
        writeln!(out, "VECTORS u double")?;
        for v in &values {
            let u = v.displacement;
            writeln!(out, "{:e} {:e} {:e}", u.x, u.y, u.z)?;
        }
        writeln!(out, "SCALARS vonMises double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in &values {
            writeln!(out, "{:e}", v.von_mises)?;
        }
        Ok(())
    }
}
