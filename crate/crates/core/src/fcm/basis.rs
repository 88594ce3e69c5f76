/// Legendre polynomials `L_0..=L_n` at `x`.
pub fn legendre(n: usize, x: f64) -> Vec<f64> {
    let mut l = Vec::with_capacity(n + 1);
    l.push(1.0);
    if n >= 1 {
        l.push(x);
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * l[k - 1] - (kf - 1.0) * l[k - 2]) / kf;
        l.push(next);
    }
    l
}

/// One-dimensional hierarchic basis of degree `p` on [-1, 1]: two vertex
/// modes `(1 - x)/2`, `(1 + x)/2`, then the integrated Legendre modes
/// `(L_i - L_{i-2}) / sqrt(2(2i - 1))` for `i = 2..=p`.
///
/// Writes values and first derivatives into the slices (length `p + 1`).
pub fn integrated_legendre(p: usize, x: f64, values: &mut [f64], derivatives: &mut [f64]) {
    values[0] = 0.5 * (1.0 - x);
    values[1] = 0.5 * (1.0 + x);
    derivatives[0] = -0.5;
    derivatives[1] = 0.5;
    if p < 2 {
        return;
    }
    let l = legendre(p, x);
    for i in 2..=p {
        let c = (2.0 * (2 * i - 1) as f64).sqrt();
        values[i] = (l[i] - l[i - 2]) / c;
        derivatives[i] = (0.5 * (2 * i - 1) as f64).sqrt() * l[i - 1];
    }
}

/// Tensor-product basis values and reference-coordinate gradients at `xi`.
///
/// Local function `a = a0 + (p+1) (a1 + (p+1) a2)` is the product of the 1D
/// modes `a0`, `a1`, `a2` in x, y, z.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeValues {
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 3]>,
}

pub fn shape_functions(p: usize, xi: [f64; 3]) -> ShapeValues {
    let n = p + 1;
    let mut v = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut d = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for k in 0..3 {
        integrated_legendre(p, xi[k], &mut v[k], &mut d[k]);
    }
    let nb = n * n * n;
    let mut values = Vec::with_capacity(nb);
    let mut gradients = Vec::with_capacity(nb);
    for c in 0..n {
        for b in 0..n {
            for a in 0..n {
                values.push(v[0][a] * v[1][b] * v[2][c]);
                gradients.push([d[0][a] * v[1][b] * v[2][c], v[0][a] * d[1][b] * v[2][c], v[0][a] * v[1][b] * d[2][c]]);
            }
        }
    }
    ShapeValues { values, gradients }
}

/// Number of local functions per cell.
pub fn functions_per_cell(p: usize) -> usize {
    (p + 1).pow(3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trilinear_center() {
        let s = shape_functions(1, [0.0; 3]);
        assert_eq!(s.values.len(), 8);
        assert!(s.values.iter().all(|&v| (v - 0.125).abs() < 1e-15));
    }

    #[test]
    fn modes_vanish_at_ends() {
        let mut v = [0.0; 7];
        let mut d = [0.0; 7];
        for x in [-1.0, 1.0] {
            integrated_legendre(6, x, &mut v, &mut d);
            assert!(v[2..].iter().all(|m| m.abs() < 1e-15));
        }
    }

    #[test]
    fn legendre_values() {
        let l = legendre(3, 0.5);
        assert!((l[2] - (3.0 * 0.25 - 1.0) / 2.0).abs() < 1e-15);
        assert!((l[3] - (5.0 * 0.125 - 1.5) / 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn vertex_partition_of_unity(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, p in 1usize..6) {
            let s = shape_functions(p, [x, y, z]);
            let n = p + 1;
            let mut sum = 0.0;
            for c in 0..2 { for b in 0..2 { for a in 0..2 {
                sum += s.values[a + n * (b + n * c)];
            }}}
            prop_assert!((sum - 1.0).abs() < 1e-14);
        }

        #[test]
        fn gradients_match_finite_differences(x in -0.99f64..0.99, y in -0.99f64..0.99, z in -0.99f64..0.99, p in 1usize..6) {
            let h = 1e-6;
            let s = shape_functions(p, [x, y, z]);
            for k in 0..3 {
                let mut plus = [x, y, z];
                let mut minus = [x, y, z];
                plus[k] += h;
                minus[k] -= h;
                let sp = shape_functions(p, plus);
                let sm = shape_functions(p, minus);
                for a in 0..s.values.len() {
                    let fd = (sp.values[a] - sm.values[a]) / (2.0 * h);
                    let g = s.gradients[a][k];
                    prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "{fd} vs {g}");
                }
            }
        }
    }
}
