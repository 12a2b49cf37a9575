//! Small dense symmetric matrices.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "square matrix row",
                    expected: n,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { n, data })
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn frobenius_distance(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format!("{:.16e}", self.get(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

const SYMMETRY_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// All eigenvalues, ascending, by cyclic Jacobi rotations.
///
/// Sweeps stop once the off-diagonal mass is below `1e-10` relative to the
/// diagonal in the squared sense, which puts every eigenvalue within the
/// same relative tolerance of the exact spectrum. Asymmetry beyond `1e-12`
/// (relative to the largest entry) is an error.
pub fn symmetric_eigenvalues(matrix: &SymMatrix) -> Result<Vec<f64>> {
    let n = matrix.n();
    if n == 0 {
        return Err(Error::Empty("matrix"));
    }
    let scale = matrix
        .as_slice()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let asym = matrix.max_asymmetry();
    if asym > SYMMETRY_TOL * scale.max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }

    // Work on the symmetrized copy.
    let mut a = matrix.clone();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum();
        let diag: f64 = (0..n).map(|i| a.get(i, i).powi(2)).sum();
        if off <= 1e-20 * diag.max(f64::MIN_POSITIVE) || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a.get(r, p);
                    let arq = a.get(r, q);
                    let new_rp = arp - s * (arq + tau * arp);
                    let new_rq = arq + s * (arp - tau * arq);
                    a.set(r, p, new_rp);
                    a.set(p, r, new_rp);
                    a.set(r, q, new_rq);
                    a.set(q, r, new_rq);
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

pub fn min_eigenvalue(matrix: &SymMatrix) -> Result<f64> {
    Ok(symmetric_eigenvalues(matrix)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn small_examples() {
        assert_eq!(min_eigenvalue(&SymMatrix::identity(3)).unwrap(), 1.0);
        assert_eq!(min_eigenvalue(&SymMatrix::diag(&[2.0, 0.5])).unwrap(), 0.5);
        let m = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = symmetric_eigenvalues(&m).unwrap();
        assert_relative_eq!(e[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(e[1], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).unwrap();
        assert!(matches!(min_eigenvalue(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn hilbert_matrix() {
        // Smallest eigenvalue of the 5×5 Hilbert matrix.
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..5).map(|j| 1.0 / (i + j + 1) as f64).collect())
            .collect();
        let m = SymMatrix::from_rows(&rows).unwrap();
        assert_relative_eq!(
            min_eigenvalue(&m).unwrap(),
            3.287_928_772_171_863e-6,
            max_relative = 1e-8
        );
    }

    proptest! {
        #[test]
        fn trace_and_frobenius_preserved(vals in proptest::collection::vec(-5.0f64..5.0, 21)) {
            // Fill a 6×6 symmetric matrix from 21 upper-triangle values.
            let n = 6;
            let mut m = SymMatrix::zeros(n);
            let mut it = vals.iter();
            for i in 0..n {
                for j in i..n {
                    let v = *it.next().unwrap();
                    m.set(i, j, v);
                    m.set(j, i, v);
                }
            }
            let e = symmetric_eigenvalues(&m).unwrap();
            let trace: f64 = (0..n).map(|i| m.get(i, i)).sum();
            let fro: f64 = m.as_slice().iter().map(|v| v * v).sum();
            prop_assert!((e.iter().sum::<f64>() - trace).abs() < 1e-9);
            prop_assert!((e.iter().map(|v| v * v).sum::<f64>() - fro).abs() < 1e-8 * fro.max(1.0));
            prop_assert!(e.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn shift_moves_spectrum(vals in proptest::collection::vec(-1.0f64..1.0, 6), shift in -3.0f64..3.0) {
            let n = 3;
            let mut m = SymMatrix::zeros(n);
            let mut it = vals.iter();
            for i in 0..n {
                for j in i..n {
                    let v = *it.next().unwrap();
                    m.set(i, j, v);
                    m.set(j, i, v);
                }
            }
            let shifted = m.add(&SymMatrix::identity(n).scale(shift));
            let a = min_eigenvalue(&m).unwrap();
            let b = min_eigenvalue(&shifted).unwrap();
            prop_assert!((b - a - shift).abs() < 1e-10);
        }
    }
}
