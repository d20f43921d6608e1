//! Small dense linear algebra: a row-major matrix and LU with partial pivoting.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};


#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Elimination hit a pivot column with no usable entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("matrix is singular at column {column}")]
pub struct Singular {
    pub column: usize,
}

/// LU factors of a square matrix, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl Lu {
    /// Factors `a`. A pivot whose magnitude falls below `rel_tol * max|a|`
    /// is reported as singular.
    pub fn factor(mut a: DenseMatrix, rel_tol: f64) -> Result<Self, Singular> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let threshold = rel_tol * a.max_abs();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, a[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax.is_nan() || pmax <= threshold {
                return Err(Singular { column: k });
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[(k, k)];
            for i in (k + 1)..n {
                let factor = a[(i, k)] / pivot;
                if factor == 0.0 {
                    continue;
                }
                a[(i, k)] = factor;
                let (upper, lower) = a.data.split_at_mut(i * n);
                let src = &upper[k * n + k + 1..k * n + n];
                let dst = &mut lower[k + 1..n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= factor * s;
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }
}

/// Eigenvalue sign counts of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Bunch–Kaufman factors of a symmetric matrix, `P A Pᵀ = L D Lᵀ` with unit
/// lower `L` and `D` made of 1×1 and 2×2 blocks.
#[derive(Debug, Clone)]
pub struct Ldl {
    f: DenseMatrix,
    perm: Vec<usize>,
    /// `true` where a 2×2 block starts.
    two: Vec<bool>,
    inertia: Inertia,
}

const BK_ALPHA: f64 = 0.640_388_203_202_207_6;

impl Ldl {
    /// Factors the symmetric matrix `a` (both triangles must be filled).
    /// Pivot blocks below `rel_tol * max|a|` count as zero eigenvalues; the
    /// factors are then not usable for solving.
    pub fn factor(mut a: DenseMatrix, rel_tol: f64) -> Self {
        assert_eq!(a.rows, a.cols, "LDLᵀ needs a square matrix");
        let n = a.rows;
        let tiny = rel_tol * a.max_abs();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut two = vec![false; n];
        let mut inertia = Inertia::default();
        let mut k = 0;
        while k < n {
            let akk = a[(k, k)].abs();
            let (r, lambda) = ((k + 1)..n)
                .map(|i| (i, a[(i, k)].abs()))
                .fold((k, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            let mut size = 1;
            if akk.max(lambda) > tiny && akk < BK_ALPHA * lambda {
                let sigma = (k..n)
                    .filter(|&j| j != r)
                    .fold(0.0_f64, |m, j| m.max(a[(r, j)].abs()));
                if akk * sigma >= BK_ALPHA * lambda * lambda {
                } else if a[(r, r)].abs() >= BK_ALPHA * sigma {
                    sym_swap(&mut a, k, r);
                    perm.swap(k, r);
                } else {
                    sym_swap(&mut a, k + 1, r);
                    perm.swap(k + 1, r);
                    size = 2;
                }
            }
            if size == 1 {
                let d = a[(k, k)];
                if d.abs() <= tiny {
                    inertia.zero += 1;
                    k += 1;
                    continue;
                }
                if d > 0.0 {
                    inertia.positive += 1;
                } else {
                    inertia.negative += 1;
                }
                for i in (k + 1)..n {
                    let l = a[(i, k)] / d;
                    if l == 0.0 {
                        continue;
                    }
                    for j in (k + 1)..=i {
                        let v = a[(i, j)] - l * a[(j, k)];
                        a[(i, j)] = v;
                        a[(j, i)] = v;
                    }
                }
                for i in (k + 1)..n {
                    a[(i, k)] /= d;
                }
            } else {
                let (d11, d21, d22) = (a[(k, k)], a[(k + 1, k)], a[(k + 1, k + 1)]);
                let det = d11 * d22 - d21 * d21;
                if det < 0.0 {
                    inertia.positive += 1;
                    inertia.negative += 1;
                } else if d11 + d22 > 0.0 {
                    inertia.positive += 2;
                } else {
                    inertia.negative += 2;
                }
                two[k] = true;
                let mut l = vec![(0.0, 0.0); n];
                for i in (k + 2)..n {
                    let (x, y) = (a[(i, k)], a[(i, k + 1)]);
                    l[i] = ((x * d22 - y * d21) / det, (y * d11 - x * d21) / det);
                }
                for i in (k + 2)..n {
                    let (l1, l2) = l[i];
                    if l1 == 0.0 && l2 == 0.0 {
                        continue;
                    }
                    for j in (k + 2)..=i {
                        let v = a[(i, j)] - l1 * a[(j, k)] - l2 * a[(j, k + 1)];
                        a[(i, j)] = v;
                        a[(j, i)] = v;
                    }
                }
                for i in (k + 2)..n {
                    a[(i, k)] = l[i].0;
                    a[(i, k + 1)] = l[i].1;
                }
            }
            k += size;
        }
        Self {
            f: a,
            perm,
            two,
            inertia,
        }
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solves `A x = b`. Only meaningful when no zero pivot was found.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let f = &self.f;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        let mut k = 0;
        while k < n {
            let w = if self.two[k] { 2 } else { 1 };
            for c in k..k + w {
                let yc = y[c];
                if yc != 0.0 {
                    for i in (k + w)..n {
                        y[i] -= f[(i, c)] * yc;
                    }
                }
            }
            k += w;
        }
        let mut k = 0;
        while k < n {
            if self.two[k] {
                let (d11, d21, d22) = (f[(k, k)], f[(k + 1, k)], f[(k + 1, k + 1)]);
                let det = d11 * d22 - d21 * d21;
                let (x, z) = (y[k], y[k + 1]);
                y[k] = (x * d22 - z * d21) / det;
                y[k + 1] = (z * d11 - x * d21) / det;
                k += 2;
            } else {
                y[k] /= f[(k, k)];
                k += 1;
            }
        }
        let mut k = n;
        while k > 0 {
            let start = if k >= 2 && self.two[k - 2] { k - 2 } else { k - 1 };
            for c in start..k {
                let s: f64 = (k..n).map(|i| f[(i, c)] * y[i]).sum();
                y[c] -= s;
            }
            k = start;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }
}

fn sym_swap(a: &mut DenseMatrix, p: usize, q: usize) {
    if p == q {
        return;
    }
    let n = a.rows;
    for j in 0..n {
        a.data.swap(p * n + j, q * n + j);
    }
    for i in 0..n {
        a.data.swap(i * n + p, i * n + q);
    }
}

/// Sparse row: `(column, value)` pairs. Repeated columns add up.
pub type SparseRow = Vec<(usize, f64)>;

pub fn sparse_dot(row: &[(usize, f64)], x: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * x[j]).sum()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_pivoting_system() {
        let a = DenseMatrix::from_rows(&[&[0.0, 2.0, 1.0], &[1.0, 1.0, 0.0], &[3.0, 0.0, 1.0]]);
        let x_true = [1.0, -2.0, 0.5];
        let b = a.mul_vec(&x_true);
        let lu = Lu::factor(a, 1e-14).unwrap();
        let x = lu.solve(&b);
        for (u, v) in x.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_indefinite_kkt() {
        // [[2, 1], [1, 0]] has eigenvalues of both signs.
        let a = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 0.0]]);
        let lu = Lu::factor(a, 1e-14).unwrap();
        let x = lu.solve(&[3.0, 1.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_row_is_singular() {
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert_eq!(Lu::factor(a, 1e-14).unwrap_err(), Singular { column: 1 });
    }

    fn pseudo_random(seed: u64, n: usize) -> Vec<f64> {
        let mut x = seed;
        (0..n)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((x >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    fn kkt(n: usize, m: usize, seed: u64) -> DenseMatrix {
        let vals = pseudo_random(seed, n * n + m * n);
        let mut a = DenseMatrix::zeros(n + m, n + m);
        for i in 0..n {
            for j in 0..=i {
                let v = vals[i * n + j];
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
            a[(i, i)] += n as f64;
        }
        for r in 0..m {
            for j in 0..n {
                let v = vals[n * n + r * n + j];
                a[(n + r, j)] = v;
                a[(j, n + r)] = v;
            }
        }
        a
    }

    #[test]
    fn ldl_solves_and_counts_kkt_inertia() {
        for seed in 0..20 {
            let a = kkt(9, 4, seed);
            let x_true = pseudo_random(seed + 100, 13);
            let b = a.mul_vec(&x_true);
            let ldl = Ldl::factor(a, 1e-14);
            assert_eq!(
                ldl.inertia(),
                Inertia {
                    positive: 9,
                    negative: 4,
                    zero: 0
                }
            );
            for (u, v) in ldl.solve(&b).iter().zip(&x_true) {
                assert!((u - v).abs() < 1e-10, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn ldl_takes_two_by_two_pivot_on_zero_diagonal() {
        let a = DenseMatrix::from_rows(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 2.0], &[0.0, 2.0, -1.0]]);
        let x_true = [0.5, -1.0, 2.0];
        let b = a.mul_vec(&x_true);
        let ldl = Ldl::factor(a, 1e-14);
        assert_eq!(ldl.inertia().positive + ldl.inertia().negative, 3);
        for (u, v) in ldl.solve(&b).iter().zip(x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn ldl_reports_zero_eigenvalue() {
        let a = DenseMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(Ldl::factor(a, 1e-12).inertia().zero, 1);
    }
}
