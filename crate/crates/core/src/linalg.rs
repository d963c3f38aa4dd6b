//! Sparse symmetric matrices and a direct solver for weighted graph
//! Laplacians.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;

use crate::error::{Error, Result};

/// Symmetric sparse matrix stored as its diagonal plus the strict upper
/// triangle, `upper[i]` holding `(j, a_ij)` with `j > i` sorted by `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSparse {
    diag: Vec<f64>,
    upper: Vec<Vec<(usize, f64)>>,
}

impl SymmetricSparse {
    pub fn zeros(n: usize) -> Self {
        SymmetricSparse {
            diag: vec![0.0; n],
            upper: vec![Vec::new(); n],
        }
    }

    /// Builds from off-diagonal triplets (either triangle; duplicates add up)
    /// and a diagonal.
    pub fn from_parts(diag: Vec<f64>, offdiag: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let n = diag.len();
        let mut upper: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in offdiag {
            assert!(i != j && i < n && j < n, "bad off-diagonal index ({i}, {j})");
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            upper[a].push((b, v));
        }
        for row in &mut upper {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some((lj, lv)) if *lj == j => *lv += v,
                    _ => merged.push((j, v)),
                }
            }
            *row = merged;
        }
        SymmetricSparse { diag, upper }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Entry `(i, j)`; linear in the row length.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.upper[a]
            .binary_search_by_key(&b, |&(k, _)| k)
            .map_or(0.0, |pos| self.upper[a][pos].1)
    }

    /// Iterates the strict upper triangle as `(i, j, a_ij)`.
    pub fn offdiag(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.upper
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j, v)))
    }

    pub fn nnz_offdiag(&self) -> usize {
        self.upper.iter().map(Vec::len).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for (i, j, v) in self.offdiag() {
            y[i] += v * x[j];
            y[j] += v * x[i];
        }
        y
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mul_vec(&vec![1.0; self.n()])
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
        }
        for (i, j, v) in self.offdiag() {
            m[i][j] = v;
            m[j][i] = v;
        }
        m
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymmetricSparse {
            diag: self.diag.iter().map(|v| v * s).collect(),
            upper: self
                .upper
                .iter()
                .map(|row| row.iter().map(|&(j, v)| (j, v * s)).collect())
                .collect(),
        }
    }
}

/// Solves `A x = b` for symmetric positive definite `A` by sparse Cholesky.
pub fn solve_spd(a: &SymmetricSparse, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n();
    let mut t: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(n + a.nnz_offdiag());
    t.extend(a.diag.iter().enumerate().map(|(i, &v)| Triplet::new(i, i, v)));
    // Lower triangle only.
    t.extend(a.offdiag().map(|(i, j, v)| Triplet::new(j, i, v)));
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &t)
        .map_err(|e| Error::SingularJacobian(format!("cannot assemble matrix: {e:?}")))?;
    let llt = m
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::SingularJacobian(format!("cholesky failed: {e:?}")))?;
    let rhs = Col::<f64>::from_fn(n, |i| b[i]);
    let x = llt.solve(&rhs);
    let x: Vec<f64> = (0..n).map(|i| x[i]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularJacobian("non-finite solution".into()));
    }
    Ok(x)
}

/// Solves `L x = b` for a weighted graph Laplacian `L` (zero row sums,
/// positive semidefinite, kernel = constants on a connected graph) and a
/// right-hand side summing to zero. The last unknown is pinned, then the
/// solution is shifted to mean zero.
pub fn solve_laplacian(l: &SymmetricSparse, b: &[f64]) -> Result<Vec<f64>> {
    let n = l.n();
    if n <= 1 {
        return Ok(vec![0.0; n]);
    }
    let m = n - 1;
    let reduced = SymmetricSparse::from_parts(
        l.diag[..m].to_vec(),
        l.offdiag().filter(|&(i, j, _)| i < m && j < m),
    );
    let mut x = solve_spd(&reduced, &b[..m])?;
    x.push(0.0);
    let mean = x.iter().sum::<f64>() / n as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in (c + 1)..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = ((r + 1)..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    fn grid_laplacian(k: usize) -> SymmetricSparse {
        let n = k * k;
        let mut off = Vec::new();
        let mut diag = vec![0.0; n];
        for r in 0..k {
            for c in 0..k {
                let i = r * k + c;
                let w = 1.0 + 0.1 * ((r + 2 * c) % 5) as f64;
                if c + 1 < k {
                    off.push((i, i + 1, -w));
                    diag[i] += w;
                    diag[i + 1] += w;
                }
                if r + 1 < k {
                    off.push((i, i + k, -w));
                    diag[i] += w;
                    diag[i + k] += w;
                }
            }
        }
        SymmetricSparse::from_parts(diag, off)
    }

    #[test]
    fn cholesky_matches_dense_elimination() {
        let mut l = grid_laplacian(6);
        // Shift to make it definite.
        l.diag.iter_mut().for_each(|d| *d += 0.5);
        let b: Vec<f64> = (0..36).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let x = solve_spd(&l, &b).unwrap();
        let xd = dense_solve(l.to_dense(), b);
        for (a, b) in x.iter().zip(&xd) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_solve_has_small_residual_and_mean_zero() {
        let l = grid_laplacian(20);
        let n = l.n();
        let mut b: Vec<f64> = (0..n).map(|i| ((i * 13) % 17) as f64).collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        let x = solve_laplacian(&l, &b).unwrap();
        let r = l.mul_vec(&x);
        let err = r.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "residual {err}");
        assert!(x.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn disconnected_graph_is_reported_singular() {
        let l = SymmetricSparse::from_parts(vec![1.0, 1.0, 0.0], [(0, 1, -1.0)]);
        assert!(matches!(solve_laplacian(&l, &[0.0, 0.0, 0.0]), Err(Error::SingularJacobian(_))));
    }
}
