//! Fixed-capacity symmetric matrices for per-node geometry (d <= 4).

use crate::error::{FlowError, Result};

pub const MAX_DIM: usize = 4;

/// Sweep cap for the cyclic Jacobi eigensolver.
pub const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix {
    pub dim: usize,
    pub m: [[f64; MAX_DIM]; MAX_DIM],
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1 && dim <= MAX_DIM, "matrix dimension {dim} unsupported");
        Self { dim, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut s = Self::zeros(dim);
        for i in 0..dim {
            s.m[i][i] = 1.0;
        }
        s
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut s = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            s.m[i][i] = *v;
        }
        s
    }

    /// Builds from a row-major `dim×dim` slice, symmetrizing.
    pub fn from_rows(dim: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), dim * dim);
        let mut s = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                s.m[i][j] = 0.5 * (rows[i * dim + j] + rows[j * dim + i]);
            }
        }
        s
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.m[i][j] = v;
        self.m[j][i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.m[i][i]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.m[i][j] * self.m[i][j];
            }
        }
        s.sqrt()
    }

    /// Induced ∞-norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.m[i][j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut s = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s.m[i][j] *= c;
            }
        }
        s
    }

    /// Plain matrix product; symmetric only when the factors commute.
    pub fn mul(&self, other: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = SymMatrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] = (0..self.dim).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        out
    }

    /// `self · inner · self`, which is symmetric for symmetric arguments.
    pub fn conjugate(&self, inner: &SymMatrix) -> SymMatrix {
        let n = self.dim;
        let mut tmp = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..n {
            for j in 0..n {
                tmp[i][j] = (0..n).map(|k| self.m[i][k] * inner.m[k][j]).sum();
            }
        }
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = (0..n).map(|k| tmp[i][k] * self.m[k][j]).sum();
                out.set_sym(i, j, v);
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        let mut d = 0.0_f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                d = d.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        d
    }

    pub fn determinant(&self) -> f64 {
        let n = self.dim;
        let mut a = self.m;
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
            if a[p][c] == 0.0 {
                return 0.0;
            }
            if p != c {
                a.swap(p, c);
                det = -det;
            }
            det *= a[c][c];
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
        det
    }
}

/// Eigen-decomposition with ascending eigenvalues; `vectors[k]` is the unit
/// eigenvector for `values[k]`.
#[derive(Debug, Clone, Copy)]
pub struct Eigen {
    pub dim: usize,
    pub values: [f64; MAX_DIM],
    pub vectors: [[f64; MAX_DIM]; MAX_DIM],
}

impl Eigen {
    pub fn values(&self) -> &[f64] {
        &self.values[..self.dim]
    }
}

/// Cyclic Jacobi. Stops once every off-diagonal entry is below `1e-14 · ‖A‖_F`.
pub fn symmetric_eigen(a: &SymMatrix) -> Result<Eigen> {
    let n = a.dim;
    let mut m = a.m;
    let mut v = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, row) in v.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    let threshold = 1e-14 * a.frobenius();
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(m[p][q].abs());
            }
        }
        if off <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq.abs() <= threshold {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut().take(n) {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(FlowError::EigenNonConvergence { sweeps: JACOBI_MAX_SWEEPS });
    }

    let mut order = [0usize, 1, 2, 3];
    order[..n].sort_by(|&x, &y| m[x][x].total_cmp(&m[y][y]));
    let mut out = Eigen { dim: n, values: [0.0; MAX_DIM], vectors: [[0.0; MAX_DIM]; MAX_DIM] };
    for (k, &src) in order[..n].iter().enumerate() {
        out.values[k] = m[src][src];
        for i in 0..n {
            out.vectors[k][i] = v[i][src];
        }
    }
    Ok(out)
}
