//! Hermitian eigendecomposition (cyclic Jacobi) and the unitary matrix
//! exponential exp(jJ) built from it. Matrices are small (2S x 2S) dense
//! row-major slices; the particle filter calls this per particle and symbol,
//! so the workspace is reusable and allocation-free after construction.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Largest |A[i][j] - conj(A[j][i])| of a row-major n x n matrix.
pub fn hermitian_residual(a: &[Complex64], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[i * n + j] - a[j * n + i].conj()).norm());
        }
    }
    worst
}

/// Reusable eigendecomposition workspace for one matrix dimension.
pub struct HermitianEig {
    n: usize,
    a: Vec<Complex64>,
    /// Eigenvector columns, unitary.
    v: Vec<Complex64>,
    eigvals: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl HermitianEig {
    pub fn new(n: usize) -> Self {
        HermitianEig {
            n,
            a: vec![Complex64::ZERO; n * n],
            v: vec![Complex64::ZERO; n * n],
            eigvals: vec![0.0; n],
            scratch: vec![Complex64::ZERO; n],
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn eigenvectors(&self) -> &[Complex64] {
        &self.v
    }

    /// Factors a Hermitian matrix by cyclic Jacobi rotations. The caller
    /// guarantees Hermiticity.
    pub fn factor(&mut self, a: &[Complex64]) {
        let n = self.n;
        debug_assert_eq!(a.len(), n * n);
        self.a.copy_from_slice(a);
        for (i, v) in self.v.iter_mut().enumerate() {
            *v = if i % (n + 1) == 0 {
                Complex64::ONE
            } else {
                Complex64::ZERO
            };
        }
        let scale: f64 = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
        let tol = 1e-15 * scale;
        for _sweep in 0..40 {
            let mut off: f64 = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off = off.max(self.a[p * n + q].norm());
                }
            }
            if off <= tol {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    self.rotate(p, q);
                }
            }
        }
        for i in 0..n {
            self.eigvals[i] = self.a[i * n + i].re;
        }
    }

    /// One Jacobi rotation zeroing A[p][q].
    fn rotate(&mut self, p: usize, q: usize) {
        let n = self.n;
        let apq = self.a[p * n + q];
        let norm = apq.norm();
        if norm == 0.0 {
            return;
        }
        let app = self.a[p * n + p].re;
        let aqq = self.a[q * n + q].re;
        let phase = apq / norm;
        let tau = (aqq - app) / (2.0 * norm);
        // Smaller root of t^2 - 2 tau t - 1 = 0.
        let t = if tau >= 0.0 {
            -1.0 / (tau + (1.0 + tau * tau).sqrt())
        } else {
            1.0 / (-tau + (1.0 + tau * tau).sqrt())
        };
        let c = 1.0 / (1.0 + t * t).sqrt();
        let s = t * c;

        // Columns of the rotation: u_p = (c, s e^{-j phi}), u_q = (-s e^{j phi}, c).
        let se_m = phase.conj() * s;
        let se_p = phase * s;

        // A <- U^H A U, touching rows/columns p and q.
        for i in 0..n {
            let aip = self.a[i * n + p];
            let aiq = self.a[i * n + q];
            self.a[i * n + p] = aip * c + aiq * se_m;
            self.a[i * n + q] = -aip * se_p + aiq * c;
        }
        for j in 0..n {
            let apj = self.a[p * n + j];
            let aqj = self.a[q * n + j];
            self.a[p * n + j] = apj * c + aqj * se_p;
            self.a[q * n + j] = -apj * se_m + aqj * c;
        }
        // Clean the rotated pair: exact zeros on the target entries and real
        // diagonal, guarding against roundoff drift over many sweeps.
        self.a[p * n + q] = Complex64::ZERO;
        self.a[q * n + p] = Complex64::ZERO;
        self.a[p * n + p] = Complex64::new(self.a[p * n + p].re, 0.0);
        self.a[q * n + q] = Complex64::new(self.a[q * n + q].re, 0.0);

        for i in 0..n {
            let vip = self.v[i * n + p];
            let viq = self.v[i * n + q];
            self.v[i * n + p] = vip * c + viq * se_m;
            self.v[i * n + q] = -vip * se_p + viq * c;
        }
    }

    /// y = exp(jJ) x for the factored J, without forming the matrix:
    /// V diag(e^{j lambda}) V^H x.
    pub fn apply_exp_to_vector(&mut self, x: &[Complex64], y: &mut [Complex64]) {
        let n = self.n;
        for k in 0..n {
            let mut acc = Complex64::ZERO;
            for i in 0..n {
                acc += self.v[i * n + k].conj() * x[i];
            }
            self.scratch[k] = acc * Complex64::from_polar(1.0, self.eigvals[k]);
        }
        for i in 0..n {
            let mut acc = Complex64::ZERO;
            for k in 0..n {
                acc += self.v[i * n + k] * self.scratch[k];
            }
            y[i] = acc;
        }
    }

    /// Forms exp(jJ) for the factored J.
    pub fn exp_matrix(&self) -> Vec<Complex64> {
        let n = self.n;
        let mut out = vec![Complex64::ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex64::ZERO;
                for k in 0..n {
                    acc += self.v[i * n + k]
                        * Complex64::from_polar(1.0, self.eigvals[k])
                        * self.v[j * n + k].conj();
                }
                out[i * n + j] = acc;
            }
        }
        out
    }
}

/// exp(jJ) of a Hermitian matrix via eigendecomposition; rejects inputs whose
/// Hermitian residual exceeds 1e-10 relative to the matrix scale.
pub fn unitary_exp(j: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    if j.len() != n * n {
        return Err(Error::Argument(format!(
            "matrix buffer holds {} entries for dimension {n}",
            j.len()
        )));
    }
    let scale = j.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
    let residual = hermitian_residual(j, n);
    if residual > 1e-10 * scale {
        return Err(Error::Domain(format!(
            "matrix is not Hermitian (residual {residual:.2e})"
        )));
    }
    let mut eig = HermitianEig::new(n);
    eig.factor(j);
    Ok(eig.exp_matrix())
}

/// y = U x for a row-major n x n matrix.
pub fn apply_unitary(u: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|i| (0..n).map(|j| u[i * n + j] * x[j]).sum())
        .collect()
}
