//! Memory-mu Gauss-Markov processes as autoregressions matched to a target
//! ACF by Yule-Walker (Levinson-Durbin), with stationary initialization.

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProcessKind {
    Real,
    /// Circularly-symmetric complex process with a real ACF; the AR
    /// recursion coefficients stay real, innovations are CSCG.
    ComplexCircular,
}

/// Order-mu autoregression whose stationary ACF reproduces `acf` on lags
/// 0..=mu.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub kind: ProcessKind,
    pub acf: Vec<f64>,
    pub ar_coeffs: Vec<f64>,
    pub innovation_var: f64,
    /// Lower-triangular Cholesky factor of the mu x mu stationary window
    /// covariance, row-major; used to start the recursion in steady state.
    init_chol: Vec<f64>,
}

/// The identically-zero process (degenerate sigma = 0 scale).
pub fn zero_markov(memory: usize, kind: ProcessKind) -> MarkovSpec {
    MarkovSpec {
        kind,
        acf: vec![0.0; memory + 1],
        ar_coeffs: vec![0.0; memory],
        innovation_var: 0.0,
        init_chol: vec![0.0; memory * memory],
    }
}

/// Fits the AR(mu) process to `acf` (lags 0..=mu). The ACF must be a valid
/// positive-definite sequence; an all-zero ACF yields the zero process.
pub fn fit_markov(acf: &[f64], kind: ProcessKind) -> Result<MarkovSpec> {
    if acf.is_empty() {
        return Err(Error::Model("ACF needs at least lag 0".into()));
    }
    let mu = acf.len() - 1;
    if acf[0] == 0.0 {
        if acf.iter().any(|&v| v != 0.0) {
            return Err(Error::Model("ACF with zero variance but nonzero lags".into()));
        }
        return Ok(zero_markov(mu, kind));
    }
    if acf[0] < 0.0 {
        return Err(Error::Model(format!("negative variance {} at lag 0", acf[0])));
    }

    // Levinson-Durbin; prediction-error variance must stay positive.
    let mut coeffs: Vec<f64> = Vec::with_capacity(mu);
    let mut err = acf[0];
    for m in 1..=mu {
        let mut acc = acf[m];
        for (i, &a) in coeffs.iter().enumerate() {
            acc -= a * acf[m - 1 - i];
        }
        let k = acc / err;
        let mut next = coeffs.clone();
        next.push(k);
        for i in 0..coeffs.len() {
            next[i] = coeffs[i] - k * coeffs[coeffs.len() - 1 - i];
        }
        err *= 1.0 - k * k;
        if err <= 0.0 {
            return Err(Error::Model(format!(
                "ACF is not positive definite (prediction error {err:.3e} at order {m})"
            )));
        }
        coeffs = next;
    }

    let init_chol = cholesky_toeplitz(&acf[..mu], mu)?;
    Ok(MarkovSpec {
        kind,
        acf: acf.to_vec(),
        ar_coeffs: coeffs,
        innovation_var: err,
        init_chol,
    })
}

/// Lower Cholesky of the Toeplitz matrix with first column `col[0..n]`.
fn cholesky_toeplitz(col: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut v = col[i - j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if v <= 0.0 {
                    return Err(Error::Model(
                        "stationary window covariance is not positive definite".into(),
                    ));
                }
                l[i * n + j] = v.sqrt();
            } else {
                l[i * n + j] = v / l[j * n + j];
            }
        }
    }
    Ok(l)
}

impl MarkovSpec {
    pub fn memory(&self) -> usize {
        self.ar_coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.acf[0] == 0.0
    }

    /// Stationary ACF implied by the fitted coefficients, solved from the
    /// Yule-Walker equations; used to certify the fit.
    pub fn implied_acf(&self) -> Vec<f64> {
        let mu = self.memory();
        if mu == 0 || self.is_zero() {
            let mut acf = vec![0.0; mu + 1];
            acf[0] = self.innovation_var;
            return acf;
        }
        // Unknowns r[0..=mu]; equations:
        //   r0 - sum_i a_i r_i = innovation
        //   r_k - sum_i a_i r_{|k-i|} = 0 for k = 1..=mu.
        let n = mu + 1;
        let mut mat = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        rhs[0] = self.innovation_var;
        mat[0] = 1.0;
        for (i, &a) in self.ar_coeffs.iter().enumerate() {
            mat[i + 1] -= a;
        }
        for k in 1..=mu {
            mat[k * n + k] += 1.0;
            for (i, &a) in self.ar_coeffs.iter().enumerate() {
                let lag = (k as i64 - (i as i64 + 1)).unsigned_abs() as usize;
                mat[k * n + lag] -= a;
            }
        }
        solve_dense(&mut mat, &mut rhs, n);
        rhs
    }

    fn init_window_real(&self, stream: &mut RandomStream) -> Vec<f64> {
        let mu = self.memory();
        let draws: Vec<f64> = (0..mu).map(|_| stream.standard_normal()).collect();
        (0..mu)
            .map(|i| {
                (0..=i)
                    .map(|j| self.init_chol[i * mu + j] * draws[j])
                    .sum::<f64>()
            })
            .collect()
    }

    fn init_window_complex(&self, stream: &mut RandomStream) -> Vec<Complex64> {
        let mu = self.memory();
        let draws: Vec<Complex64> = (0..mu).map(|_| stream.cscg(1.0)).collect();
        (0..mu)
            .map(|i| {
                (0..=i)
                    .map(|j| draws[j] * self.init_chol[i * mu + j])
                    .sum::<Complex64>()
            })
            .collect()
    }
}

fn solve_dense(mat: &mut [f64], rhs: &mut [f64], n: usize) {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if mat[row * n + col].abs() > mat[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if pivot != col {
            for j in 0..n {
                mat.swap(col * n + j, pivot * n + j);
            }
            rhs.swap(col, pivot);
        }
        let d = mat[col * n + col];
        for row in col + 1..n {
            let f = mat[row * n + col] / d;
            for j in col..n {
                mat[row * n + j] -= f * mat[col * n + j];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    for row in (0..n).rev() {
        let mut v = rhs[row];
        for j in row + 1..n {
            v -= mat[row * n + j] * rhs[j];
        }
        rhs[row] = v / mat[row * n + row];
    }
}

/// Running state of one AR recursion: the lag window, most recent first.
/// Generic over real/complex through two concrete variants to keep the
/// particle-filter hot loop free of trait dispatch.
#[derive(Debug, Clone)]
pub enum ArWindow {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl ArWindow {
    /// Stationary draw of the initial window.
    pub fn stationary(spec: &MarkovSpec, stream: &mut RandomStream) -> Self {
        match spec.kind {
            ProcessKind::Real => {
                if spec.is_zero() {
                    ArWindow::Real(vec![0.0; spec.memory()])
                } else {
                    ArWindow::Real(spec.init_window_real(stream))
                }
            }
            ProcessKind::ComplexCircular => {
                if spec.is_zero() {
                    ArWindow::Complex(vec![Complex64::ZERO; spec.memory()])
                } else {
                    ArWindow::Complex(spec.init_window_complex(stream))
                }
            }
        }
    }

    /// Advances one step and returns the new value (real variant).
    pub fn step_real(&mut self, spec: &MarkovSpec, stream: &mut RandomStream) -> f64 {
        let ArWindow::Real(win) = self else {
            panic!("real step on complex window");
        };
        let mut v = spec.innovation_var.sqrt() * stream.standard_normal();
        for (a, x) in spec.ar_coeffs.iter().zip(win.iter()) {
            v += a * x;
        }
        if !win.is_empty() {
            win.rotate_right(1);
            win[0] = v;
        }
        v
    }

    /// Advances one step and returns the new value (complex variant).
    pub fn step_complex(&mut self, spec: &MarkovSpec, stream: &mut RandomStream) -> Complex64 {
        let ArWindow::Complex(win) = self else {
            panic!("complex step on real window");
        };
        let mut v = stream.cscg(spec.innovation_var);
        for (a, x) in spec.ar_coeffs.iter().zip(win.iter()) {
            v += x * *a;
        }
        if !win.is_empty() {
            win.rotate_right(1);
            win[0] = v;
        }
        v
    }
}
