//! The four receiver algorithms: memoryless phase-and-additive processing,
//! per-channel CPAN, per-mode CPAN, and joint SDM-CRAN filtering, plus the
//! mismatched entropies and achievable rates they induce.
//!
//! Entropy convention: values are bits per 2S-dimensional vector symbol;
//! normalization to bits/s/Hz/channel happens only in [`achievable_rate`].

use super::filter::{smc_log_predictive, SmcOutcome};
use crate::cran::{assemble_j, ArWindow, CranParams, HermitianEig, HiddenState};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::wdm::SymbolGrid;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

/// Receiver algorithm, ordered by joint-processing complexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReceiverAlgo {
    #[serde(rename = "memoryless_1p")]
    Memoryless1p,
    #[serde(rename = "cpan_1p")]
    Cpan1p,
    #[serde(rename = "cpan_2p")]
    Cpan2p,
    #[serde(rename = "cran_sdm")]
    CranSdm,
}

impl ReceiverAlgo {
    pub fn all() -> [ReceiverAlgo; 4] {
        [
            ReceiverAlgo::Memoryless1p,
            ReceiverAlgo::Cpan1p,
            ReceiverAlgo::Cpan2p,
            ReceiverAlgo::CranSdm,
        ]
    }

    /// Channels processed jointly by one filter instance.
    pub fn grouping(&self, s_modes: usize) -> usize {
        match self {
            ReceiverAlgo::Memoryless1p | ReceiverAlgo::Cpan1p => 1,
            ReceiverAlgo::Cpan2p => 2,
            ReceiverAlgo::CranSdm => 2 * s_modes,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ReceiverAlgo::Memoryless1p => "memoryless_1p",
            ReceiverAlgo::Cpan1p => "cpan_1p",
            ReceiverAlgo::Cpan2p => "cpan_2p",
            ReceiverAlgo::CranSdm => "cran_sdm",
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        match s {
            "memoryless_1p" => Ok(ReceiverAlgo::Memoryless1p),
            "cpan_1p" => Ok(ReceiverAlgo::Cpan1p),
            "cpan_2p" => Ok(ReceiverAlgo::Cpan2p),
            "cran_sdm" => Ok(ReceiverAlgo::CranSdm),
            other => Err(Error::Argument(format!("unknown receiver algorithm `{other}`"))),
        }
    }

    /// The memoryless baseline processes raw symbols; the filtering
    /// receivers whiten first.
    pub fn uses_whitening(&self) -> bool {
        !matches!(self, ReceiverAlgo::Memoryless1p)
    }
}

/// Symmetric unit-energy 3-tap filter (a, b, a); output drops one symbol at
/// each edge.
pub fn whiten_grid(grid: &SymbolGrid, tap: f64) -> SymbolGrid {
    let b = (1.0 - 2.0 * tap * tap).sqrt();
    let m = grid.len();
    let rows: Vec<Vec<Complex64>> = grid
        .rows()
        .iter()
        .map(|row| {
            (1..m - 1)
                .map(|i| (row[i - 1] + row[i + 1]) * tap + row[i] * b)
                .collect()
        })
        .collect();
    SymbolGrid::new(rows).unwrap()
}

fn trim_edges(grid: &SymbolGrid) -> SymbolGrid {
    let m = grid.len();
    SymbolGrid::new(
        grid.rows()
            .iter()
            .map(|row| row[1..m - 1].to_vec())
            .collect(),
    )
    .unwrap()
}

/// Receiver-side preprocessing: per-channel mean-phase removal on y, then
/// either the whitening filter (on both x and y) or a plain edge trim so all
/// algorithms score the same M-2 symbols.
pub fn prepare_pair(
    x: &SymbolGrid,
    y: &SymbolGrid,
    params: &CranParams,
    whiten: bool,
) -> (SymbolGrid, SymbolGrid) {
    let mut y = y.clone();
    for (i, row) in y.rows_mut().iter_mut().enumerate() {
        let rot = Complex64::from_polar(1.0, -params.rx_mean[i]);
        for v in row.iter_mut() {
            *v *= rot;
        }
    }
    if whiten {
        (
            whiten_grid(x, params.whitening_tap),
            whiten_grid(&y, params.whitening_tap),
        )
    } else {
        (trim_edges(x), trim_edges(&y))
    }
}

fn columns(grid: &SymbolGrid) -> Vec<Vec<Complex64>> {
    (0..grid.len()).map(|m| grid.column(m)).collect()
}

/// Conditional-entropy estimate in bits per 2S-vector symbol.
#[derive(Debug, Clone)]
pub struct EntropyEstimate {
    pub bits_per_vector: f64,
    pub per_sequence: Vec<f64>,
    pub min_ess: f64,
}

fn cscg_ln_pdf(residual_sqr: f64, sigma2: f64) -> f64 {
    -residual_sqr / sigma2 - (PI * sigma2).ln()
}

/// h_q(Y|X) by particle filtering (or closed per-symbol integration for the
/// memoryless baseline) over prepared (x, y) sequence pairs.
pub fn conditional_entropy(
    pairs: &[(SymbolGrid, SymbolGrid)],
    params: &CranParams,
    algo: ReceiverAlgo,
    n_particles: usize,
    stream: &RandomStream,
) -> Result<EntropyEstimate> {
    params.validate()?;
    if pairs.is_empty() {
        return Err(Error::Argument("no sequences to evaluate".into()));
    }
    // Sequences are independent filter instances; streams are keyed by the
    // sequence index, so parallel evaluation reproduces the serial result.
    let results: Result<Vec<(f64, f64)>> = pairs
        .par_iter()
        .enumerate()
        .map(|(seq, (x_raw, y_raw))| {
            if x_raw.channels() != params.channels() || y_raw.channels() != params.channels() {
                return Err(Error::Argument("sequence row count does not match model".into()));
            }
            let (x, y) = prepare_pair(x_raw, y_raw, params, algo.uses_whitening());
            let mut min_ess = n_particles as f64;
            let bits = match algo {
                ReceiverAlgo::Memoryless1p => memoryless_entropy(&x, &y, params),
                ReceiverAlgo::Cpan1p => {
                    let mut total = 0.0;
                    for ch in 0..params.channels() {
                        let mut s = stream.fork(&format!("seq{seq}/ch{ch}"));
                        let out = scalar_phase_filter(&x, &y, params, ch, n_particles, &mut s)?;
                        min_ess = min_ess.min(out.min_ess);
                        total += out.entropy_bits();
                    }
                    total
                }
                ReceiverAlgo::Cpan2p => {
                    let mut total = 0.0;
                    for mode in 0..params.s_modes {
                        let mut s = stream.fork(&format!("seq{seq}/mode{mode}"));
                        let out =
                            cran_block_filter(&x, &y, params, 2 * mode, 1, n_particles, &mut s)?;
                        min_ess = min_ess.min(out.min_ess);
                        total += out.entropy_bits();
                    }
                    total
                }
                ReceiverAlgo::CranSdm => {
                    let mut s = stream.fork(&format!("seq{seq}"));
                    let out =
                        cran_block_filter(&x, &y, params, 0, params.s_modes, n_particles, &mut s)?;
                    min_ess = min_ess.min(out.min_ess);
                    out.entropy_bits()
                }
            };
            Ok((bits, min_ess))
        })
        .collect();
    let results = results?;
    let per_sequence: Vec<f64> = results.iter().map(|(b, _)| *b).collect();
    let min_ess = results.iter().map(|(_, e)| *e).fold(f64::INFINITY, f64::min);
    Ok(EntropyEstimate {
        bits_per_vector: per_sequence.iter().sum::<f64>() / per_sequence.len() as f64,
        per_sequence,
        min_ess,
    })
}

/// SIR filter over a contiguous block of `block_modes` spatial modes
/// starting at row `row0`; the full SDM-CRAN receiver uses the whole stack,
/// the 2-pol baseline one mode at a time.
fn cran_block_filter(
    x: &SymbolGrid,
    y: &SymbolGrid,
    params: &CranParams,
    row0: usize,
    block_modes: usize,
    n_particles: usize,
    stream: &mut RandomStream,
) -> Result<SmcOutcome> {
    let rows = 2 * block_modes;
    let block_params = CranParams {
        s_modes: block_modes,
        rx_mean: vec![0.0; rows],
        ..params.clone()
    };
    let phi_spec = block_params.phi_markov()?;
    let off_spec = block_params.offdiag_markov()?;
    let sigma2 = params.sigma_z2;
    let xc = columns(x);
    let yc = columns(y);
    let mut eig = HermitianEig::new(rows);
    let mut rotated = vec![Complex64::ZERO; rows];
    let mut xv = vec![Complex64::ZERO; rows];
    smc_log_predictive(
        n_particles,
        x.len(),
        |s| HiddenState::stationary(&block_params, s).expect("validated params"),
        |state, _m, s| state.step(&phi_spec, &off_spec, s),
        |state, m| {
            let j = assemble_j(state, block_modes);
            eig.factor(&j);
            for i in 0..rows {
                xv[i] = xc[m][row0 + i];
            }
            eig.apply_exp_to_vector(&xv, &mut rotated);
            let mut ll = 0.0;
            for i in 0..rows {
                ll += cscg_ln_pdf((yc[m][row0 + i] - rotated[i]).norm_sqr(), sigma2);
            }
            ll
        },
        0.5,
        stream,
    )
}

/// Scalar phase filter for one complex-alphabet channel (1-pol CPAN).
fn scalar_phase_filter(
    x: &SymbolGrid,
    y: &SymbolGrid,
    params: &CranParams,
    channel: usize,
    n_particles: usize,
    stream: &mut RandomStream,
) -> Result<SmcOutcome> {
    let phi_acf: Vec<f64> = params.base_r.iter().map(|v| v * params.sigma_phi2).collect();
    let spec = if phi_acf[0] == 0.0 {
        crate::cran::zero_markov(params.memory, crate::cran::ProcessKind::Real)
    } else {
        crate::cran::fit_markov(&phi_acf, crate::cran::ProcessKind::Real)?
    };
    let sigma2 = params.sigma_z2;
    let xr = &x.rows()[channel];
    let yr = &y.rows()[channel];

    #[derive(Clone)]
    struct Phase {
        theta: f64,
        win: ArWindow,
    }
    let spec_ref = &spec;
    smc_log_predictive(
        n_particles,
        xr.len(),
        |s| {
            let mut win = ArWindow::stationary(spec_ref, s);
            let theta = win.step_real(spec_ref, s);
            Phase { theta, win }
        },
        |p, _m, s| p.theta = p.win.step_real(spec_ref, s),
        |p, m| {
            let rot = Complex64::from_polar(1.0, p.theta);
            cscg_ln_pdf((yr[m] - rot * xr[m]).norm_sqr(), sigma2)
        },
        0.5,
        stream,
    )
}

/// Gauss-Hermite nodes and weights (physicists' convention), cached.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    if n == 64 {
        let (nodes, weights) = CACHE.get_or_init(|| gauss_hermite_uncached(64));
        return (nodes.clone(), weights.clone());
    }
    gauss_hermite_uncached(n)
}

fn gauss_hermite_uncached(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Golub-Welsch on the symmetric tridiagonal Jacobi matrix with
    // off-diagonals sqrt(k/2).
    let mut j = vec![Complex64::ZERO; n * n];
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k - 1) * n + k] = Complex64::new(b, 0.0);
        j[k * n + k - 1] = Complex64::new(b, 0.0);
    }
    let mut eig = HermitianEig::new(n);
    eig.factor(&j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors()[k].norm_sqr();
            (eig.eigenvalues()[k], PI.sqrt() * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Memoryless per-symbol phase-and-additive model: q(y|x) integrates the
/// CSCG density over an i.i.d. Gaussian phase via Gauss-Hermite quadrature.
/// Returns bits per 2S-vector symbol.
pub fn memoryless_entropy(x: &SymbolGrid, y: &SymbolGrid, params: &CranParams) -> f64 {
    let sigma2 = params.sigma_z2;
    let var_theta = params.sigma_phi2 * params.base_r[0];
    let m = x.len();
    let mut total = 0.0;
    if var_theta == 0.0 {
        for (xr, yr) in x.rows().iter().zip(y.rows()) {
            for (xi, yi) in xr.iter().zip(yr.iter()) {
                total += cscg_ln_pdf((yi - xi).norm_sqr(), sigma2);
            }
        }
    } else {
        let (nodes, weights) = gauss_hermite(64);
        let scale = (2.0 * var_theta).sqrt();
        let norm = 1.0 / PI.sqrt();
        for (xr, yr) in x.rows().iter().zip(y.rows()) {
            for (xi, yi) in xr.iter().zip(yr.iter()) {
                let mut best = f64::NEG_INFINITY;
                let lls: Vec<f64> = nodes
                    .iter()
                    .map(|&t| {
                        let rot = Complex64::from_polar(1.0, scale * t);
                        let ll = cscg_ln_pdf((yi - rot * xi).norm_sqr(), sigma2);
                        best = best.max(ll);
                        ll
                    })
                    .collect();
                let sum: f64 = lls
                    .iter()
                    .zip(weights.iter())
                    .map(|(ll, w)| w * (ll - best).exp())
                    .sum();
                total += best + (norm * sum).ln();
            }
        }
    }
    -total / (m as f64 * LN_2)
}

/// Closed-form mismatched output entropy per 2S-vector symbol: the unitary
/// rotation keeps i.i.d. CSCG inputs CSCG, so each channel contributes
/// log2(pi e (E + sigma_Z^2)).
pub fn output_entropy(params: &CranParams, energy: f64) -> f64 {
    params.channels() as f64 * (PI * std::f64::consts::E * (energy + params.sigma_z2)).log2()
}

/// Achievable-rate estimate, bits/s/Hz per complex channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate_bits: f64,
    pub h_cond: f64,
    pub h_out: f64,
    pub mc_stderr: f64,
    pub n_sequences: usize,
}

/// rate = [h_q(Y) - h_q(Y|X)] / 2S on the given test pairs. Negative rates
/// are reported as-is (mismatched bounds can degrade).
pub fn achievable_rate(
    pairs: &[(SymbolGrid, SymbolGrid)],
    params: &CranParams,
    algo: ReceiverAlgo,
    n_particles: usize,
    energy: f64,
    stream: &RandomStream,
) -> Result<RateEstimate> {
    let h_cond = conditional_entropy(pairs, params, algo, n_particles, stream)?;
    let h_out = output_entropy(params, energy);
    let channels = params.channels() as f64;
    let n = h_cond.per_sequence.len();
    let rate = (h_out - h_cond.bits_per_vector) / channels;
    let stderr = if n > 1 {
        let mean = h_cond.bits_per_vector;
        let var = h_cond
            .per_sequence
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        (var / n as f64).sqrt() / channels
    } else {
        0.0
    };
    Ok(RateEstimate {
        rate_bits: rate,
        h_cond: h_cond.bits_per_vector,
        h_out,
        mc_stderr: stderr,
        n_sequences: n,
    })
}
