//! Ground-truth propagation: symmetrized split-step Fourier integration of
//! the weak- and strong-coupling equations with ideal distributed
//! amplification noise.

use crate::error::{Error, Result};
use crate::fft;
use crate::rng::RandomStream;
use crate::signal::{forward_spectrum, ModeField};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Coupling regime. Strong coupling is the special case with
/// `beta0 = beta1 = 0`, a single shared `beta2`, and a scalar nonlinear
/// coupling `kappa` acting on the whole 2S-stack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Regime {
    Weak {
        /// Per-mode phase constant, rad/km.
        beta0: Vec<f64>,
        /// Per-mode group delay, s/km.
        beta1: Vec<f64>,
        /// Per-mode dispersion, s^2/km.
        beta2: Vec<f64>,
        /// Symmetric nonnegative S x S nonlinear coupling matrix.
        f: Vec<Vec<f64>>,
    },
    Strong {
        /// Shared dispersion, s^2/km.
        beta2: f64,
        /// Averaged nonlinear coupling scalar.
        kappa: f64,
    },
}

/// Attenuation/amplification profile g(z).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum GainProfile {
    /// Ideal distributed amplification, g(z) = 1.
    Ida,
    /// Piecewise-linear table of (z_km, g) knots.
    Table(Vec<(f64, f64)>),
}

impl GainProfile {
    pub fn eval(&self, z_km: f64) -> f64 {
        match self {
            GainProfile::Ida => 1.0,
            GainProfile::Table(knots) => {
                if knots.is_empty() {
                    return 1.0;
                }
                if z_km <= knots[0].0 {
                    return knots[0].1;
                }
                for w in knots.windows(2) {
                    if z_km <= w[1].0 {
                        let t = (z_km - w[0].0) / (w[1].0 - w[0].0);
                        return w[0].1 + t * (w[1].1 - w[0].1);
                    }
                }
                knots[knots.len() - 1].1
            }
        }
    }
}

/// All fiber/link physics parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingSpec {
    /// Number of spatial modes S.
    pub modes: usize,
    pub regime: Regime,
    /// Nonlinear coefficient, 1/(W km).
    pub gamma: f64,
    pub gain: GainProfile,
    /// Receiver-side ASE power spectral density at z = L, W/Hz.
    pub n_ase: f64,
    /// ASE reference bandwidth, Hz.
    pub b_ase: f64,
    /// Link length, km.
    pub length_km: f64,
}

impl CouplingSpec {
    pub fn strong(
        modes: usize,
        beta2_s2_per_km: f64,
        kappa: f64,
        gamma: f64,
        n_ase: f64,
        b_ase: f64,
        length_km: f64,
    ) -> Result<Self> {
        let spec = CouplingSpec {
            modes,
            regime: Regime::Strong {
                beta2: beta2_s2_per_km,
                kappa,
            },
            gamma,
            gain: GainProfile::Ida,
            n_ase,
            b_ase,
            length_km,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::Argument("at least one spatial mode required".into()));
        }
        if !(self.length_km > 0.0) {
            return Err(Error::Argument(format!(
                "link length must be positive, got {}",
                self.length_km
            )));
        }
        if let Regime::Weak {
            beta0,
            beta1,
            beta2,
            f,
        } = &self.regime
        {
            let s = self.modes;
            if beta0.len() != s || beta1.len() != s || beta2.len() != s {
                return Err(Error::Argument(
                    "weak-coupling beta vectors must have one entry per mode".into(),
                ));
            }
            if f.len() != s || f.iter().any(|row| row.len() != s) {
                return Err(Error::Argument("coupling matrix f must be S x S".into()));
            }
            for i in 0..s {
                for j in 0..s {
                    if f[i][j] < 0.0 {
                        return Err(Error::Argument("coupling matrix entries must be >= 0".into()));
                    }
                    if (f[i][j] - f[j][i]).abs() > 1e-12 * f[i][j].abs().max(1.0) {
                        return Err(Error::Argument("coupling matrix f must be symmetric".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-row (beta0, beta1, beta2) in (rad/km, s/km, s^2/km).
    pub(crate) fn row_betas(&self) -> Vec<(f64, f64, f64)> {
        match &self.regime {
            Regime::Strong { beta2, .. } => vec![(0.0, 0.0, *beta2); 2 * self.modes],
            Regime::Weak {
                beta0,
                beta1,
                beta2,
                ..
            } => (0..2 * self.modes)
                .map(|i| (beta0[i / 2], beta1[i / 2], beta2[i / 2]))
                .collect(),
        }
    }
}

/// Split-step discretization. The step must divide the link length into an
/// integer number of steps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SsfmConfig {
    pub step_km: f64,
    pub noise_on: bool,
}

impl SsfmConfig {
    pub fn noiseless(step_km: f64) -> Self {
        SsfmConfig {
            step_km,
            noise_on: false,
        }
    }

    fn steps_for(&self, length_km: f64) -> Result<usize> {
        if !(self.step_km > 0.0) {
            return Err(Error::Argument(format!(
                "step size must be positive, got {}",
                self.step_km
            )));
        }
        let n = length_km / self.step_km;
        let rounded = n.round();
        if rounded < 1.0 || (n - rounded).abs() > 1e-6 {
            return Err(Error::Argument(format!(
                "step {} km does not divide length {} km into an integer number of steps",
                self.step_km, length_km
            )));
        }
        Ok(rounded as usize)
    }
}

/// Which rows the Kerr phase couples. Forward propagation uses `FullStack`
/// (strong) or `PerMode` (weak); the restricted variants back the DBP
/// receiver options.
#[derive(Debug, Clone)]
pub(crate) enum NlCoupling {
    /// Phase from the 2S-stack norm, applied to every row.
    FullStack { kappa: f64 },
    /// Weak coupling: per-mode phase from the f-weighted mode powers.
    PerMode { f: Vec<Vec<f64>> },
    /// Each row sees only its own power (single-polarization DBP).
    PerRow { kappa: f64 },
    /// Each mode's two rows see that mode's 2-stack power (dual-pol DBP).
    PerModeStack { kappa: f64 },
}

pub(crate) struct SsfmParams {
    /// Per-row (beta0, beta1, beta2).
    pub betas: Vec<(f64, f64, f64)>,
    /// Signed nonlinear coefficient (negative for back-propagation).
    pub gamma: f64,
    pub coupling: NlCoupling,
    pub gain: GainProfile,
    /// Noise PSD added per km of propagation (N_ASE / L), W/Hz/km; None = off.
    pub noise_psd_per_km: Option<f64>,
}

/// Core split-step loop: symmetrized (Strang) splitting with the linear
/// half-step in frequency, the Kerr phase in time, and flat-PSD noise
/// injected in frequency after each full step.
pub(crate) fn ssfm_run(
    rows: &mut [Vec<Complex64>],
    sample_rate: f64,
    params: &SsfmParams,
    dz_km: f64,
    n_steps: usize,
    stream: &mut RandomStream,
) -> Result<()> {
    let n = rows[0].len();
    let n_rows = rows.len();

    // Half-step linear phase factors per row.
    let omegas: Vec<f64> = (0..n)
        .map(|k| 2.0 * std::f64::consts::PI * fft::bin_freq_hz(k, n, sample_rate))
        .collect();
    let half: Vec<Vec<Complex64>> = params
        .betas
        .iter()
        .map(|&(b0, b1, b2)| {
            omegas
                .iter()
                .map(|&w| {
                    let theta = (b0 - b1 * w + 0.5 * b2 * w * w) * (dz_km / 2.0);
                    Complex64::from_polar(1.0, theta)
                })
                .collect()
        })
        .collect();

    // Work in the frequency domain between steps.
    for row in rows.iter_mut() {
        fft::fft_unitary(row);
    }

    let mut powers = vec![vec![0.0f64; n]; n_rows];
    let mut phases = vec![vec![0.0f64; n]; n_rows];

    for step in 0..n_steps {
        let z_mid = (step as f64 + 0.5) * dz_km;
        let g = params.gain.eval(z_mid);

        for (row, h) in rows.iter_mut().zip(half.iter()) {
            for (v, p) in row.iter_mut().zip(h.iter()) {
                *v *= p;
            }
            fft::ifft_unitary(row);
        }

        for (pw, row) in powers.iter_mut().zip(rows.iter()) {
            for (p, v) in pw.iter_mut().zip(row.iter()) {
                *p = v.norm_sqr();
            }
        }
        nl_phases(&params.coupling, params.gamma * g * dz_km, &powers, &mut phases);
        for (row, ph) in rows.iter_mut().zip(phases.iter()) {
            for (v, &p) in row.iter_mut().zip(ph.iter()) {
                *v *= Complex64::from_polar(1.0, p);
            }
        }

        for (row, h) in rows.iter_mut().zip(half.iter()) {
            fft::fft_unitary(row);
            for (v, p) in row.iter_mut().zip(h.iter()) {
                *v *= p;
            }
        }

        if let Some(psd_per_km) = params.noise_psd_per_km {
            // White CSCG is white under the unitary DFT, so the per-bin
            // variance equals the per-sample variance N_ASE * Fs * dz / L.
            let var = psd_per_km * dz_km * sample_rate / g;
            for row in rows.iter_mut() {
                for v in row.iter_mut() {
                    *v += stream.cscg(var);
                }
            }
        }
    }

    for row in rows.iter_mut() {
        fft::ifft_unitary(row);
    }
    Ok(())
}

fn nl_phases(coupling: &NlCoupling, scale: f64, powers: &[Vec<f64>], phases: &mut [Vec<f64>]) {
    let n = powers[0].len();
    let n_rows = powers.len();
    match coupling {
        NlCoupling::FullStack { kappa } => {
            for t in 0..n {
                let total: f64 = powers.iter().map(|p| p[t]).sum();
                let phi = scale * kappa * total;
                for ph in phases.iter_mut() {
                    ph[t] = phi;
                }
            }
        }
        NlCoupling::PerRow { kappa } => {
            for (ph, pw) in phases.iter_mut().zip(powers.iter()) {
                for t in 0..n {
                    ph[t] = scale * kappa * pw[t];
                }
            }
        }
        NlCoupling::PerModeStack { kappa } => {
            for s in 0..n_rows / 2 {
                for t in 0..n {
                    let p = powers[2 * s][t] + powers[2 * s + 1][t];
                    let phi = scale * kappa * p;
                    phases[2 * s][t] = phi;
                    phases[2 * s + 1][t] = phi;
                }
            }
        }
        NlCoupling::PerMode { f } => {
            let s_modes = n_rows / 2;
            for s in 0..s_modes {
                for t in 0..n {
                    let mut phi = 0.0;
                    for r in 0..s_modes {
                        phi += f[s][r] * (powers[2 * r][t] + powers[2 * r + 1][t]);
                    }
                    let phi = scale * phi;
                    phases[2 * s][t] = phi;
                    phases[2 * s + 1][t] = phi;
                }
            }
        }
    }
}

fn check_input(input: &ModeField, spec: &CouplingSpec) -> Result<()> {
    if input.channels() != 2 * spec.modes {
        return Err(Error::Argument(format!(
            "field has {} rows but the link has {} modes",
            input.channels(),
            spec.modes
        )));
    }
    if !input.is_finite() {
        return Err(Error::Numeric("input field contains non-finite samples".into()));
    }
    // Occupied-bandwidth guard: the outermost tenth of the simulation band
    // must be essentially empty or the cyclic grid aliases.
    let s = forward_spectrum(input)?;
    let n = s.len();
    let total: f64 = s.rows().iter().flatten().map(|v| v.norm_sqr()).sum();
    if total > 0.0 {
        let edge: f64 = s
            .rows()
            .iter()
            .flat_map(|r| r.iter().enumerate())
            .filter(|(k, _)| s.bin_freq_hz(*k).abs() > 0.45 * s.sample_rate())
            .map(|(_, v)| v.norm_sqr())
            .sum();
        let _ = n;
        if edge / total > 1e-9 {
            return Err(Error::Aliasing(format!(
                "{:.2e} of the input energy sits in the outer 10% of the simulation band",
                edge / total
            )));
        }
    }
    Ok(())
}

/// Propagates `input` from z = 0 to z = L under `spec`.
pub fn propagate(
    input: &ModeField,
    spec: &CouplingSpec,
    cfg: &SsfmConfig,
    stream: &mut RandomStream,
) -> Result<ModeField> {
    spec.validate()?;
    check_input(input, spec)?;
    let n_steps = cfg.steps_for(spec.length_km)?;
    let coupling = match &spec.regime {
        Regime::Strong { kappa, .. } => NlCoupling::FullStack { kappa: *kappa },
        Regime::Weak { f, .. } => NlCoupling::PerMode { f: f.clone() },
    };
    let params = SsfmParams {
        betas: spec.row_betas(),
        gamma: spec.gamma,
        coupling,
        gain: spec.gain.clone(),
        noise_psd_per_km: cfg.noise_on.then(|| spec.n_ase / spec.length_km),
    };
    let mut rows = input.rows().to_vec();
    ssfm_run(
        &mut rows,
        input.sample_rate(),
        &params,
        cfg.step_km,
        n_steps,
        stream,
    )?;
    let mut out = ModeField::new(rows, input.sample_rate(), spec.length_km)?;
    if !out.is_finite() {
        return Err(Error::Numeric("propagation produced non-finite samples".into()));
    }
    out.set_z_km(spec.length_km);
    Ok(out)
}

/// One row of [`step_convergence_report`].
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub step_km: f64,
    pub rel_l2_error: f64,
}

/// Relative L2 error of noiseless propagation at each step size against the
/// finest step in `steps`; certifies a step choice for a given input.
pub fn step_convergence_report(
    input: &ModeField,
    spec: &CouplingSpec,
    steps: &[f64],
) -> Result<Vec<ConvergenceRow>> {
    if steps.len() < 2 {
        return Err(Error::Argument(
            "convergence report needs at least two step sizes".into(),
        ));
    }
    if steps.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Argument("step sizes must be sorted descending".into()));
    }
    let finest = *steps.last().unwrap();
    let mut stream = RandomStream::new(0, "convergence");
    let reference = propagate(input, spec, &SsfmConfig::noiseless(finest), &mut stream)?;
    let ref_norm: f64 = reference
        .rows()
        .iter()
        .flatten()
        .map(|v| v.norm_sqr())
        .sum::<f64>()
        .sqrt();
    steps
        .iter()
        .map(|&step| {
            let out = propagate(input, spec, &SsfmConfig::noiseless(step), &mut stream)?;
            let err: f64 = out
                .rows()
                .iter()
                .zip(reference.rows())
                .flat_map(|(a, b)| a.iter().zip(b.iter()))
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            Ok(ConvergenceRow {
                step_km: step,
                rel_l2_error: err / ref_norm,
            })
        })
        .collect()
}
