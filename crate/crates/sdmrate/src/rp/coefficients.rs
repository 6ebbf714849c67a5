//! Nonlinear-interference coefficient quadrature.
//!
//! `compute_a` evaluates one generic A coefficient; `build_x_table` produces
//! the strong-coupling X table for every interferer channel, with trapezoid
//! z-integration refined until successive levels agree to the convergence
//! tolerance, and an FFT-based inner correlation over the time grid.

use super::pulse::DispersedPulse;
use crate::error::{Error, Result};
use crate::fft;
use crate::fiber::{CouplingSpec, Regime};
use crate::wdm::WdmSpec;
use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

const CONVERGENCE_TOL: f64 = 1e-4;
const MAX_REFINEMENTS: usize = 6;

/// Quadrature discretization actually used for a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSettings {
    /// Trapezoid intervals along z.
    pub z_steps: usize,
    /// Samples per symbol period on the time grid.
    pub t_oversampling: usize,
    /// Time-window width in symbol periods.
    pub window_symbols: usize,
}

/// Strong-coupling X coefficients for n = 0: one dense (2K+1) x (2K+1)
/// block per interferer channel, symbol-index offsets k, k' in [-K, K].
#[derive(Debug, Clone)]
pub struct NliCoefficients {
    pub k_max: i32,
    /// (channel index c, row-major block).
    pub channels: Vec<(i32, Vec<Complex64>)>,
    pub quadrature: QuadratureSettings,
    /// Hash binding the table to the (link, WDM) pair it was built for.
    pub spec_hash: u64,
}

impl NliCoefficients {
    fn side(&self) -> usize {
        (2 * self.k_max + 1) as usize
    }

    pub fn channel_indices(&self) -> Vec<i32> {
        self.channels.iter().map(|(c, _)| *c).collect()
    }

    pub fn block(&self, channel: i32) -> Option<&[Complex64]> {
        self.channels
            .iter()
            .find(|(c, _)| *c == channel)
            .map(|(_, b)| b.as_slice())
    }

    /// X_{c;0,k,k'}; zero outside the truncation window.
    pub fn get(&self, channel: i32, k: i32, kp: i32) -> Complex64 {
        if k.abs() > self.k_max || kp.abs() > self.k_max {
            return Complex64::ZERO;
        }
        match self.block(channel) {
            Some(b) => {
                let side = self.side() as i32;
                b[((k + self.k_max) * side + (kp + self.k_max)) as usize]
            }
            None => Complex64::ZERO,
        }
    }

    /// sum_k X_{c;0,k,k} (enters the mean of the diagonal J entries).
    pub fn diag_sum(&self, channel: i32) -> Complex64 {
        (-self.k_max..=self.k_max)
            .map(|k| self.get(channel, k, k))
            .sum()
    }

    /// Largest |X[k,k'] - conj(X[k',k])| over a block, for diagnostics.
    pub fn hermitian_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (c, _) in &self.channels {
            for k in -self.k_max..=self.k_max {
                for kp in k..=self.k_max {
                    let d = (self.get(*c, k, kp) - self.get(*c, kp, k).conj()).norm();
                    worst = worst.max(d);
                }
            }
        }
        worst
    }
}

fn strong_params(spec: &CouplingSpec) -> Result<(f64, f64)> {
    match &spec.regime {
        Regime::Strong { beta2, kappa } => Ok((*beta2, *kappa)),
        Regime::Weak { .. } => Err(Error::Argument(
            "X tables are defined for the strong-coupling regime".into(),
        )),
    }
}

/// Hash binding a coefficient table to its physics and quadrature inputs.
pub fn table_hash(spec: &CouplingSpec, wdm: &WdmSpec) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(spec).unwrap_or_default());
    hasher.update(serde_json::to_vec(wdm).unwrap_or_default());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// One z-slice of the X integrand for a channel: G[k,k'] =
/// integral W(u) s(z, u - kT) s*(z, u - k'T) du with W the walked-off
/// interferer intensity. Uses FFT correlations over the cyclic grid.
fn channel_slice(
    pulse: &DispersedPulse,
    z_km: f64,
    walkoff_shift_s: f64,
    k_max: i32,
) -> Vec<Complex64> {
    let n = pulse.n;
    let os = pulse.oversampling;
    let dt = pulse.dt();
    let s = pulse.eval(z_km, 0.0);
    let shifted = pulse.eval(z_km, walkoff_shift_s);
    let w: Vec<f64> = shifted.iter().map(|v| v.norm_sqr()).collect();

    // FFT of conj(s), reused across all k'.
    let mut s_conj: Vec<Complex64> = s.iter().map(|v| v.conj()).collect();
    fft::fft_raw(&mut s_conj);

    let side = (2 * k_max + 1) as usize;
    let mut block = vec![Complex64::ZERO; side * side];
    for kp in -k_max..=k_max {
        // q(u) = W(u) conj(s(u - k'T)); then G[k, k'] = (q (*) s)[k os],
        // a correlation evaluated as ifft(fft(q) . conj(fft(conj(s)))).
        let shift = (kp * os as i32).rem_euclid(n as i32) as usize;
        let mut q: Vec<Complex64> = (0..n)
            .map(|u| w[u] * s[(u + n - shift) % n].conj())
            .collect();
        fft::fft_raw(&mut q);
        for (qv, sv) in q.iter_mut().zip(s_conj.iter()) {
            *qv *= sv.conj();
        }
        fft::ifft_scaled(&mut q);
        for k in -k_max..=k_max {
            let lag = (k * os as i32).rem_euclid(n as i32) as usize;
            block[((k + k_max) * side as i32 + (kp + k_max)) as usize] = q[lag] * dt;
        }
    }
    block
}

fn zero_blocks(n_channels: usize, side: usize) -> Vec<Vec<Complex64>> {
    vec![vec![Complex64::ZERO; side * side]; n_channels]
}

/// Builds the n = 0 strong-coupling coefficient table for every interferer
/// channel of a single-carrier WDM grid. The truncation K follows the
/// walk-off window; z-integration is refined until the table converges.
pub fn build_x_table(spec: &CouplingSpec, wdm: &WdmSpec) -> Result<NliCoefficients> {
    spec.validate()?;
    wdm.validate()?;
    if wdm.subcarriers != 1 {
        return Err(Error::Argument(
            "exact coefficient tables are built on the single-carrier grid; \
             multi-carrier estimation uses the large-dispersion approximation"
                .into(),
        ));
    }
    let (beta2, kappa) = strong_params(spec)?;
    let t_sym = wdm.symbol_period();
    let length = spec.length_km;
    let channels: Vec<i32> = wdm.channels().filter(|&c| c != 0).collect();
    if channels.is_empty() {
        return Err(Error::Argument("no interferer channels in the WDM grid".into()));
    }

    let max_walkoff = channels
        .iter()
        .map(|&c| (beta2 * 2.0 * std::f64::consts::PI * c as f64 * wdm.spacing_hz).abs() * length)
        .fold(0.0, f64::max);
    let k_max = (max_walkoff / t_sym).ceil() as i32 + 8;
    let side = (2 * k_max + 1) as usize;
    let t_oversampling = 8;
    let window_symbols = 4 * k_max as usize;
    let pulse = DispersedPulse::new(t_sym, beta2, t_oversampling, window_symbols);

    let slice_all = |z: f64| -> Vec<Vec<Complex64>> {
        channels
            .par_iter()
            .map(|&c| {
                let omega_c = 2.0 * std::f64::consts::PI * c as f64 * wdm.spacing_hz;
                // W(u) = |s(z, u + tau - beta2 Omega_c z)|^2, i.e. a shift of
                // -(tau - beta2 Omega_c z) in the eval convention.
                let shift = -(wdm.delay(c, 0) - beta2 * omega_c * z);
                channel_slice(&pulse, z, shift, k_max)
            })
            .collect()
    };

    // Trapezoid with progressive midpoint refinement. The integrand varies on
    // the scale of one symbol period of walk-off, so the base grid tracks the
    // walk-off span.
    let base_steps = ((200.0 * length / 1000.0).max(4.0 * k_max as f64).round() as usize)
        .clamp(32, 4096);
    let mut n_z = base_steps;
    let mut h = length / n_z as f64;
    let (g0, g1) = (spec.gain.eval(0.0), spec.gain.eval(length));
    let endpoints = slice_all(0.0)
        .into_iter()
        .zip(slice_all(length))
        .map(|(a, b)| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| 0.5 * (x * g0 + y * g1))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>();
    let mut interior = zero_blocks(channels.len(), side);
    for i in 1..n_z {
        let g = spec.gain.eval(i as f64 * h);
        for (acc, slice) in interior.iter_mut().zip(slice_all(i as f64 * h)) {
            for (a, v) in acc.iter_mut().zip(slice) {
                *a += v * g;
            }
        }
    }
    let assemble = |interior: &[Vec<Complex64>], h: f64| -> Vec<Vec<Complex64>> {
        endpoints
            .iter()
            .zip(interior.iter())
            .map(|(e, i)| {
                e.iter()
                    .zip(i.iter())
                    .map(|(x, y)| (x + y) * h * spec.gamma * kappa)
                    .collect()
            })
            .collect()
    };
    let mut current = assemble(&interior, h);

    let mut converged = false;
    for _ in 0..MAX_REFINEMENTS {
        // Add midpoints of the current grid: step halves.
        for i in 0..n_z {
            let z = (i as f64 + 0.5) * h;
            let g = spec.gain.eval(z);
            for (acc, slice) in interior.iter_mut().zip(slice_all(z)) {
                for (a, v) in acc.iter_mut().zip(slice) {
                    *a += v * g;
                }
            }
        }
        n_z *= 2;
        h = length / n_z as f64;
        let refined = assemble(&interior, h);
        let (num, den) = current
            .iter()
            .flatten()
            .zip(refined.iter().flatten())
            .fold((0.0, 0.0), |(num, den), (a, b)| {
                (num + (a - b).norm_sqr(), den + b.norm_sqr())
            });
        let rel = (num / den.max(1e-300)).sqrt();
        if std::env::var_os("SDMRATE_DEBUG_QUAD").is_some() {
            eprintln!("x-table refinement: n_z = {n_z}, rel = {rel:.3e}");
        }
        current = refined;
        if rel < CONVERGENCE_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Accuracy(format!(
            "X table did not converge to {CONVERGENCE_TOL:.0e} within {MAX_REFINEMENTS} z-refinements"
        )));
    }

    Ok(NliCoefficients {
        k_max,
        channels: channels.into_iter().zip(current).collect(),
        quadrature: QuadratureSettings {
            z_steps: n_z,
            t_oversampling,
            window_symbols,
        },
        spec_hash: table_hash(spec, wdm),
    })
}

/// Generic A coefficient: double quadrature of
/// gamma f_{s,s'} g(z) s*(z,t) s(z,t - nT - t1) s(z,t - kT - t2) s*(z,t - k'T - t3)
/// with the first two factors dispersed by mode s and the last two by mode s'.
/// Offsets are constant; mode indices count from 1.
#[allow(clippy::too_many_arguments)]
pub fn compute_a(
    spec: &CouplingSpec,
    wdm: &WdmSpec,
    mode_s: usize,
    mode_sp: usize,
    n: i32,
    k: i32,
    kp: i32,
    t1: f64,
    t2: f64,
    t3: f64,
) -> Result<Complex64> {
    spec.validate()?;
    if mode_s == 0 || mode_s > spec.modes || mode_sp == 0 || mode_sp > spec.modes {
        return Err(Error::Argument(format!(
            "mode indices must be in 1..={}, got ({mode_s}, {mode_sp})",
            spec.modes
        )));
    }
    let (beta2_s, beta2_sp, coupling) = match &spec.regime {
        Regime::Strong { beta2, kappa } => (*beta2, *beta2, *kappa),
        Regime::Weak { beta2, f, .. } => (
            beta2[mode_s - 1],
            beta2[mode_sp - 1],
            f[mode_s - 1][mode_sp - 1],
        ),
    };
    let t_sym = wdm.symbol_period();
    let max_idx = n.abs().max(k.abs()).max(kp.abs()) as usize;
    let max_off = (t1.abs().max(t2.abs()).max(t3.abs()) / t_sym).ceil() as usize;
    // Wide window: the periodic pulse converges to the ideal sinc as the
    // grid period grows, and the closed-form checks need sub-1e-3 accuracy.
    let window = 4 * (max_idx + max_off) + 64;

    let eval_at = |oversampling: usize, n_z: usize| -> Complex64 {
        let p_s = DispersedPulse::new(t_sym, beta2_s, oversampling, window);
        let p_sp = DispersedPulse::new(t_sym, beta2_sp, oversampling, window);
        let dt = p_s.dt();
        let h = spec.length_km / n_z as f64;
        let mut total = Complex64::ZERO;
        for i in 0..=n_z {
            let z = i as f64 * h;
            let w = if i == 0 || i == n_z { 0.5 } else { 1.0 };
            let g = spec.gain.eval(z);
            let f1 = p_s.eval(z, 0.0);
            let f2 = p_s.eval(z, n as f64 * t_sym + t1);
            let f3 = p_sp.eval(z, k as f64 * t_sym + t2);
            let f4 = p_sp.eval(z, kp as f64 * t_sym + t3);
            let inner: Complex64 = (0..p_s.n)
                .map(|u| f1[u].conj() * f2[u] * f3[u] * f4[u].conj())
                .sum();
            total += inner * (w * g * h * dt);
        }
        total * spec.gamma * coupling
    };

    let n_z0 = ((100.0 * spec.length_km / 1000.0).round() as usize).clamp(16, 256);
    let mut coarse = eval_at(8, n_z0);
    for level in 1..=MAX_REFINEMENTS {
        let fine = eval_at(8, n_z0 << level);
        let rel = (fine - coarse).norm() / fine.norm().max(1e-300);
        if rel < CONVERGENCE_TOL || fine.norm() == 0.0 {
            // One oversampling check before accepting.
            let os_check = eval_at(16, n_z0 << level);
            let rel_t = (fine - os_check).norm() / os_check.norm().max(1e-300);
            if rel_t < 10.0 * CONVERGENCE_TOL || os_check.norm() == 0.0 {
                return Ok(os_check);
            }
        }
        coarse = fine;
    }
    Err(Error::Accuracy(
        "A-coefficient quadrature did not converge under grid refinement".into(),
    ))
}

const CACHE_MAGIC: &[u8; 8] = b"SDMXCOEF";

/// Writes the coefficient table in the binary cache format: a header with
/// the spec hash and quadrature settings, then (c, k, k', re, im) records.
pub fn write_coefficient_cache(path: &Path, table: &NliCoefficients) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(CACHE_MAGIC)?;
    f.write_all(&1u32.to_le_bytes())?;
    f.write_all(&table.spec_hash.to_le_bytes())?;
    f.write_all(&(table.k_max).to_le_bytes())?;
    f.write_all(&(table.quadrature.z_steps as u32).to_le_bytes())?;
    f.write_all(&(table.quadrature.t_oversampling as u32).to_le_bytes())?;
    f.write_all(&(table.quadrature.window_symbols as u32).to_le_bytes())?;
    let side = table.side() as i64;
    let records = table.channels.len() as u64 * (side * side) as u64;
    f.write_all(&records.to_le_bytes())?;
    for (c, block) in &table.channels {
        for k in -table.k_max..=table.k_max {
            for kp in -table.k_max..=table.k_max {
                let v = block[((k + table.k_max) * side as i32 + (kp + table.k_max)) as usize];
                f.write_all(&c.to_le_bytes())?;
                f.write_all(&k.to_le_bytes())?;
                f.write_all(&kp.to_le_bytes())?;
                f.write_all(&v.re.to_le_bytes())?;
                f.write_all(&v.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a cache written by [`write_coefficient_cache`], checking the
/// header against `expected_hash` when given.
pub fn read_coefficient_cache(path: &Path, expected_hash: Option<u64>) -> Result<NliCoefficients> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Argument("not a coefficient cache file".into()));
    }
    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    f.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != 1 {
        return Err(Error::Argument("unsupported coefficient cache version".into()));
    }
    f.read_exact(&mut u64buf)?;
    let spec_hash = u64::from_le_bytes(u64buf);
    if let Some(expected) = expected_hash {
        if expected != spec_hash {
            return Err(Error::Argument(format!(
                "coefficient cache hash {spec_hash:#018x} does not match the configured system {expected:#018x}"
            )));
        }
    }
    let mut i32buf = [0u8; 4];
    f.read_exact(&mut i32buf)?;
    let k_max = i32::from_le_bytes(i32buf);
    f.read_exact(&mut u32buf)?;
    let z_steps = u32::from_le_bytes(u32buf) as usize;
    f.read_exact(&mut u32buf)?;
    let t_oversampling = u32::from_le_bytes(u32buf) as usize;
    f.read_exact(&mut u32buf)?;
    let window_symbols = u32::from_le_bytes(u32buf) as usize;
    f.read_exact(&mut u64buf)?;
    let records = u64::from_le_bytes(u64buf);

    let side = (2 * k_max + 1) as usize;
    let mut channels: Vec<(i32, Vec<Complex64>)> = Vec::new();
    let mut f64buf = [0u8; 8];
    for _ in 0..records {
        f.read_exact(&mut i32buf)?;
        let c = i32::from_le_bytes(i32buf);
        f.read_exact(&mut i32buf)?;
        let k = i32::from_le_bytes(i32buf);
        f.read_exact(&mut i32buf)?;
        let kp = i32::from_le_bytes(i32buf);
        f.read_exact(&mut f64buf)?;
        let re = f64::from_le_bytes(f64buf);
        f.read_exact(&mut f64buf)?;
        let im = f64::from_le_bytes(f64buf);
        if k.abs() > k_max || kp.abs() > k_max {
            return Err(Error::Argument("coefficient record outside truncation".into()));
        }
        let block = match channels.iter_mut().find(|(cc, _)| *cc == c) {
            Some((_, b)) => b,
            None => {
                channels.push((c, vec![Complex64::ZERO; side * side]));
                &mut channels.last_mut().unwrap().1
            }
        };
        block[((k + k_max) * side as i32 + (kp + k_max)) as usize] = Complex64::new(re, im);
    }
    Ok(NliCoefficients {
        k_max,
        channels,
        quadrature: QuadratureSettings {
            z_steps,
            t_oversampling,
            window_symbols,
        },
        spec_hash,
    })
}
