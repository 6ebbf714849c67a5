//! Covariance structure of the nonlinear-interference matrix: the scalar
//! kernels r[l] and s[l] (exact sums over X coefficients or the triangular
//! large-dispersion closed forms) and the full second-order description of
//! the J-matrix entries built from them.

use super::coefficients::NliCoefficients;
use crate::error::{Error, Result};
use crate::fiber::{CouplingSpec, Regime};
use crate::wdm::WdmSpec;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Per-channel symbol statistics: energy E_c and fourth moment Q_c.
#[derive(Debug, Clone)]
pub struct ChannelEnergies {
    entries: Vec<(i32, f64, f64)>,
}

impl ChannelEnergies {
    pub fn new(entries: Vec<(i32, f64, f64)>) -> Self {
        ChannelEnergies { entries }
    }

    /// CSCG inputs on `channels`: Q_c = 2 E_c^2.
    pub fn cscg(channels: impl IntoIterator<Item = i32>, energy: f64) -> Self {
        ChannelEnergies {
            entries: channels
                .into_iter()
                .map(|c| (c, energy, 2.0 * energy * energy))
                .collect(),
        }
    }

    pub fn get(&self, channel: i32) -> Option<(f64, f64)> {
        self.entries
            .iter()
            .find(|(c, _, _)| *c == channel)
            .map(|&(_, e, q)| (e, q))
    }

    pub fn channels(&self) -> impl Iterator<Item = i32> + '_ {
        self.entries.iter().map(|(c, _, _)| *c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceMode {
    Exact,
    LargeDispersion,
}

/// The scalar covariance kernels of the J-matrix entries on lags 0..=l_max,
/// plus the mean of the diagonal entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub mode: CovarianceMode,
    /// <J_ii>.
    pub mean_diag: f64,
    /// r[l] for l = 0..=l_max (even extension implied).
    pub r: Vec<f64>,
    /// s[l] likewise.
    pub s: Vec<f64>,
    /// |imaginary residue| of the truncated mean quadrature, diagnostic only.
    pub mean_imag_residue: f64,
}

impl CovarianceModel {
    pub fn l_max(&self) -> usize {
        self.r.len() - 1
    }

    pub fn r_at(&self, l: i64) -> f64 {
        let l = l.unsigned_abs() as usize;
        self.r.get(l).copied().unwrap_or(0.0)
    }

    pub fn s_at(&self, l: i64) -> f64 {
        let l = l.unsigned_abs() as usize;
        self.s.get(l).copied().unwrap_or(0.0)
    }
}

/// Exact r[l], s[l] and mean from a coefficient table (strong coupling,
/// n = 0 block). Every channel of the table must appear in `energies`.
pub fn covariance_exact(
    table: &NliCoefficients,
    energies: &ChannelEnergies,
    s_modes: usize,
    l_max: usize,
) -> Result<CovarianceModel> {
    for c in table.channel_indices() {
        if energies.get(c).is_none() {
            return Err(Error::Argument(format!(
                "energies missing interferer channel {c}"
            )));
        }
    }
    let k_max = table.k_max;
    let mut r = vec![0.0; l_max + 1];
    let mut s = vec![0.0; l_max + 1];
    for (c, _) in &table.channels {
        let (e, q) = energies.get(*c).unwrap();
        for (l, (rv, sv)) in r.iter_mut().zip(s.iter_mut()).enumerate() {
            let l = l as i32;
            let mut diag = 0.0;
            let mut offdiag = 0.0;
            let mut full = 0.0;
            for k in -k_max..=k_max {
                diag += table.get(*c, k, k).re * table.get(*c, k - l, k - l).re;
                for kp in -k_max..=k_max {
                    let prod =
                        (table.get(*c, k, kp) * table.get(*c, k - l, kp - l).conj()).re;
                    full += prod;
                    if kp != k {
                        offdiag += prod;
                    }
                }
            }
            *rv += (q - e * e) * diag + e * e * offdiag;
            *sv += e * e * full;
        }
    }
    let mut mean = 0.0;
    let mut residue: f64 = 0.0;
    for (c, _) in &table.channels {
        let (e, _) = energies.get(*c).unwrap();
        let d = table.diag_sum(*c);
        mean += e * d.re;
        residue = residue.max((e * d.im).abs());
    }
    mean *= (1 + 2 * s_modes) as f64;
    Ok(CovarianceModel {
        mode: CovarianceMode::Exact,
        mean_diag: mean,
        r,
        s,
        mean_imag_residue: residue,
    })
}

/// One interfering carrier as seen from a COI carrier: center-frequency
/// offset and symbol statistics.
#[derive(Debug, Clone, Copy)]
pub struct InterfererCarrier {
    pub omega_offset: f64,
    pub energy: f64,
    pub fourth_moment: f64,
}

/// Large-accumulated-dispersion closed forms for an arbitrary carrier set:
/// triangular r[l], s[l] with support |l| T <= |beta2 Omega_c| L, and the
/// walk-off mean (1 + 2S) gamma kappa (L/T) sum E_c.
pub fn covariance_approx_carriers(
    beta2: f64,
    gamma: f64,
    kappa: f64,
    length_km: f64,
    t_sym: f64,
    carriers: &[InterfererCarrier],
    s_modes: usize,
    l_max: usize,
) -> Result<CovarianceModel> {
    if beta2 == 0.0 {
        return Err(Error::Domain(
            "large-dispersion approximation is singular at beta2 = 0".into(),
        ));
    }
    let mut mean = 0.0;
    let mut r = vec![0.0; l_max + 1];
    let mut s = vec![0.0; l_max + 1];
    let gk = gamma * kappa;
    for carrier in carriers {
        if carrier.omega_offset == 0.0 {
            return Err(Error::Domain(
                "large-dispersion approximation is singular at Omega_c = 0".into(),
            ));
        }
        let walkoff = (beta2 * carrier.omega_offset).abs();
        mean += carrier.energy;
        let scale = gk * gk * length_km / t_sym / walkoff;
        for l in 0..=l_max {
            let window = (1.0 - l as f64 * t_sym / (walkoff * length_km)).max(0.0);
            r[l] += scale
                * (carrier.fourth_moment - carrier.energy * carrier.energy)
                * window;
            s[l] += scale * carrier.energy * carrier.energy * window;
        }
    }
    mean *= (1 + 2 * s_modes) as f64 * gk * length_km / t_sym;
    Ok(CovarianceModel {
        mode: CovarianceMode::LargeDispersion,
        mean_diag: mean,
        r,
        s,
        mean_imag_residue: 0.0,
    })
}

/// Interferer carriers seen from COI subcarrier `coi_subcarrier` of a WDM
/// grid: all subcarriers of every c != 0 channel (joint DBP over the COI
/// band removes the COI's own terms).
pub fn interferer_carriers(
    wdm: &WdmSpec,
    coi_subcarrier: usize,
    energies: &ChannelEnergies,
) -> Result<Vec<InterfererCarrier>> {
    let b_carrier = wdm.carrier_bandwidth();
    let mut out = Vec::new();
    for c in wdm.channels().filter(|&c| c != 0) {
        let (e, q) = energies.get(c).ok_or_else(|| {
            Error::Argument(format!("energies missing interferer channel {c}"))
        })?;
        for j in 0..wdm.subcarriers {
            let df = c as f64 * wdm.spacing_hz
                + (j as f64 - coi_subcarrier as f64) * b_carrier;
            out.push(InterfererCarrier {
                omega_offset: 2.0 * PI * df,
                energy: e,
                fourth_moment: q,
            });
        }
    }
    Ok(out)
}

/// Large-dispersion covariance for COI subcarrier 0 of `wdm` under a
/// strong-coupling link. For multi-carrier grids use
/// [`covariance_approx_carriers`] with [`interferer_carriers`] per subcarrier.
pub fn covariance_approx(
    spec: &CouplingSpec,
    wdm: &WdmSpec,
    energies: &ChannelEnergies,
    l_max: usize,
) -> Result<CovarianceModel> {
    let (beta2, kappa) = match &spec.regime {
        Regime::Strong { beta2, kappa } => (*beta2, *kappa),
        Regime::Weak { .. } => {
            return Err(Error::Argument(
                "covariance kernels are derived for the strong-coupling regime".into(),
            ))
        }
    };
    let carriers = interferer_carriers(wdm, 0, energies)?;
    covariance_approx_carriers(
        beta2,
        spec.gamma,
        kappa,
        spec.length_km,
        wdm.carrier_period(),
        &carriers,
        spec.modes,
        l_max,
    )
}

/// Full second-order description of the J-matrix entries implied by the
/// scalar kernels: diagonal ACF (3+2S) r, off-diagonal ACF s, diagonal
/// cross-covariance (2+2S) r, everything else zero up to Hermitian pairing.
#[derive(Debug, Clone)]
pub struct JmCovariance {
    pub s_modes: usize,
    pub diag_acf: Vec<f64>,
    pub offdiag_acf: Vec<f64>,
    pub diag_cross: Vec<f64>,
}

pub fn jm_covariance_structure(cov: &CovarianceModel, s_modes: usize) -> JmCovariance {
    let two_s = 2.0 * s_modes as f64;
    JmCovariance {
        s_modes,
        diag_acf: cov.r.iter().map(|v| (3.0 + two_s) * v).collect(),
        offdiag_acf: cov.s.clone(),
        diag_cross: cov.r.iter().map(|v| (2.0 + two_s) * v).collect(),
    }
}

impl JmCovariance {
    /// Covariance <J_ik[m] J_i'k'*[m+l]> minus means, for zero-based channel
    /// indices; applies the Hermitian pairing (i,k) ~ (k',i').
    pub fn entry(&self, i: usize, k: usize, ip: usize, kp: usize, l: i64) -> f64 {
        let lag = l.unsigned_abs() as usize;
        let at = |v: &Vec<f64>| v.get(lag).copied().unwrap_or(0.0);
        if i == k && ip == kp {
            return if i == ip {
                at(&self.diag_acf)
            } else {
                at(&self.diag_cross)
            };
        }
        if (i, k) == (ip, kp) || (i, k) == (kp, ip) {
            return at(&self.offdiag_acf);
        }
        0.0
    }
}
