//! Sampled complex fields and the shared numeric substrate.

use crate::error::{Error, Result};
use crate::fft;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Polarization of one complex-alphabet channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    X,
    Y,
}

/// Time-sampled complex baseband field for the 2S channels of an S-mode link
/// at one distance `z_km`. Row `2s` carries mode `s+1` polarization x, row
/// `2s+1` polarization y; all downstream indexing relies on this stacking.
#[derive(Debug, Clone)]
pub struct ModeField {
    rows: Vec<Vec<Complex64>>,
    sample_rate: f64,
    z_km: f64,
}

impl ModeField {
    /// Wraps `rows` (2S rows, equal power-of-two length) sampled at
    /// `sample_rate` Hz.
    pub fn new(rows: Vec<Vec<Complex64>>, sample_rate: f64, z_km: f64) -> Result<Self> {
        if rows.is_empty() || rows.len() % 2 != 0 {
            return Err(Error::Argument(format!(
                "field needs an even, positive number of rows (2 per spatial mode), got {}",
                rows.len()
            )));
        }
        let n = rows[0].len();
        if !n.is_power_of_two() {
            return Err(Error::Size(format!(
                "time grid length {n} is not a power of two"
            )));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Argument("rows have unequal lengths".into()));
        }
        Ok(ModeField {
            rows,
            sample_rate,
            z_km,
        })
    }

    pub fn zeros(channels: usize, n: usize, sample_rate: f64) -> Result<Self> {
        ModeField::new(vec![vec![Complex64::ZERO; n]; channels], sample_rate, 0.0)
    }

    pub fn rows(&self) -> &[Vec<Complex64>] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<Complex64>> {
        self.rows
    }

    /// Number of complex-alphabet channels (2S).
    pub fn channels(&self) -> usize {
        self.rows.len()
    }

    /// Number of spatial modes S.
    pub fn modes(&self) -> usize {
        self.rows.len() / 2
    }

    pub fn len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows[0].is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn z_km(&self) -> f64 {
        self.z_km
    }

    pub fn set_z_km(&mut self, z: f64) {
        self.z_km = z;
    }

    /// Row index `i` maps to (spatial mode, polarization); modes count from 1.
    pub fn channel_order(&self) -> Vec<(usize, Polarization)> {
        (0..self.channels())
            .map(|i| {
                (
                    i / 2 + 1,
                    if i % 2 == 0 {
                        Polarization::X
                    } else {
                        Polarization::Y
                    },
                )
            })
            .collect()
    }

    /// Total energy sum |u|^2 dt over all rows, in joules.
    pub fn energy(&self) -> f64 {
        let dt = 1.0 / self.sample_rate;
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            * dt
    }

    /// Mean instantaneous power over all rows, in watts.
    pub fn mean_power(&self) -> f64 {
        let n = self.len() * self.channels();
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            / n as f64
    }

    pub fn is_finite(&self) -> bool {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Frequency-domain counterpart of [`ModeField`], FFT-native bin ordering
/// (bin 0 = DC). Produced by [`forward_spectrum`].
#[derive(Debug, Clone)]
pub struct FieldSpectrum {
    rows: Vec<Vec<Complex64>>,
    sample_rate: f64,
    z_km: f64,
}

impl FieldSpectrum {
    pub fn rows(&self) -> &[Vec<Complex64>] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.rows
    }

    pub fn len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows[0].is_empty()
    }

    pub fn channels(&self) -> usize {
        self.rows.len()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn z_km(&self) -> f64 {
        self.z_km
    }

    /// Frequency of bin `k` in Hz.
    pub fn bin_freq_hz(&self, k: usize) -> f64 {
        fft::bin_freq_hz(k, self.len(), self.sample_rate)
    }

    pub fn energy(&self) -> f64 {
        let dt = 1.0 / self.sample_rate;
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            * dt
    }
}

/// Row-wise unitary DFT. Requires the power-of-two grid the field contract
/// guarantees; rejects anything else so callers cannot silently lose the
/// Parseval bookkeeping.
pub fn forward_spectrum(f: &ModeField) -> Result<FieldSpectrum> {
    if !f.len().is_power_of_two() {
        return Err(Error::Size(format!(
            "spectrum requires power-of-two length, got {}",
            f.len()
        )));
    }
    let mut rows = f.rows.clone();
    for row in rows.iter_mut() {
        fft::fft_unitary(row);
    }
    Ok(FieldSpectrum {
        rows,
        sample_rate: f.sample_rate,
        z_km: f.z_km,
    })
}

/// Row-wise unitary inverse DFT.
pub fn inverse_spectrum(s: &FieldSpectrum) -> Result<ModeField> {
    if !s.len().is_power_of_two() {
        return Err(Error::Size(format!(
            "spectrum requires power-of-two length, got {}",
            s.len()
        )));
    }
    let mut rows = s.rows.clone();
    for row in rows.iter_mut() {
        fft::ifft_unitary(row);
    }
    ModeField::new(rows, s.sample_rate, s.z_km)
}

/// dBm to watts: `10^(p/10) mW`.
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf(p_dbm / 10.0) * 1e-3
}

/// Watts to dBm; positive power only.
pub fn watts_to_dbm(p_watts: f64) -> Result<f64> {
    if !(p_watts > 0.0) {
        return Err(Error::Domain(format!(
            "watts_to_dbm requires positive power, got {p_watts}"
        )));
    }
    Ok(10.0 * (p_watts / 1e-3).log10())
}
