//! Dispersed brick-wall (sinc) pulses evaluated on a cyclic time grid.

use crate::fft;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Unit-energy sinc pulse of bandwidth `1/t_sym` propagated to distance z
/// under quadratic dispersion: flat spectrum sqrt(T) over |f| <= B/2 with the
/// phase exp(j beta2/2 Omega^2 z), inverse-transformed numerically.
///
/// The time grid is cyclic with `n` points at spacing `t_sym / oversampling`;
/// index n/2.. wraps to negative time. The window must be wide enough that
/// the wrapped sinc tails are negligible for the quadrature at hand.
pub struct DispersedPulse {
    /// Samples per symbol period.
    pub oversampling: usize,
    /// Grid length (power of two).
    pub n: usize,
    /// Symbol period T of this carrier, s.
    pub t_sym: f64,
    /// Dispersion, s^2/km.
    pub beta2: f64,
    /// In-band frequencies (Hz) and their grid bins.
    band: Vec<(usize, f64)>,
    /// sqrt(T) * df, folded into the band amplitudes.
    amplitude: f64,
}

impl DispersedPulse {
    pub fn new(t_sym: f64, beta2: f64, oversampling: usize, window_symbols: usize) -> Self {
        let n = (oversampling * window_symbols).next_power_of_two();
        let fs = oversampling as f64 / t_sym;
        let df = fs / n as f64;
        // Exactly n / oversampling bins, half-open band [-B/2, B/2), the same
        // convention the modulator uses; the bin count makes the discrete
        // pulse unit-energy and exactly Nyquist on the grid.
        let m_band = (n / oversampling) as i64;
        let band: Vec<(usize, f64)> = (-m_band / 2..m_band / 2)
            .map(|q| ((q.rem_euclid(n as i64)) as usize, q as f64 * df))
            .collect();
        DispersedPulse {
            oversampling,
            n,
            t_sym,
            beta2,
            band,
            amplitude: t_sym.sqrt() * df,
        }
    }

    pub fn dt(&self) -> f64 {
        self.t_sym / self.oversampling as f64
    }

    /// s(z, t - shift) on the cyclic grid (FFT-native time ordering).
    pub fn eval(&self, z_km: f64, shift_s: f64) -> Vec<Complex64> {
        let mut buf = vec![Complex64::ZERO; self.n];
        for &(k, f) in &self.band {
            let w = 2.0 * PI * f;
            let phase = 0.5 * self.beta2 * w * w * z_km - w * shift_s;
            buf[k] = Complex64::from_polar(self.amplitude, phase);
        }
        // Raw inverse transform realizes sum_k S_k exp(j w t) directly.
        fft::fft_raw_inverse(&mut buf);
        buf
    }

    /// Time of grid index `i`, in seconds (wrapped ordering).
    pub fn time(&self, i: usize) -> f64 {
        let i = i as i64;
        let n = self.n as i64;
        let signed = if i < (n + 1) / 2 { i } else { i - n };
        signed as f64 * self.dt()
    }
}
