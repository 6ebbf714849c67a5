//! The fitted/synthetic CRAN parameter set, the hidden state it drives, and
//! sampling of the mismatched channel y = exp(jJ) x + z.

use super::ar::{fit_markov, zero_markov, ArWindow, MarkovSpec, ProcessKind};
use super::hermitian::HermitianEig;
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::wdm::SymbolGrid;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Mismatched SDM-CRAN model parameters.
///
/// The hidden rotation state consists of 2S real phase processes Phi_i with
/// ACF `sigma_phi2 * base_r` and S(2S-1) circular complex off-diagonal
/// processes with ACF `sigma_j2 * base_s`, all memory-`memory` Markov. The
/// additive noise is CSCG shaped by the symmetric unit-energy 3-tap filter
/// (a, b, a) with a = `whitening_tap`, total per-symbol variance `sigma_z2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CranParams {
    pub s_modes: usize,
    pub memory: usize,
    /// Mean of the diagonal J entries applied by the channel.
    pub mean_diag: f64,
    /// Per-channel means the receiver removes (estimates of `mean_diag`).
    pub rx_mean: Vec<f64>,
    pub sigma_phi2: f64,
    pub sigma_j2: f64,
    /// Base kernel r[l], lags 0..=memory.
    pub base_r: Vec<f64>,
    /// Base kernel s[l], lags 0..=memory.
    pub base_s: Vec<f64>,
    /// Additive-noise variance per complex symbol, r_Z[0].
    pub sigma_z2: f64,
    /// Free parameter a of the (a, b, a) filter, 2a^2 + b^2 = 1.
    pub whitening_tap: f64,
}

impl CranParams {
    /// Synthetic parameter set from base kernels.
    pub fn new(
        s_modes: usize,
        memory: usize,
        mean_diag: f64,
        sigma_phi2: f64,
        sigma_j2: f64,
        base_r: Vec<f64>,
        base_s: Vec<f64>,
        sigma_z2: f64,
        whitening_tap: f64,
    ) -> Result<Self> {
        let params = CranParams {
            s_modes,
            memory,
            mean_diag,
            rx_mean: vec![mean_diag; 2 * s_modes],
            sigma_phi2,
            sigma_j2,
            base_r,
            base_s,
            sigma_z2,
            whitening_tap,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_r.len() != self.memory + 1 || self.base_s.len() != self.memory + 1 {
            return Err(Error::Argument(
                "base kernels must cover lags 0..=memory".into(),
            ));
        }
        if self.rx_mean.len() != 2 * self.s_modes {
            return Err(Error::Argument("rx_mean needs one entry per channel".into()));
        }
        if self.sigma_phi2 < 0.0 || self.sigma_j2 < 0.0 || self.sigma_z2 < 0.0 {
            return Err(Error::Domain("negative variance scale".into()));
        }
        if 2.0 * self.whitening_tap * self.whitening_tap >= 1.0 {
            return Err(Error::Domain(format!(
                "whitening tap {} violates 2a^2 < 1",
                self.whitening_tap
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        2 * self.s_modes
    }

    /// Number of i < k off-diagonal pairs, S(2S-1) complex processes.
    pub fn offdiag_pairs(&self) -> usize {
        self.s_modes * (2 * self.s_modes - 1)
    }

    /// Real hidden rotation/phase processes: 2S + 2 S(2S-1) = 4 S^2.
    pub fn rotation_process_count(&self) -> usize {
        4 * self.s_modes * self.s_modes
    }

    /// Real additive-noise components: 4S.
    pub fn noise_process_count(&self) -> usize {
        4 * self.s_modes
    }

    /// Total hidden independent real Gauss-Markov processes: 4S(S+1).
    pub fn hidden_process_count(&self) -> usize {
        self.rotation_process_count() + self.noise_process_count()
    }

    /// (a, b) taps of the unit-energy shaping/whitening filter.
    pub fn noise_taps(&self) -> (f64, f64) {
        let a = self.whitening_tap;
        (a, (1.0 - 2.0 * a * a).sqrt())
    }

    /// Additive-noise ACF on lags 0..=2 implied by the 3-tap shaping.
    pub fn noise_acf(&self) -> [f64; 3] {
        let (a, b) = self.noise_taps();
        [
            self.sigma_z2,
            self.sigma_z2 * 2.0 * a * b,
            self.sigma_z2 * a * a,
        ]
    }

    pub fn phi_markov(&self) -> Result<MarkovSpec> {
        let acf: Vec<f64> = self.base_r.iter().map(|v| v * self.sigma_phi2).collect();
        if acf[0] == 0.0 {
            return Ok(zero_markov(self.memory, ProcessKind::Real));
        }
        fit_markov(&acf, ProcessKind::Real)
    }

    pub fn offdiag_markov(&self) -> Result<MarkovSpec> {
        let acf: Vec<f64> = self.base_s.iter().map(|v| v * self.sigma_j2).collect();
        if acf[0] == 0.0 {
            return Ok(zero_markov(self.memory, ProcessKind::ComplexCircular));
        }
        fit_markov(&acf, ProcessKind::ComplexCircular)
    }
}

/// Index of the (i, k) pair, i < k, in the lexicographic off-diagonal order.
pub fn pair_index(i: usize, k: usize, channels: usize) -> usize {
    debug_assert!(i < k && k < channels);
    i * channels - i * (i + 1) / 2 + (k - i - 1)
}

/// Hidden rotation state at one symbol: current values plus the AR lag
/// windows. Off-diagonal entries are ordered by `pair_index`.
#[derive(Debug, Clone)]
pub struct HiddenState {
    pub phi: Vec<f64>,
    pub offdiag: Vec<Complex64>,
    phi_windows: Vec<ArWindow>,
    offdiag_windows: Vec<ArWindow>,
}

impl HiddenState {
    /// Stationary draw for all 4S^2 rotation processes.
    pub fn stationary(params: &CranParams, stream: &mut RandomStream) -> Result<Self> {
        let phi_spec = params.phi_markov()?;
        let off_spec = params.offdiag_markov()?;
        let channels = params.channels();
        let mut state = HiddenState {
            phi: vec![0.0; channels],
            offdiag: vec![Complex64::ZERO; params.offdiag_pairs()],
            phi_windows: (0..channels)
                .map(|_| ArWindow::stationary(&phi_spec, stream))
                .collect(),
            offdiag_windows: (0..params.offdiag_pairs())
                .map(|_| ArWindow::stationary(&off_spec, stream))
                .collect(),
        };
        // Advance once so the current values are stationary draws too.
        state.step(&phi_spec, &off_spec, stream);
        Ok(state)
    }

    /// Advances every hidden process one symbol.
    pub fn step(&mut self, phi_spec: &MarkovSpec, off_spec: &MarkovSpec, stream: &mut RandomStream) {
        for (v, w) in self.phi.iter_mut().zip(self.phi_windows.iter_mut()) {
            *v = w.step_real(phi_spec, stream);
        }
        for (v, w) in self.offdiag.iter_mut().zip(self.offdiag_windows.iter_mut()) {
            *v = w.step_complex(off_spec, stream);
        }
    }

    pub fn dimension(&self) -> usize {
        self.phi.len() + 2 * self.offdiag.len()
    }
}

/// Assembles the zero-mean Hermitian J matrix from the hidden state:
/// J_ii = 2 Phi_i + sum_{i' != i} Phi_i', J_ki = J_ik* from the pair list.
pub fn assemble_j(state: &HiddenState, s_modes: usize) -> Vec<Complex64> {
    let n = 2 * s_modes;
    debug_assert_eq!(state.phi.len(), n);
    let total: f64 = state.phi.iter().sum();
    let mut j = vec![Complex64::ZERO; n * n];
    for i in 0..n {
        j[i * n + i] = Complex64::new(state.phi[i] + total, 0.0);
    }
    for i in 0..n {
        for k in i + 1..n {
            let v = state.offdiag[pair_index(i, k, n)];
            j[i * n + k] = v;
            j[k * n + i] = v.conj();
        }
    }
    j
}

/// Samples the mismatched channel over a symbol grid: evolves the hidden
/// processes, emits y_m = exp(j(J_m + mean I)) x_m + z_m with z colored by
/// the 3-tap filter, and returns the per-symbol hidden trajectory.
pub fn sample_channel(
    x: &SymbolGrid,
    params: &CranParams,
    stream: &mut RandomStream,
) -> Result<(SymbolGrid, Vec<HiddenState>)> {
    params.validate()?;
    let n = params.channels();
    if x.channels() != n {
        return Err(Error::Argument(format!(
            "symbol grid has {} rows, model expects {n}",
            x.channels()
        )));
    }
    let m = x.len();
    let phi_spec = params.phi_markov()?;
    let off_spec = params.offdiag_markov()?;
    let mut state = HiddenState::stationary(params, &mut stream.fork("init"))?;
    let mut hidden_stream = stream.fork("hidden");
    let mut noise_stream = stream.fork("noise");

    // Pre-draw the white noise so the centered 3-tap filter sees m+2 samples.
    let (a, b) = params.noise_taps();
    let sigma = params.sigma_z2.sqrt();
    let white: Vec<Vec<Complex64>> = (0..n)
        .map(|_| (0..m + 2).map(|_| noise_stream.cscg(1.0)).collect())
        .collect();

    let mut eig = HermitianEig::new(n);
    let mut y = SymbolGrid::zeros(n, m);
    let mut trajectory = Vec::with_capacity(m);
    let mut xv = vec![Complex64::ZERO; n];
    let mut yv = vec![Complex64::ZERO; n];
    for sym in 0..m {
        if sym > 0 {
            state.step(&phi_spec, &off_spec, &mut hidden_stream);
        }
        let mut j = assemble_j(&state, params.s_modes);
        for i in 0..n {
            j[i * n + i] += params.mean_diag;
        }
        eig.factor(&j);
        for (i, row) in x.rows().iter().enumerate() {
            xv[i] = row[sym];
        }
        eig.apply_exp_to_vector(&xv, &mut yv);
        for (i, row) in y.rows_mut().iter_mut().enumerate() {
            let w = &white[i];
            let z = (w[sym] * a + w[sym + 1] * b + w[sym + 2] * a) * sigma;
            row[sym] = yv[i] + z;
        }
        trajectory.push(state.clone());
    }
    Ok((y, trajectory))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cran::hermitian::apply_unitary;

    fn toy_params(s_modes: usize, sigma_phi2: f64, sigma_j2: f64, tap: f64) -> CranParams {
        CranParams::new(
            s_modes,
            2,
            0.0,
            sigma_phi2,
            sigma_j2,
            vec![1e-4, 6e-5, 3e-5],
            vec![1e-4, 6e-5, 3e-5],
            1e-6,
            tap,
        )
        .unwrap()
    }

    #[test]
    fn equal_phases_give_scaled_identity() {
        let params = toy_params(2, 1.0, 1.0, 0.0);
        let mut stream = RandomStream::new(0, "eq");
        let mut state = HiddenState::stationary(&params, &mut stream).unwrap();
        let phi = 0.01;
        state.phi = vec![phi; 4];
        state.offdiag = vec![Complex64::ZERO; 6];
        let j = assemble_j(&state, 2);
        for i in 0..4 {
            for k in 0..4 {
                let expect = if i == k { 5.0 * phi } else { 0.0 };
                assert!((j[i * 4 + k] - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn single_phase_structure() {
        let params = toy_params(2, 1.0, 1.0, 0.0);
        let mut stream = RandomStream::new(0, "single");
        let mut state = HiddenState::stationary(&params, &mut stream).unwrap();
        state.phi = vec![1.0, 0.0, 0.0, 0.0];
        state.offdiag = vec![Complex64::ZERO; 6];
        let j = assemble_j(&state, 2);
        let expect = [2.0, 1.0, 1.0, 1.0];
        for i in 0..4 {
            assert!((j[i * 4 + i].re - expect[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_variance_matches_structure() {
        // Var(J_ii) = (3 + 2S) r[0] and Cov(J_ii, J_kk) = (2 + 2S) r[0].
        let params = toy_params(2, 1.0, 1.0, 0.0);
        let phi_spec = params.phi_markov().unwrap();
        let off_spec = params.offdiag_markov().unwrap();
        let mut stream = RandomStream::new(5, "mc-var");
        let mut state = HiddenState::stationary(&params, &mut stream).unwrap();
        let n = 100_000;
        let mut var = 0.0;
        let mut cross = 0.0;
        let mut off_var = 0.0;
        for _ in 0..n {
            state.step(&phi_spec, &off_spec, &mut stream);
            let j = assemble_j(&state, 2);
            var += j[0].re * j[0].re;
            cross += j[0].re * j[5].re;
            off_var += j[1].norm_sqr();
        }
        let r0 = params.base_r[0];
        let var = var / n as f64;
        let cross = cross / n as f64;
        let off_var = off_var / n as f64;
        assert!((var - 7.0 * r0).abs() / (7.0 * r0) < 0.03, "var {var:.3e}");
        assert!(
            (cross - 6.0 * r0).abs() / (6.0 * r0) < 0.03,
            "cross {cross:.3e}"
        );
        assert!(
            (off_var - params.base_s[0]).abs() / params.base_s[0] < 0.03,
            "offdiag var {off_var:.3e}"
        );
        // Ratio check (2+2S)/(3+2S) for S = 2.
        assert!((cross / var - 6.0 / 7.0).abs() < 0.02);
    }

    #[test]
    fn degenerate_model_is_awgn() {
        let params = CranParams::new(
            2,
            0,
            0.0,
            0.0,
            0.0,
            vec![0.0],
            vec![0.0],
            1e-6,
            0.0,
        )
        .unwrap();
        let mut stream = RandomStream::new(7, "awgn");
        let x = SymbolGrid::random_cscg(4, 512, 1e-4, &mut stream.fork("x"));
        let (y, _) = sample_channel(&x, &params, &mut stream).unwrap();
        let mut err = 0.0;
        for (yr, xr) in y.rows().iter().zip(x.rows()) {
            for (a, b) in yr.iter().zip(xr.iter()) {
                err += (a - b).norm_sqr();
            }
        }
        let var = err / (4.0 * 512.0);
        assert!((var - 1e-6).abs() / 1e-6 < 0.1, "residual variance {var:.3e}");
    }

    #[test]
    fn zero_input_gives_colored_noise() {
        let params = toy_params(1, 1.0, 1.0, 0.2);
        let mut stream = RandomStream::new(11, "colored");
        let x = SymbolGrid::zeros(2, 60_000);
        let (y, _) = sample_channel(&x, &params, &mut stream).unwrap();
        let acf_expect = params.noise_acf();
        for lag in 0..3 {
            let mut acc = Complex64::ZERO;
            let mut count = 0usize;
            for row in y.rows() {
                for m in lag..row.len() {
                    acc += row[m] * row[m - lag].conj();
                    count += 1;
                }
            }
            let est = acc / count as f64;
            let rel = (est.re - acf_expect[lag]).abs() / acf_expect[0];
            assert!(rel < 0.03, "lag {lag}: {est} vs {}", acf_expect[lag]);
            assert!(est.im.abs() / acf_expect[0] < 0.03);
        }
    }

    #[test]
    fn rotation_preserves_symbol_norm() {
        let mut params = toy_params(2, 1.0, 1.0, 0.0);
        params.sigma_z2 = 0.0;
        params.mean_diag = 0.05;
        let mut stream = RandomStream::new(13, "norm");
        let x = SymbolGrid::random_cscg(4, 200, 1e-4, &mut stream.fork("x"));
        let (y, _) = sample_channel(&x, &params, &mut stream).unwrap();
        for m in 0..x.len() {
            let nx: f64 = x.column(m).iter().map(|v| v.norm_sqr()).sum();
            let ny: f64 = y.column(m).iter().map(|v| v.norm_sqr()).sum();
            assert!((nx - ny).abs() / nx < 1e-12);
        }
    }

    #[test]
    fn hidden_dimension_counts() {
        for s in 1..=3 {
            let params = toy_params(s, 1.0, 1.0, 0.0);
            assert_eq!(params.rotation_process_count(), 4 * s * s);
            assert_eq!(params.noise_process_count(), 4 * s);
            assert_eq!(params.hidden_process_count(), 4 * s * (s + 1));
            let mut stream = RandomStream::new(0, "dim");
            let state = HiddenState::stationary(&params, &mut stream).unwrap();
            assert_eq!(state.dimension(), 4 * s * s);
        }
    }

    #[test]
    fn hidden_processes_are_zero_mean() {
        let params = toy_params(1, 1.0, 1.0, 0.0);
        let phi_spec = params.phi_markov().unwrap();
        let off_spec = params.offdiag_markov().unwrap();
        let mut stream = RandomStream::new(19, "zero-mean");
        let mut state = HiddenState::stationary(&params, &mut stream).unwrap();
        let n = 1_000_000;
        let mut phi_sum = 0.0;
        let mut off_sum = Complex64::ZERO;
        for _ in 0..n {
            state.step(&phi_spec, &off_spec, &mut stream);
            phi_sum += state.phi[0];
            off_sum += state.offdiag[0];
        }
        let sigma = params.base_r[0].sqrt();
        // Correlated samples: allow a generous multiple of sigma/sqrt(N).
        let bound = 4.0 * sigma / (n as f64).sqrt() * 3.0;
        assert!((phi_sum / n as f64).abs() < bound);
        assert!((off_sum / n as f64).norm() < 2.0 * bound);
    }

    #[test]
    fn mu_sweep_round_trips_acf() {
        // The model contract holds for any memory: the fitted AR reproduces
        // the kernel on lags 0..=mu.
        let base: Vec<f64> = (0..5).map(|l| 1e-4 * (1.0 - l as f64 / 6.0)).collect();
        for mu in [1usize, 2, 4] {
            let params = CranParams::new(
                2,
                mu,
                0.0,
                1.3,
                0.7,
                base[..=mu].to_vec(),
                base[..=mu].to_vec(),
                1e-6,
                0.1,
            )
            .unwrap();
            let spec = params.phi_markov().unwrap();
            let implied = spec.implied_acf();
            for (l, v) in implied.iter().enumerate() {
                let target = 1.3 * base[l];
                assert!((v - target).abs() < 1e-8 * target.max(1e-12), "mu={mu} lag {l}");
            }
        }
    }

    #[test]
    fn unitary_factor_is_applied() {
        // With deterministic hidden state forced to zero and a mean, the
        // channel reduces to a pure phase e^{j (1+2S) ... } -- check against
        // apply_unitary on the assembled matrix.
        let mut params = toy_params(1, 0.0, 0.0, 0.0);
        params.sigma_z2 = 0.0;
        params.mean_diag = 0.3;
        let mut stream = RandomStream::new(23, "phase");
        let x = SymbolGrid::random_cscg(2, 16, 1.0, &mut stream.fork("x"));
        let (y, traj) = sample_channel(&x, &params, &mut stream).unwrap();
        assert_eq!(traj.len(), 16);
        let rot = Complex64::from_polar(1.0, 0.3);
        for m in 0..16 {
            let expect: Vec<Complex64> = x.column(m).iter().map(|v| v * rot).collect();
            let got = y.column(m);
            for (a, b) in got.iter().zip(expect.iter()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
        let _ = apply_unitary(&[Complex64::ONE], &[Complex64::ONE]);
    }
}
