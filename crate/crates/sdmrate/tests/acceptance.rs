//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers. Criterion 9 (full-scale reproduction) is ignored by
//! default; run it with `cargo test --test acceptance -- --ignored`.

use num_complex::Complex64;
use sdmrate::cran::{
    assemble_j, fit_markov, sample_channel, ArWindow, CranParams, HiddenState, ProcessKind,
};
use sdmrate::error::Result;
use sdmrate::estimation::{estimate_mean_phase, estimate_sigma_z, fit_scales, FitConfig, TrainingSet};
use sdmrate::experiment::{
    capacity_bound, run_pipeline, DataConfig, ExperimentConfig, ModelConfig, RateRow,
};
use sdmrate::fiber::{propagate, CouplingSpec, Regime, SsfmConfig};
use sdmrate::fft;
use sdmrate::pf::{conditional_entropy, smc_log_predictive, ReceiverAlgo};
use sdmrate::rng::RandomStream;
use sdmrate::rp::{build_x_table, covariance_approx, covariance_exact, ChannelEnergies};
use sdmrate::signal::{dbm_to_watts, ModeField};
use sdmrate::wdm::{modulate, SymbolFrame, SymbolGrid, WdmSpec};
use std::f64::consts::PI;

fn pass(criterion: &str, detail: String) {
    println!("PASS {criterion}: {detail}");
}

// ---------------------------------------------------------------------------
// Criterion 1: AWGN sanity. With gamma = 0 at SNR in {5, 10, 15} dB every
// receiver algorithm's rate equals log2(1 + SNR) within 0.05 bit, through the
// full simulate -> fit -> rate pipeline.
// ---------------------------------------------------------------------------
#[test]
fn criterion_1_awgn_sanity() {
    let mut cfg = ExperimentConfig::desk_scale();
    cfg.link.gamma_per_w_km = 0.0;
    cfg.link.length_km = 100.0;
    cfg.ssfm.step_km = 10.0;
    let n_ase_b = cfg.link.n_ase_w_per_hz * cfg.wdm.bandwidth_ghz * 1e9;
    let snrs_db = [5.0, 10.0, 15.0];
    cfg.powers_dbm = snrs_db
        .iter()
        .map(|s| 10.0 * (10f64.powf(s / 10.0) * n_ase_b * 1e3).log10())
        .collect();
    cfg.training = DataConfig {
        train_sequences: 2,
        test_sequences: 4,
        symbols_per_sequence: 512,
    };
    cfg.model = ModelConfig {
        memory: 1,
        particles: 64,
        fit_particles: 32,
    };
    cfg.seed = 101;
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&cfg, dir.path()).unwrap();
    for (snr_db, &p) in snrs_db.iter().zip(cfg.powers_dbm.iter()) {
        let expect = (1.0 + 10f64.powf(snr_db / 10.0)).log2();
        for algo in &cfg.algos {
            let row = out
                .rates
                .iter()
                .find(|r| r.algo == algo.label() && (r.power_dbm - p).abs() < 1e-9)
                .unwrap();
            assert!(
                (row.rate_bits - expect).abs() < 0.05,
                "SNR {snr_db} dB, {}: rate {} vs log2(1+SNR) = {expect}",
                row.algo,
                row.rate_bits
            );
        }
    }
    pass(
        "criterion 1 (AWGN sanity)",
        format!(
            "all {} algos within 0.05 bit of log2(1+SNR) at SNR 5/10/15 dB",
            cfg.algos.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: RP-order property. For a 2-channel, 100-km noiseless system
// the residual ||u_ssfm - u0 - gamma du|| shrinks by a factor in [3.3, 4.7]
// when gamma is halved (second-order remainder).
// ---------------------------------------------------------------------------

/// First-order RP correction per unit gamma: j D_L int D_{-z}[kappa ||u0||^2 u0] dz,
/// with u0(z) the dispersed input, integrated by Simpson's rule in z.
fn rp_first_order(
    input: &ModeField,
    beta2: f64,
    kappa: f64,
    length: f64,
    n_z: usize,
) -> Vec<Vec<Complex64>> {
    assert!(n_z % 2 == 0);
    let n = input.len();
    let rows = input.channels();
    let fs = input.sample_rate();
    let omegas: Vec<f64> = (0..n)
        .map(|k| 2.0 * PI * fft::bin_freq_hz(k, n, fs))
        .collect();
    let mut spectrum0: Vec<Vec<Complex64>> = input.rows().to_vec();
    for row in spectrum0.iter_mut() {
        fft::fft_unitary(row);
    }
    let h = length / n_z as f64;
    let mut acc = vec![vec![Complex64::ZERO; n]; rows];
    for i in 0..=n_z {
        let z = i as f64 * h;
        let w = if i == 0 || i == n_z {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        // u0(z) in time.
        let mut u0: Vec<Vec<Complex64>> = spectrum0.clone();
        for row in u0.iter_mut() {
            for (v, &om) in row.iter_mut().zip(omegas.iter()) {
                *v *= Complex64::from_polar(1.0, 0.5 * beta2 * om * om * z);
            }
            fft::ifft_unitary(row);
        }
        // kappa ||u0||^2 u0 per sample, back to z = 0 frame, accumulate.
        let mut nl = vec![vec![Complex64::ZERO; n]; rows];
        for t in 0..n {
            let power: f64 = u0.iter().map(|r| r[t].norm_sqr()).sum();
            for (dst, src) in nl.iter_mut().zip(u0.iter()) {
                dst[t] = src[t] * (kappa * power);
            }
        }
        for (row, a) in nl.iter_mut().zip(acc.iter_mut()) {
            fft::fft_unitary(row);
            for ((v, &om), dst) in row.iter_mut().zip(omegas.iter()).zip(a.iter_mut()) {
                *v *= Complex64::from_polar(1.0, -0.5 * beta2 * om * om * z);
                *dst += *v * (w * h / 3.0);
            }
        }
    }
    // j D_L on the accumulated spectrum, then to time.
    for row in acc.iter_mut() {
        for (v, &om) in row.iter_mut().zip(omegas.iter()) {
            *v *= Complex64::i() * Complex64::from_polar(1.0, 0.5 * beta2 * om * om * length);
        }
        fft::ifft_unitary(row);
    }
    acc
}

#[test]
fn criterion_2_rp_order_property() {
    let beta2 = -21.7e-24;
    let kappa = 1.0;
    let length = 100.0;
    let wdm = WdmSpec::new(0, 1, 50e9, 50e9, 1).unwrap();
    let mut stream = RandomStream::new(202, "rp-order");
    let wdm = wdm.with_random_delays(&mut stream);
    let frame = SymbolFrame::random(&wdm, 1, 256, 2.0e-3, &mut stream).unwrap();
    let input = modulate(&frame, 4).unwrap();

    let du = rp_first_order(&input, beta2, kappa, length, 512);

    let residual = |gamma: f64| -> f64 {
        let spec = CouplingSpec::strong(1, beta2, kappa, gamma, 5.902e-18, 50e9, length).unwrap();
        let mut s = RandomStream::new(0, "rp-ssfm");
        let out = propagate(&input, &spec, &SsfmConfig::noiseless(0.05), &mut s).unwrap();
        let mut linear = spec;
        linear.gamma = 0.0;
        let u0 = propagate(&input, &linear, &SsfmConfig::noiseless(50.0), &mut s).unwrap();
        let mut err = 0.0;
        for i in 0..input.channels() {
            for t in 0..input.len() {
                let model = u0.rows()[i][t] + du[i][t] * gamma;
                err += (out.rows()[i][t] - model).norm_sqr();
            }
        }
        err.sqrt()
    };

    let gamma = 1.27;
    let e_full = residual(gamma);
    let e_half = residual(gamma / 2.0);
    let ratio = e_full / e_half;
    assert!(
        (3.3..4.7).contains(&ratio),
        "residual ratio {ratio} outside [3.3, 4.7] (e({gamma}) = {e_full:.3e}, e({}) = {e_half:.3e})",
        gamma / 2.0
    );
    pass(
        "criterion 2 (RP order)",
        format!("residual ratio {ratio:.2} in [3.3, 4.7] when gamma halves"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: covariance oracle. The Monte-Carlo ACF of the diagonal NLI
// term built directly from the exact X coefficients matches (3+2S) r[l]
// within 5% at l in {0,1,2}; and r[l] = s[l] for CSCG inputs in the
// large-dispersion approximation.
// ---------------------------------------------------------------------------
#[test]
fn criterion_3_covariance_oracle() {
    let s_modes = 2usize;
    let spec = CouplingSpec::strong(s_modes, -21.7e-24, 1.0, 1.27, 5.902e-18, 50e9, 40.0).unwrap();
    let wdm = WdmSpec::new(-1, 1, 50e9, 50e9, 1).unwrap();
    let table = build_x_table(&spec, &wdm).unwrap();
    let energy = dbm_to_watts(-8.0) * wdm.symbol_period();
    let energies = ChannelEnergies::cscg([-1, 1], energy);
    let cov = covariance_exact(&table, &energies, s_modes, 2).unwrap();

    // theta_i[m] = sum_c sum_kk' X_c[k,k'] (b_i b_i* + sum_j b_j b_j*):
    // the i-th row's own quadratic form counts twice.
    let k_max = table.k_max;
    let side = (2 * k_max + 1) as usize;
    let m_sym = 10_000usize;
    let reps = 8usize;
    let rows = 2 * s_modes;
    let mut acf = [0.0f64; 3];
    let root = RandomStream::new(303, "cov-oracle");
    for rep in 0..reps {
        let mut stream = root.fork(&format!("rep{rep}"));
        // Quadratic forms per channel row and WDM channel.
        let mut q = vec![vec![0.0f64; m_sym]; rows];
        for &c in &[-1i32, 1] {
            let block = table.block(c).unwrap();
            for (j, qj) in q.iter_mut().enumerate() {
                let _ = j;
                let b: Vec<Complex64> = (0..m_sym + side)
                    .map(|_| stream.cscg(energy))
                    .collect();
                for (m, qv) in qj.iter_mut().enumerate() {
                    let mut form = Complex64::ZERO;
                    for k in 0..side {
                        let bk = b[m + k];
                        for kp in 0..side {
                            form += block[k * side + kp] * bk * b[m + kp].conj();
                        }
                    }
                    *qv += form.re;
                }
            }
        }
        // Diagonal entry for row 0: own form twice plus the others once.
        let theta: Vec<f64> = (0..m_sym)
            .map(|m| q[0][m] + (0..rows).map(|j| q[j][m]).sum::<f64>())
            .collect();
        let mean = theta.iter().sum::<f64>() / m_sym as f64;
        for (l, a) in acf.iter_mut().enumerate() {
            let mut acc = 0.0;
            for m in l..m_sym {
                acc += (theta[m] - mean) * (theta[m - l] - mean);
            }
            *a += acc / (m_sym - l) as f64;
        }
    }
    let factor = (3 + 2 * s_modes) as f64;
    let mut details = Vec::new();
    for l in 0..3 {
        let mc = acf[l] / reps as f64;
        let predicted = factor * cov.r[l];
        let rel = (mc - predicted).abs() / predicted;
        assert!(
            rel < 0.05,
            "lag {l}: MC {mc:.4e} vs (3+2S) r = {predicted:.4e} ({:.1}% off)",
            rel * 100.0
        );
        details.push(format!("l={l}: {:.1}%", rel * 100.0));
    }

    // CSCG makes r = s in the approximation.
    let approx = covariance_approx(&spec, &wdm, &energies, 8).unwrap();
    for (rv, sv) in approx.r.iter().zip(approx.s.iter()) {
        assert!((rv - sv).abs() <= 1e-12 * rv.abs().max(1e-300));
    }
    pass(
        "criterion 3 (covariance oracle)",
        format!("MC vs (3+2S) r[l] deviations: {}; r = s for CSCG", details.join(", ")),
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: hidden-dimension check. 4S^2 rotation/phase processes plus 4S
// additive components = 4S(S+1) for S in {1, 2, 3}.
// ---------------------------------------------------------------------------
#[test]
fn criterion_4_hidden_dimension() {
    for s in 1..=3usize {
        let params = CranParams::new(
            s,
            2,
            0.0,
            1.0,
            1.0,
            vec![1e-4, 5e-5, 2e-5],
            vec![1e-4, 5e-5, 2e-5],
            1e-6,
            0.0,
        )
        .unwrap();
        assert_eq!(params.rotation_process_count(), 4 * s * s);
        assert_eq!(params.noise_process_count(), 4 * s);
        assert_eq!(params.hidden_process_count(), 4 * s * (s + 1));
        let mut stream = RandomStream::new(404, "dims");
        let state = HiddenState::stationary(&params, &mut stream).unwrap();
        assert_eq!(state.dimension(), 4 * s * s);
    }
    pass(
        "criterion 4 (hidden dimension)",
        "4S^2 rotation + 4S noise = 4S(S+1) for S in {1,2,3}".into(),
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: S = 1 consistency. The diagonal ACF of the assembled J equals
// 5 r[l] within 3% Monte-Carlo error.
// ---------------------------------------------------------------------------
#[test]
fn criterion_5_s1_diagonal_acf() {
    let base_r = vec![2e-4, 1.2e-4, 6e-5];
    let params = CranParams::new(
        1,
        2,
        0.0,
        1.0,
        1.0,
        base_r.clone(),
        base_r.clone(),
        1e-6,
        0.0,
    )
    .unwrap();
    let phi_spec = params.phi_markov().unwrap();
    let off_spec = params.offdiag_markov().unwrap();
    let mut stream = RandomStream::new(505, "s1-acf");
    let mut state = HiddenState::stationary(&params, &mut stream).unwrap();
    let n = 2_000_000usize;
    let mut j00 = Vec::with_capacity(n);
    for _ in 0..n {
        state.step(&phi_spec, &off_spec, &mut stream);
        let j = assemble_j(&state, 1);
        j00.push(j[0].re);
    }
    let mean = j00.iter().sum::<f64>() / n as f64;
    let mut details = Vec::new();
    for l in 0..=2usize {
        let mut acc = 0.0;
        for m in l..n {
            acc += (j00[m] - mean) * (j00[m - l] - mean);
        }
        let mc = acc / (n - l) as f64;
        let predicted = 5.0 * base_r[l];
        let rel = (mc - predicted).abs() / predicted;
        assert!(rel < 0.03, "lag {l}: {mc:.4e} vs 5r = {predicted:.4e}");
        details.push(format!("l={l}: {:.2}%", rel * 100.0));
    }
    pass(
        "criterion 5 (S=1 diagonal ACF = 5r)",
        details.join(", "),
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: filter oracles. (a) On a 1-D diagonal phase model the particle
// h_q(Y|X) matches a 2048-point deterministic grid filter within 0.02 bit.
// (b) On a linear-Gaussian surrogate the particle log-likelihood matches the
// Kalman filter within 3 standard errors over 100 replicates.
// ---------------------------------------------------------------------------

/// Deterministic grid filter for y_m = e^{j theta} x_m + CSCG(sigma2),
/// theta an AR(1) with coefficient a1 and innovation q; returns bits/symbol.
fn grid_filter_entropy(
    xs: &[Complex64],
    ys: &[Complex64],
    v0: f64,
    a1: f64,
    q: f64,
    sigma2: f64,
    n_grid: usize,
) -> f64 {
    let half = 8.0 * v0.sqrt();
    let thetas: Vec<f64> = (0..n_grid)
        .map(|g| -half + 2.0 * half * g as f64 / (n_grid - 1) as f64)
        .collect();
    // Stationary prior masses.
    let mut p: Vec<f64> = thetas
        .iter()
        .map(|t| (-t * t / (2.0 * v0)).exp())
        .collect();
    let norm: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= norm);
    // Row-normalized transition masses T[g -> g'].
    let mut trans = vec![0.0f64; n_grid * n_grid];
    for g in 0..n_grid {
        let mean = a1 * thetas[g];
        let mut row_sum = 0.0;
        for gp in 0..n_grid {
            let d = thetas[gp] - mean;
            let v = (-d * d / (2.0 * q)).exp();
            trans[g * n_grid + gp] = v;
            row_sum += v;
        }
        for gp in 0..n_grid {
            trans[g * n_grid + gp] /= row_sum;
        }
    }
    let mut log2_total = 0.0;
    let mut work = vec![0.0f64; n_grid];
    for (m, (&x, &y)) in xs.iter().zip(ys.iter()).enumerate() {
        if m > 0 {
            work.fill(0.0);
            for g in 0..n_grid {
                let pg = p[g];
                if pg == 0.0 {
                    continue;
                }
                let row = &trans[g * n_grid..(g + 1) * n_grid];
                for (w, t) in work.iter_mut().zip(row.iter()) {
                    *w += pg * t;
                }
            }
            p.copy_from_slice(&work);
        }
        let mut pred = 0.0;
        for (g, t) in thetas.iter().enumerate() {
            let rot = Complex64::from_polar(1.0, *t);
            let lik = (-(y - rot * x).norm_sqr() / sigma2).exp() / (PI * sigma2);
            work[g] = p[g] * lik;
            pred += work[g];
        }
        log2_total += pred.log2();
        for (pv, w) in p.iter_mut().zip(work.iter()) {
            *pv = w / pred;
        }
    }
    -log2_total / xs.len() as f64
}

#[test]
fn criterion_6_filter_oracles() {
    // (a) Grid-filter oracle on the scalar phase model.
    let v0 = 0.01;
    let a1 = 0.95;
    let q = v0 * (1.0 - a1 * a1);
    let sigma2 = 0.01;
    let energy = 1.0;
    let m_sym = 4000usize;
    let params = CranParams::new(
        1,
        1,
        0.0,
        1.0,
        1.0,
        vec![v0, a1 * v0],
        vec![0.0, 0.0],
        sigma2,
        0.0,
    )
    .unwrap();
    // Two independent scalar channels generated exactly from the 1p model.
    let mut gen = RandomStream::new(606, "grid-oracle");
    let phi_spec = fit_markov(&[v0, a1 * v0], ProcessKind::Real).unwrap();
    let mut x = SymbolGrid::zeros(2, m_sym);
    let mut y = SymbolGrid::zeros(2, m_sym);
    for ch in 0..2 {
        let mut win = ArWindow::stationary(&phi_spec, &mut gen);
        for m in 0..m_sym {
            let theta = win.step_real(&phi_spec, &mut gen);
            let xv = gen.cscg(energy);
            let yv = xv * Complex64::from_polar(1.0, theta) + gen.cscg(sigma2);
            x.rows_mut()[ch][m] = xv;
            y.rows_mut()[ch][m] = yv;
        }
    }
    let stream = RandomStream::new(607, "grid-pf");
    let pf = conditional_entropy(
        &[(x.clone(), y.clone())],
        &params,
        ReceiverAlgo::Cpan1p,
        512,
        &stream,
    )
    .unwrap();
    // The evaluator trims one edge symbol at each end; score the same slice.
    let mut oracle_bits = 0.0;
    for ch in 0..2 {
        oracle_bits += grid_filter_entropy(
            &x.rows()[ch][1..m_sym - 1],
            &y.rows()[ch][1..m_sym - 1],
            v0,
            a1,
            q,
            sigma2,
            2048,
        );
    }
    let gap = (pf.bits_per_vector - oracle_bits).abs();
    assert!(
        gap < 0.02,
        "particle {} vs grid oracle {} ({} bits apart)",
        pf.bits_per_vector,
        oracle_bits,
        gap
    );

    // (b) Kalman surrogate: y = x + j theta x + z with theta AR(1).
    let m_k = 300usize;
    let mut gen = RandomStream::new(608, "kalman-data");
    let mut win = ArWindow::stationary(&phi_spec, &mut gen);
    let mut xk = Vec::with_capacity(m_k);
    let mut yk = Vec::with_capacity(m_k);
    for _ in 0..m_k {
        let theta = win.step_real(&phi_spec, &mut gen);
        let xv = gen.cscg(energy);
        xk.push(xv);
        yk.push(xv + Complex64::i() * xv * theta + gen.cscg(sigma2));
    }
    let kf = kalman_loglik(&xk, &yk, v0, a1, q, sigma2);
    let mut reps = Vec::with_capacity(100);
    for rep in 0..100 {
        let mut s = RandomStream::new(609, &format!("kalman-pf/{rep}"));
        let out = smc_log_predictive(
            512,
            m_k,
            |st| {
                let mut w = ArWindow::stationary(&phi_spec, st);
                let t = w.step_real(&phi_spec, st);
                (t, w)
            },
            |p, _m, st| p.0 = p.1.step_real(&phi_spec, st),
            |p, m| {
                let mean = xk[m] + Complex64::i() * xk[m] * p.0;
                -(yk[m] - mean).norm_sqr() / sigma2 - (PI * sigma2).ln()
            },
            0.5,
            &mut s,
        )
        .unwrap();
        reps.push(out.log2_predictive.iter().sum::<f64>() * std::f64::consts::LN_2);
    }
    let mean = reps.iter().sum::<f64>() / reps.len() as f64;
    let var = reps.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps.len() - 1) as f64;
    let se = (var / reps.len() as f64).sqrt();
    let dev = (mean - kf).abs();
    assert!(
        dev <= 3.0 * se,
        "PF mean log-lik {mean:.3} vs Kalman {kf:.3} ({dev:.3} vs 3 SE = {:.3})",
        3.0 * se
    );
    pass(
        "criterion 6 (filter oracles)",
        format!(
            "grid gap {gap:.4} bit < 0.02; Kalman deviation {dev:.3} nats within 3 SE = {:.3}",
            3.0 * se
        ),
    );
}

/// Exact log-likelihood of the linear-Gaussian surrogate via a scalar-state
/// Kalman filter with the complex observation split into two real ones.
fn kalman_loglik(xs: &[Complex64], ys: &[Complex64], v0: f64, a1: f64, q: f64, sigma2: f64) -> f64 {
    let mut mean = 0.0f64;
    let mut var = v0;
    let r = sigma2 / 2.0;
    let mut ll = 0.0;
    for (m, (&x, &y)) in xs.iter().zip(ys.iter()).enumerate() {
        if m > 0 {
            mean *= a1;
            var = a1 * a1 * var + q;
        }
        let obs = y - x;
        let h = Complex64::i() * x; // obs = h * theta + z
        let hv = [h.re, h.im];
        let e = [obs.re - hv[0] * mean, obs.im - hv[1] * mean];
        // S = h h^T var + r I.
        let s00 = hv[0] * hv[0] * var + r;
        let s01 = hv[0] * hv[1] * var;
        let s11 = hv[1] * hv[1] * var + r;
        let det = s00 * s11 - s01 * s01;
        let inv = [s11 / det, -s01 / det, s00 / det];
        let quad = e[0] * e[0] * inv[0] + 2.0 * e[0] * e[1] * inv[1] + e[1] * e[1] * inv[2];
        ll += -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * quad;
        // Gain K = var h^T S^{-1}.
        let k0 = var * (hv[0] * inv[0] + hv[1] * inv[1]);
        let k1 = var * (hv[0] * inv[1] + hv[1] * inv[2]);
        mean += k0 * e[0] + k1 * e[1];
        var -= (k0 * hv[0] + k1 * hv[1]) * var;
    }
    ll
}

// ---------------------------------------------------------------------------
// Criterion 7: estimator recovery. On synthetic CRAN data with known
// parameters: sigma_Z^2 within 2%, (sigma_phi^2, sigma_J^2) within 25%, and
// the fitted h_q within 0.02 bit of the generating model's h_q.
// ---------------------------------------------------------------------------
#[test]
fn criterion_7_estimator_recovery() {
    let truth = CranParams::new(
        2,
        2,
        0.03,
        1.3,
        0.8,
        vec![2.0e-4, 1.9e-4, 1.8e-4],
        vec![2.0e-4, 1.9e-4, 1.8e-4],
        1.0e-6,
        0.0,
    )
    .unwrap();
    let energy = 1e-4;
    let make_pairs = |label: &str, n_seq: usize, m: usize| -> Vec<(SymbolGrid, SymbolGrid)> {
        let root = RandomStream::new(707, label);
        (0..n_seq)
            .map(|i| {
                let mut s = root.fork(&format!("seq{i}"));
                let x = SymbolGrid::random_cscg(4, m, energy, &mut s.fork("x"));
                let (y, _) = sample_channel(&x, &truth, &mut s.fork("ch")).unwrap();
                (x, y)
            })
            .collect()
    };
    let train_pairs = make_pairs("train", 8, 1024);
    let test_pairs = make_pairs("test", 8, 1024);

    // sigma_Z^2 within 2%.
    let sigma_est = estimate_sigma_z(&train_pairs, 2).unwrap();
    let sigma_rel = (sigma_est.sigma_z2 - truth.sigma_z2).abs() / truth.sigma_z2;
    assert!(sigma_rel < 0.02, "sigma_Z^2 {} off by {sigma_rel:.3}", sigma_est.sigma_z2);

    let train = TrainingSet {
        pairs: train_pairs,
        s_modes: 2,
        memory: 2,
        base_r: truth.base_r.clone(),
        base_s: truth.base_s.clone(),
        energy,
    };
    let cfg = FitConfig::new(ReceiverAlgo::CranSdm, 256);
    let stream = RandomStream::new(708, "recovery-fit");
    let report = fit_scales(&train, &cfg, &stream).unwrap();
    let phi_rel = (report.params.sigma_phi2 - truth.sigma_phi2).abs() / truth.sigma_phi2;
    let j_rel = (report.params.sigma_j2 - truth.sigma_j2).abs() / truth.sigma_j2;
    assert!(phi_rel < 0.25, "sigma_phi2 {} off by {phi_rel:.3}", report.params.sigma_phi2);
    assert!(j_rel < 0.25, "sigma_j2 {} off by {j_rel:.3}", report.params.sigma_j2);

    // h_q of fitted vs generating parameters on fresh data, common randoms.
    let eval_stream = RandomStream::new(709, "recovery-eval");
    let h_fit = conditional_entropy(&test_pairs, &report.params, ReceiverAlgo::CranSdm, 512, &eval_stream)
        .unwrap()
        .bits_per_vector;
    let mut gen_eval = truth.clone();
    gen_eval.rx_mean = report.params.rx_mean.clone();
    gen_eval.sigma_z2 = report.params.sigma_z2;
    let h_gen = conditional_entropy(&test_pairs, &gen_eval, ReceiverAlgo::CranSdm, 512, &eval_stream)
        .unwrap()
        .bits_per_vector;
    let h_gap = h_fit - h_gen;
    assert!(
        h_gap.abs() < 0.02,
        "fitted h {h_fit:.4} vs generating h {h_gen:.4}"
    );
    pass(
        "criterion 7 (estimator recovery)",
        format!(
            "sigma_Z {:.1}%, sigma_phi {:.0}%, sigma_J {:.0}%, h gap {:.4} bit",
            sigma_rel * 100.0,
            phi_rel * 100.0,
            j_rel * 100.0,
            h_gap
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: desk-scale rate ordering. The 200-km, 3-channel, S = 2 sweep
// reproduces cran_sdm >= cpan_2p >= cpan_1p >= memoryless at every power
// within combined MC stderr, each curve unimodal in power.
// ---------------------------------------------------------------------------
#[test]
fn criterion_8_desk_scale_ordering() {
    let mut cfg = ExperimentConfig::desk_scale();
    cfg.seed = 808;
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&cfg, dir.path()).unwrap();

    let row = |algo: ReceiverAlgo, p: f64| -> &RateRow {
        out.rates
            .iter()
            .find(|r| r.algo == algo.label() && (r.power_dbm - p).abs() < 1e-9)
            .unwrap()
    };
    let order = [
        ReceiverAlgo::CranSdm,
        ReceiverAlgo::Cpan2p,
        ReceiverAlgo::Cpan1p,
        ReceiverAlgo::Memoryless1p,
    ];
    for &p in &cfg.powers_dbm {
        for pair in order.windows(2) {
            let hi = row(pair[0], p);
            let lo = row(pair[1], p);
            let tol = (hi.mc_stderr.powi(2) + lo.mc_stderr.powi(2)).sqrt();
            assert!(
                hi.rate_bits >= lo.rate_bits - tol,
                "at {p} dBm: {} = {:.4} < {} = {:.4} (tol {tol:.4})",
                hi.algo,
                hi.rate_bits,
                lo.algo,
                lo.rate_bits
            );
        }
        // Mismatched rates stay below the capacity bound.
        let cap = capacity_bound(&cfg, p);
        for algo in &order {
            let r = row(*algo, p);
            assert!(
                r.rate_bits <= cap + 2.0 * r.mc_stderr,
                "at {p} dBm: {} = {:.4} exceeds log2(1+SNR) = {cap:.4}",
                r.algo,
                r.rate_bits
            );
        }
    }
    // Unimodality: non-decreasing up to the peak, non-increasing after.
    for algo in &order {
        let rates: Vec<(f64, f64)> = cfg
            .powers_dbm
            .iter()
            .map(|&p| {
                let r = row(*algo, p);
                (r.rate_bits, r.mc_stderr)
            })
            .collect();
        let peak = rates
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap())
            .unwrap()
            .0;
        for i in 1..rates.len() {
            let tol = 2.0 * (rates[i].1.powi(2) + rates[i - 1].1.powi(2)).sqrt();
            if i <= peak {
                assert!(
                    rates[i].0 >= rates[i - 1].0 - tol,
                    "{}: dip before the peak at index {i}: {rates:?}",
                    algo.label()
                );
            } else {
                assert!(
                    rates[i].0 <= rates[i - 1].0 + tol,
                    "{}: rise after the peak at index {i}: {rates:?}",
                    algo.label()
                );
            }
        }
    }
    let peak_rate = |algo: ReceiverAlgo| -> f64 {
        cfg.powers_dbm
            .iter()
            .map(|&p| row(algo, p).rate_bits)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    pass(
        "criterion 8 (desk-scale ordering)",
        format!(
            "ordering holds at all {} powers; peaks: cran {:.3}, 2p {:.3}, 1p {:.3}, mml {:.3}",
            cfg.powers_dbm.len(),
            peak_rate(ReceiverAlgo::CranSdm),
            peak_rate(ReceiverAlgo::Cpan2p),
            peak_rate(ReceiverAlgo::Cpan1p),
            peak_rate(ReceiverAlgo::Memoryless1p),
        ),
    );
}

// ---------------------------------------------------------------------------
// Companion check from the estimation contract: on the full Table-1 system
// at -8 dBm the estimated mean phase matches the walk-off closed form within
// 20% (the prediction is itself an approximation). One training sequence is
// enough for the angle; the comparison wraps modulo 2 pi.
// ---------------------------------------------------------------------------
#[test]
fn table1_mean_phase_matches_walkoff_prediction() {
    let cfg = ExperimentConfig::table1();
    let pairs = sdmrate::experiment::simulate_sequence(&cfg, -8.0, "train", 0).unwrap();
    let est = estimate_mean_phase(&pairs[0..1]).unwrap();
    let kernels = cfg.base_kernels(-8.0, 0).unwrap();
    let predicted = kernels.mean_diag;
    for (i, &m) in est.per_channel.iter().enumerate() {
        // Angles live on the circle; compare wrapped differences.
        let wrapped = {
            let mut d = m - predicted;
            while d > PI {
                d -= 2.0 * PI;
            }
            while d < -PI {
                d += 2.0 * PI;
            }
            d
        };
        assert!(
            wrapped.abs() < 0.2 * predicted.abs(),
            "channel {i}: estimate {m:.3} vs prediction {predicted:.3} (wrapped gap {wrapped:.3})"
        );
    }
    pass(
        "table-1 mean phase",
        format!(
            "per-channel estimates within 20% of the walk-off prediction {predicted:.3} rad"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 9 (optional, long-running): full-scale reproduction of the
// single-carrier and 4SC peaks. Ignored by default; several days of compute.
// ---------------------------------------------------------------------------
#[test]
#[ignore = "full-scale reproduction: days of compute; run explicitly"]
fn criterion_9_full_scale_reproduction() {
    let dir = std::env::var("SDMRATE_FULL_OUT").unwrap_or_else(|_| "out/full".into());
    let cfg = ExperimentConfig::table1();
    let out = run_pipeline(&cfg, std::path::Path::new(&dir)).unwrap();
    let peak = |rows: &[RateRow], algo: &str| -> (f64, f64) {
        rows.iter()
            .filter(|r| r.algo == algo)
            .map(|r| (r.rate_bits, r.power_dbm))
            .fold((f64::NEG_INFINITY, 0.0), |acc, v| if v.0 > acc.0 { v } else { acc })
    };
    let (mml_peak, mml_at) = peak(&out.rates, "memoryless_1p");
    let (cran_peak, cran_at) = peak(&out.rates, "cran_sdm");
    assert!((mml_peak - 7.71).abs() < 0.1, "memoryless peak {mml_peak} at {mml_at}");
    assert_eq!(mml_at, -10.0, "memoryless peak at {mml_at} dBm");
    assert!((cran_peak - 8.24).abs() < 0.1, "SDM-CRAN peak {cran_peak} at {cran_at}");
    assert_eq!(cran_at, -8.0, "SDM-CRAN peak at {cran_at} dBm");
    assert!((cran_peak - mml_peak - 0.5).abs() < 0.1, "joint-processing gain");

    let cfg4 = ExperimentConfig::table1_4sc();
    let out4 = run_pipeline(&cfg4, std::path::Path::new(&format!("{dir}/4sc"))).unwrap();
    let (cran4_peak, cran4_at) = peak(&out4.rates, "cran_sdm");
    assert!((cran4_peak - 8.31).abs() < 0.1, "4SC SDM-CRAN peak {cran4_peak} at {cran4_at}");
    // Power gain at rate 7.79: memoryless peak power vs the 4SC SDM-CRAN
    // curve crossing the same rate on the low-power side.
    let (mml4_peak, mml4_at) = peak(&out4.rates, "memoryless_1p");
    let target = 7.79;
    let mut crossing = f64::NAN;
    let mut rows4: Vec<&RateRow> = out4
        .rates
        .iter()
        .filter(|r| r.algo == "cran_sdm")
        .collect();
    rows4.sort_by(|a, b| a.power_dbm.partial_cmp(&b.power_dbm).unwrap());
    for w in rows4.windows(2) {
        if (w[0].rate_bits - target) * (w[1].rate_bits - target) <= 0.0 {
            let t = (target - w[0].rate_bits) / (w[1].rate_bits - w[0].rate_bits);
            crossing = w[0].power_dbm + t * (w[1].power_dbm - w[0].power_dbm);
            break;
        }
    }
    let power_gain = mml4_at - crossing;
    assert!(
        (power_gain - 1.4).abs() < 0.3,
        "4SC power gain {power_gain:.2} dB at rate {target} (memoryless peak {mml4_peak} at {mml4_at})"
    );
    pass(
        "criterion 9 (full-scale reproduction)",
        format!(
            "peaks: memoryless {mml_peak:.2}@{mml_at}, SDM-CRAN {cran_peak:.2}@{cran_at}, 4SC {cran4_peak:.2}; power gain {power_gain:.2} dB"
        ),
    );
}
