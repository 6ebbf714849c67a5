//! Parameter estimation from training data: the additive-noise variance by
//! noncentral-chi-squared maximum likelihood, the mean phase per channel,
//! and the (sigma_phi^2, sigma_J^2, whitening-tap) scales by minimizing the
//! mismatched conditional entropy.

use crate::cran::CranParams;
use crate::error::{Error, Result};
use crate::pf::{conditional_entropy, whiten_grid, ReceiverAlgo};
use crate::rng::RandomStream;
use crate::wdm::SymbolGrid;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Training data: (x, y) sequence pairs of one carrier plus the model
/// geometry the fit should use.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub pairs: Vec<(SymbolGrid, SymbolGrid)>,
    pub s_modes: usize,
    pub memory: usize,
    /// Base kernels r[l], s[l] on lags 0..=memory.
    pub base_r: Vec<f64>,
    pub base_s: Vec<f64>,
    /// Per-symbol energy E of the inputs.
    pub energy: f64,
}

impl TrainingSet {
    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Argument("training set is empty".into()));
        }
        let rows = 2 * self.s_modes;
        let m = self.pairs[0].0.len();
        for (x, y) in &self.pairs {
            if x.channels() != rows || y.channels() != rows {
                return Err(Error::Argument("sequence row count mismatch".into()));
            }
            if x.len() != m || y.len() != m {
                return Err(Error::Argument(
                    "all training sequences must share the symbol count".into(),
                ));
            }
        }
        if self.base_r.len() != self.memory + 1 || self.base_s.len() != self.memory + 1 {
            return Err(Error::Argument("base kernels must cover lags 0..=memory".into()));
        }
        Ok(())
    }

    /// SHA-256 over the raw symbol bytes, for fit-report provenance.
    pub fn data_hash(&self) -> u64 {
        let mut hasher = Sha256::new();
        for (x, y) in &self.pairs {
            for grid in [x, y] {
                for row in grid.rows() {
                    for v in row {
                        hasher.update(v.re.to_le_bytes());
                        hasher.update(v.im.to_le_bytes());
                    }
                }
            }
        }
        let d = hasher.finalize();
        u64::from_le_bytes(d[..8].try_into().unwrap())
    }
}

/// ln I_nu(x) for integer order, stable across the full argument range:
/// power series below the crossover, uniform asymptotic expansion above.
pub fn log_bessel_i(nu: usize, x: f64) -> f64 {
    log_bessel_i_scaled(nu, x) + x
}

/// ln I_nu(x) - x, the exponentially-scaled form; avoids the cancellation
/// between the e^x growth and the -(...)/sigma^2 term of the ML objective.
pub fn log_bessel_i_scaled(nu: usize, x: f64) -> f64 {
    assert!(nu <= 9, "order {nu} outside the supported range");
    assert!(x >= 0.0);
    if x == 0.0 {
        return if nu == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x <= 60.0 {
        // I_nu(x) = sum_k (x/2)^{nu+2k} / (k! (nu+k)!).
        let half = x / 2.0;
        let mut ln_t0 = nu as f64 * half.ln();
        for k in 2..=nu {
            ln_t0 -= (k as f64).ln();
        }
        let q = half * half;
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        for k in 1..200 {
            term *= q / (k as f64 * (k + nu) as f64);
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
        }
        ln_t0 + sum.ln() - x
    } else {
        // I_nu(x) ~ e^x / sqrt(2 pi x) [1 - (mu-1)/8x + ...], mu = 4 nu^2.
        let mu = 4.0 * (nu * nu) as f64;
        let inv = 1.0 / (8.0 * x);
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        for j in 1..=5 {
            let f = mu - (2.0 * j as f64 - 1.0).powi(2);
            term *= -f * inv / j as f64;
            sum += term;
        }
        -0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln()
    }
}

/// Result of the noise-variance ML fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaZEstimate {
    pub sigma_z2: f64,
    /// The maximizer ran into the lower search bound (degenerate data).
    pub at_lower_bound: bool,
}

fn norm_triples(pairs: &[(SymbolGrid, SymbolGrid)]) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::new();
    for (x, y) in pairs {
        for m in 0..x.len() {
            let nx2: f64 = x.rows().iter().map(|r| r[m].norm_sqr()).sum();
            let ny2: f64 = y.rows().iter().map(|r| r[m].norm_sqr()).sum();
            if nx2 <= 0.0 {
                return Err(Error::Estimation(
                    "zero-norm input symbol in the training set".into(),
                ));
            }
            out.push((ny2, nx2, (ny2 * nx2).sqrt()));
        }
    }
    Ok(out)
}

/// ML estimate of the additive-noise variance from the noncentral
/// chi-squared law of ||y||^2 given ||x||: maximizes
/// sum_m [ -(||y||^2 + ||x||^2)/s - ln s + ln I_{2S-1}(2 ||y|| ||x|| / s) ]
/// by golden-section search in ln s.
pub fn estimate_sigma_z(
    pairs: &[(SymbolGrid, SymbolGrid)],
    s_modes: usize,
) -> Result<SigmaZEstimate> {
    let triples = norm_triples(pairs)?;
    let nu = 2 * s_modes - 1;
    let n = triples.len() as f64;
    // Moment initializer: E||y||^2 = ||x||^2 + 2S s.
    let mut diff = 0.0;
    for &(ny2, nx2, _) in &triples {
        diff += ny2 - nx2;
    }
    let init = (diff / (2.0 * s_modes as f64 * n)).max(1e-30);
    let span = 50.0f64.ln();
    let (lo, hi) = (init.ln() - span, init.ln() + span);

    // Cancellation-safe form: -(||y|| - ||x||)^2 / s + [ln I_nu(z) - z].
    let objective = |u: f64| -> f64 {
        let s = u.exp();
        let mut acc = 0.0;
        for &(ny2, nx2, nyx) in &triples {
            let gap = ny2.sqrt() - nx2.sqrt();
            acc += -gap * gap / s - u + log_bessel_i_scaled(nu, 2.0 * nyx / s);
        }
        acc
    };

    let (u_best, checked) = golden_max(objective, lo, hi, 1e-6);
    if !checked {
        return Err(Error::Estimation(
            "noise-variance likelihood bracket failed (non-unimodal or non-finite)".into(),
        ));
    }
    Ok(SigmaZEstimate {
        sigma_z2: u_best.exp(),
        at_lower_bound: u_best < lo + 0.01 * (hi - lo),
    })
}

/// Golden-section maximization on [lo, hi]; returns (argmax, finite_flag).
fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, bool) {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    if !fc.is_finite() && !fd.is_finite() {
        return (lo, false);
    }
    for _ in 0..200 {
        if (b - a).abs() < tol {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let u = 0.5 * (a + b);
    (u, f(u).is_finite())
}

/// Mean-phase estimates per channel via the input-output correlation angle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanPhaseEstimate {
    pub per_channel: Vec<f64>,
    /// False where the correlation magnitude is too small to trust.
    pub reliable: Vec<bool>,
}

pub fn estimate_mean_phase(pairs: &[(SymbolGrid, SymbolGrid)]) -> Result<MeanPhaseEstimate> {
    if pairs.is_empty() {
        return Err(Error::Argument("no training pairs".into()));
    }
    let rows = pairs[0].0.channels();
    let mut corr = vec![Complex64::ZERO; rows];
    let mut ex = vec![0.0f64; rows];
    let mut ey = vec![0.0f64; rows];
    for (x, y) in pairs {
        for i in 0..rows {
            for (xv, yv) in x.rows()[i].iter().zip(y.rows()[i].iter()) {
                corr[i] += yv * xv.conj();
                ex[i] += xv.norm_sqr();
                ey[i] += yv.norm_sqr();
            }
        }
    }
    let mut per_channel = Vec::with_capacity(rows);
    let mut reliable = Vec::with_capacity(rows);
    for i in 0..rows {
        per_channel.push(corr[i].arg());
        reliable.push(corr[i].norm() >= 0.1 * (ex[i] * ey[i]).sqrt());
    }
    Ok(MeanPhaseEstimate {
        per_channel,
        reliable,
    })
}

/// Knobs of the entropy-minimizing scale fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub algo: ReceiverAlgo,
    /// Particles used for the search objective.
    pub n_particles: usize,
    /// Coarse multiplicative grid for the variance scales.
    pub scale_coarse: Vec<f64>,
    /// Fine multiplicative refinement around the coarse pick.
    pub scale_fine: Vec<f64>,
    /// Coarse whitening-tap grid.
    pub tap_coarse: Vec<f64>,
    /// Additive fine refinement around the coarse tap.
    pub tap_fine: Vec<f64>,
    /// A tap candidate must beat the incumbent by this many bits; the sweep
    /// walks outward from the identity filter, so flat objectives keep a = 0.
    pub tap_tie_eps: f64,
}

impl FitConfig {
    pub fn new(algo: ReceiverAlgo, n_particles: usize) -> Self {
        FitConfig {
            algo,
            n_particles,
            scale_coarse: vec![0.0, 0.25, 1.0, 4.0, 16.0],
            scale_fine: vec![0.6, 0.8, 1.0, 1.25, 1.667],
            tap_coarse: vec![-0.3, -0.15, 0.0, 0.15, 0.3],
            tap_fine: vec![-0.08, -0.04, 0.0, 0.04, 0.08],
            tap_tie_eps: 0.01,
        }
    }
}

/// One sampled point of the objective surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub sigma_phi2: f64,
    pub sigma_j2: f64,
    pub whitening_tap: f64,
    pub h_cond_bits: f64,
}

/// Outcome of [`fit_scales`]: the fitted parameters plus the evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub algo: ReceiverAlgo,
    pub params: CranParams,
    pub h_cond_bits: f64,
    pub surface: Vec<SurfaceSample>,
    pub boundary_warning: bool,
    pub sigma_z_at_lower_bound: bool,
    pub mean_phase: MeanPhaseEstimate,
    pub data_hash: u64,
    pub seed: u64,
    pub stream_id: String,
}

struct ScaleFitter<'a> {
    train: &'a TrainingSet,
    cfg: &'a FitConfig,
    rx_mean: Vec<f64>,
    stream: &'a RandomStream,
    /// (tap -> sigma_z^2, lower-bound flag), lazily computed.
    sigma_by_tap: Vec<(f64, f64, bool)>,
    surface: Vec<SurfaceSample>,
    mean_removed: Vec<(SymbolGrid, SymbolGrid)>,
}

impl<'a> ScaleFitter<'a> {
    fn sigma_for_tap(&mut self, tap: f64) -> Result<(f64, bool)> {
        if let Some(hit) = self
            .sigma_by_tap
            .iter()
            .find(|(t, _, _)| (t - tap).abs() < 1e-12)
        {
            return Ok((hit.1, hit.2));
        }
        // The norm statistic sees the whitened pairs when the receiver
        // whitens; the memoryless baseline estimates on raw pairs.
        let est = if self.cfg.algo.uses_whitening() {
            let whitened: Vec<(SymbolGrid, SymbolGrid)> = self
                .mean_removed
                .iter()
                .map(|(x, y)| (whiten_grid(x, tap), whiten_grid(y, tap)))
                .collect();
            estimate_sigma_z(&whitened, self.train.s_modes)?
        } else {
            estimate_sigma_z(&self.mean_removed, self.train.s_modes)?
        };
        self.sigma_by_tap.push((tap, est.sigma_z2, est.at_lower_bound));
        Ok((est.sigma_z2, est.at_lower_bound))
    }

    fn params_for(&mut self, phi: f64, j: f64, tap: f64) -> Result<CranParams> {
        let (sigma_z2, _) = self.sigma_for_tap(tap)?;
        Ok(CranParams {
            s_modes: self.train.s_modes,
            memory: self.train.memory,
            mean_diag: mean_of(&self.rx_mean),
            rx_mean: self.rx_mean.clone(),
            sigma_phi2: phi,
            sigma_j2: j,
            base_r: self.train.base_r.clone(),
            base_s: self.train.base_s.clone(),
            sigma_z2,
            whitening_tap: tap,
        })
    }

    fn objective(&mut self, phi: f64, j: f64, tap: f64) -> Result<f64> {
        if let Some(hit) = self.surface.iter().find(|s| {
            s.sigma_phi2 == phi && s.sigma_j2 == j && s.whitening_tap == tap
        }) {
            return Ok(hit.h_cond_bits);
        }
        let mut params = self.params_for(phi, j, tap)?;
        // The objective sees the raw pairs; preprocessing (mean removal and
        // whitening) happens inside the evaluator.
        params.rx_mean = self.rx_mean.clone();
        let est = conditional_entropy(
            &self.train.pairs,
            &params,
            self.cfg.algo,
            self.cfg.n_particles,
            self.stream,
        )?;
        self.surface.push(SurfaceSample {
            sigma_phi2: phi,
            sigma_j2: j,
            whitening_tap: tap,
            h_cond_bits: est.bits_per_vector,
        });
        Ok(est.bits_per_vector)
    }
}

fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Fits (sigma_phi^2, sigma_J^2, whitening tap) by two-level coordinate
/// search minimizing the mismatched conditional entropy, with common random
/// numbers across grid points. The noise variance is re-estimated per tap
/// candidate on the correspondingly whitened data.
pub fn fit_scales(
    train: &TrainingSet,
    cfg: &FitConfig,
    stream: &RandomStream,
) -> Result<FitReport> {
    train.validate()?;
    let mean_phase = estimate_mean_phase(&train.pairs)?;
    let rx_mean = mean_phase.per_channel.clone();
    let mean_removed: Vec<(SymbolGrid, SymbolGrid)> = train
        .pairs
        .iter()
        .map(|(x, y)| {
            let mut y = y.clone();
            for (i, row) in y.rows_mut().iter_mut().enumerate() {
                let rot = Complex64::from_polar(1.0, -rx_mean[i]);
                for v in row.iter_mut() {
                    *v *= rot;
                }
            }
            (x.clone(), y)
        })
        .collect();

    let mut fitter = ScaleFitter {
        train,
        cfg,
        rx_mean,
        stream,
        sigma_by_tap: Vec::new(),
        surface: Vec::new(),
        mean_removed,
    };

    let fits_offdiag = matches!(cfg.algo, ReceiverAlgo::Cpan2p | ReceiverAlgo::CranSdm);
    let fits_tap = cfg.algo.uses_whitening();
    let mut phi: f64 = 1.0;
    let mut j: f64 = if fits_offdiag { 1.0 } else { 0.0 };
    let mut tap: f64 = 0.0;
    let mut boundary = false;

    // Coarse pass, one axis at a time.
    let sweep_scale = |fitter: &mut ScaleFitter,
                           grid: &[f64],
                           phi: f64,
                           j: f64,
                           tap: f64,
                           axis_is_phi: bool|
     -> Result<(f64, bool)> {
        let mut best = (f64::INFINITY, grid[0]);
        for &g in grid {
            let (p, q) = if axis_is_phi { (g, j) } else { (phi, g) };
            let h = fitter.objective(p, q, tap)?;
            if h < best.0 {
                best = (h, g);
            }
        }
        let at_edge = best.1 == *grid.last().unwrap();
        Ok((best.1, at_edge))
    };

    for level in 0..2 {
        let phi_grid: Vec<f64> = if level == 0 {
            cfg.scale_coarse.clone()
        } else {
            cfg.scale_fine.iter().map(|f| f * phi.max(1e-6)).collect()
        };
        let (p, edge) = sweep_scale(&mut fitter, &phi_grid, phi, j, tap, true)?;
        phi = p;
        boundary |= edge && level == 0;

        if fits_offdiag {
            let j_grid: Vec<f64> = if level == 0 {
                cfg.scale_coarse.clone()
            } else {
                cfg.scale_fine.iter().map(|f| f * j.max(1e-6)).collect()
            };
            let (q, edge) = sweep_scale(&mut fitter, &j_grid, phi, j, tap, false)?;
            j = q;
            boundary |= edge && level == 0;
        }

        if fits_tap {
            let mut tap_grid: Vec<f64> = if level == 0 {
                cfg.tap_coarse.clone()
            } else {
                cfg.tap_fine.iter().map(|d| tap + d).collect()
            };
            // Walk outward from the incumbent; a move needs a real win.
            let anchor = if level == 0 { 0.0 } else { tap };
            tap_grid.sort_by(|a, b| {
                (a - anchor).abs().partial_cmp(&(b - anchor).abs()).unwrap()
            });
            let (lo, hi) = tap_grid
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &t| {
                    (l.min(t), h.max(t))
                });
            let mut incumbent = (fitter.objective(phi, j, tap)?, tap);
            for &t in &tap_grid {
                if 2.0 * t * t >= 1.0 || t == incumbent.1 {
                    continue;
                }
                let h = fitter.objective(phi, j, t)?;
                if h < incumbent.0 - cfg.tap_tie_eps {
                    incumbent = (h, t);
                }
            }
            if level == 0 && (incumbent.1 == lo || incumbent.1 == hi) && incumbent.1 != 0.0 {
                boundary = true;
            }
            tap = incumbent.1;
        }
    }

    let h_final = fitter.objective(phi, j, tap)?;
    let params = fitter.params_for(phi, j, tap)?;
    let (_, sigma_low) = fitter.sigma_for_tap(tap)?;
    Ok(FitReport {
        algo: cfg.algo,
        params,
        h_cond_bits: h_final,
        surface: fitter.surface,
        boundary_warning: boundary,
        sigma_z_at_lower_bound: sigma_low,
        mean_phase,
        data_hash: train.data_hash(),
        seed: stream.seed(),
        stream_id: stream.stream_id().to_string(),
    })
}
