//! Generic sampling-importance-resampling core with per-step predictive
//! likelihoods. The hidden-state type is opaque; receivers plug in their
//! propagation and observation models as closures.

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Per-step base-2 log predictive likelihoods plus filter diagnostics.
#[derive(Debug, Clone)]
pub struct SmcOutcome {
    /// log2 p(y_m | y^{m-1}, x^m) for each step.
    pub log2_predictive: Vec<f64>,
    /// Smallest effective sample size seen before resampling.
    pub min_ess: f64,
    pub resample_count: usize,
}

impl SmcOutcome {
    /// Conditional entropy estimate in bits per step.
    pub fn entropy_bits(&self) -> f64 {
        -self.log2_predictive.iter().sum::<f64>() / self.log2_predictive.len() as f64
    }
}

/// Runs an SIR filter for `n_steps` observations.
///
/// `init` draws one particle from the stationary hidden law; `step` advances
/// a particle to symbol `m` (called for m >= 1); `loglik` returns
/// ln q(y_m | x_m, state). Resampling is systematic, triggered when the
/// effective sample size drops below `resample_frac * n_particles`.
pub fn smc_log_predictive<S: Clone>(
    n_particles: usize,
    n_steps: usize,
    mut init: impl FnMut(&mut RandomStream) -> S,
    mut step: impl FnMut(&mut S, usize, &mut RandomStream),
    mut loglik: impl FnMut(&S, usize) -> f64,
    resample_frac: f64,
    stream: &mut RandomStream,
) -> Result<SmcOutcome> {
    assert!(n_particles > 0);
    let mut particles: Vec<S> = (0..n_particles).map(|_| init(stream)).collect();
    let mut log_w = vec![-(n_particles as f64).ln(); n_particles];
    let mut logliks = vec![0.0f64; n_particles];
    let mut out = SmcOutcome {
        log2_predictive: Vec::with_capacity(n_steps),
        min_ess: n_particles as f64,
        resample_count: 0,
    };

    for m in 0..n_steps {
        if m > 0 {
            for p in particles.iter_mut() {
                step(p, m, stream);
            }
        }
        for (l, p) in logliks.iter_mut().zip(particles.iter()) {
            *l = loglik(p, m);
        }
        // Predictive: logsumexp of (log w + loglik); weights stay normalized.
        let max = log_w
            .iter()
            .zip(logliks.iter())
            .map(|(w, l)| w + l)
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::WeightUnderflow { symbol: m });
        }
        let sum: f64 = log_w
            .iter()
            .zip(logliks.iter())
            .map(|(w, l)| (w + l - max).exp())
            .sum();
        let log_pred = max + sum.ln();
        out.log2_predictive.push(log_pred / std::f64::consts::LN_2);

        for (w, l) in log_w.iter_mut().zip(logliks.iter()) {
            *w += l - log_pred;
        }
        let ess = 1.0
            / log_w
                .iter()
                .map(|w| (2.0 * w).exp())
                .sum::<f64>();
        out.min_ess = out.min_ess.min(ess);
        if ess < resample_frac * n_particles as f64 {
            let weights: Vec<f64> = log_w.iter().map(|w| w.exp()).collect();
            let picks = systematic_resample(&weights, stream);
            particles = picks.iter().map(|&i| particles[i].clone()).collect();
            log_w.fill(-(n_particles as f64).ln());
            out.resample_count += 1;
        }
    }
    Ok(out)
}

/// Systematic resampling: one uniform offset on an equidistant grid over the
/// cumulative weights; returns the chosen particle indices.
pub fn systematic_resample(weights: &[f64], stream: &mut RandomStream) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let u0 = stream.uniform(0.0, 1.0);
    let mut picks = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut idx = 0usize;
    for i in 0..n {
        let target = (i as f64 + u0) / n as f64 * total;
        while cum < target && idx + 1 < n {
            idx += 1;
            cum += weights[idx];
        }
        picks.push(idx);
    }
    picks
}
