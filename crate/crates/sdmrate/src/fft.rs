//! Thin cache around rustfft plans with the unitary normalization used
//! throughout the crate (1/sqrt(N) in both directions).

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<PlanCache> = RefCell::new(PlanCache::new());
}

struct PlanCache {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

impl PlanCache {
    fn new() -> Self {
        PlanCache {
            planner: FftPlanner::new(),
            forward: HashMap::new(),
            inverse: HashMap::new(),
        }
    }
}

fn with_plan(len: usize, inverse: bool, buf: &mut [Complex64]) {
    PLANS.with(|cell| {
        let mut cache = cell.borrow_mut();
        let PlanCache {
            planner,
            forward,
            inverse: inv,
        } = &mut *cache;
        let plan = if inverse {
            inv.entry(len)
                .or_insert_with(|| planner.plan_fft_inverse(len))
                .clone()
        } else {
            forward
                .entry(len)
                .or_insert_with(|| planner.plan_fft_forward(len))
                .clone()
        };
        plan.process(buf);
    });
}

/// In-place forward DFT with 1/sqrt(N) scaling.
pub fn fft_unitary(buf: &mut [Complex64]) {
    with_plan(buf.len(), false, buf);
    let scale = 1.0 / (buf.len() as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// In-place inverse DFT with 1/sqrt(N) scaling.
pub fn ifft_unitary(buf: &mut [Complex64]) {
    with_plan(buf.len(), true, buf);
    let scale = 1.0 / (buf.len() as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// In-place forward DFT without scaling (raw rustfft convention).
pub fn fft_raw(buf: &mut [Complex64]) {
    with_plan(buf.len(), false, buf);
}

/// In-place inverse DFT without scaling: computes sum_k X_k exp(+j 2 pi k n / N).
pub fn fft_raw_inverse(buf: &mut [Complex64]) {
    with_plan(buf.len(), true, buf);
}

/// In-place inverse DFT scaled by 1/N, so `ifft(fft(x)) = x`.
pub fn ifft_scaled(buf: &mut [Complex64]) {
    with_plan(buf.len(), true, buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Frequency of FFT bin `k` for a length-`n` grid at `sample_rate` Hz,
/// in natural FFT ordering (bin 0 is DC, upper half negative).
pub fn bin_freq_hz(k: usize, n: usize, sample_rate: f64) -> f64 {
    let k = k as i64;
    let n = n as i64;
    let signed = if k < (n + 1) / 2 { k } else { k - n };
    signed as f64 * sample_rate / n as f64
}
