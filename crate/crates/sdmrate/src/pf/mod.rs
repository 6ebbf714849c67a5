//! Sequential Monte-Carlo evaluation of mismatched entropies and achievable
//! rates for the four receiver algorithms.

mod filter;
mod receivers;

pub use filter::{smc_log_predictive, systematic_resample, SmcOutcome};
pub use receivers::{
    achievable_rate, conditional_entropy, gauss_hermite, memoryless_entropy, output_entropy,
    prepare_pair, whiten_grid, EntropyEstimate, RateEstimate, ReceiverAlgo,
};
