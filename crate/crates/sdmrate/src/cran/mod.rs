//! The simplified SDM-CRAN mismatched channel: hidden memory-mu Gauss-Markov
//! processes, assembly of the Hermitian J matrix, its unitary exponential,
//! and synthetic sampling of the model.

mod ar;
mod hermitian;
mod model;

pub use ar::{fit_markov, zero_markov, ArWindow, MarkovSpec, ProcessKind};
pub use hermitian::{apply_unitary, hermitian_residual, unitary_exp, HermitianEig};
pub use model::{assemble_j, pair_index, sample_channel, CranParams, HiddenState};
