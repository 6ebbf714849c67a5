//! Regular-perturbation coefficient calculus: the A-coefficient quadrature,
//! the strong-coupling X table, exact and large-dispersion covariance
//! functions of the nonlinear-interference matrix, and the second-order
//! structure of its entries.

mod coefficients;
mod covariance;
mod pulse;

pub use coefficients::{
    build_x_table, compute_a, read_coefficient_cache, write_coefficient_cache, NliCoefficients,
    QuadratureSettings,
};
pub use covariance::{
    covariance_approx, covariance_approx_carriers, covariance_exact, interferer_carriers,
    jm_covariance_structure, ChannelEnergies, CovarianceMode, CovarianceModel, InterfererCarrier,
    JmCovariance,
};
pub use pulse::DispersedPulse;
