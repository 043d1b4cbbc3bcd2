//! Multifidelity importance sampling with a Gaussian-mixture bias
//! distribution trained on surrogate-predicted failures.

mod estimate;
mod gmm;

pub use estimate::{
    classify_failures, draw_biased, failure_indices, fit_bias, mfis_estimate, run_mfis, BiasFit, MfisConfig,
    MfisEstimate, MfisOutcome,
};
pub use gmm::{
    fit_gmm, fit_gmm_scaled, gmm_density, gmm_sample, BiasDistribution, CovarianceType, GmmFit, GmmSettings,
    COVARIANCE_FLOOR, EM_MAX_ITER, EM_RESTARTS, EM_TOLERANCE,
};
