//! Normex-type approximations for the law of sums of iid heavy-tailed random
//! vectors, with the simulation and comparison tooling needed to validate them.
//!
//! The distribution of `S_n = X_1 + … + X_n` is approximated by keeping the
//! largest summand (by norm) exact and replacing the rest by a Gaussian whose
//! moments are those of `X` truncated at the maximum's norm. Two variants are
//! provided: [`engine::sample_d_normex`] simulates the maximum directly, and
//! [`engine::sample_mrv_normex`] replaces it by its multivariate regular
//! variation limit, a Fréchet radius times a limiting direction.

pub mod compare;
pub mod engine;
pub mod error;
pub mod families;
pub mod geoquantile;
pub mod moments;
pub mod rng;
pub mod sample;
pub mod special;
pub mod stats;

pub use compare::{
    line_deviation, orthant_sup_distance, qq_table, rate_experiment, LineDeviation, QQRow, QQTable, RateReport,
    RateSpec,
};
pub use engine::{
    conditional_gaussian, sample_clt, sample_d_normex, sample_method, sample_mrv_normex, sample_sum, Method,
    NormexConfig, SumMetadata, SumSample,
};
pub use error::{Error, Result};
pub use families::{
    frechet_cdf, frechet_quantile, Family, FamilyParams, FamilySpec, NormingConstants, NormingShift, ThetaSampler,
};
pub use geoquantile::{gq_gradient, gq_objective, level_grid, solve_gq, solve_gq_traced, spatial_rank, GeoQuantile, GridLevel, Level, SolverOptions};
pub use moments::{mc_truncated_moments, truncated_moments, unconditional_moments, McMoments, TruncatedMoments};
pub use sample::{NormKind, SampleMatrix};
