//! Fractional online stochastic bipartite matching with unbiased estimators:
//! instances, the offline optimum oracle, the estimator family, per-vertex
//! ratio evaluation, and numerical certification of the ratio constants.

pub mod analysis;
pub mod estimators;
pub mod evaluation;
pub mod instance;
pub mod oracle;
pub mod scalar;
pub mod seed;

pub use num_rational::BigRational;
