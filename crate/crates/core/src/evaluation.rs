//! The OCS guarantee function and per-vertex ratio estimates.
//!
//! An offline vertex `u` whose accumulated fraction is `y_u` contributes
//! `E[min(y_u, 1)]` to a fractional algorithm and at least `E[p(y_u)]` after
//! rounding with an online correlated selection, so ratios are reported per
//! vertex as `E[f(y_u)] / E[y_u]`.

use itertools::Itertools;
use rayon::prelude::*;

use crate::estimators::{Estimator, EstimatorError, EstimatorSpec, FractionalOutcome};
use crate::instance::Instance;
use crate::oracle::{cumulative_masses, draw_type, OracleError, DEFAULT_BUDGET};
use crate::scalar::{CompensatedSum, Scalar};
use crate::seed;

/// The cubic coefficient `(4 - 2√3) / 3` of the OCS exponent.
pub const OCS_C: f64 = 0.178_632_794_954_081_8;

/// Step of the central finite difference used to cross-check `p''`.
pub const FD_STEP: f64 = 1e-4;

/// Allowed disagreement between the closed-form and finite-difference `p''`.
pub const FD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvaluationError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("fractions sum to {0} > 1")]
    MassExceedsOne(f64),
    #[error("p'' = {value} is not negative at y = {y}")]
    ConcavityViolation { y: f64, value: f64 },
    #[error("at y = {y}: closed-form p'' = {closed}, finite difference {fd}")]
    FiniteDifferenceMismatch { y: f64, closed: f64, fd: f64 },
    #[error("every offline vertex has zero mean")]
    ZeroMean,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn exponent(y: f64) -> f64 {
    y + 0.5 * y * y + OCS_C * y * y * y
}

/// `p(y) = 1 - exp(-y - y²/2 - c·y³)`.
pub fn ocs_guarantee(y: f64) -> f64 {
    -(-exponent(y)).exp_m1()
}

pub fn ocs_derivative(y: f64) -> f64 {
    (1.0 + y + 3.0 * OCS_C * y * y) * (-exponent(y)).exp()
}

/// `p''(y) = ((6c-2)y - (1+6c)y² - 6c·y³ - 9c²y⁴)·exp(-g(y))`.
pub fn ocs_second_derivative(y: f64) -> f64 {
    let c = OCS_C;
    let poly = (6.0 * c - 2.0) * y - (1.0 + 6.0 * c) * y * y - 6.0 * c * y.powi(3) - 9.0 * c * c * y.powi(4);
    poly * (-exponent(y)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityReport {
    pub points: usize,
    /// Largest (closest to zero) closed-form `p''` on the grid.
    pub max_second_derivative: f64,
    pub max_fd_disagreement: f64,
}

/// Checks `p'' < 0` on the grid `step, 2·step, …, y_max` and compares the
/// closed form with a central finite difference at every point.
pub fn check_p_concavity(grid_step: f64, y_max: f64) -> Result<ConcavityReport, EvaluationError> {
    if !(grid_step > 0.0) || !(y_max > 0.0) {
        return Err(EvaluationError::InvalidParameter("grid_step and y_max must be positive".into()));
    }
    let steps = (y_max / grid_step).round() as usize;
    let mut report = ConcavityReport {
        points: 0,
        max_second_derivative: f64::NEG_INFINITY,
        max_fd_disagreement: 0.0,
    };
    for k in 1..=steps {
        let y = (k as f64 * grid_step).min(y_max);
        let closed = ocs_second_derivative(y);
        if !(closed < 0.0) {
            return Err(EvaluationError::ConcavityViolation { y, value: closed });
        }
        if y >= FD_STEP {
            let h = FD_STEP;
            let fd = (ocs_guarantee(y + h) - 2.0 * ocs_guarantee(y) + ocs_guarantee(y - h)) / (h * h);
            let gap = (fd - closed).abs();
            if gap > FD_TOLERANCE {
                return Err(EvaluationError::FiniteDifferenceMismatch { y, closed, fd });
            }
            report.max_fd_disagreement = report.max_fd_disagreement.max(gap);
        }
        report.max_second_derivative = report.max_second_derivative.max(closed);
        report.points += 1;
    }
    Ok(report)
}

/// Appends the mass left over by `x` as a dummy offline vertex.
pub fn normalize_with_dummy<S: Scalar>(x: &[S]) -> Result<Vec<S>, EvaluationError> {
    let total = x.iter().fold(S::zero(), |acc, v| acc + v.clone());
    if total.exceeds_one() {
        return Err(EvaluationError::MassExceedsOne(total.to_f64()));
    }
    let dummy = S::one() - total;
    let dummy = if dummy < S::zero() { S::zero() } else { dummy };
    let mut out = x.to_vec();
    out.push(dummy);
    Ok(out)
}

/// Ratio of sums `Σa / Σb` with its jackknife standard error.
pub fn jackknife_ratio(num: &[f64], den: &[f64]) -> (f64, f64) {
    let n = num.len();
    let a: f64 = num.iter().copied().collect::<CompensatedSum>().value();
    let b: f64 = den.iter().copied().collect::<CompensatedSum>().value();
    let ratio = a / b;
    if n < 2 {
        return (ratio, f64::NAN);
    }
    let loo: Vec<f64> = num.iter().zip(den).map(|(x, y)| (a - x) / (b - y)).collect();
    let mean = loo.iter().copied().collect::<CompensatedSum>().value() / n as f64;
    let ss = loo.iter().map(|r| (r - mean) * (r - mean)).collect::<CompensatedSum>().value();
    (ratio, ((n - 1) as f64 / n as f64 * ss).sqrt())
}

/// Statistics of one offline vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexRatio {
    pub u: usize,
    pub weight: f64,
    pub mu: f64,
    pub second_moment: f64,
    pub frac_ratio: f64,
    pub ocs_ratio: f64,
    pub stderr_frac: f64,
    pub stderr_ocs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    /// Vertices with positive mean.
    pub rows: Vec<VertexRatio>,
    /// Vertices never matched; they carry no ratio.
    pub zero_mean: Vec<usize>,
    /// `None` for exact enumeration.
    pub trials: Option<usize>,
    /// `Σ_u w_u E[min(y_u, 1)] / Σ_u w_u E[y_u]`.
    pub overall_frac: f64,
    /// `Σ_u w_u E[p(y_u)] / Σ_u w_u E[y_u]`.
    pub overall_ocs: f64,
}

pub const RATIO_CSV_HEADER: &str = "u,weight,mu,second_moment,frac_ratio,ocs_ratio,stderr_frac,stderr_ocs";

impl RatioReport {
    pub fn min_frac_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.frac_ratio).fold(f64::INFINITY, f64::min)
    }

    pub fn min_ocs_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ocs_ratio).fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RATIO_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.u, r.weight, r.mu, r.second_moment, r.frac_ratio, r.ocs_ratio, r.stderr_frac, r.stderr_ocs
            ));
        }
        out
    }
}

/// Number of realizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trials {
    Exact,
    MonteCarlo(usize),
}

/// Every type vector with its probability.
pub fn type_vectors<S: Scalar>(instance: &Instance) -> Result<Vec<(Vec<usize>, S)>, OracleError> {
    let supports = instance.supports();
    let required = supports.iter().fold(1u64, |acc, s| acc.saturating_mul(s.len() as u64));
    if required > DEFAULT_BUDGET {
        return Err(OracleError::BudgetExceeded { required, budget: DEFAULT_BUDGET });
    }
    Ok(supports
        .into_iter()
        .multi_cartesian_product()
        .map(|types| {
            let prob = types
                .iter()
                .enumerate()
                .fold(S::one(), |acc, (j, &t)| acc * S::from_mass(instance.arrival(j).mass(t)));
            (types, prob)
        })
        .collect())
}

/// The estimator's outcome on every type vector, with its probability.
pub fn exact_outcomes<S: Scalar + 'static>(
    estimator: &Estimator<S>,
) -> Result<Vec<(S, FractionalOutcome<S>)>, EvaluationError> {
    let vectors = type_vectors::<S>(estimator.instance())?;
    vectors
        .into_par_iter()
        .map(|(types, prob)| Ok((prob, estimator.run(&types)?)))
        .collect()
}

/// Exact `(E[y_u], E[y_u²])`.
pub fn second_moment<S: Scalar + 'static>(
    instance: &Instance,
    spec: &EstimatorSpec,
    u: usize,
) -> Result<(S, S), EvaluationError> {
    let estimator = Estimator::<S>::exact(instance, spec)?;
    let outcomes = exact_outcomes(&estimator)?;
    Ok(outcomes.into_iter().fold((S::zero(), S::zero()), |(m1, m2), (p, out)| {
        let y = out.y[u].clone();
        (m1 + p.clone() * y.clone(), m2 + p * y.clone() * y)
    }))
}

/// Per-vertex ratios of `spec` on `instance`, by exact enumeration of the
/// realizations or by `trials` sampled realizations.
pub fn ratio_report(
    instance: &Instance,
    spec: &EstimatorSpec,
    trials: Trials,
    seed: u64,
) -> Result<RatioReport, EvaluationError> {
    let estimator = Estimator::<f64>::new(instance, spec)?;
    let l = instance.n_offline();
    // (probability weight, y per vertex)
    let samples: Vec<(f64, Vec<f64>)> = match trials {
        Trials::Exact => {
            let vectors = type_vectors::<f64>(instance)?;
            vectors
                .into_par_iter()
                .map(|(types, prob)| Ok((prob, estimator.run(&types)?.y)))
                .collect::<Result<_, EvaluationError>>()?
        }
        Trials::MonteCarlo(count) => {
            if count == 0 {
                return Err(EvaluationError::InvalidParameter("trials must be positive".into()));
            }
            let cumulative = cumulative_masses(instance);
            let purpose = seed::tag("ratio_report");
            (0..count as u64)
                .into_par_iter()
                .map(|k| {
                    let mut rng = seed::stream(seed, purpose, k);
                    let types: Vec<usize> = cumulative.iter().map(|c| draw_type(c, &mut rng)).collect();
                    Ok((1.0, estimator.run(&types)?.y))
                })
                .collect::<Result<_, EvaluationError>>()?
        }
    };
    let total_weight: f64 = samples.iter().map(|s| s.0).collect::<CompensatedSum>().value();

    let weights = instance.weights();
    let mut rows = Vec::new();
    let mut zero_mean = Vec::new();
    let (mut num_frac, mut num_ocs, mut den) = (CompensatedSum::default(), CompensatedSum::default(), CompensatedSum::default());
    for u in 0..l {
        let ys: Vec<f64> = samples.iter().map(|(_, y)| y[u]).collect();
        let probs: Vec<f64> = samples.iter().map(|(p, _)| *p).collect();
        let weighted = |f: &dyn Fn(f64) -> f64| -> Vec<f64> { ys.iter().zip(&probs).map(|(&y, &p)| p * f(y)).collect() };
        let m1 = weighted(&|y| y);
        let mu = m1.iter().copied().collect::<CompensatedSum>().value() / total_weight;
        if !(mu > 0.0) {
            zero_mean.push(u);
            continue;
        }
        let m2 = weighted(&|y| y * y).into_iter().collect::<CompensatedSum>().value() / total_weight;
        let fmin = weighted(&|y| y.min(1.0));
        let fp = weighted(&|y| ocs_guarantee(y));
        let (frac_ratio, stderr_frac, ocs_ratio, stderr_ocs) = match trials {
            Trials::Exact => {
                let sum = |v: &[f64]| v.iter().copied().collect::<CompensatedSum>().value();
                (sum(&fmin) / sum(&m1), 0.0, sum(&fp) / sum(&m1), 0.0)
            }
            Trials::MonteCarlo(_) => {
                let (rf, sf) = jackknife_ratio(&fmin, &m1);
                let (ro, so) = jackknife_ratio(&fp, &m1);
                (rf, sf, ro, so)
            }
        };
        let w = weights[u];
        num_frac.add(w * frac_ratio * mu);
        num_ocs.add(w * ocs_ratio * mu);
        den.add(w * mu);
        rows.push(VertexRatio {
            u,
            weight: w,
            mu,
            second_moment: m2,
            frac_ratio,
            ocs_ratio,
            stderr_frac,
            stderr_ocs,
        });
    }
    if rows.is_empty() {
        return Err(EvaluationError::ZeroMean);
    }
    Ok(RatioReport {
        rows,
        zero_mean,
        trials: match trials {
            Trials::Exact => None,
            Trials::MonteCarlo(k) => Some(k),
        },
        overall_frac: num_frac.value() / den.value(),
        overall_ocs: num_ocs.value() / den.value(),
    })
}
