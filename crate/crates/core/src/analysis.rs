//! Certification of the ratio constants: quadratic lower bounds, the vertex
//! splitting transformation, the worst-case experiment, the hardness
//! instance, and exact checks of the moment lemmas.

use std::collections::HashMap;
use std::fmt;

use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;

use crate::estimators::{rule_independent_fraction, Estimator, EstimatorError, EstimatorKind, EstimatorSpec, PermutationRule};
use crate::evaluation::{exact_outcomes, jackknife_ratio, ocs_guarantee, type_vectors, EvaluationError};
use crate::instance::{hardness_instance, worst_case_eps, Instance, InstanceError, TypeDistribution};
use crate::oracle::{
    exact_enumerate, max_weight_matching, ConditionalEngine, ExactModel, Oracle, OracleError, PolicyMode, RealizedGraph,
    TieBreakPolicy,
};
use crate::scalar::{CompensatedSum, Mass, Scalar};
use crate::seed;

/// Slack below which an inequality counts as violated.
pub const LEMMA_TOLERANCE: f64 = 1e-12;

/// Default sample count per μ of the worst-case experiment.
pub const DEFAULT_EXPERIMENT_SAMPLES: usize = 200_000;

/// Default number of arrivals of the worst-case experiment.
pub const DEFAULT_EXPERIMENT_N: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("quadratic exceeds its target by {gap} at y = {y}")]
    BoundViolated { y: f64, gap: f64 },
    #[error("epsilon = {0} outside (0, P(a1)] or not below 1")]
    EpsilonOutOfRange(f64),
    #[error("arrival {0} has no positive-mass type in the rule")]
    TypeNotInRule(usize),
    #[error("{name} violated by {gap}")]
    LemmaViolated { name: String, gap: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
}

/// The function a quadratic must stay below.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// `min(y, 1)`.
    Min1,
    /// The OCS guarantee `p(y)`.
    Ocs,
}

impl Target {
    pub fn eval(self, y: f64) -> f64 {
        match self {
            Target::Min1 => y.min(1.0),
            Target::Ocs => ocs_guarantee(y),
        }
    }
}

/// Upper bound on the second moment as a function of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gamma {
    /// `μ + μ²/2`.
    Warmup,
    /// `1.05771μ + 0.231μ²`.
    Iid,
}

impl Gamma {
    pub fn eval(self, mu: f64) -> f64 {
        match self {
            Gamma::Warmup => mu + 0.5 * mu * mu,
            Gamma::Iid => 1.05771 * mu + 0.231 * mu * mu,
        }
    }
}

/// `a·y² + b·y + d ≤ f(y)` for `y ≥ 0`, used on means in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticBound {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub target: Target,
    pub gamma: Gamma,
    pub mu_range: (f64, f64),
    /// Which of the four ratio claims the triple belongs to.
    pub case: Case,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Case {
    /// Fractional, warm-up moment bound.
    A,
    /// OCS-rounded, warm-up moment bound.
    B,
    /// Fractional, i.i.d. moment bound.
    C,
    /// OCS-rounded, i.i.d. moment bound.
    D,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::A, Case::B, Case::C, Case::D];

    /// The ratio the case certifies.
    pub fn claimed(self) -> f64 {
        match self {
            Case::A => 0.646,
            Case::B => 0.634,
            Case::C => 0.731,
            Case::D => 0.704,
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Case::A => "a",
            Case::B => "b",
            Case::C => "c",
            Case::D => "d",
        };
        f.write_str(c)
    }
}

impl QuadraticBound {
    pub fn eval(&self, y: f64) -> f64 {
        (self.a * y + self.b) * y + self.d
    }

    /// Largest root of the quadratic; beyond it the quadratic is negative.
    pub fn tail_start(&self) -> f64 {
        if self.a == 0.0 {
            return if self.b > 0.0 { (-self.d / self.b).max(0.0) } else { 0.0 };
        }
        let disc = self.b * self.b - 4.0 * self.a * self.d;
        if disc < 0.0 {
            return 0.0;
        }
        ((-self.b - disc.sqrt()) / (2.0 * self.a)).max(0.0)
    }
}

/// All thirteen quadratic bounds with their mean ranges.
pub fn builtin_bounds() -> Vec<QuadraticBound> {
    let q = |case, target, gamma, a, b, d, lo, hi| QuadraticBound {
        a,
        b,
        d,
        target,
        gamma,
        mu_range: (lo, hi),
        case,
    };
    use Case::*;
    use Gamma::*;
    use Target::*;
    vec![
        q(A, Min1, Warmup, -0.3, 1.0, 0.0, 0.0, 0.35),
        q(A, Min1, Warmup, -0.35368, 1.20735, -0.03040, 0.35, 1.0),
        q(B, Ocs, Warmup, -0.3, 1.0, 0.0, 0.0, 0.4),
        q(B, Ocs, Warmup, -0.3099, 1.1108, -0.0113, 0.4, 1.0),
        q(C, Min1, Iid, -0.25, 1.0, 0.0, 0.0, 0.07),
        q(C, Min1, Iid, -0.2622, 1.0242, -0.0006, 0.07, 0.21),
        q(C, Min1, Iid, -0.2907, 1.0813, -0.0057, 0.21, 0.37),
        q(C, Min1, Iid, -0.3265, 1.1528, -0.0179, 0.37, 0.64),
        q(C, Min1, Iid, -0.3714, 1.2427, -0.0397, 0.64, 0.78),
        q(C, Min1, Iid, -0.4295, 1.3589, -0.0750, 0.78, 0.91),
        q(C, Min1, Iid, -0.4654, 1.4307, -0.0997, 0.91, 1.0),
        q(D, Ocs, Iid, -0.252, 1.0, 0.0, 0.0, 0.4),
        q(D, Ocs, Iid, -0.347711, 1.180665, -0.028471, 0.4, 1.0),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub points: usize,
    pub tail_start: f64,
    /// Maximum of quadratic minus target over the grid.
    pub max_violation: f64,
    pub argmax: f64,
}

/// Checks `a·y² + b·y + d ≤ f(y) + tol` on the grid over `[0, y*]`, where
/// `y*` is the larger root of the quadratic.
pub fn verify_lower_bound(bound: &QuadraticBound, grid_step: f64, tol: f64) -> Result<BoundReport, AnalysisError> {
    if !(grid_step > 0.0) {
        return Err(AnalysisError::InvalidParameter("grid_step must be positive".into()));
    }
    let tail = bound.tail_start();
    let steps = (tail / grid_step).ceil() as usize;
    let mut report = BoundReport {
        points: 0,
        tail_start: tail,
        max_violation: f64::NEG_INFINITY,
        argmax: 0.0,
    };
    for k in 0..=steps {
        let y = (k as f64 * grid_step).min(tail);
        let gap = bound.eval(y) - bound.target.eval(y);
        if gap > report.max_violation {
            report.max_violation = gap;
            report.argmax = y;
        }
        report.points += 1;
    }
    if report.max_violation > tol {
        return Err(AnalysisError::BoundViolated {
            y: report.argmax,
            gap: report.max_violation,
        });
    }
    Ok(report)
}

/// `min over μ in range of (a·γ(μ) + b·μ + d) / μ` on a 1e-4 grid plus the
/// range endpoints; `μ = 0` is skipped.
pub fn ratio_from_bound(bound: &QuadraticBound) -> f64 {
    ratio_from_bound_with_argmin(bound).0
}

pub fn ratio_from_bound_with_argmin(bound: &QuadraticBound) -> (f64, f64) {
    const STEP: f64 = 1e-4;
    let (lo, hi) = bound.mu_range;
    let first = (lo / STEP).ceil() as u64;
    let last = (hi / STEP).floor() as u64;
    let grid = (first..=last).map(|k| k as f64 * STEP);
    let mut best = (f64::INFINITY, f64::NAN);
    for mu in grid.chain([lo, hi]) {
        if mu <= 0.0 {
            continue;
        }
        let r = (bound.a * bound.gamma.eval(mu) + bound.b * mu + bound.d) / mu;
        if r < best.0 {
            best = (r, mu);
        }
    }
    best
}

/// Minimum of [`ratio_from_bound`] over the triples of one case.
pub fn case_ratio(bounds: &[QuadraticBound], case: Case) -> f64 {
    bounds
        .iter()
        .filter(|b| b.case == case)
        .map(ratio_from_bound)
        .fold(f64::INFINITY, f64::min)
}

/// The π-earliest positive-mass type of arrival `j` in the rule.
fn first_rule_type(instance: &Instance, rule: &PermutationRule, j: usize) -> Option<usize> {
    rule.pairs()
        .iter()
        .find(|&&(i, t)| i == j && !instance.arrival(j).mass(t).is_zero())
        .map(|&(_, t)| t)
}

/// Replaces arrival `j` by `j′` (at index `j`) and the Bernoulli arrival
/// `j″` (at index `j + 1`), moving mass `eps` of the earliest rule type `a₁`
/// to `j″` and rewriting the rule so that `(j′, a₁), (j″, a₁)` take the place
/// of `(j, a₁)`. Later arrivals shift up by one.
pub fn split_vertex(
    instance: &Instance,
    rule: &PermutationRule,
    j: usize,
    eps: &Mass,
) -> Result<(Instance, PermutationRule), AnalysisError> {
    rule.validate(instance).map_err(EstimatorError::from)?;
    if j >= instance.n_online() {
        return Err(OracleError::IndexOutOfRange { index: j, n: instance.n_online() }.into());
    }
    let a1 = first_rule_type(instance, rule, j).ok_or(AnalysisError::TypeNotInRule(j))?;
    let dist = instance.arrival(j);
    let p1 = dist.mass(a1);
    let e = eps.value();
    let too_big = match (eps, p1) {
        (Mass::Exact(x), Mass::Exact(p)) => x > p,
        _ => e > p1.value(),
    };
    if !(e > 0.0) || e >= 1.0 || too_big {
        return Err(AnalysisError::EpsilonOutOfRange(e));
    }
    let keep = Mass::one().minus(eps);

    let masses = (0..dist.len())
        .map(|t| {
            let m = if t == a1 { dist.mass(t).minus(eps) } else { dist.mass(t).clone() };
            let m = m.divided_by(&keep);
            // Rounding may leave a float residue where the mass should vanish.
            if !m.is_exact() && m.value().abs() < 1e-15 { Mass::Real(0.0) } else { m }
        })
        .collect();
    let j_prime = TypeDistribution::new(dist.types().to_vec(), masses);
    let j_second = TypeDistribution::new(
        vec![dist.online_type(a1).clone(), crate::instance::OnlineType::empty()],
        vec![eps.clone(), keep],
    );

    let mut arrivals: Vec<TypeDistribution> = instance.arrivals()[..j].to_vec();
    arrivals.push(j_prime);
    arrivals.push(j_second);
    arrivals.extend_from_slice(&instance.arrivals()[j + 1..]);
    let split = Instance::new(instance.offline().to_vec(), arrivals)?;

    let mut pairs = Vec::with_capacity(rule.pairs().len() + 1);
    for &(i, t) in rule.pairs() {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => pairs.push((i, t)),
            std::cmp::Ordering::Greater => pairs.push((i + 1, t)),
            std::cmp::Ordering::Equal => {
                pairs.push((j, t));
                if t == a1 {
                    pairs.push((j + 1, 0));
                }
            }
        }
    }
    Ok((split, PermutationRule::new(rule.offline(), pairs)))
}

/// Whether every arrival has at most one positive-mass type in the rule.
pub fn is_bernoulli(instance: &Instance, rule: &PermutationRule) -> bool {
    (0..instance.n_online()).all(|j| {
        rule.pairs()
            .iter()
            .filter(|&&(i, t)| i == j && !instance.arrival(j).mass(t).is_zero())
            .count()
            <= 1
    })
}

/// Splits with `ε = P_j(a₁)` until every arrival is Bernoulli.
pub fn bernoullize(instance: &Instance, rule: &PermutationRule) -> Result<(Instance, PermutationRule), AnalysisError> {
    let mut current = (instance.clone(), rule.clone());
    loop {
        let (inst, rule) = &current;
        let Some(j) = (0..inst.n_online()).find(|&j| {
            rule.pairs()
                .iter()
                .filter(|&&(i, t)| i == j && !inst.arrival(j).mass(t).is_zero())
                .count()
                >= 2
        }) else {
            return Ok(current);
        };
        let a1 = first_rule_type(inst, rule, j).expect("arrival has rule types");
        let eps = inst.arrival(j).mass(a1).clone();
        current = split_vertex(inst, rule, j, &eps)?;
    }
}

/// Exact moments of the rule-independent estimator's `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleMoments<S> {
    pub mean: S,
    pub min1: S,
    pub ocs: f64,
}

/// `E[y]`, `E[min(y, 1)]` and `E[p(y)]` for `y = Σ_j Pr[rule selects j | t_j]`.
pub fn rule_moments<S: Scalar>(instance: &Instance, rule: &PermutationRule) -> Result<RuleMoments<S>, AnalysisError> {
    rule.validate(instance).map_err(EstimatorError::from)?;
    let fractions: Vec<Vec<S>> = (0..instance.n_online())
        .map(|j| {
            (0..instance.arrival(j).len())
                .map(|t| rule_independent_fraction::<S>(instance, rule, j, t))
                .collect()
        })
        .collect();
    let mut mean = S::zero();
    let mut min1 = S::zero();
    let mut ocs = CompensatedSum::default();
    for (types, prob) in type_vectors::<S>(instance)? {
        let y = types
            .iter()
            .enumerate()
            .fold(S::zero(), |acc, (j, &t)| acc + fractions[j][t].clone());
        let capped = if y > S::one() { S::one() } else { y.clone() };
        ocs.add(prob.to_f64() * ocs_guarantee(y.to_f64()));
        mean = mean + prob.clone() * y;
        min1 = min1 + prob * capped;
    }
    Ok(RuleMoments { mean, min1, ocs: ocs.value() })
}

/// One μ point of the worst-case experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub mu: f64,
    pub frac_ratio: f64,
    pub ocs_ratio: f64,
    pub stderr_frac: f64,
    pub stderr_ocs: f64,
}

pub const CURVE_CSV_HEADER: &str = "mu,frac_ratio,ocs_ratio,stderr_frac,stderr_ocs";

pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for p in curve {
        out.push_str(&format!("{},{},{},{},{}\n", p.mu, p.frac_ratio, p.ocs_ratio, p.stderr_frac, p.stderr_ocs));
    }
    out
}

/// The grid `0.01, 0.02, …, 1.00`.
pub fn default_mu_grid() -> Vec<f64> {
    (1..=100).map(|k| k as f64 / 100.0).collect()
}

/// Samples `y = Σ_i 𝟙[coin_i(ε)]·(1−ε)^{n−i}` on the worst-case instance for
/// every μ of the grid and reports `E[min(y,1)]/E[y]` and `E[p(y)]/E[y]`.
///
/// Realized arrivals are found by geometric skips down from the last index,
/// so a sample costs time proportional to the number of realizations.
pub fn worst_case_experiment(n: usize, mu_grid: &[f64], samples: usize, seed: u64) -> Result<Vec<CurvePoint>, AnalysisError> {
    if n == 0 || samples == 0 {
        return Err(AnalysisError::InvalidParameter("n and samples must be positive".into()));
    }
    if let Some(&mu) = mu_grid.iter().find(|&&mu| !(mu > 0.0 && mu <= 1.0)) {
        return Err(InstanceError::MuOutOfRange(mu).into());
    }
    let purpose = seed::tag("worst_case_experiment");
    Ok(mu_grid
        .par_iter()
        .map(|&mu| {
            let eps = worst_case_eps(n, mu);
            let q = 1.0 - eps;
            let powers: Vec<f64> = std::iter::successors(Some(1.0f64), |p| Some(p * q)).take(n).collect();
            let skip = Geometric::new(eps).expect("eps in (0, 1]");
            let mut rng = seed::stream(seed, purpose, mu.to_bits());
            let ys: Vec<f64> = (0..samples)
                .map(|_| {
                    let mut y = CompensatedSum::default();
                    let mut k = skip.sample(&mut rng);
                    while k < n as u64 {
                        let x = powers[k as usize];
                        if x == 0.0 {
                            break;
                        }
                        y.add(x);
                        k += 1 + skip.sample(&mut rng);
                    }
                    y.value()
                })
                .collect();
            let mins: Vec<f64> = ys.iter().map(|y| y.min(1.0)).collect();
            let ps: Vec<f64> = ys.iter().map(|&y| ocs_guarantee(y)).collect();
            let (frac_ratio, stderr_frac) = jackknife_ratio(&mins, &ys);
            let (ocs_ratio, stderr_ocs) = jackknife_ratio(&ps, &ys);
            CurvePoint { mu, frac_ratio, ocs_ratio, stderr_frac, stderr_ocs }
        })
        .collect())
}

/// Minimum ratios of a curve, each with the μ attaining it.
pub fn curve_minima(curve: &[CurvePoint]) -> ((f64, f64), (f64, f64)) {
    let frac = curve
        .iter()
        .map(|p| (p.frac_ratio, p.mu))
        .fold((f64::INFINITY, f64::NAN), |a, b| if b.0 < a.0 { b } else { a });
    let ocs = curve
        .iter()
        .map(|p| (p.ocs_ratio, p.mu))
        .fold((f64::INFINITY, f64::NAN), |a, b| if b.0 < a.0 { b } else { a });
    (frac, ocs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardnessResult {
    pub best_value: f64,
    pub best_ratio: f64,
    pub best_x: (f64, f64),
    pub opt: f64,
}

/// Expected matched weight when the first arrival puts `x1` on `u1` and `x2`
/// on `u2` and the second arrival then fills whichever neighbor it brings.
pub fn hardness_value(x1: f64, x2: f64) -> f64 {
    0.5 * ((x1 + 1.0).min(1.0) + x2) + 0.5 * (x1 + (x2 + 1.0).min(1.0))
}

/// Sweeps the first arrival's split `(x1, x2)`, `x1 + x2 ≤ 1`, on the grid.
pub fn hardness_search(grid_step: f64) -> Result<HardnessResult, AnalysisError> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(AnalysisError::InvalidParameter("grid_step must be in (0, 1]".into()));
    }
    let instance = hardness_instance();
    let weights = instance.weights();
    let opt = type_vectors::<f64>(&instance)?
        .into_iter()
        .map(|(types, prob)| {
            let graph = RealizedGraph::from_types(&instance, &weights, &types);
            prob * max_weight_matching(&graph, &TieBreakPolicy::Canonical).value(&weights)
        })
        .sum::<f64>();

    let m = (1.0 / grid_step).round() as u64;
    let mut best = (f64::NEG_INFINITY, (0.0, 0.0));
    for i in 0..=m {
        for k in 0..=(m - i) {
            let (x1, x2) = (i as f64 / m as f64, k as f64 / m as f64);
            let v = hardness_value(x1, x2);
            if v > best.0 {
                best = (v, (x1, x2));
            }
        }
    }
    Ok(HardnessResult {
        best_value: best.0,
        best_ratio: best.0 / opt,
        best_x: best.1,
        opt,
    })
}

/// One checked inequality or identity.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs` for inequalities `lhs ≤ rhs`; `−|rhs − lhs|` for identities.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LemmaReport {
    pub checks: Vec<LemmaCheck>,
}

impl LemmaReport {
    pub fn min_slack(&self) -> f64 {
        self.checks.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min)
    }

    fn inequality<S: Scalar>(&mut self, name: String, lhs: &S, rhs: &S) {
        let slack = (rhs.clone() - lhs.clone()).to_f64();
        self.checks.push(LemmaCheck { name, lhs: lhs.to_f64(), rhs: rhs.to_f64(), slack });
    }

    fn identity<S: Scalar>(&mut self, name: String, lhs: &S, rhs: &S) {
        let diff = (rhs.clone() - lhs.clone()).to_f64().abs();
        self.checks.push(LemmaCheck { name, lhs: lhs.to_f64(), rhs: rhs.to_f64(), slack: -diff });
    }

    /// Fails on the first check whose slack is below `-tolerance`.
    pub fn ensure(self, tolerance: f64) -> Result<Self, AnalysisError> {
        if let Some(c) = self.checks.iter().find(|c| c.slack < -tolerance) {
            return Err(AnalysisError::LemmaViolated { name: c.name.clone(), gap: -c.slack });
        }
        Ok(self)
    }
}

fn sum_over<S: Scalar>(items: impl IntoIterator<Item = S>) -> S {
    items.into_iter().fold(S::zero(), |a, b| a + b)
}

/// Exact checks of the warm-up second-moment chain for vertex `u`: the
/// independent and fully-correlated moment bounds, the per-arrival
/// comparison of their squared fractions, and `E[y²] ≤ μ + μ²/2` for the
/// even mix.
pub fn check_warmup_lemmas<S: Scalar + 'static>(
    instance: &Instance,
    u: usize,
    policy: PolicyMode,
) -> Result<LemmaReport, AnalysisError> {
    if u >= instance.n_offline() {
        return Err(OracleError::OfflineOutOfRange(u).into());
    }
    let oracle = Oracle::Matching(policy);
    let model = std::sync::Arc::new(exact_enumerate::<S>(instance, &oracle)?);
    let est = |kind| Estimator::with_model(model.clone(), &EstimatorSpec::new(kind).with_oracle(oracle.clone()));
    let ind = exact_outcomes(&est(EstimatorKind::Independent)?)?;
    let full = exact_outcomes(&est(EstimatorKind::FullyCorrelated)?)?;
    let mix = exact_outcomes(&est(EstimatorKind::EvenMix)?)?;
    let n = instance.n_online();

    let mu = model.matched_probability(u);
    let moment = |outs: &[(S, crate::estimators::FractionalOutcome<S>)], f: &dyn Fn(&crate::estimators::FractionalOutcome<S>) -> S| {
        sum_over(outs.iter().map(|(p, o)| p.clone() * f(o)))
    };
    let y2 = |o: &crate::estimators::FractionalOutcome<S>| o.y[u].clone() * o.y[u].clone();
    let x2 = |j: usize| move |o: &crate::estimators::FractionalOutcome<S>| o.x[u][j].clone() * o.x[u][j].clone();

    let ind_y2 = moment(&ind, &y2);
    let full_y2 = moment(&full, &y2);
    let mix_y2 = moment(&mix, &y2);
    let ind_x2: Vec<S> = (0..n).map(|j| moment(&ind, &x2(j))).collect();
    let full_x2: Vec<S> = (0..n).map(|j| moment(&full, &x2(j))).collect();

    let mut report = LemmaReport::default();
    let two = S::from_ratio(2, 1);
    let half = S::from_ratio(1, 2);
    report.identity("unbiased mean (independent)".into(), &moment(&ind, &|o| o.y[u].clone()), &mu);
    report.identity("unbiased mean (fully correlated)".into(), &moment(&full, &|o| o.y[u].clone()), &mu);
    report.inequality(
        "independent second moment".into(),
        &ind_y2,
        &(mu.clone() * mu.clone() + sum_over(ind_x2.iter().cloned())),
    );
    report.inequality(
        "fully correlated second moment".into(),
        &full_y2,
        &(two * mu.clone() - sum_over(full_x2.iter().cloned())),
    );
    for j in 0..n {
        report.inequality(format!("squared fractions at arrival {j}"), &ind_x2[j], &full_x2[j]);
    }
    report.inequality("even mix second moment".into(), &mix_y2, &(mu.clone() + half * mu.clone() * mu));
    report.ensure(LEMMA_TOLERANCE)
}

/// Which right-hand side the cross-arrival moments of overlapping windows
/// are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossMoment {
    /// `E[P_ℓ(1 − P_ℓ)] / (ℓ(n − ℓ))`, which treats `u` as matched almost
    /// surely once the overlap is revealed.
    Stated,
    /// `E[P_ℓ(M_ℓ − P_ℓ)] / (ℓ(n − ℓ))` with `M_ℓ = Pr[u matched | t_{[ℓ]}]`,
    /// checked as an identity, plus the `Stated` form as an upper bound.
    Exact,
}

/// Exact window identities for vertex `u` on an i.i.d. instance under
/// exchangeable tie-breaking: `E[P_ℓ] = μℓ/n`, the product moments of
/// windowed fractions on distinct arrivals, and the same-arrival bound.
pub fn check_window_identities<S: Scalar + 'static>(
    instance: &Instance,
    u: usize,
    cross: CrossMoment,
) -> Result<LemmaReport, AnalysisError> {
    if !instance.is_iid() {
        return Err(OracleError::NotIID.into());
    }
    if u >= instance.n_offline() {
        return Err(OracleError::OfflineOutOfRange(u).into());
    }
    let model = exact_enumerate::<S>(instance, &Oracle::Matching(PolicyMode::Exchangeable))?;
    let n = instance.n_online();
    let mu = model.matched_probability(u);
    let nn = S::from_ratio(n as u64, 1);

    // E[P_ℓ], E[P_ℓ²] and E[P_ℓ·M_ℓ] for ℓ = 1..=n.
    let mut p1 = vec![S::zero(); n + 1];
    let mut p2 = vec![S::zero(); n + 1];
    let mut pm = vec![S::zero(); n + 1];
    for ell in 1..=n {
        let table = model.table(&(0..ell).collect::<Vec<_>>());
        for (_, mass, probs) in table.iter() {
            let p = sum_over((0..ell).map(|j| probs[u * n + j].clone()));
            let m = sum_over((0..n).map(|j| probs[u * n + j].clone()));
            p1[ell] = p1[ell].clone() + mass.clone() * p.clone();
            p2[ell] = p2[ell].clone() + mass.clone() * p.clone() * p.clone();
            pm[ell] = pm[ell].clone() + mass.clone() * p * m;
        }
    }

    let mut report = LemmaReport::default();
    for ell in 1..=n {
        let expected = mu.clone() * S::from_ratio(ell as u64, 1) / nn.clone();
        report.identity(format!("E[P_{ell}] = mu*{ell}/n"), &p1[ell], &expected);
    }

    // Windowed fraction x_j^{(r)} on every atom, keyed by (j, r).
    let window = |j: usize, r: usize| (j + 1 - r..=j).collect::<Vec<usize>>();
    let mut fractions: HashMap<(usize, usize), Vec<S>> = HashMap::new();
    for j in 0..n {
        for r in 1..=j + 1 {
            let idx = window(j, r);
            let column = model
                .atoms()
                .iter()
                .map(|a| {
                    let types: Vec<usize> = idx.iter().map(|&i| a.types[i]).collect();
                    Ok(model.conditional(&idx, &types)?[u * n + j].clone())
                })
                .collect::<Result<Vec<S>, OracleError>>()?;
            fractions.insert((j, r), column);
        }
    }
    let product_moment = |a: &[S], b: &[S]| {
        sum_over(model.atoms().iter().zip(a.iter().zip(b)).map(|(atom, (x, y))| atom.prob.clone() * x.clone() * y.clone()))
    };

    for j in 0..n {
        for k in j + 1..n {
            for r1 in 1..=j + 1 {
                for r2 in 1..=k + 1 {
                    let lo = (k + 1 - r2).max(j + 1 - r1);
                    let ell = if lo <= j { j - lo + 1 } else { 0 };
                    let lhs = product_moment(&fractions[&(j, r1)], &fractions[&(k, r2)]);
                    let name = format!("E[x_{j}^({r1}) x_{k}^({r2})], overlap {ell}");
                    if ell == 0 {
                        report.identity(name, &lhs, &(mu.clone() * mu.clone() / (nn.clone() * nn.clone())));
                        continue;
                    }
                    let scale = S::from_ratio((ell * (n - ell)) as u64, 1);
                    let stated = (p1[ell].clone() - p2[ell].clone()) / scale.clone();
                    match cross {
                        CrossMoment::Stated => report.identity(name, &lhs, &stated),
                        CrossMoment::Exact => {
                            let exact = (pm[ell].clone() - p2[ell].clone()) / scale;
                            report.identity(name.clone(), &lhs, &exact);
                            report.inequality(format!("{name} <= E[P(1-P)]/(l(n-l))"), &lhs, &stated);
                        }
                    }
                }
            }
        }
        for r1 in 1..=j + 1 {
            for r2 in r1..=j + 1 {
                let lhs = product_moment(&fractions[&(j, r1)], &fractions[&(j, r2)]);
                let rhs = p2[r1].clone() / S::from_ratio(r1 as u64, 1);
                report.inequality(format!("E[x_{j}^({r1}) x_{j}^({r2})] <= E[P_{r1}^2]/{r1}"), &lhs, &rhs);
            }
        }
    }
    report.ensure(LEMMA_TOLERANCE)
}

/// Sampled fractional and OCS ratios of the windowed mix on the i.i.d.
/// instance with one offline vertex and arrivals adjacent to it with
/// probability `q`, under exchangeable tie-breaking. Conditionals use the
/// closed form `E[1 / (R + B)]`, `B ~ Bin(n − |W|, q)`, where `R` counts
/// realized arrivals in the window `W`.
pub fn windowed_mix_iid_ratio(n: usize, q: f64, beta: f64, trials: usize, seed: u64) -> Result<(f64, f64), AnalysisError> {
    if n == 0 || trials == 0 || !(q > 0.0 && q <= 1.0) || !(0.0..=1.0).contains(&beta) {
        return Err(AnalysisError::InvalidParameter("need n, trials > 0, q in (0,1], beta in [0,1]".into()));
    }
    // inv[m][r] = E[1 / (r + B)], B ~ Bin(n − m, q), for 1 ≤ r ≤ m ≤ n.
    let inv: Vec<Vec<f64>> = (0..=n)
        .into_par_iter()
        .map(|m| {
            let rest = n - m;
            let pmf = binomial_pmf(rest, q);
            (0..=m)
                .map(|r| if r == 0 { 0.0 } else { pmf.iter().enumerate().map(|(b, p)| p / (r + b) as f64).sum() })
                .collect()
        })
        .collect();
    let coeffs = |j: usize| crate::estimators::windowed_mix_coefficients::<f64>(j, n, beta);
    let purpose = seed::tag("windowed_mix_iid_ratio");
    let ys: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed::stream(seed, purpose, k);
            let realized: Vec<bool> = (0..n).map(|_| rand::Rng::random_bool(&mut rng, q)).collect();
            let mut y = 0.0;
            for j in 0..n {
                if !realized[j] {
                    continue;
                }
                let mut count = 0;
                for (idx, a) in coeffs(j).into_iter().enumerate() {
                    let r = idx + 1;
                    if realized[j + 1 - r] {
                        count += 1;
                    }
                    y += a * inv[r][count];
                }
            }
            y
        })
        .collect();
    let mins: Vec<f64> = ys.iter().map(|y| y.min(1.0)).collect();
    let ps: Vec<f64> = ys.iter().map(|&y| ocs_guarantee(y)).collect();
    Ok((jackknife_ratio(&mins, &ys).0, jackknife_ratio(&ps, &ys).0))
}

fn binomial_pmf(m: usize, q: f64) -> Vec<f64> {
    let mut pmf = vec![1.0];
    for _ in 0..m {
        let mut next = vec![0.0; pmf.len() + 1];
        for (k, p) in pmf.iter().enumerate() {
            next[k] += p * (1.0 - q);
            next[k + 1] += p * q;
        }
        pmf = next;
    }
    pmf
}

/// Helper for tests and the certification suite: the exact model of an
/// instance under exchangeable tie-breaking.
pub fn exchangeable_model<S: Scalar>(instance: &Instance) -> Result<ExactModel<S>, AnalysisError> {
    Ok(exact_enumerate(instance, &Oracle::Matching(PolicyMode::Exchangeable))?)
}
