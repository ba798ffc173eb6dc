//! Unbiased estimators: online fractional algorithms that match arrival `j`
//! to `u` by the conditional probability that `(u, v_j)` is in the optimum.

use std::sync::Arc;

use crate::instance::Instance;
use crate::oracle::{
    exact_enumerate, ConditionalEngine, ExactModel, MonteCarloModel, Oracle, OracleError, PolicyMode,
    ProbabilityMode,
};
use crate::scalar::Scalar;

/// The mixing weight of the windowed estimators.
pub const DEFAULT_BETA: f64 = 0.79;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuleError {
    #[error("rule lists ({0}, {1}) twice")]
    DuplicatePair(usize, usize),
    #[error("rule pair ({0}, {1}) names no type of the instance")]
    InvalidPair(usize, usize),
    #[error("rule selects type {type_id} of arrival {arrival}, which is not adjacent to offline vertex {offline}")]
    NotAdjacent { arrival: usize, type_id: usize, offline: usize },
    #[error("rule targets offline vertex {0}, which does not exist")]
    OfflineOutOfRange(usize),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("this estimator requires an i.i.d. instance")]
    NotIID,
    #[error("beta = {0} is outside [0, 1]")]
    InvalidBeta(f64),
    #[error("window length {r} is invalid at arrival {j}")]
    InvalidWindow { r: usize, j: usize },
    #[error("index set for arrival {j} is invalid: {reason}")]
    InvalidSelector { j: usize, reason: String },
    #[error("type vector is not in the support of the instance")]
    TypesOutOfSupport,
    #[error("Monte-Carlo probabilities need an f64 estimator")]
    MonteCarloNeedsFloat,
}

/// A total order over `(online index, type id)` pairs. The rule selects the
/// first pair whose type is realized, and assigns it to `offline`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PermutationRule {
    offline: usize,
    pairs: Vec<(usize, usize)>,
}

impl PermutationRule {
    pub fn new(offline: usize, pairs: Vec<(usize, usize)>) -> Self {
        Self { offline, pairs }
    }

    pub fn offline(&self) -> usize {
        self.offline
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn position(&self, j: usize, type_id: usize) -> Option<usize> {
        self.pairs.iter().position(|&p| p == (j, type_id))
    }

    pub fn validate(&self, instance: &Instance) -> Result<(), RuleError> {
        if self.offline >= instance.n_offline() {
            return Err(RuleError::OfflineOutOfRange(self.offline));
        }
        let mut seen = std::collections::HashSet::new();
        for &(j, t) in &self.pairs {
            if !seen.insert((j, t)) {
                return Err(RuleError::DuplicatePair(j, t));
            }
            if j >= instance.n_online() || t >= instance.arrival(j).len() {
                return Err(RuleError::InvalidPair(j, t));
            }
            if !instance.arrival(j).online_type(t).contains(self.offline) {
                return Err(RuleError::NotAdjacent {
                    arrival: j,
                    type_id: t,
                    offline: self.offline,
                });
            }
        }
        Ok(())
    }
}

/// Scans the rule in order and returns the first index whose listed type is
/// realized.
pub fn permutation_select(rule: &PermutationRule, types: &[usize]) -> Option<usize> {
    rule.pairs
        .iter()
        .find(|&&(j, t)| types.get(j) == Some(&t))
        .map(|&(j, _)| j)
}

/// Chooses the conditioning set of a subset-resampling estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum IndexSelector {
    /// The last `r` arrivals, truncated at the first.
    Window(usize),
    /// One explicit set per arrival; each must contain its arrival and lie
    /// in the past.
    Sets(Vec<Vec<usize>>),
}

impl IndexSelector {
    pub fn select(&self, j: usize) -> Result<Vec<usize>, EstimatorError> {
        match self {
            IndexSelector::Window(r) => {
                if *r == 0 {
                    return Err(EstimatorError::InvalidWindow { r: 0, j });
                }
                Ok((j + 1 - (*r).min(j + 1)..=j).collect())
            }
            IndexSelector::Sets(sets) => {
                let set = sets.get(j).ok_or_else(|| EstimatorError::InvalidSelector {
                    j,
                    reason: "no set given".into(),
                })?;
                let mut set = set.clone();
                set.sort_unstable();
                set.dedup();
                if !set.contains(&j) {
                    return Err(EstimatorError::InvalidSelector { j, reason: "set omits the arrival".into() });
                }
                if set.iter().any(|&i| i > j) {
                    return Err(EstimatorError::InvalidSelector { j, reason: "set reaches future arrivals".into() });
                }
                Ok(set)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorKind {
    Independent,
    FullyCorrelated,
    EvenMix,
    WindowedMix { beta: f64 },
    Subset(IndexSelector),
    RuleIndependent(PermutationRule),
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Independent => "independent",
            EstimatorKind::FullyCorrelated => "fully_correlated",
            EstimatorKind::EvenMix => "even_mix",
            EstimatorKind::WindowedMix { .. } => "windowed_mix",
            EstimatorKind::Subset(_) => "subset",
            EstimatorKind::RuleIndependent(_) => "rule_independent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub mode: ProbabilityMode,
    /// The selection rule being estimated. Ignored by `RuleIndependent`,
    /// which always estimates its own rule.
    pub oracle: Oracle,
}

impl EstimatorSpec {
    /// Exact mode against the canonical offline optimum.
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            mode: ProbabilityMode::Exact,
            oracle: Oracle::Matching(PolicyMode::Canonical),
        }
    }

    pub fn with_policy(mut self, policy: PolicyMode) -> Self {
        self.oracle = Oracle::Matching(policy);
        self
    }

    pub fn with_oracle(mut self, oracle: Oracle) -> Self {
        self.oracle = oracle;
        self
    }

    pub fn with_mode(mut self, mode: ProbabilityMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn effective_oracle(&self) -> Oracle {
        match &self.kind {
            EstimatorKind::RuleIndependent(rule) => Oracle::Rule(rule.clone()),
            _ => self.oracle.clone(),
        }
    }

    /// Whether the estimator may run on `instance`.
    pub fn admit(&self, instance: &Instance) -> Result<(), EstimatorError> {
        match &self.kind {
            EstimatorKind::WindowedMix { beta } => {
                if !(0.0..=1.0).contains(beta) {
                    return Err(EstimatorError::InvalidBeta(*beta));
                }
                if !instance.is_iid() {
                    return Err(EstimatorError::NotIID);
                }
            }
            EstimatorKind::Subset(selector) => {
                for j in 0..instance.n_online() {
                    selector.select(j)?;
                }
            }
            EstimatorKind::RuleIndependent(rule) => rule.validate(instance)?,
            _ => {}
        }
        self.effective_oracle().validate(instance)?;
        Ok(())
    }

    /// The conditioning sets and their coefficients for arrival `j`.
    pub fn plan<S: Scalar>(&self, j: usize, n: usize) -> Result<Vec<(Vec<usize>, S)>, EstimatorError> {
        let prefix: Vec<usize> = (0..=j).collect();
        Ok(match &self.kind {
            EstimatorKind::Independent | EstimatorKind::RuleIndependent(_) => vec![(vec![j], S::one())],
            EstimatorKind::FullyCorrelated => vec![(prefix, S::one())],
            EstimatorKind::EvenMix => {
                let half = S::from_ratio(1, 2);
                vec![(vec![j], half.clone()), (prefix, half)]
            }
            EstimatorKind::WindowedMix { beta } => windowed_mix_coefficients::<S>(j, n, *beta)
                .into_iter()
                .enumerate()
                .map(|(k, a)| ((j - k..=j).collect(), a))
                .collect(),
            EstimatorKind::Subset(selector) => vec![(selector.select(j)?, S::one())],
        })
    }
}

/// `a_j^{(r)}` for `r = 1..=j+1` (arrival `j` zero-based): `beta/n` for
/// the shorter windows and the remainder on the full prefix.
pub fn windowed_mix_coefficients<S: Scalar>(j: usize, n: usize, beta: f64) -> Vec<S> {
    let step = S::from_f64(beta) / S::from_ratio(n as u64, 1);
    let mut coeffs = vec![step.clone(); j];
    coeffs.push(S::one() - step * S::from_ratio(j as u64, 1));
    coeffs
}

/// Fractions chosen for one realized type vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalOutcome<S> {
    /// `x[u][j]`.
    pub x: Vec<Vec<S>>,
    /// `y[u] = Σ_j x[u][j]`.
    pub y: Vec<S>,
    pub types: Vec<usize>,
}

/// An estimator bound to an instance.
pub struct Estimator<S: Scalar> {
    spec: EstimatorSpec,
    instance: Instance,
    engine: Option<Arc<dyn ConditionalEngine<S>>>,
}

impl<S: Scalar + 'static> Estimator<S> {
    /// Exact conditionals by enumeration, whatever `spec.mode` says.
    pub fn exact(instance: &Instance, spec: &EstimatorSpec) -> Result<Self, EstimatorError> {
        spec.admit(instance)?;
        let engine: Option<Arc<dyn ConditionalEngine<S>>> = match spec.kind {
            EstimatorKind::RuleIndependent(_) => None,
            _ => Some(Arc::new(exact_enumerate::<S>(instance, &spec.effective_oracle())?)),
        };
        Ok(Self { spec: spec.clone(), instance: instance.clone(), engine })
    }

    /// Shares an existing exact model, which must use the spec's oracle.
    pub fn with_model(model: Arc<ExactModel<S>>, spec: &EstimatorSpec) -> Result<Self, EstimatorError> {
        let instance = model.instance().clone();
        spec.admit(&instance)?;
        debug_assert_eq!(model.oracle(), &spec.effective_oracle());
        Ok(Self { spec: spec.clone(), instance, engine: Some(model) })
    }

    pub fn spec(&self) -> &EstimatorSpec {
        &self.spec
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    /// `x_{u,j}` for every `u`, from the first `j + 1` types.
    pub fn column(&self, j: usize, prefix: &[usize]) -> Result<Vec<S>, EstimatorError> {
        let n = self.instance.n_online();
        let l = self.instance.n_offline();
        if let EstimatorKind::RuleIndependent(rule) = &self.spec.kind {
            let mut col = vec![S::zero(); l];
            col[rule.offline()] = rule_independent_fraction(&self.instance, rule, j, prefix[j]);
            return Ok(col);
        }
        let engine = self.engine.as_ref().expect("matching estimators carry an engine");
        let mut col = vec![S::zero(); l];
        for (indices, coeff) in self.spec.plan::<S>(j, n)? {
            if coeff.is_zero() {
                continue;
            }
            let types: Vec<usize> = indices.iter().map(|&i| prefix[i]).collect();
            let probs = engine.conditional(&indices, &types)?;
            for (u, x) in col.iter_mut().enumerate() {
                let p = &probs[u * n + j];
                if !p.is_zero() {
                    *x = x.clone() + coeff.clone() * p.clone();
                }
            }
        }
        Ok(col)
    }

    pub fn fraction(&self, u: usize, j: usize, prefix: &[usize]) -> Result<S, EstimatorError> {
        Ok(self.column(j, prefix)?.swap_remove(u))
    }

    /// Processes the arrivals of `types` in order.
    pub fn run(&self, types: &[usize]) -> Result<FractionalOutcome<S>, EstimatorError> {
        let n = self.instance.n_online();
        let l = self.instance.n_offline();
        if types.len() != n || !self.instance.in_support(&(0..n).collect::<Vec<_>>(), types) {
            return Err(EstimatorError::TypesOutOfSupport);
        }
        let mut x = vec![vec![S::zero(); n]; l];
        let mut y = vec![S::zero(); l];
        for j in 0..n {
            let mut col = self.column(j, &types[..=j])?;
            let total = col.iter().fold(S::zero(), |acc, v| acc + v.clone());
            if total.exceeds_one() {
                col.iter_mut().for_each(|v| *v = v.clone() / total.clone());
            }
            for (u, v) in col.into_iter().enumerate() {
                y[u] = y[u].clone() + v.clone();
                x[u][j] = v;
            }
        }
        Ok(FractionalOutcome { x, y, types: types.to_vec() })
    }
}

impl Estimator<f64> {
    /// Honors `spec.mode`: exact enumeration or Monte-Carlo conditionals.
    pub fn new(instance: &Instance, spec: &EstimatorSpec) -> Result<Self, EstimatorError> {
        match spec.mode {
            ProbabilityMode::Exact => Self::exact(instance, spec),
            ProbabilityMode::MonteCarlo { samples, seed } => {
                spec.admit(instance)?;
                let engine: Option<Arc<dyn ConditionalEngine<f64>>> = match spec.kind {
                    EstimatorKind::RuleIndependent(_) => None,
                    _ => Some(Arc::new(MonteCarloModel::new(instance, &spec.effective_oracle(), samples, seed)?)),
                };
                Ok(Self { spec: spec.clone(), instance: instance.clone(), engine })
            }
        }
    }
}

/// One realization through a freshly built f64 estimator.
pub fn run_fractional(
    instance: &Instance,
    spec: &EstimatorSpec,
    types: &[usize],
) -> Result<FractionalOutcome<f64>, EstimatorError> {
    Estimator::new(instance, spec)?.run(types)
}

fn at<S: Scalar>(engine: &dyn ConditionalEngine<S>, u: usize, j: usize, indices: &[usize], types: &[usize]) -> Result<S, EstimatorError> {
    let n = engine.instance().n_online();
    if u >= engine.instance().n_offline() {
        return Err(OracleError::OfflineOutOfRange(u).into());
    }
    if j >= n {
        return Err(OracleError::IndexOutOfRange { index: j, n }.into());
    }
    Ok(engine.conditional(indices, types)?[u * n + j].clone())
}

/// `Pr[(u, v_j) ∈ OPT | t_j]`.
pub fn independent_fraction<S: Scalar>(engine: &dyn ConditionalEngine<S>, u: usize, j: usize, t_j: usize) -> Result<S, EstimatorError> {
    at(engine, u, j, &[j], &[t_j])
}

/// `Pr[(u, v_j) ∈ OPT | t_{≤j}]`; `prefix` holds `t_0..=t_j`.
pub fn fully_correlated_fraction<S: Scalar>(engine: &dyn ConditionalEngine<S>, u: usize, j: usize, prefix: &[usize]) -> Result<S, EstimatorError> {
    if prefix.len() != j + 1 {
        return Err(OracleError::ConditioningMismatch.into());
    }
    at(engine, u, j, &(0..=j).collect::<Vec<_>>(), prefix)
}

pub fn even_mix_fraction<S: Scalar>(engine: &dyn ConditionalEngine<S>, u: usize, j: usize, prefix: &[usize]) -> Result<S, EstimatorError> {
    let half = S::from_ratio(1, 2);
    let ind = independent_fraction(engine, u, j, prefix[j])?;
    let full = fully_correlated_fraction(engine, u, j, prefix)?;
    Ok(half.clone() * ind + half * full)
}

/// `x^{(r)}_{u,j}`: conditioned on the last `r` arrivals, whose types are
/// `window` (oldest first).
pub fn windowed_fraction<S: Scalar>(
    engine: &dyn ConditionalEngine<S>,
    u: usize,
    j: usize,
    r: usize,
    window: &[usize],
) -> Result<S, EstimatorError> {
    if !engine.instance().is_iid() {
        return Err(EstimatorError::NotIID);
    }
    if r == 0 || r > j + 1 || window.len() != r {
        return Err(EstimatorError::InvalidWindow { r, j });
    }
    at(engine, u, j, &(j + 1 - r..=j).collect::<Vec<_>>(), window)
}

pub fn windowed_mix_fraction<S: Scalar>(
    engine: &dyn ConditionalEngine<S>,
    u: usize,
    j: usize,
    prefix: &[usize],
    beta: f64,
) -> Result<S, EstimatorError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(EstimatorError::InvalidBeta(beta));
    }
    let n = engine.instance().n_online();
    let mut acc = S::zero();
    for (k, a) in windowed_mix_coefficients::<S>(j, n, beta).into_iter().enumerate() {
        let r = k + 1;
        acc = acc + a * windowed_fraction(engine, u, j, r, &prefix[j + 1 - r..=j])?;
    }
    Ok(acc)
}

/// `Pr[rule selects j | t_j]` in closed form: every pair ranked before
/// `(j, t_j)` on another arrival must fail to realize.
pub fn rule_independent_fraction<S: Scalar>(instance: &Instance, rule: &PermutationRule, j: usize, t_j: usize) -> S {
    let Some(pos) = rule.position(j, t_j) else {
        return S::zero();
    };
    let mut blocked: Vec<S> = vec![S::zero(); instance.n_online()];
    for &(i, s) in &rule.pairs()[..pos] {
        if i != j {
            blocked[i] = blocked[i].clone() + S::from_mass(instance.arrival(i).mass(s));
        }
    }
    blocked
        .into_iter()
        .fold(S::one(), |acc, b| if b.is_zero() { acc } else { acc * (S::one() - b) })
}

/// The rule-independent fraction in either probability mode.
pub fn rule_independent_probability(
    rule: &PermutationRule,
    instance: &Instance,
    j: usize,
    t_j: usize,
    mode: ProbabilityMode,
) -> Result<f64, EstimatorError> {
    rule.validate(instance)?;
    match mode {
        ProbabilityMode::Exact => {
            if !instance.in_support(&[j], &[t_j]) {
                return Err(OracleError::EmptyConditioning.into());
            }
            Ok(rule_independent_fraction(instance, rule, j, t_j))
        }
        ProbabilityMode::MonteCarlo { samples, seed } => {
            let model = MonteCarloModel::new(instance, &Oracle::Rule(rule.clone()), samples, seed)?;
            at(&model, rule.offline(), j, &[j], &[t_j])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{worst_case_instance, worst_case_instance_with_eps, TypeDistribution};
    use crate::scalar::Mass;
    use num_rational::BigRational;

    fn q(a: u64, b: u64) -> BigRational {
        <BigRational as Scalar>::from_ratio(a, b)
    }

    fn coin_pair() -> Instance {
        let d = TypeDistribution::from_pairs([(vec![0], Mass::ratio(1, 2)), (vec![], Mass::ratio(1, 2))]);
        Instance::with_weights(&[1.0], vec![d.clone(), d]).unwrap()
    }

    #[test]
    fn permutation_select_scans_in_order() {
        // Types: A = 0, B = 1, C = 2.
        let rule = PermutationRule::new(0, vec![(1, 0), (0, 1)]);
        assert_eq!(permutation_select(&rule, &[1, 0]), Some(1));
        assert_eq!(permutation_select(&rule, &[1, 2]), Some(0));
        assert_eq!(permutation_select(&rule, &[0, 2]), None);
        assert_eq!(permutation_select(&PermutationRule::new(0, vec![]), &[0, 0]), None);
    }

    #[test]
    fn rule_validation() {
        let inst = coin_pair();
        assert!(PermutationRule::new(0, vec![(0, 0), (1, 0)]).validate(&inst).is_ok());
        assert_eq!(PermutationRule::new(0, vec![(0, 0), (0, 0)]).validate(&inst), Err(RuleError::DuplicatePair(0, 0)));
        assert_eq!(PermutationRule::new(0, vec![(2, 0)]).validate(&inst), Err(RuleError::InvalidPair(2, 0)));
        assert!(matches!(PermutationRule::new(0, vec![(0, 1)]).validate(&inst), Err(RuleError::NotAdjacent { .. })));
    }

    #[test]
    fn exchangeable_independent_fraction() {
        let inst = coin_pair();
        let model = exact_enumerate::<BigRational>(&inst, &Oracle::Matching(PolicyMode::Exchangeable)).unwrap();
        assert_eq!(independent_fraction(&model, 0, 0, 0).unwrap(), q(3, 4));
        assert_eq!(independent_fraction(&model, 0, 0, 1).unwrap(), q(0, 1));
    }

    #[test]
    fn full_conditioning_gives_indicators() {
        let inst = coin_pair();
        let model = exact_enumerate::<BigRational>(&inst, &Oracle::Matching(PolicyMode::Canonical)).unwrap();
        assert_eq!(fully_correlated_fraction(&model, 0, 1, &[0, 0]).unwrap(), q(0, 1));
        assert_eq!(fully_correlated_fraction(&model, 0, 1, &[1, 0]).unwrap(), q(1, 1));
    }

    #[test]
    fn windowed_reduces_to_independent_and_fully_correlated() {
        let inst = coin_pair();
        let model = exact_enumerate::<BigRational>(&inst, &Oracle::Matching(PolicyMode::Exchangeable)).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(windowed_fraction(&model, 0, 1, 1, &[b]).unwrap(), independent_fraction(&model, 0, 1, b).unwrap());
                assert_eq!(windowed_fraction(&model, 0, 1, 2, &[a, b]).unwrap(), fully_correlated_fraction(&model, 0, 1, &[a, b]).unwrap());
            }
        }
        assert!(windowed_fraction(&model, 0, 1, 3, &[0, 0, 0]).is_err());
    }

    #[test]
    fn windowed_mix_coefficients_sum_to_one() {
        for n in 1..6 {
            for j in 0..n {
                let c = windowed_mix_coefficients::<BigRational>(j, n, 0.79);
                assert_eq!(c.len(), j + 1);
                let sum = c.into_iter().fold(q(0, 1), |a, b| a + b);
                assert_eq!(sum, q(1, 1));
            }
        }
        let first = windowed_mix_coefficients::<f64>(0, 5, DEFAULT_BETA);
        assert_eq!(first, vec![1.0]);
    }

    #[test]
    fn selector_validation() {
        let sel = IndexSelector::Sets(vec![vec![0], vec![1, 0], vec![1]]);
        assert_eq!(sel.select(1).unwrap(), vec![0, 1]);
        assert!(sel.select(2).is_err());
        assert!(IndexSelector::Sets(vec![vec![0, 1]]).select(0).is_err());
        assert_eq!(IndexSelector::Window(5).select(2).unwrap(), vec![0, 1, 2]);
        assert_eq!(IndexSelector::Window(2).select(3).unwrap(), vec![2, 3]);
    }

    #[test]
    fn rule_independent_closed_form_on_worst_case() {
        let (inst, rule) = worst_case_instance(6, 0.5).unwrap();
        let eps = inst.arrival(0).mass(0).value();
        for j in 0..6 {
            let x: f64 = rule_independent_fraction(&inst, &rule, j, 0);
            let expected = (1.0 - eps).powi((5 - j) as i32);
            assert!((x - expected).abs() < 1e-15);
            assert_eq!(rule_independent_fraction::<f64>(&inst, &rule, j, 1), 0.0);
        }
        let empty = PermutationRule::new(0, vec![]);
        assert_eq!(rule_independent_fraction::<f64>(&inst, &empty, 2, 0), 0.0);
    }

    #[test]
    fn rule_closed_form_matches_rule_oracle() {
        let (inst, rule) = worst_case_instance_with_eps(3, Mass::ratio(1, 3)).unwrap();
        let model = exact_enumerate::<BigRational>(&inst, &Oracle::Rule(rule.clone())).unwrap();
        for j in 0..3 {
            for t in 0..2 {
                assert_eq!(independent_fraction(&model, 0, j, t).unwrap(), rule_independent_fraction::<BigRational>(&inst, &rule, j, t));
            }
        }
        let mc = rule_independent_probability(&rule, &inst, 0, 0, ProbabilityMode::MonteCarlo { samples: 40_000, seed: 5 }).unwrap();
        assert!((mc - 4.0 / 9.0).abs() < 0.01);
    }

    #[test]
    fn run_on_worst_case_sums_tail_powers() {
        let (inst, rule) = worst_case_instance(4, 0.6).unwrap();
        let eps = inst.arrival(0).mass(0).value();
        let spec = EstimatorSpec::new(EstimatorKind::RuleIndependent(rule));
        let out = run_fractional(&inst, &spec, &[0, 1, 0, 1]).unwrap();
        let expected = (1.0 - eps).powi(3) + (1.0 - eps).powi(1);
        assert!((out.y[0] - expected).abs() < 1e-15);
        assert_eq!(out.x[0][1], 0.0);
    }

    #[test]
    fn point_mass_instance_reproduces_the_optimum() {
        let a = TypeDistribution::from_pairs([(vec![0, 1], Mass::one())]);
        let b = TypeDistribution::from_pairs([(vec![0], Mass::one())]);
        let inst = Instance::with_weights(&[1.0, 1.0], vec![a, b]).unwrap();
        for kind in [EstimatorKind::Independent, EstimatorKind::FullyCorrelated, EstimatorKind::EvenMix] {
            let out = run_fractional(&inst, &EstimatorSpec::new(kind), &[0, 0]).unwrap();
            assert_eq!(out.y, vec![1.0, 1.0]);
            assert_eq!(out.x, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        }
    }

    #[test]
    fn windowed_mix_rejects_non_iid() {
        let a = TypeDistribution::from_pairs([(vec![0], Mass::one())]);
        let b = TypeDistribution::from_pairs([(vec![], Mass::one())]);
        let inst = Instance::with_weights(&[1.0], vec![a, b]).unwrap();
        let spec = EstimatorSpec::new(EstimatorKind::WindowedMix { beta: DEFAULT_BETA });
        assert_eq!(Estimator::<f64>::new(&inst, &spec).err(), Some(EstimatorError::NotIID));
        let spec = EstimatorSpec::new(EstimatorKind::WindowedMix { beta: 1.5 });
        assert_eq!(Estimator::<f64>::new(&coin_pair(), &spec).err(), Some(EstimatorError::InvalidBeta(1.5)));
    }

    #[test]
    fn future_types_do_not_change_past_fractions() {
        let inst = coin_pair();
        let spec = EstimatorSpec::new(EstimatorKind::EvenMix).with_policy(PolicyMode::Exchangeable);
        let est = Estimator::<BigRational>::exact(&inst, &spec).unwrap();
        let a = est.run(&[0, 0]).unwrap();
        let b = est.run(&[0, 1]).unwrap();
        assert_eq!(a.x[0][0], b.x[0][0]);
    }
}
