//! The offline optimum and its conditional match probabilities.
//!
//! [`max_weight_matching`] solves one realized graph. [`ExactModel`]
//! enumerates every type vector (and, in exchangeable mode, every online
//! priority order) and answers conditional queries exactly;
//! [`MonteCarloModel`] answers the same queries by resampling the
//! unconditioned arrivals.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::estimators::{permutation_select, PermutationRule, RuleError};
use crate::instance::Instance;
use crate::scalar::Scalar;
use crate::seed;

/// Default cap on matching evaluations for exact enumeration.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Default additive error target for Monte-Carlo conditionals.
pub const DEFAULT_MC_EPSILON: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("exact enumeration needs {required} evaluations, budget is {budget}")]
    BudgetExceeded { required: u64, budget: u64 },
    #[error("the conditioning event has zero probability")]
    EmptyConditioning,
    #[error("instance is not i.i.d.")]
    NotIID,
    #[error("online index {index} out of range (n = {n})")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("offline vertex {0} out of range")]
    OfflineOutOfRange(usize),
    #[error("index set must contain the target arrival {0}")]
    TargetNotConditioned(usize),
    #[error("index set and type vector differ in length")]
    ConditioningMismatch,
    #[error("window length {ell} outside 1..={n}")]
    WindowOutOfRange { ell: usize, n: usize },
    #[error(transparent)]
    Rule(#[from] RuleError),
}

/// Samples so that three standard deviations of a frequency stay below `eps`.
pub fn samples_for_error(eps: f64) -> usize {
    (2.25 / (eps * eps)).ceil() as usize
}

/// Offline weights and one realized neighbor set per arrival.
#[derive(Debug, Clone)]
pub struct RealizedGraph<'a> {
    weights: &'a [f64],
    neighbors: Vec<&'a [usize]>,
}

impl<'a> RealizedGraph<'a> {
    pub fn new(weights: &'a [f64], neighbors: Vec<&'a [usize]>) -> Self {
        debug_assert!(neighbors.iter().flat_map(|n| n.iter()).all(|&u| u < weights.len()));
        Self { weights, neighbors }
    }

    /// The graph realized by `types` (one type id per arrival).
    pub fn from_types(instance: &'a Instance, weights: &'a [f64], types: &[usize]) -> Self {
        let neighbors = types
            .iter()
            .enumerate()
            .map(|(j, &t)| instance.neighbors(j, t))
            .collect();
        Self::new(weights, neighbors)
    }

    pub fn n_offline(&self) -> usize {
        self.weights.len()
    }

    pub fn n_online(&self) -> usize {
        self.neighbors.len()
    }
}

/// The offline optimum, one entry per offline vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionOutcome {
    pub matched: Vec<Option<usize>>,
}

impl SelectionOutcome {
    pub fn value(&self, weights: &[f64]) -> f64 {
        self.matched
            .iter()
            .zip(weights)
            .filter(|(m, _)| m.is_some())
            .map(|(_, w)| w)
            .sum()
    }
}

/// Order in which augmenting-path search visits online vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TieBreakPolicy {
    /// Online vertices in index order.
    Canonical,
    /// `Priority(order)` visits `order[0]` first. Must be a permutation.
    Priority(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    Canonical,
    /// The optimum is randomized by a uniform online priority order.
    Exchangeable,
}

/// Maximum-weight matching of a realized graph.
///
/// Offline vertices are inserted by decreasing weight (ties by id) with an
/// augmenting-path search. Matchable offline sets form a transversal matroid,
/// so the greedy insertion order yields a maximum-weight matching.
pub fn max_weight_matching(graph: &RealizedGraph<'_>, policy: &TieBreakPolicy) -> SelectionOutcome {
    let n = graph.n_online();
    let l = graph.n_offline();
    let order: Vec<usize> = match policy {
        TieBreakPolicy::Canonical => (0..n).collect(),
        TieBreakPolicy::Priority(order) => {
            debug_assert_eq!(order.len(), n);
            order.clone()
        }
    };
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); l];
    for &v in &order {
        for &u in graph.neighbors[v] {
            adj[u].push(v);
        }
    }
    let mut offline_order: Vec<usize> = (0..l).collect();
    offline_order.sort_by(|&a, &b| graph.weights[b].total_cmp(&graph.weights[a]).then(a.cmp(&b)));

    let mut online_match: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    for u in offline_order {
        visited.iter_mut().for_each(|v| *v = false);
        augment(u, &adj, &mut visited, &mut online_match);
    }

    let mut matched = vec![None; l];
    for (v, m) in online_match.iter().enumerate() {
        if let Some(u) = *m {
            matched[u] = Some(v);
        }
    }
    SelectionOutcome { matched }
}

fn augment(u: usize, adj: &[Vec<usize>], visited: &mut [bool], online_match: &mut [Option<usize>]) -> bool {
    for &v in &adj[u] {
        if visited[v] {
            continue;
        }
        visited[v] = true;
        let free = match online_match[v] {
            None => true,
            Some(w) => augment(w, adj, visited, online_match),
        };
        if free {
            online_match[v] = Some(u);
            return true;
        }
    }
    false
}

/// The selection rule whose match probabilities the estimators track.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    /// The offline maximum-weight matching under a tie-breaking mode.
    Matching(PolicyMode),
    /// A permutation rule acting on its single offline vertex.
    Rule(PermutationRule),
}

impl Oracle {
    pub fn validate(&self, instance: &Instance) -> Result<(), OracleError> {
        if let Oracle::Rule(rule) = self {
            rule.validate(instance)?;
        }
        Ok(())
    }

    fn exchangeable(&self) -> bool {
        matches!(self, Oracle::Matching(PolicyMode::Exchangeable))
    }

    /// The selection for one type vector and one priority order.
    pub fn select(&self, instance: &Instance, weights: &[f64], types: &[usize], policy: &TieBreakPolicy) -> SelectionOutcome {
        match self {
            Oracle::Matching(_) => {
                let graph = RealizedGraph::from_types(instance, weights, types);
                max_weight_matching(&graph, policy)
            }
            Oracle::Rule(rule) => {
                let mut matched = vec![None; instance.n_offline()];
                matched[rule.offline()] = permutation_select(rule, types);
                SelectionOutcome { matched }
            }
        }
    }
}

/// One type vector with its probability and the probability, over the
/// oracle's own randomness, that each edge `(u, v_j)` is selected. The
/// match vector is dense with entry `u * n + j`.
#[derive(Debug, Clone)]
pub struct Atom<S> {
    pub types: Vec<usize>,
    pub prob: S,
    pub match_prob: Vec<S>,
}

/// Conditional match probabilities answered by an exact or sampled model.
pub trait ConditionalEngine<S: Scalar>: Send + Sync {
    fn instance(&self) -> &Instance;

    fn oracle(&self) -> &Oracle;

    /// `Pr[(u, v_j) ∈ OPT | t_I = types]` for every `(u, j)`, dense with
    /// entry `u * n + j`. `indices` must be sorted and distinct.
    fn conditional(&self, indices: &[usize], types: &[usize]) -> Result<Arc<Vec<S>>, OracleError>;
}

/// Exact joint distribution of type vectors and oracle selections.
pub struct ExactModel<S: Scalar> {
    instance: Instance,
    oracle: Oracle,
    atoms: Vec<Atom<S>>,
    tables: Mutex<HashMap<Vec<usize>, Arc<CondTable<S>>>>,
}

/// Conditional match probabilities for one index set, keyed by the types
/// on that set. Only positive-mass keys are present.
pub struct CondTable<S> {
    entries: HashMap<Vec<usize>, (S, Arc<Vec<S>>)>,
}

impl<S: Scalar> CondTable<S> {
    /// Probability of the conditioning event `t_I = key`.
    pub fn mass(&self, key: &[usize]) -> Option<&S> {
        self.entries.get(key).map(|(m, _)| m)
    }

    pub fn get(&self, key: &[usize]) -> Option<&Arc<Vec<S>>> {
        self.entries.get(key).map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<usize>, &S, &Arc<Vec<S>>)> {
        self.entries.iter().map(|(k, (m, v))| (k, m, v))
    }
}

/// Number of oracle evaluations needed to enumerate `instance` exactly.
pub fn enumeration_cost(instance: &Instance, oracle: &Oracle) -> u64 {
    let mut cost = instance
        .supports()
        .iter()
        .fold(1u64, |acc, s| acc.saturating_mul(s.len() as u64));
    if oracle.exchangeable() {
        cost = (1..=instance.n_online() as u64).fold(cost, |acc, k| acc.saturating_mul(k));
    }
    cost
}

/// Exact model with the default budget.
pub fn exact_enumerate<S: Scalar>(instance: &Instance, oracle: &Oracle) -> Result<ExactModel<S>, OracleError> {
    ExactModel::with_budget(instance, oracle, DEFAULT_BUDGET)
}

impl<S: Scalar> ExactModel<S> {
    pub fn with_budget(instance: &Instance, oracle: &Oracle, budget: u64) -> Result<Self, OracleError> {
        oracle.validate(instance)?;
        let required = enumeration_cost(instance, oracle);
        if required > budget {
            return Err(OracleError::BudgetExceeded { required, budget });
        }
        let n = instance.n_online();
        let l = instance.n_offline();
        let weights = instance.weights();
        let priorities: Vec<TieBreakPolicy> = if oracle.exchangeable() {
            (0..n).permutations(n).map(TieBreakPolicy::Priority).collect()
        } else {
            vec![TieBreakPolicy::Canonical]
        };
        let denom = priorities.len() as u64;

        let vectors: Vec<Vec<usize>> = instance.supports().into_iter().multi_cartesian_product().collect();
        let atoms = vectors
            .into_par_iter()
            .map(|types| {
                let mut counts = vec![0u64; l * n];
                for policy in &priorities {
                    let outcome = oracle.select(instance, &weights, &types, policy);
                    for (u, m) in outcome.matched.iter().enumerate() {
                        if let Some(j) = *m {
                            counts[u * n + j] += 1;
                        }
                    }
                }
                let prob = types
                    .iter()
                    .enumerate()
                    .fold(S::one(), |acc, (j, &t)| acc * S::from_mass(instance.arrival(j).mass(t)));
                let match_prob = counts
                    .into_iter()
                    .map(|c| if c == 0 { S::zero() } else { S::from_ratio(c, denom) })
                    .collect();
                Atom { types, prob, match_prob }
            })
            .collect();

        Ok(Self {
            instance: instance.clone(),
            oracle: oracle.clone(),
            atoms,
            tables: Mutex::new(HashMap::new()),
        })
    }

    pub fn atoms(&self) -> &[Atom<S>] {
        &self.atoms
    }

    /// `Pr[(u, v_j) ∈ OPT]`.
    pub fn match_probability(&self, u: usize, j: usize) -> S {
        let n = self.instance.n_online();
        self.atoms
            .iter()
            .fold(S::zero(), |acc, a| acc + a.prob.clone() * a.match_prob[u * n + j].clone())
    }

    /// `Pr[u matched in OPT]`.
    pub fn matched_probability(&self, u: usize) -> S {
        (0..self.instance.n_online()).fold(S::zero(), |acc, j| acc + self.match_probability(u, j))
    }

    /// The conditional table for a sorted index set, built on first use.
    pub fn table(&self, indices: &[usize]) -> Arc<CondTable<S>> {
        if let Some(t) = self.tables.lock().expect("table cache").get(indices) {
            return Arc::clone(t);
        }
        let table = Arc::new(self.build_table(indices));
        self.tables
            .lock()
            .expect("table cache")
            .entry(indices.to_vec())
            .or_insert(table)
            .clone()
    }

    fn build_table(&self, indices: &[usize]) -> CondTable<S> {
        let mut sums: HashMap<Vec<usize>, (S, Vec<S>)> = HashMap::new();
        for atom in &self.atoms {
            let key: Vec<usize> = indices.iter().map(|&i| atom.types[i]).collect();
            let entry = sums
                .entry(key)
                .or_insert_with(|| (S::zero(), vec![S::zero(); atom.match_prob.len()]));
            entry.0 = entry.0.clone() + atom.prob.clone();
            for (acc, m) in entry.1.iter_mut().zip(&atom.match_prob) {
                if !m.is_zero() {
                    *acc = acc.clone() + atom.prob.clone() * m.clone();
                }
            }
        }
        let entries = sums
            .into_iter()
            .filter(|(_, (mass, _))| !mass.is_zero())
            .map(|(key, (mass, sums))| {
                let probs = sums.into_iter().map(|s| s / mass.clone()).collect();
                (key, (mass, Arc::new(probs)))
            })
            .collect();
        CondTable { entries }
    }

    /// `Pr[(u, v_j) ∈ OPT | t_I = types]`.
    pub fn cond_match_prob(&self, u: usize, j: usize, indices: &[usize], types: &[usize]) -> Result<S, OracleError> {
        check_target(&self.instance, u, j, indices)?;
        let n = self.instance.n_online();
        Ok(self.conditional(indices, types)?[u * n + j].clone())
    }
}

impl<S: Scalar> ConditionalEngine<S> for ExactModel<S> {
    fn instance(&self) -> &Instance {
        &self.instance
    }

    fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    fn conditional(&self, indices: &[usize], types: &[usize]) -> Result<Arc<Vec<S>>, OracleError> {
        let (indices, types) = normalize_conditioning(&self.instance, indices, types)?;
        self.table(&indices)
            .get(&types)
            .cloned()
            .ok_or(OracleError::EmptyConditioning)
    }
}

fn check_target(instance: &Instance, u: usize, j: usize, indices: &[usize]) -> Result<(), OracleError> {
    if u >= instance.n_offline() {
        return Err(OracleError::OfflineOutOfRange(u));
    }
    if j >= instance.n_online() {
        return Err(OracleError::IndexOutOfRange { index: j, n: instance.n_online() });
    }
    if !indices.contains(&j) {
        return Err(OracleError::TargetNotConditioned(j));
    }
    Ok(())
}

/// Sorts the conditioning by index and checks it against the supports.
fn normalize_conditioning(
    instance: &Instance,
    indices: &[usize],
    types: &[usize],
) -> Result<(Vec<usize>, Vec<usize>), OracleError> {
    if indices.len() != types.len() {
        return Err(OracleError::ConditioningMismatch);
    }
    let n = instance.n_online();
    if let Some(&index) = indices.iter().find(|&&i| i >= n) {
        return Err(OracleError::IndexOutOfRange { index, n });
    }
    let mut pairs: Vec<(usize, usize)> = indices.iter().copied().zip(types.iter().copied()).collect();
    pairs.sort_unstable();
    if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(OracleError::ConditioningMismatch);
    }
    let (indices, types): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
    if !instance.in_support(&indices, &types) {
        return Err(OracleError::EmptyConditioning);
    }
    Ok((indices, types))
}

/// `P_ℓ(s)`: probability that `u` is matched to one of the first `ell`
/// arrivals given their types are `s`. Requires an i.i.d. instance.
pub fn window_match_probability<S: Scalar>(
    model: &ExactModel<S>,
    u: usize,
    ell: usize,
    s: &[usize],
) -> Result<S, OracleError> {
    let instance = ConditionalEngine::instance(model);
    if !instance.is_iid() {
        return Err(OracleError::NotIID);
    }
    let n = instance.n_online();
    if ell == 0 || ell > n || s.len() != ell {
        return Err(OracleError::WindowOutOfRange { ell, n });
    }
    if u >= instance.n_offline() {
        return Err(OracleError::OfflineOutOfRange(u));
    }
    let indices: Vec<usize> = (0..ell).collect();
    let probs = model.conditional(&indices, s)?;
    Ok((0..ell).fold(S::zero(), |acc, j| acc + probs[u * n + j].clone()))
}

/// Monte-Carlo conditionals. Sample `k` of the query `(I, t_I)` uses the
/// stream keyed by `(seed, hash(I, t_I), k)`, so a query's answer does not
/// depend on scheduling or on which other queries were made. Answers are
/// memoized.
pub struct MonteCarloModel {
    instance: Instance,
    oracle: Oracle,
    samples: usize,
    seed: u64,
    cumulative: Vec<Vec<(f64, usize)>>,
    cache: Mutex<HashMap<(Vec<usize>, Vec<usize>), Arc<Vec<f64>>>>,
}

impl MonteCarloModel {
    pub fn new(instance: &Instance, oracle: &Oracle, samples: usize, seed: u64) -> Result<Self, OracleError> {
        oracle.validate(instance)?;
        Ok(Self {
            instance: instance.clone(),
            oracle: oracle.clone(),
            samples: samples.max(1),
            seed,
            cumulative: cumulative_masses(instance),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    fn estimate(&self, indices: &[usize], types: &[usize]) -> Vec<f64> {
        let n = self.instance.n_online();
        let l = self.instance.n_offline();
        let weights = self.instance.weights();
        let mut fixed = vec![None; n];
        for (&i, &t) in indices.iter().zip(types) {
            fixed[i] = Some(t);
        }
        let call: Vec<u64> = std::iter::once(seed::tag("cond_match_prob"))
            .chain(indices.iter().map(|&i| i as u64))
            .chain(std::iter::once(u64::MAX))
            .chain(types.iter().map(|&t| t as u64))
            .collect();
        let call_id = seed::mix(&call);
        let exchangeable = self.oracle.exchangeable();

        let counts = (0..self.samples as u64)
            .into_par_iter()
            .fold(
                || vec![0u64; l * n],
                |mut counts, k| {
                    let mut rng = seed::stream(self.seed, call_id, k);
                    let sample: Vec<usize> = (0..n)
                        .map(|j| fixed[j].unwrap_or_else(|| draw_type(&self.cumulative[j], &mut rng)))
                        .collect();
                    let policy = if exchangeable {
                        let mut order: Vec<usize> = (0..n).collect();
                        order.shuffle(&mut rng);
                        TieBreakPolicy::Priority(order)
                    } else {
                        TieBreakPolicy::Canonical
                    };
                    let outcome = self.oracle.select(&self.instance, &weights, &sample, &policy);
                    for (u, m) in outcome.matched.iter().enumerate() {
                        if let Some(j) = *m {
                            counts[u * n + j] += 1;
                        }
                    }
                    counts
                },
            )
            .reduce(
                || vec![0u64; l * n],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        counts.into_iter().map(|c| c as f64 / self.samples as f64).collect()
    }
}

impl ConditionalEngine<f64> for MonteCarloModel {
    fn instance(&self) -> &Instance {
        &self.instance
    }

    fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    fn conditional(&self, indices: &[usize], types: &[usize]) -> Result<Arc<Vec<f64>>, OracleError> {
        let key = normalize_conditioning(&self.instance, indices, types)?;
        if let Some(v) = self.cache.lock().expect("mc cache").get(&key) {
            return Ok(Arc::clone(v));
        }
        let probs = Arc::new(self.estimate(&key.0, &key.1));
        Ok(self
            .cache
            .lock()
            .expect("mc cache")
            .entry(key)
            .or_insert(probs)
            .clone())
    }
}

/// Per arrival, positive-mass types with their running mass totals.
pub(crate) fn cumulative_masses(instance: &Instance) -> Vec<Vec<(f64, usize)>> {
    instance
        .arrivals()
        .iter()
        .map(|d| {
            let mut acc = 0.0;
            d.support()
                .into_iter()
                .map(|t| {
                    acc += d.mass(t).value();
                    (acc, t)
                })
                .collect()
        })
        .collect()
}

pub(crate) fn draw_type<R: Rng>(cumulative: &[(f64, usize)], rng: &mut R) -> usize {
    let total = cumulative.last().map_or(1.0, |c| c.0);
    let x: f64 = rng.random::<f64>() * total;
    cumulative
        .iter()
        .find(|(c, _)| x < *c)
        .unwrap_or_else(|| cumulative.last().expect("nonempty support"))
        .1
}

/// How a conditional probability is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbabilityMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// `Pr[(u, v_j) ∈ OPT | t_I = types]` as a one-off query.
pub fn cond_match_prob(
    instance: &Instance,
    u: usize,
    j: usize,
    indices: &[usize],
    types: &[usize],
    mode: ProbabilityMode,
    oracle: &Oracle,
) -> Result<f64, OracleError> {
    check_target(instance, u, j, indices)?;
    let n = instance.n_online();
    let probs = match mode {
        ProbabilityMode::Exact => exact_enumerate::<f64>(instance, oracle)?.conditional(indices, types)?,
        ProbabilityMode::MonteCarlo { samples, seed } => {
            MonteCarloModel::new(instance, oracle, samples, seed)?.conditional(indices, types)?
        }
    };
    Ok(probs[u * n + j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::TypeDistribution;
    use crate::scalar::Mass;
    use num_rational::BigRational;

    fn r(a: u64, b: u64) -> BigRational {
        <BigRational as Scalar>::from_ratio(a, b)
    }

    fn bernoulli_pair(q: Mass) -> Instance {
        let rest = Mass::one().minus(&q);
        let d = TypeDistribution::from_pairs([(vec![0], q), (vec![], rest)]);
        Instance::with_weights(&[1.0], vec![d.clone(), d]).unwrap()
    }

    fn brute_force(weights: &[f64], neighbors: &[&[usize]]) -> f64 {
        fn go(j: usize, used: &mut Vec<bool>, weights: &[f64], neighbors: &[&[usize]]) -> f64 {
            if j == neighbors.len() {
                return 0.0;
            }
            let mut best = go(j + 1, used, weights, neighbors);
            for &u in neighbors[j] {
                if !used[u] {
                    used[u] = true;
                    best = best.max(weights[u] + go(j + 1, used, weights, neighbors));
                    used[u] = false;
                }
            }
            best
        }
        go(0, &mut vec![false; weights.len()], weights, neighbors)
    }

    #[test]
    fn empty_graph_matches_nothing() {
        let w = [1.0, 2.0];
        let g = RealizedGraph::new(&w, vec![&[], &[]]);
        let out = max_weight_matching(&g, &TieBreakPolicy::Canonical);
        assert_eq!(out.matched, vec![None, None]);
        assert_eq!(out.value(&w), 0.0);
    }

    #[test]
    fn heavier_vertex_wins_contention() {
        let w = [1.0, 5.0];
        let g = RealizedGraph::new(&w, vec![&[0, 1]]);
        let out = max_weight_matching(&g, &TieBreakPolicy::Canonical);
        assert_eq!(out.matched, vec![None, Some(0)]);
    }

    #[test]
    fn augmenting_path_reroutes_earlier_choice() {
        let w = [3.0, 2.0];
        // v0 adjacent to both, v1 only to u0: u0 first takes v0, then u1 forces u0 to v1.
        let g = RealizedGraph::new(&w, vec![&[0, 1], &[0]]);
        let out = max_weight_matching(&g, &TieBreakPolicy::Canonical);
        assert_eq!(out.value(&w), 5.0);
        assert_eq!(out.matched, vec![Some(1), Some(0)]);
    }

    #[test]
    fn priority_order_breaks_ties() {
        let w = [1.0];
        let g = RealizedGraph::new(&w, vec![&[0], &[0], &[0]]);
        let first = max_weight_matching(&g, &TieBreakPolicy::Canonical);
        assert_eq!(first.matched, vec![Some(0)]);
        let last = max_weight_matching(&g, &TieBreakPolicy::Priority(vec![2, 0, 1]));
        assert_eq!(last.matched, vec![Some(2)]);
    }

    #[test]
    fn matches_brute_force_on_random_graphs() {
        let mut rng = seed::stream(3, seed::tag("matching-test"), 0);
        for _ in 0..300 {
            let l = rng.random_range(1..=5);
            let n = rng.random_range(1..=5);
            let w: Vec<f64> = (0..l).map(|_| rng.random_range(0..4) as f64).collect();
            let nb: Vec<Vec<usize>> = (0..n)
                .map(|_| (0..l).filter(|_| rng.random_bool(0.4)).collect())
                .collect();
            let refs: Vec<&[usize]> = nb.iter().map(Vec::as_slice).collect();
            let g = RealizedGraph::new(&w, refs.clone());
            let out = max_weight_matching(&g, &TieBreakPolicy::Canonical);
            assert_eq!(out.value(&w), brute_force(&w, &refs));
            for (u, m) in out.matched.iter().enumerate() {
                if let Some(j) = m {
                    assert!(nb[*j].contains(&u));
                }
            }
        }
    }

    #[test]
    fn single_arrival_atoms_carry_type_masses() {
        let d = TypeDistribution::from_pairs([(vec![0], Mass::ratio(1, 3)), (vec![], Mass::ratio(2, 3))]);
        let inst = Instance::with_weights(&[1.0], vec![d]).unwrap();
        let model = exact_enumerate::<BigRational>(&inst, &Oracle::Matching(PolicyMode::Canonical)).unwrap();
        assert_eq!(model.atoms().len(), 2);
        let masses: Vec<_> = model.atoms().iter().map(|a| a.prob.clone()).collect();
        assert!(masses.contains(&r(1, 3)));
        assert!(masses.contains(&r(2, 3)));
    }

    #[test]
    fn union_probability_of_two_coins() {
        let inst = bernoulli_pair(Mass::ratio(1, 3));
        let model = exact_enumerate::<BigRational>(&inst, &Oracle::Matching(PolicyMode::Canonical)).unwrap();
        assert_eq!(model.matched_probability(0), r(5, 9));
    }

    #[test]
    fn exchangeable_splits_ties_evenly() {
        let inst = bernoulli_pair(Mass::ratio(1, 2));
        let model = exact_enumerate::<BigRational>(&inst, &Oracle::Matching(PolicyMode::Exchangeable)).unwrap();
        assert_eq!(model.match_probability(0, 0), r(3, 8));
        assert_eq!(model.match_probability(0, 1), r(3, 8));
        assert_eq!(model.cond_match_prob(0, 0, &[0], &[0]).unwrap(), r(3, 4));
        assert_eq!(model.cond_match_prob(0, 0, &[0], &[1]).unwrap(), r(0, 1));
    }

    #[test]
    fn window_probabilities_on_coin_pair() {
        let inst = bernoulli_pair(Mass::ratio(1, 2));
        let model = exact_enumerate::<BigRational>(&inst, &Oracle::Matching(PolicyMode::Exchangeable)).unwrap();
        assert_eq!(window_match_probability(&model, 0, 1, &[0]).unwrap(), r(3, 4));
        assert_eq!(window_match_probability(&model, 0, 1, &[1]).unwrap(), r(0, 1));
        assert_eq!(window_match_probability(&model, 0, 2, &[0, 1]).unwrap(), r(1, 1));
    }

    #[test]
    fn forced_match_conditionals() {
        let d = TypeDistribution::from_pairs([(vec![0], Mass::Real(0.3)), (vec![], Mass::Real(0.7))]);
        let inst = Instance::with_weights(&[1.0], vec![d]).unwrap();
        let oracle = Oracle::Matching(PolicyMode::Canonical);
        assert_eq!(cond_match_prob(&inst, 0, 0, &[0], &[0], ProbabilityMode::Exact, &oracle).unwrap(), 1.0);
        assert_eq!(cond_match_prob(&inst, 0, 0, &[0], &[1], ProbabilityMode::Exact, &oracle).unwrap(), 0.0);
        let mc = ProbabilityMode::MonteCarlo { samples: 100, seed: 1 };
        assert_eq!(cond_match_prob(&inst, 0, 0, &[0], &[0], mc, &oracle).unwrap(), 1.0);
    }

    #[test]
    fn zero_mass_conditioning_is_an_error() {
        let d = TypeDistribution::from_pairs([(vec![0], Mass::zero()), (vec![], Mass::one())]);
        let inst = Instance::with_weights(&[1.0], vec![d]).unwrap();
        let oracle = Oracle::Matching(PolicyMode::Canonical);
        assert_eq!(
            cond_match_prob(&inst, 0, 0, &[0], &[0], ProbabilityMode::Exact, &oracle),
            Err(OracleError::EmptyConditioning)
        );
        assert_eq!(
            cond_match_prob(&inst, 0, 0, &[], &[], ProbabilityMode::Exact, &oracle),
            Err(OracleError::TargetNotConditioned(0))
        );
    }

    #[test]
    fn budget_is_enforced() {
        let inst = bernoulli_pair(Mass::ratio(1, 2));
        let oracle = Oracle::Matching(PolicyMode::Exchangeable);
        assert_eq!(enumeration_cost(&inst, &oracle), 8);
        let err = ExactModel::<f64>::with_budget(&inst, &oracle, 7).err().unwrap();
        assert_eq!(err, OracleError::BudgetExceeded { required: 8, budget: 7 });
    }

    #[test]
    fn monte_carlo_is_deterministic_and_close() {
        let inst = bernoulli_pair(Mass::ratio(1, 2));
        let oracle = Oracle::Matching(PolicyMode::Exchangeable);
        let mode = ProbabilityMode::MonteCarlo { samples: samples_for_error(0.01), seed: 9 };
        let a = cond_match_prob(&inst, 0, 0, &[0], &[0], mode, &oracle).unwrap();
        let b = cond_match_prob(&inst, 0, 0, &[0], &[0], mode, &oracle).unwrap();
        assert_eq!(a, b);
        assert!((a - 0.75).abs() < 0.01);
    }

    #[test]
    fn window_requires_iid() {
        let a = TypeDistribution::from_pairs([(vec![0], Mass::ratio(1, 2)), (vec![], Mass::ratio(1, 2))]);
        let b = TypeDistribution::from_pairs([(vec![0], Mass::one())]);
        let inst = Instance::with_weights(&[1.0], vec![a, b]).unwrap();
        let model = exact_enumerate::<f64>(&inst, &Oracle::Matching(PolicyMode::Exchangeable)).unwrap();
        assert_eq!(window_match_probability(&model, 0, 1, &[0]), Err(OracleError::NotIID));
    }
}
