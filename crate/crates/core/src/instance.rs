//! Stochastic bipartite instances: weighted offline vertices and an ordered
//! sequence of independent online type distributions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::estimators::PermutationRule;
use crate::scalar::Mass;
use crate::seed;

/// Allowed deviation of a floating-point distribution's total mass from one.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InstanceError {
    #[error("offline vertex {id} has negative or non-finite weight {weight}")]
    NegativeWeight { id: usize, weight: f64 },
    #[error("arrival {arrival}: masses sum to {sum}, not 1")]
    MassNotNormalized { arrival: usize, sum: f64 },
    #[error("arrival {arrival}, type {type_id}: neighbor {neighbor} is not an offline id (|L| = {n_offline})")]
    NeighborOutOfRange {
        arrival: usize,
        type_id: usize,
        neighbor: usize,
        n_offline: usize,
    },
    #[error("arrival {arrival}, type {type_id}: negative mass {mass}")]
    NegativeMass {
        arrival: usize,
        type_id: usize,
        mass: f64,
    },
    #[error("offline ids must be 0..{expected}; found {found} at position {position}")]
    BadOfflineId {
        position: usize,
        found: usize,
        expected: usize,
    },
    #[error("arrival {arrival}: {types} types but {masses} masses")]
    LengthMismatch {
        arrival: usize,
        types: usize,
        masses: usize,
    },
    #[error("an instance needs at least one arrival")]
    NoArrivals,
    #[error("mu = {0} is outside (0, 1]")]
    MuOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineVertex {
    pub id: usize,
    pub weight: f64,
}

/// One realization of an online vertex: the offline vertices it is adjacent
/// to. The empty type is an ordinary type with no neighbors.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OnlineType {
    neighbors: Vec<usize>,
}

impl OnlineType {
    pub fn new(mut neighbors: Vec<usize>) -> Self {
        neighbors.sort_unstable();
        neighbors.dedup();
        Self { neighbors }
    }

    pub fn empty() -> Self {
        Self { neighbors: Vec::new() }
    }

    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn contains(&self, u: usize) -> bool {
        self.neighbors.binary_search(&u).is_ok()
    }
}

/// A finite distribution over online types. A type's id is its position in
/// `types`; zero-mass types are kept so ids stay stable, but they are pruned
/// from [`TypeDistribution::support`].
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistribution {
    types: Vec<OnlineType>,
    masses: Vec<Mass>,
}

impl TypeDistribution {
    pub fn new(types: Vec<OnlineType>, masses: Vec<Mass>) -> Self {
        Self { types, masses }
    }

    /// A distribution from `(neighbors, mass)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Vec<usize>, Mass)>) -> Self {
        let (types, masses) = pairs
            .into_iter()
            .map(|(n, m)| (OnlineType::new(n), m))
            .unzip();
        Self { types, masses }
    }

    pub fn types(&self) -> &[OnlineType] {
        &self.types
    }

    pub fn masses(&self) -> &[Mass] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn mass(&self, type_id: usize) -> &Mass {
        &self.masses[type_id]
    }

    pub fn online_type(&self, type_id: usize) -> &OnlineType {
        &self.types[type_id]
    }

    /// Ids of the types with positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.types.len())
            .filter(|&t| !self.masses[t].is_zero())
            .collect()
    }

    fn same_value(&self, other: &TypeDistribution) -> bool {
        self.types == other.types
            && self.masses.len() == other.masses.len()
            && self
                .masses
                .iter()
                .zip(&other.masses)
                .all(|(a, b)| a.same_value(b))
    }

    fn check(&self, arrival: usize, n_offline: usize) -> Result<(), InstanceError> {
        if self.types.len() != self.masses.len() {
            return Err(InstanceError::LengthMismatch {
                arrival,
                types: self.types.len(),
                masses: self.masses.len(),
            });
        }
        for (type_id, t) in self.types.iter().enumerate() {
            if let Some(&neighbor) = t.neighbors.iter().find(|&&v| v >= n_offline) {
                return Err(InstanceError::NeighborOutOfRange {
                    arrival,
                    type_id,
                    neighbor,
                    n_offline,
                });
            }
        }
        for (type_id, m) in self.masses.iter().enumerate() {
            if m.is_negative() || !m.value().is_finite() {
                return Err(InstanceError::NegativeMass {
                    arrival,
                    type_id,
                    mass: m.value(),
                });
            }
        }
        let normalized = match Mass::total(&self.masses) {
            Mass::Exact(total) => total == num_traits::One::one(),
            Mass::Real(total) => (total - 1.0).abs() <= MASS_TOLERANCE,
        };
        if !normalized {
            return Err(InstanceError::MassNotNormalized {
                arrival,
                sum: Mass::total(&self.masses).value(),
            });
        }
        Ok(())
    }
}

/// Offline vertices plus the ordered online arrival distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceDoc", into = "InstanceDoc")]
pub struct Instance {
    offline: Vec<OfflineVertex>,
    arrivals: Vec<TypeDistribution>,
    iid: bool,
}

impl Instance {
    pub fn new(
        offline: Vec<OfflineVertex>,
        arrivals: Vec<TypeDistribution>,
    ) -> Result<Self, InstanceError> {
        let iid = arrivals.windows(2).all(|w| w[0].same_value(&w[1]));
        let instance = Self {
            offline,
            arrivals,
            iid,
        };
        instance.validate()?;
        Ok(instance)
    }

    /// Offline vertices with ids `0..weights.len()`.
    pub fn with_weights(
        weights: &[f64],
        arrivals: Vec<TypeDistribution>,
    ) -> Result<Self, InstanceError> {
        let offline = weights
            .iter()
            .enumerate()
            .map(|(id, &weight)| OfflineVertex { id, weight })
            .collect();
        Self::new(offline, arrivals)
    }

    /// Checks every structural invariant and reports the first violation.
    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.arrivals.is_empty() {
            return Err(InstanceError::NoArrivals);
        }
        for (position, v) in self.offline.iter().enumerate() {
            if v.id != position {
                return Err(InstanceError::BadOfflineId {
                    position,
                    found: v.id,
                    expected: self.offline.len(),
                });
            }
            if !(v.weight >= 0.0) || !v.weight.is_finite() {
                return Err(InstanceError::NegativeWeight {
                    id: v.id,
                    weight: v.weight,
                });
            }
        }
        for (j, d) in self.arrivals.iter().enumerate() {
            d.check(j, self.offline.len())?;
        }
        Ok(())
    }

    pub fn offline(&self) -> &[OfflineVertex] {
        &self.offline
    }

    pub fn arrivals(&self) -> &[TypeDistribution] {
        &self.arrivals
    }

    pub fn arrival(&self, j: usize) -> &TypeDistribution {
        &self.arrivals[j]
    }

    pub fn n_offline(&self) -> usize {
        self.offline.len()
    }

    pub fn n_online(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_iid(&self) -> bool {
        self.iid
    }

    pub fn weights(&self) -> Vec<f64> {
        self.offline.iter().map(|v| v.weight).collect()
    }

    pub fn neighbors(&self, j: usize, type_id: usize) -> &[usize] {
        self.arrivals[j].types[type_id].neighbors()
    }

    /// Positive-mass type ids of every arrival.
    pub fn supports(&self) -> Vec<Vec<usize>> {
        self.arrivals.iter().map(TypeDistribution::support).collect()
    }

    /// Whether `types` names a positive-mass type for each arrival in `indices`.
    pub fn in_support(&self, indices: &[usize], types: &[usize]) -> bool {
        indices.len() == types.len()
            && indices.iter().zip(types).all(|(&j, &t)| {
                j < self.arrivals.len()
                    && t < self.arrivals[j].len()
                    && !self.arrivals[j].masses[t].is_zero()
            })
    }

    /// Probability of a full type vector.
    pub fn realization_mass(&self, types: &[usize]) -> f64 {
        types
            .iter()
            .enumerate()
            .map(|(j, &t)| self.arrivals[j].masses[t].value())
            .product()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Serialize, Deserialize)]
struct TypeDoc {
    neighbors: Vec<usize>,
    mass: Mass,
}

#[derive(Serialize, Deserialize)]
struct DistributionDoc {
    types: Vec<TypeDoc>,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    offline: Vec<OfflineVertex>,
    arrivals: Vec<DistributionDoc>,
}

impl TryFrom<InstanceDoc> for Instance {
    type Error = InstanceError;

    fn try_from(doc: InstanceDoc) -> Result<Self, Self::Error> {
        let arrivals = doc
            .arrivals
            .into_iter()
            .map(|d| TypeDistribution::from_pairs(d.types.into_iter().map(|t| (t.neighbors, t.mass))))
            .collect();
        Instance::new(doc.offline, arrivals)
    }
}

impl From<Instance> for InstanceDoc {
    fn from(instance: Instance) -> Self {
        InstanceDoc {
            offline: instance.offline,
            arrivals: instance
                .arrivals
                .into_iter()
                .map(|d| DistributionDoc {
                    types: d
                        .types
                        .into_iter()
                        .zip(d.masses)
                        .map(|(t, mass)| TypeDoc {
                            neighbors: t.neighbors,
                            mass,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Parameters of [`generate_random`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomInstanceParams {
    pub n_offline: usize,
    pub n_online: usize,
    pub types_per_vertex: usize,
    pub edge_prob: f64,
    pub weight_range: (f64, f64),
    pub iid: bool,
}

impl Default for RandomInstanceParams {
    fn default() -> Self {
        Self {
            n_offline: 3,
            n_online: 3,
            types_per_vertex: 2,
            edge_prob: 0.5,
            weight_range: (1.0, 1.0),
            iid: false,
        }
    }
}

/// Random instance with exact rational masses.
///
/// Each type's neighbor set is drawn by independent coins with `edge_prob`;
/// type masses are proportional to integers drawn from `1..=9`, stored as
/// exact ratios. Weights are uniform on `weight_range`.
pub fn generate_random(params: &RandomInstanceParams, seed: u64) -> Result<Instance, InstanceError> {
    let RandomInstanceParams {
        n_offline,
        n_online,
        types_per_vertex,
        edge_prob,
        weight_range: (w_lo, w_hi),
        iid,
    } = *params;
    if n_offline == 0 || n_online == 0 || types_per_vertex == 0 {
        return Err(InstanceError::InvalidParameter(
            "n_offline, n_online and types_per_vertex must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(InstanceError::InvalidParameter(format!(
            "edge_prob = {edge_prob} is outside [0, 1]"
        )));
    }
    if !(w_lo >= 0.0 && w_lo <= w_hi && w_hi.is_finite()) {
        return Err(InstanceError::InvalidParameter(format!(
            "weight range ({w_lo}, {w_hi}) must satisfy 0 <= lo <= hi"
        )));
    }

    let mut rng = seed::stream(seed, seed::tag("generate_random"), 0);
    let weights: Vec<f64> = (0..n_offline)
        .map(|_| if w_lo == w_hi { w_lo } else { rng.random_range(w_lo..=w_hi) })
        .collect();

    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let shares: Vec<u64> = (0..types_per_vertex).map(|_| rng.random_range(1..=9)).collect();
        let total: u64 = shares.iter().sum();
        TypeDistribution::from_pairs(shares.into_iter().map(|share| {
            let neighbors = (0..n_offline).filter(|_| rng.random_bool(edge_prob)).collect();
            (neighbors, Mass::ratio(share, total))
        }))
    };

    let arrivals = if iid {
        let d = draw(&mut rng);
        vec![d; n_online]
    } else {
        (0..n_online).map(|_| draw(&mut rng)).collect()
    };
    Instance::with_weights(&weights, arrivals)
}

/// Per-arrival realization probability of the worst-case instance:
/// the `eps` with `1 - (1 - eps)^n = mu`.
pub fn worst_case_eps(n: usize, mu: f64) -> f64 {
    if n == 1 {
        mu
    } else {
        -((-mu).ln_1p() / n as f64).exp_m1()
    }
}

/// The worst-case instance: one offline vertex of weight 1 and `n` Bernoulli
/// arrivals, each adjacent to it with probability `eps`, together with the
/// rule that selects the realized arrival with the largest index.
pub fn worst_case_instance(n: usize, mu: f64) -> Result<(Instance, PermutationRule), InstanceError> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(InstanceError::MuOutOfRange(mu));
    }
    worst_case_instance_with_eps(n, Mass::Real(worst_case_eps(n, mu)))
}

/// [`worst_case_instance`] parameterized directly by the per-arrival mass,
/// which may be an exact ratio.
pub fn worst_case_instance_with_eps(
    n: usize,
    eps: Mass,
) -> Result<(Instance, PermutationRule), InstanceError> {
    if n == 0 {
        return Err(InstanceError::InvalidParameter("n must be at least 1".into()));
    }
    let rest = Mass::one().minus(&eps);
    let rest = match rest {
        Mass::Real(_) => Mass::Real(1.0 - eps.value()),
        exact => exact,
    };
    let d = TypeDistribution::from_pairs([(vec![0], eps), (vec![], rest)]);
    let instance = Instance::with_weights(&[1.0], vec![d; n])?;
    let rule = PermutationRule::new(0, (0..n).rev().map(|i| (i, 0)).collect());
    Ok((instance, rule))
}

/// The two-by-two instance on which no fractional algorithm beats 3/4.
pub fn hardness_instance() -> Instance {
    let first = TypeDistribution::from_pairs([(vec![0, 1], Mass::one())]);
    let second = TypeDistribution::from_pairs([(vec![0], Mass::ratio(1, 2)), (vec![1], Mass::ratio(1, 2))]);
    Instance::with_weights(&[1.0, 1.0], vec![first, second]).expect("hardness instance is valid")
}
