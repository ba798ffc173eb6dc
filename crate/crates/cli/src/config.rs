//! Run configuration: an optional TOML file merged under command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use osm_core::oracle::PolicyMode;
use serde::{Deserialize, Serialize};

/// Every key a config file may set. Flags use the same names with dashes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instance: Option<PathBuf>,
    pub kind: Option<GeneratorKind>,
    pub n: Option<usize>,
    pub mu: Option<f64>,
    pub n_offline: Option<usize>,
    pub types_per_vertex: Option<usize>,
    pub edge_prob: Option<f64>,
    pub weight_min: Option<f64>,
    pub weight_max: Option<f64>,
    pub iid: Option<bool>,
    pub estimator: Option<String>,
    pub beta: Option<f64>,
    pub rule: Option<PathBuf>,
    /// Conditioning sets for the `subset` estimator, one per arrival.
    pub sets: Option<Vec<Vec<usize>>>,
    pub trials: Option<usize>,
    pub exact: Option<bool>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub policy: Option<PolicyMode>,
    pub samples: Option<usize>,
    pub only: Option<Vec<Check>>,
    pub out: Option<PathBuf>,
    pub rule_out: Option<PathBuf>,
    pub curve_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Random,
    Hardness,
    WorstCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Bounds,
    Concavity,
    Experiment,
    Hardness,
    Lemmas,
}

impl Check {
    pub const ALL: [Check; 5] = [Check::Bounds, Check::Concavity, Check::Experiment, Check::Hardness, Check::Lemmas];

    pub fn name(self) -> &'static str {
        match self {
            Check::Bounds => "bounds",
            Check::Concavity => "concavity",
            Check::Experiment => "experiment",
            Check::Hardness => "hardness",
            Check::Lemmas => "lemmas",
        }
    }
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// `self` with every key set in `flags` replaced.
    pub fn merged(mut self, flags: RunConfig) -> Self {
        overlay!(self, flags;
            instance, kind, n, mu, n_offline, types_per_vertex, edge_prob, weight_min, weight_max, iid,
            estimator, beta, rule, sets, trials, exact, mc_samples, seed, policy, samples, only, out,
            rule_out, curve_out,
        );
        self
    }

    pub fn require_seed(&self, why: &str) -> Result<u64> {
        match self.seed {
            Some(seed) => Ok(seed),
            None => bail!("config error: {why} needs a seed (--seed or `seed` in the config file)"),
        }
    }

    /// Hex SHA-256 of the resolved configuration, output paths excluded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let inputs = RunConfig { out: None, rule_out: None, curve_out: None, ..self.clone() };
        let json = serde_json::to_string(&inputs).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: RunConfig = toml::from_str("seed = 3\nestimator = \"even_mix\"\nkind = \"worst-case\"").unwrap();
        let flags = RunConfig { seed: Some(9), ..Default::default() };
        let merged = file.merged(flags);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.estimator.as_deref(), Some("even_mix"));
        assert_eq!(merged.kind, Some(GeneratorKind::WorstCase));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 3").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig { seed: Some(1), ..Default::default() };
        let b = RunConfig { seed: Some(2), ..Default::default() };
        assert_ne!(a.hash(), b.hash());
        let moved = RunConfig { out: Some("x.csv".into()), ..a.clone() };
        assert_eq!(a.hash(), moved.hash());
    }
}
