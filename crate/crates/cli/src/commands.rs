use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use osm_core::analysis::{
    builtin_bounds, case_ratio, check_warmup_lemmas, check_window_identities, curve_minima, curve_to_csv,
    default_mu_grid, hardness_search, verify_lower_bound, worst_case_experiment, Case, CrossMoment,
    DEFAULT_EXPERIMENT_N, DEFAULT_EXPERIMENT_SAMPLES, LEMMA_TOLERANCE,
};
use osm_core::estimators::{EstimatorKind, EstimatorSpec, IndexSelector, PermutationRule, DEFAULT_BETA};
use osm_core::evaluation::{check_p_concavity, ocs_guarantee, ratio_report, Trials, FD_TOLERANCE};
use osm_core::instance::{
    generate_random, hardness_instance, worst_case_instance, Instance, RandomInstanceParams,
};
use osm_core::oracle::{PolicyMode, ProbabilityMode};
use osm_core::seed;
use osm_core::BigRational;

use crate::config::{Check, GeneratorKind, RunConfig};

/// `#` metadata lines that open every CSV the tool writes.
fn metadata(command: &str, config: &RunConfig, seed: Option<u64>, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    writeln!(out, "# osm {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(out, "# command: {command}").unwrap();
    writeln!(out, "# config-sha256: {}", config.hash()).unwrap();
    match seed {
        Some(s) => writeln!(out, "# seed: {s}").unwrap(),
        None => writeln!(out, "# seed: none").unwrap(),
    }
    for (k, v) in extra {
        writeln!(out, "# {k}: {v}").unwrap();
    }
    out
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Plain decimals in the usual range, scientific notation outside it.
fn fmt_num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-4..1e6).contains(&x.abs()) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the instance described by the generator keys of `config`, with
/// the worst-case rule when there is one.
fn generated(config: &RunConfig, kind: GeneratorKind) -> Result<(Instance, Option<PermutationRule>)> {
    Ok(match kind {
        GeneratorKind::Hardness => (hardness_instance(), None),
        GeneratorKind::WorstCase => {
            let n = config.n.unwrap_or(DEFAULT_EXPERIMENT_N);
            let mu = config.mu.ok_or_else(|| anyhow!("config error: worst-case generation needs --mu"))?;
            let (instance, rule) = worst_case_instance(n, mu)?;
            (instance, Some(rule))
        }
        GeneratorKind::Random => {
            let seed = config.require_seed("random generation")?;
            let defaults = RandomInstanceParams::default();
            let params = RandomInstanceParams {
                n_offline: config.n_offline.unwrap_or(defaults.n_offline),
                n_online: config.n.unwrap_or(defaults.n_online),
                types_per_vertex: config.types_per_vertex.unwrap_or(defaults.types_per_vertex),
                edge_prob: config.edge_prob.unwrap_or(defaults.edge_prob),
                weight_range: (
                    config.weight_min.unwrap_or(defaults.weight_range.0),
                    config.weight_max.unwrap_or(defaults.weight_range.1),
                ),
                iid: config.iid.unwrap_or(defaults.iid),
            };
            (generate_random(&params, seed)?, None)
        }
    })
}

fn default_rule_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.rule.json"))
}

pub fn generate(config: &RunConfig) -> Result<()> {
    let kind = config.kind.ok_or_else(|| anyhow!("config error: generate needs --kind"))?;
    if config.instance.is_some() {
        bail!("config error: generate takes --kind, not --instance");
    }
    let out = config.out.as_deref().ok_or_else(|| anyhow!("config error: generate needs --out"))?;
    let (instance, rule) = generated(config, kind)?;
    instance.validate()?;
    emit(Some(out), &(instance.to_json() + "\n"))?;
    if let Some(rule) = rule {
        let path = config.rule_out.clone().unwrap_or_else(|| default_rule_path(out));
        emit(Some(&path), &(serde_json::to_string_pretty(&rule)? + "\n"))?;
        eprintln!("wrote {} and {}", out.display(), path.display());
    } else {
        eprintln!("wrote {}", out.display());
    }
    Ok(())
}

fn read_rule(path: &Path) -> Result<PermutationRule> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading rule {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing rule {}", path.display()))
}

fn estimator_kind(config: &RunConfig, generated_rule: Option<PermutationRule>) -> Result<EstimatorKind> {
    let name = config.estimator.as_deref().ok_or_else(|| anyhow!("config error: ratio needs --estimator"))?;
    Ok(match name {
        "independent" => EstimatorKind::Independent,
        "fully_correlated" => EstimatorKind::FullyCorrelated,
        "even_mix" => EstimatorKind::EvenMix,
        "windowed_mix" => EstimatorKind::WindowedMix { beta: config.beta.unwrap_or(DEFAULT_BETA) },
        "subset" => {
            let sets = config.sets.clone().ok_or_else(|| anyhow!("config error: the subset estimator needs `sets`"))?;
            EstimatorKind::Subset(IndexSelector::Sets(sets))
        }
        "rule_independent" => {
            let rule = match (&config.rule, generated_rule) {
                (Some(path), _) => read_rule(path)?,
                (None, Some(rule)) => rule,
                (None, None) => bail!("config error: rule_independent needs --rule"),
            };
            EstimatorKind::RuleIndependent(rule)
        }
        other => bail!(
            "config error: unknown estimator {other:?} (independent, fully_correlated, even_mix, windowed_mix, subset, rule_independent)"
        ),
    })
}

pub fn ratio(config: &RunConfig) -> Result<()> {
    let (instance, rule, source) = match (&config.instance, config.kind) {
        (Some(_), Some(_)) => bail!("config error: give either --instance or --kind, not both"),
        (None, None) => bail!("config error: ratio needs --instance or --kind"),
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading instance {}", path.display()))?;
            let instance = Instance::from_json(&text).with_context(|| format!("parsing instance {}", path.display()))?;
            (instance, None, format!("file sha256 {}", sha256_hex(text.as_bytes())))
        }
        (None, Some(kind)) => {
            let (instance, rule) = generated(config, kind)?;
            let hash = sha256_hex(instance.to_json().as_bytes());
            (instance, rule, format!("generated sha256 {hash}"))
        }
    };

    let trials = match (config.trials, config.exact.unwrap_or(false)) {
        (Some(_), true) => bail!("config error: --trials and --exact are exclusive"),
        (Some(t), false) => Trials::MonteCarlo(t),
        (None, _) => Trials::Exact,
    };
    let mode = match config.mc_samples {
        Some(samples) => ProbabilityMode::MonteCarlo { samples, seed: config.require_seed("monte-carlo mode")? },
        None => ProbabilityMode::Exact,
    };
    let seed = match trials {
        Trials::MonteCarlo(_) => Some(config.require_seed("monte-carlo mode")?),
        Trials::Exact => config.seed,
    };

    let spec = EstimatorSpec::new(estimator_kind(config, rule)?)
        .with_policy(config.policy.unwrap_or(PolicyMode::Canonical))
        .with_mode(mode);
    let report = ratio_report(&instance, &spec, trials, seed.unwrap_or(0))?;

    let trials_label = match trials {
        Trials::Exact => "exact".to_string(),
        Trials::MonteCarlo(t) => t.to_string(),
    };
    let mode_label = match mode {
        ProbabilityMode::Exact => "exact".to_string(),
        ProbabilityMode::MonteCarlo { samples, .. } => format!("monte-carlo {samples}"),
    };
    let zero: Vec<String> = report.zero_mean.iter().map(usize::to_string).collect();
    let zero = if zero.is_empty() { "none".to_string() } else { zero.join(" ") };
    let mut text = metadata(
        "ratio",
        config,
        seed,
        &[
            ("instance", source),
            ("estimator", spec.kind.name().to_string()),
            ("trials", trials_label),
            ("probabilities", mode_label),
            ("overall_frac", report.overall_frac.to_string()),
            ("overall_ocs", report.overall_ocs.to_string()),
            ("zero_mean", zero),
        ],
    );
    text.push_str(&report.to_csv());
    emit(config.out.as_deref(), &text)
}

/// One line of the certification summary.
struct Row {
    check: Check,
    item: String,
    pass: bool,
    value: f64,
    expected: String,
}

const EXPERIMENT_TOLERANCE: f64 = 0.003;

fn certify_bounds(rows: &mut Vec<Row>) -> Result<()> {
    let bounds = builtin_bounds();
    for (i, b) in bounds.iter().enumerate() {
        let (pass, value) = match verify_lower_bound(b, 1e-4, 1e-6) {
            Ok(r) => (true, r.max_violation),
            Err(_) => (false, f64::NAN),
        };
        rows.push(Row {
            check: Check::Bounds,
            item: format!("case {} bound {i}", b.case),
            pass,
            value,
            expected: "max violation <= 1e-6".into(),
        });
    }
    for case in Case::ALL {
        let r = case_ratio(&bounds, case);
        rows.push(Row {
            check: Check::Bounds,
            item: format!("case {case} ratio"),
            pass: r >= case.claimed() && r - case.claimed() <= 1e-3,
            value: r,
            expected: format!("{} (+1e-3)", case.claimed()),
        });
    }
    Ok(())
}

fn certify_concavity(rows: &mut Vec<Row>) -> Result<()> {
    rows.push(Row {
        check: Check::Concavity,
        item: "p(0)".into(),
        pass: ocs_guarantee(0.0) == 0.0,
        value: ocs_guarantee(0.0),
        expected: "0".into(),
    });
    let (pass, value) = match check_p_concavity(1e-3, 10.0) {
        Ok(r) => (r.max_fd_disagreement <= FD_TOLERANCE, r.max_second_derivative),
        Err(_) => (false, f64::NAN),
    };
    rows.push(Row {
        check: Check::Concavity,
        item: "max p'' on (0,10]".into(),
        pass,
        value,
        expected: "<= 0".into(),
    });
    Ok(())
}

fn certify_experiment(config: &RunConfig, seed: u64, rows: &mut Vec<Row>) -> Result<()> {
    let n = config.n.unwrap_or(DEFAULT_EXPERIMENT_N);
    let samples = config.samples.unwrap_or(DEFAULT_EXPERIMENT_SAMPLES);
    let curve = worst_case_experiment(n, &default_mu_grid(), samples, seed)?;
    if let Some(path) = &config.curve_out {
        let mut text = metadata("certify experiment curve", config, Some(seed), &[("n", n.to_string()), ("samples", samples.to_string())]);
        text.push_str(&curve_to_csv(&curve));
        emit(Some(path), &text)?;
    }
    let ((frac, mu_f), (ocs, mu_o)) = curve_minima(&curve);
    for (item, value, mu, target) in [("min frac_ratio", frac, mu_f, 0.718), ("min ocs_ratio", ocs, mu_o, 0.666)] {
        rows.push(Row {
            check: Check::Experiment,
            item: format!("{item} at mu={mu}"),
            pass: (value - target).abs() <= EXPERIMENT_TOLERANCE,
            value,
            expected: format!("{target} (+-{EXPERIMENT_TOLERANCE})"),
        });
    }
    Ok(())
}

fn certify_hardness(rows: &mut Vec<Row>) -> Result<()> {
    let h = hardness_search(1e-3)?;
    rows.push(Row {
        check: Check::Hardness,
        item: "best fractional ratio".into(),
        pass: (h.best_ratio - 0.75).abs() <= 1e-9,
        value: h.best_ratio,
        expected: "0.75".into(),
    });
    Ok(())
}

const LEMMA_INSTANCES: u64 = 20;

fn certify_lemmas(seed: u64, rows: &mut Vec<Row>) -> Result<()> {
    let purpose = seed::tag("certify_lemmas");
    let (mut warmup, mut window) = ((0usize, f64::INFINITY, true), (0usize, f64::INFINITY, true));
    for k in 0..LEMMA_INSTANCES {
        let iid = k % 2 == 0;
        let params = RandomInstanceParams { n_offline: 3, n_online: 3, types_per_vertex: 2, edge_prob: 0.5, weight_range: (0.5, 2.0), iid };
        let instance = generate_random(&params, seed::mix(&[seed, purpose, k]))?;
        for u in 0..instance.n_offline() {
            for policy in [PolicyMode::Canonical, PolicyMode::Exchangeable] {
                tally(&mut warmup, check_warmup_lemmas::<BigRational>(&instance, u, policy));
            }
            if iid {
                tally(&mut window, check_window_identities::<BigRational>(&instance, u, CrossMoment::Exact));
            }
        }
    }
    for (item, (count, slack, pass)) in [("warm-up second moments", warmup), ("window identities", window)] {
        rows.push(Row {
            check: Check::Lemmas,
            item: format!("{item} ({count} checks)"),
            pass,
            value: slack,
            expected: format!("min slack >= -{LEMMA_TOLERANCE:e}"),
        });
    }
    Ok(())
}

fn tally<E>(acc: &mut (usize, f64, bool), report: std::result::Result<osm_core::analysis::LemmaReport, E>) {
    match report {
        Ok(r) => {
            acc.0 += r.checks.len();
            acc.1 = acc.1.min(r.min_slack());
        }
        Err(_) => acc.2 = false,
    }
}

/// Runs the selected checks and returns whether all of them passed.
pub fn certify(config: &RunConfig) -> Result<bool> {
    // The experiment is the only stochastic check; it falls back to seed 0.
    let seed = config.seed.unwrap_or(0);
    let mut only = config.only.clone().unwrap_or_else(|| Check::ALL.to_vec());
    only.sort();
    only.dedup();
    let mut rows = Vec::new();
    for check in &only {
        match check {
            Check::Bounds => certify_bounds(&mut rows)?,
            Check::Concavity => certify_concavity(&mut rows)?,
            Check::Experiment => certify_experiment(config, seed, &mut rows)?,
            Check::Hardness => certify_hardness(&mut rows)?,
            Check::Lemmas => certify_lemmas(seed, &mut rows)?,
        }
    }
    let all_pass = rows.iter().all(|r| r.pass);
    let checks: Vec<&str> = only.iter().map(|c| c.name()).collect();
    let mut text = metadata("certify", config, Some(seed), &[("checks", checks.join(" "))]);
    text.push_str("check,item,status,value,expected\n");
    for r in &rows {
        let status = if r.pass { "pass" } else { "fail" };
        writeln!(text, "{},{},{status},{},{}", r.check.name(), r.item, fmt_num(r.value), r.expected).unwrap();
    }
    emit(config.out.as_deref(), &text)?;
    let passed = rows.iter().filter(|r| r.pass).count();
    eprintln!("{passed}/{} checks passed", rows.len());
    Ok(all_pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_stay_readable() {
        assert_eq!(fmt_num(0.75), "0.75");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-9.5e-101), "-9.5e-101");
    }

    #[test]
    fn rule_file_sits_next_to_instance() {
        assert_eq!(default_rule_path(Path::new("out/w.json")), PathBuf::from("out/w.rule.json"));
    }
}
