//! Experiment definitions, per-episode metrics and variant comparisons.
//!
//! # Output files
//!
//! [`emit`] writes one CSV per `(variant, seed)` run, named
//! `<scenario>_<variant>_<seed>.csv`, with the fixed header
//! `scenario,variant,seed,episode,utility,cumulative_utility`, plus a
//! `<scenario>_summary.json` holding the [`ComparisonSummary`]. Reals are
//! written with 9 significant digits.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{PolicyKind, World, WorldConfig};
use crate::error::{Error, Result};
use crate::learner::LearnerConfig;
use crate::numfmt::{fmt_sig, round_sig};
use crate::stats;

pub const CSV_HEADER: &str = "scenario,variant,seed,episode,utility,cumulative_utility";

/// Group sizes swept in the large system.
pub const LARGE_GROUP_SIZES: [usize; 6] = [1, 2, 5, 10, 25, 50];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Single,
    Multi,
    Volatile,
    Large,
    Custom,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 5] = [
        ScenarioName::Single,
        ScenarioName::Multi,
        ScenarioName::Volatile,
        ScenarioName::Large,
        ScenarioName::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::Single => "single",
            ScenarioName::Multi => "multi",
            ScenarioName::Volatile => "volatile",
            ScenarioName::Large => "large",
            ScenarioName::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::ScenarioConfig(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    pub parents: usize,
    pub children: usize,
    /// One learner variant per group size.
    pub group_sizes: Vec<usize>,
    pub churn_probability: f64,
    pub epsilon: f64,
    pub episodes: u64,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub gamma: f64,
    pub atomic_types: usize,
    pub composite_size: usize,
    pub composite_types: usize,
    pub resources: usize,
    pub task_frequency: u32,
}

impl ScenarioConfig {
    pub const DEFAULT_EPISODES: u64 = 100;
    pub const DEFAULT_SEEDS: u64 = 20;
    pub const DEFAULT_EPSILON: f64 = 0.1;

    /// The general parameters plus the per-system column for `name`.
    pub fn preset(name: ScenarioName) -> Self {
        let base = Self {
            name,
            parents: 10,
            children: 1,
            group_sizes: vec![1],
            churn_probability: 0.0,
            epsilon: 0.0,
            episodes: Self::DEFAULT_EPISODES,
            seeds: (0..Self::DEFAULT_SEEDS).collect(),
            alpha: LearnerConfig::DEFAULT_ALPHA,
            gamma: LearnerConfig::DEFAULT_GAMMA,
            atomic_types: 20,
            composite_size: 5,
            composite_types: 10,
            resources: 1,
            task_frequency: 1,
        };
        match name {
            ScenarioName::Single | ScenarioName::Custom => base,
            ScenarioName::Multi => Self {
                children: 3,
                epsilon: Self::DEFAULT_EPSILON,
                ..base
            },
            ScenarioName::Volatile => Self {
                churn_probability: 0.25,
                ..base
            },
            ScenarioName::Large => Self {
                parents: 50,
                group_sizes: LARGE_GROUP_SIZES.to_vec(),
                ..base
            },
        }
    }

    pub fn world_config(&self) -> WorldConfig {
        WorldConfig {
            parents: self.parents,
            children: self.children,
            atomic_types: self.atomic_types,
            composite_types: self.composite_types,
            composite_size: self.composite_size,
            resources: self.resources,
            task_frequency: self.task_frequency,
            epsilon: self.epsilon,
            churn_probability: self.churn_probability,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world_config().validate()?;
        LearnerConfig {
            alpha: self.alpha,
            gamma: self.gamma,
            groups: 1,
            task_types: self.atomic_types,
        }
        .validate()?;
        if self.episodes == 0 {
            return Err(Error::ScenarioConfig("episodes must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::ScenarioConfig(
                "at least one seed is required".into(),
            ));
        }
        if let Some(bad) = self
            .group_sizes
            .iter()
            .find(|&&g| g == 0 || g > self.parents)
        {
            return Err(Error::ScenarioConfig(format!(
                "group size {bad} must be in 1..={}",
                self.parents
            )));
        }
        Ok(())
    }

    /// Uniform baseline, the single-group and per-parent learners, and one
    /// learner per configured group size, ordered by increasing group count.
    pub fn variants(&self) -> Vec<AlgorithmVariant> {
        let mut sizes: Vec<usize> = self
            .group_sizes
            .iter()
            .copied()
            .chain([self.parents, 1])
            .collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes.dedup();
        std::iter::once(AlgorithmVariant::FixedUniform)
            .chain(
                sizes
                    .into_iter()
                    .map(|group_size| AlgorithmVariant::Mgrao { group_size }),
            )
            .collect()
    }
}

/// Child policy under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgorithmVariant {
    FixedUniform,
    Mgrao { group_size: usize },
}

impl AlgorithmVariant {
    pub const UNIFORM_TAG: &'static str = "fixed-uniform";
    pub const MAX_TAG: &'static str = "mgrao-max";
    pub const ONE_TAG: &'static str = "mgrao-1:1";

    pub fn one_group(parents: usize) -> Self {
        AlgorithmVariant::Mgrao {
            group_size: parents,
        }
    }

    pub fn max_groups() -> Self {
        AlgorithmVariant::Mgrao { group_size: 1 }
    }

    pub fn groups(&self, parents: usize) -> Option<usize> {
        match self {
            AlgorithmVariant::FixedUniform => None,
            AlgorithmVariant::Mgrao { group_size } => Some(parents.div_ceil(*group_size)),
        }
    }

    /// `fixed-uniform`, `mgrao-max` (one group per parent), `mgrao-1:1` (one
    /// group) or `mgrao-x:1` (x groups).
    pub fn label(&self, parents: usize) -> String {
        match self.groups(parents) {
            None => Self::UNIFORM_TAG.to_string(),
            Some(g) if g == parents => Self::MAX_TAG.to_string(),
            Some(1) => Self::ONE_TAG.to_string(),
            Some(g) => format!("mgrao-{g}:1"),
        }
    }

    /// Inverse of [`label`](Self::label) for a system with `parents` parents.
    pub fn parse(tag: &str, parents: usize) -> Result<Self> {
        match tag {
            Self::UNIFORM_TAG => return Ok(AlgorithmVariant::FixedUniform),
            Self::MAX_TAG => return Ok(Self::max_groups()),
            Self::ONE_TAG => return Ok(Self::one_group(parents)),
            _ => {}
        }
        let groups: usize = tag
            .strip_prefix("mgrao-")
            .and_then(|r| r.strip_suffix(":1"))
            .and_then(|g| g.parse().ok())
            .ok_or_else(|| Error::ScenarioConfig(format!("unknown variant `{tag}`")))?;
        (1..=parents)
            .map(|group_size| AlgorithmVariant::Mgrao { group_size })
            .find(|v| v.groups(parents) == Some(groups))
            .ok_or_else(|| {
                Error::ScenarioConfig(format!(
                    "no group size gives {groups} groups for {parents} parents"
                ))
            })
    }

    pub fn policy(&self, cfg: &ScenarioConfig) -> PolicyKind {
        match *self {
            AlgorithmVariant::FixedUniform => PolicyKind::Uniform,
            AlgorithmVariant::Mgrao { group_size } => PolicyKind::Mgrao {
                group_size,
                alpha: cfg.alpha,
                gamma: cfg.gamma,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: String,
    pub variant: String,
    pub seed: u64,
    pub episode: u64,
    pub utility: f64,
    pub cumulative_utility: f64,
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.scenario,
            self.variant,
            self.seed,
            self.episode,
            fmt_sig(self.utility),
            fmt_sig(self.cumulative_utility)
        )
    }
}

/// Records of one `(config, variant)` run over all seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub records: Vec<MetricsRecord>,
    /// Largest `|Σ atv - taq|` seen over every composite of every episode.
    pub feedback_residual: f64,
}

/// Runs every seed of `cfg` with `variant`, one record per episode.
/// Seeds run in parallel; output order is by seed, then episode.
pub fn run_scenario(cfg: &ScenarioConfig, variant: AlgorithmVariant) -> Result<ScenarioRun> {
    cfg.validate()?;
    if let AlgorithmVariant::Mgrao { group_size } = variant {
        if group_size == 0 || group_size > cfg.parents {
            return Err(Error::ScenarioConfig(format!(
                "group size {group_size} must be in 1..={}",
                cfg.parents
            )));
        }
    }
    let label = variant.label(cfg.parents);
    let world_cfg = cfg.world_config();
    let policy = variant.policy(cfg);

    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(Vec<MetricsRecord>, f64)> {
            let mut world = World::build(&world_cfg, policy, seed)?;
            let mut cumulative = 0.0;
            let mut residual: f64 = 0.0;
            let mut out = Vec::with_capacity(cfg.episodes as usize);
            for _ in 0..cfg.episodes {
                let report = world.step()?;
                cumulative += report.utility;
                residual = residual.max(report.feedback_residual);
                out.push(MetricsRecord {
                    scenario: cfg.name.to_string(),
                    variant: label.clone(),
                    seed,
                    episode: report.episode,
                    utility: report.utility,
                    cumulative_utility: cumulative,
                });
            }
            Ok((out, residual))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::with_capacity(cfg.seeds.len() * cfg.episodes as usize);
    let mut feedback_residual: f64 = 0.0;
    for (r, res) in per_seed {
        records.extend(r);
        feedback_residual = feedback_residual.max(res);
    }
    Ok(ScenarioRun {
        records,
        feedback_residual,
    })
}

/// Runs every variant of `cfg` and returns their records concatenated in variant order.
pub fn run_all(cfg: &ScenarioConfig, variants: &[AlgorithmVariant]) -> Result<ScenarioRun> {
    let mut records = Vec::new();
    let mut feedback_residual: f64 = 0.0;
    for v in variants {
        let run = run_scenario(cfg, *v)?;
        records.extend(run.records);
        feedback_residual = feedback_residual.max(run.feedback_residual);
    }
    Ok(ScenarioRun {
        records,
        feedback_residual,
    })
}

/// Cumulative utility at the last episode of each seed, for one variant.
pub fn final_cumulative(records: &[MetricsRecord], variant: &str) -> BTreeMap<u64, f64> {
    let mut last: BTreeMap<u64, (u64, f64)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.variant == variant) {
        let e = last
            .entry(r.seed)
            .or_insert((r.episode, r.cumulative_utility));
        if r.episode >= e.0 {
            *e = (r.episode, r.cumulative_utility);
        }
    }
    last.into_iter().map(|(s, (_, c))| (s, c)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub seeds: usize,
    pub mean: f64,
    pub stddev: f64,
    /// `(variant - uniform) / uniform * 100`
    pub pct_from_uniform: Option<f64>,
    /// `(variant - max) / max * 100`
    pub pct_from_max: Option<f64>,
    /// `variant / max * 100`
    pub pct_of_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub scenario: String,
    pub variants: Vec<VariantSummary>,
}

/// Per-variant statistics of final cumulative utility over seeds. Percent
/// columns are present when the uniform baseline or `mgrao-max` was run.
pub fn compare(records: &[MetricsRecord]) -> Result<ComparisonSummary> {
    let scenario = records
        .first()
        .map(|r| r.scenario.clone())
        .unwrap_or_default();
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if r.scenario != scenario {
            return Err(Error::ScenarioConfig(format!(
                "records mix scenarios `{scenario}` and `{}`",
                r.scenario
            )));
        }
        if !order.contains(&r.variant.as_str()) {
            order.push(&r.variant);
        }
    }

    let finals: Vec<(&str, BTreeMap<u64, f64>)> = order
        .iter()
        .map(|v| (*v, final_cumulative(records, v)))
        .collect();
    if let Some((first, seeds)) = finals.first() {
        for (v, s) in &finals[1..] {
            if !s.keys().eq(seeds.keys()) {
                return Err(Error::SeedMismatch(format!(
                    "`{v}` ran seeds {:?}, `{first}` ran {:?}",
                    s.keys().collect::<Vec<_>>(),
                    seeds.keys().collect::<Vec<_>>()
                )));
            }
        }
    }

    let mean_of = |tag: &str| {
        finals
            .iter()
            .find(|(v, _)| *v == tag)
            .map(|(_, s)| stats::mean(&s.values().copied().collect::<Vec<_>>()))
    };
    let uniform = mean_of(AlgorithmVariant::UNIFORM_TAG);
    let max = mean_of(AlgorithmVariant::MAX_TAG);

    let variants = finals
        .iter()
        .map(|(v, s)| {
            let xs: Vec<f64> = s.values().copied().collect();
            let m = stats::mean(&xs);
            VariantSummary {
                variant: v.to_string(),
                seeds: xs.len(),
                mean: m,
                stddev: stats::stddev(&xs),
                pct_from_uniform: uniform.map(|u| (m - u) / u * 100.0),
                pct_from_max: max.map(|x| (m - x) / x * 100.0),
                pct_of_max: max.map(|x| m / x * 100.0),
            }
        })
        .collect();
    Ok(ComparisonSummary { scenario, variants })
}

impl ComparisonSummary {
    pub fn get(&self, variant: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.variant == variant)
    }

    fn rounded(&self) -> Self {
        let r = |x: Option<f64>| x.map(round_sig);
        Self {
            scenario: self.scenario.clone(),
            variants: self
                .variants
                .iter()
                .map(|v| VariantSummary {
                    variant: v.variant.clone(),
                    seeds: v.seeds,
                    mean: round_sig(v.mean),
                    stddev: round_sig(v.stddev),
                    pct_from_uniform: r(v.pct_from_uniform),
                    pct_from_max: r(v.pct_from_max),
                    pct_of_max: r(v.pct_of_max),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rounded())?)
    }

    /// Plain-text table: algorithm, % from uniform, % from max, % of max,
    /// then the raw mean and standard deviation.
    pub fn table(&self) -> String {
        let pct = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let mut out = format!(
            "{:<16} {:>16} {:>16} {:>16} {:>14} {:>12}\n",
            "Algorithm", "% from uniform", "% from max", "% of max", "mean u", "sd"
        );
        for v in &self.variants {
            out.push_str(&format!(
                "{:<16} {:>16} {:>16} {:>16} {:>14.4} {:>12.4}\n",
                v.variant,
                pct(v.pct_from_uniform),
                pct(v.pct_from_max),
                pct(v.pct_of_max),
                v.mean,
                v.stddev
            ));
        }
        out
    }
}

/// Header plus one line per record.
pub fn to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "both" => Ok(OutputFormat::Both),
            _ => Err(Error::ScenarioConfig(format!("unknown format `{s}`"))),
        }
    }
}

/// File name for one run's CSV. `:` in variant labels becomes `-` so names
/// are portable.
pub fn csv_file_name(scenario: &str, variant: &str, seed: u64) -> String {
    format!("{scenario}_{}_{seed}.csv", variant.replace(':', "-"))
}

/// Scenario, variant and seed of one run.
type RunKey<'a> = (&'a str, &'a str, u64);

/// Writes per-run CSVs and the JSON summary under `dir`. Returns the paths written.
pub fn emit(
    records: &[MetricsRecord],
    summary: &ComparisonSummary,
    format: OutputFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        let mut runs: Vec<(RunKey, Vec<MetricsRecord>)> = Vec::new();
        for r in records {
            let key = (r.scenario.as_str(), r.variant.as_str(), r.seed);
            match runs.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(r.clone()),
                None => runs.push((key, vec![r.clone()])),
            }
        }
        for ((scenario, variant, seed), rs) in runs {
            let path = dir.join(csv_file_name(scenario, variant, seed));
            fs::write(&path, to_csv(&rs)).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }

    if matches!(format, OutputFormat::Json | OutputFormat::Both) {
        let name = if summary.scenario.is_empty() {
            "summary.json".to_string()
        } else {
            format!("{}_summary.json", summary.scenario)
        };
        let path = dir.join(name);
        fs::write(&path, summary.to_json()?).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
