//! Assembly of the de-biased benchmark from configured sources.
//!
//! Comprehensive pairs are copied unfiltered. Relation, Attribute, Atomic and
//! Negate items are bias-scored per branch and thresholded. Content items keep
//! only the nouns and adjectives of their first caption and get random
//! fluent negatives from a sentence pool.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::DEFAULT_TAU;
use super::{
    apply_threshold, compute_bias_distribution, BiasOptions, BiasReport, DebiasError,
    PairAggregation, TestPolicy,
};
use crate::corpus::{
    load_benchmark, load_pool, save_benchmark, save_metadata, validate, Benchmark, BenchmarkItem,
    Branch, CorpusError, PairedItem, Reference, TaxonomyBranch,
};
use crate::perturb::{content_only, sample_random_negatives, PerturbError};
use crate::scorer::LogProbProvider;
use crate::seed::Seed;

/// Output file names inside the assembly directory.
pub const SADE_FILE: &str = "sade.jsonl";

/// What to do with items carrying more than one positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiPositivePolicy {
    /// Keep the first positive, drop the rest.
    #[default]
    First,
    Reject,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSet {
    pub sources: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilteredBranchSpec {
    pub sources: Vec<PathBuf>,
    /// Overrides `default_tau` for this branch.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentSpec {
    pub sources: Vec<PathBuf>,
    /// Sentence pool for random negatives (`.txt` or benchmark JSONL).
    pub pool: PathBuf,
}

fn default_name() -> String {
    "SADE".into()
}
fn default_version() -> String {
    "1".into()
}
fn default_model() -> String {
    "default".into()
}
fn default_one() -> usize {
    1
}
fn default_bins() -> usize {
    20
}
fn default_tau() -> f64 {
    DEFAULT_TAU
}
fn default_negatives() -> usize {
    2
}

/// TOML assembly config. Relative source paths resolve against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SadeConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_version")]
    pub version: String,
    #[serde(default)]
    pub seed: u64,
    /// Provider endpoint; the command line may override it.
    #[serde(default)]
    pub provider: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_one")]
    pub parallel: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_tau")]
    pub default_tau: f64,
    #[serde(default = "default_negatives")]
    pub negatives_per_item: usize,
    #[serde(default)]
    pub test_policy: TestPolicy,
    #[serde(default)]
    pub aggregation: PairAggregation,
    #[serde(default)]
    pub multi_positive: MultiPositivePolicy,
    #[serde(default)]
    pub comprehensive: Option<SourceSet>,
    #[serde(default)]
    pub branches: BTreeMap<Branch, FilteredBranchSpec>,
    #[serde(default)]
    pub content: Option<ContentSpec>,
}

impl SadeConfig {
    pub fn from_toml(text: &str) -> Result<Self, DebiasError> {
        let cfg: SadeConfig =
            toml::from_str(text).map_err(|e| DebiasError::Config(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, DebiasError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        SadeConfig::from_toml(&text)
    }

    pub fn check(&self) -> Result<(), DebiasError> {
        for (branch, spec) in &self.branches {
            if matches!(branch, Branch::Comprehensive | Branch::Content) {
                return Err(DebiasError::Config(format!(
                    "{branch} cannot be a filtered branch"
                )));
            }
            if spec.sources.is_empty() {
                return Err(DebiasError::Config(format!("{branch} lists no sources")));
            }
        }
        for tau in
            std::iter::once(self.default_tau).chain(self.branches.values().filter_map(|s| s.tau))
        {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(DebiasError::InvalidThreshold(tau));
            }
        }
        if self.negatives_per_item == 0 {
            return Err(DebiasError::Config(
                "negatives_per_item must be positive".into(),
            ));
        }
        if self.parallel == 0 || self.bins == 0 {
            return Err(DebiasError::Config(
                "parallel and bins must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn tau(&self, branch: Branch) -> f64 {
        self.branches
            .get(&branch)
            .and_then(|s| s.tau)
            .unwrap_or(self.default_tau)
    }

    /// Every input path, resolved against `base`, in config order.
    pub fn input_paths(&self, base: &Path) -> Vec<PathBuf> {
        let mut out: Vec<PathBuf> = Vec::new();
        if let Some(c) = &self.comprehensive {
            out.extend(c.sources.iter().map(|p| base.join(p)));
        }
        for spec in self.branches.values() {
            out.extend(spec.sources.iter().map(|p| base.join(p)));
        }
        if let Some(c) = &self.content {
            out.extend(c.sources.iter().map(|p| base.join(p)));
            out.push(base.join(&c.pool));
        }
        out
    }
}

/// Loaded inputs for [`assemble_sade`].
#[derive(Debug, Clone, Default)]
pub struct SadeSources {
    pub comprehensive: Vec<PairedItem>,
    pub filtered: BTreeMap<Branch, Vec<BenchmarkItem>>,
    pub content: Vec<BenchmarkItem>,
    pub pool: Vec<Reference>,
}

fn apply_positive_policy(
    items: &mut [BenchmarkItem],
    policy: MultiPositivePolicy,
) -> Result<(), DebiasError> {
    for item in items {
        if item.positives.len() > 1 {
            match policy {
                MultiPositivePolicy::First => item.positives.truncate(1),
                MultiPositivePolicy::Reject => {
                    return Err(PerturbError::PositiveCount {
                        item: item.item_id.clone(),
                        count: item.positives.len(),
                    }
                    .into())
                }
            }
        }
    }
    Ok(())
}

fn check_clean(b: &Benchmark, path: &Path) -> Result<(), DebiasError> {
    match validate(b).violations.first() {
        None => Ok(()),
        Some(v) => Err(CorpusError::Metadata {
            path: path.to_path_buf(),
            reason: format!("{}: {}: {}", v.subject, v.field, v.message),
        }
        .into()),
    }
}

impl SadeSources {
    /// Loads and validates every source named by `cfg`.
    pub fn load(cfg: &SadeConfig, base: &Path) -> Result<Self, DebiasError> {
        let mut out = SadeSources::default();
        if let Some(c) = &cfg.comprehensive {
            for p in &c.sources {
                let path = base.join(p);
                let b = load_benchmark(&path)?;
                check_clean(&b, &path)?;
                if !b.items.is_empty() {
                    log::warn!(
                        "{}: {} non-pair items ignored for Comprehensive",
                        path.display(),
                        b.items.len()
                    );
                }
                out.comprehensive.extend(b.pairs);
            }
        }
        for (&branch, spec) in &cfg.branches {
            let items = out.filtered.entry(branch).or_default();
            for p in &spec.sources {
                let path = base.join(p);
                let mut b = load_benchmark(&path)?;
                apply_positive_policy(&mut b.items, cfg.multi_positive)?;
                for item in &mut b.items {
                    item.branch.name = branch;
                }
                check_clean(&b, &path)?;
                items.extend(b.items);
            }
        }
        if let Some(c) = &cfg.content {
            for p in &c.sources {
                let mut b = load_benchmark(&base.join(p))?;
                apply_positive_policy(&mut b.items, cfg.multi_positive)?;
                out.content.extend(b.items);
            }
            out.pool = load_pool(&base.join(&c.pool))?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct SadeAssembly {
    pub benchmark: Benchmark,
    pub reports: BTreeMap<Branch, BiasReport>,
    /// Content items without any noun or adjective.
    pub dropped_content: Vec<String>,
}

impl SadeAssembly {
    /// Writes `sade.jsonl` and its `metadata.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, DebiasError> {
        std::fs::create_dir_all(dir).map_err(|e| CorpusError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let path = dir.join(SADE_FILE);
        save_benchmark(&self.benchmark, &path)?;
        save_metadata(&self.benchmark.metadata, &path)?;
        Ok(path)
    }
}

fn content_item(
    item: &BenchmarkItem,
    pool: &[Reference],
    k: usize,
    seed: Seed,
) -> Result<Option<BenchmarkItem>, DebiasError> {
    let Some(positive) = item.positive() else {
        return Err(CorpusError::MissingPositive(item.item_id.clone()).into());
    };
    let content = match content_only(positive) {
        Ok(r) => r,
        Err(PerturbError::EmptyContent(_)) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let captions: HashSet<String> = item.positives.iter().map(Reference::canonical).collect();
    let exclude: HashSet<String> = item
        .candidates()
        .map(|r| r.id.clone())
        .chain(
            pool.iter()
                .filter(|p| captions.contains(&p.canonical()))
                .map(|p| p.id.clone()),
        )
        .collect();
    let negatives = sample_random_negatives(
        pool,
        k,
        seed.derive(&format!("content/{}", item.item_id)),
        &exclude,
    )?;
    Ok(Some(BenchmarkItem {
        item_id: item.item_id.clone(),
        branch: TaxonomyBranch::new(Branch::Content, item.branch.source.clone()),
        image: item.image.clone(),
        positives: vec![content],
        negatives,
    }))
}

fn test_summary(report: &BiasReport) -> Value {
    json!({
        "items": report.records.len(),
        "retained": report.retained_ids.len(),
        "scale": report.scale,
        "mean_before": report.mean,
        "p_before": report.test.map(|t| t.p_value),
        "p_after": report.retained_test.map(|t| t.p_value),
    })
}

/// Builds the de-biased benchmark. Output is a pure function of the inputs,
/// the config and the provider's scores.
pub fn assemble_sade<P: LogProbProvider + ?Sized>(
    cfg: &SadeConfig,
    sources: &SadeSources,
    provider: &P,
) -> Result<SadeAssembly, DebiasError> {
    cfg.check()?;
    let seed = Seed(cfg.seed);
    let opts = BiasOptions {
        bins: cfg.bins,
        parallel: cfg.parallel,
        aggregation: cfg.aggregation,
        ..BiasOptions::default()
    };

    let mut items = Vec::new();
    let mut reports = BTreeMap::new();
    let mut filtering = serde_json::Map::new();
    let mut taus = serde_json::Map::new();
    for (&branch, branch_items) in &sources.filtered {
        if branch_items.is_empty() {
            log::warn!("{branch}: no items to filter");
            continue;
        }
        let tau = cfg.tau(branch);
        let mut report: BiasReport = compute_bias_distribution(branch_items, provider, &opts)?;
        report.branch = branch;
        apply_threshold(&mut report, tau, cfg.test_policy)?;
        let keep: HashSet<&str> = report.retained_ids.iter().map(String::as_str).collect();
        items.extend(
            branch_items
                .iter()
                .filter(|i| keep.contains(i.item_id.as_str()))
                .cloned(),
        );
        log::info!(
            "{branch}: kept {} of {} items at tau {tau}",
            keep.len(),
            branch_items.len()
        );
        taus.insert(branch.name().into(), tau.into());
        filtering.insert(branch.name().into(), test_summary(&report));
        reports.insert(branch, report);
    }

    let mut dropped = Vec::new();
    for item in &sources.content {
        match content_item(item, &sources.pool, cfg.negatives_per_item, seed)? {
            Some(out) => items.push(out),
            None => dropped.push(item.item_id.clone()),
        }
    }
    if !dropped.is_empty() {
        log::info!(
            "Content: dropped {} items without nouns or adjectives",
            dropped.len()
        );
    }

    let mut seen = HashSet::new();
    for id in items
        .iter()
        .map(|i| &i.item_id)
        .chain(sources.comprehensive.iter().map(|p| &p.pair_id))
    {
        if !seen.insert(id) {
            return Err(CorpusError::DuplicateId(id.clone()).into());
        }
    }

    let mut benchmark = Benchmark::new(cfg.name.clone(), items, sources.comprehensive.clone());
    benchmark.metadata.version = cfg.version.clone();
    benchmark.metadata.file = SADE_FILE.to_string();
    let params = &mut benchmark.metadata.params;
    params.insert("seed".into(), cfg.seed.into());
    params.insert("model".into(), provider.model_id().into());
    params.insert("tau".into(), Value::Object(taus));
    params.insert("filtering".into(), Value::Object(filtering));
    params.insert("test_policy".into(), cfg.test_policy.to_string().into());
    params.insert(
        "aggregation".into(),
        serde_json::to_value(cfg.aggregation).expect("enum serializes"),
    );
    params.insert("negatives_per_item".into(), cfg.negatives_per_item.into());
    params.insert("content_dropped".into(), dropped.clone().into());

    Ok(SadeAssembly {
        benchmark,
        reports,
        dropped_content: dropped,
    })
}
