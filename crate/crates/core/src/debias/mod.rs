//! Syntax-bias analysis and benchmark de-biasing.
//!
//! For every item, each (positive, negative) pair is scored text-only and the
//! pair differences are aggregated into one raw item score. Raw scores are
//! max-abs normalized over the branch, summarized (histogram, mean, stdev,
//! one-sample t-test) and then filtered: an item survives a threshold `τ`
//! when `|normalized| <= τ`.

mod noise;
mod sade;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BenchmarkItem, Branch, CorpusError};
use crate::perturb::PerturbError;
use crate::real::Real;
use crate::scorer::{
    normalize_scores, score_all, syntax_bias_raw, LogProbProvider, ProviderError, ScoreRequest,
    TokenLogProbs, WeightScheme,
};
use crate::stats::{self, StatsError, TestResult};

pub use noise::{make_noise_image, png_dimensions};
pub use sade::{
    assemble_sade, ContentSpec, FilteredBranchSpec, MultiPositivePolicy, SadeAssembly, SadeConfig,
    SadeSources, SourceSet, SADE_FILE,
};

/// Significance level for the strict retained-set policies.
pub const SIGNIFICANCE_LEVEL: f64 = 1e-5;

/// Default per-branch threshold on `|normalized|`.
pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Debug, Error)]
pub enum DebiasError {
    #[error("no items to analyse")]
    EmptyInput,
    #[error("item `{0}` has no (positive, negative) pair")]
    NoPairs(String),
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("image dimensions must be at least 1x1 (got {width}x{height})")]
    ZeroDimension { width: u32, height: u32 },
    #[error("png encoding failed: {0}")]
    Png(String),
    #[error("branch {branch}: retained-set test p = {p_value:e} violates the {policy} policy")]
    StrictRejected {
        branch: Branch,
        p_value: f64,
        policy: TestPolicy,
    },
    #[error("invalid assembly config: {0}")]
    Config(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
}

/// How pairwise scores of a multi-negative item combine into one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairAggregation {
    #[default]
    Mean,
    Max,
    Min,
}

/// What to do with the t-test of the retained scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestPolicy {
    /// Report the test, never refuse.
    #[default]
    ReportOnly,
    /// Refuse a branch whose retained scores reject `mean == 0`.
    #[serde(alias = "strict")]
    RequireUnbiased,
    /// Refuse a branch whose retained scores do not reject `mean == 0`.
    RequireSignificant,
}

impl fmt::Display for TestPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestPolicy::ReportOnly => "report-only",
            TestPolicy::RequireUnbiased => "require-unbiased",
            TestPolicy::RequireSignificant => "require-significant",
        })
    }
}

impl FromStr for TestPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "report-only" => Ok(TestPolicy::ReportOnly),
            "require-unbiased" | "strict" => Ok(TestPolicy::RequireUnbiased),
            "require-significant" => Ok(TestPolicy::RequireSignificant),
            _ => Err(format!("unknown test policy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Real"))]
pub struct PairScore<F = f64> {
    pub positive: String,
    pub negative: String,
    pub raw: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Real"))]
pub struct BiasRecord<F = f64> {
    pub item_id: String,
    pub raw: F,
    pub normalized: F,
    pub pair_details: Vec<PairScore<F>>,
}

/// Equal-width histogram over `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Real"))]
pub struct Histogram<F = f64> {
    pub edges: Vec<F>,
    pub counts: Vec<usize>,
}

impl<F: Real> Histogram<F> {
    /// Values outside `[-1, 1]` are clamped into the end bins.
    pub fn over_unit_interval(values: &[F], bins: usize) -> Self {
        let bins = bins.max(1);
        let width = F::lit(2.0) / F::from_count(bins);
        let edges = (0..=bins)
            .map(|k| -F::one() + width * F::from_count(k))
            .collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let pos = ((v + F::one()) / width).floor().to_f64_lossy();
            let idx = if pos.is_nan() {
                0
            } else {
                pos.clamp(0.0, (bins - 1) as f64) as usize
            };
            counts[idx] += 1;
        }
        Histogram { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Real"))]
pub struct BiasReport<F = f64> {
    pub branch: Branch,
    pub model: String,
    /// Max-abs normalization scale of this branch.
    pub scale: F,
    pub mean: F,
    pub stdev: Option<F>,
    /// Test over all records; `None` with fewer than two.
    pub test: Option<TestResult<F>>,
    pub threshold: Option<F>,
    pub histogram: Histogram<F>,
    pub records: Vec<BiasRecord<F>>,
    pub retained_ids: Vec<String>,
    /// Test over the retained records once a threshold is applied.
    #[serde(default)]
    pub retained_test: Option<TestResult<F>>,
}

impl<F: Real> BiasReport<F> {
    pub fn normalized(&self) -> Vec<F> {
        self.records.iter().map(|r| r.normalized).collect()
    }

    pub fn retained_normalized(&self) -> Vec<F> {
        let keep: std::collections::HashSet<&str> =
            self.retained_ids.iter().map(String::as_str).collect();
        self.records
            .iter()
            .filter(|r| keep.contains(r.item_id.as_str()))
            .map(|r| r.normalized)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BiasOptions {
    pub bins: usize,
    pub parallel: usize,
    pub aggregation: PairAggregation,
    pub weights: WeightScheme,
}

impl Default for BiasOptions {
    fn default() -> Self {
        BiasOptions {
            bins: 20,
            parallel: 1,
            aggregation: PairAggregation::Mean,
            weights: WeightScheme::Uniform,
        }
    }
}

fn aggregate<F: Real>(values: &[F], how: PairAggregation) -> F {
    match how {
        PairAggregation::Mean => values.iter().copied().sum::<F>() / F::from_count(values.len()),
        PairAggregation::Max => values.iter().copied().fold(F::neg_infinity(), F::max),
        PairAggregation::Min => values.iter().copied().fold(F::infinity(), F::min),
    }
}

/// Two-sided one-sample t-test of the scores against zero.
pub fn significance_test<F: Real>(scores: &[F]) -> Result<TestResult<F>, DebiasError> {
    Ok(stats::one_sample_t_test(scores)?)
}

/// Scores every item text-only and summarizes the branch distribution.
///
/// Each distinct sentence is requested once, with no instruction and no
/// image.
pub fn compute_bias_distribution<F: Real, P: LogProbProvider + ?Sized>(
    items: &[BenchmarkItem],
    provider: &P,
    opts: &BiasOptions,
) -> Result<BiasReport<F>, DebiasError> {
    let first = items.first().ok_or(DebiasError::EmptyInput)?;
    if let Some(item) = items
        .iter()
        .find(|i| i.positives.is_empty() || i.negatives.is_empty())
    {
        return Err(DebiasError::NoPairs(item.item_id.clone()));
    }

    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut requests = Vec::new();
    for r in items.iter().flat_map(|i| i.candidates()) {
        let text = r.canonical();
        slot.entry(text.clone()).or_insert_with(|| {
            requests.push(ScoreRequest::text_only(provider.model_id(), "", text));
            requests.len() - 1
        });
    }
    let scored: Vec<TokenLogProbs<F>> = score_all(provider, &requests, opts.parallel)
        .into_iter()
        .map(|r| r.map(|t| t.cast()))
        .collect::<Result<_, _>>()?;
    let lookup = |text: String| &scored[slot[&text]];

    let mut raws = Vec::with_capacity(items.len());
    let mut details = Vec::with_capacity(items.len());
    for item in items {
        let mut pairs = Vec::new();
        for p in &item.positives {
            for n in &item.negatives {
                pairs.push(PairScore {
                    positive: p.id.clone(),
                    negative: n.id.clone(),
                    raw: syntax_bias_raw(
                        lookup(p.canonical()),
                        lookup(n.canonical()),
                        opts.weights,
                    ),
                });
            }
        }
        raws.push(aggregate(
            &pairs.iter().map(|p| p.raw).collect::<Vec<_>>(),
            opts.aggregation,
        ));
        details.push(pairs);
    }

    let (normalized, spec) = normalize_scores(&raws);
    let records: Vec<BiasRecord<F>> = items
        .iter()
        .zip(raws.iter().zip(normalized.iter()))
        .zip(details)
        .map(|((item, (&raw, &normalized)), pair_details)| BiasRecord {
            item_id: item.item_id.clone(),
            raw,
            normalized,
            pair_details,
        })
        .collect();

    Ok(BiasReport {
        branch: first.branch.name,
        model: provider.model_id().to_string(),
        scale: spec.scale,
        mean: stats::mean(&normalized).unwrap_or_default(),
        stdev: stats::stdev(&normalized),
        test: stats::one_sample_t_test(&normalized).ok(),
        threshold: None,
        histogram: Histogram::over_unit_interval(&normalized, opts.bins),
        retained_ids: records.iter().map(|r| r.item_id.clone()).collect(),
        records,
        retained_test: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome<F = f64> {
    pub retained: Vec<String>,
    pub fraction: F,
    pub empty: bool,
}

fn check_tau<F: Real>(tau: F) -> Result<(), DebiasError> {
    if tau > F::zero() && tau <= F::one() {
        Ok(())
    } else {
        Err(DebiasError::InvalidThreshold(tau.to_f64_lossy()))
    }
}

/// Ids whose `|normalized| <= τ`, in record order.
pub fn filter_by_threshold<F: Real>(
    report: &BiasReport<F>,
    tau: F,
) -> Result<FilterOutcome<F>, DebiasError> {
    check_tau(tau)?;
    let retained: Vec<String> = report
        .records
        .iter()
        .filter(|r| r.normalized.abs() <= tau)
        .map(|r| r.item_id.clone())
        .collect();
    let fraction = if report.records.is_empty() {
        F::zero()
    } else {
        F::from_count(retained.len()) / F::from_count(report.records.len())
    };
    if retained.is_empty() {
        log::warn!("{}: no item survives threshold {tau}", report.branch);
    }
    Ok(FilterOutcome {
        empty: retained.is_empty(),
        retained,
        fraction,
    })
}

/// Filters `report` in place and evaluates the retained-set test under `policy`.
pub fn apply_threshold<F: Real>(
    report: &mut BiasReport<F>,
    tau: F,
    policy: TestPolicy,
) -> Result<FilterOutcome<F>, DebiasError> {
    let outcome = filter_by_threshold(report, tau)?;
    report.threshold = Some(tau);
    report.retained_ids = outcome.retained.clone();
    report.retained_test = stats::one_sample_t_test(&report.retained_normalized()).ok();

    let alpha = F::lit(SIGNIFICANCE_LEVEL);
    let violation = match (policy, &report.retained_test) {
        (TestPolicy::ReportOnly, _) => None,
        (TestPolicy::RequireUnbiased, Some(t)) if t.p_value < alpha => Some(t.p_value),
        (TestPolicy::RequireSignificant, Some(t)) if t.p_value >= alpha => Some(t.p_value),
        (TestPolicy::RequireSignificant, None) => Some(F::one()),
        _ => None,
    };
    match violation {
        Some(p) => Err(DebiasError::StrictRejected {
            branch: report.branch,
            p_value: p.to_f64_lossy(),
            policy,
        }),
        None => Ok(outcome),
    }
}
