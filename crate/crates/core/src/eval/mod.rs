//! Log-likelihood retrieval evaluation.
//!
//! Every candidate reference of an item is scored against the item's image
//! with the same instruction; the model "retrieves" the highest-scoring
//! candidate. Recall@1 branches count how often that is the positive. Paired
//! items use the pairwise text/image/group criteria.

mod ablation;
mod human;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    Benchmark, BenchmarkItem, Branch, CorpusError, ImageRef, PairedItem, Polarity,
};
use crate::debias::DebiasError;
use crate::real::Real;
use crate::scorer::{
    normalize_within, score_all, visual_gpt_score, LogProbProvider, ProviderError, ScoreRequest,
    WeightScheme, DEFAULT_PROMPT,
};

pub use ablation::{ablate_noise, AblationOptions, AblationRow, DEFAULT_NOISE_DIMS};
pub use human::{
    human_eval_aggregate, human_eval_rows, parse_ratings, HumanGroup, HumanRating, HumanRow,
    RatingSource,
};
pub use report::{emit_report, EvalReport, ReportFormat};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scoring item `{item}` failed: {source}")]
    PartialScore {
        item: String,
        #[source]
        source: ProviderError,
    },
    #[error("pair `{pair}` is missing score s(C{caption}, I{image})")]
    MissingCell {
        pair: String,
        caption: usize,
        image: usize,
    },
    #[error("no ratings for {0}")]
    EmptyGroup(String),
    #[error("ratings line {line}: {reason}")]
    Rating { line: usize, reason: String },
    #[error("report is missing branches: {0:?}")]
    IncompleteResults(Vec<Branch>),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Debias(#[from] DebiasError),
}

impl EvalError {
    /// Provider failure underneath, if any.
    pub fn provider_error(&self) -> Option<&ProviderError> {
        match self {
            EvalError::PartialScore { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub prompt: String,
    pub parallel: usize,
    pub weights: WeightScheme,
    /// Directory that relative image paths resolve against.
    pub image_root: PathBuf,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            prompt: DEFAULT_PROMPT.to_string(),
            parallel: 1,
            weights: WeightScheme::Uniform,
            image_root: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub polarity: Polarity,
}

/// One score per candidate, in candidate order (positives first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Real"))]
pub struct ScoredItem<F = f64> {
    pub item_id: String,
    pub branch: Branch,
    pub source: String,
    pub candidates: Vec<Candidate>,
    pub scores: Vec<F>,
}

impl<F: Real> ScoredItem<F> {
    /// Scores max-abs scaled within the item, for display only.
    pub fn normalized(&self) -> Vec<F> {
        normalize_within(&self.scores)
    }

    pub fn selection(&self) -> Selection {
        select_best(&self.scores)
    }

    pub fn is_hit(&self) -> bool {
        let s = self.selection();
        self.candidates
            .get(s.index)
            .is_some_and(|c| c.polarity == Polarity::Positive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub index: usize,
    /// Another candidate shares the maximum score.
    pub tie: bool,
}

/// Index of the highest score; ties go to the lowest index and are flagged.
pub fn select_best<F: Real>(scores: &[F]) -> Selection {
    let mut best = Selection {
        index: 0,
        tie: false,
    };
    for (i, &s) in scores.iter().enumerate().skip(1) {
        let top = scores[best.index];
        if s > top {
            best = Selection {
                index: i,
                tie: false,
            };
        } else if s == top {
            best.tie = true;
        }
    }
    best
}

/// Fraction of items whose selected candidate is the positive; 0 when empty.
pub fn recall_at_1<F: Real>(scored: &[ScoredItem<F>]) -> F {
    if scored.is_empty() {
        return F::zero();
    }
    F::from_count(scored.iter().filter(|s| s.is_hit()).count()) / F::from_count(scored.len())
}

/// `cells[c][i]` is the score of caption `c` against image `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Real"))]
pub struct ScoredPair<F = f64> {
    pub pair_id: String,
    pub source: String,
    pub cells: [[Option<F>; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Real"))]
pub struct WinogroundScores<F = f64> {
    pub text_score: F,
    pub image_score: F,
    pub group_score: F,
    pub pairs: usize,
}

/// Per-pair (text, image, group) outcomes with strict inequalities.
pub fn pair_outcome<F: Real>(s: [[F; 2]; 2]) -> (bool, bool, bool) {
    let text = s[0][0] > s[1][0] && s[1][1] > s[0][1];
    let image = s[0][0] > s[0][1] && s[1][1] > s[1][0];
    (text, image, text && image)
}

pub fn winoground_scores<F: Real>(
    pairs: &[ScoredPair<F>],
) -> Result<WinogroundScores<F>, EvalError> {
    let (mut text, mut image, mut group) = (0usize, 0usize, 0usize);
    for p in pairs {
        let mut s = [[F::zero(); 2]; 2];
        for (c, row) in p.cells.iter().enumerate() {
            for (i, cell) in row.iter().enumerate() {
                s[c][i] = cell.ok_or_else(|| EvalError::MissingCell {
                    pair: p.pair_id.clone(),
                    caption: c,
                    image: i,
                })?;
            }
        }
        let (t, i, g) = pair_outcome(s);
        text += usize::from(t);
        image += usize::from(i);
        group += usize::from(g);
    }
    let frac = |k: usize| {
        if pairs.is_empty() {
            F::zero()
        } else {
            F::from_count(k) / F::from_count(pairs.len())
        }
    };
    Ok(WinogroundScores {
        text_score: frac(text),
        image_score: frac(image),
        group_score: frac(group),
        pairs: pairs.len(),
    })
}

fn load_image(image: Option<&ImageRef>, opts: &EvalOptions) -> Result<Option<Vec<u8>>, EvalError> {
    Ok(image.map(|i| i.load_bytes(&opts.image_root)).transpose()?)
}

/// Scores `items` against the given images (one per item, `None` for text-only).
pub(crate) fn score_items_with<F: Real, P: LogProbProvider + ?Sized>(
    items: &[BenchmarkItem],
    images: Vec<Option<Vec<u8>>>,
    provider: &P,
    opts: &EvalOptions,
) -> Result<Vec<ScoredItem<F>>, EvalError> {
    let mut requests = Vec::new();
    for (item, image) in items.iter().zip(images) {
        for c in item.candidates() {
            requests.push(
                ScoreRequest::text_only(provider.model_id(), opts.prompt.clone(), c.text.clone())
                    .with_image(image.clone()),
            );
        }
    }
    let mut results = score_all(provider, &requests, opts.parallel).into_iter();

    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let mut scores = Vec::with_capacity(item.candidate_count());
        for _ in 0..item.candidate_count() {
            let r = results.next().expect("one result per candidate");
            let tlp = r.map_err(|source| EvalError::PartialScore {
                item: item.item_id.clone(),
                source,
            })?;
            scores.push(visual_gpt_score(&tlp.cast::<F>(), opts.weights));
        }
        out.push(ScoredItem {
            item_id: item.item_id.clone(),
            branch: item.branch.name,
            source: item.branch.source.clone(),
            candidates: item
                .candidates()
                .map(|c| Candidate {
                    id: c.id.clone(),
                    polarity: c.polarity,
                })
                .collect(),
            scores,
        });
    }
    Ok(out)
}

/// Scores every candidate of one item with the same prompt and image.
pub fn score_item<F: Real, P: LogProbProvider + ?Sized>(
    item: &BenchmarkItem,
    provider: &P,
    opts: &EvalOptions,
) -> Result<ScoredItem<F>, EvalError> {
    Ok(score_items(std::slice::from_ref(item), provider, opts)?.remove(0))
}

pub fn score_items<F: Real, P: LogProbProvider + ?Sized>(
    items: &[BenchmarkItem],
    provider: &P,
    opts: &EvalOptions,
) -> Result<Vec<ScoredItem<F>>, EvalError> {
    let images = items
        .iter()
        .map(|i| load_image(i.image.as_ref(), opts))
        .collect::<Result<_, _>>()?;
    score_items_with(items, images, provider, opts)
}

pub(crate) fn score_pairs_with<F: Real, P: LogProbProvider + ?Sized>(
    pairs: &[PairedItem],
    images: Vec<[Option<Vec<u8>>; 2]>,
    provider: &P,
    opts: &EvalOptions,
) -> Result<Vec<ScoredPair<F>>, EvalError> {
    let mut requests = Vec::with_capacity(4 * pairs.len());
    for (pair, imgs) in pairs.iter().zip(&images) {
        for caption in [&pair.caption_0, &pair.caption_1] {
            for img in imgs {
                requests.push(
                    ScoreRequest::text_only(
                        provider.model_id(),
                        opts.prompt.clone(),
                        caption.text.clone(),
                    )
                    .with_image(img.clone()),
                );
            }
        }
    }
    let mut results = score_all(provider, &requests, opts.parallel).into_iter();
    let mut out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let mut cells = [[None; 2]; 2];
        for row in &mut cells {
            for cell in row.iter_mut() {
                let tlp = results
                    .next()
                    .expect("four results per pair")
                    .map_err(|source| EvalError::PartialScore {
                        item: pair.pair_id.clone(),
                        source,
                    })?;
                *cell = Some(visual_gpt_score(&tlp.cast::<F>(), opts.weights));
            }
        }
        out.push(ScoredPair {
            pair_id: pair.pair_id.clone(),
            source: pair.source.clone(),
            cells,
        });
    }
    Ok(out)
}

/// Scores all four (caption, image) combinations of every pair.
pub fn score_pairs<F: Real, P: LogProbProvider + ?Sized>(
    pairs: &[PairedItem],
    provider: &P,
    opts: &EvalOptions,
) -> Result<Vec<ScoredPair<F>>, EvalError> {
    let images = pairs
        .iter()
        .map(|p| {
            Ok([
                load_image(p.image_0.as_ref(), opts)?,
                load_image(p.image_1.as_ref(), opts)?,
            ])
        })
        .collect::<Result<_, EvalError>>()?;
    score_pairs_with(pairs, images, provider, opts)
}

/// Metric values of one branch. `value` is the headline number: the group
/// score for Comprehensive, otherwise Recall@1 averaged over sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchScores {
    pub items: usize,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall_at_1: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_source: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winoground: Option<WinogroundScores>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredBenchmark {
    pub items: Vec<ScoredItem>,
    pub pairs: Vec<ScoredPair>,
}

pub fn score_benchmark<P: LogProbProvider + ?Sized>(
    b: &Benchmark,
    provider: &P,
    opts: &EvalOptions,
) -> Result<ScoredBenchmark, EvalError> {
    Ok(ScoredBenchmark {
        items: score_items(&b.items, provider, opts)?,
        pairs: score_pairs(&b.pairs, provider, opts)?,
    })
}

/// Per-branch metrics. Branches without items are absent.
pub fn branch_scores(
    scored: &ScoredBenchmark,
) -> Result<BTreeMap<Branch, BranchScores>, EvalError> {
    let mut out = BTreeMap::new();
    if !scored.pairs.is_empty() {
        let w = winoground_scores(&scored.pairs)?;
        out.insert(
            Branch::Comprehensive,
            BranchScores {
                items: w.pairs,
                value: w.group_score,
                recall_at_1: None,
                per_source: BTreeMap::new(),
                winoground: Some(w),
            },
        );
    }
    let mut by_branch: BTreeMap<Branch, BTreeMap<&str, Vec<&ScoredItem>>> = BTreeMap::new();
    for s in &scored.items {
        by_branch
            .entry(s.branch)
            .or_default()
            .entry(s.source.as_str())
            .or_default()
            .push(s);
    }
    for (branch, sources) in by_branch {
        let hits = |items: &[&ScoredItem]| items.iter().filter(|s| s.is_hit()).count();
        let per_source: BTreeMap<String, f64> = sources
            .iter()
            .map(|(src, items)| (src.to_string(), hits(items) as f64 / items.len() as f64))
            .collect();
        let all: Vec<&ScoredItem> = sources.values().flatten().copied().collect();
        let value = per_source.values().sum::<f64>() / per_source.len() as f64;
        let recall = hits(&all) as f64 / all.len() as f64;
        out.insert(
            branch,
            BranchScores {
                items: all.len(),
                value,
                recall_at_1: Some(recall),
                per_source,
                winoground: None,
            },
        );
    }
    Ok(out)
}
