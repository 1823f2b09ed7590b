//! Reference perturbation and hard-negative synthesis.
//!
//! All operations are pure functions of `(input, seed)`.

mod suite;
mod tagger;

use std::borrow::Cow;
use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Polarity, Reference};
use crate::seed::Seed;

pub use suite::{build_case_suite, CaseSuite};
pub use tagger::{pos_tag, Lexicon, PosTag, Tagger};

/// Draws attempted before a shuffle that keeps the sentence unchanged is
/// returned as-is.
pub const MAX_SHUFFLE_TRIES: usize = 16;

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("reference `{0}` has no tokens to tag")]
    UntaggableReference(String),
    #[error("reference `{0}` has no noun or adjective")]
    EmptyContent(String),
    #[error("pool holds {available} eligible references, {needed} requested")]
    InsufficientPool { needed: usize, available: usize },
    #[error("item `{item}` has {count} positives; exactly one is required")]
    PositiveCount { item: String, count: usize },
    #[error("lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuffleStrategy {
    /// Permute only noun and adjective positions.
    NounsAdj,
    /// Permute every position except nouns and adjectives.
    AllButNounsAdj,
    /// Permute tokens inside each consecutive trigram.
    WithinTrigrams,
    /// Permute the order of the trigrams, keeping each intact.
    Trigrams,
}

impl ShuffleStrategy {
    pub const ALL: [ShuffleStrategy; 4] = [
        ShuffleStrategy::NounsAdj,
        ShuffleStrategy::AllButNounsAdj,
        ShuffleStrategy::WithinTrigrams,
        ShuffleStrategy::Trigrams,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            ShuffleStrategy::NounsAdj => "nouns-adj",
            ShuffleStrategy::AllButNounsAdj => "all-but-nouns-adj",
            ShuffleStrategy::WithinTrigrams => "within-trigrams",
            ShuffleStrategy::Trigrams => "trigrams",
        }
    }
}

impl fmt::Display for ShuffleStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for ShuffleStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ShuffleStrategy::ALL
            .into_iter()
            .find(|k| k.slug() == s.trim().to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| format!("unknown shuffle strategy `{s}`"))
    }
}

/// A shuffled negative. `identity` is set when every draw left the token
/// sequence unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Perturbed {
    pub reference: Reference,
    pub identity: bool,
}

/// Carried tags when present, otherwise the bundled tagger's output.
pub fn tags_of(r: &Reference) -> Cow<'_, [PosTag]> {
    match &r.pos_tags {
        Some(tags) if tags.len() == r.tokens.len() => Cow::Borrowed(tags),
        _ => Cow::Owned(pos_tag(&r.tokens)),
    }
}

/// Consecutive groups of three positions; the last may be shorter.
pub fn trigram_groups(len: usize) -> Vec<Range<usize>> {
    (0..len)
        .step_by(3)
        .map(|start| start..(start + 3).min(len))
        .collect()
}

/// Source index for each output position: `out[i] = input[order[i]]`.
pub fn shuffle_order<R: Rng + ?Sized>(
    tags: &[PosTag],
    strategy: ShuffleStrategy,
    rng: &mut R,
) -> Vec<usize> {
    let n = tags.len();
    let mut order: Vec<usize> = (0..n).collect();
    match strategy {
        ShuffleStrategy::NounsAdj | ShuffleStrategy::AllButNounsAdj => {
            let want_content = strategy == ShuffleStrategy::NounsAdj;
            let slots: Vec<usize> = (0..n)
                .filter(|&i| tags[i].is_content() == want_content)
                .collect();
            let mut sources = slots.clone();
            sources.shuffle(rng);
            for (slot, src) in slots.into_iter().zip(sources) {
                order[slot] = src;
            }
        }
        ShuffleStrategy::WithinTrigrams => {
            for group in trigram_groups(n) {
                order[group].shuffle(rng);
            }
        }
        ShuffleStrategy::Trigrams => {
            let mut groups = trigram_groups(n);
            groups.shuffle(rng);
            order = groups.into_iter().flatten().collect();
        }
    }
    order
}

/// Reorders trigram groups by an explicit group permutation.
pub fn reorder_trigrams<T: Clone>(tokens: &[T], group_order: &[usize]) -> Vec<T> {
    let groups = trigram_groups(tokens.len());
    assert_eq!(
        group_order.len(),
        groups.len(),
        "one index per trigram group"
    );
    group_order
        .iter()
        .flat_map(|&g| tokens[groups[g].clone()].iter().cloned())
        .collect()
}

/// Shuffles a reference into a negative with `strategy`.
///
/// Draws are repeated up to [`MAX_SHUFFLE_TRIES`] times until the token
/// sequence changes; the output is flagged `identity` if it never does.
/// The output carries the permuted tags.
pub fn perturb(
    r: &Reference,
    strategy: ShuffleStrategy,
    seed: Seed,
) -> Result<Perturbed, PerturbError> {
    if r.tokens.is_empty() {
        return Err(PerturbError::UntaggableReference(r.id.clone()));
    }
    let tags = tags_of(r);
    let mut rng = seed.rng();
    let mut order: Vec<usize> = (0..r.tokens.len()).collect();
    let mut identity = true;
    for _ in 0..MAX_SHUFFLE_TRIES {
        order = shuffle_order(&tags, strategy, &mut rng);
        if order
            .iter()
            .enumerate()
            .any(|(i, &src)| r.tokens[src] != r.tokens[i])
        {
            identity = false;
            break;
        }
    }
    if identity {
        log::warn!("{}: {strategy} shuffle left the sentence unchanged", r.id);
    }
    let tokens = order.iter().map(|&i| r.tokens[i].clone()).collect();
    let tags = order.iter().map(|&i| tags[i]).collect();
    Ok(Perturbed {
        reference: Reference::from_tokens(
            format!("{}~{}", r.id, strategy.slug()),
            tokens,
            Some(tags),
            Polarity::Negative,
        ),
        identity,
    })
}

/// Keeps only the noun and adjective tokens, in order.
///
/// The id and polarity are preserved and the kept tags are carried, so the
/// operation is idempotent.
pub fn content_only(r: &Reference) -> Result<Reference, PerturbError> {
    let tags = tags_of(r);
    let (tokens, kept): (Vec<String>, Vec<PosTag>) = r
        .tokens
        .iter()
        .zip(tags.iter())
        .filter(|(_, t)| t.is_content())
        .map(|(tok, t)| (tok.clone(), *t))
        .unzip();
    if tokens.is_empty() {
        return Err(PerturbError::EmptyContent(r.id.clone()));
    }
    Ok(Reference::from_tokens(
        r.id.clone(),
        tokens,
        Some(kept),
        r.polarity,
    ))
}

/// Draws `k` distinct references uniformly without replacement from the
/// pool entries whose ids are not in `exclude`.
pub fn sample_random_negatives(
    pool: &[Reference],
    k: usize,
    seed: Seed,
    exclude: &HashSet<String>,
) -> Result<Vec<Reference>, PerturbError> {
    let eligible: Vec<&Reference> = pool.iter().filter(|r| !exclude.contains(&r.id)).collect();
    if eligible.len() < k {
        return Err(PerturbError::InsufficientPool {
            needed: k,
            available: eligible.len(),
        });
    }
    let mut rng = seed.rng();
    Ok(rand::seq::index::sample(&mut rng, eligible.len(), k)
        .into_iter()
        .map(|i| {
            let mut r = eligible[i].clone();
            r.polarity = Polarity::Negative;
            r
        })
        .collect())
}
