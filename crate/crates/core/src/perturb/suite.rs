use std::collections::HashSet;

use super::{content_only, perturb, sample_random_negatives, PerturbError, ShuffleStrategy};
use crate::corpus::{Benchmark, BenchmarkItem, Reference};
use crate::seed::Seed;

/// Negatives attached to each item in every case.
const CASE_NEGATIVES: usize = 2;

/// The three syntax-probe evaluation cases built from one item list.
///
/// - Case 1: the positive against a nouns/adjectives shuffle and a trigram
///   shuffle of itself.
/// - Case 2: the positive against two fluent sentences drawn from the pool.
/// - Case 3: the content-only positive against two pool sentences.
#[derive(Debug, Clone)]
pub struct CaseSuite {
    pub case1: Benchmark,
    pub case2: Benchmark,
    pub case3: Benchmark,
    /// Items left out of Case 3 because their positive has no noun/adjective.
    pub dropped_from_case3: Vec<String>,
    /// Case 1 negatives whose shuffle could not change the sentence.
    pub identity_shuffles: usize,
}

/// Ids excluded from sampling for one item: its own references plus any pool
/// entry whose text matches its positive.
fn exclusions(item: &BenchmarkItem, positive: &Reference, pool: &[Reference]) -> HashSet<String> {
    let canonical = positive.canonical();
    item.candidates()
        .map(|r| r.id.clone())
        .chain(
            pool.iter()
                .filter(|p| p.canonical() == canonical)
                .map(|p| p.id.clone()),
        )
        .collect()
}

pub fn build_case_suite(
    items: &[BenchmarkItem],
    pool: &[Reference],
    seed: Seed,
) -> Result<CaseSuite, PerturbError> {
    let mut case1 = Vec::with_capacity(items.len());
    let mut case2 = Vec::with_capacity(items.len());
    let mut case3 = Vec::with_capacity(items.len());
    let mut dropped = Vec::new();
    let mut identity_shuffles = 0;

    for item in items {
        let [positive] = item.positives.as_slice() else {
            return Err(PerturbError::PositiveCount {
                item: item.item_id.clone(),
                count: item.positives.len(),
            });
        };
        let id = &item.item_id;
        let exclude = exclusions(item, positive, pool);

        let mut shuffled = Vec::with_capacity(CASE_NEGATIVES);
        for strategy in [ShuffleStrategy::NounsAdj, ShuffleStrategy::Trigrams] {
            let out = perturb(
                positive,
                strategy,
                seed.derive(&format!("case1/{id}/{strategy}")),
            )?;
            identity_shuffles += usize::from(out.identity);
            shuffled.push(out.reference);
        }
        case1.push(BenchmarkItem {
            negatives: shuffled,
            ..item.clone()
        });

        let random = sample_random_negatives(
            pool,
            CASE_NEGATIVES,
            seed.derive(&format!("case2/{id}")),
            &exclude,
        )?;
        case2.push(BenchmarkItem {
            negatives: random,
            ..item.clone()
        });

        match content_only(positive) {
            Ok(content) => {
                let random = sample_random_negatives(
                    pool,
                    CASE_NEGATIVES,
                    seed.derive(&format!("case3/{id}")),
                    &exclude,
                )?;
                case3.push(BenchmarkItem {
                    positives: vec![content],
                    negatives: random,
                    ..item.clone()
                });
            }
            Err(PerturbError::EmptyContent(_)) => dropped.push(id.clone()),
            Err(e) => return Err(e),
        }
    }
    if !dropped.is_empty() {
        log::info!(
            "case 3: dropped {} items without nouns or adjectives",
            dropped.len()
        );
    }

    let named = |name: &str, items: Vec<BenchmarkItem>| {
        let mut b = Benchmark::new(name, items, vec![]);
        b.metadata.params.insert("seed".into(), seed.value().into());
        b
    };
    Ok(CaseSuite {
        case1: named("case1", case1),
        case2: named("case2", case2),
        case3: named("case3", case3),
        dropped_from_case3: dropped,
        identity_shuffles,
    })
}
