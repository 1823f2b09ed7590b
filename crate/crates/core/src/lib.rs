//! Syntax-bias measurement, de-biasing and log-likelihood retrieval
//! evaluation for image-text benchmarks.
//!
//! The pipeline:
//!
//! 1. [`corpus`] loads and validates JSONL benchmarks.
//! 2. [`perturb`] builds hard negatives by seeded word-order shuffles and
//!    content-only rewrites.
//! 3. [`scorer`] turns provider token log-probabilities into scores.
//! 4. [`debias`] measures per-item syntax bias, filters biased items and
//!    assembles the de-biased benchmark.
//! 5. [`eval`] computes Recall@1 and pairwise scores, runs the noise-image
//!    ablation and renders reports.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root pin the common instantiations.
//!
//! ```
//! use sade_core::scorer::{visual_gpt_score, TokenLogProbs, WeightScheme};
//!
//! let tlp = TokenLogProbs::new(vec!["a".into(), "dog".into()], vec![-1.0, -3.0]).unwrap();
//! assert_eq!(visual_gpt_score(&tlp, WeightScheme::Uniform), -2.0);
//! ```

pub mod corpus;
pub mod debias;
pub mod eval;
pub mod perturb;
pub mod real;
pub mod scorer;
pub mod seed;
pub mod stats;

use thiserror::Error;

pub use real::Real;
pub use seed::Seed;

pub type TokenLogProbs64 = scorer::TokenLogProbs<f64>;
pub type TokenLogProbs32 = scorer::TokenLogProbs<f32>;
pub type BiasReport64 = debias::BiasReport<f64>;
pub type BiasReport32 = debias::BiasReport<f32>;
pub type BiasRecord64 = debias::BiasRecord<f64>;
pub type BiasRecord32 = debias::BiasRecord<f32>;
pub type ScoredItem64 = eval::ScoredItem<f64>;
pub type ScoredItem32 = eval::ScoredItem<f32>;
pub type ScoredPair64 = eval::ScoredPair<f64>;
pub type ScoredPair32 = eval::ScoredPair<f32>;
pub type WinogroundScores64 = eval::WinogroundScores<f64>;
pub type WinogroundScores32 = eval::WinogroundScores<f32>;
pub type TestResult64 = stats::TestResult<f64>;
pub type TestResult32 = stats::TestResult<f32>;

/// Any failure from the library, grouped by stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Perturb(#[from] perturb::PerturbError),
    #[error(transparent)]
    Provider(#[from] scorer::ProviderError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Debias(#[from] debias::DebiasError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
}

impl Error {
    /// True when the root cause is a provider failure.
    pub fn is_provider(&self) -> bool {
        match self {
            Error::Provider(_) => true,
            Error::Debias(debias::DebiasError::Provider(_)) => true,
            Error::Eval(e) => {
                e.provider_error().is_some()
                    || matches!(e, eval::EvalError::Debias(debias::DebiasError::Provider(_)))
            }
            _ => false,
        }
    }
}
