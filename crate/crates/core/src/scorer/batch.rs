use rayon::prelude::*;

use super::provider::{LogProbProvider, ScoreRequest};
use super::{ProviderError, TokenLogProbs, WeightScheme};

/// Instruction used when none is configured; recorded in every report.
pub const DEFAULT_PROMPT: &str = "Write a short caption describing the image.";

#[derive(Debug, Clone)]
pub struct ScoringOptions {
    /// Cap on in-flight provider requests.
    pub parallel: usize,
    pub prompt: String,
    pub weights: WeightScheme,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        ScoringOptions {
            parallel: 1,
            prompt: DEFAULT_PROMPT.to_string(),
            weights: WeightScheme::Uniform,
        }
    }
}

/// Issues every request with at most `parallel` in flight.
///
/// Results come back in request order regardless of completion order.
pub fn score_all<P: LogProbProvider + ?Sized>(
    provider: &P,
    requests: &[ScoreRequest],
    parallel: usize,
) -> Vec<Result<TokenLogProbs, ProviderError>> {
    if parallel <= 1 || requests.len() <= 1 {
        return requests.iter().map(|r| provider.logprobs(r)).collect();
    }
    match rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
    {
        Ok(pool) => pool.install(|| requests.par_iter().map(|r| provider.logprobs(r)).collect()),
        Err(e) => {
            log::warn!("falling back to sequential scoring: {e}");
            requests.iter().map(|r| provider.logprobs(r)).collect()
        }
    }
}
