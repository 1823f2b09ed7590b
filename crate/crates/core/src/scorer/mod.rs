//! Log-likelihood scores over provider token log-probabilities.
//!
//! A provider returns, for a continuation `r` given an instruction `p` and an
//! optional image `I`, the per-token conditional log-probabilities
//! `log P(r_t | r_<t, p, I)`. Two scores are built from them:
//!
//! - the image-conditioned score: `Σ_t w_t · log P(r_t | r_<t, p, I)` with
//!   uniform weights `w_t = 1/m` (the mean token log-probability); the same
//!   aggregation over a text-only request gives the text-only score;
//! - the syntax bias of a (positive, negative) pair: the text-only score of
//!   the positive minus that of the negative, later scaled into `[-1, 1]` by
//!   [`normalize_scores`].

mod batch;
mod http;
mod mock;
mod provider;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

pub use batch::{score_all, ScoringOptions, DEFAULT_PROMPT};
pub use http::HttpProvider;
pub use mock::{mock_logprob, ImageDigestMock, MockTable, UnigramMock, DEFAULT_UNKNOWN_SLOTS};
pub use provider::{
    open_provider, request_logprobs, Endpoint, LogProbProvider, ProviderOptions, ScoreRequest,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("provider rejected request: {0}")]
    Rejected(String),
    #[error("invalid provider endpoint `{0}`")]
    BadEndpoint(String),
    #[error("mock table {path}: {reason}")]
    MockTable { path: String, reason: String },
}

/// Per-token natural-log probabilities of a continuation.
///
/// Invariants: equal non-zero lengths; every value finite and `<= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Real"))]
pub struct TokenLogProbs<F = f64> {
    tokens: Vec<String>,
    logprobs: Vec<F>,
}

impl<F: Real> TokenLogProbs<F> {
    pub fn new(tokens: Vec<String>, logprobs: Vec<F>) -> Result<Self, ProviderError> {
        if tokens.len() != logprobs.len() {
            return Err(ProviderError::MalformedResponse(format!(
                "{} tokens but {} logprobs",
                tokens.len(),
                logprobs.len()
            )));
        }
        if tokens.is_empty() {
            return Err(ProviderError::MalformedResponse("empty token list".into()));
        }
        if let Some((i, v)) = logprobs
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v > F::zero())
        {
            return Err(ProviderError::MalformedResponse(format!(
                "logprob {i} = {v} is not a finite value <= 0"
            )));
        }
        Ok(TokenLogProbs { tokens, logprobs })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn logprobs(&self) -> &[F] {
        &self.logprobs
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn cast<G: Real>(&self) -> TokenLogProbs<G> {
        TokenLogProbs {
            tokens: self.tokens.clone(),
            logprobs: self
                .logprobs
                .iter()
                .map(|v| G::lit(v.to_f64_lossy()))
                .collect(),
        }
    }
}

/// Token weighting. Only uniform weights (`1/m`) are supported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    #[default]
    Uniform,
}

impl WeightScheme {
    pub fn weight<F: Real>(self, _position: usize, len: usize) -> F {
        match self {
            WeightScheme::Uniform => F::one() / F::from_count(len),
        }
    }
}

impl FromStr for WeightScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(WeightScheme::Uniform),
            other => Err(format!(
                "unsupported weight scheme `{other}` (only `uniform`)"
            )),
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("uniform")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationKind {
    #[default]
    MaxAbs,
}

/// Linear scaling into `[-1, 1]`: `normalized = raw / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Real"))]
pub struct NormalizationSpec<F = f64> {
    pub kind: NormalizationKind,
    pub scale: F,
}

impl<F: Real> NormalizationSpec<F> {
    pub fn apply(&self, raw: F) -> F {
        raw / self.scale
    }
}

/// Weighted sum of token log-probabilities; the mean under uniform weights.
///
/// Applied to a text-only response this is the text-only score.
pub fn visual_gpt_score<F: Real>(tlp: &TokenLogProbs<F>, w: WeightScheme) -> F {
    let m = tlp.len();
    tlp.logprobs()
        .iter()
        .enumerate()
        .map(|(t, &lp)| w.weight::<F>(t, m) * lp)
        .sum()
}

/// Score of the positive minus score of the negative, both text-only.
pub fn syntax_bias_raw<F: Real>(
    pos: &TokenLogProbs<F>,
    neg: &TokenLogProbs<F>,
    w: WeightScheme,
) -> F {
    visual_gpt_score(pos, w) - visual_gpt_score(neg, w)
}

/// Max-abs scaling of finite raw scores. All-zero input keeps scale 1.
pub fn normalize_scores<F: Real>(raws: &[F]) -> (Vec<F>, NormalizationSpec<F>) {
    debug_assert!(
        raws.iter().all(|r| r.is_finite()),
        "raw scores must be finite"
    );
    let max = raws.iter().fold(F::zero(), |acc, r| acc.max(r.abs()));
    let scale = if max > F::zero() { max } else { F::one() };
    let spec = NormalizationSpec {
        kind: NormalizationKind::MaxAbs,
        scale,
    };
    (raws.iter().map(|&r| spec.apply(r)).collect(), spec)
}

/// Per-item max-abs scaling of candidate scores, used for display.
pub fn normalize_within<F: Real>(scores: &[F]) -> Vec<F> {
    normalize_scores(scores).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tlp(values: &[f64]) -> TokenLogProbs {
        TokenLogProbs::new(
            values
                .iter()
                .enumerate()
                .map(|(i, _)| format!("t{i}"))
                .collect(),
            values.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_mean() {
        assert_eq!(
            visual_gpt_score(&tlp(&[-2.0, -2.0, -2.0]), WeightScheme::Uniform),
            -2.0
        );
        assert_eq!(
            visual_gpt_score(&tlp(&[-1.0, -3.0]), WeightScheme::Uniform),
            -2.0
        );
    }

    #[test]
    fn generic_over_f32() {
        let t: TokenLogProbs<f32> = tlp(&[-1.0, -3.0]).cast();
        assert_eq!(visual_gpt_score(&t, WeightScheme::Uniform), -2.0f32);
    }

    #[test]
    fn syntax_bias_examples() {
        let w = WeightScheme::Uniform;
        assert_eq!(
            syntax_bias_raw(&tlp(&[-1.0, -1.0]), &tlp(&[-3.0, -3.0, -3.0]), w),
            2.0
        );
        assert_eq!(syntax_bias_raw(&tlp(&[-3.0]), &tlp(&[-1.0]), w), -2.0);
        let same = tlp(&[-0.5, -4.0]);
        assert_eq!(syntax_bias_raw(&same, &same, w), 0.0);
    }

    #[test]
    fn normalization_examples() {
        let (n, spec) = normalize_scores(&[2.0, -1.0, 0.0]);
        assert_eq!(n, [1.0, -0.5, 0.0]);
        assert_eq!(spec.scale, 2.0);
        let (n, spec) = normalize_scores(&[0.0, 0.0]);
        assert_eq!((n, spec.scale), (vec![0.0, 0.0], 1.0));
        assert_eq!(normalize_scores(&[5.0]).0, [1.0]);
        assert_eq!(normalize_scores::<f64>(&[]).0, Vec::<f64>::new());
    }

    #[test]
    fn invariant_violations_are_malformed() {
        let bad = |t: Vec<&str>, v: Vec<f64>| {
            TokenLogProbs::new(t.into_iter().map(String::from).collect(), v)
        };
        assert!(matches!(
            bad(vec!["a"], vec![-1.0, -2.0]),
            Err(ProviderError::MalformedResponse(_))
        ));
        assert!(matches!(
            bad(vec![], vec![]),
            Err(ProviderError::MalformedResponse(_))
        ));
        assert!(matches!(
            bad(vec!["a"], vec![0.5]),
            Err(ProviderError::MalformedResponse(_))
        ));
        assert!(matches!(
            bad(vec!["a"], vec![f64::NEG_INFINITY]),
            Err(ProviderError::MalformedResponse(_))
        ));
        assert!(bad(vec!["a"], vec![0.0]).is_ok());
    }

    #[test]
    fn weight_scheme_parse() {
        assert_eq!(
            "Uniform".parse::<WeightScheme>().unwrap(),
            WeightScheme::Uniform
        );
        assert!("idf".parse::<WeightScheme>().is_err());
    }
}
