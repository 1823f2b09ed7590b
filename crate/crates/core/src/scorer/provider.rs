use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use super::{HttpProvider, ProviderError, TokenLogProbs, UnigramMock};

/// One scoring call: log-probabilities of `continuation` given `prompt` and,
/// when present, the PNG `image`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreRequest {
    pub prompt: String,
    pub image: Option<Vec<u8>>,
    pub continuation: String,
    pub model: String,
}

impl ScoreRequest {
    pub fn text_only(
        model: impl Into<String>,
        prompt: impl Into<String>,
        continuation: impl Into<String>,
    ) -> Self {
        ScoreRequest {
            prompt: prompt.into(),
            image: None,
            continuation: continuation.into(),
            model: model.into(),
        }
    }

    pub fn with_image(mut self, png: Option<Vec<u8>>) -> Self {
        self.image = png;
        self
    }

    pub(crate) fn check(&self) -> Result<(), ProviderError> {
        if self.continuation.trim().is_empty() {
            return Err(ProviderError::Rejected("empty continuation".into()));
        }
        Ok(())
    }
}

/// Source of per-token conditional log-probabilities.
pub trait LogProbProvider: Send + Sync {
    /// Model identifier reported in manifests and reports.
    fn model_id(&self) -> &str;

    /// Natural-log probabilities of the continuation tokens.
    fn logprobs(&self, req: &ScoreRequest) -> Result<TokenLogProbs, ProviderError>;
}

impl<P: LogProbProvider + ?Sized> LogProbProvider for Box<P> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn logprobs(&self, req: &ScoreRequest) -> Result<TokenLogProbs, ProviderError> {
        (**self).logprobs(req)
    }
}

impl<P: LogProbProvider + ?Sized> LogProbProvider for &P {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn logprobs(&self, req: &ScoreRequest) -> Result<TokenLogProbs, ProviderError> {
        (**self).logprobs(req)
    }
}

/// Where log-probabilities come from: an HTTP service or a local mock table
/// (`mock://<table-file>`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Http(String),
    Mock(PathBuf),
}

impl FromStr for Endpoint {
    type Err = ProviderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("mock://") {
            if path.is_empty() {
                return Err(ProviderError::BadEndpoint(s.to_string()));
            }
            Ok(Endpoint::Mock(PathBuf::from(path)))
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(Endpoint::Http(s.trim_end_matches('/').to_string()))
        } else {
            Err(ProviderError::BadEndpoint(s.to_string()))
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Http(url) => f.write_str(url),
            Endpoint::Mock(path) => write!(f, "mock://{}", path.display()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProviderOptions {
    /// Model identifier sent with every request.
    pub model: String,
    /// Extra attempts after a transient transport failure.
    pub retries: u32,
    pub timeout: Duration,
    pub backoff: Duration,
}

impl Default for ProviderOptions {
    fn default() -> Self {
        ProviderOptions {
            model: "default".into(),
            retries: 3,
            timeout: Duration::from_secs(120),
            backoff: Duration::from_millis(200),
        }
    }
}

pub fn open_provider(
    endpoint: &Endpoint,
    opts: &ProviderOptions,
) -> Result<Box<dyn LogProbProvider>, ProviderError> {
    Ok(match endpoint {
        Endpoint::Http(url) => Box::new(HttpProvider::new(url.clone(), opts)),
        Endpoint::Mock(path) => Box::new(UnigramMock::from_file(path, opts.model.clone())?),
    })
}

/// One-shot request against `endpoint` with default options.
pub fn request_logprobs(
    req: &ScoreRequest,
    endpoint: &Endpoint,
) -> Result<TokenLogProbs, ProviderError> {
    let opts = ProviderOptions {
        model: req.model.clone(),
        ..ProviderOptions::default()
    };
    open_provider(endpoint, &opts)?.logprobs(req)
}
