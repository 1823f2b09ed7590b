//! Client for the `/v1/logprobs` wire protocol.
//!
//! Request: `{"model", "prompt", "image_b64_png", "continuation"}`.
//! Response: `{"tokens": [str], "logprobs": [float]}` in natural log.
//! 400 and 422 are rejections; transport failures and 5xx are retried.

use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::provider::{LogProbProvider, ProviderOptions, ScoreRequest};
use super::{ProviderError, TokenLogProbs};

pub const LOGPROBS_PATH: &str = "/v1/logprobs";

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    image_b64_png: Option<String>,
    continuation: &'a str,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    tokens: Vec<String>,
    logprobs: Vec<f64>,
}

enum Attempt {
    Done(Result<TokenLogProbs, ProviderError>),
    Transient(ProviderError),
}

pub struct HttpProvider {
    url: String,
    model: String,
    agent: ureq::Agent,
    retries: u32,
    backoff: Duration,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, opts: &ProviderOptions) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(opts.timeout))
            .build()
            .into();
        HttpProvider {
            url: format!("{}{}", base_url.into().trim_end_matches('/'), LOGPROBS_PATH),
            model: opts.model.clone(),
            agent,
            retries: opts.retries,
            backoff: opts.backoff,
        }
    }

    fn attempt(&self, body: &WireRequest<'_>) -> Attempt {
        let mut resp = match self.agent.post(&self.url).send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Transient(ProviderError::Unreachable(format!("{}: {e}", self.url)))
            }
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Transient(ProviderError::Unreachable(format!("reading body: {e}")))
            }
        };
        match status {
            200..=299 => Attempt::Done(
                serde_json::from_str::<WireResponse>(&text)
                    .map_err(|e| ProviderError::MalformedResponse(e.to_string()))
                    .and_then(|w| TokenLogProbs::new(w.tokens, w.logprobs)),
            ),
            500..=599 => Attempt::Transient(ProviderError::Rejected(format!(
                "status {status}: {}",
                text.trim()
            ))),
            _ => Attempt::Done(Err(ProviderError::Rejected(format!(
                "status {status}: {}",
                text.trim()
            )))),
        }
    }
}

impl LogProbProvider for HttpProvider {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn logprobs(&self, req: &ScoreRequest) -> Result<TokenLogProbs, ProviderError> {
        req.check()?;
        let body = WireRequest {
            model: &req.model,
            prompt: &req.prompt,
            image_b64_png: req.image.as_ref().map(|png| STANDARD.encode(png)),
            continuation: &req.continuation,
        };
        let mut last = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(self.backoff * attempt);
            }
            match self.attempt(&body) {
                Attempt::Done(result) => return result,
                Attempt::Transient(err) => {
                    log::debug!("attempt {} against {} failed: {err}", attempt + 1, self.url);
                    last = Some(err);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
