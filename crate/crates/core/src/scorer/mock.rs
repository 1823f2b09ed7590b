//! Deterministic in-process providers.
//!
//! [`UnigramMock`] scores each token independently from a probability table
//! and ignores both prompt and image, so its scores are context-free and
//! order-invariant. [`ImageDigestMock`] only recognises a caption when it is
//! paired with the exact image bytes it was registered with.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::provider::{LogProbProvider, ScoreRequest};
use super::{ProviderError, TokenLogProbs};
use crate::corpus::tokenize;

/// Number of equiprobable slots sharing the unknown-token mass unless the
/// table says otherwise with a `#unknown_slots<TAB>N` line.
pub const DEFAULT_UNKNOWN_SLOTS: u32 = 100;

/// Floor on the unknown mass so a table summing to one stays finite.
const MIN_UNKNOWN_MASS: f64 = 1e-12;

/// Token probability table with fixed smoothing for unknown tokens:
/// `P(unknown) = (1 - Σ table) / unknown_slots`.
#[derive(Debug, Clone, PartialEq)]
pub struct MockTable {
    probs: HashMap<String, f64>,
    unknown_mass: f64,
    unknown_slots: u32,
}

impl MockTable {
    pub fn new(
        probs: impl IntoIterator<Item = (String, f64)>,
        unknown_slots: u32,
    ) -> Result<Self, String> {
        let probs: HashMap<String, f64> = probs
            .into_iter()
            .map(|(t, p)| (t.to_lowercase(), p))
            .collect();
        if let Some((t, p)) = probs.iter().find(|(_, p)| !(**p > 0.0 && **p <= 1.0)) {
            return Err(format!("probability of `{t}` is {p}, outside (0, 1]"));
        }
        let total: f64 = probs.values().sum();
        if total > 1.0 + 1e-9 {
            return Err(format!("probabilities sum to {total} > 1"));
        }
        if unknown_slots == 0 {
            return Err("unknown_slots must be positive".into());
        }
        Ok(MockTable {
            probs,
            unknown_mass: (1.0 - total).max(MIN_UNKNOWN_MASS),
            unknown_slots,
        })
    }

    /// Parses `token<TAB>probability` lines.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut probs = Vec::new();
        let mut slots = DEFAULT_UNKNOWN_SLOTS;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: missing tab", idx + 1))?;
            if key == "#unknown_slots" {
                slots = value
                    .trim()
                    .parse()
                    .map_err(|e| format!("line {}: {e}", idx + 1))?;
                continue;
            }
            if key.starts_with('#') {
                continue;
            }
            let p: f64 = value
                .trim()
                .parse()
                .map_err(|e| format!("line {}: {e}", idx + 1))?;
            probs.push((key.to_string(), p));
        }
        MockTable::new(probs, slots)
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let err = |reason: String| ProviderError::MockTable {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        MockTable::parse(&text).map_err(err)
    }

    pub fn probability(&self, token: &str) -> Option<f64> {
        self.probs.get(&token.to_lowercase()).copied()
    }

    pub fn unknown_mass(&self) -> f64 {
        self.unknown_mass
    }

    pub fn unknown_slots(&self) -> u32 {
        self.unknown_slots
    }

    pub fn logprob(&self, token: &str) -> f64 {
        match self.probability(token) {
            Some(p) => p.ln(),
            None => (self.unknown_mass / f64::from(self.unknown_slots)).ln(),
        }
    }
}

/// Context-free log-probability of `token` under `table`.
pub fn mock_logprob(token: &str, table: &MockTable) -> f64 {
    table.logprob(token)
}

/// Unigram provider over a [`MockTable`], tokenizing with the corpus tokenizer.
#[derive(Debug, Clone)]
pub struct UnigramMock {
    table: MockTable,
    model: String,
}

impl UnigramMock {
    pub fn new(table: MockTable, model: impl Into<String>) -> Self {
        UnigramMock {
            table,
            model: model.into(),
        }
    }

    pub fn from_file(path: &Path, model: impl Into<String>) -> Result<Self, ProviderError> {
        Ok(UnigramMock::new(MockTable::from_file(path)?, model))
    }

    pub fn table(&self) -> &MockTable {
        &self.table
    }
}

impl LogProbProvider for UnigramMock {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn logprobs(&self, req: &ScoreRequest) -> Result<TokenLogProbs, ProviderError> {
        req.check()?;
        let tokens = tokenize(&req.continuation);
        let logprobs = tokens.iter().map(|t| self.table.logprob(t)).collect();
        TokenLogProbs::new(tokens, logprobs)
    }
}

type ImageDigest = [u8; 32];

fn digest(bytes: &[u8]) -> ImageDigest {
    let mut out = [0u8; 32];
    out.copy_from_slice(Sha256::digest(bytes).as_slice());
    out
}

/// Image-sensitive provider: a registered (image, caption) pair scores
/// `favored_logprob` per token; any other combination gets pseudo-random
/// log-probabilities in `[-4, -1)` hashed from the image digest, the
/// caption and the token position.
#[derive(Debug, Clone)]
pub struct ImageDigestMock {
    favored: HashMap<ImageDigest, HashSet<String>>,
    favored_logprob: f64,
    model: String,
}

impl ImageDigestMock {
    pub fn new(model: impl Into<String>) -> Self {
        ImageDigestMock {
            favored: HashMap::new(),
            favored_logprob: -0.05,
            model: model.into(),
        }
    }

    pub fn favor(&mut self, image: &[u8], continuation: &str) {
        self.favored
            .entry(digest(image))
            .or_default()
            .insert(tokenize(continuation).join(" "));
    }
}

impl LogProbProvider for ImageDigestMock {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn logprobs(&self, req: &ScoreRequest) -> Result<TokenLogProbs, ProviderError> {
        req.check()?;
        let tokens = tokenize(&req.continuation);
        let canonical = tokens.join(" ");
        let image = digest(req.image.as_deref().unwrap_or_default());
        let hit = self
            .favored
            .get(&image)
            .is_some_and(|set| set.contains(&canonical));
        let logprobs = (0..tokens.len())
            .map(|i| {
                if hit {
                    return self.favored_logprob;
                }
                let mut h = Sha256::new();
                h.update(image);
                h.update(canonical.as_bytes());
                h.update((i as u64).to_le_bytes());
                let d = h.finalize();
                let mut word = [0u8; 8];
                word.copy_from_slice(&d[..8]);
                let u = (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64;
                -1.0 - 3.0 * u
            })
            .collect();
        TokenLogProbs::new(tokens, logprobs)
    }
}
