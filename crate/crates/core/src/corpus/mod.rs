//! Benchmark data model, JSONL ingestion and validation.
//!
//! A [`Benchmark`] holds two kinds of retrieval instances:
//!
//! - [`BenchmarkItem`]: one image, one or more positive references and one or
//!   more negatives. Every branch except Comprehensive is scored with
//!   Recall@1 over these.
//! - [`PairedItem`]: two images and two captions, scored with the pairwise
//!   text/image/group criteria.
//!
//! Images are opaque. The pipeline never decodes them; they are forwarded to
//! providers as PNG bytes.

mod io;
mod tokenize;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perturb::PosTag;

pub use io::{
    load_benchmark, load_pool, save_benchmark, save_metadata, write_jsonl, METADATA_FILE,
};
pub use tokenize::{canonical_text, tokenize, tokens_cover_text, TERMINAL_PUNCTUATION};
pub use validate::{validate, ValidationReport, Violation};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("item `{0}` has no positive reference")]
    MissingPositive(String),
    #[error("unknown taxonomy branch `{0}`")]
    UnknownBranch(String),
    #[error("invalid metadata sidecar {path}: {reason}")]
    Metadata { path: PathBuf, reason: String },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// The six SADE taxonomy branches, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    Comprehensive,
    Relation,
    Attribute,
    Atomic,
    Negate,
    Content,
}

impl Branch {
    pub const ALL: [Branch; 6] = [
        Branch::Comprehensive,
        Branch::Relation,
        Branch::Attribute,
        Branch::Atomic,
        Branch::Negate,
        Branch::Content,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Comprehensive => "Comprehensive",
            Branch::Relation => "Relation",
            Branch::Attribute => "Attribute",
            Branch::Atomic => "Atomic",
            Branch::Negate => "Negate",
            Branch::Content => "Content",
        }
    }

    /// Branches whose items are scored with Recall@1 and must carry exactly
    /// one positive.
    pub fn is_recall_branch(self) -> bool {
        self != Branch::Comprehensive
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Branch {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Branch::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CorpusError::UnknownBranch(s.to_string()))
    }
}

/// Branch plus the free-form dataset label it was drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaxonomyBranch {
    pub name: Branch,
    pub source: String,
}

impl TaxonomyBranch {
    pub fn new(name: Branch, source: impl Into<String>) -> Self {
        TaxonomyBranch {
            name,
            source: source.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// A candidate sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub id: String,
    pub text: String,
    pub polarity: Polarity,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_tags: Option<Vec<PosTag>>,
}

impl Reference {
    /// Builds a reference with canonical tokenization and no carried tags.
    pub fn new(id: impl Into<String>, text: impl Into<String>, polarity: Polarity) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Reference {
            id: id.into(),
            text,
            polarity,
            tokens,
            pos_tags: None,
        }
    }

    /// Builds a reference directly from tokens; the text is their canonical join.
    pub fn from_tokens(
        id: impl Into<String>,
        tokens: Vec<String>,
        pos_tags: Option<Vec<PosTag>>,
        polarity: Polarity,
    ) -> Self {
        Reference {
            id: id.into(),
            text: tokens.join(" "),
            polarity,
            tokens,
            pos_tags,
        }
    }

    pub fn canonical(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn is_positive(&self) -> bool {
        self.polarity == Polarity::Positive
    }
}

/// Image locator. Paths are resolved against a caller-supplied root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageRef {
    Path {
        path: PathBuf,
    },
    Inline {
        #[serde(with = "b64_bytes")]
        b64_png: Vec<u8>,
    },
}

impl ImageRef {
    pub fn inline(png: Vec<u8>) -> Self {
        ImageRef::Inline { b64_png: png }
    }

    /// Raw image bytes; relative paths are joined onto `root`.
    pub fn load_bytes(&self, root: &Path) -> Result<Vec<u8>, CorpusError> {
        match self {
            ImageRef::Inline { b64_png } => Ok(b64_png.clone()),
            ImageRef::Path { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    root.join(path)
                };
                std::fs::read(&full).map_err(|e| CorpusError::io(&full, e))
            }
        }
    }
}

mod b64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD
            .decode(s.as_bytes())
            .map_err(serde::de::Error::custom)
    }
}

/// One Recall@1 retrieval instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkItem {
    pub item_id: String,
    pub branch: TaxonomyBranch,
    pub image: Option<ImageRef>,
    pub positives: Vec<Reference>,
    pub negatives: Vec<Reference>,
}

impl BenchmarkItem {
    /// Candidates in scoring order: positives first, then negatives.
    pub fn candidates(&self) -> impl Iterator<Item = &Reference> {
        self.positives.iter().chain(self.negatives.iter())
    }

    pub fn candidate_count(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    /// The single positive of a Recall@1 item (the first one if several).
    pub fn positive(&self) -> Option<&Reference> {
        self.positives.first()
    }
}

/// Two images and two captions; `caption_i` describes `image_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedItem {
    pub pair_id: String,
    pub source: String,
    pub image_0: Option<ImageRef>,
    pub image_1: Option<ImageRef>,
    pub caption_0: Reference,
    pub caption_1: Reference,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub items: usize,
    pub images: usize,
    pub references: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub name: String,
    pub version: String,
    /// JSONL file this sidecar describes.
    #[serde(default)]
    pub file: String,
    pub counts: BTreeMap<Branch, BranchCounts>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Benchmark {
    pub items: Vec<BenchmarkItem>,
    pub pairs: Vec<PairedItem>,
    pub metadata: Metadata,
}

impl Benchmark {
    pub fn new(name: impl Into<String>, items: Vec<BenchmarkItem>, pairs: Vec<PairedItem>) -> Self {
        let mut b = Benchmark {
            items,
            pairs,
            metadata: Metadata {
                name: name.into(),
                version: "1".into(),
                ..Metadata::default()
            },
        };
        b.recount();
        b
    }

    /// Recomputes per-branch counts from the current contents.
    pub fn recount(&mut self) {
        self.metadata.counts = branch_counts(&self.items, &self.pairs);
    }

    pub fn len(&self) -> usize {
        self.items.len() + self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn branches(&self) -> Vec<Branch> {
        let mut seen: Vec<Branch> = self.items.iter().map(|i| i.branch.name).collect();
        if !self.pairs.is_empty() {
            seen.push(Branch::Comprehensive);
        }
        seen.sort();
        seen.dedup();
        seen
    }

    /// All references of all items, in file order.
    pub fn references(&self) -> impl Iterator<Item = &Reference> {
        self.items.iter().flat_map(|i| i.candidates())
    }
}

pub fn branch_counts(
    items: &[BenchmarkItem],
    pairs: &[PairedItem],
) -> BTreeMap<Branch, BranchCounts> {
    let mut counts: BTreeMap<Branch, BranchCounts> = BTreeMap::new();
    for item in items {
        let c = counts.entry(item.branch.name).or_default();
        c.items += 1;
        c.images += 1;
        c.references += item.candidate_count();
    }
    if !pairs.is_empty() {
        let c = counts.entry(Branch::Comprehensive).or_default();
        c.items += pairs.len();
        c.images += 2 * pairs.len();
        c.references += 2 * pairs.len();
    }
    counts
}

/// Groups items by taxonomy branch. Every item lands in exactly one group.
pub fn partition_by_branch(b: &Benchmark) -> BTreeMap<Branch, Vec<&BenchmarkItem>> {
    let mut parts: BTreeMap<Branch, Vec<&BenchmarkItem>> = BTreeMap::new();
    for item in &b.items {
        parts.entry(item.branch.name).or_default().push(item);
    }
    parts
}
