//! Lexicon-plus-suffix part-of-speech tagger.
//!
//! Tagging order for each token:
//!
//! 1. punctuation-only tokens are `OTHER`, numerals are `NUM`;
//! 2. lowercase lexicon lookup;
//! 3. suffix rules: `-ly` is `ADV`; `-ing`/`-ed` is `ADJ` after a
//!    determiner and `VERB` otherwise; `-s` is `VERB` directly after a noun or
//!    pronoun (third-person present) and a plural `NOUN` otherwise;
//! 4. anything else is `NOUN`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::PerturbError;

static BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Adj,
    Verb,
    Adv,
    Det,
    Pron,
    Adp,
    Conj,
    Num,
    Part,
    Other,
}

impl PosTag {
    pub const ALL: [PosTag; 11] = [
        PosTag::Noun,
        PosTag::Adj,
        PosTag::Verb,
        PosTag::Adv,
        PosTag::Det,
        PosTag::Pron,
        PosTag::Adp,
        PosTag::Conj,
        PosTag::Num,
        PosTag::Part,
        PosTag::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Adj => "ADJ",
            PosTag::Verb => "VERB",
            PosTag::Adv => "ADV",
            PosTag::Det => "DET",
            PosTag::Pron => "PRON",
            PosTag::Adp => "ADP",
            PosTag::Conj => "CONJ",
            PosTag::Num => "NUM",
            PosTag::Part => "PART",
            PosTag::Other => "OTHER",
        }
    }

    /// Nouns and adjectives: the object- and attribute-bearing words.
    pub fn is_content(self) -> bool {
        matches!(self, PosTag::Noun | PosTag::Adj)
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PosTag::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown POS tag `{s}`"))
    }
}

/// Closed-class word list mapping lowercase tokens to their majority tag.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, PosTag>,
}

impl Lexicon {
    /// Parses `token<TAB>TAG` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, PerturbError> {
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| PerturbError::Lexicon {
                line: idx + 1,
                reason,
            };
            let (token, tag) = line
                .split_once('\t')
                .ok_or_else(|| bad("missing tab separator".into()))?;
            if token.is_empty() || token.chars().any(char::is_uppercase) {
                return Err(bad(format!("token `{token}` must be non-empty lowercase")));
            }
            entries.insert(token.to_string(), tag.trim().parse().map_err(bad)?);
        }
        Ok(Lexicon { entries })
    }

    /// The lexicon shipped with the crate (5,000 frequent English words).
    pub fn bundled() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| {
            Lexicon::parse(BUNDLED_LEXICON).expect("bundled lexicon is well-formed")
        })
    }

    pub fn get(&self, token: &str) -> Option<PosTag> {
        self.entries.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tagger<'a> {
    lexicon: &'a Lexicon,
}

impl Default for Tagger<'static> {
    fn default() -> Self {
        Tagger {
            lexicon: Lexicon::bundled(),
        }
    }
}

impl<'a> Tagger<'a> {
    pub fn new(lexicon: &'a Lexicon) -> Self {
        Tagger { lexicon }
    }

    pub fn tag<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<PosTag> {
        let mut tags = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let prev = tags.last().copied();
            tags.push(self.tag_one(tok.as_ref(), prev));
        }
        tags
    }

    fn tag_one(&self, token: &str, prev: Option<PosTag>) -> PosTag {
        if !token.chars().any(char::is_alphanumeric) {
            return PosTag::Other;
        }
        if is_numeral(token) {
            return PosTag::Num;
        }
        let lower = token.to_lowercase();
        if let Some(tag) = self.lexicon.get(&lower) {
            return tag;
        }
        let n = lower.chars().count();
        if n > 3 && lower.ends_with("ly") {
            PosTag::Adv
        } else if (n > 4 && lower.ends_with("ing")) || (n > 3 && lower.ends_with("ed")) {
            if prev == Some(PosTag::Det) {
                PosTag::Adj
            } else {
                PosTag::Verb
            }
        } else if n > 2 && lower.ends_with('s') && !lower.ends_with("ss") {
            match prev {
                Some(PosTag::Noun | PosTag::Pron) => PosTag::Verb,
                _ => PosTag::Noun,
            }
        } else {
            PosTag::Noun
        }
    }
}

fn is_numeral(token: &str) -> bool {
    token.chars().any(|c| c.is_ascii_digit())
        && token
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | ','))
}

/// Tags `tokens` with the bundled lexicon.
pub fn pos_tag<S: AsRef<str>>(tokens: &[S]) -> Vec<PosTag> {
    Tagger::default().tag(tokens)
}
