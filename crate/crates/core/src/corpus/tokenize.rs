//! Canonical word-level tokenization.

/// Punctuation detached from the end of a word as separate tokens.
pub const TERMINAL_PUNCTUATION: [char; 6] = ['.', ',', '!', '?', ';', ':'];

/// Detach terminal punctuation, then split on whitespace.
///
/// ```
/// use sade_core::corpus::tokenize;
/// assert_eq!(tokenize("A dog, running."), ["A", "dog", ",", "running", "."]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let stem = word.trim_end_matches(TERMINAL_PUNCTUATION);
        if !stem.is_empty() {
            tokens.push(stem.to_string());
        }
        tokens.extend(word[stem.len()..].chars().map(String::from));
    }
    tokens
}

/// The canonical form of `text`: its tokens joined by single spaces.
pub fn canonical_text(text: &str) -> String {
    tokenize(text).join(" ")
}

/// True when `tokens` are a segmentation of `text`, i.e. concatenating them
/// yields the text with all whitespace removed.
pub fn tokens_cover_text(tokens: &[String], text: &str) -> bool {
    let mut expected = text.chars().filter(|c| !c.is_whitespace());
    for tok in tokens {
        for c in tok.chars() {
            if expected.next() != Some(c) {
                return false;
            }
        }
    }
    expected.next().is_none()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detaches_runs_of_terminal_punctuation() {
        assert_eq!(tokenize("Wait?!"), ["Wait", "?", "!"]);
        assert_eq!(tokenize("  a   b  "), ["a", "b"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("..."), [".", ".", "."]);
    }

    #[test]
    fn inner_punctuation_stays_attached() {
        assert_eq!(tokenize("e.g. don't"), ["e.g", ".", "don't"]);
    }

    #[test]
    fn canonical_is_idempotent() {
        let once = canonical_text("A man,  riding a bike .");
        assert_eq!(once, "A man , riding a bike .");
        assert_eq!(canonical_text(&once), once);
    }

    #[test]
    fn coverage_check() {
        let toks = tokenize("a red bike.");
        assert!(tokens_cover_text(&toks, "a red bike."));
        assert!(!tokens_cover_text(&toks, "a red bikes."));
        assert!(tokens_cover_text(&["do".into(), "n't".into()], "don't"));
    }
}
