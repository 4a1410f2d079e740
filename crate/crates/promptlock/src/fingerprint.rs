//! N-gram leak detection.
//!
//! A protected text is reduced to the set of SHA-256 hashes of its 5-word
//! windows (case-folded, punctuation-stripped). Holding a [`Fingerprint`]
//! therefore reveals nothing about the plaintext, but any candidate string
//! sharing at least one 5-word window with the protected text is detected.

use std::collections::HashSet;

use sha2::{Digest, Sha256};

/// Number of consecutive words that constitute a leak when shared.
pub const WINDOW_WORDS: usize = 5;

/// Case-fold and strip punctuation, yielding the word sequence used for
/// window comparison.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let cleaned: String = raw
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(|c| c.to_lowercase())
                .collect();
            if cleaned.is_empty() {
                None
            } else {
                Some(cleaned)
            }
        })
        .collect()
}

/// Hashed set of every [`WINDOW_WORDS`]-word window of a protected text.
#[derive(Clone, Default)]
pub struct Fingerprint {
    hashes: HashSet<[u8; 32]>,
}

impl Fingerprint {
    pub fn of(text: &str) -> Self {
        let words = normalize_words(text);
        let mut hashes = HashSet::new();
        for win in words.windows(WINDOW_WORDS) {
            hashes.insert(hash_window(win));
        }
        Fingerprint { hashes }
    }

    /// True when the protected text had fewer than [`WINDOW_WORDS`] words,
    /// in which case nothing can match.
    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }

    /// True when `candidate` shares at least one window with the
    /// fingerprinted text.
    pub fn matches(&self, candidate: &str) -> bool {
        if self.hashes.is_empty() {
            return false;
        }
        let words = normalize_words(candidate);
        words
            .windows(WINDOW_WORDS)
            .any(|w| self.hashes.contains(&hash_window(w)))
    }
}

impl std::fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fingerprint")
            .field("windows", &self.hashes.len())
            .finish()
    }
}

fn hash_window(words: &[String]) -> [u8; 32] {
    let mut h = Sha256::new();
    for w in words {
        h.update(w.as_bytes());
        h.update([0u8]); // word separator, avoids boundary collisions
    }
    h.finalize().into()
}

/// Convenience: does `candidate` share a 5-word window with `protected`?
pub fn shares_window(protected: &str, candidate: &str) -> bool {
    Fingerprint::of(protected).matches(candidate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_texts_never_match() {
        let fp = Fingerprint::of("one two three four");
        assert!(fp.is_empty());
        assert!(!fp.matches("one two three four"));
    }

    #[test]
    fn exact_window_detected() {
        let fp = Fingerprint::of("alpha beta gamma delta epsilon zeta");
        assert!(fp.matches("xx alpha beta gamma delta epsilon yy"));
        assert!(!fp.matches("alpha beta gamma delta"));
    }

    #[test]
    fn case_and_punctuation_folded() {
        let fp = Fingerprint::of("The quick, brown fox JUMPS over");
        assert!(fp.matches("the QUICK brown fox jumps!"));
    }

    #[test]
    fn disjoint_text_does_not_match() {
        let fp = Fingerprint::of("alpha beta gamma delta epsilon");
        assert!(!fp.matches("one two three four five six seven"));
    }
}
