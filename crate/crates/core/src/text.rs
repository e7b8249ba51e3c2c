//! Text normalization shared by filtering, indexing and auditing.
//!
//! Matching always runs on NFC-normalized, lowercased text split on
//! non-alphanumeric characters. Stored document text is never modified.

use unicode_normalization::UnicodeNormalization;

/// NFC-normalizes and lowercases `text`.
pub fn normalize(text: &str) -> String {
    text.nfc().collect::<String>().to_lowercase()
}

/// Alphanumeric tokens of the normalized text, in order of occurrence.
pub fn tokens(text: &str) -> Vec<String> {
    normalize(text)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// True if `needle` occurs as a contiguous run of tokens inside `haystack`.
pub fn contains_token_run(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_lowercases() {
        assert_eq!(tokens("Massive FLOOD, downtown!"), ["massive", "flood", "downtown"]);
        assert_eq!(tokens("#a#b"), ["a", "b"]);
        assert!(tokens("  ...  ").is_empty());
    }

    #[test]
    fn composes_before_matching() {
        // "e" + combining acute accent composes to a single alphanumeric char
        let decomposed = "cafe\u{301} flood";
        assert_eq!(tokens(decomposed), ["caf\u{e9}", "flood"]);
    }

    #[test]
    fn token_runs() {
        let hay = tokens("rescues in Bellaire near I-610 today");
        assert!(contains_token_run(&hay, &tokens("I-610")));
        assert!(contains_token_run(&hay, &tokens("bellaire")));
        assert!(!contains_token_run(&hay, &tokens("bell")));
        assert!(!contains_token_run(&hay, &[]));
    }
}
