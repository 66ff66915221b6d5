//! Answer normalization shared by the metrics and the lexical index.
//!
//! Rules, applied in order: lowercase, drop ASCII punctuation, drop the
//! articles `a`/`an`/`the`, collapse whitespace.

/// Normalizes `text` into a list of tokens.
pub fn normalize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    stripped
        .split_whitespace()
        .filter(|tok| !matches!(*tok, "a" | "an" | "the"))
        .map(str::to_owned)
        .collect()
}

/// Normalized form joined back with single spaces.
pub fn normalize_joined(text: &str) -> String {
    normalize(text).join(" ")
}

/// Plain whitespace token count, used for length statistics.
pub fn whitespace_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_trailing_period() {
        assert_eq!(normalize("Il Coraggio."), vec!["il", "coraggio"]);
    }

    #[test]
    fn empty_input() {
        assert!(normalize("").is_empty());
    }

    #[test]
    fn articles_only() {
        assert!(normalize("The THE the").is_empty());
    }

    #[test]
    fn article_inside_word_is_kept() {
        assert_eq!(normalize("Theatre an anthem"), vec!["theatre", "anthem"]);
    }

    proptest! {
        #[test]
        fn idempotent_on_joined_output(s in "\\PC{0,40}") {
            let once = normalize_joined(&s);
            prop_assert_eq!(normalize_joined(&once), once);
        }
    }
}
