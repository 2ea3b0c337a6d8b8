use std::sync::OnceLock;

use regex::Regex;

/// Leading or trailing runs of Unicode punctuation (general category P).
pub(crate) fn edge_punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\p{P}+|\p{P}+$").expect("valid regex"))
}

/// One punctuation/symbol character, or a maximal run of anything else that
/// is not whitespace.
pub(crate) fn metric_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{P}\p{S}]|[^\s\p{P}\p{S}]+").expect("valid regex"))
}

/// Surface word count: plain whitespace split, nothing stripped.
pub(crate) fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
