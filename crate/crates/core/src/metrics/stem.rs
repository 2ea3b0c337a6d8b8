use std::borrow::Cow;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

fn english() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

/// True when the token has at least one letter and every letter is Latin.
pub fn is_latin_script(token: &str) -> bool {
    let mut letters = token.chars().filter(|c| c.is_alphabetic()).peekable();
    letters.peek().is_some()
        && letters.all(|c| c.is_ascii_alphabetic() || ('\u{00C0}'..='\u{024F}').contains(&c) || ('\u{1E00}'..='\u{1EFF}').contains(&c))
}

/// Porter2 stem for Latin-script tokens; everything else is returned as is.
pub fn stem(token: &str) -> Cow<'_, str> {
    if is_latin_script(token) {
        english().stem(token)
    } else {
        Cow::Borrowed(token)
    }
}
