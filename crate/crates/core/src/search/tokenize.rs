use alloc::string::String;
use alloc::vec::Vec;

/// Lowercases and splits on non-alphanumeric characters. Tokens shorter than
/// two characters are dropped unless they are all digits.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| t.chars().nth(1).is_some() || t.chars().all(|c| c.is_numeric()))
        .map(lowercase)
        .collect()
}

fn lowercase(token: &str) -> String {
    token.chars().flat_map(char::to_lowercase).collect()
}

/// Canonical facet value: lowercase alphanumeric runs joined by single spaces.
/// Unlike [`tokenize`], short runs are kept so `Gate A` stays distinct.
pub fn normalize_facet(value: &str) -> String {
    let mut out = String::new();
    for part in value
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&lowercase(part));
    }
    out
}
