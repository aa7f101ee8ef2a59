//! Shared tokenizer for the offline providers.

use std::collections::BTreeSet;

/// Lowercases, splits on every non-alphanumeric character and drops empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_and_lowercases() {
        assert_eq!(tokenize("Neural-Networks, training!"), vec!["neural", "networks", "training"]);
        assert!(tokenize("  ..  ").is_empty());
        assert_eq!(tokenize("Type 1 Diabetes"), vec!["type", "1", "diabetes"]);
    }
}
