//! Deterministic rule-based stand-ins for the four completion kinds.

use std::collections::BTreeMap;

use super::{CompletionProvider, CompletionRequest, PromptKind, ProviderError};
use crate::tokens::{token_set, tokenize};

/// The first three sentences of `text` (or all of them if fewer).
pub fn offline_summarize(text: &str) -> String {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        let boundary = matches!(c, '.' | '!' | '?')
            && chars.peek().is_none_or(|next| next.is_whitespace());
        if boundary {
            let s = current.trim();
            if !s.is_empty() {
                sentences.push(s.to_owned());
            }
            current.clear();
            if sentences.len() == 3 {
                break;
            }
        }
    }
    if sentences.len() < 3 {
        let rest = current.trim();
        if !rest.is_empty() {
            sentences.push(rest.to_owned());
        }
    }
    sentences.join(" ")
}

/// The five most frequent tokens, ties broken lexicographically, comma-joined.
pub fn offline_keywords(text: &str) -> String {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for token in tokenize(text) {
        *counts.entry(token).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    // BTreeMap order is lexicographic and the sort is stable.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked
        .into_iter()
        .take(5)
        .map(|(t, _)| t)
        .collect::<Vec<_>>()
        .join(", ")
}

/// The class whose name tokens occur most often in the text; ties go to the
/// earlier class. Answers "Unknown" when no class name token occurs at all.
pub fn offline_soft_label(text: &str, class_names: &[String]) -> String {
    let tokens = tokenize(text);
    let mut best: Option<(usize, usize)> = None;
    for (i, name) in class_names.iter().enumerate() {
        let name_tokens = token_set(name);
        let hits = tokens.iter().filter(|t| name_tokens.contains(*t)).count();
        if hits > 0 && best.is_none_or(|(_, b)| hits > b) {
            best = Some((i, hits));
        }
    }
    best.map(|(i, _)| class_names[i].clone()).unwrap_or_else(|| "Unknown".into())
}

/// Jaccard similarity of the two token sets, rendered as a decimal.
pub fn offline_edge_score(text_a: &str, text_b: &str) -> String {
    let a = token_set(text_a);
    let b = token_set(text_b);
    let union = a.union(&b).count();
    let score = if union == 0 {
        0.0
    } else {
        a.intersection(&b).count() as f64 / union as f64
    };
    format!("{score:?}")
}

/// Answers every request with the matching rule-based function.
#[derive(Debug, Clone, Default)]
pub struct OfflineProvider;

impl CompletionProvider for OfflineProvider {
    fn kind(&self) -> &str {
        "offline"
    }

    fn model(&self) -> &str {
        "offline-rules-v1"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let text = |i: usize| request.texts.get(i).map(String::as_str).unwrap_or("");
        Ok(match request.kind {
            PromptKind::Summary => offline_summarize(text(0)),
            PromptKind::Keywords => offline_keywords(text(0)),
            PromptKind::SoftLabel => offline_soft_label(text(0), &request.class_names),
            PromptKind::EdgeJudge => offline_edge_score(text(0), text(1)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_score_extremes() {
        assert_eq!(offline_edge_score("a b", "a b"), "1.0");
        assert_eq!(offline_edge_score("a", "b"), "0.0");
        assert_eq!(offline_edge_score("", ""), "0.0");
        assert_eq!(offline_edge_score("a b", "b c"), format!("{:?}", 1.0 / 3.0));
    }

    #[test]
    fn keywords_by_frequency() {
        assert_eq!(offline_keywords("x x y"), "x, y");
        assert_eq!(offline_keywords("b a c a d e f"), "a, b, c, d, e");
        assert_eq!(offline_keywords(""), "");
    }

    #[test]
    fn summary_takes_three_sentences() {
        assert_eq!(offline_summarize("One. Two! Three? Four."), "One. Two! Three?");
        assert_eq!(offline_summarize("no terminator here"), "no terminator here");
        assert_eq!(offline_summarize("A. b"), "A. b");
        assert_eq!(offline_summarize("version 1.5 is out. ok"), "version 1.5 is out. ok");
        assert_eq!(offline_summarize(""), "");
    }

    #[test]
    fn soft_label_by_overlap() {
        let classes: Vec<String> = ["Case-based", "Genetic Algorithms", "Neural Networks", "Theory"]
            .map(String::from)
            .to_vec();
        assert_eq!(offline_soft_label("neural networks training", &classes), "Neural Networks");
        assert_eq!(offline_soft_label("", &classes), "Unknown");
        assert_eq!(offline_soft_label("nothing relevant", &classes), "Unknown");
        assert_eq!(offline_soft_label("theory theory of neural search", &classes), "Theory");
        assert_eq!(offline_soft_label("a theory of genetic search", &classes), "Genetic Algorithms");
    }
}
