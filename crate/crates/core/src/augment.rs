//! Text propagation over edges, LLM text augmentation and aggregation.
//!
//! A node's propagated text is its own text followed by the texts of its
//! direct neighbors. Each propagated text is then sent through three prompts
//! (summary, keywords, soft label) and the pieces are concatenated into the
//! final node text according to an [`AggregationMode`].

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TextAttributedGraph;
use crate::llm::{CompletionRequest, Gateway, GatewayError, PromptKind};

pub const NEIGHBOR_SEPARATOR: &str = "\n[NBR] ";
pub const DEFAULT_CHAR_BUDGET: usize = 4000;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("node {node}: {source}")]
    Node {
        node: usize,
        #[source]
        source: GatewayError,
    },
    #[error("unknown aggregation mode '{0}' (expected OT, OT+Su, OT+KW, OT+SL or OT+SKWSL)")]
    UnknownMode(String),
    #[error("augmented text file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A parsed soft label: a class id, or `Unknown` when the completion named no class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SoftLabel {
    Class(usize),
    #[default]
    Unknown,
}

impl SoftLabel {
    pub fn class(self) -> Option<usize> {
        match self {
            SoftLabel::Class(c) => Some(c),
            SoftLabel::Unknown => None,
        }
    }

    /// The class name, or the empty string for `Unknown`.
    pub fn name(self, class_names: &[String]) -> &str {
        self.class()
            .and_then(|c| class_names.get(c))
            .map(String::as_str)
            .unwrap_or("")
    }
}

impl From<Option<usize>> for SoftLabel {
    fn from(c: Option<usize>) -> Self {
        c.map_or(SoftLabel::Unknown, SoftLabel::Class)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AugmentedNodeText {
    pub original: Option<String>,
    pub propagated: String,
    pub summary: String,
    pub keywords: String,
    pub soft_label: SoftLabel,
    /// The completion the soft label was parsed from.
    pub soft_label_raw: String,
    pub aggregated: String,
}

impl AugmentedNodeText {
    pub fn reaggregate(&mut self, mode: AggregationMode, class_names: &[String]) {
        self.aggregated = aggregate(self, mode, class_names);
    }
}

/// Which augmentation parts are appended to the propagated text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AggregationMode {
    /// Propagated text only.
    Ot,
    OtSummary,
    OtKeywords,
    OtSoftLabel,
    /// Summary, keywords and soft label, in that order.
    #[default]
    OtAll,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 5] = [
        AggregationMode::Ot,
        AggregationMode::OtSummary,
        AggregationMode::OtKeywords,
        AggregationMode::OtSoftLabel,
        AggregationMode::OtAll,
    ];

    fn parts(self) -> (bool, bool, bool) {
        match self {
            AggregationMode::Ot => (false, false, false),
            AggregationMode::OtSummary => (true, false, false),
            AggregationMode::OtKeywords => (false, true, false),
            AggregationMode::OtSoftLabel => (false, false, true),
            AggregationMode::OtAll => (true, true, true),
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationMode::Ot => "OT",
            AggregationMode::OtSummary => "OT+Su",
            AggregationMode::OtKeywords => "OT+KW",
            AggregationMode::OtSoftLabel => "OT+SL",
            AggregationMode::OtAll => "OT+SKWSL",
        })
    }
}

impl FromStr for AggregationMode {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AggregationMode::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| AugmentError::UnknownMode(s.to_owned()))
    }
}

impl TryFrom<String> for AggregationMode {
    type Error = AugmentError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AggregationMode> for String {
    fn from(m: AggregationMode) -> Self {
        m.to_string()
    }
}

fn truncate_chars(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((byte, _)) => &s[..byte],
        None => s,
    }
}

/// Own text (empty when missing) followed by each neighbor's text in ascending
/// id order, every neighbor prefixed with [`NEIGHBOR_SEPARATOR`]. Neighbors with
/// missing or empty text contribute nothing.
///
/// Output length never exceeds `char_budget` characters. The own text is kept
/// whole unless it alone exceeds the budget; the remaining room is shared
/// evenly across neighbors, and room unused by short neighbors is passed on to
/// longer ones. A neighbor whose share cannot fit the separator is dropped.
pub fn propagate_texts(g: &TextAttributedGraph, char_budget: usize) -> Vec<String> {
    let sep_len = NEIGHBOR_SEPARATOR.chars().count();
    (0..g.num_nodes())
        .map(|i| {
            let own = g.text(i).unwrap_or("");
            let own_len = own.chars().count();
            if own_len >= char_budget {
                return truncate_chars(own, char_budget).to_owned();
            }
            let nbr_texts: Vec<&str> = g
                .neighbors(i)
                .expect("node id in range")
                .iter()
                .filter_map(|&j| g.text(j))
                .filter(|t| !t.is_empty())
                .collect();
            let wants: Vec<usize> = nbr_texts.iter().map(|t| sep_len + t.chars().count()).collect();
            let caps = water_fill(&wants, char_budget - own_len);

            let mut out = String::with_capacity(own.len() + wants.iter().sum::<usize>());
            out.push_str(own);
            for (text, cap) in nbr_texts.iter().zip(caps) {
                if cap > sep_len {
                    out.push_str(NEIGHBOR_SEPARATOR);
                    out.push_str(truncate_chars(text, cap - sep_len));
                }
            }
            out
        })
        .collect()
}

/// Max-min fair split of `budget` across `wants`.
fn water_fill(wants: &[usize], mut budget: usize) -> Vec<usize> {
    let mut caps = vec![0; wants.len()];
    let mut order: Vec<usize> = (0..wants.len()).collect();
    order.sort_by_key(|&i| (wants[i], i));
    let mut left = wants.len();
    for i in order {
        let share = budget / left;
        caps[i] = wants[i].min(share);
        budget -= caps[i];
        left -= 1;
    }
    caps
}

/// Case-insensitive exact match of the trimmed completion, else the unique
/// class name contained in it, else `Unknown`.
pub fn parse_soft_label(raw: &str, class_names: &[String]) -> SoftLabel {
    let trimmed = raw.trim().to_lowercase();
    if let Some(i) = class_names.iter().position(|c| c.to_lowercase() == trimmed) {
        return SoftLabel::Class(i);
    }
    let mut hits = class_names
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_empty() && trimmed.contains(&c.to_lowercase()));
    match (hits.next(), hits.next()) {
        (Some((i, _)), None) => SoftLabel::Class(i),
        _ => SoftLabel::Unknown,
    }
}

/// Builds the final node text from the parts named by `mode`.
pub fn aggregate(a: &AugmentedNodeText, mode: AggregationMode, class_names: &[String]) -> String {
    let (summary, keywords, label) = mode.parts();
    let mut out = a.propagated.clone();
    if summary {
        out.push_str("\n[SUMMARY] ");
        out.push_str(&a.summary);
    }
    if keywords {
        out.push_str("\n[KEYWORDS] ");
        out.push_str(&a.keywords);
    }
    if label {
        out.push_str("\n[LABEL] ");
        out.push_str(a.soft_label.name(class_names));
    }
    out
}

/// One summary, keywords and soft-label completion per node over its
/// propagated text. Nodes with empty propagated text skip the calls and get
/// empty parts and an `Unknown` label. `aggregated` is filled with the default mode.
pub fn augment(
    g: &TextAttributedGraph,
    propagated: &[String],
    gateway: &Gateway,
    dataset_desc: &str,
) -> Result<Vec<AugmentedNodeText>, AugmentError> {
    const KINDS: [PromptKind; 3] = [PromptKind::Summary, PromptKind::Keywords, PromptKind::SoftLabel];
    let classes = g.class_names();
    let mut requests = Vec::new();
    let mut owners = Vec::new();
    for (node, text) in propagated.iter().enumerate() {
        if text.is_empty() {
            continue;
        }
        for kind in KINDS {
            let req = CompletionRequest::new(kind, dataset_desc, &[text], &[], classes)
                .map_err(|source| AugmentError::Node { node, source })?;
            requests.push(req);
            owners.push(node);
        }
    }
    let replies = gateway
        .complete_batch(&requests)
        .map_err(|(idx, source)| AugmentError::Node {
            node: owners[idx],
            source,
        })?;

    let mut out: Vec<AugmentedNodeText> = propagated
        .iter()
        .enumerate()
        .map(|(i, p)| AugmentedNodeText {
            original: g.text(i).map(str::to_owned),
            propagated: p.clone(),
            ..Default::default()
        })
        .collect();
    for ((req, node), reply) in requests.iter().zip(&owners).zip(replies) {
        let entry = &mut out[*node];
        match req.kind {
            PromptKind::Summary => entry.summary = reply.trim().to_owned(),
            PromptKind::Keywords => entry.keywords = reply.trim().to_owned(),
            PromptKind::SoftLabel => {
                entry.soft_label = parse_soft_label(&reply, classes);
                entry.soft_label_raw = reply;
            }
            PromptKind::EdgeJudge => unreachable!("not requested"),
        }
    }
    for entry in &mut out {
        entry.reaggregate(AggregationMode::default(), classes);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct AugmentedRecord {
    id: usize,
    original: Option<String>,
    propagated: String,
    summary: String,
    keywords: String,
    soft_label: Option<usize>,
    soft_label_raw: String,
}

/// Writes one JSON record per node.
pub fn write_augmented(path: impl AsRef<Path>, texts: &[AugmentedNodeText]) -> Result<(), AugmentError> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, a) in texts.iter().enumerate() {
        let rec = AugmentedRecord {
            id,
            original: a.original.clone(),
            propagated: a.propagated.clone(),
            summary: a.summary.clone(),
            keywords: a.keywords.clone(),
            soft_label: a.soft_label.class(),
            soft_label_raw: a.soft_label_raw.clone(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_augmented`] and re-aggregates with `mode`.
pub fn read_augmented(
    path: impl AsRef<Path>,
    mode: AggregationMode,
    class_names: &[String],
) -> Result<Vec<AugmentedNodeText>, AugmentError> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AugmentedRecord = serde_json::from_str(&line).map_err(|e| AugmentError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if rec.id != out.len() {
            return Err(AugmentError::Parse {
                line: idx + 1,
                message: format!("expected id {}, found {}", out.len(), rec.id),
            });
        }
        let mut a = AugmentedNodeText {
            original: rec.original,
            propagated: rec.propagated,
            summary: rec.summary,
            keywords: rec.keywords,
            soft_label: rec.soft_label.into(),
            soft_label_raw: rec.soft_label_raw,
            aggregated: String::new(),
        };
        a.reaggregate(mode, class_names);
        out.push(a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SplitMasks;
    use crate::llm::descriptions;

    fn graph(texts: Vec<Option<&str>>, edges: &[(usize, usize)], classes: &[&str]) -> TextAttributedGraph {
        let n = texts.len();
        TextAttributedGraph::new(
            texts.into_iter().map(|t| t.map(String::from)).collect(),
            vec![None; n],
            classes.iter().map(|s| s.to_string()).collect(),
            edges.iter().copied(),
            SplitMasks::default(),
        )
        .unwrap()
    }

    fn cora_classes() -> Vec<String> {
        [
            "Case-based",
            "Genetic Algorithms",
            "Neural Networks",
            "Probabilistic Methods",
            "Reinforcement Learning",
            "Rule Learning",
            "Theory",
        ]
        .map(String::from)
        .to_vec()
    }

    #[test]
    fn propagation_cases() {
        let g = graph(vec![Some("t")], &[], &[]);
        assert_eq!(propagate_texts(&g, 4000), vec!["t"]);

        let g = graph(vec![None, Some("abc")], &[(0, 1)], &[]);
        assert_eq!(propagate_texts(&g, 4000)[0], "\n[NBR] abc");

        let g = graph(vec![Some("a"), Some("b"), Some("c")], &[(0, 2), (0, 1)], &[]);
        assert_eq!(propagate_texts(&g, 4000)[0], "a\n[NBR] b\n[NBR] c");
    }

    #[test]
    fn propagation_respects_budget() {
        let long = "x".repeat(50);
        let g = graph(
            vec![Some("own text"), Some(&long), Some("short"), Some(&long)],
            &[(0, 1), (0, 2), (0, 3)],
            &[],
        );
        let out = propagate_texts(&g, 60);
        assert_eq!(out[0].chars().count(), 60, "{:?}", out[0]);
        assert!(out[0].starts_with("own text\n[NBR] "));
        assert!(out[0].contains("short"));
        // own text is truncated only when it alone is over budget
        assert_eq!(propagate_texts(&g, 3)[0], "own");
    }

    #[test]
    fn water_fill_redistributes() {
        assert_eq!(water_fill(&[2, 100, 100], 30), vec![2, 14, 14]);
        assert_eq!(water_fill(&[5, 5], 100), vec![5, 5]);
        assert!(water_fill(&[], 10).is_empty());
    }

    #[test]
    fn soft_label_parsing() {
        let classes = cora_classes();
        assert_eq!(parse_soft_label("Neural Networks", &classes), SoftLabel::Class(2));
        assert_eq!(parse_soft_label("  theory.\n", &classes), SoftLabel::Class(6));
        assert_eq!(parse_soft_label("no idea", &classes), SoftLabel::Unknown);
        // two class names inside the reply is ambiguous
        assert_eq!(parse_soft_label("Theory or Rule Learning", &classes), SoftLabel::Unknown);
    }

    #[test]
    fn aggregation_modes() {
        let classes = cora_classes();
        let a = AugmentedNodeText {
            propagated: "p".into(),
            summary: "s".into(),
            keywords: "k".into(),
            soft_label: SoftLabel::Class(6),
            ..Default::default()
        };
        assert_eq!(aggregate(&a, AggregationMode::Ot, &classes), "p");
        assert_eq!(
            aggregate(&a, AggregationMode::OtAll, &classes),
            "p\n[SUMMARY] s\n[KEYWORDS] k\n[LABEL] Theory"
        );
        assert_eq!(aggregate(&a, AggregationMode::OtKeywords, &classes), "p\n[KEYWORDS] k");
        let empty = AugmentedNodeText {
            propagated: "p".into(),
            ..Default::default()
        };
        assert_eq!(
            aggregate(&empty, AggregationMode::OtAll, &classes),
            "p\n[SUMMARY] \n[KEYWORDS] \n[LABEL] "
        );
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("OT+SKWSL".parse::<AggregationMode>().unwrap(), AggregationMode::OtAll);
        assert_eq!("ot+su".parse::<AggregationMode>().unwrap(), AggregationMode::OtSummary);
        assert!(matches!("OT+XX".parse::<AggregationMode>(), Err(AugmentError::UnknownMode(_))));
    }

    #[test]
    fn offline_augmentation() {
        let classes = cora_classes();
        let class_refs: Vec<&str> = classes.iter().map(String::as_str).collect();
        let g = graph(vec![Some("neural networks training"), None], &[], &class_refs);
        let prop = propagate_texts(&g, 4000);
        let out = augment(&g, &prop, &Gateway::offline(), descriptions::CORA).unwrap();
        assert_eq!(out[0].soft_label, SoftLabel::Class(2));
        assert_eq!(out[0].keywords, "networks, neural, training");
        assert_eq!(out[0].summary, "neural networks training");
        assert_eq!(out[1].summary, "");
        assert_eq!(out[1].keywords, "");
        assert_eq!(out[1].soft_label, SoftLabel::Unknown);
        assert!(out[0].aggregated.ends_with("[LABEL] Neural Networks"));
    }

    #[test]
    fn cached_augmentation_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let g = graph(vec![Some("rule learning. genetic search"), Some("theory")], &[(0, 1)], &["Theory", "Rule Learning"]);
        let prop = propagate_texts(&g, 4000);
        let gw = Gateway::offline().with_cache(crate::llm::ResponseCache::open(dir.path()).unwrap());
        let first = augment(&g, &prop, &gw, "").unwrap();
        let second = augment(&g, &prop, &gw, "").unwrap();
        assert_eq!(first, second);
        assert_eq!(gw.stats().cached, 6);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("aug.jsonl");
        let classes = vec!["A".to_string(), "B".to_string()];
        let g = graph(vec![Some("a b. b"), None, Some("b")], &[(0, 1)], &["A", "B"]);
        let prop = propagate_texts(&g, 100);
        let out = augment(&g, &prop, &Gateway::offline(), "").unwrap();
        write_augmented(&path, &out).unwrap();
        assert_eq!(read_augmented(&path, AggregationMode::OtAll, &classes).unwrap(), out);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_graph() -> impl Strategy<Value = (Vec<Option<String>>, Vec<(usize, usize)>)> {
            (1usize..12).prop_flat_map(|n| {
                (
                    proptest::collection::vec(proptest::option::of("[a-zé ]{0,30}"), n),
                    proptest::collection::vec((0..n, 0..n), 0..30),
                )
            })
        }

        fn build(texts: &[Option<String>], pairs: &[(usize, usize)]) -> TextAttributedGraph {
            TextAttributedGraph::new(
                texts.to_vec(),
                vec![None; texts.len()],
                vec![],
                pairs.iter().copied().filter(|(u, v)| u != v),
                SplitMasks::default(),
            )
            .unwrap()
        }

        proptest! {
            #[test]
            fn within_budget_and_reconstructs((texts, pairs) in arb_graph(), budget in 0usize..80) {
                let g = build(&texts, &pairs);
                let out = propagate_texts(&g, budget);
                let unbounded = propagate_texts(&g, usize::MAX);
                for (t, full) in out.iter().zip(&unbounded) {
                    prop_assert!(t.chars().count() <= budget);
                    if full.chars().count() <= budget {
                        prop_assert_eq!(t, full);
                    }
                }
            }

            #[test]
            fn permutation_equivariant((texts, pairs) in arb_graph(), rot in 0usize..12) {
                let n = texts.len();
                let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
                let g = build(&texts, &pairs);
                let mut new_texts = vec![None; n];
                for i in 0..n { new_texts[perm[i]] = texts[i].clone(); }
                let new_pairs: Vec<_> = pairs.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
                let h = build(&new_texts, &new_pairs);
                let a = propagate_texts(&g, 10_000);
                let b = propagate_texts(&h, 10_000);
                for i in 0..n {
                    // same multiset of pieces; order may differ because ids changed
                    let mut pa: Vec<&str> = a[i].split(NEIGHBOR_SEPARATOR).collect();
                    let mut pb: Vec<&str> = b[perm[i]].split(NEIGHBOR_SEPARATOR).collect();
                    prop_assert_eq!(pa.remove(0), pb.remove(0));
                    pa.sort_unstable();
                    pb.sort_unstable();
                    prop_assert_eq!(pa, pb);
                }
            }

            #[test]
            fn ot_mode_is_identity(p in ".{0,40}", s in ".{0,10}") {
                let a = AugmentedNodeText { propagated: p.clone(), summary: s, ..Default::default() };
                prop_assert_eq!(aggregate(&a, AggregationMode::Ot, &[]), p);
            }
        }
    }
}
