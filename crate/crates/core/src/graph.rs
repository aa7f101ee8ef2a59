//! Text-attributed graph model, JSONL dataset format, sparsity simulation and metrics.
//!
//! Graphs are undirected and simple. A node's text is either present or missing;
//! missing is distinct from the empty string so later stages can tell which nodes
//! need reconstruction.
//!
//! Dataset files are JSON lines. The first record carries the class names, then
//! one record per node and per edge:
//!
//! ```text
//! {"type":"meta","classes":["Theory","Neural Networks"]}
//! {"type":"node","id":0,"text":"...","label":1,"split":"train"}
//! {"type":"node","id":1,"text":null,"label":null,"split":"out"}
//! {"type":"edge","u":0,"v":1}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::substream;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation error: {0}")]
    Invalid(String),
    #[error("node id {id} out of range (graph has {num_nodes} nodes)")]
    NodeOutOfRange { id: usize, num_nodes: usize },
    #[error("accuracy over an empty mask")]
    EmptyMask,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An unordered node pair stored as `(min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge(usize, usize);

impl Edge {
    /// Builds the canonical form of `{u, v}`. Self-pairs are representable here
    /// and rejected by graph validation.
    pub fn new(u: usize, v: usize) -> Self {
        if u <= v {
            Edge(u, v)
        } else {
            Edge(v, u)
        }
    }

    pub fn u(self) -> usize {
        self.0
    }

    pub fn v(self) -> usize {
        self.1
    }

    pub fn contains(self, node: usize) -> bool {
        self.0 == node || self.1 == node
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.0, self.1)
    }
}

/// Ordered set of undirected edges; iteration order is deterministic.
pub type EdgeSet = BTreeSet<Edge>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Out,
}

/// Disjoint train/val/test/out node sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: BTreeSet<usize>,
    pub val: BTreeSet<usize>,
    pub test: BTreeSet<usize>,
    pub out: BTreeSet<usize>,
}

impl SplitMasks {
    pub fn get(&self, split: Split) -> &BTreeSet<usize> {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
            Split::Out => &self.out,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut BTreeSet<usize> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
            Split::Out => &mut self.out,
        }
    }

    pub fn split_of(&self, node: usize) -> Option<Split> {
        [Split::Train, Split::Val, Split::Test, Split::Out]
            .into_iter()
            .find(|&s| self.get(s).contains(&node))
    }

    pub fn insert(&mut self, node: usize, split: Split) {
        self.get_mut(split).insert(node);
    }
}

/// Fraction of texts and edges to delete, and the seed that picks them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityConfig {
    ratio: f64,
    pub seed: u64,
}

impl SparsityConfig {
    pub fn new(ratio: f64, seed: u64) -> Result<Self, GraphError> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(GraphError::Invalid(format!("sparsity ratio {ratio} outside [0, 1]")));
        }
        Ok(Self { ratio, seed })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// `floor(ratio * n)`. The small slack absorbs products like `0.29 * 100`
    /// landing one ulp below an integer.
    pub fn removal_count(&self, n: usize) -> usize {
        ((self.ratio * n as f64 + 1e-9).floor() as usize).min(n)
    }
}

/// A validated, immutable text-attributed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct TextAttributedGraph {
    edges: EdgeSet,
    texts: Vec<Option<String>>,
    labels: Vec<Option<usize>>,
    class_names: Vec<String>,
    splits: SplitMasks,
    adjacency: Vec<Vec<usize>>,
}

impl TextAttributedGraph {
    /// Validates and builds a graph. Duplicate edges (in either orientation)
    /// collapse to one; self-loops and dangling endpoints are errors.
    pub fn new(
        texts: Vec<Option<String>>,
        labels: Vec<Option<usize>>,
        class_names: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        splits: SplitMasks,
    ) -> Result<Self, GraphError> {
        let n = texts.len();
        if labels.len() != n {
            return Err(GraphError::Invalid(format!(
                "{} labels for {} nodes",
                labels.len(),
                n
            )));
        }
        let mut edge_set = EdgeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(GraphError::Invalid(format!("self-loop on node {u}")));
            }
            if u >= n || v >= n {
                return Err(GraphError::Invalid(format!(
                    "dangling edge ({u}, {v}) in a graph of {n} nodes"
                )));
            }
            edge_set.insert(Edge::new(u, v));
        }
        for (i, label) in labels.iter().enumerate() {
            if let Some(l) = label {
                if *l >= class_names.len() {
                    return Err(GraphError::Invalid(format!(
                        "node {i} has unknown class {l} ({} classes)",
                        class_names.len()
                    )));
                }
            }
        }
        validate_splits(&splits, &labels)?;
        Ok(Self::assemble(edge_set, texts, labels, class_names, splits))
    }

    fn assemble(
        edges: EdgeSet,
        texts: Vec<Option<String>>,
        labels: Vec<Option<usize>>,
        class_names: Vec<String>,
        splits: SplitMasks,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); texts.len()];
        for e in &edges {
            adjacency[e.u()].push(e.v());
            adjacency[e.v()].push(e.u());
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            edges,
            texts,
            labels,
            class_names,
            splits,
            adjacency,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.texts.len()
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    pub fn texts(&self) -> &[Option<String>] {
        &self.texts
    }

    pub fn text(&self, node: usize) -> Option<&str> {
        self.texts.get(node).and_then(|t| t.as_deref())
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn splits(&self) -> &SplitMasks {
        &self.splits
    }

    /// Ascending, deduplicated neighbor ids.
    pub fn neighbors(&self, node: usize) -> Result<&[usize], GraphError> {
        self.adjacency
            .get(node)
            .map(Vec::as_slice)
            .ok_or(GraphError::NodeOutOfRange {
                id: node,
                num_nodes: self.num_nodes(),
            })
    }

    /// Same nodes, labels and splits with a different edge set.
    pub fn with_edges(&self, edges: EdgeSet) -> Result<Self, GraphError> {
        let n = self.num_nodes();
        if let Some(bad) = edges.iter().find(|e| e.u() == e.v() || e.v() >= n) {
            return Err(GraphError::Invalid(format!("invalid edge ({bad})")));
        }
        Ok(Self::assemble(
            edges,
            self.texts.clone(),
            self.labels.clone(),
            self.class_names.clone(),
            self.splits.clone(),
        ))
    }

    /// Same structure with replaced texts.
    pub fn with_texts(&self, texts: Vec<Option<String>>) -> Result<Self, GraphError> {
        if texts.len() != self.num_nodes() {
            return Err(GraphError::Invalid(format!(
                "{} texts for {} nodes",
                texts.len(),
                self.num_nodes()
            )));
        }
        Ok(Self::assemble(
            self.edges.clone(),
            texts,
            self.labels.clone(),
            self.class_names.clone(),
            self.splits.clone(),
        ))
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, GraphError> {
        let reader = BufReader::new(reader);
        let mut classes: Option<Vec<String>> = None;
        let mut nodes: BTreeMap<usize, NodeRecord> = BTreeMap::new();
        let mut edges = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line).map_err(|e| GraphError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            match record {
                Record::Meta { classes: c } => {
                    if classes.is_some() || !nodes.is_empty() || !edges.is_empty() {
                        return Err(GraphError::Parse {
                            line: line_no,
                            message: "meta record must be the first record".into(),
                        });
                    }
                    classes = Some(c);
                }
                Record::Node(node) => {
                    if classes.is_none() {
                        return Err(GraphError::Parse {
                            line: line_no,
                            message: "node record before meta record".into(),
                        });
                    }
                    let id = node.id;
                    if nodes.insert(id, node).is_some() {
                        return Err(GraphError::Parse {
                            line: line_no,
                            message: format!("duplicate node id {id}"),
                        });
                    }
                }
                Record::Edge { u, v } => {
                    if classes.is_none() {
                        return Err(GraphError::Parse {
                            line: line_no,
                            message: "edge record before meta record".into(),
                        });
                    }
                    edges.push((u, v));
                }
            }
        }
        let classes = classes.ok_or(GraphError::Parse {
            line: 0,
            message: "missing meta record".into(),
        })?;
        let n = nodes.len();
        if let Some((&last, _)) = nodes.iter().next_back() {
            if last + 1 != n {
                return Err(GraphError::Invalid(format!(
                    "node ids are not dense in [0, {n}): largest id is {last}"
                )));
            }
        }
        let mut texts = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut splits = SplitMasks::default();
        for (id, node) in nodes {
            texts.push(node.text);
            labels.push(node.label);
            if let Some(split) = node.split {
                splits.insert(id, split);
            }
        }
        Self::new(texts, labels, classes, edges, splits)
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<(), GraphError> {
        let mut w = BufWriter::new(writer);
        let meta = Record::Meta {
            classes: self.class_names.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&meta).map_err(std::io::Error::other)?)?;
        for id in 0..self.num_nodes() {
            let rec = Record::Node(NodeRecord {
                id,
                text: self.texts[id].clone(),
                label: self.labels[id],
                split: self.splits.split_of(id),
            });
            writeln!(w, "{}", serde_json::to_string(&rec).map_err(std::io::Error::other)?)?;
        }
        for e in &self.edges {
            let rec = Record::Edge { u: e.u(), v: e.v() };
            writeln!(w, "{}", serde_json::to_string(&rec).map_err(std::io::Error::other)?)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        self.to_writer(File::create(path)?)
    }
}

fn validate_splits(splits: &SplitMasks, labels: &[Option<usize>]) -> Result<(), GraphError> {
    let n = labels.len();
    let parts = [
        ("train", &splits.train),
        ("val", &splits.val),
        ("test", &splits.test),
        ("out", &splits.out),
    ];
    let mut seen = BTreeSet::new();
    for (name, set) in parts {
        for &node in set {
            if node >= n {
                return Err(GraphError::Invalid(format!("{name} split contains node {node} >= {n}")));
            }
            if !seen.insert(node) {
                return Err(GraphError::Invalid(format!("node {node} appears in more than one split")));
            }
        }
    }
    if let Some(&node) = splits.train.iter().find(|&&i| labels[i].is_none()) {
        return Err(GraphError::Invalid(format!("training node {node} has no label")));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    text: Option<String>,
    label: Option<usize>,
    #[serde(default)]
    split: Option<Split>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Meta { classes: Vec<String> },
    Node(NodeRecord),
    Edge { u: usize, v: usize },
}

/// Reads and validates a JSONL dataset.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<TextAttributedGraph, GraphError> {
    TextAttributedGraph::from_reader(File::open(path)?)
}

/// Deletes exactly `floor(ratio * N)` node texts and `floor(ratio * |E|)` edges,
/// each chosen uniformly without replacement from its own substream of the seed.
/// Labels and splits are untouched.
pub fn sparsify(g: &TextAttributedGraph, cfg: &SparsityConfig) -> TextAttributedGraph {
    let n = g.num_nodes();
    let mut texts = g.texts.clone();
    let text_drops = cfg.removal_count(n);
    if text_drops > 0 {
        let mut rng = substream(cfg.seed, "sparsify/texts");
        for i in rand::seq::index::sample(&mut rng, n, text_drops) {
            texts[i] = None;
        }
    }

    let edge_list: Vec<Edge> = g.edges.iter().copied().collect();
    let edge_drops = cfg.removal_count(edge_list.len());
    let mut keep = vec![true; edge_list.len()];
    if edge_drops > 0 {
        let mut rng = substream(cfg.seed, "sparsify/edges");
        for i in rand::seq::index::sample(&mut rng, edge_list.len(), edge_drops) {
            keep[i] = false;
        }
    }
    let edges: EdgeSet = edge_list
        .into_iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then_some(e))
        .collect();

    TextAttributedGraph::assemble(
        edges,
        texts,
        g.labels.clone(),
        g.class_names.clone(),
        g.splits.clone(),
    )
}

/// Fraction of `mask` nodes whose prediction equals their label.
pub fn accuracy<'a>(
    predictions: &[usize],
    g: &TextAttributedGraph,
    mask: impl IntoIterator<Item = &'a usize>,
) -> Result<f64, GraphError> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for &node in mask {
        let label = g
            .labels
            .get(node)
            .ok_or(GraphError::NodeOutOfRange {
                id: node,
                num_nodes: g.num_nodes(),
            })?
            .ok_or_else(|| GraphError::Invalid(format!("evaluated node {node} has no label")))?;
        let pred = *predictions.get(node).ok_or_else(|| {
            GraphError::Invalid(format!("no prediction for node {node}"))
        })?;
        total += 1;
        correct += usize::from(pred == label);
    }
    if total == 0 {
        return Err(GraphError::EmptyMask);
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> TextAttributedGraph {
        TextAttributedGraph::new(
            vec![Some("a".into()), Some("b".into()), None],
            vec![Some(0), Some(1), None],
            vec!["x".into(), "y".into()],
            [(0, 1), (2, 1)],
            SplitMasks::default(),
        )
        .unwrap()
    }

    const THREE_NODES: &str = r#"{"type":"meta","classes":["A","B"]}
{"type":"node","id":0,"text":"alpha","label":0,"split":"train"}
{"type":"node","id":1,"text":null,"label":1,"split":"test"}
{"type":"node","id":2,"text":"gamma","label":null,"split":"out"}
{"type":"edge","u":0,"v":1}
{"type":"edge","u":2,"v":1}
"#;

    #[test]
    fn loads_three_node_file() {
        let g = TextAttributedGraph::from_reader(THREE_NODES.as_bytes()).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.text(1), None);
        assert_eq!(g.class_names(), ["A", "B"]);
        assert!(g.splits().train.contains(&0));
    }

    #[test]
    fn duplicate_edges_collapse() {
        let src = format!("{THREE_NODES}{{\"type\":\"edge\",\"u\":1,\"v\":0}}\n");
        let g = TextAttributedGraph::from_reader(src.as_bytes()).unwrap();
        assert_eq!(g.edges().len(), 2);
    }

    #[test]
    fn self_loop_is_rejected() {
        let src = format!("{THREE_NODES}{{\"type\":\"edge\",\"u\":0,\"v\":0}}\n");
        let err = TextAttributedGraph::from_reader(src.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("self-loop"), "{err}");
    }

    #[test]
    fn dangling_edge_and_unknown_class_are_rejected() {
        let dangling = format!("{THREE_NODES}{{\"type\":\"edge\",\"u\":0,\"v\":9}}\n");
        assert!(matches!(
            TextAttributedGraph::from_reader(dangling.as_bytes()),
            Err(GraphError::Invalid(_))
        ));
        let bad_class = THREE_NODES.replace("\"label\":1", "\"label\":5");
        assert!(matches!(
            TextAttributedGraph::from_reader(bad_class.as_bytes()),
            Err(GraphError::Invalid(_))
        ));
    }

    #[test]
    fn malformed_record_reports_line() {
        let src = THREE_NODES.replace("{\"type\":\"edge\",\"u\":0,\"v\":1}", "{\"type\":\"edge\",\"u\":0}");
        match TextAttributedGraph::from_reader(src.as_bytes()) {
            Err(GraphError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn sparse_ids_are_rejected() {
        let src = THREE_NODES.replace("\"id\":2", "\"id\":7");
        assert!(TextAttributedGraph::from_reader(src.as_bytes()).is_err());
    }

    #[test]
    fn round_trips_through_jsonl() {
        let g = TextAttributedGraph::from_reader(THREE_NODES.as_bytes()).unwrap();
        let mut buf = Vec::new();
        g.to_writer(&mut buf).unwrap();
        let back = TextAttributedGraph::from_reader(buf.as_slice()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn neighbor_lists() {
        let g = path3();
        assert_eq!(g.neighbors(1).unwrap(), [0, 2]);
        assert!(g.neighbors(3).is_err());
        let isolated = TextAttributedGraph::new(
            vec![None, None],
            vec![None, None],
            vec![],
            [],
            SplitMasks::default(),
        )
        .unwrap();
        assert!(isolated.neighbors(0).unwrap().is_empty());
        let star = TextAttributedGraph::new(
            vec![None; 4],
            vec![None; 4],
            vec![],
            [(0, 3), (0, 1), (2, 0)],
            SplitMasks::default(),
        )
        .unwrap();
        assert_eq!(star.neighbors(0).unwrap(), [1, 2, 3]);
    }

    fn ten_by_ten() -> TextAttributedGraph {
        let texts = (0..10).map(|i| Some(format!("text {i}"))).collect();
        let edges: Vec<_> = (0..10).map(|i| (i, (i + 1) % 10)).collect();
        TextAttributedGraph::new(texts, vec![Some(0); 10], vec!["c".into()], edges, SplitMasks::default())
            .unwrap()
    }

    #[test]
    fn sparsify_identity_and_floor_counts() {
        let g = ten_by_ten();
        assert_eq!(sparsify(&g, &SparsityConfig::new(0.0, 1).unwrap()), g);
        let s = sparsify(&g, &SparsityConfig::new(0.2, 1).unwrap());
        assert_eq!(s.texts().iter().filter(|t| t.is_some()).count(), 8);
        assert_eq!(s.edges().len(), 8);
        assert_eq!(s.labels(), g.labels());
        let again = sparsify(&g, &SparsityConfig::new(0.2, 1).unwrap());
        assert_eq!(s, again);
        let all = sparsify(&g, &SparsityConfig::new(1.0, 1).unwrap());
        assert!(all.texts().iter().all(Option::is_none));
        assert!(all.edges().is_empty());
    }

    #[test]
    fn ratio_must_be_a_fraction() {
        assert!(SparsityConfig::new(1.5, 0).is_err());
        assert!(SparsityConfig::new(-0.1, 0).is_err());
    }

    #[test]
    fn accuracy_counts() {
        let g = TextAttributedGraph::new(
            vec![None; 4],
            vec![Some(0), Some(1), Some(1), Some(0)],
            vec!["a".into(), "b".into()],
            [],
            SplitMasks::default(),
        )
        .unwrap();
        let mask: BTreeSet<usize> = (0..4).collect();
        assert_eq!(accuracy(&[0, 1, 1, 0], &g, &mask).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0, 0, 1], &g, &mask).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 1], &g, &mask).unwrap(), 0.75);
        assert!(matches!(accuracy(&[0; 4], &g, &BTreeSet::new()), Err(GraphError::EmptyMask)));
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let mut splits = SplitMasks::default();
        splits.train.insert(0);
        splits.test.insert(0);
        let err = TextAttributedGraph::new(vec![None], vec![Some(0)], vec!["a".into()], [], splits);
        assert!(err.is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_graph() -> impl Strategy<Value = TextAttributedGraph> {
            (2usize..30).prop_flat_map(|n| {
                (
                    proptest::collection::vec(proptest::option::of("[a-z ]{0,12}"), n),
                    proptest::collection::vec((0..n, 0..n), 0..60),
                )
                    .prop_map(move |(texts, pairs)| {
                        let edges = pairs.into_iter().filter(|(u, v)| u != v);
                        TextAttributedGraph::new(
                            texts,
                            vec![Some(0); n],
                            vec!["only".into()],
                            edges,
                            SplitMasks::default(),
                        )
                        .unwrap()
                    })
            })
        }

        proptest! {
            #[test]
            fn sparsify_only_removes(g in arb_graph(), ratio in 0.0f64..=1.0, seed in any::<u64>()) {
                let cfg = SparsityConfig::new(ratio, seed).unwrap();
                let s = sparsify(&g, &cfg);
                prop_assert!(s.edges().is_subset(g.edges()));
                prop_assert_eq!(g.edges().len() - s.edges().len(), cfg.removal_count(g.edges().len()));
                for (before, after) in g.texts().iter().zip(s.texts()) {
                    if let Some(t) = after {
                        prop_assert_eq!(before.as_ref(), Some(t));
                    }
                }
                prop_assert_eq!(s, sparsify(&g, &cfg));
            }

            #[test]
            fn jsonl_round_trip(g in arb_graph()) {
                let mut buf = Vec::new();
                g.to_writer(&mut buf).unwrap();
                prop_assert_eq!(TextAttributedGraph::from_reader(buf.as_slice()).unwrap(), g);
            }
        }
    }
}
