//! Structure augmentation: virtual edges between confident look-alikes,
//! PageRank importance over the densified graph, and LLM re-judgment of every
//! pair among the most important nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::SoftLabel;
use crate::embed::EmbeddingMatrix;
use crate::graph::{Edge, EdgeSet};
use crate::llm::{CompletionRequest, Gateway, GatewayError, PromptKind};
use crate::pool::map_bounded;

#[derive(Debug, Error)]
pub enum StructureError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("edge judgment for pair ({u}, {v}): {source}")]
    Gateway {
        u: usize,
        v: usize,
        #[source]
        source: GatewayError,
    },
    #[error("{file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Base edges plus every same-label pair whose embeddings have cosine above `tau1`.
/// Nodes with an `Unknown` soft label are never paired.
pub fn virtual_edges(h: &EmbeddingMatrix, soft_labels: &[SoftLabel], base: &EdgeSet, tau1: f64) -> EdgeSet {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, label) in soft_labels.iter().enumerate() {
        if let Some(c) = label.class() {
            groups.entry(c).or_default().push(i);
        }
    }
    let mut out = base.clone();
    for members in groups.values() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                if h.cosine(i, j) > tau1 {
                    out.insert(Edge::new(i, j));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PageRankParams {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRankResult {
    pub scores: Vec<f64>,
    pub iterations: usize,
    /// L1 change of the last iteration.
    pub delta: f64,
    pub converged: bool,
}

/// Power iteration with uniform teleport on an undirected graph. Isolated nodes
/// spread their mass uniformly. Stops once the L1 change drops below `tol`; if
/// `max_iter` is reached first the last iterate is returned with
/// `converged == false`.
pub fn pagerank(edges: &EdgeSet, n: usize, params: PageRankParams) -> Result<PageRankResult, StructureError> {
    let PageRankParams { damping, tol, max_iter } = params;
    if !(damping > 0.0 && damping < 1.0) {
        return Err(StructureError::InvalidParameter(format!("damping {damping} outside (0, 1)")));
    }
    if !(tol > 0.0) {
        return Err(StructureError::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    if let Some(e) = edges.iter().find(|e| e.v() >= n) {
        return Err(StructureError::InvalidParameter(format!("edge ({e}) outside {n} nodes")));
    }
    if n == 0 {
        return Ok(PageRankResult {
            scores: vec![],
            iterations: 0,
            delta: 0.0,
            converged: true,
        });
    }
    let mut nbrs = vec![Vec::new(); n];
    for e in edges {
        nbrs[e.u()].push(e.v());
        nbrs[e.v()].push(e.u());
    }
    for list in &mut nbrs {
        list.sort_unstable();
    }
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut share = vec![0.0; n];
    let mut delta = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut dangling = 0.0;
        for i in 0..n {
            if nbrs[i].is_empty() {
                dangling += x[i];
                share[i] = 0.0;
            } else {
                share[i] = x[i] / nbrs[i].len() as f64;
            }
        }
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        for i in 0..n {
            let inflow: f64 = nbrs[i].iter().map(|&j| share[j]).sum();
            next[i] = base + damping * inflow;
        }
        delta = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if delta < tol {
            break;
        }
    }
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    Ok(PageRankResult {
        scores: x,
        iterations,
        delta,
        converged: delta < tol,
    })
}

/// The `k` highest-scoring nodes; equal scores prefer the lower id.
pub fn select_top_k(scores: &[f64], k: usize) -> Result<BTreeSet<usize>, StructureError> {
    if k == 0 || k > scores.len() {
        return Err(StructureError::InvalidParameter(format!(
            "k = {k} outside [1, {}]",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order.into_iter().take(k).collect())
}

/// `max(1, floor(fraction * train_size))`.
pub fn selection_size(train_size: usize, fraction: f64) -> usize {
    ((fraction * train_size as f64 + 1e-9).floor() as usize).max(1)
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?").expect("valid regex"))
}

/// The first number in `raw` that lies in [0, 1].
pub fn parse_confidence(raw: &str) -> Option<f64> {
    number_regex()
        .find_iter(raw)
        .filter_map(|m| m.as_str().parse::<f64>().ok())
        .find(|v| (0.0..=1.0).contains(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceSource {
    /// Parsed from the first completion.
    Llm,
    /// Parsed from the single fresh retry after an unparsable completion.
    Retry,
    /// Both completions unparsable; the base adjacency value is kept.
    Fallback,
}

impl fmt::Display for ConfidenceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfidenceSource::Llm => "llm",
            ConfidenceSource::Retry => "retry",
            ConfidenceSource::Fallback => "fallback",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub score: f64,
    pub source: ConfidenceSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconfiguration {
    pub edges: EdgeSet,
    pub confidences: BTreeMap<Edge, Confidence>,
    /// Fresh calls made after an unparsable completion.
    pub retries: usize,
    pub fallbacks: usize,
}

/// Judges every pair inside `selected` with an edge-judgment prompt and keeps
/// the pair iff its confidence exceeds `tau2`. Pairs with an endpoint outside
/// `selected` keep their `base` value. `texts` and `label_names` are indexed
/// by node id.
pub fn reconfigure_edges(
    selected: &BTreeSet<usize>,
    texts: &[String],
    label_names: &[String],
    base: &EdgeSet,
    tau2: f64,
    gateway: &Gateway,
    dataset_desc: &str,
) -> Result<Reconfiguration, StructureError> {
    if !(0.0..=1.0).contains(&tau2) {
        return Err(StructureError::InvalidParameter(format!("tau2 {tau2} outside [0, 1]")));
    }
    if let Some(&bad) = selected.iter().find(|&&i| i >= texts.len() || i >= label_names.len()) {
        return Err(StructureError::InvalidParameter(format!("selected node {bad} has no text or label entry")));
    }
    let nodes: Vec<usize> = selected.iter().copied().collect();
    let mut pairs = Vec::new();
    for (a, &i) in nodes.iter().enumerate() {
        for &j in &nodes[a + 1..] {
            pairs.push(Edge::new(i, j));
        }
    }
    let request = |e: &Edge| {
        CompletionRequest::new(
            PromptKind::EdgeJudge,
            dataset_desc,
            &[&texts[e.u()], &texts[e.v()]],
            &[&label_names[e.u()], &label_names[e.v()]],
            &[],
        )
        .map_err(|source| StructureError::Gateway {
            u: e.u(),
            v: e.v(),
            source,
        })
    };
    let requests = pairs.iter().map(request).collect::<Result<Vec<_>, _>>()?;
    let replies = gateway
        .complete_batch(&requests)
        .map_err(|(idx, source)| StructureError::Gateway {
            u: pairs[idx].u(),
            v: pairs[idx].v(),
            source,
        })?;

    let unparsed: Vec<usize> = (0..pairs.len())
        .filter(|&i| parse_confidence(&replies[i]).is_none())
        .collect();
    let retried = map_bounded(&unparsed, 1, |_, &idx| {
        gateway
            .complete_fresh(&requests[idx])
            .map_err(|source| StructureError::Gateway {
                u: pairs[idx].u(),
                v: pairs[idx].v(),
                source,
            })
    })?;
    let retry_of: BTreeMap<usize, String> = unparsed.iter().copied().zip(retried).collect();

    let mut edges: EdgeSet = base
        .iter()
        .copied()
        .filter(|e| !(selected.contains(&e.u()) && selected.contains(&e.v())))
        .collect();
    let mut confidences = BTreeMap::new();
    let mut fallbacks = 0;
    for (idx, pair) in pairs.iter().enumerate() {
        let conf = match parse_confidence(&replies[idx]) {
            Some(score) => Confidence {
                score,
                source: ConfidenceSource::Llm,
            },
            None => match parse_confidence(&retry_of[&idx]) {
                Some(score) => Confidence {
                    score,
                    source: ConfidenceSource::Retry,
                },
                None => {
                    fallbacks += 1;
                    log::warn!("edge judgment for ({pair}) unparsable twice; keeping base value");
                    Confidence {
                        score: if base.contains(pair) { 1.0 } else { 0.0 },
                        source: ConfidenceSource::Fallback,
                    }
                }
            },
        };
        let keep = match conf.source {
            ConfidenceSource::Fallback => base.contains(pair),
            _ => conf.score > tau2,
        };
        if keep {
            edges.insert(*pair);
        }
        confidences.insert(*pair, conf);
    }
    Ok(Reconfiguration {
        edges,
        confidences,
        retries: unparsed.len(),
        fallbacks,
    })
}

/// All edge sets produced by structure augmentation for one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdjacencyStage {
    pub base: EdgeSet,
    pub virtual_edges: EdgeSet,
    pub reconfigured: EdgeSet,
    pub selected: BTreeSet<usize>,
    pub confidences: BTreeMap<Edge, Confidence>,
    pub pagerank: Vec<f64>,
    pub retries: usize,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureParams {
    pub tau1: f64,
    pub tau2: f64,
    pub k_fraction: f64,
    pub pagerank: PageRankParams,
}

impl Default for StructureParams {
    fn default() -> Self {
        Self {
            tau1: 0.8,
            tau2: 0.5,
            k_fraction: 0.10,
            pagerank: PageRankParams::default(),
        }
    }
}

impl AdjacencyStage {
    /// The stage used when structure augmentation is disabled: everything equals `base`.
    pub fn identity(base: &EdgeSet) -> Self {
        Self {
            base: base.clone(),
            virtual_edges: base.clone(),
            reconfigured: base.clone(),
            ..Default::default()
        }
    }

    /// Runs virtual edges, PageRank, selection and reconfiguration.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        base: &EdgeSet,
        h: &EmbeddingMatrix,
        soft_labels: &[SoftLabel],
        texts: &[String],
        label_names: &[String],
        train_size: usize,
        params: &StructureParams,
        gateway: &Gateway,
        dataset_desc: &str,
    ) -> Result<Self, StructureError> {
        let n = h.rows();
        let virtual_edges = virtual_edges(h, soft_labels, base, params.tau1);
        let pr = pagerank(&virtual_edges, n, params.pagerank)?;
        if !pr.converged {
            log::warn!(
                "pagerank stopped after {} iterations with L1 change {:e}",
                pr.iterations,
                pr.delta
            );
        }
        let k = selection_size(train_size, params.k_fraction).min(n);
        let selected = if n == 0 { BTreeSet::new() } else { select_top_k(&pr.scores, k)? };
        let reconf = reconfigure_edges(&selected, texts, label_names, base, params.tau2, gateway, dataset_desc)?;
        Ok(Self {
            base: base.clone(),
            virtual_edges,
            reconfigured: reconf.edges,
            selected,
            confidences: reconf.confidences,
            pagerank: pr.scores,
            retries: reconf.retries,
            fallbacks: reconf.fallbacks,
        })
    }

    /// Writes `base.edges`, `virtual.edges`, `reconfigured.edges` ("u v" per
    /// line), `selected.txt`, `pagerank.txt` and `confidences.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), StructureError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_edges(&dir.join("base.edges"), &self.base)?;
        write_edges(&dir.join("virtual.edges"), &self.virtual_edges)?;
        write_edges(&dir.join("reconfigured.edges"), &self.reconfigured)?;
        write_lines(&dir.join("selected.txt"), self.selected.iter())?;
        write_lines(&dir.join("pagerank.txt"), self.pagerank.iter().map(|v| format!("{v:?}")))?;
        write_lines(&dir.join("counts.txt"), [self.retries, self.fallbacks].iter())?;
        let mut w = csv::Writer::from_path(dir.join("confidences.csv")).map_err(csv_io)?;
        w.write_record(["u", "v", "score", "source"]).map_err(csv_io)?;
        for (e, c) in &self.confidences {
            w.write_record([
                e.u().to_string(),
                e.v().to_string(),
                format!("{:?}", c.score),
                c.source.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, StructureError> {
        let dir = dir.as_ref();
        let counts: Vec<usize> = read_lines(&dir.join("counts.txt"))?;
        if counts.len() != 2 {
            return Err(parse_err("counts.txt", 0, "expected two lines"));
        }
        let mut confidences = BTreeMap::new();
        let mut r = csv::Reader::from_path(dir.join("confidences.csv")).map_err(csv_io)?;
        for (idx, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_io)?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let bad = |m: &str| parse_err("confidences.csv", idx + 2, m);
            let u: usize = field(0).parse().map_err(|_| bad("bad u"))?;
            let v: usize = field(1).parse().map_err(|_| bad("bad v"))?;
            let score: f64 = field(2).parse().map_err(|_| bad("bad score"))?;
            let source = match field(3) {
                "llm" => ConfidenceSource::Llm,
                "retry" => ConfidenceSource::Retry,
                "fallback" => ConfidenceSource::Fallback,
                other => return Err(bad(&format!("unknown source '{other}'"))),
            };
            confidences.insert(Edge::new(u, v), Confidence { score, source });
        }
        Ok(Self {
            base: read_edges(&dir.join("base.edges"))?,
            virtual_edges: read_edges(&dir.join("virtual.edges"))?,
            reconfigured: read_edges(&dir.join("reconfigured.edges"))?,
            selected: read_lines(&dir.join("selected.txt"))?.into_iter().collect(),
            pagerank: read_lines(&dir.join("pagerank.txt"))?,
            confidences,
            retries: counts[0],
            fallbacks: counts[1],
        })
    }
}

fn csv_io(e: csv::Error) -> StructureError {
    StructureError::Io(std::io::Error::other(e))
}

fn parse_err(file: &str, line: usize, message: &str) -> StructureError {
    StructureError::Parse {
        file: file.to_owned(),
        line,
        message: message.to_owned(),
    }
}

fn write_lines<T: fmt::Display>(path: &Path, items: impl Iterator<Item = T>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        writeln!(w, "{item}")?;
    }
    w.flush()
}

pub fn write_edges(path: &Path, edges: &EdgeSet) -> std::io::Result<()> {
    write_lines(path, edges.iter())
}

fn read_lines<T: std::str::FromStr>(path: &Path) -> Result<Vec<T>, StructureError> {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(line.trim().parse().map_err(|_| parse_err(&name, idx + 1, "unparsable value"))?);
    }
    Ok(out)
}

pub fn read_edges(path: &Path) -> Result<EdgeSet, StructureError> {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = EdgeSet::new();
    for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace().map(str::parse::<usize>);
        match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(u)), Some(Ok(v)), None) => {
                out.insert(Edge::new(u, v));
            }
            _ => return Err(parse_err(&name, idx + 1, "expected two node ids")),
        }
    }
    Ok(out)
}
