//! Planted-partition benchmark graphs with class vocabularies.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Split, SplitMasks, TextAttributedGraph};
use crate::rng::substream;

#[derive(Debug, Error, PartialEq)]
#[error("infeasible synthetic spec: {0}")]
pub struct SynthError(pub String);

/// Parameters of [`gen_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub nodes: usize,
    pub classes: usize,
    /// Edge probability between two nodes of the same block.
    pub intra: f64,
    /// Edge probability between two nodes of different blocks.
    pub inter: f64,
    pub vocab_per_class: usize,
    pub words_per_node: usize,
    /// Probability that a word is drawn from the shared noise vocabulary.
    pub noise: f64,
    pub noise_vocab: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            nodes: 600,
            classes: 4,
            intra: 0.05,
            inter: 0.002,
            vocab_per_class: 40,
            words_per_node: 24,
            noise: 0.5,
            noise_vocab: 200,
            train_fraction: 0.6,
            val_fraction: 0.2,
            seed: 7,
        }
    }
}

const CLASS_NAMES: [&str; 12] = [
    "Astronomy",
    "Botany",
    "Chemistry",
    "Geology",
    "Linguistics",
    "Medicine",
    "Music",
    "Oceanography",
    "Philosophy",
    "Robotics",
    "Volcanology",
    "Zoology",
];

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st"];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "y"];

fn class_names(k: usize) -> Vec<String> {
    (0..k)
        .map(|c| match CLASS_NAMES.get(c) {
            Some(name) => (*name).to_string(),
            None => format!("Topic{c}"),
        })
        .collect()
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
        w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
    }
    w
}

/// Draws `count` fresh words not already in `taken`.
fn fresh_words(rng: &mut ChaCha8Rng, count: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = pseudo_word(rng);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn node_text(rng: &mut ChaCha8Rng, class_vocab: &[String], noise_vocab: &[String], spec: &SynthSpec) -> String {
    let mut words = Vec::with_capacity(spec.words_per_node);
    for _ in 0..spec.words_per_node {
        let from_noise = !noise_vocab.is_empty() && rng.random_bool(spec.noise);
        let pool = if from_noise { noise_vocab } else { class_vocab };
        words.push(pool[rng.random_range(0..pool.len())].as_str());
    }
    let mut text = String::new();
    for (i, sentence) in words.chunks(6).enumerate() {
        if i > 0 {
            text.push(' ');
        }
        let mut s = sentence.join(" ");
        if let Some(first) = s.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        text.push_str(&s);
        text.push('.');
    }
    text
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError(m));
        if self.classes < 2 {
            return err(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.nodes < self.classes {
            return err(format!("{} nodes cannot fill {} classes", self.nodes, self.classes));
        }
        for (name, p) in [("intra", self.intra), ("inter", self.inter), ("noise", self.noise)] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} probability {p} outside [0, 1]"));
            }
        }
        if !(self.intra > self.inter) {
            return err(format!(
                "intra-class probability {} must exceed inter-class probability {}",
                self.intra, self.inter
            ));
        }
        if self.vocab_per_class == 0 || self.words_per_node == 0 {
            return err("vocabulary size and words per node must be positive".into());
        }
        if self.noise > 0.0 && self.noise_vocab == 0 {
            return err("a positive noise fraction needs a noise vocabulary".into());
        }
        let (tr, va) = (self.train_fraction, self.val_fraction);
        if !(tr >= 0.0 && va >= 0.0 && tr + va <= 1.0) {
            return err(format!("split fractions {tr} + {va} must be nonnegative and sum to at most 1"));
        }
        Ok(())
    }

    /// Block of node `i`: nodes are laid out in contiguous, near-equal blocks.
    pub fn block_of(&self, i: usize) -> usize {
        i * self.classes / self.nodes
    }
}

/// Planted-partition graph whose node texts mix a per-class vocabulary (which
/// contains the lowercase class name) with a shared noise vocabulary. Labels
/// are the planted blocks; every node lands in train, val or test.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<TextAttributedGraph, SynthError> {
    spec.validate()?;
    let names = class_names(spec.classes);
    let mut taken: BTreeSet<String> = names.iter().map(|n| n.to_lowercase()).collect();

    let mut vocab_rng = substream(spec.seed, "synth/vocab");
    let class_vocab: Vec<Vec<String>> = names
        .iter()
        .map(|name| {
            let mut v = vec![name.to_lowercase()];
            v.extend(fresh_words(&mut vocab_rng, spec.vocab_per_class - 1, &mut taken));
            v
        })
        .collect();
    let noise_vocab = fresh_words(&mut vocab_rng, spec.noise_vocab, &mut taken);

    let labels: Vec<usize> = (0..spec.nodes).map(|i| spec.block_of(i)).collect();

    let mut text_rng = substream(spec.seed, "synth/texts");
    let texts = labels
        .iter()
        .map(|&c| Some(node_text(&mut text_rng, &class_vocab[c], &noise_vocab, spec)))
        .collect();

    let mut edge_rng = substream(spec.seed, "synth/edges");
    let mut edges = Vec::new();
    for i in 0..spec.nodes {
        for j in i + 1..spec.nodes {
            let p = if labels[i] == labels[j] { spec.intra } else { spec.inter };
            if edge_rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }

    let mut order: Vec<usize> = (0..spec.nodes).collect();
    order.shuffle(&mut substream(spec.seed, "synth/splits"));
    let n_train = (spec.train_fraction * spec.nodes as f64).floor() as usize;
    let n_val = ((spec.val_fraction * spec.nodes as f64).floor() as usize).min(spec.nodes - n_train);
    let mut splits = SplitMasks::default();
    for (rank, &node) in order.iter().enumerate() {
        let split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        splits.insert(node, split);
    }

    TextAttributedGraph::new(texts, labels.into_iter().map(Some).collect(), names, edges, splits)
        .map_err(|e| SynthError(e.to_string()))
}
