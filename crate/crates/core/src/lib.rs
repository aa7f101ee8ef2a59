//! Node classification on text-attributed graphs (TAGs) under text and edge sparsity.
//!
//! The crate is organized the way the pipeline runs:
//!
//! - [`graph`]: the TAG data model, JSONL dataset ingestion, the sparsity simulator
//!   and accuracy metrics.
//! - [`llm`]: prompt rendering, a pluggable completion gateway with an on-disk
//!   response cache, an OpenAI-compatible remote client and a deterministic
//!   offline provider.
//! - [`augment`]: one-hop text propagation, LLM text augmentation (summary,
//!   keywords, soft label) and aggregation into the final node text.
//! - [`embed`]: text embedding providers producing the node representation matrix.
//! - [`structure`]: virtual edges, PageRank node selection and LLM edge
//!   reconfiguration.
//! - [`gnn`]: dense graph convolution, reverse-mode gradients, the dual-GNN
//!   structure-learning classifier and the GCN/MLP baselines.
//! - [`pipeline`]: configuration, synthetic fixtures, end-to-end runs, sweeps and
//!   reports.
//!
//! Every stage runs offline and deterministically with the offline providers;
//! remote model endpoints are optional.

pub mod augment;
pub mod embed;
pub mod gnn;
pub mod graph;
pub mod llm;
pub mod pipeline;
pub mod pool;
pub mod rng;
pub mod structure;
pub mod tokens;

pub use graph::{Edge, EdgeSet, SparsityConfig, Split, SplitMasks, TextAttributedGraph};
