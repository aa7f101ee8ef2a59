//! Full-batch training of the GCN and MLP baselines and the dual-GNN classifier.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use super::model::{
    adjacency_from_edges, argmax_rows, check_shapes, fuse_mask, gcn_on_tape, similarity_on_tape,
    sym_normalize, DropoutCtx, GcnParams, ParamVars,
};
use super::optim::AdamW;
use super::tape::{Tape, Var};
use super::GnnError;
use crate::graph::{EdgeSet, TextAttributedGraph};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub hidden: usize,
    pub layers: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            weight_decay: 5e-4,
            dropout: 0.5,
            epochs: 100,
            hidden: 64,
            layers: 2,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |m: String| Err(GnnError::Config(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be finite and nonnegative", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight decay {} must be nonnegative", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.layers == 0 || self.hidden == 0 {
            return bad("layers and hidden width must be positive".into());
        }
        Ok(())
    }

    fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(std::iter::repeat_n(self.hidden, self.layers - 1));
        d.push(output);
        d
    }
}

/// Labels and the node ids used for the loss and for model selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub labels: Vec<Option<usize>>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub num_classes: usize,
}

impl Targets {
    /// Labeled train and val nodes of `g`.
    pub fn from_graph(g: &TextAttributedGraph) -> Self {
        let labeled = |set: &BTreeSet<usize>| set.iter().copied().filter(|&i| g.labels()[i].is_some()).collect();
        Self {
            labels: g.labels().to_vec(),
            train: labeled(&g.splits().train),
            val: labeled(&g.splits().val),
            num_classes: g.num_classes(),
        }
    }

    fn pairs(&self, nodes: &[usize]) -> Vec<(usize, usize)> {
        nodes.iter().filter_map(|&i| self.labels[i].map(|l| (i, l))).collect()
    }

    fn accuracy(&self, preds: &[usize], nodes: &[usize]) -> f64 {
        let pairs = self.pairs(nodes);
        let hits = pairs.iter().filter(|&&(i, l)| preds[i] == l).count();
        hits as f64 / pairs.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Mlp,
    Dual,
}

/// The adjacency side of a model's input.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphInput {
    /// One normalized adjacency for a single network.
    Fixed { a_hat: DenseMatrix },
    /// `A*`, its normalization, and the fusion mask (0 on `Vc x Vc`).
    Dual {
        a_star: DenseMatrix,
        a_star_hat: DenseMatrix,
        mask: DenseMatrix,
    },
}

impl GraphInput {
    pub fn gcn(edges: &EdgeSet, n: usize) -> Self {
        GraphInput::Fixed {
            a_hat: sym_normalize(&adjacency_from_edges(edges, n)).expect("0/1 adjacency is valid"),
        }
    }

    pub fn mlp(n: usize) -> Self {
        GraphInput::Fixed {
            a_hat: DenseMatrix::identity(n),
        }
    }

    pub fn dual(a_star_edges: &EdgeSet, selected: &BTreeSet<usize>, n: usize) -> Self {
        let a_star = adjacency_from_edges(a_star_edges, n);
        GraphInput::Dual {
            a_star_hat: sym_normalize(&a_star).expect("0/1 adjacency is valid"),
            mask: fuse_mask(n, selected),
            a_star,
        }
    }

    fn nodes(&self) -> usize {
        match self {
            GraphInput::Fixed { a_hat } => a_hat.rows(),
            GraphInput::Dual { a_star, .. } => a_star.rows(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    /// Largest absolute gradient entry over GNN1 parameters (dual models only).
    pub gnn1_grad_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    /// One network, or `[gnn1, gnn2]` for the dual model.
    pub nets: Vec<GcnParams>,
    pub graph: GraphInput,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
}

struct Forward {
    tape: Tape,
    logits: Var,
    params: Vec<ParamVars>,
}

fn forward(graph: &GraphInput, h: &DenseMatrix, nets: &[GcnParams], mut dropout: Option<&mut DropoutCtx<'_>>) -> Forward {
    let mut t = Tape::new();
    let x = t.constant(h.clone());
    match graph {
        GraphInput::Fixed { a_hat } => {
            let a = t.constant(a_hat.clone());
            let p = ParamVars::register(&mut t, &nets[0]);
            let logits = gcn_on_tape(&mut t, a, x, &p, dropout);
            Forward {
                tape: t,
                logits,
                params: vec![p],
            }
        }
        GraphInput::Dual { a_star, a_star_hat, mask } => {
            let a1 = t.constant(a_star_hat.clone());
            let p1 = ParamVars::register(&mut t, &nets[0]);
            let h1 = gcn_on_tape(&mut t, a1, x, &p1, dropout.as_deref_mut());
            let s = similarity_on_tape(&mut t, h1);
            let masked = t.mul_const(s, mask.clone());
            let fused = t.add_const(masked, a_star);
            let a2 = t.sym_normalize(fused);
            let p2 = ParamVars::register(&mut t, &nets[1]);
            let logits = gcn_on_tape(&mut t, a2, x, &p2, dropout);
            Forward {
                tape: t,
                logits,
                params: vec![p1, p2],
            }
        }
    }
}

/// Training loss over `targets.train` and its gradient for every network.
pub fn loss_and_grads(
    graph: &GraphInput,
    h: &DenseMatrix,
    nets: &[GcnParams],
    targets: &Targets,
    dropout: Option<&mut DropoutCtx<'_>>,
) -> Result<(f64, Vec<GcnParams>), GnnError> {
    let pairs = targets.pairs(&targets.train);
    if pairs.is_empty() {
        return Err(GnnError::EmptyTrain);
    }
    let mut f = forward(graph, h, nets, dropout);
    let loss = f.tape.softmax_cross_entropy(f.logits, &pairs);
    let grads = f.tape.backward(loss);
    let out = nets
        .iter()
        .zip(&f.params)
        .map(|(net, vars)| GcnParams {
            weights: net
                .weights
                .iter()
                .zip(&vars.weights)
                .map(|(w, &v)| grads.get_or_zeros(v, w))
                .collect(),
            biases: net
                .biases
                .iter()
                .zip(&vars.biases)
                .map(|(b, &v)| grads.get_or_zeros(v, b))
                .collect(),
        })
        .collect();
    Ok((f.tape.value(loss)[(0, 0)], out))
}

/// Training loss without dropout.
pub fn loss_value(graph: &GraphInput, h: &DenseMatrix, nets: &[GcnParams], targets: &Targets) -> Result<f64, GnnError> {
    let pairs = targets.pairs(&targets.train);
    if pairs.is_empty() {
        return Err(GnnError::EmptyTrain);
    }
    let mut f = forward(graph, h, nets, None);
    let loss = f.tape.softmax_cross_entropy(f.logits, &pairs);
    Ok(f.tape.value(loss)[(0, 0)])
}

/// Evaluation-mode logits.
pub fn logits(graph: &GraphInput, h: &DenseMatrix, nets: &[GcnParams]) -> DenseMatrix {
    let f = forward(graph, h, nets, None);
    f.tape.value(f.logits).clone()
}

fn fit(kind: ModelKind, graph: GraphInput, h: &DenseMatrix, targets: &Targets, cfg: &TrainConfig) -> Result<TrainedModel, GnnError> {
    cfg.validate()?;
    if graph.nodes() != h.rows() || targets.labels.len() != h.rows() {
        return Err(GnnError::Shape(format!(
            "{} adjacency rows, {} feature rows, {} labels",
            graph.nodes(),
            h.rows(),
            targets.labels.len()
        )));
    }
    if !h.all_finite() {
        return Err(GnnError::NonFiniteInput);
    }
    if targets.pairs(&targets.train).is_empty() {
        return Err(GnnError::EmptyTrain);
    }
    let d = h.cols();
    let mut init = substream(cfg.seed, "train/init");
    let mut nets = match kind {
        ModelKind::Gcn | ModelKind::Mlp => vec![GcnParams::glorot(&cfg.dims(d, targets.num_classes), &mut init)],
        ModelKind::Dual => vec![
            GcnParams::glorot(&cfg.dims(d, d), &mut init),
            GcnParams::glorot(&cfg.dims(d, targets.num_classes), &mut init),
        ],
    };
    if let GraphInput::Fixed { a_hat } = &graph {
        check_shapes(a_hat, h, &nets[0])?;
    }
    // Without a validation split, select on training accuracy.
    let select_on = if targets.pairs(&targets.val).is_empty() {
        &targets.train
    } else {
        &targets.val
    };

    let mut dropout_rng = substream(cfg.seed, "train/dropout");
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (nets.clone(), 0, f64::NEG_INFINITY);
    for epoch in 1..=cfg.epochs {
        let mut ctx = DropoutCtx {
            p: cfg.dropout,
            rng: &mut dropout_rng,
        };
        let (loss, grads) = loss_and_grads(&graph, h, &nets, targets, Some(&mut ctx))?;
        if !loss.is_finite() {
            return Err(GnnError::NonFiniteLoss { epoch });
        }
        let gnn1_grad_max = (kind == ModelKind::Dual).then(|| grads[0].tensors().map(DenseMatrix::max_abs).fold(0.0, f64::max));
        opt.step(
            nets.iter_mut().flat_map(GcnParams::tensors_mut),
            grads.iter().flat_map(GcnParams::tensors),
        );
        let preds = argmax_rows(&logits(&graph, h, &nets));
        let val_acc = targets.accuracy(&preds, select_on);
        if val_acc > best.2 {
            best = (nets.clone(), epoch, val_acc);
        }
        history.push(EpochRecord {
            epoch,
            train_loss: loss,
            val_acc,
            gnn1_grad_max,
        });
        log::trace!("epoch {epoch}: loss {loss:.6} val {val_acc:.4}");
    }
    let (nets, best_epoch, best_val_acc) = if cfg.epochs == 0 { (nets, 0, f64::NAN) } else { best };
    Ok(TrainedModel {
        kind,
        nets,
        graph,
        best_epoch,
        best_val_acc,
        seed: cfg.seed,
        history,
    })
}

/// Plain two-layer GCN on `edges`.
pub fn train_gcn(h: &DenseMatrix, edges: &EdgeSet, targets: &Targets, cfg: &TrainConfig) -> Result<TrainedModel, GnnError> {
    fit(ModelKind::Gcn, GraphInput::gcn(edges, h.rows()), h, targets, cfg)
}

/// The GCN architecture on the identity adjacency.
pub fn train_mlp(h: &DenseMatrix, targets: &Targets, cfg: &TrainConfig) -> Result<TrainedModel, GnnError> {
    fit(ModelKind::Mlp, GraphInput::mlp(h.rows()), h, targets, cfg)
}

/// GNN1 on `A*` produces representations whose clamped cosine similarities are
/// added to `A*` outside `selected x selected`; GNN2 classifies on the fused
/// adjacency. Both networks are trained jointly on the GNN2 loss, with the
/// fusion recomputed every epoch.
pub fn train_dual(
    h: &DenseMatrix,
    a_star: &EdgeSet,
    selected: &BTreeSet<usize>,
    targets: &Targets,
    cfg: &TrainConfig,
) -> Result<TrainedModel, GnnError> {
    fit(ModelKind::Dual, GraphInput::dual(a_star, selected, h.rows()), h, targets, cfg)
}

impl TrainedModel {
    pub fn logits(&self, h: &DenseMatrix) -> DenseMatrix {
        logits(&self.graph, h, &self.nets)
    }

    /// Argmax class per node with dropout disabled; ties go to the lowest id.
    pub fn predict(&self, h: &DenseMatrix) -> Vec<usize> {
        argmax_rows(&self.logits(h))
    }

    /// `epoch,train_loss,val_acc` rows.
    pub fn write_history(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        history_csv(&self.history, &mut w)?;
        w.flush()
    }
}

/// Writes `history` as CSV to any writer.
pub fn history_csv(history: &[EpochRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_acc")?;
    for r in history {
        writeln!(w, "{},{:?},{:?}", r.epoch, r.train_loss, r.val_acc)?;
    }
    Ok(())
}
