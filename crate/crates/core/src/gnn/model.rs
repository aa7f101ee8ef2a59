//! GCN parameters, adjacency helpers and forward passes on the tape.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::matrix::DenseMatrix;
use super::tape::{sym_normalize_kernel, Tape, Var};
use super::GnnError;
use crate::graph::EdgeSet;

/// Weights and biases of an `m`-layer graph convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub weights: Vec<DenseMatrix>,
    /// `1 x out` rows.
    pub biases: Vec<DenseMatrix>,
}

impl GcnParams {
    /// Glorot-uniform weights and zero biases for layer widths `dims`
    /// (`dims.len() - 1` layers).
    pub fn glorot(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "at least one layer");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
            weights.push(DenseMatrix::from_vec(fan_in, fan_out, data));
            biases.push(DenseMatrix::zeros(1, fan_out));
        }
        Self { weights, biases }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            weights: dims.windows(2).map(|w| DenseMatrix::zeros(w[0], w[1])).collect(),
            biases: dims.windows(2).map(|w| DenseMatrix::zeros(1, w[1])).collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.weights.iter().map(DenseMatrix::rows).collect();
        d.extend(self.weights.last().map(DenseMatrix::cols));
        d
    }

    /// Weights and biases interleaved per layer.
    pub fn tensors(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut DenseMatrix> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(|t| t.data().len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.data().len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }
}

/// Dense 0/1 symmetric adjacency of `edges`.
pub fn adjacency_from_edges(edges: &EdgeSet, n: usize) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(n, n);
    for e in edges {
        a[(e.u(), e.v())] = 1.0;
        a[(e.v(), e.u())] = 1.0;
    }
    a
}

/// `D^{-1/2} (A + I) D^{-1/2}` of a nonnegative weighted adjacency.
pub fn sym_normalize(a: &DenseMatrix) -> Result<DenseMatrix, GnnError> {
    if a.rows() != a.cols() {
        return Err(GnnError::Shape(format!("adjacency is {}x{}", a.rows(), a.cols())));
    }
    if let Some(pos) = a.data().iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        let (i, j) = (pos / a.cols(), pos % a.cols());
        return Err(GnnError::NegativeWeight { i, j, value: a.data()[pos] });
    }
    Ok(sym_normalize_kernel(a).0)
}

/// Cosine-similarity matrix of the rows of `h1`, clamped to [0, 1] with a zero diagonal.
pub fn similarity_matrix(h1: &DenseMatrix) -> DenseMatrix {
    let mut t = Tape::new();
    let x = t.constant(h1.clone());
    let s = similarity_on_tape(&mut t, x);
    t.value(s).clone()
}

pub(crate) fn similarity_on_tape(t: &mut Tape, h1: Var) -> Var {
    let n = t.row_l2_normalize(h1);
    let prod = t.matmul_nt(n, n);
    t.clamp_unit_zero_diag(prod)
}

/// 1 outside `selected x selected`, 0 inside.
pub fn fuse_mask(n: usize, selected: &BTreeSet<usize>) -> DenseMatrix {
    let mut m = DenseMatrix::filled(n, n, 1.0);
    for &i in selected {
        for &j in selected {
            m[(i, j)] = 0.0;
        }
    }
    m
}

/// `A* + S` outside `selected x selected`, `A*` inside.
pub fn fuse_adjacency(a_star: &DenseMatrix, s: &DenseMatrix, selected: &BTreeSet<usize>) -> DenseMatrix {
    let mask = fuse_mask(a_star.rows(), selected);
    let mut out = s.zip_map(&mask, |sv, m| sv * m);
    out.add_assign(a_star);
    out
}

/// Dropout settings for a training-mode forward pass.
pub struct DropoutCtx<'a> {
    pub p: f64,
    pub rng: &'a mut ChaCha8Rng,
}

/// Parameter leaves of one network on a tape.
pub(crate) struct ParamVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

impl ParamVars {
    pub fn register(t: &mut Tape, p: &GcnParams) -> Self {
        Self {
            weights: p.weights.iter().map(|w| t.param(w.clone())).collect(),
            biases: p.biases.iter().map(|b| t.param(b.clone())).collect(),
        }
    }
}

/// Layer `l`: `Â · (drop(X) W_l) + b_l`, ReLU on all but the last layer.
pub(crate) fn gcn_on_tape(
    t: &mut Tape,
    a_hat: Var,
    x: Var,
    params: &ParamVars,
    mut dropout: Option<&mut DropoutCtx<'_>>,
) -> Var {
    let layers = params.weights.len();
    let mut h = x;
    for l in 0..layers {
        if let Some(ctx) = dropout.as_deref_mut() {
            if ctx.p > 0.0 {
                let (r, c) = t.value(h).shape();
                let keep = 1.0 - ctx.p;
                let data = (0..r * c)
                    .map(|_| if ctx.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                h = t.mul_const(h, DenseMatrix::from_vec(r, c, data));
            }
        }
        let w = params.weights[l];
        let (fan_in, fan_out) = t.value(w).shape();
        // Same product, cheaper association when the layer widens.
        let z = if fan_in < fan_out {
            let ah = t.matmul(a_hat, h);
            t.matmul(ah, w)
        } else {
            let hw = t.matmul(h, w);
            t.matmul(a_hat, hw)
        };
        h = t.add_row_bias(z, params.biases[l]);
        if l + 1 < layers {
            h = t.relu(h);
        }
    }
    h
}

/// Logits of a GCN on a normalized adjacency, outside any training loop.
pub fn gcn_forward(
    a_hat: &DenseMatrix,
    h: &DenseMatrix,
    params: &GcnParams,
    dropout: Option<&mut DropoutCtx<'_>>,
) -> Result<DenseMatrix, GnnError> {
    check_shapes(a_hat, h, params)?;
    let mut t = Tape::new();
    let a = t.constant(a_hat.clone());
    let x = t.constant(h.clone());
    let p = ParamVars::register(&mut t, params);
    let out = gcn_on_tape(&mut t, a, x, &p, dropout);
    Ok(t.value(out).clone())
}

pub(crate) fn check_shapes(a_hat: &DenseMatrix, h: &DenseMatrix, params: &GcnParams) -> Result<(), GnnError> {
    if a_hat.rows() != a_hat.cols() || a_hat.rows() != h.rows() {
        return Err(GnnError::Shape(format!(
            "adjacency {}x{} with {} feature rows",
            a_hat.rows(),
            a_hat.cols(),
            h.rows()
        )));
    }
    let dims = params.dims();
    if dims.first() != Some(&h.cols()) {
        return Err(GnnError::Shape(format!("features have width {}, first layer expects {:?}", h.cols(), dims.first())));
    }
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        if b.shape() != (1, w.cols()) || (l > 0 && params.weights[l - 1].cols() != w.rows()) {
            return Err(GnnError::Shape(format!("layer {l} dimensions do not chain")));
        }
    }
    Ok(())
}

/// Row-wise argmax; ties go to the lowest class id.
pub fn argmax_rows(logits: &DenseMatrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::rng::substream;

    #[test]
    fn weighted_two_node_normalization() {
        // degrees after self-loops are 4 and 4: [[1/4, 3/4], [3/4, 1/4]]
        let a = DenseMatrix::from_rows(&[vec![0.0, 3.0], vec![3.0, 0.0]]);
        let n = sym_normalize(&a).unwrap();
        assert!((n[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((n[(0, 1)] - 0.75).abs() < 1e-15);
        let isolated = sym_normalize(&DenseMatrix::zeros(3, 3)).unwrap();
        assert_eq!(isolated, DenseMatrix::identity(3));
    }

    #[test]
    fn negative_weight_is_rejected() {
        let a = DenseMatrix::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]]);
        assert!(matches!(sym_normalize(&a), Err(GnnError::NegativeWeight { i: 0, j: 1, .. })));
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let a = sym_normalize(&adjacency_from_edges(&[Edge::new(0, 1)].into(), 3)).unwrap();
        let h = DenseMatrix::filled(3, 4, 0.7);
        let logits = gcn_forward(&a, &h, &GcnParams::zeros(&[4, 8, 2]), None).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn path_logits_by_hand() {
        // Â = [[.5,.5],[.5,.5]], one linear layer W = I, b = 0
        let a = sym_normalize(&adjacency_from_edges(&[Edge::new(0, 1)].into(), 2)).unwrap();
        let h = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]);
        let p = GcnParams {
            weights: vec![DenseMatrix::identity(2)],
            biases: vec![DenseMatrix::zeros(1, 2)],
        };
        let logits = gcn_forward(&a, &h, &p, None).unwrap();
        for (got, want) in logits.data().iter().zip([0.5, 1.5, 0.5, 1.5]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn dropout_masks_follow_the_seed() {
        let a = DenseMatrix::identity(4);
        let h = DenseMatrix::filled(4, 3, 1.0);
        let p = GcnParams::glorot(&[3, 5, 2], &mut substream(1, "init"));
        let run = || {
            let mut rng = substream(9, "dropout");
            let mut ctx = DropoutCtx { p: 0.5, rng: &mut rng };
            gcn_forward(&a, &h, &p, Some(&mut ctx)).unwrap()
        };
        assert_eq!(run(), run());
        assert_ne!(run(), gcn_forward(&a, &h, &p, None).unwrap());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = DenseMatrix::identity(3);
        let h = DenseMatrix::zeros(3, 5);
        assert!(matches!(gcn_forward(&a, &h, &GcnParams::zeros(&[4, 2]), None), Err(GnnError::Shape(_))));
    }

    #[test]
    fn similarity_cases() {
        let s = similarity_matrix(&DenseMatrix::from_rows(&[
            vec![1.0, 2.0],
            vec![1.0, 2.0],
            vec![-2.0, 1.0],
            vec![-1.0, -2.0],
            vec![0.0, 0.0],
        ]));
        assert!((s[(0, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(s[(1, 0)], s[(0, 1)]);
        assert!(s[(0, 2)].abs() < 1e-15);
        assert_eq!(s[(0, 3)], 0.0);
        assert_eq!(s[(0, 4)], 0.0);
        assert_eq!(s[(0, 0)], 0.0);
    }

    #[test]
    fn fusion_branches() {
        let a = adjacency_from_edges(&[Edge::new(0, 1)].into(), 3);
        let s = DenseMatrix::filled(3, 3, 0.25);
        assert_eq!(fuse_adjacency(&a, &s, &BTreeSet::from([0, 1, 2])), a);
        let all = fuse_adjacency(&a, &s, &BTreeSet::new());
        assert_eq!(all[(0, 1)], 1.25);
        assert_eq!(all[(1, 2)], 0.25);
        assert_eq!(fuse_adjacency(&a, &DenseMatrix::zeros(3, 3), &BTreeSet::new()), a);
    }

    #[test]
    fn argmax_tie_break() {
        let z = DenseMatrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 3.0, 2.0], vec![2.0, 5.0, 5.0]]);
        assert_eq!(argmax_rows(&z), vec![0, 1, 1]);
    }
}
