//! Reverse-mode differentiation over a linear tape of dense matrix ops.
//!
//! Every op appends a node holding its forward value. [`Tape::backward`] walks
//! the tape once in reverse, accumulating gradients only for nodes that depend
//! on a leaf created with `needs_grad`.

use super::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNt(Var, Var),
    /// `x + 1 · b` for a `1 x c` row `b`.
    AddRowBias(Var, Var),
    Relu(Var),
    MulConst(Var, DenseMatrix),
    AddConst(Var),
    RowL2Normalize(Var, Vec<f64>),
    ClampUnitZeroDiag(Var),
    /// Holds `d^{-1/2}` of `a + I`.
    SymNormalize(Var, Vec<f64>),
    /// Holds the softmax probabilities and the (row, class) targets.
    SoftmaxCrossEntropy(Var, DenseMatrix, Vec<(usize, usize)>),
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` for nodes that need none.
#[derive(Debug)]
pub struct Gradients(Vec<Option<DenseMatrix>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.0.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when nothing reached it.
    pub fn get_or_zeros(&self, v: Var, like: &DenseMatrix) -> DenseMatrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| DenseMatrix::zeros(like.rows(), like.cols()))
    }
}

/// `d^{-1/2} (a + I) d^{-1/2}` with `d` the row sums of `a + I`; also returns `d^{-1/2}`.
pub fn sym_normalize_kernel(a: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "adjacency must be square");
    let r: Vec<f64> = (0..n)
        .map(|i| (a.row(i).iter().sum::<f64>() + 1.0).powf(-0.5))
        .collect();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let (src, dst) = (a.row(i), out.row_mut(i));
        for j in 0..n {
            let w = if i == j { src[j] + 1.0 } else { src[j] };
            dst[j] = r[i] * w * r[j];
        }
    }
    (out, r)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: DenseMatrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_nt(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMulNt(a, b), ng)
    }

    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!((b.rows(), b.cols()), (1, self.value(x).cols()), "bias shape");
        let mut value = self.value(x).clone();
        let b = b.row(0).to_vec();
        for r in 0..value.rows() {
            for (v, bb) in value.row_mut(r).iter_mut().zip(&b) {
                *v += bb;
            }
        }
        let ng = self.needs(x) || self.needs(bias);
        self.push(value, Op::AddRowBias(x, bias), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let ng = self.needs(x);
        self.push(value, Op::Relu(x), ng)
    }

    /// Elementwise product with a constant matrix.
    pub fn mul_const(&mut self, x: Var, m: DenseMatrix) -> Var {
        let value = self.value(x).zip_map(&m, |a, b| a * b);
        let ng = self.needs(x);
        self.push(value, Op::MulConst(x, m), ng)
    }

    /// Elementwise sum with a constant matrix.
    pub fn add_const(&mut self, x: Var, c: &DenseMatrix) -> Var {
        let value = self.value(x).zip_map(c, |a, b| a + b);
        let ng = self.needs(x);
        self.push(value, Op::AddConst(x), ng)
    }

    /// Scales each row to unit L2 norm; zero rows stay zero.
    pub fn row_l2_normalize(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let mut value = src.clone();
        let mut norms = Vec::with_capacity(src.rows());
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            norms.push(norm);
        }
        let ng = self.needs(x);
        self.push(value, Op::RowL2Normalize(x, norms), ng)
    }

    /// Clamps a square matrix to [0, 1] and zeroes the diagonal.
    pub fn clamp_unit_zero_diag(&mut self, x: Var) -> Var {
        let mut value = self.value(x).map(|v| v.clamp(0.0, 1.0));
        assert_eq!(value.rows(), value.cols(), "square input required");
        for i in 0..value.rows() {
            value[(i, i)] = 0.0;
        }
        let ng = self.needs(x);
        self.push(value, Op::ClampUnitZeroDiag(x), ng)
    }

    /// `D^{-1/2} (A + I) D^{-1/2}` of a nonnegative square matrix.
    pub fn sym_normalize(&mut self, a: Var) -> Var {
        let (value, r) = sym_normalize_kernel(self.value(a));
        let ng = self.needs(a);
        self.push(value, Op::SymNormalize(a, r), ng)
    }

    /// Mean negative log-softmax of the target class over `targets`; `1 x 1` output.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[(usize, usize)]) -> Var {
        assert!(!targets.is_empty(), "cross-entropy over an empty target set");
        let z = self.value(logits);
        let mut probs = DenseMatrix::zeros(z.rows(), z.cols());
        let mut loss = 0.0;
        for &(r, c) in targets {
            let row = z.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            for (p, v) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (v - max).exp() / sum;
            }
            loss += -(row[c] - max - sum.ln());
        }
        loss /= targets.len() as f64;
        let ng = self.needs(logits);
        self.push(
            DenseMatrix::from_vec(1, 1, vec![loss]),
            Op::SoftmaxCrossEntropy(logits, probs, targets.to_vec()),
            ng,
        )
    }

    /// Gradients of the scalar `loss` with respect to every node that needs one.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(DenseMatrix::from_vec(1, 1, vec![1.0]));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let mut send = |v: Var, d: DenseMatrix| {
                if self.needs(v) {
                    match &mut grads[v.0] {
                        Some(acc) => acc.add_assign(&d),
                        slot => *slot = Some(d),
                    }
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        send(*a, g.matmul_nt(self.value(*b)));
                    }
                    if self.needs(*b) {
                        send(*b, self.value(*a).matmul_tn(&g));
                    }
                }
                Op::MatMulNt(a, b) => {
                    if self.needs(*a) {
                        send(*a, g.matmul(self.value(*b)));
                    }
                    if self.needs(*b) {
                        send(*b, g.matmul_tn(self.value(*a)));
                    }
                }
                Op::AddRowBias(x, b) => {
                    if self.needs(*b) {
                        let mut db = DenseMatrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (acc, v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                                *acc += v;
                            }
                        }
                        send(*b, db);
                    }
                    send(*x, g);
                }
                Op::Relu(x) => {
                    send(*x, g.zip_map(&node.value, |gv, y| if y > 0.0 { gv } else { 0.0 }));
                }
                Op::MulConst(x, m) => send(*x, g.zip_map(m, |gv, mv| gv * mv)),
                Op::AddConst(x) => send(*x, g),
                Op::RowL2Normalize(x, norms) => {
                    let y = &node.value;
                    let mut dx = DenseMatrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        if norms[r] == 0.0 {
                            continue;
                        }
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for ((d, gv), yv) in dx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *d = (gv - yv * dot) / norms[r];
                        }
                    }
                    send(*x, dx);
                }
                Op::ClampUnitZeroDiag(x) => {
                    let input = self.value(*x);
                    let mut dx = g.zip_map(input, |gv, v| if v > 0.0 && v < 1.0 { gv } else { 0.0 });
                    for i in 0..dx.rows() {
                        dx[(i, i)] = 0.0;
                    }
                    send(*x, dx);
                }
                Op::SymNormalize(a, r) => send(*a, sym_normalize_backward(self.value(*a), r, &g)),
                Op::SoftmaxCrossEntropy(logits, probs, targets) => {
                    let scale = g[(0, 0)] / targets.len() as f64;
                    let mut dz = DenseMatrix::zeros(probs.rows(), probs.cols());
                    for &(r, c) in targets {
                        for (d, p) in dz.row_mut(r).iter_mut().zip(probs.row(r)) {
                            *d = p * scale;
                        }
                        dz[(r, c)] -= scale;
                    }
                    send(*logits, dz);
                }
            }
        }
        Gradients(grads)
    }
}

/// With `a' = a + I`, `r_i = (Σ_j a'_ij)^{-1/2}` and output `r_i a'_ij r_j`:
/// `dA_kl = G_kl r_k r_l - ½ r_k³ (Σ_j G_kj a'_kj r_j + Σ_i G_ik a'_ik r_i)`.
fn sym_normalize_backward(a: &DenseMatrix, r: &[f64], g: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let ap = |i: usize, j: usize| if i == j { a[(i, j)] + 1.0 } else { a[(i, j)] };
    let mut s = vec![0.0; n];
    for i in 0..n {
        let gi = g.row(i);
        for j in 0..n {
            let t = gi[j] * ap(i, j);
            s[i] += t * r[j];
            s[j] += t * r[i];
        }
    }
    let mut da = DenseMatrix::zeros(n, n);
    for k in 0..n {
        let q = -0.5 * r[k].powi(3) * s[k];
        let (gk, dk) = (g.row(k), da.row_mut(k));
        for l in 0..n {
            dk[l] = gk[l] * r[k] * r[l] + q;
        }
    }
    da
}
