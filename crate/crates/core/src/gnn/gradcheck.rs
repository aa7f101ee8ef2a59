//! Central finite differences and the gradient-check suite.

use std::collections::BTreeSet;

use rand::Rng;

use super::matrix::DenseMatrix;
use super::model::GcnParams;
use super::train::{loss_and_grads, loss_value, GraphInput, Targets};
use crate::graph::{Edge, EdgeSet};
use crate::rng::substream;

pub const DEFAULT_EPS: f64 = 1e-5;
/// Pass bound on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor of [`relative_error`]; keeps near-zero gradients from
/// turning rounding noise into large ratios.
pub const REL_FLOOR: f64 = 1e-6;

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    assert!(eps > 0.0, "epsilon must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// A 12-node, 2-class planted-partition instance.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub h: DenseMatrix,
    pub edges: EdgeSet,
    pub selected: BTreeSet<usize>,
    pub targets: Targets,
}

pub fn fixture() -> Fixture {
    let n = 12;
    let d = 4;
    let mut rng = substream(2024, "gradcheck/fixture");
    let labels: Vec<Option<usize>> = (0..n).map(|i| Some(usize::from(i >= n / 2))).collect();
    let data = (0..n * d)
        .map(|k| {
            let class = labels[k / d].unwrap_or(0) as f64;
            let signal = if k % d == class as usize { 1.0 } else { 0.0 };
            signal + rng.random_range(-0.5..0.5)
        })
        .collect();
    let mut edges = EdgeSet::new();
    for block in [0..6usize, 6..12] {
        let nodes: Vec<usize> = block.collect();
        for (a, &i) in nodes.iter().enumerate() {
            edges.insert(Edge::new(i, nodes[(a + 1) % nodes.len()]));
        }
        edges.insert(Edge::new(nodes[0], nodes[3]));
    }
    edges.insert(Edge::new(2, 8));
    Fixture {
        h: DenseMatrix::from_vec(n, d, data),
        edges,
        selected: BTreeSet::from([0, 3, 7]),
        targets: Targets {
            labels,
            train: vec![0, 1, 2, 6, 7, 8],
            val: vec![3, 4, 9, 10],
            num_classes: 2,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: &'static str,
    pub coordinates: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Largest absolute analytic entry; guards against a vacuous all-zero pass.
    pub max_abs_grad: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= TOLERANCE
    }
}

fn flatten(nets: &[GcnParams]) -> Vec<f64> {
    nets.iter().flat_map(GcnParams::to_flat).collect()
}

fn unflatten(template: &[GcnParams], flat: &[f64]) -> Vec<GcnParams> {
    let mut offset = 0;
    template
        .iter()
        .map(|net| {
            let mut p = net.clone();
            let n = p.num_params();
            p.set_flat(&flat[offset..offset + n]);
            offset += n;
            p
        })
        .collect()
}

/// Compares reverse-mode and central-difference gradients of the training loss
/// (dropout off) at `nets`.
pub fn check(name: &'static str, graph: &GraphInput, h: &DenseMatrix, nets: &[GcnParams], targets: &Targets, eps: f64) -> GradCheckReport {
    let (_, grads) = loss_and_grads(graph, h, nets, targets, None).expect("fixture has training nodes");
    let analytic = flatten(&grads);
    let x = flatten(nets);
    let numeric = finite_diff_grad(
        |p| loss_value(graph, h, &unflatten(nets, p), targets).expect("fixture has training nodes"),
        &x,
        eps,
    );
    let mut report = GradCheckReport {
        name,
        coordinates: x.len(),
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        max_abs_grad: 0.0,
    };
    for (a, n) in analytic.iter().zip(&numeric) {
        report.max_rel_err = report.max_rel_err.max(relative_error(*a, *n));
        report.max_abs_err = report.max_abs_err.max((a - n).abs());
        report.max_abs_grad = report.max_abs_grad.max(a.abs());
    }
    report
}

fn fixture_nets(dims: &[&[usize]]) -> Vec<GcnParams> {
    let mut rng = substream(7, "gradcheck/params");
    dims.iter().map(|d| GcnParams::glorot(d, &mut rng)).collect()
}

/// Plain two-layer GCN loss on the fixture.
pub fn check_gcn(eps: f64) -> GradCheckReport {
    let f = fixture();
    let graph = GraphInput::gcn(&f.edges, f.h.rows());
    let nets = fixture_nets(&[&[4, 6, 2]]);
    check("gcn", &graph, &f.h, &nets, &f.targets, eps)
}

/// Joint dual-GNN loss on the fixture, including the path from GNN1 through
/// the similarity matrix and the normalization of the fused adjacency.
pub fn check_dual(eps: f64) -> GradCheckReport {
    let f = fixture();
    let graph = GraphInput::dual(&f.edges, &f.selected, f.h.rows());
    let nets = fixture_nets(&[&[4, 6, 4], &[4, 6, 2]]);
    check("dual-gnn", &graph, &f.h, &nets, &f.targets, eps)
}

pub fn run_suite(eps: f64) -> Vec<GradCheckReport> {
    vec![check_gcn(eps), check_dual(eps)]
}
