//! Reverse-mode gradients against central finite differences.

use sparse_tag::gnn::gradcheck::{finite_diff_grad, run_suite, DEFAULT_EPS, TOLERANCE};

fn main() {
    let g = finite_diff_grad(|x| x[0].sin() * x[1], &[0.3, 2.0], DEFAULT_EPS);
    println!("d/dx sin(x) y at (0.3, 2) = {:.10} (exact {:.10})", g[0], 0.3f64.cos() * 2.0);

    for r in run_suite(DEFAULT_EPS) {
        println!(
            "{:<9} {:>4} parameters  max relative error {:.2e} (bound {TOLERANCE:e})  {}",
            r.name,
            r.coordinates,
            r.max_rel_err,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
}
