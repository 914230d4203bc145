//! The pairing map of a metric and the induced metric on the dual bundle,
//! including the exact double-dual round trip on standard bundles.
//!
//! Run with: cargo run --example dual_bundle_metric

use pblab::bundle::{Bundle, CellKind, ChartId, FibreGen};
use pblab::expr::{AbsPoly, RatExpr, SignContext, Var};
use pblab::linalg::ExprMatrix;
use pblab::metric::{dual_metric, pairing_map, ChartMetric};
use pblab::rat::rat_int;

const SEED: u64 = 20260810;

fn show_matrix(m: &ExprMatrix) -> String {
    let rows: Vec<String> = (0..m.rows())
        .map(|i| {
            let entries: Vec<String> = (0..m.cols()).map(|j| format!("{}", m.get(i, j))).collect();
            format!("[{}]", entries.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn main() {
    // a scaled metric on the standard line bundle dualizes to its inverse
    let line = Bundle::standard("x", "x", 1, "standard line");
    let g = ChartMetric::uniform(
        &line.base_var,
        &line.cells,
        ExprMatrix::new(1, 1, vec![RatExpr::constant(rat_int(2))]),
    );
    let dm = dual_metric(&line, &g, SEED, 50).unwrap();
    println!("g = [[2]] on the standard line, g* = {}", show_matrix(&dm.pieces[0].1));

    // the product bundle: rank-one metric, rank-one dual bundle
    let v = Var::new("v");
    let product = Bundle::new(
        ChartId::new("u"),
        Var::new("u"),
        vec![CellKind::full_line()],
        2,
        vec![FibreGen::from_polys(
            vec![v.clone()],
            vec![AbsPoly::zero(), AbsPoly::abs_var(&v)],
        )],
        "product bundle",
    )
    .unwrap();
    let mut m = ExprMatrix::zeros(2, 2);
    m.set(0, 0, RatExpr::one());
    let g = ChartMetric::uniform(&product.base_var, &product.cells, m);

    let pairing = pairing_map(&product, &g, SEED).unwrap();
    let (rank, kernel) = pairing
        .rank_and_kernel_on(&product.base_var, &product.cells[0])
        .unwrap();
    println!("pairing map of the product metric: rank {rank}, kernel dimension {}", kernel.len());

    let dm = dual_metric(&product, &g, SEED, 50).unwrap();
    println!(
        "dual bundle fibre dimension {}, induced dual metric {}",
        dm.view.fibre_dims()[0].1,
        show_matrix(&dm.pieces[0].1)
    );

    // double dual on a standard rank-2 bundle restores the matrix exactly
    let plane = Bundle::standard("x", "x", 2, "standard plane");
    let mut m = ExprMatrix::identity(2);
    m.set(0, 0, RatExpr::constant(rat_int(3)));
    m.set(0, 1, RatExpr::one());
    m.set(1, 0, RatExpr::one());
    let g = ChartMetric::uniform(&plane.base_var, &plane.cells, m.clone());
    let dm = dual_metric(&plane, &g, SEED, 50).unwrap();
    let (dual_bundle, dual_metric_chart) = dm.as_standard_pair().unwrap();
    let ddm = dual_metric(&dual_bundle, &dual_metric_chart, SEED, 50).unwrap();
    println!("g  = {}", show_matrix(&m));
    println!("g* = {}", show_matrix(&dm.pieces[0].1));
    println!("g** = {}", show_matrix(&ddm.pieces[0].1));
    println!(
        "round trip exact: {}",
        ddm.pieces[0].1.equals_on(&m, &SignContext::empty())
    );
}
