//! The moebius strip as a glued line bundle over the circle: profiles,
//! metric compatibility, and the two induced-metric constructions, which
//! coincide whenever both are defined.
//!
//! Run with: cargo run --example moebius_strip

use pblab::bundle::{Bundle, CellKind, ChartId, Endpoint};
use pblab::expr::{AbsPoly, RatExpr, Var};
use pblab::glue::{check_dual_necessary, glue_bundles, BaseGluing, BundleGluing};
use pblab::linalg::ExprMatrix;
use pblab::metric::{
    compat_check, glue_metrics, glue_metrics_commutative, is_pseudometric_glued, metrics_coincide,
    ChartMetric,
};
use pblab::rat::rat_int;

const SEED: u64 = 20260810;

fn main() {
    let cells = vec![
        CellKind::Interval(Endpoint::NegInf, Endpoint::Finite(rat_int(0))),
        CellKind::Point(rat_int(0)),
        CellKind::Interval(Endpoint::Finite(rat_int(0)), Endpoint::PosInf),
    ];
    let m1 = Bundle::new(
        ChartId::new("x"),
        Var::new("x"),
        cells.clone(),
        1,
        Vec::new(),
        "half one",
    )
    .unwrap();
    let m2 = Bundle::new(
        ChartId::new("y"),
        Var::new("y"),
        cells.clone(),
        1,
        Vec::new(),
        "half two",
    )
    .unwrap();

    // base: x -> 1/x away from zero; lift: +1 on one half, -1 on the other
    let base = BaseGluing::new(
        "x",
        "y",
        vec![cells[0].clone(), cells[2].clone()],
        RatExpr::new(AbsPoly::one(), AbsPoly::var(&Var::new("x"))).unwrap(),
        Some(RatExpr::new(AbsPoly::one(), AbsPoly::var(&Var::new("y"))).unwrap()),
    );
    let gluing = BundleGluing {
        base,
        lift: vec![
            (cells[0].clone(), ExprMatrix::new(1, 1, vec![RatExpr::one()])),
            (
                cells[2].clone(),
                ExprMatrix::new(1, 1, vec![RatExpr::constant(rat_int(-1))]),
            ),
        ],
    };
    let moebius = glue_bundles(&m1, &m2, &gluing).unwrap();

    println!("moebius profile:");
    for (region, cell, dim) in moebius.dual_dim_profile().unwrap() {
        println!("  {region} {cell}: {dim}");
    }
    println!(
        "necessary condition for gluing-dual commutativity: {}",
        check_dual_necessary(&moebius).unwrap()
    );

    // the unit metrics on the factors are compatible: (+-1)^2 = 1
    let g1 = ChartMetric::uniform(
        &Var::new("x"),
        &cells,
        ExprMatrix::new(1, 1, vec![RatExpr::one()]),
    );
    let g2 = ChartMetric::uniform(
        &Var::new("y"),
        &cells,
        ExprMatrix::new(1, 1, vec![RatExpr::one()]),
    );
    println!("compatibility: {}", compat_check(&g1, &g2, &moebius).unwrap());

    let direct = glue_metrics(&g1, &g2, &moebius, SEED, 50).unwrap();
    let verdict = is_pseudometric_glued(&moebius, &direct, SEED, 50).unwrap();
    println!("direct construction verdict: {verdict}");

    let routed = glue_metrics_commutative(&g1, &g2, &moebius, SEED, 50).unwrap();
    println!(
        "dual-route construction coincides with the direct one: {}",
        metrics_coincide(&direct, &routed, &moebius).unwrap()
    );

    println!("induced metric, piece by piece:");
    for (region, cell, m) in &direct.pieces {
        println!("  {region} {cell}: [[{}]]", m.get(0, 0));
    }
}
