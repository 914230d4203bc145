//! Fibrewise bundle operations: direct sums, tensor products, the
//! evaluation-backed dual view, sub-bundles and quotients.
//!
//! Run with: cargo run --example bundle_operations

use pblab::bundle::{
    quotient_bundle, sub_bundle, Bundle, CellKind, ChartId, Endpoint, FibreGen, SubBundleSpec,
};
use pblab::expr::{AbsPoly, RatExpr, Var};
use pblab::rat::rat_int;

fn profile(b: &Bundle) -> Vec<usize> {
    b.dual_dim_profile()
        .unwrap()
        .into_iter()
        .map(|(_, d)| d)
        .collect()
}

fn main() {
    let u = Var::new("u");
    let v = Var::new("v");
    let cells = vec![
        CellKind::Interval(Endpoint::NegInf, Endpoint::Finite(rat_int(0))),
        CellKind::Point(rat_int(0)),
        CellKind::Interval(Endpoint::Finite(rat_int(0)), Endpoint::PosInf),
    ];
    let twisted = Bundle::new(
        ChartId::new("u"),
        u.clone(),
        cells.clone(),
        1,
        vec![FibreGen::from_polys(
            vec![v.clone()],
            vec![AbsPoly::var(&u).mul(&AbsPoly::abs_var(&v))],
        )],
        "twisted",
    )
    .unwrap();
    let standard = Bundle::new(ChartId::new("u"), u.clone(), cells, 1, Vec::new(), "std").unwrap();

    println!("profiles (dual dimension per cell, cells split at 0):");
    println!("  twisted:            {:?}", profile(&twisted));
    println!("  standard:           {:?}", profile(&standard));
    println!(
        "  twisted (+) std:    {:?}",
        profile(&twisted.direct_sum(&standard).unwrap())
    );
    println!(
        "  twisted (x) twisted: {:?}",
        profile(&twisted.tensor(&twisted).unwrap())
    );

    // the dual bundle as an evaluation-backed view
    let view = twisted.dual_view().unwrap();
    println!("dual view fibre dimensions:");
    for (cell, d) in view.fibre_dims() {
        println!("  {cell}: {d}");
    }

    // sub-bundle and quotient of the rank-2 product bundle by its first axis
    let prod = Bundle::new(
        ChartId::new("u"),
        u,
        vec![CellKind::full_line()],
        2,
        vec![FibreGen::from_polys(
            vec![v.clone()],
            vec![AbsPoly::zero(), AbsPoly::abs_var(&v)],
        )],
        "product",
    )
    .unwrap();
    let axis = SubBundleSpec::uniform(&prod.cells, vec![vec![RatExpr::one(), RatExpr::zero()]]);
    let sub = sub_bundle(&prod, &axis).unwrap();
    let quot = quotient_bundle(&prod, &axis).unwrap();
    println!(
        "product bundle: sub-bundle along the smooth axis has rank {} ({} generators kept, approximate subset diffeology: {})",
        sub.fibre_dim,
        sub.gens.len(),
        sub.subset_approximate
    );
    println!(
        "quotient by that axis: rank {}, profile {:?}",
        quot.fibre_dim,
        profile(&quot)
    );
}
