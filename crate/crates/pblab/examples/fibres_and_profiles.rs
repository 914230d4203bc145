//! Pseudo-bundles over cell-decomposed bases: fibre spaces over points and
//! the per-cell dual-dimension profile.
//!
//! The star of the show is the bundle with total generator
//! `(u, v) -> (u, u*abs(v))`: away from the origin its fibres carry the
//! abs-generated diffeology with trivial dual, while the fibre over the
//! origin is the standard line.
//!
//! Run with: cargo run --example fibres_and_profiles

use pblab::bundle::{Bundle, CellKind, ChartId, Endpoint, FibreGen};
use pblab::expr::{AbsPoly, Var};
use pblab::rat::{rat, rat_int};

fn main() {
    let u = Var::new("u");
    let v = Var::new("v");
    let bundle = Bundle::new(
        ChartId::new("u"),
        u.clone(),
        vec![
            CellKind::Interval(Endpoint::NegInf, Endpoint::Finite(rat_int(0))),
            CellKind::Point(rat_int(0)),
            CellKind::Interval(Endpoint::Finite(rat_int(0)), Endpoint::PosInf),
        ],
        1,
        vec![FibreGen::from_polys(
            vec![v.clone()],
            vec![AbsPoly::var(&u).mul(&AbsPoly::abs_var(&v))],
        )],
        "twisted line field",
    )
    .unwrap();

    for x in [rat_int(-2), rat(1, 3), rat_int(0)] {
        let fibre = bundle.fibre_space_at(&x).unwrap();
        println!(
            "fibre over {}: {} generators, dual dimension {}",
            pblab::rat::rat_display(&x),
            fibre.generators.len(),
            fibre.dual_basis().len()
        );
    }

    println!("dual-dimension profile:");
    for (cell, dim) in bundle.dual_dim_profile().unwrap() {
        println!("  {cell}: {dim}");
    }

    // a standard bundle for contrast
    let standard = Bundle::standard("x", "x", 2, "standard plane bundle");
    println!("standard rank-2 profile:");
    for (cell, dim) in standard.dual_dim_profile().unwrap() {
        println!("  {cell}: {dim}");
    }
}
