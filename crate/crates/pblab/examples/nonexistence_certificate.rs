//! A bundle that admits no pseudo-metric, with a replayable certificate:
//! probe smoothness forces the candidate coefficient to vanish on a dense
//! set around the origin, while the fibre over the origin demands rank one.
//!
//! Run with: cargo run --example nonexistence_certificate

use pblab::bundle::{Bundle, CellKind, ChartId, Endpoint, FibreGen};
use pblab::expr::{AbsPoly, Var};
use pblab::metric::{existence_check, replay_certificate, Existence};
use pblab::rat::{rat_display, rat_int};

const SEED: u64 = 20260810;

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

    match existence_check(&bundle, SEED, 50).unwrap() {
        Existence::NonExistent(cert) => {
            println!("no pseudo-metric exists on this bundle");
            println!(
                "  the fibre over {} requires rank {}",
                rat_display(&cert.at),
                cert.required_rank
            );
            println!("  but probe smoothness forces the coefficients to vanish:");
            for (i, j, cell) in &cert.vanishing {
                println!("    g{}{} = 0 identically on {cell}", i + 1, j + 1);
            }
            println!("  forcing probes:");
            for p in &cert.probes {
                println!("    {p}");
            }
            println!(
                "  certificate replays consistently: {}",
                replay_certificate(&bundle, &cert, SEED, 50).unwrap()
            );
        }
        other => println!("unexpected outcome: {other:?}"),
    }

    // by contrast, the product bundle admits the canonical metric
    let product = Bundle::new(
        ChartId::new("u"),
        u,
        vec![CellKind::full_line()],
        2,
        vec![FibreGen::from_polys(
            vec![v.clone()],
            vec![AbsPoly::zero(), AbsPoly::abs_var(&v)],
        )],
        "product bundle",
    )
    .unwrap();
    match existence_check(&product, SEED, 50).unwrap() {
        Existence::Exists(metric) => {
            println!("the product bundle admits a pseudo-metric:");
            for (cell, m) in &metric.pieces {
                println!(
                    "  {cell}: [[{}, {}], [{}, {}]]",
                    m.get(0, 0),
                    m.get(0, 1),
                    m.get(1, 0),
                    m.get(1, 1)
                );
            }
        }
        other => println!("unexpected outcome: {other:?}"),
    }
}
