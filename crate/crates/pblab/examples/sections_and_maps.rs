//! Gluing maps and sections: compatibility checks, the glued objects, and
//! the exchange law between scalar multiplication and gluing.
//!
//! Run with: cargo run --example sections_and_maps

use pblab::bundle::{Bundle, CellKind, ChartId, Endpoint};
use pblab::expr::{AbsPoly, RatExpr, SignContext, Var};
use pblab::glue::{
    check_f_compatible, check_sections_compatible, glue_bundles, glue_maps, glue_sections,
    BaseGluing, BundleGluing, PiecewiseExpr, SectionData,
};
use pblab::linalg::ExprMatrix;
use pblab::rat::{rat, rat_display, rat_int};

fn main() {
    let cells = vec![
        CellKind::Interval(Endpoint::NegInf, Endpoint::Finite(rat_int(0))),
        CellKind::Point(rat_int(0)),
        CellKind::Interval(Endpoint::Finite(rat_int(0)), Endpoint::PosInf),
    ];
    let x = Var::new("x");
    let y = Var::new("y");
    let m1 = Bundle::new(ChartId::new("x"), x.clone(), cells.clone(), 1, vec![], "m1").unwrap();
    let m2 = Bundle::new(ChartId::new("y"), y.clone(), cells.clone(), 1, vec![], "m2").unwrap();
    let base = BaseGluing::new(
        "x",
        "y",
        vec![cells[0].clone(), cells[2].clone()],
        RatExpr::new(AbsPoly::one(), AbsPoly::var(&x)).unwrap(),
        Some(RatExpr::new(AbsPoly::one(), AbsPoly::var(&y)).unwrap()),
    );
    let moebius = glue_bundles(
        &m1,
        &m2,
        &BundleGluing {
            base,
            lift: vec![
                (cells[0].clone(), ExprMatrix::new(1, 1, vec![RatExpr::one()])),
                (
                    cells[2].clone(),
                    ExprMatrix::new(1, 1, vec![RatExpr::constant(rat_int(-1))]),
                ),
            ],
        },
    )
    .unwrap();

    // scalar maps phi1(x) = x and phi2(y) = 1/y agree across the seam
    let phi1 = PiecewiseExpr::uniform(&x, &cells, RatExpr::var(&x));
    let phi2 = PiecewiseExpr::uniform(
        &y,
        &cells,
        RatExpr::new(AbsPoly::one(), AbsPoly::var(&y)).unwrap(),
    );
    println!(
        "phi1(x) = x and phi2(y) = 1/y compatible: {}",
        check_f_compatible(&phi1, &phi2, &moebius.space).unwrap()
    );
    let glued_map = glue_maps(&phi1, &phi2, &moebius.space).unwrap();
    let through_x = glued_map
        .eval(&moebius.space, &ChartId::new("x"), &rat_int(2))
        .unwrap();
    let through_y = glued_map
        .eval(&moebius.space, &ChartId::new("y"), &rat(1, 2))
        .unwrap();
    println!(
        "glued map at the identified point x=2 ~ y=1/2: {} = {}",
        rat_display(&through_x),
        rat_display(&through_y)
    );

    // a compatible section pair: s2(1/x) = lift(x) * s1(x)
    let s1 = SectionData::uniform(
        &x,
        &cells,
        vec![RatExpr::from_poly(
            AbsPoly::var(&x).sub(&AbsPoly::var(&x).pow(3)),
        )],
    );
    let s2_neg = RatExpr::new(
        AbsPoly::var(&y).pow(2).sub(&AbsPoly::one()),
        AbsPoly::var(&y).pow(3),
    )
    .unwrap();
    let s2 = SectionData {
        var: y.clone(),
        pieces: vec![
            (cells[0].clone(), vec![s2_neg.clone()]),
            (cells[1].clone(), vec![RatExpr::zero()]),
            (cells[2].clone(), vec![s2_neg.neg()]),
        ],
    };
    println!(
        "sections compatible with the sign-flipping lift: {}",
        check_sections_compatible(&s1, &s2, &moebius).unwrap()
    );
    let section = glue_sections(&s1, &s2, &moebius).unwrap();
    let value = section.eval(&moebius, &ChartId::new("x"), &rat_int(2)).unwrap();
    println!(
        "glued section at x=2 (resolved through the lift): {}",
        rat_display(&value[0])
    );

    // scalar multiplication commutes with gluing piece by piece
    let h1 = PiecewiseExpr::uniform(
        &x,
        &cells,
        RatExpr::new(
            AbsPoly::var(&x).pow(2),
            AbsPoly::one().add(&AbsPoly::var(&x).pow(2)),
        )
        .unwrap(),
    );
    let h2 = PiecewiseExpr::uniform(
        &y,
        &cells,
        RatExpr::new(
            AbsPoly::one(),
            AbsPoly::one().add(&AbsPoly::var(&y).pow(2)),
        )
        .unwrap(),
    );
    let glued_h = glue_maps(&h1, &h2, &moebius.space).unwrap();
    let lhs = glue_sections(&s1, &s2, &moebius).unwrap().scaled_by(&glued_h);
    let rhs = glue_sections(&s1.scaled_by(&h1), &s2.scaled_by(&h2), &moebius).unwrap();
    let ctx = SignContext::empty();
    let equal = lhs
        .pieces
        .iter()
        .zip(&rhs.pieces)
        .all(|((_, _, _, a), (_, _, _, b))| {
            a.iter().zip(b).all(|(p, q)| p.equals_on(q, &ctx))
        });
    println!("(h1 u h2)(s1 u s2) = (h1 s1) u (h2 s2): {equal}");
}
