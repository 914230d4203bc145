//! Gluing two copies of the line along `x -> 1/x` produces the circle as a
//! four-cell complex; the switch map exchanges the two presentations.
//!
//! Run with: cargo run --example gluing_a_circle

use pblab::bundle::{CellKind, ChartId, Endpoint};
use pblab::expr::{AbsPoly, RatExpr, Var};
use pblab::glue::{glue_spaces, switch_map, BaseGluing, BaseSpace};
use pblab::rat::{rat, rat_display, rat_int};

fn main() {
    let cells = vec![
        CellKind::Interval(Endpoint::NegInf, Endpoint::Finite(rat_int(0))),
        CellKind::Point(rat_int(0)),
        CellKind::Interval(Endpoint::Finite(rat_int(0)), Endpoint::PosInf),
    ];
    let x_chart = BaseSpace::new("x", "x", cells.clone()).unwrap();
    let y_chart = BaseSpace::new("y", "y", cells).unwrap();
    let gluing = BaseGluing::new(
        "x",
        "y",
        vec![
            CellKind::Interval(Endpoint::NegInf, Endpoint::Finite(rat_int(0))),
            CellKind::Interval(Endpoint::Finite(rat_int(0)), Endpoint::PosInf),
        ],
        RatExpr::new(AbsPoly::one(), AbsPoly::var(&Var::new("x"))).unwrap(),
        Some(RatExpr::new(AbsPoly::one(), AbsPoly::var(&Var::new("y"))).unwrap()),
    );

    let circle = glue_spaces(&x_chart, &y_chart, &gluing).unwrap();
    println!("circle = line u_f line, {} cells:", circle.cell_count());
    for cell in &circle.cells {
        println!(
            "  {} region, chart {}, cell {}{}",
            cell.region,
            cell.chart,
            cell.cell,
            if cell.seam_source.is_some() {
                "  (image of the gluing domain)"
            } else {
                ""
            }
        );
    }

    // point location resolves through the gluing map
    for (chart, coord) in [("x", rat_int(2)), ("x", rat_int(0)), ("y", rat(1, 2))] {
        let p = circle.locate(&ChartId::new(chart), &coord).unwrap();
        println!(
            "point {}={} resolves to region {} at {}={}",
            chart,
            rat_display(&coord),
            p.region,
            p.chart,
            rat_display(&p.coordinate)
        );
    }

    // the switch map is involutive on sample points
    let sw = switch_map(&x_chart, &y_chart, &gluing).unwrap();
    println!(
        "switch map involutive on samples: {}",
        sw.is_involutive_on_samples().unwrap()
    );
    let p = sw.image_of(&ChartId::new("x"), &rat_int(2)).unwrap();
    println!(
        "under the switch, x=2 resolves in chart {} at {}",
        p.chart,
        rat_display(&p.coordinate)
    );
}
