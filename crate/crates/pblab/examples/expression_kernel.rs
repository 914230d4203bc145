//! The exact expression kernel: normal forms under sign contexts, the
//! smoothness decision, substitution and evaluation.
//!
//! Run with: cargo run --example expression_kernel

use std::collections::BTreeMap;

use pblab::expr::{AbsPoly, RatExpr, Sign, SignContext, Var};
use pblab::rat::{rat, rat_int};

fn main() {
    let u = Var::new("u");
    let v = Var::new("v");

    // u*abs(v) + 2 is smooth nowhere across {v = 0}
    let e = AbsPoly::var(&u)
        .mul(&AbsPoly::abs_var(&v))
        .add(&AbsPoly::constant(rat_int(2)));
    let anywhere = SignContext::empty();
    println!("e = {e}");
    println!("  smooth on a cell where v can change sign: {}", e.is_smooth(&anywhere));

    // on the cell v > 0 the abs factor resolves and e becomes polynomial
    let v_pos = SignContext::empty().with(v.clone(), Sign::Pos);
    println!("  normal form on v > 0: {}", e.normalize(&v_pos));
    println!("  smooth there: {}", e.is_smooth(&v_pos));

    // abs(u)*abs(u) collapses to u^2
    let square = AbsPoly::abs_var(&u).mul(&AbsPoly::abs_var(&u));
    println!("abs(u)*abs(u) = {square}");

    // substitution stays inside the class or fails loudly
    let mut sub = BTreeMap::new();
    sub.insert(v.clone(), AbsPoly::constant(rat(-3, 2)));
    println!("e[v := -3/2] = {}", e.substitute(&sub, &anywhere).unwrap());

    let mut bad = BTreeMap::new();
    bad.insert(v.clone(), AbsPoly::var(&u).add(&AbsPoly::one()));
    println!(
        "e[v := u + 1] -> {}",
        e.substitute(&bad, &anywhere).unwrap_err()
    );

    // rational maps compose exactly: 1/(1/x) = x on a sign-definite cell
    let x = Var::new("x");
    let y = Var::new("y");
    let x_pos = SignContext::empty().with(x.clone(), Sign::Pos);
    let f = RatExpr::new(AbsPoly::one(), AbsPoly::var(&x)).unwrap();
    let g = RatExpr::new(AbsPoly::one(), AbsPoly::var(&y)).unwrap();
    let mut comp = BTreeMap::new();
    comp.insert(y, f.clone());
    let round = g.substitute(&comp, &x_pos).unwrap();
    println!("(1/y) o (1/x) = {round} on x > 0");

    // exact evaluation
    let mut point = BTreeMap::new();
    point.insert(u, rat_int(2));
    point.insert(v.clone(), rat(-3, 4));
    println!(
        "e(2, -3/4) = {}",
        pblab::rat::rat_display(&e.eval(&point).unwrap())
    );
}
