//! Shared test support: random expression generation and the independent
//! finite-difference smoothness oracle.
#![allow(dead_code)] // each test binary uses a different slice of this module
//!
//! The oracle knows nothing about normal forms: it evaluates the
//! expression in floating point along coordinate axes through the abs
//! hyperplanes and watches third-order central differences under grid
//! refinement. An expression fails the oracle exactly when some probe's
//! difference quotient grows by at least ten times under two consecutive
//! fourfold refinements, above a noise floor.

use std::collections::{BTreeMap, BTreeSet};

use pblab::expr::{AbsPoly, TermKey, Var};
use pblab::rat::{rat, rat_to_f64, Rat};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Plain floating-point evaluation, independent of the exact kernel.
pub fn eval_f64(e: &AbsPoly, point: &BTreeMap<Var, f64>) -> f64 {
    let mut total = 0.0;
    for (key, coeff) in e.terms() {
        let mut v = rat_to_f64(coeff);
        for (var, k) in &key.powers {
            v *= point[var].powi(*k as i32);
        }
        for var in &key.abs {
            v *= point[var].abs();
        }
        total += v;
    }
    total
}

/// Third-order central difference of `f` at `t0` with step `h`.
fn d3(f: &impl Fn(f64) -> f64, t0: f64, h: f64) -> f64 {
    (f(t0 + 2.0 * h) - 2.0 * f(t0 + h) + 2.0 * f(t0 - h) - f(t0 - 2.0 * h)) / (2.0 * h * h * h)
}

const LEVELS: usize = 7;
const GROWTH: f64 = 10.0;
const FLOOR: f64 = 1.0;

/// True when the difference quotients along this probe line diverge:
/// two consecutive ratios of at least [`GROWTH`] under fourfold
/// refinement, with the final value above the noise floor.
fn probe_diverges(f: &impl Fn(f64) -> f64) -> bool {
    let mut values = Vec::with_capacity(LEVELS);
    let mut h = 0.4;
    for _ in 0..LEVELS {
        // keep the kink strictly inside the stencil and off the nodes
        let t0 = h / 2.0;
        values.push(d3(f, t0, h));
        h /= 4.0;
    }
    for k in 0..LEVELS - 2 {
        let r1 = values[k + 1].abs() / values[k].abs().max(1e-12);
        let r2 = values[k + 2].abs() / values[k + 1].abs().max(1e-12);
        if r1 >= GROWTH && r2 >= GROWTH && values[k + 2].abs() >= FLOOR {
            return true;
        }
    }
    false
}

/// The numeric smoothness oracle: probes every variable axis through its
/// zero hyperplane, with the remaining coordinates frozen at all sign
/// patterns of random magnitudes. Returns true when no probe diverges.
pub fn oracle_is_smooth(e: &AbsPoly, rng: &mut ChaCha8Rng) -> bool {
    let vars: Vec<Var> = e.vars().into_iter().collect();
    for axis in &vars {
        let others: Vec<Var> = vars.iter().filter(|v| *v != axis).cloned().collect();
        let patterns = 1usize << others.len();
        for _draw in 0..2 {
            let mags: Vec<f64> = others.iter().map(|_| rng.gen_range(0.5..2.0)).collect();
            for pattern in 0..patterns {
                let mut frozen = BTreeMap::new();
                for (i, v) in others.iter().enumerate() {
                    let sign = if pattern >> i & 1 == 0 { 1.0 } else { -1.0 };
                    frozen.insert(v.clone(), sign * mags[i]);
                }
                let f = |t: f64| {
                    let mut point = frozen.clone();
                    point.insert(axis.clone(), t);
                    eval_f64(e, &point)
                };
                if probe_diverges(&f) {
                    return false;
                }
            }
        }
    }
    true
}

/// Random normal-form expression: at most three variables, total degree at
/// most four, at most two abs factors per term, abs variables not repeated
/// in the same term's monomial. A fair share of the output is purely
/// polynomial so both answers of the smoothness decision get exercised.
pub fn random_expr(rng: &mut ChaCha8Rng) -> AbsPoly {
    let all_vars = ["x", "y", "z"];
    let nvars = rng.gen_range(1..=3usize);
    let vars: Vec<Var> = all_vars[..nvars].iter().map(|s| Var::new(*s)).collect();
    let nterms = rng.gen_range(1..=5usize);
    let polynomial_only = rng.gen_bool(0.4);
    let mut terms = Vec::new();
    for _ in 0..nterms {
        let mut abs = BTreeSet::new();
        let nabs = if polynomial_only {
            0
        } else {
            rng.gen_range(0..=2usize.min(nvars))
        };
        let mut shuffled = vars.clone();
        shuffled.shuffle(rng);
        for v in shuffled.iter().take(nabs) {
            abs.insert(v.clone());
        }
        let mut powers = BTreeMap::new();
        let mut budget = 4usize.saturating_sub(abs.len());
        for v in &vars {
            if abs.contains(v) || budget == 0 {
                continue;
            }
            let k = rng.gen_range(0..=budget.min(3));
            if k > 0 {
                powers.insert(v.clone(), k as u32);
                budget -= k;
            }
        }
        let num = rng.gen_range(1..=9i64) * if rng.gen_bool(0.5) { 1 } else { -1 };
        let den = rng.gen_range(1..=3i64);
        terms.push((TermKey { powers, abs }, rat(num, den)));
    }
    AbsPoly::from_terms(terms)
}

#[allow(dead_code)]
pub fn rat_one() -> Rat {
    rat(1, 1)
}

// ------------------------------------------------------- shared fixtures

use pblab::bundle::{Bundle, CellKind, ChartId, Endpoint, FibreGen};
use pblab::expr::RatExpr;
use pblab::glue::{glue_bundles, BaseGluing, BundleGluing, GluedBundle};
use pblab::linalg::ExprMatrix;
use pblab::metric::ChartMetric;
use pblab::rat::rat_int;

pub fn three_cells() -> Vec<CellKind> {
    vec![
        CellKind::Interval(Endpoint::NegInf, Endpoint::Finite(rat_int(0))),
        CellKind::Point(rat_int(0)),
        CellKind::Interval(Endpoint::Finite(rat_int(0)), Endpoint::PosInf),
    ]
}

pub fn punctured() -> Vec<CellKind> {
    vec![
        CellKind::Interval(Endpoint::NegInf, Endpoint::Finite(rat_int(0))),
        CellKind::Interval(Endpoint::Finite(rat_int(0)), Endpoint::PosInf),
    ]
}

pub fn reciprocal(var: &str) -> RatExpr {
    RatExpr::new(AbsPoly::one(), AbsPoly::var(&Var::new(var))).unwrap()
}

pub fn circle_gluing() -> BaseGluing {
    BaseGluing::new(
        "x",
        "y",
        punctured(),
        reciprocal("x"),
        Some(reciprocal("y")),
    )
}

pub fn line_bundle(chart: &str) -> Bundle {
    Bundle::new(
        ChartId::new(chart),
        Var::new(chart),
        three_cells(),
        1,
        Vec::new(),
        format!("{chart}-line"),
    )
    .unwrap()
}

pub fn signed_lift(signs: [i64; 2]) -> Vec<(CellKind, ExprMatrix)> {
    vec![
        (
            CellKind::Interval(Endpoint::NegInf, Endpoint::Finite(rat_int(0))),
            ExprMatrix::new(1, 1, vec![RatExpr::constant(rat_int(signs[0]))]),
        ),
        (
            CellKind::Interval(Endpoint::Finite(rat_int(0)), Endpoint::PosInf),
            ExprMatrix::new(1, 1, vec![RatExpr::constant(rat_int(signs[1]))]),
        ),
    ]
}

pub fn moebius_gluing() -> BundleGluing {
    BundleGluing {
        base: circle_gluing(),
        lift: signed_lift([1, -1]),
    }
}

pub fn annulus_gluing() -> BundleGluing {
    BundleGluing {
        base: circle_gluing(),
        lift: signed_lift([1, 1]),
    }
}

pub fn moebius_bundle() -> GluedBundle {
    glue_bundles(&line_bundle("x"), &line_bundle("y"), &moebius_gluing()).unwrap()
}

pub fn annulus_bundle() -> GluedBundle {
    glue_bundles(&line_bundle("x"), &line_bundle("y"), &annulus_gluing()).unwrap()
}

pub fn unit_metric(chart: &str) -> ChartMetric {
    ChartMetric::uniform(
        &Var::new(chart),
        &three_cells(),
        ExprMatrix::new(1, 1, vec![RatExpr::one()]),
    )
}

/// The bundle admitting no pseudo-metric: total generator `(u, v) -> (u, u abs(v))`.
pub fn nonmetrizable_bundle() -> Bundle {
    let u = Var::new("u");
    let v = Var::new("v");
    Bundle::new(
        ChartId::new("u"),
        u.clone(),
        three_cells_for("u"),
        1,
        vec![FibreGen::from_polys(
            vec![v.clone()],
            vec![AbsPoly::var(&u).mul(&AbsPoly::abs_var(&v))],
        )],
        "uv-bundle",
    )
    .unwrap()
}

fn three_cells_for(_var: &str) -> Vec<CellKind> {
    three_cells()
}

/// The product bundle with fibre generated by `v -> (0, abs(v))`.
pub fn product_bundle() -> Bundle {
    let v = Var::new("v");
    Bundle::new(
        ChartId::new("u"),
        Var::new("u"),
        vec![CellKind::full_line()],
        2,
        vec![FibreGen::from_polys(
            vec![v.clone()],
            vec![AbsPoly::zero(), AbsPoly::abs_var(&v)],
        )],
        "prod-bundle",
    )
    .unwrap()
}
