//! diffeological duals of finitely generated vector spaces, and the
//! canonical pseudo-metric of maximal rank.
//!
//! Run with: cargo run --example dual_of_a_generated_space

use pblab::expr::{AbsPoly, Var};
use pblab::space::{Functional, GeneratedSpace, GeneratorPlot};

fn abs_axis(dim: usize, index: usize) -> GeneratorPlot {
    let x = Var::new("x");
    let mut components = vec![AbsPoly::zero(); dim];
    components[index] = AbsPoly::abs_var(&x);
    GeneratorPlot::new(vec![x], components)
}

fn show(space: &GeneratedSpace) {
    let basis = space.dual_basis();
    println!(
        "{}: dim {}, {} generators, dual dimension {}",
        space.label,
        space.dim,
        space.generators.len(),
        basis.len()
    );
    for phi in &basis {
        let coeffs: Vec<String> = phi.coeffs.iter().map(|c| format!("{c}")).collect();
        println!("  dual functional ({})", coeffs.join(", "));
    }
}

fn main() {
    // the standard plane keeps its whole dual
    show(&GeneratedSpace::standard(2, "standard plane"));

    // one abs generator kills exactly one direction
    show(&GeneratedSpace::new(2, vec![abs_axis(2, 1)], "one abs axis"));

    // abs generators on every axis leave a trivial dual
    for n in [2usize, 3] {
        let gens = (0..n).map(|i| abs_axis(n, i)).collect();
        show(&GeneratedSpace::new(n, gens, format!("all abs axes, n = {n}")));
    }

    // smoothness of individual functionals
    let space = GeneratedSpace::new(2, vec![abs_axis(2, 1)], "one abs axis");
    for index in 0..2 {
        let phi = Functional::basis(2, index);
        println!(
            "coordinate functional e{} smooth: {}",
            index + 1,
            space.is_smooth_functional(&phi)
        );
    }

    // the canonical pseudo-metric: sum of squares over the dual basis
    let (form, cert) = space.construct_pseudometric();
    let verdict = space.is_pseudometric(&form, Some(&cert), &[]);
    println!(
        "canonical pseudo-metric verdict: symmetric={} smooth={} rank={} (dual dim {})",
        verdict.symmetric, verdict.smooth, verdict.rank, verdict.dual_dim
    );

    // duals behave additively under direct sums and multiplicatively in
    // the supported tensor cases
    let line_abs = GeneratedSpace::new(1, vec![abs_axis(1, 0)], "abs line");
    let line_std = GeneratedSpace::standard(1, "standard line");
    println!(
        "dual dims: sum {} , tensor {}",
        line_abs.direct_sum(&line_std).dual_basis().len(),
        line_abs.tensor(&line_std).dual_basis().len(),
    );
}
