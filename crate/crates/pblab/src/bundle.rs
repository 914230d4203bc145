//! Pseudo-bundles over one-dimensional cell-decomposed bases.
//!
//! A bundle is given in split form: the base components of every total
//! generator are identically the base variable, so restricting a generator
//! to the fibre over a point is a substitution. Per-cell fibre spaces are
//! derived [`GeneratedSpace`]s whose coefficients may depend on the base
//! variable; interval cells are handled parametrically (coefficients not
//! identically zero on the cell count as nonzero on its interior), point
//! cells by exact substitution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::expr::{AbsPoly, ExprError, RatExpr, Sign, SignContext, Var};
use crate::linalg::ExprMatrix;
use crate::rat::{rat, rat_display, rat_int, Rat};
use crate::space::{Functional, GeneratedSpace, GeneratorPlot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BundleError {
    #[error("point {0} lies outside the base complex")]
    PointOutsideBase(String),
    #[error("base complexes do not match: {0}")]
    BaseMismatch(String),
    #[error("spanning vectors do not describe a subspace of the fibre: {0}")]
    NotASubspace(String),
    #[error("sub-bundle data varies across cells of one chart: {0}")]
    NonUniformSubBundle(String),
    #[error("cells do not partition the chart base: {0}")]
    BadCellDecomposition(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Identifier of a base chart.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChartId(pub String);

impl ChartId {
    pub fn new(s: impl Into<String>) -> Self {
        ChartId(s.into())
    }
}

impl fmt::Display for ChartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    NegInf,
    Finite(Rat),
    PosInf,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::NegInf => write!(f, "-inf"),
            Endpoint::Finite(q) => write!(f, "{}", rat_display(q)),
            Endpoint::PosInf => write!(f, "inf"),
        }
    }
}

/// A cell of a one-dimensional chart: a single point or an open interval.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CellKind {
    Point(Rat),
    Interval(Endpoint, Endpoint),
}

impl Ord for CellKind {
    /// Orders cells by their position on the line: a point sits before the
    /// open interval that starts at it.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        fn key(c: &CellKind) -> (Endpoint, u8, Endpoint) {
            match c {
                CellKind::Point(q) => (Endpoint::Finite(q.clone()), 0, Endpoint::Finite(q.clone())),
                CellKind::Interval(lo, hi) => (lo.clone(), 1, hi.clone()),
            }
        }
        key(self).cmp(&key(other))
    }
}

impl PartialOrd for CellKind {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellKind::Point(q) => write!(f, "{{{}}}", rat_display(q)),
            CellKind::Interval(lo, hi) => write!(f, "({lo}, {hi})"),
        }
    }
}

impl CellKind {
    pub fn full_line() -> Self {
        CellKind::Interval(Endpoint::NegInf, Endpoint::PosInf)
    }

    pub fn contains(&self, x: &Rat) -> bool {
        match self {
            CellKind::Point(q) => q == x,
            CellKind::Interval(lo, hi) => {
                let above = match lo {
                    Endpoint::NegInf => true,
                    Endpoint::Finite(a) => x > a,
                    Endpoint::PosInf => false,
                };
                let below = match hi {
                    Endpoint::NegInf => false,
                    Endpoint::Finite(b) => x < b,
                    Endpoint::PosInf => true,
                };
                above && below
            }
        }
    }

    /// Sign of the chart coordinate on this cell.
    pub fn coordinate_sign(&self) -> Sign {
        match self {
            CellKind::Point(q) => {
                if num_traits::Zero::is_zero(q) {
                    Sign::Zero
                } else if *q < rat_int(0) {
                    Sign::Neg
                } else {
                    Sign::Pos
                }
            }
            CellKind::Interval(lo, hi) => {
                let zero = rat_int(0);
                let lo_nonneg = matches!(lo, Endpoint::Finite(a) if *a >= zero);
                let hi_nonpos = matches!(hi, Endpoint::Finite(b) if *b <= zero);
                if lo_nonneg {
                    Sign::Pos
                } else if hi_nonpos {
                    Sign::Neg
                } else {
                    Sign::Any
                }
            }
        }
    }

    pub fn sign_context(&self, var: &Var) -> SignContext {
        SignContext::empty().with(var.clone(), self.coordinate_sign())
    }

    /// Deterministic interior sample points.
    pub fn samples(&self, n: usize) -> Vec<Rat> {
        match self {
            CellKind::Point(q) => vec![q.clone()],
            CellKind::Interval(lo, hi) => {
                let mut out = Vec::with_capacity(n);
                match (lo, hi) {
                    (Endpoint::NegInf, Endpoint::PosInf) => {
                        let mut k = 0i64;
                        while out.len() < n {
                            out.push(rat_int(k));
                            if k > 0 && out.len() < n {
                                out.push(rat_int(-k));
                            }
                            k += 1;
                        }
                    }
                    (Endpoint::NegInf, Endpoint::Finite(b)) => {
                        for k in 1..=n as i64 {
                            out.push(b - rat_int(k));
                        }
                    }
                    (Endpoint::Finite(a), Endpoint::PosInf) => {
                        for k in 1..=n as i64 {
                            out.push(a + rat_int(k));
                        }
                    }
                    (Endpoint::Finite(a), Endpoint::Finite(b)) => {
                        let width = b - a;
                        for k in 1..=n as i64 {
                            out.push(a + width.clone() * rat(k, n as i64 + 1));
                        }
                    }
                    _ => {}
                }
                out.truncate(n);
                out
            }
        }
    }
}

/// Checks that cells are pairwise disjoint and tile the whole line:
/// `(-inf, a0), {a0}, (a0, a1), {a1}, ..., (ak, inf)`.
pub fn validate_cells(cells: &[CellKind]) -> Result<(), BundleError> {
    let mut sorted = cells.to_vec();
    sorted.sort();
    if sorted.is_empty() {
        return Err(BundleError::BadCellDecomposition("no cells".into()));
    }
    let mut cursor = Endpoint::NegInf;
    let mut expect_point = false;
    for cell in &sorted {
        match cell {
            CellKind::Interval(lo, hi) => {
                if expect_point || *lo != cursor {
                    return Err(BundleError::BadCellDecomposition(format!(
                        "gap or overlap at {cell}"
                    )));
                }
                if *hi <= *lo {
                    return Err(BundleError::BadCellDecomposition(format!(
                        "empty interval {cell}"
                    )));
                }
                cursor = hi.clone();
                expect_point = true;
            }
            CellKind::Point(q) => {
                if !expect_point || cursor != Endpoint::Finite(q.clone()) {
                    return Err(BundleError::BadCellDecomposition(format!(
                        "point cell {cell} does not close the previous interval"
                    )));
                }
                expect_point = false;
            }
        }
    }
    if cursor != Endpoint::PosInf {
        return Err(BundleError::BadCellDecomposition(
            "cells do not reach +inf".into(),
        ));
    }
    Ok(())
}

/// A split-form total generator, restricted to its fibre components.
/// Components live in the chart's base variable plus the fibre domain
/// variables.
#[derive(Debug, Clone, PartialEq)]
pub struct FibreGen {
    pub fibre_vars: Vec<Var>,
    pub components: Vec<RatExpr>,
}

impl FibreGen {
    pub fn new(fibre_vars: Vec<Var>, components: Vec<RatExpr>) -> Self {
        FibreGen {
            fibre_vars,
            components,
        }
    }

    pub fn from_polys(fibre_vars: Vec<Var>, components: Vec<AbsPoly>) -> Self {
        Self::new(
            fibre_vars,
            components.into_iter().map(RatExpr::from_poly).collect(),
        )
    }

    pub fn fibre_var_set(&self) -> BTreeSet<Var> {
        self.fibre_vars.iter().cloned().collect()
    }

    pub fn is_zero_on(&self, ctx: &SignContext) -> bool {
        self.components.iter().all(|c| c.is_zero_on(ctx))
    }

    pub fn renamed_fibre_vars(&self, mut fresh: impl FnMut(usize) -> Var) -> FibreGen {
        let mut map = BTreeMap::new();
        let mut vars = Vec::new();
        for (i, v) in self.fibre_vars.iter().enumerate() {
            let nv = fresh(i);
            map.insert(v.clone(), RatExpr::var(&nv));
            vars.push(nv);
        }
        let ctx = SignContext::empty();
        let components = self
            .components
            .iter()
            .map(|c| c.substitute(&map, &ctx).expect("renaming stays in-class"))
            .collect();
        FibreGen {
            fibre_vars: vars,
            components,
        }
    }

    /// Clears denominators: all components scaled by a common denominator.
    /// Scaling a generator by a nonvanishing function of the base does not
    /// change the generated fibre diffeology on a cell.
    pub fn cleared(&self, ctx: &SignContext) -> (Vec<Var>, Vec<AbsPoly>) {
        let mut den = AbsPoly::one();
        for c in &self.components {
            if c.den().is_constant().is_none() {
                den = den.mul(c.den());
            }
        }
        let den_expr = RatExpr::from_poly(den);
        let comps = self
            .components
            .iter()
            .map(|c| {
                let scaled = c.mul(&den_expr);
                scaled
                    .is_polynomial()
                    .cloned()
                    .unwrap_or_else(|| scaled.num().clone())
                    .normalize(ctx)
            })
            .collect();
        (self.fibre_vars.clone(), comps)
    }
}

/// A pseudo-bundle over a single one-dimensional chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub chart: ChartId,
    pub base_var: Var,
    pub cells: Vec<CellKind>,
    pub fibre_dim: usize,
    pub gens: Vec<FibreGen>,
    pub label: String,
    /// Set when the bundle's diffeology is an in-class under-approximation
    /// (sub-bundles keep only the generators landing in the subspace).
    pub subset_approximate: bool,
}

impl Bundle {
    pub fn new(
        chart: ChartId,
        base_var: Var,
        cells: Vec<CellKind>,
        fibre_dim: usize,
        gens: Vec<FibreGen>,
        label: impl Into<String>,
    ) -> Result<Self, BundleError> {
        validate_cells(&cells)?;
        let mut cells = cells;
        cells.sort();
        for g in &gens {
            if g.components.len() != fibre_dim {
                return Err(BundleError::BaseMismatch(format!(
                    "generator has {} components, fibre dimension is {fibre_dim}",
                    g.components.len()
                )));
            }
        }
        let ctx = SignContext::empty();
        let gens = gens.into_iter().filter(|g| !g.is_zero_on(&ctx)).collect();
        Ok(Bundle {
            chart,
            base_var,
            cells,
            fibre_dim,
            gens,
            label: label.into(),
            subset_approximate: false,
        })
    }

    /// Standard bundle: trivial fibering with no nonstandard generators.
    pub fn standard(
        chart: impl Into<String>,
        base_var: &str,
        fibre_dim: usize,
        label: impl Into<String>,
    ) -> Self {
        Bundle::new(
            ChartId::new(chart),
            Var::new(base_var),
            vec![CellKind::full_line()],
            fibre_dim,
            Vec::new(),
            label,
        )
        .expect("single full-line cell is a valid decomposition")
    }

    pub fn locate(&self, x: &Rat) -> Result<&CellKind, BundleError> {
        self.cells
            .iter()
            .find(|c| c.contains(x))
            .ok_or_else(|| BundleError::PointOutsideBase(rat_display(x)))
    }

    /// The fibre over a point: base variable substituted, zero generators
    /// dropped, result a constant-coefficient generated space.
    pub fn fibre_space_at(&self, x: &Rat) -> Result<GeneratedSpace, BundleError> {
        self.locate(x)?;
        piece_fibre_space_at(&self.base_var, x, self.fibre_dim, &self.gens, &self.label)
    }

    /// Parametric fibre space on a cell, plus the sign context of the cell.
    /// Interval cells keep the base variable symbolic; point cells
    /// substitute it exactly.
    pub fn fibre_space_on(
        &self,
        cell: &CellKind,
    ) -> Result<(GeneratedSpace, SignContext), BundleError> {
        piece_fibre_space_on(&self.base_var, cell, self.fibre_dim, &self.gens, &self.label)
    }

    /// Per-cell dual dimensions.
    pub fn dual_dim_profile(&self) -> Result<Vec<(CellKind, usize)>, BundleError> {
        let mut out = Vec::new();
        for cell in &self.cells {
            let (space, ctx) = self.fibre_space_on(cell)?;
            out.push((cell.clone(), space.dual_dim_on(&ctx)?));
        }
        Ok(out)
    }

    fn same_base(&self, other: &Bundle) -> Result<(), BundleError> {
        if self.chart != other.chart || self.base_var != other.base_var || self.cells != other.cells
        {
            return Err(BundleError::BaseMismatch(format!(
                "{} vs {}",
                self.label, other.label
            )));
        }
        Ok(())
    }

    /// Fibrewise direct sum, lifted to split-form total generators with the
    /// shared base variable.
    pub fn direct_sum(&self, other: &Bundle) -> Result<Bundle, BundleError> {
        self.same_base(other)?;
        let dim = self.fibre_dim + other.fibre_dim;
        let mut gens = Vec::new();
        for g in &self.gens {
            let g = g.renamed_fibre_vars(|i| Var::new(format!("$a{i}")));
            let mut comps = g.components.clone();
            comps.extend(std::iter::repeat_n(RatExpr::zero(), other.fibre_dim));
            gens.push(FibreGen::new(g.fibre_vars, comps));
        }
        for g in &other.gens {
            let g = g.renamed_fibre_vars(|i| Var::new(format!("$b{i}")));
            let mut comps = vec![RatExpr::zero(); self.fibre_dim];
            comps.extend(g.components);
            gens.push(FibreGen::new(g.fibre_vars, comps));
        }
        Bundle::new(
            self.chart.clone(),
            self.base_var.clone(),
            self.cells.clone(),
            dim,
            gens,
            format!("{} (+) {}", self.label, other.label),
        )
    }

    /// Fibrewise tensor product: pairwise generator products on disjoint
    /// fibre variables, plus generators against constant fibre vectors.
    pub fn tensor(&self, other: &Bundle) -> Result<Bundle, BundleError> {
        self.same_base(other)?;
        let d1 = self.fibre_dim;
        let d2 = other.fibre_dim;
        let dim = d1 * d2;
        let lefts: Vec<FibreGen> = self
            .gens
            .iter()
            .map(|g| g.renamed_fibre_vars(|i| Var::new(format!("$a{i}"))))
            .collect();
        let rights: Vec<FibreGen> = other
            .gens
            .iter()
            .map(|g| g.renamed_fibre_vars(|i| Var::new(format!("$b{i}"))))
            .collect();
        let mut gens = Vec::new();
        for p in &lefts {
            for q in &rights {
                let mut vars = p.fibre_vars.clone();
                vars.extend(q.fibre_vars.clone());
                let mut comps = Vec::with_capacity(dim);
                for i in 0..d1 {
                    for j in 0..d2 {
                        comps.push(p.components[i].mul(&q.components[j]));
                    }
                }
                gens.push(FibreGen::new(vars, comps));
            }
        }
        for p in &lefts {
            for j in 0..d2 {
                let mut comps = vec![RatExpr::zero(); dim];
                for i in 0..d1 {
                    comps[i * d2 + j] = p.components[i].clone();
                }
                gens.push(FibreGen::new(p.fibre_vars.clone(), comps));
            }
        }
        for q in &rights {
            for i in 0..d1 {
                let mut comps = vec![RatExpr::zero(); dim];
                for j in 0..d2 {
                    comps[i * d2 + j] = q.components[j].clone();
                }
                gens.push(FibreGen::new(q.fibre_vars.clone(), comps));
            }
        }
        Bundle::new(
            self.chart.clone(),
            self.base_var.clone(),
            self.cells.clone(),
            dim,
            gens,
            format!("{} (x) {}", self.label, other.label),
        )
    }

    /// The dual pseudo-bundle as an evaluation-backed view: per-cell dual
    /// bases paired against the total generators. No generating family is
    /// synthesized for the dual diffeology.
    pub fn dual_view(&self) -> Result<DualBundleView, BundleError> {
        let mut cells = Vec::new();
        for cell in &self.cells {
            let (space, ctx) = self.fibre_space_on(cell)?;
            let basis = space.dual_basis_on(&ctx)?;
            cells.push(DualCell {
                cell: cell.clone(),
                basis,
            });
        }
        Ok(DualBundleView {
            chart: self.chart.clone(),
            base_var: self.base_var.clone(),
            primal_fibre_dim: self.fibre_dim,
            primal_gens: self.gens.clone(),
            cells,
            label: format!("dual({})", self.label),
        })
    }
}

/// Evaluation-backed view of the dual bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBundleView {
    pub chart: ChartId,
    pub base_var: Var,
    pub primal_fibre_dim: usize,
    pub primal_gens: Vec<FibreGen>,
    pub cells: Vec<DualCell>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCell {
    pub cell: CellKind,
    pub basis: Vec<Functional>,
}

impl DualBundleView {
    pub fn fibre_dims(&self) -> Vec<(CellKind, usize)> {
        self.cells
            .iter()
            .map(|c| (c.cell.clone(), c.basis.len()))
            .collect()
    }

    /// Pairs a dual section, given per cell in the view's dual basis
    /// coordinates, against one total generator of the primal bundle:
    /// the evaluation `u -> phi(u)(gen(u, v))` as an expression.
    pub fn pair_with_generator(
        &self,
        cell_index: usize,
        dual_coords: &[RatExpr],
        gen: &FibreGen,
    ) -> RatExpr {
        let basis = &self.cells[cell_index].basis;
        assert_eq!(dual_coords.len(), basis.len());
        let mut acc = RatExpr::zero();
        for (c, phi) in dual_coords.iter().zip(basis) {
            acc = acc.add(&c.mul(&phi.apply_exprs(&gen.components)));
        }
        acc
    }

    /// When every fibre of the view is standard of the same dimension
    /// (duals of finite-dimensional diffeological vector spaces are always
    /// standard), the view is itself a standard bundle.
    pub fn as_standard_bundle(&self) -> Option<Bundle> {
        let dims: BTreeSet<usize> = self.cells.iter().map(|c| c.basis.len()).collect();
        if dims.len() != 1 {
            return None;
        }
        let dim = *dims.iter().next().unwrap();
        Some(
            Bundle::new(
                self.chart.clone(),
                self.base_var.clone(),
                self.cells.iter().map(|c| c.cell.clone()).collect(),
                dim,
                Vec::new(),
                self.label.clone(),
            )
            .expect("view cells form a valid decomposition"),
        )
    }
}

/// Per-cell spanning vectors for a sub-bundle `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubBundleSpec {
    pub spans: Vec<(CellKind, Vec<Vec<RatExpr>>)>,
}

impl SubBundleSpec {
    pub fn uniform(cells: &[CellKind], span: Vec<Vec<RatExpr>>) -> Self {
        SubBundleSpec {
            spans: cells.iter().map(|c| (c.clone(), span.clone())).collect(),
        }
    }

    pub fn zero(cells: &[CellKind]) -> Self {
        Self::uniform(cells, Vec::new())
    }

    pub fn full(cells: &[CellKind], dim: usize) -> Self {
        let span = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| if i == j { RatExpr::one() } else { RatExpr::zero() })
                    .collect()
            })
            .collect();
        Self::uniform(cells, span)
    }

    pub fn span_for(&self, cell: &CellKind) -> Option<&Vec<Vec<RatExpr>>> {
        self.spans.iter().find(|(c, _)| c == cell).map(|(_, s)| s)
    }
}

/// Chart-wide reduced basis of `W` and its pivot columns; the reduction is
/// required to agree on every cell of the chart so sub- and quotient
/// bundles have chart-wide generators.
pub(crate) struct UniformSubData {
    pub w_basis: Vec<Vec<RatExpr>>,
    pub pivots: Vec<usize>,
}

pub(crate) fn uniform_sub_data(
    bundle: &Bundle,
    w: &SubBundleSpec,
) -> Result<UniformSubData, BundleError> {
    let mut reference: Option<(ExprMatrix, Vec<usize>)> = None;
    for cell in &bundle.cells {
        let span = w
            .span_for(cell)
            .ok_or_else(|| BundleError::NotASubspace(format!("no spanning data on cell {cell}")))?;
        for v in span {
            if v.len() != bundle.fibre_dim {
                return Err(BundleError::NotASubspace(format!(
                    "spanning vector of length {} in fibre dimension {}",
                    v.len(),
                    bundle.fibre_dim
                )));
            }
        }
        let ctx = cell.sign_context(&bundle.base_var);
        let reduced = if span.is_empty() {
            (ExprMatrix::zeros(0, bundle.fibre_dim), Vec::new())
        } else {
            let data: Vec<RatExpr> = span.iter().flatten().cloned().collect();
            let m = ExprMatrix::new(span.len(), bundle.fibre_dim, data);
            let (rref, pivots) = m.rref_on(&ctx)?;
            let trimmed =
                ExprMatrix::from_fn(pivots.len(), bundle.fibre_dim, |r, c| rref.get(r, c).clone());
            (trimmed, pivots)
        };
        match &reference {
            None => reference = Some(reduced),
            Some((ref_m, ref_p)) => {
                if *ref_p != reduced.1 || !ref_m.equals_on(&reduced.0, &SignContext::empty()) {
                    return Err(BundleError::NonUniformSubBundle(format!(
                        "reduced span differs on cell {cell}"
                    )));
                }
            }
        }
    }
    let (m, pivots) = reference.expect("at least one cell");
    let w_basis = (0..m.rows()).map(|r| m.row(r)).collect();
    Ok(UniformSubData { w_basis, pivots })
}

/// Sub-bundle: generators of the bundle whose image lies in `W`, expressed
/// in the reduced basis of `W`, plus the implicit standard plots of `W`.
/// This is an in-class under-approximation of the subset diffeology and the
/// result is flagged `subset_approximate`.
pub fn sub_bundle(bundle: &Bundle, w: &SubBundleSpec) -> Result<Bundle, BundleError> {
    let data = uniform_sub_data(bundle, w)?;
    let rank = data.w_basis.len();
    let ctx = SignContext::empty();
    let wt = if rank == 0 {
        ExprMatrix::zeros(bundle.fibre_dim, 0)
    } else {
        ExprMatrix::from_fn(bundle.fibre_dim, rank, |r, c| data.w_basis[c][r].clone())
    };
    let mut gens = Vec::new();
    for g in &bundle.gens {
        if rank == 0 {
            continue;
        }
        if let Ok(Some(coords)) = wt.solve_on(&g.components, &ctx) {
            let back = wt.mul_vec(&coords);
            if back
                .iter()
                .zip(&g.components)
                .all(|(a, b)| a.equals_on(b, &ctx))
            {
                gens.push(FibreGen::new(g.fibre_vars.clone(), coords));
            }
        }
    }
    let mut out = Bundle::new(
        bundle.chart.clone(),
        bundle.base_var.clone(),
        bundle.cells.clone(),
        rank,
        gens,
        format!("sub({})", bundle.label),
    )?;
    out.subset_approximate = true;
    Ok(out)
}

/// Quotient bundle: fibre generators are images of the bundle's generators
/// under the per-chart quotient map determined by the reduced basis of `W`.
pub fn quotient_bundle(bundle: &Bundle, w: &SubBundleSpec) -> Result<Bundle, BundleError> {
    let data = uniform_sub_data(bundle, w)?;
    let quotient_dim = bundle.fibre_dim - data.w_basis.len();
    let nonpivot: Vec<usize> = (0..bundle.fibre_dim)
        .filter(|i| !data.pivots.contains(i))
        .collect();
    let gens = bundle
        .gens
        .iter()
        .map(|g| {
            let comps = quotient_coords(&data.w_basis, &data.pivots, &nonpivot, &g.components);
            FibreGen::new(g.fibre_vars.clone(), comps)
        })
        .collect();
    Bundle::new(
        bundle.chart.clone(),
        bundle.base_var.clone(),
        bundle.cells.clone(),
        quotient_dim,
        gens,
        format!("{}/W", bundle.label),
    )
}

/// Fibre space of an arbitrary bundle piece over a point.
pub fn piece_fibre_space_at(
    base_var: &Var,
    x: &Rat,
    fibre_dim: usize,
    gens: &[FibreGen],
    label: &str,
) -> Result<GeneratedSpace, BundleError> {
    let ctx = SignContext::empty();
    let mut map = BTreeMap::new();
    map.insert(base_var.clone(), RatExpr::constant(x.clone()));
    let mut plots = Vec::new();
    for g in gens {
        let comps: Result<Vec<AbsPoly>, BundleError> = g
            .components
            .iter()
            .map(|c| {
                let s = c.substitute(&map, &ctx)?;
                // constant denominators fold away; fibre variables never
                // appear in denominators of split-form generators
                Ok(s.is_polynomial().cloned().unwrap_or_else(|| s.num().clone()))
            })
            .collect();
        plots.push(GeneratorPlot::new(g.fibre_vars.clone(), comps?));
    }
    Ok(GeneratedSpace::new(
        fibre_dim,
        plots,
        format!("{label}|{base_var}={}", rat_display(x)),
    ))
}

/// Parametric fibre space of a bundle piece on a cell, with the cell's sign
/// context.
pub fn piece_fibre_space_on(
    base_var: &Var,
    cell: &CellKind,
    fibre_dim: usize,
    gens: &[FibreGen],
    label: &str,
) -> Result<(GeneratedSpace, SignContext), BundleError> {
    match cell {
        CellKind::Point(q) => Ok((
            piece_fibre_space_at(base_var, q, fibre_dim, gens, label)?,
            SignContext::empty(),
        )),
        CellKind::Interval(_, _) => {
            let ctx = cell.sign_context(base_var);
            let plots = gens
                .iter()
                .map(|g| {
                    let (vars, comps) = g.cleared(&ctx);
                    GeneratorPlot::new(vars, comps)
                })
                .collect();
            Ok((
                GeneratedSpace::new(fibre_dim, plots, format!("{label}|{cell}")),
                ctx,
            ))
        }
    }
}

/// Quotient coordinates of a fibre vector: eliminate the pivot coordinates
/// using the reduced rows of `W`, keep the non-pivot ones.
pub fn quotient_coords(
    w_basis: &[Vec<RatExpr>],
    pivots: &[usize],
    nonpivot: &[usize],
    v: &[RatExpr],
) -> Vec<RatExpr> {
    let mut reduced: Vec<RatExpr> = v.to_vec();
    for (row, &p) in w_basis.iter().zip(pivots) {
        let factor = reduced[p].clone();
        for (j, entry) in row.iter().enumerate() {
            reduced[j] = reduced[j].sub(&factor.mul(entry));
        }
    }
    nonpivot.iter().map(|&j| reduced[j].clone()).collect()
}

/// Reduced basis and pivots of a uniform sub-bundle spec, for reuse by the
/// gluing layer.
pub fn sub_data_for(
    bundle: &Bundle,
    w: &SubBundleSpec,
) -> Result<(Vec<Vec<RatExpr>>, Vec<usize>), BundleError> {
    let d = uniform_sub_data(bundle, w)?;
    Ok((d.w_basis, d.pivots))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn twisted_line_bundle() -> Bundle {
        // base R with cells split at 0, fibre R, generator (u,v) -> (u, u*abs(v))
        let u = Var::new("u");
        let v = Var::new("v");
        let comp = AbsPoly::var(&u).mul(&AbsPoly::abs_var(&v));
        Bundle::new(
            ChartId::new("u"),
            u,
            vec![
                CellKind::Interval(Endpoint::NegInf, Endpoint::Finite(rat_int(0))),
                CellKind::Point(rat_int(0)),
                CellKind::Interval(Endpoint::Finite(rat_int(0)), Endpoint::PosInf),
            ],
            1,
            vec![FibreGen::from_polys(vec![v], vec![comp])],
            "uv-bundle",
        )
        .unwrap()
    }

    fn product_plane_bundle() -> Bundle {
        // base R, fibre R^2 in coordinates (y, z), generator (u,v) -> (u, 0, abs(v))
        let u = Var::new("u");
        let v = Var::new("v");
        Bundle::new(
            ChartId::new("u"),
            u,
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

    #[test]
    fn fibres_of_the_nonmetrizable_bundle() {
        let b = twisted_line_bundle();
        let f1 = b.fibre_space_at(&rat_int(1)).unwrap();
        assert_eq!(f1.dual_basis().len(), 0);
        let f0 = b.fibre_space_at(&rat_int(0)).unwrap();
        assert!(f0.is_standard());
        assert_eq!(f0.dual_basis().len(), 1);

        let std_b = Bundle::standard("x", "x", 1, "std");
        let fx = std_b.fibre_space_at(&rat(7, 2)).unwrap();
        assert!(fx.is_standard());
        assert_eq!(fx.dual_basis().len(), 1);
    }

    #[test]
    fn profiles() {
        let b = twisted_line_bundle();
        let dims: Vec<usize> = b
            .dual_dim_profile()
            .unwrap()
            .iter()
            .map(|(_, d)| *d)
            .collect();
        assert_eq!(dims, vec![0, 1, 0]);

        let std3 = Bundle::standard("x", "x", 2, "std3");
        let dims: Vec<usize> = std3
            .dual_dim_profile()
            .unwrap()
            .iter()
            .map(|(_, d)| *d)
            .collect();
        assert_eq!(dims, vec![2]);

        let b51 = product_plane_bundle();
        let dims: Vec<usize> = b51
            .dual_dim_profile()
            .unwrap()
            .iter()
            .map(|(_, d)| *d)
            .collect();
        assert_eq!(dims, vec![1]);
    }

    #[test]
    fn sums_and_tensors_of_bundles() {
        let b = twisted_line_bundle();
        let std_line = Bundle::new(
            ChartId::new("u"),
            Var::new("u"),
            b.cells.clone(),
            1,
            Vec::new(),
            "stdline",
        )
        .unwrap();
        let sum = b.direct_sum(&std_line).unwrap();
        let dims: Vec<usize> = sum
            .dual_dim_profile()
            .unwrap()
            .iter()
            .map(|(_, d)| *d)
            .collect();
        assert_eq!(dims, vec![1, 2, 1]);

        let sq = b.tensor(&b).unwrap();
        let dims: Vec<usize> = sq
            .dual_dim_profile()
            .unwrap()
            .iter()
            .map(|(_, d)| *d)
            .collect();
        assert_eq!(dims, vec![0, 1, 0]);

        let s2 = Bundle::standard("x", "x", 2, "a");
        let s3 = Bundle::standard("x", "x", 3, "b");
        let t = s2.tensor(&s3).unwrap();
        let dims: Vec<usize> = t
            .dual_dim_profile()
            .unwrap()
            .iter()
            .map(|(_, d)| *d)
            .collect();
        assert_eq!(dims, vec![6]);
    }

    #[test]
    fn mismatched_bases_are_rejected() {
        let b = twisted_line_bundle();
        let other = Bundle::standard("x", "x", 1, "std");
        assert!(matches!(
            b.direct_sum(&other),
            Err(BundleError::BaseMismatch(_))
        ));
    }

    #[test]
    fn dual_view_dims() {
        let b = twisted_line_bundle();
        let view = b.dual_view().unwrap();
        let dims: Vec<usize> = view.fibre_dims().iter().map(|(_, d)| *d).collect();
        assert_eq!(dims, vec![0, 1, 0]);
        assert!(view.as_standard_bundle().is_none());

        let std2 = Bundle::standard("x", "x", 2, "std2");
        let view = std2.dual_view().unwrap();
        let dims: Vec<usize> = view.fibre_dims().iter().map(|(_, d)| *d).collect();
        assert_eq!(dims, vec![2]);
        let again = view.as_standard_bundle().unwrap().dual_view().unwrap();
        assert_eq!(again.fibre_dims().first().unwrap().1, 2);
    }

    #[test]
    fn sub_and_quotient_identities() {
        let b = product_plane_bundle();
        let full = SubBundleSpec::full(&b.cells, b.fibre_dim);
        let sub = sub_bundle(&b, &full).unwrap();
        assert_eq!(sub.fibre_dim, b.fibre_dim);
        assert_eq!(sub.gens.len(), b.gens.len());
        assert!(sub.subset_approximate);
        let q = quotient_bundle(&b, &full).unwrap();
        assert_eq!(q.fibre_dim, 0);

        let zero = SubBundleSpec::zero(&b.cells);
        let q = quotient_bundle(&b, &zero).unwrap();
        assert_eq!(q.fibre_dim, b.fibre_dim);
        assert_eq!(q.gens, b.gens);
    }

    #[test]
    fn quotient_of_product_bundle_by_first_axis() {
        // W = span(e_y) per fibre; quotient fibre is generated by abs(v)
        let b = product_plane_bundle();
        let w = SubBundleSpec::uniform(&b.cells, vec![vec![RatExpr::one(), RatExpr::zero()]]);
        let q = quotient_bundle(&b, &w).unwrap();
        assert_eq!(q.fibre_dim, 1);
        let dims: Vec<usize> = q
            .dual_dim_profile()
            .unwrap()
            .iter()
            .map(|(_, d)| *d)
            .collect();
        assert_eq!(dims, vec![0]);
    }

    #[test]
    fn interior_points_of_a_cell_agree() {
        let b = twisted_line_bundle();
        for (a, c) in [(rat_int(1), rat(7, 3)), (rat_int(-5), rat(-1, 9))] {
            let da = b.fibre_space_at(&a).unwrap().dual_basis().len();
            let dc = b.fibre_space_at(&c).unwrap().dual_basis().len();
            assert_eq!(da, dc);
        }
    }

    #[test]
    fn dual_view_pairs_sections_against_generators() {
        let b = twisted_line_bundle();
        let view = b.dual_view().unwrap();
        // the only nontrivial dual fibre sits over the origin
        let coords = vec![RatExpr::one()];
        let evaluation = view.pair_with_generator(1, &coords, &b.gens[0]);
        let expected = RatExpr::from_poly(
            AbsPoly::var(&b.base_var).mul(&AbsPoly::abs_var(&Var::new("v"))),
        );
        assert!(evaluation.equals_on(&expected, &SignContext::empty()));
    }

    #[test]
    fn bad_cell_decompositions_are_rejected() {
        let u = Var::new("u");
        let cells = vec![
            CellKind::Interval(Endpoint::NegInf, Endpoint::Finite(rat_int(0))),
            CellKind::Interval(Endpoint::Finite(rat_int(1)), Endpoint::PosInf),
        ];
        assert!(Bundle::new(ChartId::new("u"), u, cells, 1, vec![], "bad").is_err());
    }

    #[test]
    fn point_outside_restricted_complex() {
        let b = twisted_line_bundle();
        assert!(b.locate(&rat_int(0)).is_ok());
        let partial = Bundle {
            cells: vec![CellKind::Point(rat_int(0))],
            ..b
        };
        assert!(matches!(
            partial.fibre_space_at(&rat_int(3)),
            Err(BundleError::PointOutsideBase(_))
        ));
    }
}
