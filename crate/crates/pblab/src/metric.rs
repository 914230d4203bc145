//! Pseudo-metrics on pseudo-bundles: verification, compatibility with a
//! gluing, the induced metrics on glued bundles (direct and dual-route
//! constructions) and their coincidence, nonexistence certificates, the
//! pairing map, and the induced metric on the dual bundle.
//!
//! Smoothness of a candidate metric is certified on a probe set: the total
//! generators of the bundle together with the constant-fibre probes
//! `u -> (u, c)` for canonical basis vectors `c` (constants are plots of
//! the pseudo-bundle diffeology; without them the classical nonexistence
//! argument over a non-locally-trivial bundle is not reproducible). The
//! probe set under-approximates the full diffeology, so a passing verdict
//! is `certified on probes`. Pieces over different cells must merge into a
//! single in-class smooth expression: distinct polynomial or rational
//! pieces that agree to all orders at a shared boundary are identical, so
//! the merge test is exact expression equality plus point-cell consistency.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bundle::{
    piece_fibre_space_on, Bundle, BundleError, CellKind, DualBundleView, FibreGen,
};
use crate::expr::{ExprError, RatExpr, SignContext, Var};
use crate::glue::{GlueError, GluedBundle, RegionTag};
use crate::linalg::{psd_constant, ExprMatrix};
use crate::rat::{rat_display, Rat};
use crate::space::{PsdStatus, SosCertificate};
use num_traits::Signed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric shape does not match the bundle: {0}")]
    ShapeMismatch(String),
    #[error("metrics are not compatible with the gluing: {0}")]
    IncompatibleMetrics(String),
    #[error("the necessary condition for the dual-route construction fails: {0}")]
    NecessaryConditionFails(String),
    #[error("dual dimension is not locally constant: {0}")]
    NotLocallyTrivial(String),
    #[error("a passing pseudo-metric is required: {0}")]
    MetricRequired(String),
    #[error(transparent)]
    Glue(#[from] GlueError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// A metric on a one-chart bundle: per cell, a symmetric matrix of
/// base-dependent coefficients, with an optional per-cell sum-of-squares
/// certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartMetric {
    pub var: Var,
    pub pieces: Vec<(CellKind, ExprMatrix)>,
    pub sos: Option<Vec<(CellKind, SosCertificate)>>,
}

impl ChartMetric {
    pub fn uniform(var: &Var, cells: &[CellKind], matrix: ExprMatrix) -> Self {
        ChartMetric {
            var: var.clone(),
            pieces: cells.iter().map(|c| (c.clone(), matrix.clone())).collect(),
            sos: None,
        }
    }

    pub fn piece_for(&self, cell: &CellKind) -> Option<&ExprMatrix> {
        self.pieces
            .iter()
            .find(|(c, _)| c == cell)
            .map(|(_, m)| m)
            .or_else(|
            | {
                self.pieces
                    .iter()
                    .find(|(c, _)| cell_within(cell, c))
                    .map(|(_, m)| m)
            })
    }

    pub fn sos_for(&self, cell: &CellKind) -> Option<&SosCertificate> {
        self.sos.as_ref().and_then(|s| {
            s.iter()
                .find(|(c, _)| c == cell || cell_within(cell, c))
                .map(|(_, cert)| cert)
        })
    }
}

fn cell_within(inner: &CellKind, outer: &CellKind) -> bool {
    match (inner, outer) {
        (CellKind::Point(q), o) => o.contains(q),
        (CellKind::Interval(a, b), CellKind::Interval(c, d)) => c <= a && b <= d,
        _ => false,
    }
}

/// A metric ona glued bundle: region-tagged per-cell matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GluedMetric {
    pub pieces: Vec<(RegionTag, CellKind, ExprMatrix)>,
}

impl GluedMetric {
    pub fn piece_for(&self, region: RegionTag, cell: &CellKind) -> Option<&ExprMatrix> {
        self.pieces
            .iter()
            .find(|(r, c, _)| *r == region && c == cell)
            .map(|(_, _, m)| m)
    }
}

/// Verdict of a bundle pseudo-metric check.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricVerdict {
    pub symmetric: bool,
    pub smooth: bool,
    /// A failing probe evaluation, when smoothness fails.
    pub smooth_witness: Option<String>,
    pub psd: PsdStatus,
    /// Per cell: expected rank (the dual dimension) vs achieved rank.
    pub ranks: Vec<(String, usize, usize)>,
}

impl MetricVerdict {
    pub fn rank_ok(&self) -> bool {
        self.ranks.iter().all(|(_, want, got)| want == got)
    }

    pub fn pass(&self) -> bool {
        self.symmetric && self.smooth && self.psd.accepted() && self.rank_ok()
    }
}

impl fmt::Display for MetricVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "symmetric={} smooth={} psd={:?} rank_ok={}",
            self.symmetric,
            self.smooth,
            self.psd,
            self.rank_ok()
        )
    }
}

/// Deterministic rational samples inside a cell, driven by a seeded
/// generator so reports are reproducible.
pub fn rational_samples_in_cell(cell: &CellKind, n: usize, seed: u64) -> Vec<Rat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match cell {
        CellKind::Point(q) => vec![q.clone()],
        CellKind::Interval(lo, hi) => {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let num = rng.gen_range(1..=64i64);
                let den = rng.gen_range(1..=16i64);
                let t = crate::rat::rat(num, den + num); // in (0, 1)
                use crate::bundle::Endpoint;
                let x = match (lo, hi) {
                    (Endpoint::Finite(a), Endpoint::Finite(b)) => a + (b - a) * t,
                    (Endpoint::Finite(a), _) => a + crate::rat::rat(num, den),
                    (_, Endpoint::Finite(b)) => b - crate::rat::rat(num, den),
                    _ => {
                        let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
                        crate::rat::rat(sign * num, den)
                    }
                };
                out.push(x);
            }
            out
        }
    }
}

/// One cell of a chart-level metric check.
struct ChartCell {
    cell: CellKind,
    matrix: ExprMatrix,
    /// Probes valid on this cell only (lifted seam generators).
    extra_gens: Vec<FibreGen>,
    /// Expected exact rank; `None` skips the comparison (pulled-back seam
    /// views, whose rank condition is checked on the target chart).
    expected_rank: Option<usize>,
    sos: Option<SosCertificate>,
}

/// Chart-level verification: per-cell symmetry, probe smoothness, rank and
/// positive semi-definiteness, plus the cross-cell merge of probe
/// evaluations into a single smooth expression.
fn verify_chart(
    var: &Var,
    fibre_dim: usize,
    chart_gens: &[FibreGen],
    cells: &[ChartCell],
    seed: u64,
    psd_samples: usize,
) -> Result<MetricVerdict, MetricError> {
    let mut symmetric = true;
    let mut smooth = true;
    let mut smooth_witness = None;
    let mut ranks = Vec::new();
    let mut psd: PsdStatus = PsdStatus::Exact;
    let mut sampled = 0u32;

    // probes shared by every cell of the chart
    let mut probes: Vec<FibreGen> = Vec::new();
    for g in chart_gens {
        probes.push(g.clone());
    }
    for j in 0..fibre_dim {
        let mut comps = vec![RatExpr::zero(); fibre_dim];
        comps[j] = RatExpr::one();
        probes.push(FibreGen::new(Vec::new(), comps));
    }

    for cc in cells {
        let ctx = cc.cell.sign_context(var);
        if cc.matrix.rows() != fibre_dim || cc.matrix.cols() != fibre_dim {
            return Err(MetricError::ShapeMismatch(format!(
                "piece on {} is {}x{}, fibre dimension is {fibre_dim}",
                cc.cell,
                cc.matrix.rows(),
                cc.matrix.cols()
            )));
        }
        symmetric &= cc.matrix.is_symmetric_on(&ctx);

        // per-cell probe smoothness, including cell-local probes
        let mut local = probes.clone();
        local.extend(cc.extra_gens.iter().cloned());
        'pairs: for p in &local {
            for q in &local {
                let e = pair_evaluation(var, &cc.matrix, p, q);
                let e = at_cell(&e, var, &cc.cell)?;
                let mut vars = p
                    .renamed_fibre_vars(|i| Var::new(format!("$p{i}")))
                    .fibre_var_set();
                vars.extend(
                    q.renamed_fibre_vars(|i| Var::new(format!("$q{i}")))
                        .fibre_var_set(),
                );
                vars.insert(var.clone());
                if !e.is_smooth_in(&vars, &ctx) {
                    smooth = false;
                    smooth_witness.get_or_insert_with(|| {
                        format!("probe evaluation {e} is not smooth on cell {}", cc.cell)
                    });
                    break 'pairs;
                }
            }
        }

        // exact rank vs expected
        let m = matrix_at_cell(&cc.matrix, var, &cc.cell)?;
        let rank = m.rank_on(&ctx)?;
        if let Some(expected) = cc.expected_rank {
            ranks.push((format!("{}", cc.cell), expected, rank));
        }

        // positive semi-definiteness
        let cell_psd = cell_psd_status(var, &cc.cell, &m, cc.sos.as_ref(), &ctx, seed, psd_samples)?;
        match cell_psd {
            PsdStatus::Exact => {}
            PsdStatus::Probabilistic(n) => {
                sampled += n;
                if psd == PsdStatus::Exact {
                    psd = PsdStatus::Probabilistic(0);
                }
            }
            PsdStatus::Fails(w) => {
                psd = PsdStatus::Fails(w);
            }
        }
    }
    if let PsdStatus::Probabilistic(_) = psd {
        psd = PsdStatus::Probabilistic(sampled);
    }

    // cross-cell merge of probe evaluations: interval pieces must coincide
    // as expressions and point pieces must take the merged value
    if smooth {
        'merge: for p in &probes {
            for q in &probes {
                let mut interval_exprs: Vec<(CellKind, RatExpr)> = Vec::new();
                let mut point_exprs: Vec<(Rat, RatExpr)> = Vec::new();
                for cc in cells {
                    let e = pair_evaluation(var, &cc.matrix, p, q);
                    match &cc.cell {
                        CellKind::Point(at) => {
                            point_exprs.push((at.clone(), at_point(&e, var, at)?))
                        }
                        CellKind::Interval(_, _) => {
                            let ctx = cc.cell.sign_context(var);
                            interval_exprs.push((cc.cell.clone(), e.normalized(&ctx)));
                        }
                    }
                }
                let free = SignContext::empty();
                for w in interval_exprs.windows(2) {
                    if !w[0].1.equals_on(&w[1].1, &free) {
                        smooth = false;
                        smooth_witness.get_or_insert_with(|| {
                            format!(
                                "probe evaluation does not merge across {} and {}: {} vs {}",
                                w[0].0, w[1].0, w[0].1, w[1].1
                            )
                        });
                        break 'merge;
                    }
                }
                if let Some((_, global)) = interval_exprs.first() {
                    for (at, piece) in &point_exprs {
                        let merged = at_point(global, var, at)?;
                        if !merged.equals_on(piece, &free) {
                            smooth = false;
                            smooth_witness.get_or_insert_with(|| {
                                format!(
                                    "probe evaluation jumps at {}: limit {merged}, value {piece}",
                                    rat_display(at)
                                )
                            });
                            break 'merge;
                        }
                    }
                }
            }
        }
    }

    Ok(MetricVerdict {
        symmetric,
        smooth,
        smooth_witness,
        psd,
        ranks,
    })
}

/// The evaluation of a metric piece against an ordered probe pair, with the
/// probes' fibre variables renamed apart.
fn pair_evaluation(var: &Var, matrix: &ExprMatrix, p: &FibreGen, q: &FibreGen) -> RatExpr {
    let _ = var;
    let p = p.renamed_fibre_vars(|i| Var::new(format!("$p{i}")));
    let q = q.renamed_fibre_vars(|i| Var::new(format!("$q{i}")));
    let d = matrix.rows();
    let mut acc = RatExpr::zero();
    for i in 0..d {
        for j in 0..d {
            acc = acc.add(&matrix.get(i, j).mul(&p.components[i]).mul(&q.components[j]));
        }
    }
    acc
}

fn at_cell(e: &RatExpr, var: &Var, cell: &CellKind) -> Result<RatExpr, MetricError> {
    match cell {
        CellKind::Point(q) => at_point(e, var, q),
        CellKind::Interval(_, _) => Ok(e.clone()),
    }
}

fn at_point(e: &RatExpr, var: &Var, q: &Rat) -> Result<RatExpr, MetricError> {
    let mut map = BTreeMap::new();
    map.insert(var.clone(), RatExpr::constant(q.clone()));
    Ok(e.substitute(&map, &SignContext::empty())?)
}

fn matrix_at_cell(m: &ExprMatrix, var: &Var, cell: &CellKind) -> Result<ExprMatrix, MetricError> {
    match cell {
        CellKind::Point(q) => {
            let mut out = ExprMatrix::zeros(m.rows(), m.cols());
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    out.set(i, j, at_point(m.get(i, j), var, q)?);
                }
            }
            Ok(out)
        }
        CellKind::Interval(_, _) => Ok(m.clone()),
    }
}

fn cell_psd_status(
    var: &Var,
    cell: &CellKind,
    matrix: &ExprMatrix,
    sos: Option<&SosCertificate>,
    ctx: &SignContext,
    seed: u64,
    samples: usize,
) -> Result<PsdStatus, MetricError> {
    if let Some(cert) = sos {
        if verify_sos_matrix(matrix, cert, ctx) {
            return Ok(PsdStatus::Exact);
        }
    }
    if let Some(rows) = matrix.to_constant() {
        return Ok(if psd_constant(&rows) {
            PsdStatus::Exact
        } else {
            PsdStatus::Fails(format!("constant piece on {cell} is not psd"))
        });
    }
    let mut checked = 0u32;
    for x in rational_samples_in_cell(cell, samples, seed) {
        let at = matrix_at_cell(matrix, var, &CellKind::Point(x.clone()))?;
        let Some(rows) = at.to_constant() else {
            continue;
        };
        if !psd_constant(&rows) {
            return Ok(PsdStatus::Fails(format!(
                "not psd at {var} = {}",
                rat_display(&x)
            )));
        }
        checked += 1;
    }
    Ok(PsdStatus::Probabilistic(checked))
}

fn verify_sos_matrix(matrix: &ExprMatrix, cert: &SosCertificate, ctx: &SignContext) -> bool {
    let d = matrix.rows();
    let mut acc = ExprMatrix::zeros(d, d);
    for (c, phi) in cert {
        if phi.dim() != d {
            return false;
        }
        let positive = c
            .is_constant()
            .map(|v| v.is_positive())
            .unwrap_or_else(|| c.num().definitely_positive(ctx) && c.den_nonvanishing_on(ctx));
        if !positive {
            return false;
        }
        for i in 0..d {
            for j in 0..d {
                let add = c.mul(&phi.coeffs[i]).mul(&phi.coeffs[j]);
                acc.set(i, j, acc.get(i, j).add(&add));
            }
        }
    }
    acc.equals_on(matrix, ctx)
}

/// Full pseudo-metric verdict for a metric on a one-chart bundle.
pub fn is_pseudometric(
    bundle: &Bundle,
    metric: &ChartMetric,
    seed: u64,
    psd_samples: usize,
) -> Result<MetricVerdict, MetricError> {
    if metric.var != bundle.base_var {
        return Err(MetricError::ShapeMismatch(format!(
            "metric variable {} vs bundle variable {}",
            metric.var, bundle.base_var
        )));
    }
    let profile = bundle.dual_dim_profile()?;
    let mut cells = Vec::new();
    for (cell, expected_rank) in profile {
        let matrix = metric
            .piece_for(&cell)
            .ok_or_else(|| MetricError::ShapeMismatch(format!("no metric piece on {cell}")))?
            .clone();
        cells.push(ChartCell {
            sos: metric.sos_for(&cell).cloned(),
            cell,
            matrix,
            extra_gens: Vec::new(),
            expected_rank: Some(expected_rank),
        });
    }
    verify_chart(
        &bundle.base_var,
        bundle.fibre_dim,
        &bundle.gens,
        &cells,
        seed,
        psd_samples,
    )
}

/// Compatibility of two factor metrics with a gluing:
/// `g1(y) = lift(y)^T g2(f(y)) lift(y)` exactly on every domain cell.
pub fn compat_check(
    g1: &ChartMetric,
    g2: &ChartMetric,
    glued: &GluedBundle,
) -> Result<bool, MetricError> {
    for (cell, image) in &glued.space.images {
        let ctx = cell.sign_context(&glued.gluing.base.source_var);
        let Some(m1) = g1.piece_for(cell) else {
            return Ok(false);
        };
        let Some(m2) = g2.piece_for(image) else {
            return Ok(false);
        };
        let lift = glued
            .gluing
            .lift_on(cell)
            .ok_or_else(|| MetricError::ShapeMismatch(format!("no lift on {cell}")))?;
        // pull the target piece back to the source variable
        let mut fmap = BTreeMap::new();
        fmap.insert(
            glued.gluing.base.target_var.clone(),
            glued.gluing.base.map_on(cell),
        );
        let mut pulled = ExprMatrix::zeros(m2.rows(), m2.cols());
        for i in 0..m2.rows() {
            for j in 0..m2.cols() {
                pulled.set(i, j, m2.get(i, j).substitute(&fmap, &ctx)?);
            }
        }
        let rhs = lift.transpose().mul(&pulled).mul(lift);
        if !m1.equals_on(&rhs, &ctx) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The direct induced metric on a glued bundle: the first factor's matrix
/// on first-region cells, the second factor's on second-region cells.
pub fn glue_metrics(
    g1: &ChartMetric,
    g2: &ChartMetric,
    glued: &GluedBundle,
    seed: u64,
    psd_samples: usize,
) -> Result<GluedMetric, MetricError> {
    if !compat_check(g1, g2, glued)? {
        return Err(MetricError::IncompatibleMetrics(
            "factor metrics disagree over the gluing domain".into(),
        ));
    }
    for (bundle, metric, name) in [
        (&glued.first, g1, "first"),
        (&glued.second, g2, "second"),
    ] {
        let verdict = is_pseudometric(bundle, metric, seed, psd_samples)?;
        if !verdict.pass() {
            return Err(MetricError::IncompatibleMetrics(format!(
                "the {name} factor metric is not a pseudo-metric: {verdict}"
            )));
        }
    }
    let mut pieces = Vec::new();
    for cell in &glued.cells {
        let m = match cell.region {
            RegionTag::First => g1.piece_for(&cell.cell),
            RegionTag::Second => g2.piece_for(&cell.cell),
        }
        .ok_or_else(|| MetricError::ShapeMismatch(format!("no metric piece on {}", cell.cell)))?;
        pieces.push((cell.region, cell.cell.clone(), m.clone()));
    }
    Ok(GluedMetric { pieces })
}

/// The dual-route induced metric: the first factor's metric is carried to
/// the seam through the inverse of the dual lift on dual bases, the switch
/// map and the tensor identification. Requires the gluing-dual necessary
/// condition. When both routes are defined they produce the same metric;
/// the coincidence is checked by [`metrics_coincide`], not assumed.
pub fn glue_metrics_commutative(
    g1: &ChartMetric,
    g2: &ChartMetric,
    glued: &GluedBundle,
    seed: u64,
    psd_samples: usize,
) -> Result<GluedMetric, MetricError> {
    if !crate::glue::check_dual_necessary(glued)? {
        return Err(MetricError::NecessaryConditionFails(
            "dual dimensions or the dual lift fail over the gluing domain".into(),
        ));
    }
    if !compat_check(g1, g2, glued)? {
        return Err(MetricError::IncompatibleMetrics(
            "factor metrics disagree over the gluing domain".into(),
        ));
    }
    let _ = (seed, psd_samples);
    let mut pieces = Vec::new();
    for cell in &glued.cells {
        match (&cell.region, &cell.seam) {
            (RegionTag::First, _) => {
                let m = g1.piece_for(&cell.cell).ok_or_else(|| {
                    MetricError::ShapeMismatch(format!("no metric piece on {}", cell.cell))
                })?;
                pieces.push((cell.region, cell.cell.clone(), m.clone()));
            }
            (RegionTag::Second, None) => {
                let m = g2.piece_for(&cell.cell).ok_or_else(|| {
                    MetricError::ShapeMismatch(format!("no metric piece on {}", cell.cell))
                })?;
                pieces.push((cell.region, cell.cell.clone(), m.clone()));
            }
            (RegionTag::Second, Some(seam)) => {
                let m = seam_transport(g1, glued, &cell.cell, &seam.source_cell, &seam.lift)?;
                pieces.push((cell.region, cell.cell.clone(), m));
            }
        }
    }
    Ok(GluedMetric { pieces })
}

/// Transports the first factor's metric over a seam cell through the dual
/// machinery: write `g1` in the dual basis, move the dual basis through
/// the inverse of the dual lift, and read the result in the target fibre
/// coordinates of the image cell.
fn seam_transport(
    g1: &ChartMetric,
    glued: &GluedBundle,
    image_cell: &CellKind,
    source_cell: &CellKind,
    lift: &ExprMatrix,
) -> Result<ExprMatrix, MetricError> {
    let base = &glued.gluing.base;
    let ctx = source_cell.sign_context(&base.source_var);
    let d1 = glued.first.fibre_dim;
    let d2 = glued.second.fibre_dim;

    let (space1, _) = piece_fibre_space_on(
        &glued.first.base_var,
        source_cell,
        d1,
        &glued.first.gens,
        &glued.first.label,
    )?;
    let basis1 = space1.dual_basis_on(&ctx)?;
    let big_d = basis1.len();
    if big_d == 0 {
        // rank-0 both sides: the transported value is the zero form
        return Ok(ExprMatrix::zeros(d2, d2));
    }
    let (space2, _) = piece_fibre_space_on(
        &glued.second.base_var,
        image_cell,
        d2,
        &glued.second.gens,
        &glued.second.label,
    )?;
    let basis2 = space2.dual_basis_on(&image_cell.sign_context(&base.target_var))?;
    if basis2.len() != big_d {
        return Err(MetricError::NecessaryConditionFails(format!(
            "dual dimensions differ over {source_cell}"
        )));
    }

    // dual lift on dual bases: lift^T (phi2_k o f) = sum_i C[k][i] phi1_i
    let mut fmap = BTreeMap::new();
    fmap.insert(base.target_var.clone(), base.map_on(source_cell));
    let b1 = ExprMatrix::from_fn(d1, big_d, |r, c| basis1[c].coeffs[r].clone());
    let mut c_matrix = ExprMatrix::zeros(big_d, big_d);
    for (k, phi2) in basis2.iter().enumerate() {
        let pulled: Result<Vec<RatExpr>, ExprError> = phi2
            .coeffs
            .iter()
            .map(|c| c.substitute(&fmap, &ctx))
            .collect();
        let pulled = pulled?;
        let psi: Vec<RatExpr> = (0..d1)
            .map(|i| {
                let mut acc = RatExpr::zero();
                for j in 0..d2 {
                    acc = acc.add(&lift.get(j, i).mul(&pulled[j]));
                }
                acc
            })
            .collect();
        let sol = b1.solve_on(&psi, &ctx)?.ok_or_else(|| {
            MetricError::NecessaryConditionFails(format!(
                "the dual lift does not carry the dual basis over {source_cell}"
            ))
        })?;
        for (i, s) in sol.iter().enumerate() {
            c_matrix.set(k, i, s.clone());
        }
    }
    let c_inv = c_matrix.inverse_on(&ctx)?.ok_or_else(|| {
        MetricError::NecessaryConditionFails(format!(
            "the dual lift is singular on the dual bases over {source_cell}"
        ))
    })?;

    // write g1 in dual-basis coordinates: G1 = B1 S B1^T with S symmetric
    let m1 = g1
        .piece_for(source_cell)
        .ok_or_else(|| MetricError::ShapeMismatch(format!("no metric piece on {source_cell}")))?;
    let s = solve_in_dual_coordinates(m1, &b1, &ctx)?;

    // transported dual basis rows: psi = C^-1 (phi2 pulled back is not
    // needed; we express the value directly in phi2 coordinates)
    // value in phi2 coordinates: S2 = C^-T S C^-1, then in ambient target
    // coordinates: G = B2 S2 B2^T
    let s2 = c_inv.transpose().mul(&s).mul(&c_inv);
    let b2 = ExprMatrix::from_fn(d2, big_d, |r, c| basis2[c].coeffs[r].clone());
    let g_in_x = b2.mul(&s2_pull(&s2, &fmap, &ctx)?).mul(&b2.transpose());

    // the matrix above mixes target-variable dual vectors (b2) with
    // source-variable coefficients (s2); push the source parts forward
    let tctx = image_cell.sign_context(&base.target_var);
    let back = base.inverse_on(image_cell)?;
    let mut bmap = BTreeMap::new();
    bmap.insert(base.source_var.clone(), back);
    let mut out = ExprMatrix::zeros(d2, d2);
    for i in 0..d2 {
        for j in 0..d2 {
            out.set(i, j, g_in_x.get(i, j).substitute(&bmap, &tctx)?);
        }
    }
    Ok(out)
}

// s2 entries are already in the source variable; identity hook kept for
// clarity of the transport pipeline
fn s2_pull(
    s2: &ExprMatrix,
    _fmap: &BTreeMap<Var, RatExpr>,
    _ctx: &SignContext,
) -> Result<ExprMatrix, MetricError> {
    Ok(s2.clone())
}

/// Solves `G = B S B^T` for the symmetric matrix `S` in dual-basis
/// coordinates.
fn solve_in_dual_coordinates(
    g: &ExprMatrix,
    b: &ExprMatrix,
    ctx: &SignContext,
) -> Result<ExprMatrix, MetricError> {
    let d = b.rows();
    let big_d = b.cols();
    // unknowns: S as a full big_d x big_d matrix (symmetry comes out of the
    // solution when G is symmetric and B has full column rank)
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..d {
        for j in 0..d {
            let mut row = Vec::with_capacity(big_d * big_d);
            for k in 0..big_d {
                for l in 0..big_d {
                    row.push(b.get(i, k).mul(b.get(j, l)));
                }
            }
            rows.push(row);
            rhs.push(g.get(i, j).clone());
        }
    }
    let m = ExprMatrix::from_fn(rows.len(), big_d * big_d, |r, c| rows[r][c].clone());
    let sol = m.solve_on(&rhs, ctx)?.ok_or_else(|| {
        MetricError::MetricRequired(
            "the metric does not lie in the span of the dual basis".into(),
        )
    })?;
    Ok(ExprMatrix::from_fn(big_d, big_d, |r, c| {
        sol[r * big_d + c].clone()
    }))
}

/// Exact coincidence of two metrics on the same glued bundle.
pub fn metrics_coincide(
    a: &GluedMetric,
    b: &GluedMetric,
    glued: &GluedBundle,
) -> Result<bool, MetricError> {
    for cell in &glued.cells {
        let ctx = cell.cell.sign_context(&cell.var);
        let (Some(ma), Some(mb)) = (
            a.piece_for(cell.region, &cell.cell),
            b.piece_for(cell.region, &cell.cell),
        ) else {
            return Ok(false);
        };
        if !ma.equals_on(mb, &ctx) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Pseudo-metric verdict for a region-tagged metric on a glued bundle.
///
/// The second-region chart is checked with the second factor's generators
/// as chart-wide probes (their images are plots of the result) plus the
/// per-seam-cell lifted generators; the first-region chart is checked on
/// the source chart with the seam pieces pulled back through the lift, so
/// smoothness across the seam is exactly the smoothness of the pulled-back
/// family on the source chart.
pub fn is_pseudometric_glued(
    glued: &GluedBundle,
    metric: &GluedMetric,
    seed: u64,
    psd_samples: usize,
) -> Result<MetricVerdict, MetricError> {
    let profile = glued.dual_dim_profile()?;
    let expected: BTreeMap<(RegionTag, CellKind), usize> = profile
        .into_iter()
        .map(|(r, c, d)| ((r, c), d))
        .collect();

    // second chart: all second-region cells
    let mut second_cells = Vec::new();
    for cell in glued.cells.iter().filter(|c| c.region == RegionTag::Second) {
        let matrix = metric
            .piece_for(RegionTag::Second, &cell.cell)
            .ok_or_else(|| MetricError::ShapeMismatch(format!("no piece on {}", cell.cell)))?
            .clone();
        let extra: Vec<FibreGen> = if cell.seam.is_some() {
            cell.gens
                .iter()
                .skip(glued.second.gens.len())
                .cloned()
                .collect()
        } else {
            Vec::new()
        };
        second_cells.push(ChartCell {
            cell: cell.cell.clone(),
            matrix,
            extra_gens: extra,
            expected_rank: Some(expected[&(RegionTag::Second, cell.cell.clone())]),
            sos: None,
        });
    }
    let second_verdict = verify_chart(
        &glued.second.base_var,
        glued.second.fibre_dim,
        &glued.second.gens,
        &second_cells,
        seed,
        psd_samples,
    )?;

    // first chart: first-region pieces plus seam pieces pulled back
    let mut first_cells = Vec::new();
    for cell in &glued.first.cells {
        if let Some(m) =
            metric.piece_for(RegionTag::First, cell)
        {
            first_cells.push(ChartCell {
                cell: cell.clone(),
                matrix: m.clone(),
                extra_gens: Vec::new(),
                expected_rank: Some(expected[&(RegionTag::First, cell.clone())]),
                sos: None,
            });
            continue;
        }
        // a domain cell: pull the seam piece back through the lift
        let (image_cell, lift) = glued
            .space
            .images
            .iter()
            .find(|(c, _)| c == cell)
            .map(|(c, img)| (img.clone(), glued.gluing.lift_on(c).unwrap().clone()))
            .ok_or_else(|| MetricError::ShapeMismatch(format!("no piece covering {cell}")))?;
        let seam_cell = glued
            .cells
            .iter()
            .find(|c| {
                c.region == RegionTag::Second && c.seam.as_ref().map(|s| &s.source_cell) == Some(cell)
            })
            .ok_or_else(|| MetricError::ShapeMismatch(format!("no seam cell for {cell}")))?;
        let m2 = metric
            .piece_for(RegionTag::Second, &seam_cell.cell)
            .ok_or_else(|| MetricError::ShapeMismatch(format!("no piece on {}", seam_cell.cell)))?;
        let ctx = cell.sign_context(&glued.gluing.base.source_var);
        let mut fmap = BTreeMap::new();
        fmap.insert(
            glued.gluing.base.target_var.clone(),
            glued.gluing.base.map_on(cell),
        );
        let mut pulled = ExprMatrix::zeros(m2.rows(), m2.cols());
        for i in 0..m2.rows() {
            for j in 0..m2.cols() {
                pulled.set(i, j, m2.get(i, j).substitute(&fmap, &ctx)?);
            }
        }
        let back = lift.transpose().mul(&pulled).mul(&lift);
        // rank over a seam fibre is checked on the target chart; the
        // pulled-back view only enters the smoothness merge
        first_cells.push(ChartCell {
            cell: cell.clone(),
            matrix: back,
            extra_gens: Vec::new(),
            expected_rank: None,
            sos: None,
        });
        let _ = image_cell;
    }
    let first_verdict = verify_chart(
        &glued.first.base_var,
        glued.first.fibre_dim,
        &glued.first.gens,
        &first_cells,
        seed,
        psd_samples,
    )?;

    // combine: both charts must pass; ranks reported with region labels
    let mut ranks = Vec::new();
    for (label, want, got) in &first_verdict.ranks {
        ranks.push((format!("i1 {label}"), *want, *got));
    }
    for (label, want, got) in &second_verdict.ranks {
        ranks.push((format!("i2 {label}"), *want, *got));
    }
    let psd = match (&first_verdict.psd, &second_verdict.psd) {
        (PsdStatus::Fails(w), _) | (_, PsdStatus::Fails(w)) => PsdStatus::Fails(w.clone()),
        (PsdStatus::Exact, PsdStatus::Exact) => PsdStatus::Exact,
        (a, b) => {
            let n = |s: &PsdStatus| match s {
                PsdStatus::Probabilistic(n) => *n,
                _ => 0,
            };
            PsdStatus::Probabilistic(n(a) + n(b))
        }
    };
    Ok(MetricVerdict {
        symmetric: first_verdict.symmetric && second_verdict.symmetric,
        smooth: first_verdict.smooth && second_verdict.smooth,
        smooth_witness: first_verdict
            .smooth_witness
            .or(second_verdict.smooth_witness),
        psd,
        ranks,
    })
}

/// A nonexistence certificate: the point whose rank requirement conflicts
/// with coefficients forced to vanish on a dense neighbourhood by probe
/// smoothness.
#[derive(Debug, Clone, PartialEq)]
pub struct NonexistenceCertificate {
    pub at: Rat,
    pub required_rank: usize,
    /// Coefficients (i, j) forced to vanish identically on the cells
    /// adjacent to the point, with the forcing cells.
    pub vanishing: Vec<(usize, usize, CellKind)>,
    /// Human-readable description of the forcing probes.
    pub probes: Vec<String>,
}

/// Outcome of the existence decision.
#[derive(Debug, Clone, PartialEq)]
pub enum Existence {
    Exists(ChartMetric),
    NonExistent(NonexistenceCertificate),
    Unknown,
}

/// Three-valued existence check for a pseudo-metric on a one-chart bundle.
///
/// Positive branch: the per-cell canonical sum of squares over the dual
/// basis, assembled and verified. Negative branch: coefficients of the
/// candidate metric are constrained by probe smoothness (coefficients of
/// non-smooth evaluation terms vanish identically per cell); if every
/// coefficient is forced to vanish on the cells adjacent to a point whose
/// rank requirement is positive, no smooth merge can achieve the rank.
pub fn existence_check(bundle: &Bundle, seed: u64, psd_samples: usize) -> Result<Existence, MetricError> {
    // positive branch
    let mut pieces = Vec::new();
    let mut sos = Vec::new();
    let mut ok = true;
    for cell in &bundle.cells {
        let (space, ctx) = bundle.fibre_space_on(cell)?;
        match space.construct_pseudometric_on(&ctx) {
            Ok((form, cert)) => {
                pieces.push((cell.clone(), form.matrix));
                sos.push((cell.clone(), cert));
            }
            Err(_) => {
                ok = false;
                break;
            }
        }
    }
    if ok {
        let candidate = ChartMetric {
            var: bundle.base_var.clone(),
            pieces,
            sos: Some(sos),
        };
        let verdict = is_pseudometric(bundle, &candidate, seed, psd_samples)?;
        if verdict.pass() {
            return Ok(Existence::Exists(candidate));
        }
    }

    // negative branch: forced-vanishing analysis per interval cell
    let d = bundle.fibre_dim;
    let unknowns: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (i..d).map(move |j| (i, j)))
        .collect();
    let mut forced: BTreeMap<CellKind, Vec<(usize, usize)>> = BTreeMap::new();
    let mut probe_notes = Vec::new();
    let mut probes: Vec<FibreGen> = bundle.gens.clone();
    for j in 0..d {
        let mut comps = vec![RatExpr::zero(); d];
        comps[j] = RatExpr::one();
        probes.push(FibreGen::new(Vec::new(), comps));
    }
    for cell in &bundle.cells {
        let CellKind::Interval(_, _) = cell else {
            continue;
        };
        let ctx = cell.sign_context(&bundle.base_var);
        // rows of the constraint system over the cell's coefficient field
        let mut rows: Vec<Vec<RatExpr>> = Vec::new();
        for (pi, p) in probes.iter().enumerate() {
            for (qi, q) in probes.iter().enumerate() {
                let p = p.renamed_fibre_vars(|i| Var::new(format!("$p{i}")));
                let q = q.renamed_fibre_vars(|i| Var::new(format!("$q{i}")));
                let mut fibre_vars = p.fibre_var_set();
                fibre_vars.extend(q.fibre_var_set());
                // evaluation coefficient of unknown g_ij at each abs key
                let mut by_key: BTreeMap<crate::expr::TermKey, Vec<RatExpr>> = BTreeMap::new();
                for (u, &(i, j)) in unknowns.iter().enumerate() {
                    // symmetric contribution of g_ij
                    let mut contrib = p.components[i].mul(&q.components[j]);
                    if i != j {
                        contrib = contrib.add(&p.components[j].mul(&q.components[i]));
                    }
                    let n = contrib.num().normalize(&ctx);
                    for (key, coeff) in n.group_by(&fibre_vars) {
                        if key.abs.is_empty() {
                            continue;
                        }
                        let row = by_key
                            .entry(key)
                            .or_insert_with(|| vec![RatExpr::zero(); unknowns.len()]);
                        row[u] = row[u].add(
                            &RatExpr::new(coeff, contrib.den().clone())
                                .unwrap_or_else(|_| RatExpr::zero()),
                        );
                    }
                }
                if !by_key.is_empty() {
                    probe_notes.push(format!(
                        "probe pair ({}, {}) on {cell}",
                        probe_name(bundle, pi),
                        probe_name(bundle, qi)
                    ));
                }
                for (_, row) in by_key {
                    rows.push(row);
                }
            }
        }
        if rows.is_empty() {
            continue;
        }
        let m = ExprMatrix::from_fn(rows.len(), unknowns.len(), |r, c| rows[r][c].clone());
        let nullspace = m.nullspace_on(&ctx)?;
        // a coefficient is forced to vanish when it is zero in every
        // nullspace basis vector
        let mut zeroed = Vec::new();
        for (u, &(i, j)) in unknowns.iter().enumerate() {
            let free_somewhere = nullspace.iter().any(|v| !v[u].is_zero_on(&ctx));
            if !free_somewhere {
                zeroed.push((i, j));
            }
        }
        forced.insert(cell.clone(), zeroed);
    }
    // look for a point cell with positive required rank whose neighbours
    // force every coefficient to vanish
    for (idx, cell) in bundle.cells.iter().enumerate() {
        let CellKind::Point(q) = cell else { continue };
        let (space, ctx) = bundle.fibre_space_on(cell)?;
        let required = space.dual_dim_on(&ctx)?;
        if required == 0 {
            continue;
        }
        let neighbours: Vec<&CellKind> = [idx.checked_sub(1), Some(idx + 1)]
            .iter()
            .flatten()
            .filter_map(|&i| bundle.cells.get(i))
            .collect();
        if neighbours.is_empty() {
            continue;
        }
        let all_forced = neighbours.iter().all(|n| {
            forced
                .get(n)
                .map(|z| z.len() == unknowns.len())
                .unwrap_or(false)
        });
        if all_forced {
            let mut vanishing = Vec::new();
            for n in &neighbours {
                for &(i, j) in forced.get(*n).unwrap() {
                    vanishing.push((i, j, (*n).clone()));
                }
            }
            return Ok(Existence::NonExistent(NonexistenceCertificate {
                at: q.clone(),
                required_rank: required,
                vanishing,
                probes: probe_notes,
            }));
        }
    }
    Ok(Existence::Unknown)
}

fn probe_name(bundle: &Bundle, index: usize) -> String {
    if index < bundle.gens.len() {
        format!("generator {index}")
    } else {
        format!("constant e{}", index - bundle.gens.len() + 1)
    }
}

/// Replays a nonexistence certificate against the bundle: re-derives the
/// forced-vanishing coefficients and the rank requirement.
pub fn replay_certificate(
    bundle: &Bundle,
    cert: &NonexistenceCertificate,
    seed: u64,
    psd_samples: usize,
) -> Result<bool, MetricError> {
    match existence_check(bundle, seed, psd_samples)? {
        Existence::NonExistent(again) => Ok(again.at == cert.at
            && again.required_rank == cert.required_rank
            && again.vanishing == cert.vanishing),
        _ => Ok(false),
    }
}

/// The fibrewise pairing map of a metric: `v -> g(x)(v, .)`, given per cell
/// by the metric matrix itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingMap {
    pub pieces: Vec<(CellKind, ExprMatrix)>,
    /// Set when the metric passed smoothness but failed the rank condition;
    /// the pairing map is still smooth.
    pub rank_warning: Option<String>,
}

/// Builds the pairing map and verifies its bilinear consistency at random
/// points: the functional `pairing(v)` applied to `w` equals `v^T G w`.
pub fn pairing_map(
    bundle: &Bundle,
    metric: &ChartMetric,
    seed: u64,
) -> Result<PairingMap, MetricError> {
    let verdict = is_pseudometric(bundle, metric, seed, 10)?;
    if !(verdict.symmetric && verdict.smooth && verdict.psd.accepted()) {
        return Err(MetricError::MetricRequired(format!("{verdict}")));
    }
    let rank_warning = if verdict.rank_ok() {
        None
    } else {
        Some("metric rank is below the fibre dual dimension; pairing map is still smooth".into())
    };
    let mut pieces = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (cell, m) in &metric.pieces {
        // consistency at random rational points: both evaluation orders
        for _ in 0..20 {
            let x = rational_samples_in_cell(cell, 1, rng.gen())
                .pop()
                .unwrap_or_else(|| Rat::from_integer(0.into()));
            let at = matrix_at_cell(m, &bundle.base_var, &CellKind::Point(x))?;
            let Some(rows) = at.to_constant() else {
                continue;
            };
            let d = rows.len();
            let v: Vec<Rat> = (0..d)
                .map(|_| crate::rat::rat(rng.gen_range(-9i64..=9), rng.gen_range(1i64..=4)))
                .collect();
            let w: Vec<Rat> = (0..d)
                .map(|_| crate::rat::rat(rng.gen_range(-9i64..=9), rng.gen_range(1i64..=4)))
                .collect();
            // (G v) . w and v . (G w) must agree for a symmetric matrix
            let gv: Vec<Rat> = (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| rows[i][j].clone() * v[j].clone())
                        .fold(Rat::from_integer(0.into()), |a, b| a + b)
                })
                .collect();
            let gw: Vec<Rat> = (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| rows[i][j].clone() * w[j].clone())
                        .fold(Rat::from_integer(0.into()), |a, b| a + b)
                })
                .collect();
            let lhs = gv
                .iter()
                .zip(&w)
                .map(|(a, b)| a.clone() * b.clone())
                .fold(Rat::from_integer(0.into()), |a, b| a + b);
            let rhs = gw
                .iter()
                .zip(&v)
                .map(|(a, b)| a.clone() * b.clone())
                .fold(Rat::from_integer(0.into()), |a, b| a + b);
            if lhs != rhs {
                return Err(MetricError::ShapeMismatch(
                    "pairing map evaluation mismatch".into(),
                ));
            }
        }
        pieces.push((cell.clone(), m.clone()));
    }
    Ok(PairingMap {
        pieces,
        rank_warning,
    })
}

impl PairingMap {
    /// Rank and kernel basis of the pairing over one cell.
    pub fn rank_and_kernel_on(
        &self,
        var: &Var,
        cell: &CellKind,
    ) -> Result<(usize, Vec<Vec<RatExpr>>), MetricError> {
        let (_, m) = self
            .pieces
            .iter()
            .find(|(c, _)| c == cell)
            .ok_or_else(|| MetricError::ShapeMismatch(format!("no piece on {cell}")))?;
        let ctx = cell.sign_context(var);
        let m = matrix_at_cell(m, var, cell)?;
        Ok((m.rank_on(&ctx)?, m.nullspace_on(&ctx)?))
    }
}

/// The induced metric on the dual bundle, written in the per-cell dual
/// basis coordinates of the dual view.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMetric {
    pub view: DualBundleView,
    /// Per cell: the dual metric matrix in dual-basis coordinates.
    pub pieces: Vec<(CellKind, ExprMatrix)>,
}

/// Constructs the induced metric on the dual bundle: per cell, solve
/// `G v_k = phi_k` for preimages of the dual basis under the pairing map
/// and set `g*(phi_i, phi_j) = v_i^T G v_j`. Requires a passing metric and
/// a locally constant dual dimension (the local-triviality surrogate).
pub fn dual_metric(
    bundle: &Bundle,
    metric: &ChartMetric,
    seed: u64,
    psd_samples: usize,
) -> Result<DualMetric, MetricError> {
    let verdict = is_pseudometric(bundle, metric, seed, psd_samples)?;
    if !verdict.pass() {
        return Err(MetricError::MetricRequired(format!("{verdict}")));
    }
    let profile = bundle.dual_dim_profile()?;
    let dims: Vec<usize> = profile.iter().map(|(_, d)| *d).collect();
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(MetricError::NotLocallyTrivial(format!(
            "dual dimensions {dims:?} vary across the chart"
        )));
    }
    let view = bundle.dual_view()?;
    let mut pieces = Vec::new();
    for dual_cell in &view.cells {
        let cell = &dual_cell.cell;
        let ctx = cell.sign_context(&bundle.base_var);
        let basis = &dual_cell.basis;
        let big_d = basis.len();
        let m = metric
            .piece_for(cell)
            .ok_or_else(|| MetricError::ShapeMismatch(format!("no metric piece on {cell}")))?;
        let m = matrix_at_cell(m, &bundle.base_var, cell)?;
        let mut preimages: Vec<Vec<RatExpr>> = Vec::with_capacity(big_d);
        for phi in basis {
            let rhs: Vec<RatExpr> = phi
                .coeffs
                .iter()
                .map(|c| at_cell(c, &bundle.base_var, cell))
                .collect::<Result<_, _>>()?;
            let v = m.solve_on(&rhs, &ctx)?.ok_or_else(|| {
                MetricError::MetricRequired(
                    "dual basis functional has no preimage under the pairing".into(),
                )
            })?;
            preimages.push(v);
        }
        let mut out = ExprMatrix::zeros(big_d, big_d);
        for i in 0..big_d {
            for j in 0..big_d {
                // v_i^T G v_j = v_i^T phi_j
                let mut acc = RatExpr::zero();
                for (a, b) in preimages[i].iter().zip(
                    basis[j]
                        .coeffs
                        .iter()
                        .map(|c| at_cell(c, &bundle.base_var, cell))
                        .collect::<Result<Vec<_>, _>>()?,
                ) {
                    acc = acc.add(&a.mul(&b));
                }
                out.set(i, j, acc.normalized(&ctx));
            }
        }
        pieces.push((cell.clone(), out));
    }
    Ok(DualMetric { view, pieces })
}

impl DualMetric {
    /// The dual bundle as a standard bundle together with the dual metric
    /// as a chart metric, enabling a second application of
    /// [`dual_metric`]. Available when the dual view is standard.
    pub fn as_standard_pair(&self) -> Option<(Bundle, ChartMetric)> {
        let bundle = self.view.as_standard_bundle()?;
        let metric = ChartMetric {
            var: bundle.base_var.clone(),
            pieces: self.pieces.clone(),
            sos: None,
        };
        Some((bundle, metric))
    }
}


#[cfg(test)]
mod more_tests {
    use super::*;
    use crate::bundle::{ChartId, Endpoint};
    use crate::expr::AbsPoly;
    use crate::rat::rat_int;

    #[test]
    fn existence_is_three_valued() {
        // fibre R^2 with generator (u, v) -> (u, u*abs(v), v): the dual
        // dimension jumps from 1 to 2 at the origin, the positive branch
        // fails to merge, and the probe constraints do not force every
        // coefficient to vanish, so the outcome stays open
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
            2,
            vec![FibreGen::from_polys(
                vec![v.clone()],
                vec![AbsPoly::var(&u).mul(&AbsPoly::abs_var(&v)), AbsPoly::var(&v)],
            )],
            "open-case",
        )
        .unwrap();
        let dims: Vec<usize> = bundle
            .dual_dim_profile()
            .unwrap()
            .into_iter()
            .map(|(_, d)| d)
            .collect();
        assert_eq!(dims, vec![1, 2, 1]);
        assert_eq!(
            existence_check(&bundle, 1, 10).unwrap(),
            Existence::Unknown
        );
    }

    #[test]
    fn incompatible_metrics_cannot_be_glued() {
        let glued = {
            use crate::glue::{glue_bundles, BaseGluing, BundleGluing};
            let cells = vec![
                CellKind::Interval(Endpoint::NegInf, Endpoint::Finite(rat_int(0))),
                CellKind::Point(rat_int(0)),
                CellKind::Interval(Endpoint::Finite(rat_int(0)), Endpoint::PosInf),
            ];
            let b1 = Bundle::new(
                ChartId::new("x"),
                Var::new("x"),
                cells.clone(),
                1,
                Vec::new(),
                "a",
            )
            .unwrap();
            let b2 = Bundle::new(
                ChartId::new("y"),
                Var::new("y"),
                cells.clone(),
                1,
                Vec::new(),
                "b",
            )
            .unwrap();
            glue_bundles(
                &b1,
                &b2,
                &BundleGluing {
                    base: BaseGluing::new(
                        "x",
                        "y",
                        vec![cells[0].clone(), cells[2].clone()],
                        RatExpr::new(AbsPoly::one(), AbsPoly::var(&Var::new("x"))).unwrap(),
                        Some(RatExpr::new(AbsPoly::one(), AbsPoly::var(&Var::new("y"))).unwrap()),
                    ),
                    lift: vec![
                        (
                            cells[0].clone(),
                            ExprMatrix::new(1, 1, vec![RatExpr::one()]),
                        ),
                        (
                            cells[2].clone(),
                            ExprMatrix::new(1, 1, vec![RatExpr::one()]),
                        ),
                    ],
                },
            )
            .unwrap()
        };
        let cells: Vec<CellKind> = glued.first.cells.clone();
        let one = ChartMetric::uniform(
            &Var::new("x"),
            &cells,
            ExprMatrix::new(1, 1, vec![RatExpr::one()]),
        );
        let two = ChartMetric::uniform(
            &Var::new("y"),
            &cells,
            ExprMatrix::new(1, 1, vec![RatExpr::constant(rat_int(2))]),
        );
        assert!(!compat_check(&one, &two, &glued).unwrap());
        assert!(matches!(
            glue_metrics(&one, &two, &glued, 1, 10),
            Err(MetricError::IncompatibleMetrics(_))
        ));
    }
}
