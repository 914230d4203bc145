//! Finite-dimensional diffeological vector spaces with finitely generated
//! vector-space diffeologies: diffeological duals and single-fibre
//! pseudo-metrics.
//!
//! A linear functional is smooth for the generated diffeology exactly when
//! it is smooth on each generator (plots of the generated vector-space
//! diffeology are locally finite sums of smooth reparametrizations of the
//! generators plus standard plots, and linearity distributes over such
//! sums). Dual bases are therefore nullspaces of exact linear constraint
//! systems, computed by reduced row echelon form with lexicographic pivot
//! order so that results are reproducible bit for bit.

use std::collections::{BTreeMap, BTreeSet};

use crate::expr::{AbsPoly, ExprError, RatExpr, SignContext, Var};
use crate::linalg::{psd_constant, ExprMatrix};
use crate::rat::{rat_display, Rat};
use num_traits::Signed;

/// One generating plot: a map from a Euclidean domain into the ambient
/// space, one expression per ambient coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorPlot {
    pub domain: Vec<Var>,
    pub components: Vec<AbsPoly>,
}

impl GeneratorPlot {
    pub fn new(domain: Vec<Var>, components: Vec<AbsPoly>) -> Self {
        GeneratorPlot { domain, components }
    }

    pub fn ambient_dim(&self) -> usize {
        self.components.len()
    }

    pub fn is_zero(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.normalize(&SignContext::empty()).is_zero())
    }

    /// Same plot with domain variables renamed by index through `fresh`.
    pub fn renamed(&self, mut fresh: impl FnMut(usize) -> Var) -> GeneratorPlot {
        let mut map = BTreeMap::new();
        let mut new_domain = Vec::new();
        for (i, v) in self.domain.iter().enumerate() {
            let nv = fresh(i);
            map.insert(v.clone(), AbsPoly::var(&nv));
            new_domain.push(nv);
        }
        let ctx = SignContext::empty();
        let components = self
            .components
            .iter()
            .map(|c| c.substitute(&map, &ctx).expect("renaming stays in-class"))
            .collect();
        GeneratorPlot {
            domain: new_domain,
            components,
        }
    }

    pub fn domain_set(&self) -> BTreeSet<Var> {
        self.domain.iter().cloned().collect()
    }
}

/// A finite-dimensional vector space together with finitely many generating
/// plots of its vector-space diffeology. The standard plots (constants and
/// smooth maps) are implicit and never stored; identically zero generators
/// are dropped at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSpace {
    pub dim: usize,
    pub generators: Vec<GeneratorPlot>,
    pub label: String,
}

/// A linear functional in ambient coordinates. Coefficients are rational
/// expressions so the same type serves constant functionals and
/// base-parametric fibrewise ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    pub coeffs: Vec<RatExpr>,
}

impl Functional {
    pub fn constant(coeffs: Vec<Rat>) -> Self {
        Functional {
            coeffs: coeffs.into_iter().map(RatExpr::constant).collect(),
        }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut coeffs = vec![RatExpr::zero(); dim];
        coeffs[index] = RatExpr::one();
        Functional { coeffs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// Pairs the functional with a vector of expressions.
    pub fn apply_exprs(&self, vec: &[RatExpr]) -> RatExpr {
        assert_eq!(vec.len(), self.coeffs.len());
        let mut acc = RatExpr::zero();
        for (c, v) in self.coeffs.iter().zip(vec) {
            acc = acc.add(&c.mul(v));
        }
        acc
    }

    pub fn apply_plot(&self, plot: &GeneratorPlot) -> RatExpr {
        let vec: Vec<RatExpr> = plot
            .components
            .iter()
            .cloned()
            .map(RatExpr::from_poly)
            .collect();
        self.apply_exprs(&vec)
    }
}

/// A symmetric bilinear form in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearForm {
    pub matrix: ExprMatrix,
}

impl BilinearForm {
    pub fn new(matrix: ExprMatrix) -> Self {
        assert_eq!(matrix.rows(), matrix.cols(), "bilinear form must be square");
        BilinearForm { matrix }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(ExprMatrix::identity(dim))
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(ExprMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// Exactness status of a positive semi-definiteness check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PsdStatus {
    /// Certified by a sum-of-squares presentation, or decided exactly for a
    /// constant matrix by principal-minor signs.
    Exact,
    /// Held at the given number of sampled rational points.
    Probabilistic(u32),
    /// Failed, with a printable witness.
    Fails(String),
}

impl PsdStatus {
    pub fn accepted(&self) -> bool {
        !matches!(self, PsdStatus::Fails(_))
    }
}

/// Verdict of the single-fibre pseudo-metric check.
#[derive(Debug, Clone, PartialEq)]
pub struct VsVerdict {
    pub symmetric: bool,
    pub smooth: bool,
    pub psd: PsdStatus,
    pub rank: usize,
    pub dual_dim: usize,
}

impl VsVerdict {
    pub fn pass(&self) -> bool {
        self.symmetric && self.smooth && self.psd.accepted() && self.rank == self.dual_dim
    }
}

/// A sum-of-squares certificate: positive coefficients and functionals with
/// `sum c_k phi_k phi_k^T` equal to the certified matrix.
pub type SosCertificate = Vec<(RatExpr, Functional)>;

impl GeneratedSpace {
    pub fn new(dim: usize, generators: Vec<GeneratorPlot>, label: impl Into<String>) -> Self {
        for g in &generators {
            assert_eq!(
                g.ambient_dim(),
                dim,
                "generator component count must equal the ambient dimension"
            );
        }
        let generators = generators.into_iter().filter(|g| !g.is_zero()).collect();
        GeneratedSpace {
            dim,
            generators,
            label: label.into(),
        }
    }

    /// The standard space: no nonstandard generators.
    pub fn standard(dim: usize, label: impl Into<String>) -> Self {
        Self::new(dim, Vec::new(), label)
    }

    pub fn is_standard(&self) -> bool {
        self.generators.is_empty()
    }

    /// Basis of the diffeological dual: all linear functionals whose
    /// composite with every generator is smooth. Solved as an exact
    /// nullspace over the coefficient field of the cell.
    pub fn dual_basis_on(&self, ctx: &SignContext) -> Result<Vec<Functional>, ExprError> {
        let constraints = self.dual_constraints(ctx);
        let matrix = if constraints.is_empty() {
            ExprMatrix::zeros(1, self.dim)
        } else {
            let rows = constraints.len();
            let data: Vec<RatExpr> = constraints.into_iter().flatten().collect();
            ExprMatrix::new(rows, self.dim, data)
        };
        let basis = matrix.nullspace_on(ctx)?;
        Ok(basis
            .into_iter()
            .map(|coeffs| Functional { coeffs })
            .collect())
    }

    pub fn dual_basis(&self) -> Vec<Functional> {
        self.dual_basis_on(&SignContext::empty())
            .expect("constant dual computation stays in-class")
    }

    pub fn dual_dim_on(&self, ctx: &SignContext) -> Result<usize, ExprError> {
        Ok(self.dual_basis_on(ctx)?.len())
    }

    /// One constraint row per (generator, non-smooth term key): the linear
    /// combination of component coefficients at that key must vanish.
    fn dual_constraints(&self, ctx: &SignContext) -> Vec<Vec<RatExpr>> {
        let mut rows = Vec::new();
        for gen in &self.generators {
            let fibre_vars = gen.domain_set();
            let mut by_key: BTreeMap<crate::expr::TermKey, Vec<AbsPoly>> = BTreeMap::new();
            for (i, comp) in gen.components.iter().enumerate() {
                let normalized = comp.normalize(ctx);
                for (key, coeff) in normalized.group_by(&fibre_vars) {
                    if key.abs.is_empty() {
                        continue;
                    }
                    let entry = by_key
                        .entry(key)
                        .or_insert_with(|| vec![AbsPoly::zero(); self.dim]);
                    entry[i] = entry[i].add(&coeff);
                }
            }
            for (_, coeffs) in by_key {
                rows.push(
                    coeffs
                        .into_iter()
                        .map(RatExpr::from_poly)
                        .collect::<Vec<_>>(),
                );
            }
        }
        rows
    }

    /// True when the functional composes smoothly with every generator.
    pub fn is_smooth_functional_on(&self, phi: &Functional, ctx: &SignContext) -> bool {
        assert_eq!(phi.dim(), self.dim);
        self.generators
            .iter()
            .all(|gen| phi.apply_plot(gen).is_smooth_in(&gen.domain_set(), ctx))
    }

    pub fn is_smooth_functional(&self, phi: &Functional) -> bool {
        self.is_smooth_functional_on(phi, &SignContext::empty())
    }

    /// Smoothness of a bilinear form: checked on every ordered generator
    /// pair with disjoint renamed variables, and on each
    /// (generator, constant basis vector) pair, constants being plots.
    pub fn is_smooth_bilinear_on(&self, form: &BilinearForm, ctx: &SignContext) -> bool {
        assert_eq!(form.dim(), self.dim);
        let left: Vec<GeneratorPlot> = self
            .generators
            .iter()
            .map(|g| g.renamed(|i| Var::new(format!("$l{i}"))))
            .collect();
        let right: Vec<GeneratorPlot> = self
            .generators
            .iter()
            .map(|g| g.renamed(|i| Var::new(format!("$r{i}"))))
            .collect();
        for p in &left {
            for q in &right {
                let mut vars = p.domain_set();
                vars.extend(q.domain_set());
                if !self
                    .pairing(form, &p.components, &q.components)
                    .is_smooth_in(&vars, ctx)
                {
                    return false;
                }
            }
            // constants are plots: pair against each canonical basis vector
            for j in 0..self.dim {
                let mut e = vec![AbsPoly::zero(); self.dim];
                e[j] = AbsPoly::one();
                if !self
                    .pairing(form, &p.components, &e)
                    .is_smooth_in(&p.domain_set(), ctx)
                {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_smooth_bilinear(&self, form: &BilinearForm) -> bool {
        self.is_smooth_bilinear_on(form, &SignContext::empty())
    }

    fn pairing(&self, form: &BilinearForm, a: &[AbsPoly], b: &[AbsPoly]) -> RatExpr {
        let mut acc = RatExpr::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                let term = form
                    .matrix
                    .get(i, j)
                    .mul(&RatExpr::from_poly(a[i].clone()))
                    .mul(&RatExpr::from_poly(b[j].clone()));
                acc = acc.add(&term);
            }
        }
        acc
    }

    /// The canonical pseudo-metric: the sum of squares of the canonical
    /// dual basis. Trivial dual gives the zero form (a rank-0 pseudo-metric).
    pub fn construct_pseudometric_on(
        &self,
        ctx: &SignContext,
    ) -> Result<(BilinearForm, SosCertificate), ExprError> {
        let basis = self.dual_basis_on(ctx)?;
        let mut matrix = ExprMatrix::zeros(self.dim, self.dim);
        let mut cert = Vec::new();
        for phi in &basis {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    let add = phi.coeffs[i].mul(&phi.coeffs[j]);
                    matrix.set(i, j, matrix.get(i, j).add(&add));
                }
            }
            cert.push((RatExpr::one(), phi.clone()));
        }
        Ok((BilinearForm::new(matrix), cert))
    }

    pub fn construct_pseudometric(&self) -> (BilinearForm, SosCertificate) {
        self.construct_pseudometric_on(&SignContext::empty())
            .expect("constant construction stays in-class")
    }

    /// Full pseudo-metric verdict for a single fibre: symmetry, smoothness,
    /// positive semi-definiteness (exact via certificate or constant minors,
    /// sampled otherwise) and rank against the dual dimension.
    pub fn is_pseudometric_on(
        &self,
        form: &BilinearForm,
        cert: Option<&SosCertificate>,
        ctx: &SignContext,
        sample_vectors: &[Vec<Rat>],
    ) -> Result<VsVerdict, ExprError> {
        let symmetric = form.matrix.is_symmetric_on(ctx);
        let smooth = symmetric && self.is_smooth_bilinear_on(form, ctx);
        let psd = self.psd_status(form, cert, ctx, sample_vectors)?;
        let rank = form.matrix.rank_on(ctx)?;
        let dual_dim = self.dual_dim_on(ctx)?;
        Ok(VsVerdict {
            symmetric,
            smooth,
            psd,
            rank,
            dual_dim,
        })
    }

    pub fn is_pseudometric(
        &self,
        form: &BilinearForm,
        cert: Option<&SosCertificate>,
        sample_vectors: &[Vec<Rat>],
    ) -> VsVerdict {
        self.is_pseudometric_on(form, cert, &SignContext::empty(), sample_vectors)
            .expect("constant verdict stays in-class")
    }

    fn psd_status(
        &self,
        form: &BilinearForm,
        cert: Option<&SosCertificate>,
        ctx: &SignContext,
        sample_vectors: &[Vec<Rat>],
    ) -> Result<PsdStatus, ExprError> {
        if let Some(cert) = cert {
            if self.verify_sos(form, cert, ctx) {
                return Ok(PsdStatus::Exact);
            }
        }
        if let Some(rows) = form.matrix.to_constant() {
            return Ok(if psd_constant(&rows) {
                PsdStatus::Exact
            } else {
                PsdStatus::Fails("a principal minor sum is negative".into())
            });
        }
        let mut checked = 0;
        for v in sample_vectors {
            if v.len() != self.dim {
                continue;
            }
            let vec: Vec<RatExpr> = v.iter().cloned().map(RatExpr::constant).collect();
            let mut acc = RatExpr::zero();
            for i in 0..self.dim {
                for j in 0..self.dim {
                    acc = acc.add(&form.matrix.get(i, j).mul(&vec[i]).mul(&vec[j]));
                }
            }
            if let Some(c) = acc.is_constant() {
                if c.is_negative() {
                    let w = v.iter().map(rat_display).collect::<Vec<_>>().join(", ");
                    return Ok(PsdStatus::Fails(format!("negative at vector ({w})")));
                }
            }
            checked += 1;
        }
        Ok(PsdStatus::Probabilistic(checked))
    }

    /// Checks `sum c_k phi_k phi_k^T == form` with provably positive `c_k`.
    pub fn verify_sos(
        &self,
        form: &BilinearForm,
        cert: &SosCertificate,
        ctx: &SignContext,
    ) -> bool {
        let mut acc = ExprMatrix::zeros(self.dim, self.dim);
        for (c, phi) in cert {
            if phi.dim() != self.dim {
                return false;
            }
            let positive = c
                .is_constant()
                .map(|v| v.is_positive())
                .unwrap_or_else(|| c.num().definitely_positive(ctx) && c.den_nonvanishing_on(ctx));
            if !positive {
                return false;
            }
            for i in 0..self.dim {
                for j in 0..self.dim {
                    let add = c.mul(&phi.coeffs[i]).mul(&phi.coeffs[j]);
                    acc.set(i, j, acc.get(i, j).add(&add));
                }
            }
        }
        acc.equals_on(&form.matrix, ctx)
    }

    /// Direct sum: generators of each factor padded by zero on the other.
    pub fn direct_sum(&self, other: &GeneratedSpace) -> GeneratedSpace {
        let dim = self.dim + other.dim;
        let mut generators = Vec::new();
        for g in &self.generators {
            let g = g.renamed(|i| Var::new(format!("$a{i}")));
            let mut components = g.components.clone();
            components.extend(std::iter::repeat_n(AbsPoly::zero(), other.dim));
            generators.push(GeneratorPlot::new(g.domain, components));
        }
        for g in &other.generators {
            let g = g.renamed(|i| Var::new(format!("$b{i}")));
            let mut components = vec![AbsPoly::zero(); self.dim];
            components.extend(g.components);
            generators.push(GeneratorPlot::new(g.domain, components));
        }
        GeneratedSpace::new(
            dim,
            generators,
            format!("{} (+) {}", self.label, other.label),
        )
    }

    /// Tensor product: pairwise products of generators on disjoint
    /// variables, plus each generator against the constant basis vectors of
    /// the other factor (constants are plots of any diffeology).
    pub fn tensor(&self, other: &GeneratedSpace) -> GeneratedSpace {
        let dim = self.dim * other.dim;
        let mut generators = Vec::new();
        let lefts: Vec<GeneratorPlot> = self
            .generators
            .iter()
            .map(|g| g.renamed(|i| Var::new(format!("$a{i}"))))
            .collect();
        let rights: Vec<GeneratorPlot> = other
            .generators
            .iter()
            .map(|g| g.renamed(|i| Var::new(format!("$b{i}"))))
            .collect();
        for p in &lefts {
            for q in &rights {
                let mut domain = p.domain.clone();
                domain.extend(q.domain.clone());
                let mut components = Vec::with_capacity(dim);
                for i in 0..self.dim {
                    for j in 0..other.dim {
                        components.push(p.components[i].mul(&q.components[j]));
                    }
                }
                generators.push(GeneratorPlot::new(domain, components));
            }
        }
        for p in &lefts {
            for j in 0..other.dim {
                let mut components = vec![AbsPoly::zero(); dim];
                for i in 0..self.dim {
                    components[i * other.dim + j] = p.components[i].clone();
                }
                generators.push(GeneratorPlot::new(p.domain.clone(), components));
            }
        }
        for q in &rights {
            for i in 0..self.dim {
                let mut components = vec![AbsPoly::zero(); dim];
                for j in 0..other.dim {
                    components[i * other.dim + j] = q.components[j].clone();
                }
                generators.push(GeneratorPlot::new(q.domain.clone(), components));
            }
        }
        GeneratedSpace::new(
            dim,
            generators,
            format!("{} (x) {}", self.label, other.label),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat_int;

    fn abs_gen_component(dim: usize, index: usize, var: &str) -> GeneratorPlot {
        // x -> abs(x) e_index
        let v = Var::new(var);
        let mut components = vec![AbsPoly::zero(); dim];
        components[index] = AbsPoly::abs_var(&v);
        GeneratorPlot::new(vec![v], components)
    }

    #[test]
    fn standard_space_has_canonical_dual() {
        let v = GeneratedSpace::standard(2, "std2");
        let basis = v.dual_basis();
        assert_eq!(basis.len(), 2);
        assert_eq!(basis[0], Functional::basis(2, 0));
        assert_eq!(basis[1], Functional::basis(2, 1));
    }

    #[test]
    fn all_abs_generators_kill_the_dual() {
        for n in [2usize, 3] {
            let gens = (0..n).map(|i| abs_gen_component(n, i, "x")).collect();
            let v = GeneratedSpace::new(n, gens, "trivial-dual");
            assert_eq!(v.dual_basis().len(), 0);
        }
    }

    #[test]
    fn single_abs_generator_leaves_complement() {
        let v = GeneratedSpace::new(2, vec![abs_gen_component(2, 1, "x")], "one-gen");
        let basis = v.dual_basis();
        assert_eq!(basis.len(), 1);
        assert_eq!(basis[0], Functional::basis(2, 0));
        assert!(v.is_smooth_functional(&Functional::basis(2, 0)));
        assert!(!v.is_smooth_functional(&Functional::basis(2, 1)));
        assert!(GeneratedSpace::standard(2, "s").is_smooth_functional(&Functional::basis(2, 1)));
    }

    #[test]
    fn bilinear_smoothness_on_abs_fibre() {
        // V = R^2 with generator v -> (0, abs(v))
        let v = GeneratedSpace::new(2, vec![abs_gen_component(2, 1, "v")], "absfibre");
        let e11 = {
            let mut m = ExprMatrix::zeros(2, 2);
            m.set(0, 0, RatExpr::one());
            BilinearForm::new(m)
        };
        let e22 = {
            let mut m = ExprMatrix::zeros(2, 2);
            m.set(1, 1, RatExpr::one());
            BilinearForm::new(m)
        };
        assert!(v.is_smooth_bilinear(&e11));
        assert!(!v.is_smooth_bilinear(&e22));
        assert!(GeneratedSpace::standard(2, "s").is_smooth_bilinear(&BilinearForm::identity(2)));
    }

    #[test]
    fn canonical_pseudometric_construction() {
        let std2 = GeneratedSpace::standard(2, "std2");
        let (form, cert) = std2.construct_pseudometric();
        assert!(form
            .matrix
            .equals_on(&ExprMatrix::identity(2), &SignContext::empty()));
        let verdict = std2.is_pseudometric(&form, Some(&cert), &[]);
        assert!(verdict.pass());
        assert_eq!(verdict.psd, PsdStatus::Exact);

        let v = GeneratedSpace::new(2, vec![abs_gen_component(2, 1, "v")], "absfibre");
        let (form, cert) = v.construct_pseudometric();
        let mut expected = ExprMatrix::zeros(2, 2);
        expected.set(0, 0, RatExpr::one());
        assert!(form.matrix.equals_on(&expected, &SignContext::empty()));
        assert!(v.is_pseudometric(&form, Some(&cert), &[]).pass());

        let trivial = GeneratedSpace::new(
            2,
            vec![abs_gen_component(2, 0, "x"), abs_gen_component(2, 1, "x")],
            "trivial",
        );
        let (form, cert) = trivial.construct_pseudometric();
        assert!(form.matrix.is_zero_on(&SignContext::empty()));
        let verdict = trivial.is_pseudometric(&form, Some(&cert), &[]);
        assert!(verdict.pass());
        assert_eq!(verdict.rank, 0);
    }

    #[test]
    fn scaled_form_still_passes_with_rank_one() {
        let v = GeneratedSpace::new(2, vec![abs_gen_component(2, 1, "v")], "absfibre");
        let mut m = ExprMatrix::zeros(2, 2);
        m.set(0, 0, RatExpr::constant(rat_int(2)));
        let form = BilinearForm::new(m);
        let verdict = v.is_pseudometric(&form, None, &[]);
        assert!(verdict.pass());
        assert_eq!(verdict.rank, 1);
    }

    #[test]
    fn sum_and_tensor_dual_dims() {
        let std2 = GeneratedSpace::standard(2, "a");
        let sum = std2.direct_sum(&GeneratedSpace::standard(3, "b"));
        assert_eq!(sum.dim, 5);
        assert_eq!(sum.dual_basis().len(), 5);

        let absline = GeneratedSpace::new(1, vec![abs_gen_component(1, 0, "x")], "absline");
        let stdline = GeneratedSpace::standard(1, "std1");
        let t = absline.tensor(&stdline);
        assert_eq!(t.dim, 1);
        assert_eq!(t.dual_basis().len(), 0);
        let s = absline.direct_sum(&stdline);
        assert_eq!(s.dual_basis().len(), 1);
    }
}
