//! Exact expression arithmetic over the rationals with absolute-value factors.
//!
//! The closed expression class is: polynomials over `Rat` in named variables
//! and factors `abs(v)` of single variables, plus ratios of such polynomials
//! whose denominators are abs-free and nonvanishing on the cell of interest.
//! Every plot coordinate, metric coefficient and gluing-map coordinate in the
//! crate lives in this class, so smoothness questions reduce to a syntactic
//! decision on normal forms: an expression is smooth on a cell exactly when
//! its normal form under the cell's sign context carries no abs factor.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::rat::{rat_abs, rat_display, Rat};
use num_traits::{One, Signed, Zero};

/// A named scalar variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub String);

impl Var {
    pub fn new(name: impl Into<String>) -> Self {
        Var(name.into())
    }
    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Sign information for one variable on a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Neg,
    Zero,
    Pos,
    Any,
}

/// Maps variables to their sign on the cell under consideration.
/// Unlisted variables have sign `Any`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignContext {
    signs: BTreeMap<Var, Sign>,
}

impl SignContext {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Var, sign: Sign) -> Self {
        self.signs.insert(var, sign);
        self
    }

    pub fn set(&mut self, var: Var, sign: Sign) {
        self.signs.insert(var, sign);
    }

    pub fn sign(&self, var: &Var) -> Sign {
        self.signs.get(var).copied().unwrap_or(Sign::Any)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("substitution puts a sign-indefinite expression under abs: {0}")]
    SubstitutionOutOfClass(String),
    #[error("division by zero at evaluation point")]
    DivisionByZero,
    #[error("denominator is the zero expression")]
    ZeroDenominator,
    #[error("denominator fails to be positive at sample point {0}")]
    DenominatorNotPositive(String),
    #[error("missing value for variable {0} at evaluation")]
    MissingVariable(String),
}

/// Weak sign of a term on a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TermSign {
    NonNeg,
    NonPos,
    /// Nonnegative and bounded away from zero on the cell.
    StrictPos,
    /// Nonpositive and bounded away from zero on the cell.
    StrictNeg,
    Indefinite,
}

/// Monomial together with its set of abs factors. Each abs variable appears
/// with abs-exponent exactly one; `abs(v)^2` is always reduced to `v^2`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TermKey {
    pub powers: BTreeMap<Var, u32>,
    pub abs: BTreeSet<Var>,
}

impl TermKey {
    pub fn is_constant(&self) -> bool {
        self.powers.is_empty() && self.abs.is_empty()
    }

    fn mul(&self, other: &TermKey) -> TermKey {
        let mut powers = self.powers.clone();
        for (v, k) in &other.powers {
            *powers.entry(v.clone()).or_insert(0) += k;
        }
        let mut abs = BTreeSet::new();
        for v in self.abs.union(&other.abs) {
            if self.abs.contains(v) && other.abs.contains(v) {
                // abs(v)*abs(v) = v^2
                *powers.entry(v.clone()).or_insert(0) += 2;
            } else {
                abs.insert(v.clone());
            }
        }
        TermKey { powers, abs }
    }
}

/// Polynomial over `Rat` in variables and single-variable abs factors,
/// kept in normal form: distinct `(monomial, abs set)` keys, no zero
/// coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct AbsPoly {
    terms: BTreeMap<TermKey, Rat>,
}

impl AbsPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Rat) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(TermKey::default(), c);
        }
        AbsPoly { terms }
    }

    pub fn one() -> Self {
        Self::constant(Rat::one())
    }

    pub fn var(v: &Var) -> Self {
        let mut powers = BTreeMap::new();
        powers.insert(v.clone(), 1);
        let key = TermKey {
            powers,
            abs: BTreeSet::new(),
        };
        let mut terms = BTreeMap::new();
        terms.insert(key, Rat::one());
        AbsPoly { terms }
    }

    pub fn abs_var(v: &Var) -> Self {
        let mut abs = BTreeSet::new();
        abs.insert(v.clone());
        let key = TermKey {
            powers: BTreeMap::new(),
            abs,
        };
        let mut terms = BTreeMap::new();
        terms.insert(key, Rat::one());
        AbsPoly { terms }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (TermKey, Rat)>) -> Self {
        let mut out = AbsPoly::zero();
        for (key, coeff) in terms {
            out.add_term(key, coeff);
        }
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TermKey, &Rat)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> Option<Rat> {
        if self.terms.is_empty() {
            return Some(Rat::zero());
        }
        if self.terms.len() == 1 {
            let (key, coeff) = self.terms.iter().next().unwrap();
            if key.is_constant() {
                return Some(coeff.clone());
            }
        }
        None
    }

    /// All variables occurring in monomials or abs factors.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for key in self.terms.keys() {
            out.extend(key.powers.keys().cloned());
            out.extend(key.abs.iter().cloned());
        }
        out
    }

    /// True if no term carries an abs factor.
    pub fn is_abs_free(&self) -> bool {
        self.terms.keys().all(|k| k.abs.is_empty())
    }

    fn add_term(&mut self, key: TermKey, coeff: Rat) {
        if coeff.is_zero() {
            return;
        }
        let entry = self.terms.entry(key.clone()).or_insert_with(Rat::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn add(&self, other: &AbsPoly) -> AbsPoly {
        let mut out = self.clone();
        for (key, coeff) in &other.terms {
            out.add_term(key.clone(), coeff.clone());
        }
        out
    }

    pub fn neg(&self) -> AbsPoly {
        AbsPoly {
            terms: self
                .terms
                .iter()
                .map(|(k, c)| (k.clone(), -c.clone()))
                .collect(),
        }
    }

    pub fn sub(&self, other: &AbsPoly) -> AbsPoly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &AbsPoly) -> AbsPoly {
        let mut out = AbsPoly::zero();
        for (k1, c1) in &self.terms {
            for (k2, c2) in &other.terms {
                out.add_term(k1.mul(k2), c1.clone() * c2.clone());
            }
        }
        out
    }

    pub fn scale(&self, c: &Rat) -> AbsPoly {
        if c.is_zero() {
            return AbsPoly::zero();
        }
        AbsPoly {
            terms: self
                .terms
                .iter()
                .map(|(k, x)| (k.clone(), x.clone() * c.clone()))
                .collect(),
        }
    }

    pub fn pow(&self, n: u32) -> AbsPoly {
        let mut out = AbsPoly::one();
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// Canonical normal form under a sign context: `abs(v)` rewrites to `v`,
    /// `-v` or kills the term according to the sign of `v`; terms containing
    /// a variable pinned to zero vanish; like terms collect.
    pub fn normalize(&self, ctx: &SignContext) -> AbsPoly {
        let mut out = AbsPoly::zero();
        'term: for (key, coeff) in &self.terms {
            let mut c = coeff.clone();
            let mut powers = key.powers.clone();
            let mut abs = BTreeSet::new();
            for v in powers.keys() {
                if ctx.sign(v) == Sign::Zero {
                    continue 'term;
                }
            }
            for v in &key.abs {
                match ctx.sign(v) {
                    Sign::Pos => {
                        *powers.entry(v.clone()).or_insert(0) += 1;
                    }
                    Sign::Neg => {
                        *powers.entry(v.clone()).or_insert(0) += 1;
                        c = -c;
                    }
                    Sign::Zero => continue 'term,
                    Sign::Any => {
                        abs.insert(v.clone());
                    }
                }
            }
            out.add_term(TermKey { powers, abs }, c);
        }
        out
    }

    /// Decides smoothness on the cell described by `ctx`: true exactly when
    /// the normal form has no abs factor left.
    pub fn is_smooth(&self, ctx: &SignContext) -> bool {
        self.normalize(ctx).is_abs_free()
    }

    /// Smoothness with respect to a subset of variables only: no abs factor
    /// of a listed variable survives normalization. Abs factors of other
    /// (parameter) variables are ignored.
    pub fn is_smooth_in(&self, vars: &BTreeSet<Var>, ctx: &SignContext) -> bool {
        self.normalize(ctx)
            .terms
            .keys()
            .all(|k| k.abs.is_disjoint(vars))
    }

    /// Splits every term key into its part over `vars` (the grouping key)
    /// and the complementary part (folded into the coefficient polynomial).
    /// Used to read a polynomial in fibre variables with base-dependent
    /// coefficients.
    pub fn group_by(&self, vars: &BTreeSet<Var>) -> BTreeMap<TermKey, AbsPoly> {
        let mut out: BTreeMap<TermKey, AbsPoly> = BTreeMap::new();
        for (key, coeff) in &self.terms {
            let mut group = TermKey::default();
            let mut rest = TermKey::default();
            for (v, k) in &key.powers {
                if vars.contains(v) {
                    group.powers.insert(v.clone(), *k);
                } else {
                    rest.powers.insert(v.clone(), *k);
                }
            }
            for v in &key.abs {
                if vars.contains(v) {
                    group.abs.insert(v.clone());
                } else {
                    rest.abs.insert(v.clone());
                }
            }
            let entry = out.entry(group).or_insert_with(AbsPoly::zero);
            *entry = entry.add(&AbsPoly::from_terms([(rest, coeff.clone())]));
        }
        out.retain(|_, v| !v.is_zero());
        out
    }

    pub fn eval(&self, point: &BTreeMap<Var, Rat>) -> Result<Rat, ExprError> {
        let mut total = Rat::zero();
        for (key, coeff) in &self.terms {
            let mut val = coeff.clone();
            for (v, k) in &key.powers {
                let x = point
                    .get(v)
                    .ok_or_else(|| ExprError::MissingVariable(v.name().to_string()))?;
                for _ in 0..*k {
                    val *= x.clone();
                }
            }
            for v in &key.abs {
                let x = point
                    .get(v)
                    .ok_or_else(|| ExprError::MissingVariable(v.name().to_string()))?;
                val *= rat_abs(x);
            }
            total += val;
        }
        Ok(total)
    }

    fn term_sign(key: &TermKey, coeff: &Rat, ctx: &SignContext) -> TermSign {
        let mut strict = true;
        let mut negate = coeff.is_negative();
        for (v, k) in &key.powers {
            match ctx.sign(v) {
                Sign::Pos => {}
                Sign::Neg => {
                    if k % 2 == 1 {
                        negate = !negate;
                    }
                }
                Sign::Zero => return TermSign::NonNeg, // term is identically zero
                Sign::Any => {
                    if k % 2 == 1 {
                        return TermSign::Indefinite;
                    }
                    strict = false;
                }
            }
        }
        for v in &key.abs {
            match ctx.sign(v) {
                Sign::Pos | Sign::Neg => {}
                Sign::Zero => return TermSign::NonNeg,
                Sign::Any => strict = false,
            }
        }
        match (negate, strict) {
            (false, true) => TermSign::StrictPos,
            (false, false) => TermSign::NonNeg,
            (true, true) => TermSign::StrictNeg,
            (true, false) => TermSign::NonPos,
        }
    }

    /// True when every term is nonnegative on the cell.
    pub fn definitely_nonneg(&self, ctx: &SignContext) -> bool {
        self.normalize(ctx).terms.iter().all(|(k, c)| {
            matches!(
                Self::term_sign(k, c, ctx),
                TermSign::NonNeg | TermSign::StrictPos
            )
        })
    }

    pub fn definitely_nonpos(&self, ctx: &SignContext) -> bool {
        self.neg().definitely_nonneg(ctx)
    }

    /// True when the expression is provably > 0 everywhere on the cell:
    /// all terms nonnegative and at least one bounded away from zero.
    pub fn definitely_positive(&self, ctx: &SignContext) -> bool {
        let n = self.normalize(ctx);
        if n.is_zero() {
            return false;
        }
        let mut has_strict = false;
        for (k, c) in &n.terms {
            match Self::term_sign(k, c, ctx) {
                TermSign::StrictPos => has_strict = true,
                TermSign::NonNeg => {}
                _ => return false,
            }
        }
        has_strict
    }

    pub fn definitely_negative(&self, ctx: &SignContext) -> bool {
        self.neg().definitely_positive(ctx)
    }

    /// `abs` of the whole expression, staying inside the class.
    ///
    /// Works for single terms unconditionally (abs distributes over a
    /// product of powers), and for multi-term expressions that are
    /// sign-definite on the cell.
    pub fn abs_of(&self, ctx: &SignContext) -> Result<AbsPoly, ExprError> {
        let n = self.normalize(ctx);
        if n.is_zero() {
            return Ok(AbsPoly::zero());
        }
        if n.terms.len() == 1 {
            let (key, coeff) = n.terms.iter().next().unwrap();
            let mut powers = BTreeMap::new();
            let mut abs = BTreeSet::new();
            let mut all_vars: BTreeSet<Var> = key.powers.keys().cloned().collect();
            all_vars.extend(key.abs.iter().cloned());
            for v in all_vars {
                let m = key.powers.get(&v).copied().unwrap_or(0)
                    + u32::from(key.abs.contains(&v));
                let even = m - m % 2;
                if even > 0 {
                    powers.insert(v.clone(), even);
                }
                if m % 2 == 1 {
                    abs.insert(v);
                }
            }
            let mut out = AbsPoly::zero();
            out.add_term(TermKey { powers, abs }, rat_abs(coeff));
            return Ok(out.normalize(ctx));
        }
        if n.definitely_nonneg(ctx) {
            return Ok(n);
        }
        if n.definitely_nonpos(ctx) {
            return Ok(n.neg());
        }
        Err(ExprError::SubstitutionOutOfClass(n.to_string()))
    }

    /// Substitutes variables by polynomial expressions. Rational constants
    /// are constant polynomials. Variables under an abs factor must map to
    /// something whose abs stays in-class (see [`AbsPoly::abs_of`]).
    pub fn substitute(
        &self,
        map: &BTreeMap<Var, AbsPoly>,
        ctx: &SignContext,
    ) -> Result<AbsPoly, ExprError> {
        let mut out = AbsPoly::zero();
        for (key, coeff) in &self.terms {
            let mut factor = AbsPoly::constant(coeff.clone());
            for (v, k) in &key.powers {
                let repl = map.get(v).cloned().unwrap_or_else(|| AbsPoly::var(v));
                factor = factor.mul(&repl.pow(*k));
            }
            for v in &key.abs {
                let repl = map.get(v).cloned().unwrap_or_else(|| AbsPoly::var(v));
                factor = factor.mul(&repl.abs_of(ctx)?);
            }
            out = out.add(&factor);
        }
        Ok(out.normalize(ctx))
    }

    /// Substitutes variables by rational expressions, producing a ratio.
    pub fn substitute_rat(
        &self,
        map: &BTreeMap<Var, RatExpr>,
        ctx: &SignContext,
    ) -> Result<RatExpr, ExprError> {
        let mut out = RatExpr::zero();
        for (key, coeff) in &self.terms {
            let mut factor = RatExpr::constant(coeff.clone());
            for (v, k) in &key.powers {
                let repl = map
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| RatExpr::from_poly(AbsPoly::var(v)));
                for _ in 0..*k {
                    factor = factor.mul(&repl);
                }
            }
            for v in &key.abs {
                let repl = map
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| RatExpr::from_poly(AbsPoly::var(v)));
                factor = factor.mul(&repl.abs_of(ctx)?);
            }
            out = out.add(&factor);
        }
        Ok(out.normalized(ctx))
    }
}

impl fmt::Display for AbsPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (key, coeff) in &self.terms {
            let mag = rat_abs(coeff);
            if first {
                if coeff.is_negative() {
                    write!(f, "-")?;
                }
                first = false;
            } else if coeff.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut parts: Vec<String> = Vec::new();
            if !mag.is_one() || key.is_constant() {
                parts.push(rat_display(&mag));
            }
            for (v, k) in &key.powers {
                if *k == 1 {
                    parts.push(v.name().to_string());
                } else {
                    parts.push(format!("{}^{}", v.name(), k));
                }
            }
            for v in &key.abs {
                parts.push(format!("abs({})", v.name()));
            }
            write!(f, "{}", parts.join("*"))?;
        }
        Ok(())
    }
}

/// Ratio of two abs-polynomials. The denominator is abs-free and asserted
/// nonvanishing on the cell it is used on; `den_positive` records that the
/// positivity was actually checked, never silently assumed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RatExpr {
    num: AbsPoly,
    den: AbsPoly,
    den_positive: bool,
}

impl RatExpr {
    pub fn from_poly(num: AbsPoly) -> Self {
        RatExpr {
            num,
            den: AbsPoly::one(),
            den_positive: true,
        }
    }

    pub fn zero() -> Self {
        Self::from_poly(AbsPoly::zero())
    }

    pub fn one() -> Self {
        Self::from_poly(AbsPoly::one())
    }

    pub fn constant(c: Rat) -> Self {
        Self::from_poly(AbsPoly::constant(c))
    }

    pub fn var(v: &Var) -> Self {
        Self::from_poly(AbsPoly::var(v))
    }

    /// Builds `num/den`. The denominator must not be the zero expression and
    /// must be abs-free; its sign on the target cell is resolved by
    /// [`RatExpr::normalized`] or verified by [`RatExpr::check_den_positive_at`].
    pub fn new(num: AbsPoly, den: AbsPoly) -> Result<Self, ExprError> {
        if den.is_zero() {
            return Err(ExprError::ZeroDenominator);
        }
        if !den.is_abs_free() {
            return Err(ExprError::SubstitutionOutOfClass(format!(
                "denominator {den} carries an abs factor"
            )));
        }
        let mut out = RatExpr {
            num,
            den,
            den_positive: false,
        };
        out.fold_constant_den();
        Ok(out)
    }

    fn fold_constant_den(&mut self) {
        // the zero function is stored canonically as 0/1
        if self.num.is_zero() {
            self.den = AbsPoly::one();
            self.den_positive = true;
            return;
        }
        if let Some(c) = self.den.is_constant() {
            if !c.is_zero() {
                self.num = self.num.scale(&(Rat::one() / c));
                self.den = AbsPoly::one();
                self.den_positive = true;
            }
        }
    }

    pub fn num(&self) -> &AbsPoly {
        &self.num
    }

    pub fn den(&self) -> &AbsPoly {
        &self.den
    }

    pub fn den_positive(&self) -> bool {
        self.den_positive
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_polynomial(&self) -> Option<&AbsPoly> {
        if self.den.is_constant().map(|c| c.is_one()).unwrap_or(false) {
            Some(&self.num)
        } else {
            None
        }
    }

    pub fn is_constant(&self) -> Option<Rat> {
        self.is_polynomial().and_then(|p| p.is_constant())
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = self.num.vars();
        out.extend(self.den.vars());
        out
    }

    pub fn add(&self, other: &RatExpr) -> RatExpr {
        let num = self
            .num
            .mul(&other.den)
            .add(&other.num.mul(&self.den));
        let den = self.den.mul(&other.den);
        let mut out = RatExpr {
            num,
            den,
            den_positive: self.den_positive && other.den_positive,
        };
        out.fold_constant_den();
        out
    }

    pub fn neg(&self) -> RatExpr {
        RatExpr {
            num: self.num.neg(),
            den: self.den.clone(),
            den_positive: self.den_positive,
        }
    }

    pub fn sub(&self, other: &RatExpr) -> RatExpr {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &RatExpr) -> RatExpr {
        let mut out = RatExpr {
            num: self.num.mul(&other.num),
            den: self.den.mul(&other.den),
            den_positive: self.den_positive && other.den_positive,
        };
        out.fold_constant_den();
        out
    }

    pub fn scale(&self, c: &Rat) -> RatExpr {
        RatExpr {
            num: self.num.scale(c),
            den: self.den.clone(),
            den_positive: self.den_positive,
        }
    }

    /// Multiplicative inverse. Errors when the numerator is the zero
    /// expression or carries abs factors (the new denominator must stay
    /// abs-free).
    pub fn recip(&self, ctx: &SignContext) -> Result<RatExpr, ExprError> {
        let num = self.num.normalize(ctx);
        if num.is_zero() {
            return Err(ExprError::ZeroDenominator);
        }
        if !num.is_abs_free() {
            return Err(ExprError::SubstitutionOutOfClass(format!(
                "inverse of {num} leaves the class"
            )));
        }
        let mut out = RatExpr {
            num: self.den.clone(),
            den: num,
            den_positive: false,
        };
        out.fold_constant_den();
        Ok(out.normalized(ctx))
    }

    pub fn div(&self, other: &RatExpr, ctx: &SignContext) -> Result<RatExpr, ExprError> {
        Ok(self.mul(&other.recip(ctx)?))
    }

    /// Canonical form on a cell: numerator and denominator normalized, the
    /// denominator scaled to leading coefficient of magnitude one, and signs
    /// flipped so a provably negative denominator becomes positive.
    pub fn normalized(&self, ctx: &SignContext) -> RatExpr {
        let mut num = self.num.normalize(ctx);
        let mut den = self.den.normalize(ctx);
        if den.is_zero() {
            // The denominator vanished under the context (e.g. pinned var);
            // keep it structurally, the invariant is enforced at use sites.
            den = self.den.clone();
        }
        let mut den_positive = self.den_positive;
        if let Some((_, lead)) = den.terms.iter().next() {
            let scale = Rat::one() / rat_abs(lead);
            num = num.scale(&scale);
            den = den.scale(&scale);
        }
        if den.definitely_negative(ctx) {
            num = num.neg();
            den = den.neg();
        }
        if den.definitely_positive(ctx) {
            den_positive = true;
        }
        let mut out = RatExpr {
            num,
            den,
            den_positive,
        };
        out.fold_constant_den();
        out
    }

    /// Verifies `den > 0` at the given sample points and records the result
    /// in the `den_positive` flag.
    pub fn check_den_positive_at(
        &mut self,
        samples: &[BTreeMap<Var, Rat>],
    ) -> Result<(), ExprError> {
        for point in samples {
            let v = self.den.eval(point)?;
            if !v.is_positive() {
                self.den_positive = false;
                let s = point
                    .iter()
                    .map(|(k, x)| format!("{}={}", k, rat_display(x)))
                    .collect::<Vec<_>>()
                    .join(", ");
                return Err(ExprError::DenominatorNotPositive(s));
            }
        }
        self.den_positive = true;
        Ok(())
    }

    pub fn eval(&self, point: &BTreeMap<Var, Rat>) -> Result<Rat, ExprError> {
        let d = self.den.eval(point)?;
        if d.is_zero() {
            return Err(ExprError::DivisionByZero);
        }
        Ok(self.num.eval(point)? / d)
    }

    /// Exact equality as functions on the cell: cross-multiplied difference
    /// normalizes to zero.
    pub fn equals_on(&self, other: &RatExpr, ctx: &SignContext) -> bool {
        self.num
            .mul(&other.den)
            .sub(&other.num.mul(&self.den))
            .normalize(ctx)
            .is_zero()
    }

    pub fn is_zero_on(&self, ctx: &SignContext) -> bool {
        self.num.normalize(ctx).is_zero()
    }

    /// Denominator provably nonvanishing on the cell.
    pub fn den_nonvanishing_on(&self, ctx: &SignContext) -> bool {
        self.den_positive
            || self.den.definitely_positive(ctx)
            || self.den.definitely_negative(ctx)
    }

    /// Smooth on the cell: abs-free numerator after normalization, over a
    /// nonvanishing abs-free denominator.
    pub fn is_smooth(&self, ctx: &SignContext) -> bool {
        self.num.is_smooth(ctx) && self.den_nonvanishing_on(ctx)
    }

    /// Smoothness with respect to a subset of variables (see
    /// [`AbsPoly::is_smooth_in`]); the denominator must still be
    /// nonvanishing on the cell.
    pub fn is_smooth_in(&self, vars: &BTreeSet<Var>, ctx: &SignContext) -> bool {
        self.num.is_smooth_in(vars, ctx) && self.den_nonvanishing_on(ctx)
    }

    pub fn abs_of(&self, ctx: &SignContext) -> Result<RatExpr, ExprError> {
        let num = self.num.abs_of(ctx)?;
        let den = if self.den_positive || self.den.definitely_positive(ctx) {
            self.den.clone()
        } else if self.den.definitely_negative(ctx) {
            self.den.neg()
        } else {
            self.den.abs_of(ctx)?
        };
        let mut out = RatExpr {
            num,
            den,
            den_positive: true,
        };
        out.fold_constant_den();
        Ok(out)
    }

    /// Composes with a substitution of rational expressions.
    pub fn substitute(
        &self,
        map: &BTreeMap<Var, RatExpr>,
        ctx: &SignContext,
    ) -> Result<RatExpr, ExprError> {
        let num = self.num.substitute_rat(map, ctx)?;
        let den = self.den.substitute_rat(map, ctx)?;
        num.div(&den, ctx)
    }
}

impl RatExpr {
    /// A single parser factor: one term built from at most one variable
    /// power with unit coefficient, or a bare constant.
    fn is_single_factor(p: &AbsPoly) -> bool {
        if p.terms.len() != 1 {
            return false;
        }
        let (key, coeff) = p.terms.iter().next().unwrap();
        if key.is_constant() {
            return !coeff.is_negative();
        }
        coeff.is_one() && key.abs.is_empty() && key.powers.len() == 1
    }
}

impl fmt::Display for RatExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_constant().map(|c| c.is_one()).unwrap_or(false) {
            write!(f, "{}", self.num)
        } else {
            let num = if self.num.terms.len() > 1 {
                format!("({})", self.num)
            } else {
                format!("{}", self.num)
            };
            let den = if Self::is_single_factor(&self.den) {
                format!("{}", self.den)
            } else {
                format!("({})", self.den)
            };
            write!(f, "{num} / {den}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{rat, rat_int};

    fn v(name: &str) -> Var {
        Var::new(name)
    }

    #[test]
    fn abs_squared_reduces() {
        let u = v("u");
        let e = AbsPoly::abs_var(&u).mul(&AbsPoly::abs_var(&u));
        assert_eq!(e, AbsPoly::var(&u).mul(&AbsPoly::var(&u)));
        assert!(e.is_abs_free());
    }

    #[test]
    fn cancellation_gives_zero() {
        let u = v("u");
        let w = v("w");
        let t = AbsPoly::var(&u).mul(&AbsPoly::abs_var(&w));
        let e = t.add(&t.neg());
        assert!(e.is_zero());
    }

    #[test]
    fn sign_substitution_in_normalize() {
        let u = v("u");
        let ctx = SignContext::empty().with(u.clone(), Sign::Neg);
        let e = AbsPoly::abs_var(&u).normalize(&ctx);
        assert_eq!(e, AbsPoly::var(&u).neg());

        let ctx = SignContext::empty().with(u.clone(), Sign::Pos);
        assert_eq!(AbsPoly::abs_var(&u).normalize(&ctx), AbsPoly::var(&u));

        let ctx = SignContext::empty().with(u.clone(), Sign::Zero);
        assert!(AbsPoly::abs_var(&u).normalize(&ctx).is_zero());
    }

    #[test]
    fn smoothness_decision() {
        let u = v("u");
        let w = v("w");
        let ctx = SignContext::empty();
        assert!(AbsPoly::var(&u).is_smooth(&ctx));
        assert!(!AbsPoly::abs_var(&w).is_smooth(&ctx));
        assert!(!AbsPoly::var(&u).mul(&AbsPoly::abs_var(&w)).is_smooth(&ctx));
        // u^2 + abs(u)^2 reduces to 2u^2
        let e = AbsPoly::var(&u)
            .pow(2)
            .add(&AbsPoly::abs_var(&u).mul(&AbsPoly::abs_var(&u)));
        assert!(e.is_smooth(&ctx));
        assert_eq!(e, AbsPoly::var(&u).pow(2).scale(&rat_int(2)));
    }

    #[test]
    fn substitution_examples() {
        let u = v("u");
        let w = v("w");
        let ctx = SignContext::empty();
        let e = AbsPoly::var(&u).mul(&AbsPoly::abs_var(&w));

        let mut map = BTreeMap::new();
        map.insert(w.clone(), AbsPoly::one());
        assert_eq!(e.substitute(&map, &ctx).unwrap(), AbsPoly::var(&u));

        let mut map = BTreeMap::new();
        map.insert(u.clone(), AbsPoly::zero());
        assert!(e.substitute(&map, &ctx).unwrap().is_zero());

        let mut map = BTreeMap::new();
        map.insert(
            w.clone(),
            AbsPoly::var(&u).add(&AbsPoly::var(&v("t"))),
        );
        assert!(matches!(
            e.substitute(&map, &ctx),
            Err(ExprError::SubstitutionOutOfClass(_))
        ));
    }

    #[test]
    fn substitution_single_term_stays_in_class() {
        // abs(-2 w^2 abs(t)) = 2 w^2 abs(t)
        let w = v("w");
        let t = v("t");
        let ctx = SignContext::empty();
        let inner = AbsPoly::var(&w)
            .pow(2)
            .mul(&AbsPoly::abs_var(&t))
            .scale(&rat_int(-2));
        let out = inner.abs_of(&ctx).unwrap();
        let expected = AbsPoly::var(&w)
            .pow(2)
            .mul(&AbsPoly::abs_var(&t))
            .scale(&rat_int(2));
        assert_eq!(out, expected);
    }

    #[test]
    fn eval_examples() {
        let u = v("u");
        let w = v("w");
        let e = RatExpr::from_poly(AbsPoly::var(&u).mul(&AbsPoly::abs_var(&w)));
        let mut p = BTreeMap::new();
        p.insert(u.clone(), rat_int(2));
        p.insert(w.clone(), rat_int(-3));
        assert_eq!(e.eval(&p).unwrap(), rat_int(6));

        let e = RatExpr::from_poly(AbsPoly::var(&u).pow(2));
        let mut p = BTreeMap::new();
        p.insert(u.clone(), rat(1, 2));
        assert_eq!(e.eval(&p).unwrap(), rat(1, 4));

        let e = RatExpr::new(AbsPoly::one(), AbsPoly::var(&u)).unwrap();
        let mut p = BTreeMap::new();
        p.insert(u.clone(), rat_int(0));
        assert!(matches!(e.eval(&p), Err(ExprError::DivisionByZero)));
    }

    #[test]
    fn rational_composition_inverts() {
        // composing y -> 1/y with x -> 1/x gives back x on a sign-definite cell
        let x = v("x");
        let y = v("y");
        let ctx = SignContext::empty().with(x.clone(), Sign::Pos);
        let f = RatExpr::new(AbsPoly::one(), AbsPoly::var(&x)).unwrap();
        let g = RatExpr::new(AbsPoly::one(), AbsPoly::var(&y)).unwrap();
        let mut map = BTreeMap::new();
        map.insert(y.clone(), f);
        let comp = g.substitute(&map, &ctx).unwrap();
        assert!(comp.equals_on(&RatExpr::var(&x), &ctx));
    }

    #[test]
    fn den_positivity_is_checked() {
        let x = v("x");
        let mut e = RatExpr::new(AbsPoly::one(), AbsPoly::var(&x)).unwrap();
        let mut good = BTreeMap::new();
        good.insert(x.clone(), rat_int(2));
        assert!(e.check_den_positive_at(&[good]).is_ok());
        assert!(e.den_positive());
        let mut bad = BTreeMap::new();
        bad.insert(x.clone(), rat_int(-1));
        assert!(e.check_den_positive_at(&[bad]).is_err());
        assert!(!e.den_positive());
    }
}
