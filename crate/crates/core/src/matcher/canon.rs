//! Expansion of expressions into a rational-function normal form.
//!
//! A value is `numerator / product(factor_i ^ k_i)` where the numerator is an
//! expanded polynomial with rational coefficients and every denominator factor
//! is either a single variable or a primitive polynomial (integer
//! coefficients with gcd 1, positive leading coefficient, no monomial
//! content). Common factors between numerator and denominator are never
//! cancelled: `x/x` stays `x/x` and is reported as conditional.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use super::expr::ExprNode;

pub const DEFAULT_DEGREE_BOUND: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonError {
    #[error("total degree exceeds bound {bound}")]
    DegreeOverflow { bound: u32 },
    #[error("division by an expression that is identically zero")]
    DivisionByZero,
    #[error("exponent must be a constant integer")]
    NonIntegerExponent,
}

/// Sorted (variable, exponent) pairs; exponents are positive.
pub type Monomial = Vec<(String, u32)>;

fn mono_degree(m: &Monomial) -> u32 {
    m.iter().map(|(_, e)| e).sum()
}

fn mono_mul(a: &Monomial, b: &Monomial) -> Monomial {
    let mut map: BTreeMap<String, u32> = a.iter().cloned().collect();
    for (v, e) in b {
        *map.entry(v.clone()).or_insert(0) += e;
    }
    map.into_iter().collect()
}

/// `a / b` when `b` divides `a`.
fn mono_div(a: &Monomial, b: &Monomial) -> Option<Monomial> {
    let mut map: BTreeMap<String, u32> = a.iter().cloned().collect();
    for (v, e) in b {
        let slot = map.get_mut(v)?;
        if *slot < *e {
            return None;
        }
        *slot -= e;
    }
    Some(map.into_iter().filter(|(_, e)| *e > 0).collect())
}

/// Graded order: higher total degree first, then lexicographic on the
/// (variable, exponent) list with larger exponents of earlier variables first.
pub fn term_order(a: &Monomial, b: &Monomial) -> Ordering {
    mono_degree(b).cmp(&mono_degree(a)).then_with(|| {
        for (x, y) in a.iter().zip(b.iter()) {
            let ord = x.0.cmp(&y.0).then_with(|| y.1.cmp(&x.1));
            if ord != Ordering::Equal {
                return ord;
            }
        }
        b.len().cmp(&a.len())
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, BigRational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(Vec::new(), c);
        }
        p
    }

    pub fn one() -> Self {
        Poly::constant(BigRational::one())
    }

    pub fn var(name: &str) -> Self {
        let mut p = Poly::zero();
        p.terms.insert(vec![(name.to_string(), 1)], BigRational::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(mono_degree).max().unwrap_or(0)
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => self.terms.get(&Vec::new()).cloned(),
            _ => None,
        }
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(m.clone()).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn scale(&self, k: &BigRational) -> Poly {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly, bound: u32) -> Result<Poly, CanonError> {
        if !self.is_zero() && !other.is_zero() && self.degree() + other.degree() > bound {
            return Err(CanonError::DegreeOverflow { bound });
        }
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(mono_mul(ma, mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn pow(&self, k: u32, bound: u32) -> Result<Poly, CanonError> {
        let mut out = Poly::one();
        for _ in 0..k {
            out = out.mul(self, bound)?;
        }
        Ok(out)
    }

    /// Terms sorted by [`term_order`].
    pub fn sorted_terms(&self) -> Vec<(&Monomial, &BigRational)> {
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|a, b| term_order(a.0, b.0));
        terms
    }

    fn leading(&self) -> Option<(&Monomial, &BigRational)> {
        self.sorted_terms().into_iter().next()
    }

    /// True when `divisor` divides `self` exactly. A single divisor forms a
    /// Groebner basis of its ideal, so a zero remainder decides membership.
    pub fn divisible_by(&self, divisor: &Poly) -> bool {
        let Some((lm_d, lc_d)) = divisor.leading() else {
            return false;
        };
        let (lm_d, lc_d) = (lm_d.clone(), lc_d.clone());
        let mut rest = self.clone();
        while let Some((lm, lc)) = rest.leading() {
            let (lm, lc) = (lm.clone(), lc.clone());
            let Some(q) = mono_div(&lm, &lm_d) else {
                return false;
            };
            let coef = &lc / &lc_d;
            let mut sub = Poly::zero();
            for (m, c) in &divisor.terms {
                sub.add_term(mono_mul(m, &q), c * &coef);
            }
            rest = rest.add(&sub.neg());
        }
        true
    }

    /// Splits `self` into `constant * monomial * primitive`.
    fn decompose(&self) -> (BigRational, Monomial, Poly) {
        debug_assert!(!self.is_zero());
        // monomial content: minimum exponent of each variable over all terms
        let mut content: Option<BTreeMap<String, u32>> = None;
        for m in self.terms.keys() {
            let here: BTreeMap<String, u32> = m.iter().cloned().collect();
            content = Some(match content {
                None => here,
                Some(prev) => prev
                    .into_iter()
                    .filter_map(|(v, e)| here.get(&v).map(|h| (v, e.min(*h))))
                    .collect(),
            });
        }
        let content: Monomial = content
            .unwrap_or_default()
            .into_iter()
            .filter(|(_, e)| *e > 0)
            .collect();
        let mut reduced = Poly::zero();
        for (m, c) in &self.terms {
            reduced.add_term(mono_div(m, &content).expect("content divides"), c.clone());
        }
        let denom_lcm = reduced.terms.values().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let numer_gcd = reduced
            .terms
            .values()
            .fold(BigInt::zero(), |acc, c| acc.gcd(&(c * &denom_lcm).to_integer()));
        let mut constant = BigRational::new(numer_gcd, denom_lcm);
        if reduced.leading().map(|(_, c)| c.is_negative()).unwrap_or(false) {
            constant = -constant;
        }
        let primitive = reduced.scale(&constant.recip());
        (constant, content, primitive)
    }
}

/// Product of factors with multiplicities; keys are normalized factors.
type FactorSet = BTreeMap<Poly, u32>;

fn merge_add(a: &FactorSet, b: &FactorSet) -> FactorSet {
    let mut out = a.clone();
    for (f, k) in b {
        *out.entry(f.clone()).or_insert(0) += k;
    }
    out
}

fn merge_max(a: &FactorSet, b: &FactorSet) -> FactorSet {
    let mut out = a.clone();
    for (f, k) in b {
        let slot = out.entry(f.clone()).or_insert(0);
        *slot = (*slot).max(*k);
    }
    out
}

fn factor_product(set: &FactorSet, bound: u32) -> Result<Poly, CanonError> {
    let mut out = Poly::one();
    for (f, k) in set {
        out = out.mul(&f.pow(*k, bound)?, bound)?;
    }
    Ok(out)
}

/// `constant * product(factors)` for a nonzero polynomial.
fn normalize_factors(p: &Poly) -> (BigRational, FactorSet) {
    let (constant, content, primitive) = p.decompose();
    let mut set = FactorSet::new();
    for (v, e) in content {
        set.insert(Poly::var(&v), e);
    }
    if primitive.as_constant().is_none() {
        set.insert(primitive, 1);
    }
    (constant, set)
}

#[derive(Debug, Clone)]
struct RatFn {
    num: Poly,
    /// Known factorization of `num` when it was built multiplicatively.
    num_factors: Option<(BigRational, FactorSet)>,
    den: FactorSet,
}

impl RatFn {
    fn poly(p: Poly) -> Self {
        RatFn {
            num: p,
            num_factors: None,
            den: FactorSet::new(),
        }
    }

    fn factors_of_num(&self) -> (BigRational, FactorSet) {
        match &self.num_factors {
            Some(f) => f.clone(),
            None => normalize_factors(&self.num),
        }
    }
}

/// Result of [`canonicalize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canonical {
    pub expr: ExprNode,
    /// Some denominator factor divides the numerator, so the value equals a
    /// simpler expression except where that factor vanishes.
    pub conditional: bool,
    numerator: Poly,
    denominator: Vec<(Poly, u32)>,
}

impl Canonical {
    /// Structural equality of the normal forms.
    pub fn same_form(&self, other: &Canonical) -> bool {
        self.numerator == other.numerator && self.denominator == other.denominator
    }
}

pub fn canonicalize(e: &ExprNode) -> Result<Canonical, CanonError> {
    canonicalize_with_bound(e, DEFAULT_DEGREE_BOUND)
}

pub fn canonicalize_with_bound(e: &ExprNode, bound: u32) -> Result<Canonical, CanonError> {
    let r = to_ratfn(e, bound)?;
    let conditional = r.den.keys().any(|f| r.num.divisible_by(f));
    let expr = emit(&r);
    Ok(Canonical {
        expr,
        conditional,
        numerator: r.num,
        denominator: r.den.into_iter().collect(),
    })
}

fn check_degree(p: &Poly, bound: u32) -> Result<(), CanonError> {
    if p.degree() > bound {
        Err(CanonError::DegreeOverflow { bound })
    } else {
        Ok(())
    }
}

fn add_ratfn(a: &RatFn, b: &RatFn, bound: u32) -> Result<RatFn, CanonError> {
    let lcm = merge_max(&a.den, &b.den);
    let scale_for = |den: &FactorSet| -> Result<Poly, CanonError> {
        let mut missing = FactorSet::new();
        for (f, k) in &lcm {
            let have = den.get(f).copied().unwrap_or(0);
            if *k > have {
                missing.insert(f.clone(), k - have);
            }
        }
        factor_product(&missing, bound)
    };
    let num = a
        .num
        .mul(&scale_for(&a.den)?, bound)?
        .add(&b.num.mul(&scale_for(&b.den)?, bound)?);
    check_degree(&num, bound)?;
    Ok(RatFn {
        num,
        num_factors: None,
        den: lcm,
    })
}

fn mul_ratfn(a: &RatFn, b: &RatFn, bound: u32) -> Result<RatFn, CanonError> {
    let num = a.num.mul(&b.num, bound)?;
    let num_factors = if num.is_zero() {
        None
    } else {
        let (ca, fa) = a.factors_of_num();
        let (cb, fb) = b.factors_of_num();
        Some((ca * cb, merge_add(&fa, &fb)))
    };
    Ok(RatFn {
        num,
        num_factors,
        den: merge_add(&a.den, &b.den),
    })
}

fn div_ratfn(a: &RatFn, b: &RatFn, bound: u32) -> Result<RatFn, CanonError> {
    if b.num.is_zero() {
        return Err(CanonError::DivisionByZero);
    }
    let (constant, factors) = b.factors_of_num();
    // a / (c * F / D) = (a.num * D / c) / (a.den * F)
    let num = a
        .num
        .mul(&factor_product(&b.den, bound)?, bound)?
        .scale(&constant.recip());
    let num_factors = if num.is_zero() {
        None
    } else {
        let (ca, fa) = a.factors_of_num();
        Some((ca / &constant, merge_add(&fa, &b.den)))
    };
    let den = merge_add(&a.den, &factors);
    for f in den.keys() {
        check_degree(f, bound)?;
    }
    Ok(RatFn { num, num_factors, den })
}

fn to_ratfn(e: &ExprNode, bound: u32) -> Result<RatFn, CanonError> {
    match e {
        ExprNode::Num(v) => Ok(RatFn {
            num: Poly::constant(v.clone()),
            num_factors: if v.is_zero() {
                None
            } else {
                Some((v.clone(), FactorSet::new()))
            },
            den: FactorSet::new(),
        }),
        ExprNode::Var(name) => Ok(RatFn {
            num: Poly::var(name),
            num_factors: Some((BigRational::one(), [(Poly::var(name), 1)].into())),
            den: FactorSet::new(),
        }),
        ExprNode::Neg(inner) => {
            let mut r = to_ratfn(inner, bound)?;
            r.num = r.num.neg();
            if let Some((c, _)) = r.num_factors.as_mut() {
                *c = -c.clone();
            }
            Ok(r)
        }
        ExprNode::Add(items) => {
            let mut acc = RatFn::poly(Poly::zero());
            for item in items {
                acc = add_ratfn(&acc, &to_ratfn(item, bound)?, bound)?;
            }
            Ok(acc)
        }
        ExprNode::Sub(a, b) => {
            let mut rb = to_ratfn(b, bound)?;
            rb.num = rb.num.neg();
            rb.num_factors = None;
            add_ratfn(&to_ratfn(a, bound)?, &rb, bound)
        }
        ExprNode::Mul(items) => {
            let mut acc = RatFn {
                num: Poly::one(),
                num_factors: Some((BigRational::one(), FactorSet::new())),
                den: FactorSet::new(),
            };
            for item in items {
                acc = mul_ratfn(&acc, &to_ratfn(item, bound)?, bound)?;
            }
            Ok(acc)
        }
        ExprNode::Div(a, b) => div_ratfn(&to_ratfn(a, bound)?, &to_ratfn(b, bound)?, bound),
        ExprNode::Pow(base, exp) => {
            let exp = to_ratfn(exp, bound)?;
            let k = match (exp.den.is_empty(), exp.num.as_constant()) {
                (true, Some(c)) if c.is_integer() => c.to_integer(),
                _ => return Err(CanonError::NonIntegerExponent),
            };
            let base = to_ratfn(base, bound)?;
            let k_abs = k
                .abs()
                .to_u32()
                .filter(|k| *k <= 4 * bound.max(1))
                .ok_or(CanonError::DegreeOverflow { bound })?;
            let mut acc = RatFn {
                num: Poly::one(),
                num_factors: Some((BigRational::one(), FactorSet::new())),
                den: FactorSet::new(),
            };
            for _ in 0..k_abs {
                acc = mul_ratfn(&acc, &base, bound)?;
            }
            if k.is_negative() {
                div_ratfn(&RatFn::poly(Poly::one()), &acc, bound)
            } else {
                Ok(acc)
            }
        }
    }
}

fn emit_poly(p: &Poly) -> ExprNode {
    let terms: Vec<ExprNode> = p
        .sorted_terms()
        .into_iter()
        .map(|(m, c)| {
            let mut factors = Vec::new();
            if m.is_empty() || !c.is_one() {
                factors.push(ExprNode::Num(c.clone()));
            }
            for (v, e) in m {
                let var = ExprNode::Var(v.clone());
                factors.push(if *e == 1 {
                    var
                } else {
                    ExprNode::pow(var, ExprNode::int(*e as i64))
                });
            }
            if factors.len() == 1 {
                factors.pop().unwrap()
            } else {
                ExprNode::Mul(factors)
            }
        })
        .collect();
    match terms.len() {
        0 => ExprNode::int(0),
        1 => terms.into_iter().next().unwrap(),
        _ => ExprNode::Add(terms),
    }
}

fn emit(r: &RatFn) -> ExprNode {
    let num = emit_poly(&r.num);
    if r.den.is_empty() {
        return num;
    }
    let mut factors: Vec<(&Poly, &u32)> = r.den.iter().collect();
    factors.sort_by(|a, b| {
        let ka =
            a.0.sorted_terms()
                .into_iter()
                .map(|(m, _)| m.clone())
                .collect::<Vec<_>>();
        let kb =
            b.0.sorted_terms()
                .into_iter()
                .map(|(m, _)| m.clone())
                .collect::<Vec<_>>();
        ka.iter()
            .zip(kb.iter())
            .map(|(x, y)| term_order(x, y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or_else(|| ka.len().cmp(&kb.len()))
            .then_with(|| a.0.cmp(b.0))
    });
    let parts: Vec<ExprNode> = factors
        .into_iter()
        .map(|(f, k)| {
            let base = emit_poly(f);
            if *k == 1 {
                base
            } else {
                ExprNode::pow(base, ExprNode::int(*k as i64))
            }
        })
        .collect();
    let den = if parts.len() == 1 {
        parts.into_iter().next().unwrap()
    } else {
        ExprNode::Mul(parts)
    };
    ExprNode::div(num, den)
}
