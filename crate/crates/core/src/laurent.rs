//! Sparse Laurent polynomials over `Z_m` and iteration of linear rules.
//!
//! A linear rule `sum a_j x_j` corresponds to the polynomial `sum a_j x^(-j)`;
//! the `n`-th iterate of the rule corresponds to the `n`-th power.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::point::Point;
use crate::rule::{LocalRule, RuleError, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LaurentError {
    #[error("operands differ: d={0}/{1}, m={2}/{3}")]
    Incompatible(usize, usize, u32, u32),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

/// Finitely supported map from exponent vectors to nonzero coefficients mod `m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LaurentPoly {
    dim: usize,
    modulus: u32,
    terms: BTreeMap<Point, Symbol>,
}

impl LaurentPoly {
    pub fn zero(dim: usize, modulus: u32) -> Self {
        LaurentPoly { dim, modulus, terms: BTreeMap::new() }
    }

    pub fn one(dim: usize, modulus: u32) -> Self {
        Self::monomial(Point::origin(dim), 1, modulus)
    }

    pub fn monomial(exp: Point, coeff: i64, modulus: u32) -> Self {
        let mut p = Self::zero(exp.dim(), modulus);
        p.add_term(exp, coeff);
        p
    }

    pub fn from_terms(dim: usize, modulus: u32, terms: impl IntoIterator<Item = (Point, i64)>) -> Self {
        let mut p = Self::zero(dim, modulus);
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, exp: Point, coeff: i64) {
        debug_assert_eq!(exp.dim(), self.dim);
        let m = self.modulus as i64;
        let cur = self.terms.get(&exp).copied().unwrap_or(0) as i64;
        let v = (cur + coeff).rem_euclid(m) as Symbol;
        if v == 0 {
            self.terms.remove(&exp);
        } else {
            self.terms.insert(exp, v);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, exp: &Point) -> Symbol {
        self.terms.get(exp).copied().unwrap_or(0)
    }

    /// Terms in lexicographic exponent order.
    pub fn terms(&self) -> impl Iterator<Item = (&Point, Symbol)> {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    pub fn support(&self) -> impl Iterator<Item = &Point> {
        self.terms.keys()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn check(&self, other: &Self) -> Result<(), LaurentError> {
        if self.dim != other.dim || self.modulus != other.modulus {
            return Err(LaurentError::Incompatible(self.dim, other.dim, self.modulus, other.modulus));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, LaurentError> {
        self.check(other)?;
        let mut out = self.clone();
        for (e, c) in other.terms() {
            out.add_term(e.clone(), c as i64);
        }
        Ok(out)
    }

    /// Convolution product reduced mod `m`.
    pub fn multiply(&self, other: &Self) -> Result<Self, LaurentError> {
        self.check(other)?;
        let m = self.modulus as u64;
        let mut acc: BTreeMap<Point, u64> = BTreeMap::new();
        for (e1, &c1) in &self.terms {
            for (e2, &c2) in &other.terms {
                let slot = acc.entry(e1.add(e2)).or_insert(0);
                *slot = (*slot + c1 as u64 * c2 as u64) % m;
            }
        }
        let terms = acc
            .into_iter()
            .filter(|(_, c)| *c != 0)
            .map(|(e, c)| (e, c as Symbol))
            .collect();
        Ok(LaurentPoly { dim: self.dim, modulus: self.modulus, terms })
    }

    /// `p^n` by repeated squaring; `p^0 = 1`.
    pub fn power(&self, mut n: u64) -> Self {
        let mut result = Self::one(self.dim, self.modulus);
        let mut base = self.clone();
        while n > 0 {
            if n & 1 == 1 {
                result = result.multiply(&base).expect("same ring");
            }
            n >>= 1;
            if n > 0 {
                base = base.multiply(&base).expect("same ring");
            }
        }
        result
    }
}

impl fmt::Display for LaurentPoly {
    /// `c * x^(e1,...,ed)` terms joined by ` + `, lexicographic by exponent.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{c} * x^{e}")?;
        }
        Ok(())
    }
}

/// The polynomial of a linear rule: coefficient `a_j` at exponent `-j`.
pub fn chi(rule: &LocalRule) -> Result<LaurentPoly, LaurentError> {
    let terms = rule.linear_terms()?;
    Ok(LaurentPoly::from_terms(
        rule.dim(),
        rule.m(),
        terms.into_iter().map(|(o, a)| (o.neg(), a as i64)),
    ))
}

/// The linear rule of a polynomial; the zero polynomial becomes `0 * x_0`.
pub fn chi_inverse(p: &LaurentPoly) -> LocalRule {
    let mut terms: Vec<(Point, i64)> = p.terms().map(|(e, c)| (e.neg(), c as i64)).collect();
    if terms.is_empty() {
        terms.push((Point::origin(p.dim()), 0));
    }
    LocalRule::linear(p.modulus(), p.dim(), terms).expect("polynomial support is a valid neighborhood")
}

/// Local rule of `F^n` for a linear rule.
pub fn iterated_rule(rule: &LocalRule, n: u64) -> Result<LocalRule, LaurentError> {
    Ok(chi_inverse(&chi(rule)?.power(n)))
}
