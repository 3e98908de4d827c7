//! Alphabets, neighborhoods and local rules, with permutivity testing.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};

use num_integer::Integer;
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{CompileError, Expr, Program};
use crate::point::Point;

pub type Symbol = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("alphabet size must be at least 2, got {0}")]
    InvalidAlphabet(u32),
    #[error("neighborhood must be nonempty")]
    EmptyNeighborhood,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("offset {offset} has {got} coordinates, expected {expected}")]
    ArityMismatch { offset: Point, expected: usize, got: usize },
    #[error("duplicate offset {0}")]
    DuplicateOffset(Point),
    #[error("unknown variable {0}: not an offset of the neighborhood")]
    UnknownVariable(Point),
    #[error("pattern is missing offset {0}")]
    IncompletePattern(Point),
    #[error("symbol {symbol} outside alphabet 0..{m}")]
    SymbolOutOfRange { symbol: Symbol, m: u32 },
    #[error("operation needs a linear rule")]
    WrongRepresentation,
    #[error("enumeration of {m}^{cells} exceeds the budget of {budget}")]
    BudgetExceeded { m: u32, cells: usize, budget: u64 },
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// The alphabet `{0, …, m-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Alphabet(u32);

impl Alphabet {
    pub fn new(m: u32) -> Result<Self, RuleError> {
        if m < 2 {
            return Err(RuleError::InvalidAlphabet(m));
        }
        Ok(Alphabet(m))
    }

    pub fn size(self) -> u32 {
        self.0
    }

    pub fn check(self, s: Symbol) -> Result<Symbol, RuleError> {
        if s < self.0 {
            Ok(s)
        } else {
            Err(RuleError::SymbolOutOfRange { symbol: s, m: self.0 })
        }
    }
}

/// Cap on the number of assignments a brute-force routine may enumerate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget(pub u64);

impl Default for Budget {
    fn default() -> Self {
        Budget(1 << 28)
    }
}

impl Budget {
    /// `m^cells`, or `None` when it exceeds the budget.
    pub fn allows(self, m: u32, cells: usize) -> Option<u64> {
        let total = (m as u64).checked_pow(cells as u32)?;
        (total <= self.0).then_some(total)
    }

    pub fn check(self, m: u32, cells: usize) -> Result<u64, RuleError> {
        self.allows(m, cells)
            .ok_or(RuleError::BudgetExceeded { m, cells, budget: self.0 })
    }
}

/// Finite set of offsets in `Z^d`, stored sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Neighborhood {
    dim: usize,
    offsets: Vec<Point>,
}

impl Neighborhood {
    pub fn new(dim: usize, offsets: Vec<Point>) -> Result<Self, RuleError> {
        if dim == 0 {
            return Err(RuleError::ZeroDimension);
        }
        if offsets.is_empty() {
            return Err(RuleError::EmptyNeighborhood);
        }
        for o in &offsets {
            if o.dim() != dim {
                return Err(RuleError::ArityMismatch {
                    offset: o.clone(),
                    expected: dim,
                    got: o.dim(),
                });
            }
        }
        let mut offsets = offsets;
        offsets.sort();
        if let Some(w) = offsets.windows(2).find(|w| w[0] == w[1]) {
            return Err(RuleError::DuplicateOffset(w[0].clone()));
        }
        Ok(Neighborhood { dim, offsets })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[Point] {
        &self.offsets
    }

    pub fn slot_of(&self, p: &Point) -> Option<usize> {
        self.offsets.binary_search(p).ok()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.slot_of(p).is_some()
    }

    /// Per-axis `(min, max)` of the offsets.
    pub fn extent(&self) -> Vec<(i64, i64)> {
        (0..self.dim)
            .map(|j| {
                let it = self.offsets.iter().map(|o| o.get(j));
                (it.clone().min().unwrap(), it.max().unwrap())
            })
            .collect()
    }
}

/// Assignment of symbols to a finite set of coordinates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PatternAssignment(BTreeMap<Point, Symbol>);

impl PatternAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, p: Point, s: Symbol) -> &mut Self {
        self.0.insert(p, s);
        self
    }

    pub fn get(&self, p: &Point) -> Option<Symbol> {
        self.0.get(p).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, &Symbol)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(Point, Symbol)> for PatternAssignment {
    fn from_iter<I: IntoIterator<Item = (Point, Symbol)>>(iter: I) -> Self {
        PatternAssignment(iter.into_iter().collect())
    }
}

#[derive(Clone, Debug)]
pub struct ExprBody {
    expr: Expr,
    program: Program,
}

impl ExprBody {
    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

#[derive(Clone, Debug)]
pub enum RuleBody {
    /// Coefficients aligned with the neighborhood's offsets, each in `0..m`.
    Linear(Vec<Symbol>),
    Expr(ExprBody),
}

/// A local rule `f: A^D -> A`.
#[derive(Clone, Debug)]
pub struct LocalRule {
    alphabet: Alphabet,
    neighborhood: Neighborhood,
    body: RuleBody,
}

impl LocalRule {
    /// Linear rule `sum a_i x_i mod m`. Coefficients are reduced into `0..m`.
    pub fn linear(m: u32, dim: usize, terms: Vec<(Point, i64)>) -> Result<Self, RuleError> {
        let alphabet = Alphabet::new(m)?;
        let neighborhood =
            Neighborhood::new(dim, terms.iter().map(|(p, _)| p.clone()).collect())?;
        let mut coeffs = vec![0; neighborhood.len()];
        for (p, a) in terms {
            let slot = neighborhood.slot_of(&p).expect("offset present");
            coeffs[slot] = a.rem_euclid(m as i64) as Symbol;
        }
        Ok(LocalRule { alphabet, neighborhood, body: RuleBody::Linear(coeffs) })
    }

    /// Expression rule on the variables of `expr` plus any `extra` offsets it ignores.
    pub fn expr(m: u32, dim: usize, expr: Expr, extra: Vec<Point>) -> Result<Self, RuleError> {
        let alphabet = Alphabet::new(m)?;
        let mut offsets: Vec<Point> = expr.variables().into_iter().collect();
        for p in extra {
            if !offsets.contains(&p) {
                offsets.push(p);
            }
        }
        let neighborhood = Neighborhood::new(dim, offsets)?;
        Self::with_expr(alphabet, neighborhood, expr)
    }

    /// Expression rule on an explicit neighborhood.
    pub fn with_expr(
        alphabet: Alphabet,
        neighborhood: Neighborhood,
        expr: Expr,
    ) -> Result<Self, RuleError> {
        for v in expr.variables() {
            if v.dim() != neighborhood.dim() {
                return Err(RuleError::ArityMismatch {
                    expected: neighborhood.dim(),
                    got: v.dim(),
                    offset: v,
                });
            }
            if !neighborhood.contains(&v) {
                return Err(RuleError::UnknownVariable(v));
            }
        }
        let program = expr.compile(alphabet.size(), &|p| neighborhood.slot_of(p))?;
        Ok(LocalRule {
            alphabet,
            neighborhood,
            body: RuleBody::Expr(ExprBody { expr, program }),
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn m(&self) -> u32 {
        self.alphabet.size()
    }

    pub fn dim(&self) -> usize {
        self.neighborhood.dim()
    }

    pub fn neighborhood(&self) -> &Neighborhood {
        &self.neighborhood
    }

    pub fn body(&self) -> &RuleBody {
        &self.body
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.body, RuleBody::Linear(_))
    }

    /// `(offset, coefficient)` pairs of a linear rule.
    pub fn linear_terms(&self) -> Result<Vec<(Point, Symbol)>, RuleError> {
        match &self.body {
            RuleBody::Linear(c) => Ok(self
                .neighborhood
                .offsets()
                .iter()
                .cloned()
                .zip(c.iter().copied())
                .collect()),
            RuleBody::Expr(_) => Err(RuleError::WrongRepresentation),
        }
    }

    /// Evaluates on values given in neighborhood order.
    #[inline]
    pub fn eval_slots(&self, slots: &[Symbol]) -> Symbol {
        match &self.body {
            RuleBody::Linear(c) => {
                let m = self.m() as u64;
                let mut acc = 0u64;
                for (&a, &x) in c.iter().zip(slots) {
                    acc = (acc + a as u64 * x as u64) % m;
                }
                acc as Symbol
            }
            RuleBody::Expr(b) => b.program.eval(slots),
        }
    }

    pub fn evaluate(&self, pattern: &PatternAssignment) -> Result<Symbol, RuleError> {
        let slots = self
            .neighborhood
            .offsets()
            .iter()
            .map(|o| {
                let s = pattern
                    .get(o)
                    .ok_or_else(|| RuleError::IncompletePattern(o.clone()))?;
                self.alphabet.check(s)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.eval_slots(&slots))
    }

    /// Same rule on the neighborhood shifted by `v`.
    pub fn translated(&self, v: &Point) -> LocalRule {
        let neighborhood = Neighborhood::new(
            self.dim(),
            self.neighborhood.offsets().iter().map(|o| o.add(v)).collect(),
        )
        .expect("translation preserves validity");
        let body = match &self.body {
            // translation preserves the sort order, so slots line up
            RuleBody::Linear(c) => RuleBody::Linear(c.clone()),
            RuleBody::Expr(b) => {
                let expr = b.expr.map_vars(&|p| p.add(v));
                let program = expr
                    .compile(self.m(), &|p| neighborhood.slot_of(p))
                    .expect("translation preserves compilability");
                RuleBody::Expr(ExprBody { expr, program })
            }
        };
        LocalRule { alphabet: self.alphabet, neighborhood, body }
    }

    fn slot_checked(&self, offset: &Point) -> Result<usize, RuleError> {
        if offset.dim() != self.dim() {
            return Err(RuleError::ArityMismatch {
                offset: offset.clone(),
                expected: self.dim(),
                got: offset.dim(),
            });
        }
        self.neighborhood
            .slot_of(offset)
            .ok_or_else(|| RuleError::UnknownVariable(offset.clone()))
    }

    /// `g(a) = f(x^a)` for `a = 0..m`, with every other cell taken from `context`.
    pub fn local_map_at(
        &self,
        offset: &Point,
        context: &PatternAssignment,
    ) -> Result<Vec<Symbol>, RuleError> {
        let slot = self.slot_checked(offset)?;
        let mut slots = Vec::with_capacity(self.neighborhood.len());
        for (i, o) in self.neighborhood.offsets().iter().enumerate() {
            if i == slot {
                slots.push(0);
            } else {
                let s = context
                    .get(o)
                    .ok_or_else(|| RuleError::IncompletePattern(o.clone()))?;
                slots.push(self.alphabet.check(s)?);
            }
        }
        Ok((0..self.m())
            .map(|a| {
                slots[slot] = a;
                self.eval_slots(&slots)
            })
            .collect())
    }

    /// Exhaustive permutivity test at `offset` over all `m^(|D|-1)` contexts.
    pub fn is_permutive_at(&self, offset: &Point, budget: Budget) -> Result<bool, RuleError> {
        let slot = self.slot_checked(offset)?;
        budget.check(self.m(), self.neighborhood.len())?;
        Ok(self.brute_force_permutive(slot))
    }

    fn brute_force_permutive(&self, slot: usize) -> bool {
        let m = self.m();
        let n = self.neighborhood.len();
        let contexts = (m as u64).pow(n as u32 - 1);
        const CHUNK: u64 = 1 << 12;
        let chunks = contexts.div_ceil(CHUNK);
        let failed = AtomicBool::new(false);
        (0..chunks).into_par_iter().all(|chunk| {
            if failed.load(Ordering::Relaxed) {
                return false;
            }
            let start = chunk * CHUNK;
            let end = (start + CHUNK).min(contexts);
            let mut slots = vec![0 as Symbol; n];
            // other slots, least significant first
            let others: Vec<usize> = (0..n).filter(|&i| i != slot).collect();
            let mut rest = start;
            for &i in &others {
                slots[i] = (rest % m as u64) as Symbol;
                rest /= m as u64;
            }
            let mut seen = vec![0u64; (m as usize).div_ceil(64)];
            for _ in start..end {
                seen.iter_mut().for_each(|w| *w = 0);
                for a in 0..m {
                    slots[slot] = a;
                    let out = self.eval_slots(&slots) as usize;
                    let (w, b) = (out / 64, out % 64);
                    if seen[w] >> b & 1 == 1 {
                        failed.store(true, Ordering::Relaxed);
                        return false;
                    }
                    seen[w] |= 1 << b;
                }
                for &i in &others {
                    slots[i] += 1;
                    if slots[i] < m {
                        break;
                    }
                    slots[i] = 0;
                }
            }
            true
        })
    }

    /// Permutivity of a linear rule via `gcd(a, m) = 1`.
    pub fn linear_is_permutive_at(&self, offset: &Point) -> Result<bool, RuleError> {
        let slot = self.slot_checked(offset)?;
        match &self.body {
            RuleBody::Linear(c) => Ok(c[slot].gcd(&self.m()) == 1),
            RuleBody::Expr(_) => Err(RuleError::WrongRepresentation),
        }
    }

    /// Every offset at which the rule is permutive, in neighborhood order.
    ///
    /// Linear rules use the gcd criterion; expression rules are enumerated.
    pub fn permutive_offsets(&self, budget: Budget) -> Result<Vec<Point>, RuleError> {
        if self.is_linear() {
            return Ok(self
                .neighborhood
                .offsets()
                .iter()
                .filter(|o| self.linear_is_permutive_at(o).unwrap_or(false))
                .cloned()
                .collect());
        }
        self.permutive_offsets_brute_force(budget)
    }

    /// Enumerative permutivity at every offset regardless of representation.
    pub fn permutive_offsets_brute_force(&self, budget: Budget) -> Result<Vec<Point>, RuleError> {
        budget.check(self.m(), self.neighborhood.len())?;
        Ok(self
            .neighborhood
            .offsets()
            .iter()
            .enumerate()
            .filter(|(slot, _)| self.brute_force_permutive(*slot))
            .map(|(_, o)| o.clone())
            .collect())
    }
}
