//! Expression trees for nonlinear local rules.
//!
//! Expressions are evaluated over the nonnegative integers and reduced mod `m`
//! once at the end. Evaluation never materialises the unbounded intermediate
//! integer: every node is computed modulo the smallest modulus its parent
//! needs. Sums, products and powers pass their modulus down unchanged, and
//! `floor(e, c)` asks its child for `e mod c*M`, which determines `floor(e/c) mod M`.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::point::Point;
use crate::rule::Symbol;

/// Abstract syntax tree of a rule expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Lit(u64),
    Var(Point),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    /// `base ^ exponent` with a literal exponent.
    Pow(Box<Expr>, u32),
    /// `floor(numerator / divisor)` with a literal positive divisor.
    FloorDiv(Box<Expr>, u64),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompileError {
    #[error("floordiv divisor must be positive")]
    ZeroDivisor,
    #[error("expression needs an intermediate modulus above 2^32 (nested floor divisors too large)")]
    ModulusOverflow,
    #[error("expression nests deeper than {0} operands")]
    TooDeep(usize),
    #[error("variable {0} is not in the neighborhood")]
    UnknownVariable(Point),
}

impl Expr {
    pub fn sum(terms: Vec<Expr>) -> Expr {
        Expr::Sum(terms)
    }

    pub fn product(factors: Vec<Expr>) -> Expr {
        Expr::Product(factors)
    }

    pub fn var(p: impl Into<Point>) -> Expr {
        Expr::Var(p.into())
    }

    pub fn pow(base: Expr, k: u32) -> Expr {
        Expr::Pow(Box::new(base), k)
    }

    pub fn floor_div(num: Expr, c: u64) -> Expr {
        Expr::FloorDiv(Box::new(num), c)
    }

    pub fn variables(&self) -> BTreeSet<Point> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Point>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(p) => {
                out.insert(p.clone());
            }
            Expr::Sum(xs) | Expr::Product(xs) => xs.iter().for_each(|x| x.collect_vars(out)),
            Expr::Pow(b, _) => b.collect_vars(out),
            Expr::FloorDiv(b, _) => b.collect_vars(out),
        }
    }

    /// Applies `f` to every variable index, e.g. to translate a neighborhood.
    pub fn map_vars(&self, f: &impl Fn(&Point) -> Point) -> Expr {
        match self {
            Expr::Lit(v) => Expr::Lit(*v),
            Expr::Var(p) => Expr::Var(f(p)),
            Expr::Sum(xs) => Expr::Sum(xs.iter().map(|x| x.map_vars(f)).collect()),
            Expr::Product(xs) => Expr::Product(xs.iter().map(|x| x.map_vars(f)).collect()),
            Expr::Pow(b, k) => Expr::Pow(Box::new(b.map_vars(f)), *k),
            Expr::FloorDiv(b, c) => Expr::FloorDiv(Box::new(b.map_vars(f)), *c),
        }
    }

    /// Compiles to a postfix program; `slot_of` maps a variable to its input slot.
    pub fn compile(
        &self,
        m: u32,
        slot_of: &impl Fn(&Point) -> Option<usize>,
    ) -> Result<Program, CompileError> {
        let mut ops = Vec::new();
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        self.emit(m as u64, slot_of, &mut ops, &mut depth, &mut max_depth)?;
        if max_depth > STACK {
            return Err(CompileError::TooDeep(STACK));
        }
        Ok(Program { ops, m, depth: max_depth })
    }

    fn emit(
        &self,
        modulus: u64,
        slot_of: &impl Fn(&Point) -> Option<usize>,
        ops: &mut Vec<Op>,
        depth: &mut usize,
        max_depth: &mut usize,
    ) -> Result<(), CompileError> {
        if modulus > u32::MAX as u64 {
            return Err(CompileError::ModulusOverflow);
        }
        let push = |depth: &mut usize, max_depth: &mut usize| {
            *depth += 1;
            *max_depth = (*max_depth).max(*depth);
        };
        match self {
            Expr::Lit(v) => {
                ops.push(Op::Lit(v % modulus));
                push(depth, max_depth);
            }
            Expr::Var(p) => {
                let slot = slot_of(p).ok_or_else(|| CompileError::UnknownVariable(p.clone()))?;
                ops.push(Op::Var(slot));
                push(depth, max_depth);
            }
            Expr::Sum(xs) | Expr::Product(xs) => {
                if xs.is_empty() {
                    let unit = if matches!(self, Expr::Sum(_)) { 0 } else { 1 };
                    ops.push(Op::Lit(unit % modulus));
                    push(depth, max_depth);
                    return Ok(());
                }
                for x in xs {
                    x.emit(modulus, slot_of, ops, depth, max_depth)?;
                }
                let n = xs.len() as u32;
                ops.push(if matches!(self, Expr::Sum(_)) {
                    Op::Add(n, modulus)
                } else {
                    Op::Mul(n, modulus)
                });
                *depth -= xs.len() - 1;
            }
            Expr::Pow(b, k) => {
                b.emit(modulus, slot_of, ops, depth, max_depth)?;
                ops.push(Op::Pow(*k, modulus));
            }
            Expr::FloorDiv(b, c) => {
                if *c == 0 {
                    return Err(CompileError::ZeroDivisor);
                }
                let inner = modulus.checked_mul(*c).ok_or(CompileError::ModulusOverflow)?;
                b.emit(inner, slot_of, ops, depth, max_depth)?;
                ops.push(Op::Floor(*c));
            }
        }
        Ok(())
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Sum(xs) if xs.len() > 1 => 0,
            Expr::Product(xs) if xs.len() > 1 => 1,
            Expr::Pow(..) => 2,
            _ => 3,
        }
    }

    fn fmt_child(&self, child: &Expr, f: &mut fmt::Formatter<'_>, strict: bool) -> fmt::Result {
        let (p, c) = (self.precedence(), child.precedence());
        if c < p || (strict && c == p) {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(p) => {
                f.write_str("x[")?;
                for (i, c) in p.coords().iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("]")
            }
            Expr::Sum(xs) | Expr::Product(xs) => {
                if xs.is_empty() {
                    return f.write_str(if matches!(self, Expr::Sum(_)) { "0" } else { "1" });
                }
                let sep = if matches!(self, Expr::Sum(_)) { " + " } else { "*" };
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    if xs.len() == 1 {
                        write!(f, "{x}")?;
                    } else {
                        self.fmt_child(x, f, false)?;
                    }
                }
                Ok(())
            }
            Expr::Pow(b, k) => {
                self.fmt_child(b, f, true)?;
                write!(f, "^{k}")
            }
            Expr::FloorDiv(b, c) => write!(f, "floor({b}, {c})"),
        }
    }
}

const STACK: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Op {
    Lit(u64),
    Var(usize),
    Add(u32, u64),
    Mul(u32, u64),
    Pow(u32, u64),
    Floor(u64),
}

/// Postfix program over neighborhood slots; evaluates to a symbol in `0..m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    ops: Vec<Op>,
    m: u32,
    depth: usize,
}

impl Program {
    #[inline]
    pub fn eval(&self, slots: &[Symbol]) -> Symbol {
        // a small stack keeps the per-call zeroing cheap
        match self.depth {
            0..=8 => self.run::<8>(slots),
            9..=32 => self.run::<32>(slots),
            _ => self.run::<STACK>(slots),
        }
    }

    fn run<const N: usize>(&self, slots: &[Symbol]) -> Symbol {
        let mut stack = [0u64; N];
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Lit(v) => {
                    stack[sp] = v;
                    sp += 1;
                }
                Op::Var(i) => {
                    stack[sp] = slots[i] as u64;
                    sp += 1;
                }
                Op::Add(n, md) => {
                    let base = sp - n as usize;
                    // operands are below md <= 2^32 and at most STACK of them are summed
                    let acc: u64 = stack[base..sp].iter().sum();
                    stack[base] = acc % md;
                    sp = base + 1;
                }
                Op::Mul(n, md) => {
                    let base = sp - n as usize;
                    let mut acc = 1 % md;
                    for &v in &stack[base..sp] {
                        acc = acc * (v % md) % md;
                    }
                    stack[base] = acc;
                    sp = base + 1;
                }
                Op::Pow(k, md) => {
                    stack[sp - 1] = pow_mod(stack[sp - 1] % md, k, md);
                }
                Op::Floor(c) => {
                    stack[sp - 1] /= c;
                }
            }
        }
        debug_assert_eq!(sp, 1);
        (stack[0] % self.m as u64) as Symbol
    }
}

fn pow_mod(mut base: u64, mut k: u32, md: u64) -> u64 {
    let mut acc = 1 % md;
    while k > 0 {
        if k & 1 == 1 {
            acc = acc * base % md;
        }
        base = base * base % md;
        k >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(vars: &[Point]) -> impl Fn(&Point) -> Option<usize> + '_ {
        move |p| vars.iter().position(|q| q == p)
    }

    #[test]
    fn late_reduction_through_floor() {
        // floor(2*a/3) + 3*a at a = 2 is 1 + 6 = 7, i.e. 3 mod 4
        let a = Point::from([2, 2]);
        let e = Expr::sum(vec![
            Expr::floor_div(Expr::product(vec![Expr::Lit(2), Expr::Var(a.clone())]), 3),
            Expr::product(vec![Expr::Lit(3), Expr::Var(a.clone())]),
        ]);
        let vars = [a];
        let prog = e.compile(4, &slot(&vars)).unwrap();
        assert_eq!(prog.eval(&[2]), 3);
        assert_eq!(prog.eval(&[3]), 3);
        assert_eq!(prog.eval(&[1]), 3);
        assert_eq!(prog.eval(&[0]), 0);
    }

    #[test]
    fn nested_floor_uses_exact_integers() {
        // floor(floor(x^3 / 5) / 7) mod 3 against direct integer arithmetic
        let x = Point::from([0]);
        let e = Expr::floor_div(Expr::floor_div(Expr::pow(Expr::Var(x.clone()), 3), 5), 7);
        let vars = [x];
        let prog = e.compile(3, &slot(&vars)).unwrap();
        for v in 0..3u32 {
            let want = ((v as u64).pow(3) / 5 / 7 % 3) as u32;
            assert_eq!(prog.eval(&[v]), want);
        }
        let big = Expr::floor_div(Expr::Lit(1_000_000_007), 1 << 20);
        let p = big.compile(5, &slot(&vars)).unwrap();
        assert_eq!(p.eval(&[0]) as u64, (1_000_000_007u64 >> 20) % 5);
    }

    #[test]
    fn zero_divisor_rejected() {
        let e = Expr::floor_div(Expr::Lit(3), 0);
        assert_eq!(e.compile(4, &|_| None), Err(CompileError::ZeroDivisor));
    }

    #[test]
    fn display_parenthesises_by_precedence() {
        let a = Expr::var([0, 1]);
        let b = Expr::var([-1, 0]);
        let e = Expr::product(vec![
            Expr::Lit(2),
            Expr::sum(vec![a.clone(), b.clone()]),
            Expr::pow(Expr::product(vec![a, b]), 2),
        ]);
        assert_eq!(e.to_string(), "2*(x[0,1] + x[-1,0])*(x[0,1]*x[-1,0])^2");
    }
}
