//! Cylinder sets under the uniform Bernoulli measure.
//!
//! Joint measures `mu(C_0 ∩ F^{-N_1} C_1 ∩ ...)` are computed exactly by
//! counting assignments on the footprint of the constraints, or estimated by
//! sampling random tori. Results are exact rationals with a power-of-`m`
//! denominator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{EngineError, Stepper, TorusConfig};
use crate::laurent::{iterated_rule, LaurentError};
use crate::point::{Boxed, Point};
use crate::rule::{Budget, LocalRule, RuleError, Symbol};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("cylinder must have at least one constraint")]
    EmptyCylinder,
    #[error("cylinder syntax: {0}")]
    Parse(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("symbol {symbol} outside alphabet 0..{m}")]
    SymbolOutOfRange { symbol: Symbol, m: u32 },
    #[error("footprint of {cells} free cells needs {m}^{cells} assignments, over the budget of {budget}")]
    BudgetExceeded { m: u32, cells: usize, budget: u64 },
    #[error("direction entries must be nonzero")]
    InvalidDirection,
    #[error("each gap row needs {expected} entries, got {got}")]
    RowShape { expected: usize, got: usize },
    #[error("at least one cylinder and one trial are required")]
    NothingToDo,
    #[error("torus side {side} on axis {axis} is below the footprint extent {need}")]
    TorusTooSmall { axis: usize, side: usize, need: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Laurent(#[from] LaurentError),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

/// A nonempty finite set of `(coordinate, symbol)` constraints.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Cylinder {
    dim: usize,
    cells: BTreeMap<Point, Symbol>,
}

impl Cylinder {
    pub fn new(cells: BTreeMap<Point, Symbol>) -> Result<Self, MeasureError> {
        let dim = cells.keys().next().ok_or(MeasureError::EmptyCylinder)?.dim();
        if let Some(p) = cells.keys().find(|p| p.dim() != dim) {
            return Err(MeasureError::DimensionMismatch { expected: dim, got: p.dim() });
        }
        Ok(Cylinder { dim, cells })
    }

    pub fn single(at: Point, s: Symbol) -> Self {
        Cylinder { dim: at.dim(), cells: BTreeMap::from([(at, s)]) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, Symbol)> {
        self.cells.iter().map(|(p, &s)| (p, s))
    }

    pub fn get(&self, p: &Point) -> Option<Symbol> {
        self.cells.get(p).copied()
    }

    /// `M_j`, the largest coordinate along `axis`.
    pub fn max_along(&self, axis: usize) -> i64 {
        self.cells.keys().map(|p| p.get(axis)).max().expect("nonempty")
    }

    /// `m_j`, the smallest coordinate along `axis`.
    pub fn min_along(&self, axis: usize) -> i64 {
        self.cells.keys().map(|p| p.get(axis)).min().expect("nonempty")
    }

    pub fn translated(&self, v: &Point) -> Cylinder {
        Cylinder { dim: self.dim, cells: self.cells.iter().map(|(p, &s)| (p.add(v), s)).collect() }
    }

    fn check(&self, m: u32, dim: usize) -> Result<(), MeasureError> {
        if self.dim != dim {
            return Err(MeasureError::DimensionMismatch { expected: dim, got: self.dim });
        }
        match self.cells.values().find(|&&s| s >= m) {
            Some(&symbol) => Err(MeasureError::SymbolOutOfRange { symbol, m }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Cylinder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (p, s)) in self.cells.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{p}={s}")?;
        }
        Ok(())
    }
}

impl FromStr for Cylinder {
    type Err = MeasureError;

    fn from_str(text: &str) -> Result<Self, MeasureError> {
        let mut cells = BTreeMap::new();
        for item in text.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let (at, sym) = item
                .split_once('=')
                .ok_or_else(|| MeasureError::Parse(format!("{item:?} is not (c1,..,cd)=s")))?;
            let p: Point = at.trim().parse().map_err(|e| MeasureError::Parse(format!("{item:?}: {e}")))?;
            let s: Symbol = sym
                .trim()
                .parse()
                .map_err(|_| MeasureError::Parse(format!("bad symbol in {item:?}")))?;
            if let Some(old) = cells.insert(p.clone(), s) {
                if old != s {
                    return Err(MeasureError::Parse(format!("{p} constrained to both {old} and {s}")));
                }
            }
        }
        Cylinder::new(cells)
    }
}

/// `numerator / m^log_m_denominator`, kept with the numerator not divisible by `m`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ExactMeasure {
    numerator: u128,
    log_m_denominator: u32,
    m: u32,
}

impl ExactMeasure {
    pub fn new(numerator: u128, log_m_denominator: u32, m: u32) -> Self {
        let (mut n, mut e) = (numerator, log_m_denominator);
        if n == 0 {
            e = 0;
        }
        while e > 0 && n % m as u128 == 0 {
            n /= m as u128;
            e -= 1;
        }
        ExactMeasure { numerator: n, log_m_denominator: e, m }
    }

    pub fn zero(m: u32) -> Self {
        ExactMeasure::new(0, 0, m)
    }

    pub fn numerator(&self) -> u128 {
        self.numerator
    }

    pub fn log_m_denominator(&self) -> u32 {
        self.log_m_denominator
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn is_zero(&self) -> bool {
        self.numerator == 0
    }

    pub fn to_f64(&self) -> f64 {
        self.numerator as f64 / (self.m as f64).powi(self.log_m_denominator as i32)
    }

    pub fn mul(&self, other: &ExactMeasure) -> Option<ExactMeasure> {
        if self.m != other.m {
            return None;
        }
        let n = self.numerator.checked_mul(other.numerator)?;
        Some(ExactMeasure::new(n, self.log_m_denominator + other.log_m_denominator, self.m))
    }

    /// Fully reduced `(p, q)` with `value = p / q`, if `q` fits.
    pub fn fraction(&self) -> Option<(u128, u128)> {
        let q = (self.m as u128).checked_pow(self.log_m_denominator)?;
        let g = self.numerator.gcd(&q).max(1);
        Some((self.numerator / g, q / g))
    }
}

impl fmt::Display for ExactMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.fraction() {
            Some((p, 1)) => write!(f, "{p}"),
            Some((p, q)) => write!(f, "{p}/{q}"),
            None => write!(f, "{}/{}^{}", self.numerator, self.m, self.log_m_denominator),
        }
    }
}

/// `m^{-|C|}`.
pub fn cylinder_measure(c: &Cylinder, m: u32) -> ExactMeasure {
    ExactMeasure::new(1, c.len() as u32, m)
}

/// Smallest `n0 >= 0` such that for every `n > n0` the `n`-step image of the
/// leading corner of `c1` lies strictly beyond `c0` on every axis.
pub fn escape_bound(c0: &Cylinder, c1: &Cylinder, direction: &Point) -> Result<u64, MeasureError> {
    if c0.dim() != c1.dim() || direction.dim() != c0.dim() {
        return Err(MeasureError::DimensionMismatch { expected: c0.dim(), got: direction.dim() });
    }
    let mut n0 = 0i64;
    for (j, &r) in direction.coords().iter().enumerate() {
        let k = match r.signum() {
            0 => return Err(MeasureError::InvalidDirection),
            1 => Integer::div_ceil(&(c0.max_along(j) - c1.min_along(j)), &r),
            // reflect the axis
            _ => Integer::div_ceil(&(c1.max_along(j) - c0.min_along(j)), &-r),
        };
        n0 = n0.max(k);
    }
    Ok(n0 as u64)
}

/// Pairwise bound maximised over consecutive cylinders.
pub fn escape_bound_chain(cylinders: &[Cylinder], direction: &Point) -> Result<u64, MeasureError> {
    let mut n0 = 0;
    for w in cylinders.windows(2) {
        n0 = n0.max(escape_bound(&w[0], &w[1], direction)?);
    }
    Ok(n0)
}

type ByLag = BTreeMap<u64, BTreeMap<Point, Symbol>>;

/// Constraints grouped by lag; `None` when two constraints contradict.
fn group_by_lag(
    rule: &LocalRule,
    lagged: &[(u64, Cylinder)],
) -> Result<Option<ByLag>, MeasureError> {
    if lagged.is_empty() {
        return Err(MeasureError::NothingToDo);
    }
    let mut by_lag: BTreeMap<u64, BTreeMap<Point, Symbol>> = BTreeMap::new();
    for (n, c) in lagged {
        c.check(rule.m(), rule.dim())?;
        let level = by_lag.entry(*n).or_default();
        for (p, s) in c.iter() {
            if let Some(old) = level.insert(p.clone(), s) {
                if old != s {
                    return Ok(None);
                }
            }
        }
    }
    Ok(Some(by_lag))
}

/// How the exact backend evaluates lagged constraints.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum Strategy {
    /// Linear rules use the support of the iterated rule, others the layered plan.
    #[default]
    Auto,
    /// Step-by-step evaluation over the full Minkowski cones.
    Layered,
}

struct LinearCheck {
    target: Symbol,
    terms: Vec<(usize, Symbol)>,
}

struct Layer {
    sources: Vec<usize>,
    checks: Vec<(usize, Symbol)>,
}

enum Plan {
    Linear(Vec<LinearCheck>),
    Layered(Vec<Layer>),
}

struct Compiled {
    footprint: Vec<Point>,
    base: Vec<Symbol>,
    free: Vec<usize>,
    plan: Plan,
}

fn compile_plan(
    rule: &LocalRule,
    by_lag: &BTreeMap<u64, BTreeMap<Point, Symbol>>,
    strategy: Strategy,
    budget: Budget,
) -> Result<Option<Compiled>, MeasureError> {
    let m = rule.m();
    let fixed: BTreeMap<Point, Symbol> = by_lag.get(&0).cloned().unwrap_or_default();
    let too_big = |cells: usize| MeasureError::BudgetExceeded { m, cells, budget: budget.0 };
    let log_budget = {
        let mut k = 0usize;
        while budget.allows(m, k + 1).is_some() {
            k += 1;
        }
        k
    };

    if rule.is_linear() && strategy == Strategy::Auto {
        let mut cells: BTreeSet<Point> = fixed.keys().cloned().collect();
        let mut raw = Vec::new();
        for (&n, level) in by_lag.range(1..) {
            let g = iterated_rule(rule, n)?;
            let terms = g.linear_terms()?;
            for (v, &s) in level {
                let t: Vec<(Point, Symbol)> = terms.iter().map(|(e, c)| (v.add(e), *c)).collect();
                cells.extend(t.iter().map(|(p, _)| p.clone()));
                raw.push((s, t));
            }
        }
        let footprint: Vec<Point> = cells.into_iter().collect();
        let pos: HashMap<&Point, usize> = footprint.iter().enumerate().map(|(i, p)| (p, i)).collect();
        let checks = raw
            .into_iter()
            .map(|(target, t)| LinearCheck { target, terms: t.iter().map(|(p, c)| (pos[p], *c)).collect() })
            .collect();
        return finish(footprint, &fixed, Plan::Linear(checks), log_budget, too_big);
    }

    let max_lag = *by_lag.keys().next_back().expect("nonempty");
    let offsets = rule.neighborhood().offsets();
    let mut sets: Vec<BTreeSet<Point>> = vec![BTreeSet::new(); max_lag as usize + 1];
    for t in (0..=max_lag as usize).rev() {
        if let Some(level) = by_lag.get(&(t as u64)) {
            sets[t].extend(level.keys().cloned());
        }
        if t > 0 {
            if sets[t].len().saturating_sub(fixed.len()) > log_budget {
                return Err(too_big(sets[t].len() - fixed.len()));
            }
            let grown: Vec<Point> = sets[t].iter().flat_map(|c| offsets.iter().map(move |d| c.add(d))).collect();
            sets[t - 1].extend(grown);
        }
    }
    let ordered: Vec<Vec<Point>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
    let mut layers = Vec::with_capacity(max_lag as usize);
    for t in 1..=max_lag as usize {
        let below: HashMap<&Point, usize> = ordered[t - 1].iter().enumerate().map(|(i, p)| (p, i)).collect();
        let sources = ordered[t].iter().flat_map(|c| offsets.iter().map(|d| below[&c.add(d)])).collect();
        let checks = match by_lag.get(&(t as u64)) {
            Some(level) => level
                .iter()
                .map(|(p, &s)| (ordered[t].binary_search(p).expect("constraint in its layer"), s))
                .collect(),
            None => Vec::new(),
        };
        layers.push(Layer { sources, checks });
    }
    let footprint = ordered.into_iter().next().expect("layer zero");
    finish(footprint, &fixed, Plan::Layered(layers), log_budget, too_big)
}

fn finish(
    footprint: Vec<Point>,
    fixed: &BTreeMap<Point, Symbol>,
    plan: Plan,
    log_budget: usize,
    too_big: impl Fn(usize) -> MeasureError,
) -> Result<Option<Compiled>, MeasureError> {
    let mut base = vec![0; footprint.len()];
    let mut free = Vec::new();
    for (i, p) in footprint.iter().enumerate() {
        match fixed.get(p) {
            Some(&s) => base[i] = s,
            None => free.push(i),
        }
    }
    if free.len() > log_budget {
        return Err(too_big(free.len()));
    }
    Ok(Some(Compiled { footprint, base, free, plan }))
}

const CHUNK: u64 = 1 << 14;

/// Folds `visit` over every assignment of the `free` positions of `base`,
/// split into fixed-size chunks across workers.
fn sweep<T, S>(
    m: u32,
    base: &[Symbol],
    free: &[usize],
    scratch: impl Fn() -> S + Sync + Send,
    zero: impl Fn() -> T + Sync + Send,
    visit: impl Fn(&mut S, &mut T, &[Symbol]) + Sync + Send,
    merge: impl Fn(T, T) -> T + Sync + Send,
) -> T
where
    T: Send,
{
    let total = (m as u64).pow(free.len() as u32);
    let chunks = total.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut buf = base.to_vec();
            let mut idx = c * CHUNK;
            for &p in free {
                buf[p] = (idx % m as u64) as Symbol;
                idx /= m as u64;
            }
            let mut s = scratch();
            let mut acc = zero();
            let n = CHUNK.min(total - c * CHUNK);
            for _ in 0..n {
                visit(&mut s, &mut acc, &buf);
                for &p in free {
                    buf[p] += 1;
                    if buf[p] < m {
                        break;
                    }
                    buf[p] = 0;
                }
            }
            acc
        })
        .reduce(&zero, merge)
}

fn count_plan(rule: &LocalRule, c: &Compiled) -> u64 {
    let m = rule.m();
    let n_slots = rule.neighborhood().len();
    match &c.plan {
        Plan::Linear(checks) => sweep(
            m,
            &c.base,
            &c.free,
            || (),
            || 0u64,
            |_, acc, x| {
                let ok = checks.iter().all(|ch| {
                    let v: u64 = ch.terms.iter().map(|&(i, a)| a as u64 * x[i] as u64).sum();
                    (v % m as u64) as Symbol == ch.target
                });
                *acc += ok as u64;
            },
            |a, b| a + b,
        ),
        Plan::Layered(layers) => sweep(
            m,
            &c.base,
            &c.free,
            || {
                let bufs: Vec<Vec<Symbol>> = layers.iter().map(|l| vec![0; l.sources.len() / n_slots]).collect();
                (bufs, vec![0 as Symbol; n_slots])
            },
            || 0u64,
            |(bufs, slots), acc, x| {
                for (t, layer) in layers.iter().enumerate() {
                    let (done, rest) = bufs.split_at_mut(t);
                    let prev: &[Symbol] = if t == 0 { x } else { &done[t - 1] };
                    let cur = &mut rest[0];
                    for (k, src) in layer.sources.chunks_exact(n_slots).enumerate() {
                        for (s, &i) in slots.iter_mut().zip(src) {
                            *s = prev[i];
                        }
                        cur[k] = rule.eval_slots(slots);
                    }
                    if layer.checks.iter().any(|&(k, s)| cur[k] != s) {
                        return;
                    }
                }
                *acc += 1;
            },
            |a, b| a + b,
        ),
    }
}

/// Exact `mu(∩ F^{-N_i} C_i)` over `(N_i, C_i)` pairs.
pub fn exact_joint_measure(
    rule: &LocalRule,
    lagged: &[(u64, Cylinder)],
    budget: Budget,
) -> Result<ExactMeasure, MeasureError> {
    exact_joint_measure_with(rule, lagged, budget, Strategy::Auto)
}

pub fn exact_joint_measure_with(
    rule: &LocalRule,
    lagged: &[(u64, Cylinder)],
    budget: Budget,
    strategy: Strategy,
) -> Result<ExactMeasure, MeasureError> {
    let m = rule.m();
    let Some(by_lag) = group_by_lag(rule, lagged)? else {
        return Ok(ExactMeasure::zero(m));
    };
    match compile_plan(rule, &by_lag, strategy, budget)? {
        None => Ok(ExactMeasure::zero(m)),
        Some(c) => {
            let hits = count_plan(rule, &c);
            Ok(ExactMeasure::new(hits as u128, c.footprint.len() as u32, m))
        }
    }
}

/// Bounding box of every dependency cone of the lagged constraints.
pub fn footprint_box(rule: &LocalRule, lagged: &[(u64, Cylinder)]) -> Option<Boxed> {
    let ext = rule.neighborhood().extent();
    let mut corners = Vec::new();
    for (n, c) in lagged {
        let n = *n as i64;
        for (p, _) in c.iter() {
            corners.push(Point::new(ext.iter().enumerate().map(|(j, e)| p.get(j) + n * e.0).collect()));
            corners.push(Point::new(ext.iter().enumerate().map(|(j, e)| p.get(j) + n * e.1).collect()));
        }
    }
    Boxed::bounding(corners.iter())
}

/// Hit frequency over random tori.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SampledMeasure {
    pub trials: u64,
    pub hits: u64,
}

impl SampledMeasure {
    pub fn estimate(&self) -> f64 {
        self.hits as f64 / self.trials as f64
    }

    /// Binomial standard error of the estimate.
    pub fn stderr(&self) -> f64 {
        let p = self.estimate();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Monte-Carlo estimate: trial `t` draws a uniform torus from stream `t` of
/// `seed` and iterates it. `sides` defaults to the footprint extents.
pub fn sampled_joint_measure(
    rule: &LocalRule,
    lagged: &[(u64, Cylinder)],
    trials: u64,
    seed: u64,
    sides: Option<&[usize]>,
) -> Result<SampledMeasure, MeasureError> {
    if trials == 0 {
        return Err(MeasureError::NothingToDo);
    }
    let Some(by_lag) = group_by_lag(rule, lagged)? else {
        return Ok(SampledMeasure { trials, hits: 0 });
    };
    let fp = footprint_box(rule, lagged).ok_or(MeasureError::NothingToDo)?;
    let need: Vec<usize> = fp
        .sides()
        .into_iter()
        .zip(rule.neighborhood().extent())
        .map(|(s, (lo, hi))| s.max((hi - lo + 1) as usize))
        .collect();
    let sides = match sides {
        Some(s) => {
            if s.len() != need.len() {
                return Err(MeasureError::DimensionMismatch { expected: need.len(), got: s.len() });
            }
            for (axis, (&side, &n)) in s.iter().zip(&need).enumerate() {
                if side < n {
                    return Err(MeasureError::TorusTooSmall { axis, side, need: n });
                }
            }
            s.to_vec()
        }
        None => need,
    };
    let stepper = Stepper::new(rule, &sides)?;
    let template = TorusConfig::zeros(rule.m(), &sides)?;
    let levels: Vec<(u64, Vec<(usize, Symbol)>)> = by_lag
        .iter()
        .map(|(&n, lvl)| (n, lvl.iter().map(|(p, &s)| (template.index_of(p), s)).collect()))
        .collect();

    let chunk = 256u64;
    let hits = (0..trials.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut cur = template.clone();
            let mut next = template.clone();
            let mut hits = 0u64;
            for t in c * chunk..((c + 1) * chunk).min(trials) {
                cur.randomize(seed, t);
                let mut time = 0u64;
                let mut ok = true;
                for (n, checks) in &levels {
                    while time < *n {
                        stepper.step_into(&cur, &mut next).expect("shape fixed");
                        std::mem::swap(&mut cur, &mut next);
                        time += 1;
                    }
                    if checks.iter().any(|&(i, s)| cur.cells()[i] != s) {
                        ok = false;
                        break;
                    }
                }
                hits += ok as u64;
            }
            hits
        })
        .sum();
    Ok(SampledMeasure { trials, hits })
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Mode {
    Exact,
    Sampled { trials: u64, seed: u64 },
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Joint {
    Exact(ExactMeasure),
    Sampled(SampledMeasure),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Verdict {
    Equal,
    Unequal,
    /// Sampled estimate within three null standard deviations.
    Within,
    Outside,
    /// Some gap is at most the escape bound; no claim is made.
    Info,
}

impl Verdict {
    pub fn holds(self) -> bool {
        !matches!(self, Verdict::Unequal | Verdict::Outside)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Equal => "equal",
            Verdict::Unequal => "unequal",
            Verdict::Within => "within",
            Verdict::Outside => "outside",
            Verdict::Info => "info",
        })
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct MixingRow {
    pub gaps: Vec<u64>,
    /// Cumulative lags `N_1..N_k`.
    pub lags: Vec<u64>,
    pub joint: Joint,
    pub product: ExactMeasure,
    pub verdict: Verdict,
}

impl MixingRow {
    fn cells(&self) -> [String; 5] {
        let lags = self.lags.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let (joint, stderr) = match &self.joint {
            Joint::Exact(e) => (e.to_string(), String::new()),
            Joint::Sampled(s) => (format!("{:.6}", s.estimate()), format!("{:.6}", s.stderr())),
        };
        [lags, joint, self.product.to_string(), self.verdict.to_string(), stderr]
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct MixingReport {
    /// Escape bound, when a direction was supplied.
    pub n0: Option<u64>,
    pub rows: Vec<MixingRow>,
}

impl MixingReport {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.verdict.holds())
    }

    /// One `lag joint product verdict [stderr]` line per row.
    pub fn porcelain(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let c = r.cells();
            out.push_str(&c[..4].join(" "));
            if !c[4].is_empty() {
                out.push(' ');
                out.push_str(&c[4]);
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for MixingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = ["lags", "joint", "product", "verdict", "stderr"];
        let rows: Vec<[String; 5]> = self.rows.iter().map(MixingRow::cells).collect();
        let cols = if rows.iter().any(|r| !r[4].is_empty()) { 5 } else { 4 };
        let width: Vec<usize> = (0..cols)
            .map(|i| rows.iter().map(|r| r[i].len()).chain([head[i].len()]).max().unwrap_or(0))
            .collect();
        if let Some(n0) = self.n0 {
            writeln!(f, "n0 = {n0}")?;
        }
        let line = |f: &mut fmt::Formatter<'_>, cells: &[&str]| {
            let parts: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
            writeln!(f, "{}", parts.join("  ").trim_end())
        };
        line(f, &head[..cols])?;
        for r in &rows {
            let cells: Vec<&str> = r[..cols].iter().map(String::as_str).collect();
            line(f, &cells)?;
        }
        Ok(())
    }
}

/// Compares joint measures against the product of marginals.
///
/// Each row of `gap_rows` holds the gaps `n_1..n_k` for `k = |cylinders| - 1`.
/// A lone cylinder takes a one-entry row, its own lag. With `direction`, rows
/// having some gap `<= n0` get [`Verdict::Info`].
pub fn check_k_mixing(
    rule: &LocalRule,
    cylinders: &[Cylinder],
    gap_rows: &[Vec<u64>],
    mode: &Mode,
    direction: Option<&Point>,
    budget: Budget,
) -> Result<MixingReport, MeasureError> {
    if cylinders.is_empty() {
        return Err(MeasureError::NothingToDo);
    }
    let m = rule.m();
    let k = if cylinders.len() == 1 { 1 } else { cylinders.len() - 1 };
    let n0 = match direction {
        Some(d) if cylinders.len() > 1 => Some(escape_bound_chain(cylinders, d)?),
        _ => None,
    };
    let product = cylinders
        .iter()
        .map(|c| cylinder_measure(c, m))
        .try_fold(ExactMeasure::new(1, 0, m), |a, b| a.mul(&b))
        .expect("unit numerators");
    let mut rows = Vec::with_capacity(gap_rows.len());
    for gaps in gap_rows {
        if gaps.len() != k {
            return Err(MeasureError::RowShape { expected: k, got: gaps.len() });
        }
        let lags: Vec<u64> = gaps.iter().scan(0u64, |acc, g| {
            *acc += g;
            Some(*acc)
        }).collect();
        let lagged: Vec<(u64, Cylinder)> = if cylinders.len() == 1 {
            vec![(lags[0], cylinders[0].clone())]
        } else {
            std::iter::once(0).chain(lags.iter().copied()).zip(cylinders.iter().cloned()).collect()
        };
        let informational = n0.is_some_and(|n0| gaps.iter().any(|&g| g <= n0));
        let (joint, verdict) = match mode {
            Mode::Exact => {
                let e = exact_joint_measure(rule, &lagged, budget)?;
                (Joint::Exact(e), if e == product { Verdict::Equal } else { Verdict::Unequal })
            }
            Mode::Sampled { trials, seed } => {
                let s = sampled_joint_measure(rule, &lagged, *trials, *seed, None)?;
                let p = product.to_f64();
                let sigma = (p * (1.0 - p) / *trials as f64).sqrt();
                let ok = (s.estimate() - p).abs() <= 3.0 * sigma;
                (Joint::Sampled(s), if ok { Verdict::Within } else { Verdict::Outside })
            }
        };
        let verdict = if informational { Verdict::Info } else { verdict };
        rows.push(MixingRow { gaps: gaps.clone(), lags, joint, product, verdict });
    }
    Ok(MixingReport { n0, rows })
}

/// Preimage counts of every window pattern over the window grown by the
/// neighborhood extent.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Census {
    m: u32,
    window: Boxed,
    extension: Boxed,
    counts: Vec<u64>,
}

impl Census {
    pub fn window(&self) -> &Boxed {
        &self.window
    }

    pub fn extension(&self) -> &Boxed {
        &self.extension
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Indexed by pattern, the first window cell being the least significant digit.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_balanced(&self) -> bool {
        self.counts.windows(2).all(|w| w[0] == w[1])
    }

    pub fn min(&self) -> u64 {
        self.counts.iter().copied().min().unwrap_or(0)
    }

    pub fn max(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn pattern(&self, mut idx: usize) -> Vec<Symbol> {
        (0..self.window.len())
            .map(|_| {
                let s = (idx % self.m as usize) as Symbol;
                idx /= self.m as usize;
                s
            })
            .collect()
    }

    pub fn index_of(&self, pattern: &[Symbol]) -> Option<usize> {
        if pattern.len() != self.window.len() || pattern.iter().any(|&s| s >= self.m) {
            return None;
        }
        Some(pattern.iter().rev().fold(0usize, |acc, &s| acc * self.m as usize + s as usize))
    }

    pub fn count_of(&self, pattern: &[Symbol]) -> Option<u64> {
        self.index_of(pattern).map(|i| self.counts[i])
    }

    pub fn render_pattern(&self, pattern: &[Symbol]) -> String {
        let sep = if self.m <= 10 { "" } else { "," };
        pattern.iter().map(Symbol::to_string).collect::<Vec<_>>().join(sep)
    }

    /// `pattern count` lines.
    pub fn porcelain(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{} {c}\n", self.render_pattern(&self.pattern(i))));
        }
        out
    }
}

impl fmt::Display for Census {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "window {} over extension {} ({} cells)", self.window, self.extension, self.extension.len())?;
        let w = self.render_pattern(&self.pattern(0)).len().max("pattern".len());
        writeln!(f, "{:<w$}  count", "pattern")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(f, "{:<w$}  {c}", self.render_pattern(&self.pattern(i)))?;
        }
        let verdict = if self.is_balanced() { "balanced" } else { "unbalanced" };
        write!(f, "{verdict}: min {} max {}", self.min(), self.max())
    }
}

pub fn preimage_census(rule: &LocalRule, window: &Boxed, budget: Budget) -> Result<Census, MeasureError> {
    if window.dim() != rule.dim() {
        return Err(MeasureError::DimensionMismatch { expected: rule.dim(), got: window.dim() });
    }
    let m = rule.m();
    let ext = rule.neighborhood().extent();
    let lo = Point::new(ext.iter().enumerate().map(|(j, e)| window.lo().get(j) + e.0).collect());
    let hi = Point::new(ext.iter().enumerate().map(|(j, e)| window.hi().get(j) + e.1).collect());
    let extension = Boxed::new(lo, hi).expect("grown box is nonempty");
    let too_big = |cells| MeasureError::BudgetExceeded { m, cells, budget: budget.0 };
    budget.allows(m, extension.len()).ok_or_else(|| too_big(extension.len()))?;
    let patterns = budget.allows(m, window.len()).ok_or_else(|| too_big(window.len()))? as usize;
    let offsets = rule.neighborhood().offsets();
    let n_slots = offsets.len();
    let sources: Vec<usize> = window
        .points()
        .flat_map(|p| offsets.iter().map(move |d| p.add(d)))
        .map(|q| extension.index_of(&q).expect("cone inside extension"))
        .collect();
    let free: Vec<usize> = (0..extension.len()).collect();
    let base = vec![0; extension.len()];
    let counts = sweep(
        m,
        &base,
        &free,
        || vec![0 as Symbol; n_slots],
        || vec![0u64; patterns],
        |slots, acc, x| {
            let mut idx = 0usize;
            for src in sources.chunks_exact(n_slots).rev() {
                for (s, &i) in slots.iter_mut().zip(src) {
                    *s = x[i];
                }
                idx = idx * m as usize + rule.eval_slots(slots) as usize;
            }
            acc[idx] += 1;
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    );
    Ok(Census { m, window: window.clone(), extension, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{window_eval, Window};

    fn p(c: &[i64]) -> Point {
        Point::new(c.to_vec())
    }

    fn ex34() -> LocalRule {
        LocalRule::linear(2, 2, vec![(p(&[0, 0]), 1), (p(&[0, 1]), 1), (p(&[1, 1]), 1)]).unwrap()
    }

    fn cyl(s: &str) -> Cylinder {
        s.parse().unwrap()
    }

    /// Brute force straight from the definition: enumerate the footprint box
    /// and run `window_eval` for every lag.
    fn oracle(rule: &LocalRule, lagged: &[(u64, Cylinder)]) -> ExactMeasure {
        let b = footprint_box(rule, lagged).unwrap();
        let m = rule.m();
        let total = (m as u64).pow(b.len() as u32);
        let mut hits = 0u128;
        for mut idx in 0..total {
            let cells: Vec<Symbol> = (0..b.len())
                .map(|_| {
                    let s = (idx % m as u64) as Symbol;
                    idx /= m as u64;
                    s
                })
                .collect();
            let w = Window::new(b.clone(), cells).unwrap();
            let ok = lagged.iter().all(|(n, c)| {
                let out = window_eval(rule, &w, *n).unwrap();
                c.iter().all(|(q, s)| out.get(q) == Some(s))
            });
            hits += ok as u128;
        }
        ExactMeasure::new(hits, b.len() as u32, m)
    }

    #[test]
    fn exact_measure_canonical() {
        let a = ExactMeasure::new(8, 5, 2);
        assert_eq!((a.numerator(), a.log_m_denominator()), (1, 2));
        assert_eq!(a.to_string(), "1/4");
        assert_eq!(ExactMeasure::new(0, 9, 4), ExactMeasure::zero(4));
        assert_eq!(ExactMeasure::new(3, 0, 4).to_string(), "3");
        assert_eq!(ExactMeasure::new(6, 2, 6).to_string(), "1/6");
        assert_eq!(a.mul(&a).unwrap().to_string(), "1/16");
        assert!((ExactMeasure::new(3, 2, 4).to_f64() - 0.1875).abs() < 1e-12);
        assert_eq!(ExactMeasure::new(1, 200, 2).to_string(), "1/2^200");
    }

    #[test]
    fn cylinder_syntax_and_measure() {
        let c = cyl("(0,1)=2; (0,0)=3");
        assert_eq!(c.to_string(), "(0,0)=3;(0,1)=2");
        assert_eq!(cylinder_measure(&c, 4).to_string(), "1/16");
        assert_eq!(cylinder_measure(&cyl("(5,5)=1"), 4).to_string(), "1/4");
        assert!(matches!("".parse::<Cylinder>(), Err(MeasureError::EmptyCylinder)));
        assert!("(0,0)=1;(0,0)=2".parse::<Cylinder>().is_err());
        assert!("(0,0)=1;(0)=1".parse::<Cylinder>().is_err());
        assert!("(0,0)".parse::<Cylinder>().is_err());
        assert!(Cylinder::new(BTreeMap::new()).is_err());
    }

    #[test]
    fn escape_bounds() {
        let o = cyl("(0,0)=1");
        assert_eq!(escape_bound(&o, &o, &p(&[1, 1])).unwrap(), 0);
        let c0 = cyl("(3,0)=1");
        let c1 = cyl("(0,0)=1");
        assert_eq!(escape_bound(&c0, &c1, &p(&[1, 2])).unwrap(), 3);
        assert_eq!(escape_bound(&c0, &c1, &p(&[2, 2])).unwrap(), 2);
        // reflected axis
        assert_eq!(escape_bound(&c1, &c0, &p(&[-1, 1])).unwrap(), 3);
        assert_eq!(escape_bound(&c1, &c0, &p(&[1, 1])).unwrap(), 0);
        assert!(matches!(escape_bound(&o, &o, &p(&[0, 1])), Err(MeasureError::InvalidDirection)));
    }

    #[test]
    fn escape_chain_matches_pairwise_formula() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        for _ in 0..3 {
            let chain: Vec<Cylinder> = (0..4)
                .map(|_| {
                    let cells = (0..rng.random_range(1..4))
                        .map(|_| (p(&[rng.random_range(-4..5), rng.random_range(-4..5)]), 0))
                        .collect();
                    Cylinder::new(cells).unwrap()
                })
                .collect();
            let (r, t) = (rng.random_range(1..4i64), rng.random_range(1..4i64));
            let mut expect = 0i64;
            for i in 1..chain.len() {
                let a = (chain[i - 1].max_along(0) - chain[i].min_along(0)) as f64 / r as f64;
                let b = (chain[i - 1].max_along(1) - chain[i].min_along(1)) as f64 / t as f64;
                expect = expect.max(a.ceil() as i64).max(b.ceil() as i64);
            }
            assert_eq!(escape_bound_chain(&chain, &p(&[r, t])).unwrap() as i64, expect);
        }
    }

    #[test]
    fn joint_measures_match_brute_force() {
        let r = ex34();
        let cases = vec![
            vec![(0, cyl("(0,0)=1"))],
            vec![(0, cyl("(0,0)=1")), (1, cyl("(0,0)=1"))],
            vec![(0, cyl("(0,0)=1;(1,0)=0")), (1, cyl("(0,0)=1"))],
            vec![(0, cyl("(1,1)=1")), (1, cyl("(0,0)=0"))],
            vec![(0, cyl("(0,0)=1")), (2, cyl("(0,0)=1;(1,0)=1"))],
            vec![(1, cyl("(0,0)=1")), (1, cyl("(0,0)=0"))],
        ];
        for lagged in cases {
            let want = oracle(&r, &lagged);
            let auto = exact_joint_measure(&r, &lagged, Budget::default()).unwrap();
            let layered = exact_joint_measure_with(&r, &lagged, Budget::default(), Strategy::Layered).unwrap();
            assert_eq!(auto, want, "{lagged:?}");
            assert_eq!(layered, want, "{lagged:?}");
        }
        assert_eq!(
            exact_joint_measure(&r, &[(0, cyl("(0,0)=1")), (1, cyl("(0,0)=1"))], Budget::default())
                .unwrap()
                .to_string(),
            "1/4"
        );
    }

    #[test]
    fn nonlinear_joint_measure_matches_brute_force() {
        let r = crate::lang::parse_rule("m=3\nd=2\nkind=expr\nexpr x[0,0]*x[1,0] + x[1,1]\n").unwrap();
        for lagged in [
            vec![(0, cyl("(0,0)=1")), (1, cyl("(0,0)=2"))],
            vec![(1, cyl("(0,0)=2;(1,0)=0"))],
            vec![(0, cyl("(1,1)=0")), (2, cyl("(0,0)=1"))],
        ] {
            assert_eq!(exact_joint_measure(&r, &lagged, Budget::default()).unwrap(), oracle(&r, &lagged));
        }
    }

    #[test]
    fn contradictions_and_budget() {
        let r = ex34();
        let z = exact_joint_measure(&r, &[(0, cyl("(0,0)=1")), (0, cyl("(0,0)=0"))], Budget::default()).unwrap();
        assert!(z.is_zero());
        let err = exact_joint_measure(&r, &[(0, cyl("(0,0)=1")), (4, cyl("(0,0)=1"))], Budget(2)).unwrap_err();
        assert!(matches!(err, MeasureError::BudgetExceeded { m: 2, cells: 2, .. }), "{err}");
        assert!(matches!(
            exact_joint_measure(&r, &[(0, cyl("(0,0)=5"))], Budget::default()),
            Err(MeasureError::SymbolOutOfRange { symbol: 5, m: 2 })
        ));
    }

    #[test]
    fn translation_invariance() {
        let r = ex34();
        let base = vec![(0, cyl("(0,0)=1;(1,0)=1")), (2, cyl("(0,1)=0"))];
        let want = exact_joint_measure(&r, &base, Budget::default()).unwrap();
        for v in [p(&[5, -3]), p(&[-7, 2])] {
            let moved: Vec<_> = base.iter().map(|(n, c)| (*n, c.translated(&v))).collect();
            assert_eq!(exact_joint_measure(&r, &moved, Budget::default()).unwrap(), want);
        }
        let shifted = r.translated(&p(&[2, 1]));
        let moved: Vec<_> = base.iter().map(|(n, c)| (*n, c.translated(&p(&[-2 * *n as i64, -(*n as i64)])))).collect();
        assert_eq!(exact_joint_measure(&shifted, &moved, Budget::default()).unwrap(), want);
    }

    #[test]
    fn k_mixing_reports() {
        let r = ex34();
        let c = cyl("(0,0)=1");
        let rows: Vec<Vec<u64>> = (1..=3).map(|n| vec![n]).collect();
        let rep = check_k_mixing(&r, &[c.clone(), c.clone()], &rows, &Mode::Exact, None, Budget::default()).unwrap();
        assert!(rep.holds());
        assert_eq!(rep.porcelain(), "1 1/4 1/4 equal\n2 1/4 1/4 equal\n3 1/4 1/4 equal\n");
        let three = [c.clone(), c.clone(), c.clone()];
        let rep = check_k_mixing(&r, &three, &[vec![2, 2]], &Mode::Exact, None, Budget::default()).unwrap();
        assert_eq!(rep.porcelain(), "2,4 1/8 1/8 equal\n");
        assert!(check_k_mixing(&r, &three, &[vec![2]], &Mode::Exact, None, Budget::default()).is_err());
        let d = p(&[1, 1]);
        let far = [cyl("(1,1)=1"), cyl("(-1,-1)=1")];
        let rep = check_k_mixing(&r, &far, &[vec![1], vec![5]], &Mode::Exact, Some(&d), Budget::default()).unwrap();
        assert_eq!(rep.n0, Some(2));
        assert_eq!(rep.rows[0].verdict, Verdict::Info);
        assert_eq!(rep.rows[1].verdict, Verdict::Equal);
        let table = rep.to_string();
        assert!(table.starts_with("n0 = 2\nlags"), "{table}");
    }

    #[test]
    fn sampled_backend() {
        let r = ex34();
        let c = cyl("(0,0)=1");
        let s = sampled_joint_measure(&r, &[(0, c.clone())], 10_000, 1, None).unwrap();
        assert!((s.estimate() - 0.5).abs() <= 3.0 * (0.25f64 / 10_000.0).sqrt());
        let lagged = [(0, c.clone()), (2, c.clone())];
        let a = sampled_joint_measure(&r, &lagged, 4_000, 9, None).unwrap();
        assert_eq!(a, sampled_joint_measure(&r, &lagged, 4_000, 9, None).unwrap());
        assert!((a.estimate() - 0.25).abs() <= 3.0 * (0.25f64 * 0.75 / 4_000.0).sqrt());
        assert!(matches!(
            sampled_joint_measure(&r, &lagged, 10, 0, Some(&[2, 2])),
            Err(MeasureError::TorusTooSmall { .. })
        ));
        let rep = check_k_mixing(&r, &[c.clone(), c], &[vec![1]], &Mode::Sampled { trials: 2000, seed: 3 }, None, Budget::default())
            .unwrap();
        let line = rep.porcelain();
        assert_eq!(line.split_whitespace().count(), 5, "{line}");
    }

    #[test]
    fn census_balance() {
        let r = ex34();
        let one = preimage_census(&r, &Boxed::new(p(&[0, 0]), p(&[0, 0])).unwrap(), Budget::default()).unwrap();
        assert_eq!(one.counts(), &[8, 8]);
        assert_eq!(one.extension().len(), 4);
        let two = preimage_census(&r, &Boxed::new(p(&[0, 0]), p(&[1, 1])).unwrap(), Budget::default()).unwrap();
        assert!(two.is_balanced());
        assert_eq!((two.counts().len(), two.min()), (16, 32));
        assert_eq!(two.count_of(&[1, 0, 0, 1]), Some(32));
        assert_eq!(two.pattern(two.index_of(&[1, 0, 0, 1]).unwrap()), vec![1, 0, 0, 1]);
        // x00 * x01 is not balanced
        let prod = crate::lang::parse_rule("m=2\nd=2\nkind=expr\nexpr x[0,0]*x[0,1]\n").unwrap();
        let c = preimage_census(&prod, &Boxed::new(p(&[0, 0]), p(&[0, 0])).unwrap(), Budget::default()).unwrap();
        assert_eq!(c.counts(), &[3, 1]);
        assert!(!c.is_balanced());
        assert_eq!(c.porcelain(), "0 3\n1 1\n");
    }
}
