//! Global maps on periodic tori and on finite windows.
//!
//! Cells are stored densely with the first coordinate varying fastest. PGM
//! output draws the highest second coordinate as the top row.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::point::{Boxed, Point};
use crate::rng::SymbolRng;
use crate::rule::{LocalRule, Symbol};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("dimension mismatch: rule has d={rule}, configuration has d={config}")]
    DimensionMismatch { rule: usize, config: usize },
    #[error("torus side {side} on axis {axis} is below the neighborhood span {need}")]
    TorusTooSmall { axis: usize, side: usize, need: usize },
    #[error("invalid torus sides")]
    BadSides,
    #[error("symbol {symbol} outside alphabet 0..{m}")]
    SymbolOutOfRange { symbol: Symbol, m: u32 },
    #[error("cell count {got} does not match sides (expected {expected})")]
    CellCount { expected: usize, got: usize },
    #[error("window too small: no cell has its whole dependency cone inside")]
    EmptyOutput,
    #[error("operation needs a two-dimensional configuration")]
    NotTwoDimensional,
    #[error("PGM output supports at most 256 symbols, alphabet has {0}")]
    UnsupportedDepth(u32),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A configuration on the torus `Z_{s1} x ... x Z_{sd}`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TorusConfig {
    m: u32,
    sides: Vec<usize>,
    cells: Vec<Symbol>,
}

impl TorusConfig {
    pub fn zeros(m: u32, sides: &[usize]) -> Result<Self, EngineError> {
        if sides.is_empty() || sides.contains(&0) {
            return Err(EngineError::BadSides);
        }
        Ok(TorusConfig { m, sides: sides.to_vec(), cells: vec![0; sides.iter().product()] })
    }

    pub fn from_cells(m: u32, sides: &[usize], cells: Vec<Symbol>) -> Result<Self, EngineError> {
        let mut c = Self::zeros(m, sides)?;
        if cells.len() != c.cells.len() {
            return Err(EngineError::CellCount { expected: c.cells.len(), got: cells.len() });
        }
        if let Some(&symbol) = cells.iter().find(|&&s| s >= m) {
            return Err(EngineError::SymbolOutOfRange { symbol, m });
        }
        c.cells = cells;
        Ok(c)
    }

    /// Uniform random configuration drawn from stream `stream` of `seed`.
    pub fn random(m: u32, sides: &[usize], seed: u64, stream: u64) -> Result<Self, EngineError> {
        let mut c = Self::zeros(m, sides)?;
        c.randomize(seed, stream);
        Ok(c)
    }

    /// Refills every cell from stream `stream` of `seed`.
    pub fn randomize(&mut self, seed: u64, stream: u64) {
        SymbolRng::new(seed, stream, self.m).fill(&mut self.cells);
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn cells(&self) -> &[Symbol] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Index of a lattice point reduced mod the sides.
    pub fn index_of(&self, p: &Point) -> usize {
        let mut idx = 0usize;
        for j in (0..self.dim()).rev() {
            let s = self.sides[j] as i64;
            idx = idx * self.sides[j] + p.get(j).rem_euclid(s) as usize;
        }
        idx
    }

    pub fn point_at(&self, mut idx: usize) -> Point {
        let mut c = Vec::with_capacity(self.dim());
        for &s in &self.sides {
            c.push((idx % s) as i64);
            idx /= s;
        }
        Point::new(c)
    }

    pub fn get(&self, p: &Point) -> Symbol {
        self.cells[self.index_of(p)]
    }

    pub fn set(&mut self, p: &Point, s: Symbol) -> Result<(), EngineError> {
        if s >= self.m {
            return Err(EngineError::SymbolOutOfRange { symbol: s, m: self.m });
        }
        let i = self.index_of(p);
        self.cells[i] = s;
        Ok(())
    }

    /// Writes `w` with its box translated by `at`, wrapping around.
    pub fn paste(&mut self, w: &Window, at: &Point) -> Result<(), EngineError> {
        for (p, s) in w.iter() {
            self.set(&p.add(at), s)?;
        }
        Ok(())
    }

    pub fn population(&self) -> usize {
        self.cells.iter().filter(|&&s| s != 0).count()
    }

    /// Cyclic shift: `out[i] = self[i + v]`.
    pub fn shifted(&self, v: &Point) -> TorusConfig {
        let mut out = self.clone();
        for i in 0..self.cells.len() {
            let p = self.point_at(i);
            out.cells[i] = self.get(&p.add(v));
        }
        out
    }

    /// `sides=(s1,...,sd)` followed by whitespace-separated symbols, first axis fastest.
    pub fn to_text(&self) -> String {
        let mut out = format!("sides={}\n", Point::new(self.sides.iter().map(|&s| s as i64).collect()));
        for row in self.cells.chunks(self.sides[0]) {
            let line: Vec<String> = row.iter().map(|s| s.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, m: u32) -> Result<Self, EngineError> {
        let mut sides: Option<Vec<usize>> = None;
        let mut cells = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if sides.is_none() {
                let v = line
                    .strip_prefix("sides")
                    .map(str::trim_start)
                    .and_then(|r| r.strip_prefix('='))
                    .ok_or_else(|| EngineError::Parse {
                        line: i + 1,
                        message: "expected sides=(s1,...,sd) header".into(),
                    })?;
                let p: Point = v.trim().parse().map_err(|e| EngineError::Parse {
                    line: i + 1,
                    message: format!("{e}"),
                })?;
                if p.coords().iter().any(|&s| s < 1) {
                    return Err(EngineError::BadSides);
                }
                sides = Some(p.coords().iter().map(|&s| s as usize).collect());
                continue;
            }
            for tok in line.split_whitespace() {
                let s = tok.parse::<Symbol>().map_err(|_| EngineError::Parse {
                    line: i + 1,
                    message: format!("bad symbol {tok:?}"),
                })?;
                cells.push(s);
            }
        }
        let sides = sides.ok_or(EngineError::Parse { line: 1, message: "missing sides header".into() })?;
        Self::from_cells(m, &sides, cells)
    }

    /// Restriction to a box (coordinates taken mod the sides).
    pub fn window(&self, bbox: &Boxed) -> Window {
        let cells = bbox.points().map(|p| self.get(&p)).collect();
        Window { bbox: bbox.clone(), cells }
    }
}

/// A finite box with a symbol at every cell.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Window {
    bbox: Boxed,
    cells: Vec<Symbol>,
}

impl Window {
    pub fn new(bbox: Boxed, cells: Vec<Symbol>) -> Result<Self, EngineError> {
        if cells.len() != bbox.len() {
            return Err(EngineError::CellCount { expected: bbox.len(), got: cells.len() });
        }
        Ok(Window { bbox, cells })
    }

    pub fn filled(bbox: Boxed, s: Symbol) -> Self {
        let n = bbox.len();
        Window { bbox, cells: vec![s; n] }
    }

    /// Random window from a seeded stream.
    pub fn random(bbox: Boxed, m: u32, seed: u64) -> Self {
        let mut cells = vec![0; bbox.len()];
        SymbolRng::new(seed, 0, m).fill(&mut cells);
        Window { bbox, cells }
    }

    pub fn bbox(&self) -> &Boxed {
        &self.bbox
    }

    pub fn cells(&self) -> &[Symbol] {
        &self.cells
    }

    pub fn get(&self, p: &Point) -> Option<Symbol> {
        self.bbox.index_of(p).map(|i| self.cells[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point, Symbol)> + '_ {
        self.bbox.points().zip(self.cells.iter().copied())
    }

    pub fn population(&self) -> usize {
        self.cells.iter().filter(|&&s| s != 0).count()
    }

    /// Smallest sub-window containing every nonzero cell.
    pub fn trimmed(&self) -> Option<Window> {
        let nz: Vec<Point> = self.iter().filter(|(_, s)| *s != 0).map(|(p, _)| p).collect();
        let b = Boxed::bounding(nz.iter())?;
        let cells = b.points().map(|p| self.get(&p).unwrap()).collect();
        Some(Window { bbox: b, cells })
    }
}

/// Precomputed wrapped neighbor tables for one rule on one torus shape.
pub struct Stepper<'r> {
    rule: &'r LocalRule,
    sides: Vec<usize>,
    /// `axis_wrap[j][s][c] = (c + offset_s[j]) mod side_j`
    axis_wrap: Vec<Vec<Vec<usize>>>,
    strides: Vec<usize>,
}

impl<'r> Stepper<'r> {
    pub fn new(rule: &'r LocalRule, sides: &[usize]) -> Result<Self, EngineError> {
        if rule.dim() != sides.len() {
            return Err(EngineError::DimensionMismatch { rule: rule.dim(), config: sides.len() });
        }
        for (axis, ((lo, hi), &side)) in rule.neighborhood().extent().into_iter().zip(sides).enumerate() {
            let need = (hi - lo + 1) as usize;
            if side < need {
                return Err(EngineError::TorusTooSmall { axis, side, need });
            }
        }
        let offsets = rule.neighborhood().offsets();
        let axis_wrap = sides
            .iter()
            .enumerate()
            .map(|(j, &side)| {
                offsets
                    .iter()
                    .map(|o| {
                        (0..side)
                            .map(|c| (c as i64 + o.get(j)).rem_euclid(side as i64) as usize)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut strides = vec![1usize; sides.len()];
        for j in 1..sides.len() {
            strides[j] = strides[j - 1] * sides[j - 1];
        }
        Ok(Stepper { rule, sides: sides.to_vec(), axis_wrap, strides })
    }

    fn check(&self, cfg: &TorusConfig) -> Result<(), EngineError> {
        if cfg.sides != self.sides {
            return Err(EngineError::DimensionMismatch { rule: self.sides.len(), config: cfg.dim() });
        }
        Ok(())
    }

    /// `out_i = f(cfg at i + D)`.
    pub fn step_into(&self, cfg: &TorusConfig, out: &mut TorusConfig) -> Result<(), EngineError> {
        self.check(cfg)?;
        self.check(out)?;
        let width = self.sides[0];
        let n = self.rule.neighborhood().len();
        let d = self.sides.len();
        out.cells
            .par_chunks_mut(width)
            .enumerate()
            .for_each_init(
                || (vec![0usize; n], vec![0 as Symbol; n]),
                |(bases, slots), (row, out_row)| {
                    // coordinates of axes 1..d for this row
                    let mut rest = row;
                    bases.iter_mut().for_each(|b| *b = 0);
                    for j in 1..d {
                        let c = rest % self.sides[j];
                        rest /= self.sides[j];
                        for (s, b) in bases.iter_mut().enumerate() {
                            *b += self.axis_wrap[j][s][c] * self.strides[j];
                        }
                    }
                    for (x, cell) in out_row.iter_mut().enumerate() {
                        for s in 0..n {
                            slots[s] = cfg.cells[bases[s] + self.axis_wrap[0][s][x]];
                        }
                        *cell = self.rule.eval_slots(slots);
                    }
                },
            );
        Ok(())
    }

    pub fn step(&self, cfg: &TorusConfig) -> Result<TorusConfig, EngineError> {
        let mut out = cfg.clone();
        self.step_into(cfg, &mut out)?;
        Ok(out)
    }

    pub fn iterate(&self, cfg: &TorusConfig, n: u64) -> Result<TorusConfig, EngineError> {
        self.check(cfg)?;
        let mut cur = cfg.clone();
        let mut next = cfg.clone();
        for _ in 0..n {
            self.step_into(&cur, &mut next)?;
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }
}

fn check_rule(rule: &LocalRule, cfg: &TorusConfig) -> Result<(), EngineError> {
    if rule.dim() != cfg.dim() {
        return Err(EngineError::DimensionMismatch { rule: rule.dim(), config: cfg.dim() });
    }
    Ok(())
}

/// One application of the global map.
pub fn step(rule: &LocalRule, cfg: &TorusConfig) -> Result<TorusConfig, EngineError> {
    check_rule(rule, cfg)?;
    Stepper::new(rule, cfg.sides())?.step(cfg)
}

/// `n` applications of the global map.
pub fn iterate(rule: &LocalRule, cfg: &TorusConfig, n: u64) -> Result<TorusConfig, EngineError> {
    check_rule(rule, cfg)?;
    if n == 0 {
        return Ok(cfg.clone());
    }
    Stepper::new(rule, cfg.sides())?.iterate(cfg, n)
}

/// Output box of `n` steps on `input`: the cells whose `n`-fold cone fits inside.
pub fn window_output_box(rule: &LocalRule, input: &Boxed, n: u64) -> Option<Boxed> {
    let n = n as i64;
    let ext = rule.neighborhood().extent();
    let lo: Vec<i64> = ext.iter().enumerate().map(|(j, (dmin, _))| input.lo().get(j) - n * dmin).collect();
    let hi: Vec<i64> = ext.iter().enumerate().map(|(j, (_, dmax))| input.hi().get(j) - n * dmax).collect();
    Boxed::new(Point::new(lo), Point::new(hi))
}

/// Evaluates `n` steps on a finite window without periodic wrap.
pub fn window_eval(rule: &LocalRule, input: &Window, n: u64) -> Result<Window, EngineError> {
    if rule.dim() != input.bbox.dim() {
        return Err(EngineError::DimensionMismatch { rule: rule.dim(), config: input.bbox.dim() });
    }
    window_output_box(rule, &input.bbox, n).ok_or(EngineError::EmptyOutput)?;
    let offsets = rule.neighborhood().offsets();
    let mut cur = input.clone();
    let mut slots = vec![0 as Symbol; offsets.len()];
    for _ in 0..n {
        let out_box = window_output_box(rule, &cur.bbox, 1).expect("checked above");
        let sides = cur.bbox.sides();
        let mut strides = vec![1i64; sides.len()];
        for j in 1..sides.len() {
            strides[j] = strides[j - 1] * sides[j - 1] as i64;
        }
        let deltas: Vec<i64> = offsets
            .iter()
            .map(|o| o.coords().iter().zip(&strides).map(|(c, s)| c * s).sum())
            .collect();
        let cells = out_box
            .points()
            .map(|p| {
                let base = cur.bbox.index_of(&p).expect("output cell inside input box") as i64;
                for (s, dl) in slots.iter_mut().zip(&deltas) {
                    *s = cur.cells[(base + dl) as usize];
                }
                rule.eval_slots(&slots)
            })
            .collect();
        cur = Window { bbox: out_box, cells };
    }
    Ok(cur)
}

/// Every torus offset `t` with `cfg` on `motif.box + t` equal to the motif, ascending.
pub fn detect_translates(cfg: &TorusConfig, motif: &Window) -> Vec<Point> {
    if motif.bbox.dim() != cfg.dim() {
        return Vec::new();
    }
    let cells: Vec<(Point, Symbol)> = motif.iter().collect();
    let mut hits: Vec<Point> = (0..cfg.len())
        .into_par_iter()
        .filter_map(|i| {
            let t = cfg.point_at(i);
            cells.iter().all(|(p, s)| cfg.get(&p.add(&t)) == *s).then_some(t)
        })
        .collect();
    hits.sort();
    hits
}

/// Binary PGM (`P5`) bytes for a two-dimensional configuration.
pub fn pgm_bytes(cfg: &TorusConfig) -> Result<Vec<u8>, EngineError> {
    if cfg.dim() != 2 {
        return Err(EngineError::NotTwoDimensional);
    }
    if cfg.m > 256 {
        return Err(EngineError::UnsupportedDepth(cfg.m));
    }
    let (w, h) = (cfg.sides[0], cfg.sides[1]);
    let mut out = format!("P5\n{w} {h}\n{}\n", cfg.m - 1).into_bytes();
    out.reserve(w * h);
    for y in (0..h).rev() {
        out.extend(cfg.cells[y * w..(y + 1) * w].iter().map(|&s| s as u8));
    }
    Ok(out)
}

pub fn write_pgm(cfg: &TorusConfig, path: impl AsRef<Path>) -> Result<(), EngineError> {
    let bytes = pgm_bytes(cfg)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

impl fmt::Display for TorusConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laurent::iterated_rule;

    fn p(c: &[i64]) -> Point {
        Point::new(c.to_vec())
    }

    fn ex34() -> LocalRule {
        LocalRule::linear(2, 2, vec![(p(&[0, 0]), 1), (p(&[0, 1]), 1), (p(&[1, 1]), 1)]).unwrap()
    }

    fn ones(cfg: &TorusConfig) -> Vec<Point> {
        (0..cfg.len()).filter(|&i| cfg.cells()[i] == 1).map(|i| cfg.point_at(i)).collect()
    }

    #[test]
    fn step_examples() {
        let r = ex34();
        let zero = TorusConfig::zeros(2, &[8, 8]).unwrap();
        assert_eq!(step(&r, &zero).unwrap(), zero);
        let mut delta = zero.clone();
        delta.set(&p(&[0, 0]), 1).unwrap();
        let out = step(&r, &delta).unwrap();
        let mut got = ones(&out);
        got.sort();
        assert_eq!(got, vec![p(&[0, 0]), p(&[0, 7]), p(&[7, 7])]);
        let id = LocalRule::linear(2, 2, vec![(p(&[0, 0]), 1)]).unwrap();
        let rnd = TorusConfig::random(2, &[5, 4], 3, 0).unwrap();
        assert_eq!(step(&id, &rnd).unwrap(), rnd);
    }

    #[test]
    fn iterate_self_replicates_a_delta() {
        let r = ex34();
        let mut cfg = TorusConfig::zeros(2, &[100, 100]).unwrap();
        cfg.set(&p(&[50, 50]), 1).unwrap();
        assert_eq!(iterate(&r, &cfg, 0).unwrap(), cfg);
        let mut got = ones(&iterate(&r, &cfg, 16).unwrap());
        got.sort();
        assert_eq!(got, vec![p(&[34, 34]), p(&[50, 34]), p(&[50, 50])]);
        let mut got = ones(&iterate(&r, &cfg, 32).unwrap());
        got.sort();
        assert_eq!(got, vec![p(&[18, 18]), p(&[50, 18]), p(&[50, 50])]);
    }

    #[test]
    fn small_torus_rejected() {
        let r = ex34();
        let cfg = TorusConfig::zeros(2, &[1, 5]).unwrap();
        assert!(matches!(step(&r, &cfg), Err(EngineError::TorusTooSmall { axis: 0, side: 1, need: 2 })));
        let cfg3 = TorusConfig::zeros(2, &[4, 4, 4]).unwrap();
        assert!(matches!(step(&r, &cfg3), Err(EngineError::DimensionMismatch { .. })));
    }

    #[test]
    fn window_eval_shapes_and_values() {
        let r = ex34();
        let b = Boxed::new(p(&[0, 0]), p(&[1, 1])).unwrap();
        let w = Window::new(b.clone(), vec![1, 0, 1, 1]).unwrap();
        let out = window_eval(&r, &w, 1).unwrap();
        assert_eq!(out.bbox(), &Boxed::new(p(&[0, 0]), p(&[0, 0])).unwrap());
        // x00 + x01 + x11 = 1 + 1 + 1
        assert_eq!(out.cells(), &[1]);

        let b3 = Boxed::new(p(&[0, 0]), p(&[2, 2])).unwrap();
        let all = Window::filled(b3, 1);
        let two = window_eval(&r, &all, 2).unwrap();
        // f^2 = x00 + x02 + x22, so three ones sum to 1 mod 2
        let f2 = iterated_rule(&r, 2).unwrap();
        assert_eq!(window_eval(&f2, &all, 1).unwrap(), two);
        assert_eq!(two.cells(), &[1]);
        assert!(matches!(window_eval(&r, &Window::filled(b, 0), 2), Err(EngineError::EmptyOutput)));
    }

    #[test]
    fn translates_and_pgm() {
        let mut cfg = TorusConfig::zeros(2, &[10, 10]).unwrap();
        let motif = Window::new(Boxed::new(p(&[2, 2]), p(&[3, 3])).unwrap(), vec![1, 0, 1, 1]).unwrap();
        cfg.paste(&motif, &Point::origin(2)).unwrap();
        assert_eq!(detect_translates(&cfg, &motif), vec![p(&[0, 0])]);
        let empty = TorusConfig::zeros(2, &[10, 10]).unwrap();
        assert!(detect_translates(&empty, &motif).is_empty());

        let z = TorusConfig::zeros(2, &[2, 2]).unwrap();
        assert_eq!(pgm_bytes(&z).unwrap(), b"P5\n2 2\n1\n\x00\x00\x00\x00".to_vec());
        let mut tb = TorusConfig::zeros(3, &[2, 2]).unwrap();
        tb.set(&p(&[1, 1]), 2).unwrap();
        // top row is y = 1
        assert_eq!(&pgm_bytes(&tb).unwrap()[9..], &[0, 2, 0, 0]);
        let big = TorusConfig::zeros(300, &[2, 2]).unwrap();
        assert!(matches!(pgm_bytes(&big), Err(EngineError::UnsupportedDepth(300))));
    }

    #[test]
    fn text_round_trip() {
        let cfg = TorusConfig::random(3, &[4, 3, 2], 9, 1).unwrap();
        let back = TorusConfig::from_text(&cfg.to_text(), 3).unwrap();
        assert_eq!(back, cfg);
        assert!(TorusConfig::from_text("sides=(2,2)\n0 1 2\n", 3).is_err());
        assert!(TorusConfig::from_text("sides=(2,2)\n0 1 2 3\n", 3).is_err());
    }

    #[test]
    fn shift_equivariance() {
        let r = ex34();
        let cfg = TorusConfig::random(2, &[7, 6], 5, 2).unwrap();
        for v in [p(&[1, 0]), p(&[0, 1]), p(&[3, 5])] {
            assert_eq!(step(&r, &cfg.shifted(&v)).unwrap(), step(&r, &cfg).unwrap().shifted(&v));
        }
    }
}
