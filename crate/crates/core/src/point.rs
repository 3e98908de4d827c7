//! Integer lattice points and axis-aligned boxes.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// A point of the integer lattice `Z^d`, also used for offsets and exponents.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct Point(Vec<i64>);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PointParseError {
    #[error("expected a tuple like (a,b,...), got {0:?}")]
    NotATuple(String),
    #[error("bad coordinate {0:?}")]
    BadCoordinate(String),
}

impl Point {
    pub fn new(coords: Vec<i64>) -> Self {
        Point(coords)
    }

    pub fn origin(dim: usize) -> Self {
        Point(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn get(&self, axis: usize) -> i64 {
        self.0[axis]
    }

    pub fn add(&self, other: &Point) -> Point {
        debug_assert_eq!(self.dim(), other.dim());
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Point) -> Point {
        debug_assert_eq!(self.dim(), other.dim());
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, k: i64) -> Point {
        Point(self.0.iter().map(|a| a * k).collect())
    }

    pub fn neg(&self) -> Point {
        self.scale(-1)
    }

    /// Drops coordinate `axis`, producing a point of dimension `d - 1`.
    pub fn without_axis(&self, axis: usize) -> Point {
        let mut c = self.0.clone();
        c.remove(axis);
        Point(c)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }
}

impl From<Vec<i64>> for Point {
    fn from(v: Vec<i64>) -> Self {
        Point(v)
    }
}

impl<const N: usize> From<[i64; N]> for Point {
    fn from(v: [i64; N]) -> Self {
        Point(v.to_vec())
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for Point {
    type Err = PointParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let inner = t
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| PointParseError::NotATuple(s.to_string()))?;
        if inner.trim().is_empty() {
            return Err(PointParseError::NotATuple(s.to_string()));
        }
        inner
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<i64>()
                    .map_err(|_| PointParseError::BadCoordinate(c.trim().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Point)
    }
}

/// Inclusive axis-aligned box `[lo_j, hi_j]` in every axis.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Boxed {
    lo: Point,
    hi: Point,
}

impl Boxed {
    /// Returns `None` when `lo` and `hi` disagree in dimension or `lo_j > hi_j` somewhere.
    pub fn new(lo: Point, hi: Point) -> Option<Self> {
        if lo.dim() != hi.dim() || lo.dim() == 0 {
            return None;
        }
        if lo.coords().iter().zip(hi.coords()).any(|(a, b)| a > b) {
            return None;
        }
        Some(Boxed { lo, hi })
    }

    /// Box with lower corner `lo` and the given side lengths (all ≥ 1).
    pub fn with_sides(lo: Point, sides: &[usize]) -> Option<Self> {
        if sides.contains(&0) || lo.dim() != sides.len() {
            return None;
        }
        let hi = Point::new(
            lo.coords()
                .iter()
                .zip(sides)
                .map(|(a, &s)| a + s as i64 - 1)
                .collect(),
        );
        Boxed::new(lo, hi)
    }

    /// Smallest box containing all points.
    pub fn bounding<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut lo = first.coords().to_vec();
        let mut hi = lo.clone();
        for p in it {
            for (j, &c) in p.coords().iter().enumerate() {
                lo[j] = lo[j].min(c);
                hi[j] = hi[j].max(c);
            }
        }
        Boxed::new(Point(lo), Point(hi))
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn lo(&self) -> &Point {
        &self.lo
    }

    pub fn hi(&self) -> &Point {
        &self.hi
    }

    pub fn sides(&self) -> Vec<usize> {
        self.lo
            .coords()
            .iter()
            .zip(self.hi.coords())
            .map(|(a, b)| (b - a + 1) as usize)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.sides().iter().product()
    }

    /// Never true: a box holds at least its corner.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim()
            && p
                .coords()
                .iter()
                .zip(self.lo.coords().iter().zip(self.hi.coords()))
                .all(|(c, (a, b))| a <= c && c <= b)
    }

    /// Linear index with the first axis varying fastest.
    pub fn index_of(&self, p: &Point) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let sides = self.sides();
        let mut idx = 0usize;
        for j in (0..self.dim()).rev() {
            idx = idx * sides[j] + (p.get(j) - self.lo.get(j)) as usize;
        }
        Some(idx)
    }

    pub fn point_at(&self, mut idx: usize) -> Point {
        let sides = self.sides();
        let mut c = Vec::with_capacity(self.dim());
        for (j, &s) in sides.iter().enumerate() {
            c.push(self.lo.get(j) + (idx % s) as i64);
            idx /= s;
        }
        Point(c)
    }

    /// All points, first axis fastest.
    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.point_at(i))
    }

    /// Lattice points in lexicographic order (first axis slowest).
    pub fn points_lex(&self) -> Vec<Point> {
        let mut pts: Vec<Point> = self.points().collect();
        pts.sort();
        pts
    }
}

impl fmt::Display for Boxed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

impl FromStr for Boxed {
    type Err = PointParseError;

    /// `(lo..):(hi..)`, or a single tuple for a one-cell box.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = match s.split_once(':') {
            Some((a, b)) => (a.parse::<Point>()?, b.parse::<Point>()?),
            None => {
                let p = s.parse::<Point>()?;
                (p.clone(), p)
            }
        };
        Boxed::new(lo, hi).ok_or_else(|| PointParseError::NotATuple(s.to_string()))
    }
}
