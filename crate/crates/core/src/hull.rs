//! Apex sets, their lattice convex hulls, and the Mixing Algorithm.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use thiserror::Error;

use crate::point::{Boxed, Point, PointParseError};

/// Largest dimension for which hull enumeration is supported.
pub const MAX_HULL_DIM: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HullError {
    #[error("apex set is empty")]
    Empty,
    #[error("vertex {0} has the wrong number of coordinates")]
    Arity(Point),
    #[error("hull enumeration supports d <= {MAX_HULL_DIM}, got d = {0}")]
    UnsupportedDimension(usize),
    #[error("coordinate index {0} out of range")]
    BadAxis(usize),
    #[error("{0} is not a vertex of the apex set")]
    InvalidVertex(Point),
    #[error("{0} is not a corner of the bounds")]
    InvalidCorner(Point),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: PointParseError },
}

/// A finite set of distinct lattice points in `Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ApexSet {
    dim: usize,
    vertices: BTreeSet<Point>,
}

impl ApexSet {
    pub fn new(vertices: impl IntoIterator<Item = Point>) -> Result<Self, HullError> {
        let vertices: BTreeSet<Point> = vertices.into_iter().collect();
        let first = vertices.iter().next().ok_or(HullError::Empty)?;
        let dim = first.dim();
        if dim == 0 {
            return Err(HullError::Arity(first.clone()));
        }
        if let Some(bad) = vertices.iter().find(|v| v.dim() != dim) {
            return Err(HullError::Arity(bad.clone()));
        }
        Ok(ApexSet { dim, vertices })
    }

    fn from_set_unchecked(dim: usize, vertices: BTreeSet<Point>) -> Self {
        ApexSet { dim, vertices }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, v: &Point) -> bool {
        self.vertices.contains(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point> {
        self.vertices.iter()
    }

    /// `M_j(C)` or `m_j(C)`; `axis` is zero-based.
    pub fn extremum(&self, axis: usize, which: Extremum) -> Result<i64, HullError> {
        if axis >= self.dim {
            return Err(HullError::BadAxis(axis));
        }
        extremum_of(self.vertices.iter(), axis, which).ok_or(HullError::Empty)
    }

    /// One vertex per line as `(c1,...,cd)`.
    pub fn to_text(&self) -> String {
        self.vertices.iter().map(|v| format!("{v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self, HullError> {
        let mut pts = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let p = line
                .parse::<Point>()
                .map_err(|source| HullError::Parse { line: i + 1, source })?;
            pts.push(p);
        }
        ApexSet::new(pts)
    }

    /// `C` with axis `axis` deleted from every point of `{u in C : u_axis = value}`.
    fn slice(&self, axis: usize, value: i64) -> ApexSet {
        let vs = self
            .vertices
            .iter()
            .filter(|u| u.get(axis) == value)
            .map(|u| u.without_axis(axis))
            .collect();
        ApexSet::from_set_unchecked(self.dim - 1, vs)
    }
}

impl fmt::Display for ApexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, v) in self.vertices.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("}")
    }
}

impl FromStr for ApexSet {
    type Err = HullError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ApexSet::parse(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

fn extremum_of<'a>(
    pts: impl Iterator<Item = &'a Point>,
    axis: usize,
    which: Extremum,
) -> Option<i64> {
    let it = pts.map(|p| p.get(axis));
    match which {
        Extremum::Max => it.max(),
        Extremum::Min => it.min(),
    }
}

/// Lattice points of the convex hull of an apex set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeHull {
    generator: ApexSet,
    points: BTreeSet<Point>,
}

impl LatticeHull {
    pub fn generator(&self) -> &ApexSet {
        &self.generator
    }

    pub fn points(&self) -> &BTreeSet<Point> {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.points.contains(p)
    }
}

type Q = Ratio<i128>;

/// Exact test that `p` is a convex combination of `pts`.
///
/// By Carathéodory it suffices to try affinely independent subsets of size
/// at most `d + 1`; each is solved exactly over the rationals.
pub fn in_convex_hull(pts: &[Point], p: &Point) -> bool {
    if pts.is_empty() {
        return false;
    }
    if pts.contains(p) {
        return true;
    }
    let d = p.dim();
    let k_max = (d + 1).min(pts.len());
    let mut chosen = Vec::with_capacity(k_max);
    (2..=k_max).any(|k| subsets(pts, k, 0, &mut chosen, &mut |s| barycentric_inside(s, p)))
}

fn subsets<'a>(
    pts: &'a [Point],
    k: usize,
    start: usize,
    chosen: &mut Vec<&'a Point>,
    f: &mut impl FnMut(&[&Point]) -> bool,
) -> bool {
    if chosen.len() == k {
        return f(chosen);
    }
    for i in start..pts.len() {
        if pts.len() - i < k - chosen.len() {
            break;
        }
        chosen.push(&pts[i]);
        let hit = subsets(pts, k, i + 1, chosen, f);
        chosen.pop();
        if hit {
            return true;
        }
    }
    false
}

/// Solves `p - s0 = sum l_i (s_i - s0)` and checks `l_i >= 0`, `sum l_i <= 1`.
/// Returns false when the subset is affinely dependent.
fn barycentric_inside(s: &[&Point], p: &Point) -> bool {
    let d = p.dim();
    let k = s.len() - 1;
    // d x (k+1) augmented matrix
    let mut a: Vec<Vec<Q>> = (0..d)
        .map(|r| {
            let mut row: Vec<Q> = (1..=k)
                .map(|c| Q::from_integer((s[c].get(r) - s[0].get(r)) as i128))
                .collect();
            row.push(Q::from_integer((p.get(r) - s[0].get(r)) as i128));
            row
        })
        .collect();
    let mut pivot_row = 0;
    let mut pivots = Vec::with_capacity(k);
    for col in 0..k {
        let Some(r) = (pivot_row..d).find(|&r| a[r][col] != Q::from_integer(0)) else {
            return false;
        };
        a.swap(pivot_row, r);
        let inv = Q::from_integer(1) / a[pivot_row][col];
        for v in &mut a[pivot_row][col..=k] {
            *v *= inv;
        }
        for rr in 0..d {
            if rr != pivot_row && a[rr][col] != Q::from_integer(0) {
                let factor = a[rr][col];
                let pivot = a[pivot_row].clone();
                for (v, &pv) in a[rr][col..=k].iter_mut().zip(&pivot[col..=k]) {
                    *v -= factor * pv;
                }
            }
        }
        pivots.push(pivot_row);
        pivot_row += 1;
    }
    let zero = Q::from_integer(0);
    if (pivot_row..d).any(|r| a[r][k] != zero) {
        return false;
    }
    let lambdas: Vec<Q> = pivots.iter().map(|&r| a[r][k]).collect();
    let total: Q = lambdas.iter().copied().sum();
    lambdas.iter().all(|l| *l >= zero) && total <= Q::from_integer(1)
}

fn check_dim(c: &ApexSet) -> Result<(), HullError> {
    if c.dim() > MAX_HULL_DIM {
        Err(HullError::UnsupportedDimension(c.dim()))
    } else {
        Ok(())
    }
}

/// `poly(C)`: enumerates the bounding box and keeps certified hull members.
pub fn hull_points(c: &ApexSet) -> Result<LatticeHull, HullError> {
    check_dim(c)?;
    let pts: Vec<Point> = c.iter().cloned().collect();
    let bbox = Boxed::bounding(pts.iter()).ok_or(HullError::Empty)?;
    let points = bbox.points().filter(|p| in_convex_hull(&pts, p)).collect();
    Ok(LatticeHull { generator: c.clone(), points })
}

/// Extreme points of `poly(C)`: the `v` in `C` outside the hull of `C \ {v}`.
pub fn minimal_apex_set(c: &ApexSet) -> Result<ApexSet, HullError> {
    check_dim(c)?;
    let pts: Vec<Point> = c.iter().cloned().collect();
    let keep = pts
        .iter()
        .enumerate()
        .filter(|(i, v)| {
            let rest: Vec<Point> = pts
                .iter()
                .enumerate()
                .filter(|(j, _)| j != i)
                .map(|(_, p)| p.clone())
                .collect();
            !in_convex_hull(&rest, v)
        })
        .map(|(_, v)| v.clone());
    Ok(ApexSet::from_set_unchecked(c.dim(), keep.collect()))
}

/// Bounds `(k_j, K_j)` when `C` is exactly the corner set of a hypercuboid.
pub fn hypercuboid_bounds(c: &ApexSet) -> Option<Vec<(i64, i64)>> {
    let bounds: Vec<(i64, i64)> = (0..c.dim())
        .map(|j| {
            (
                extremum_of(c.iter(), j, Extremum::Min).unwrap(),
                extremum_of(c.iter(), j, Extremum::Max).unwrap(),
            )
        })
        .collect();
    let free = bounds.iter().filter(|(k, kk)| k < kk).count();
    if c.len() != 1usize << free {
        return None;
    }
    let all_corners = c.iter().all(|v| {
        v.coords()
            .iter()
            .zip(&bounds)
            .all(|(x, (k, kk))| x == k || x == kk)
    });
    all_corners.then_some(bounds)
}

/// Sign condition on a hypercuboid corner that guarantees escape.
///
/// Axes with `k_j < K_j` need `corner_j > 0` at `K_j` and `corner_j < 0` at `k_j`.
/// A collapsed axis `k_j = K_j = c` imposes nothing; when every axis is
/// collapsed the corner must still be nonzero somewhere.
pub fn corner_condition(corner: &Point, bounds: &[(i64, i64)]) -> Result<bool, HullError> {
    if corner.dim() != bounds.len() {
        return Err(HullError::InvalidCorner(corner.clone()));
    }
    let mut ok = true;
    let mut any_free = false;
    for (&x, &(k, kk)) in corner.coords().iter().zip(bounds) {
        if x != k && x != kk {
            return Err(HullError::InvalidCorner(corner.clone()));
        }
        if k < kk {
            any_free = true;
            ok &= if x == kk { x > 0 } else { x < 0 };
        }
    }
    if !any_free {
        return Ok(!corner.is_zero());
    }
    Ok(ok)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaRule {
    Ma1,
    Ma2,
    Ma3,
    Fail,
}

impl fmt::Display for MaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaRule::Ma1 => "MA1",
            MaRule::Ma2 => "MA2",
            MaRule::Ma3 => "MA3",
            MaRule::Fail => "fail",
        })
    }
}

/// One decision of the Mixing Algorithm.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaStep {
    /// 1 for the input set, `k + 1` for the set produced by `k` projections.
    pub depth: usize,
    pub rule: MaRule,
    /// Zero-based coordinate the rule fired on; `None` for `Fail`.
    pub axis: Option<usize>,
    /// Image of the chosen vertex in the set this step examined.
    pub vertex: Point,
    /// For MA3 the projected set `C^1`; otherwise the set examined.
    pub set: ApexSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaTrace {
    pub verdict: Verdict,
    /// Every step in depth-first order, including abandoned branches.
    pub steps: Vec<MaStep>,
}

impl MaTrace {
    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }

    /// Depth of the accepting MA1/MA2 step, if any.
    pub fn depth(&self) -> Option<usize> {
        self.accepted().then(|| self.steps.last().map(|s| s.depth)).flatten()
    }

    /// The chain of steps leading to acceptance.
    pub fn accepting_path(&self) -> Vec<&MaStep> {
        if !self.accepted() {
            return Vec::new();
        }
        let mut path: Vec<&MaStep> = Vec::new();
        for s in &self.steps {
            while path.last().is_some_and(|p| p.depth >= s.depth) {
                path.pop();
            }
            path.push(s);
        }
        path
    }

    pub fn max_depth(&self) -> usize {
        self.steps.iter().map(|s| s.depth).max().unwrap_or(0)
    }
}

impl fmt::Display for MaTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            let indent = "  ".repeat(s.depth - 1);
            match (s.rule, s.axis) {
                (MaRule::Ma3, Some(j)) => writeln!(
                    f,
                    "{indent}depth {}: MA3 on j={} at {} -> C^{} = {}",
                    s.depth,
                    j + 1,
                    s.vertex,
                    s.depth,
                    s.set
                )?,
                (MaRule::Ma1 | MaRule::Ma2, Some(j)) => writeln!(
                    f,
                    "{indent}depth {}: {} on j={} at {} in {}",
                    s.depth,
                    s.rule,
                    j + 1,
                    s.vertex,
                    s.set
                )?,
                _ => writeln!(f, "{indent}depth {}: fail at {} in {}", s.depth, s.vertex, s.set)?,
            }
        }
        match self.depth() {
            Some(d) => write!(f, "accepted (depth {d})"),
            None => write!(f, "rejected"),
        }
    }
}

/// Runs the Mixing Algorithm on `C` at vertex `v`.
///
/// MA3 branches are tried for every qualifying coordinate, highest first, and
/// the search stops at the first accepting branch.
pub fn mixing_algorithm(c: &ApexSet, v: &Point) -> Result<MaTrace, HullError> {
    if !c.contains(v) {
        return Err(HullError::InvalidVertex(v.clone()));
    }
    let mut steps = Vec::new();
    let ok = ma_rec(c, v, 1, &mut steps);
    Ok(MaTrace {
        verdict: if ok { Verdict::Accepted } else { Verdict::Rejected },
        steps,
    })
}

fn ma_rec(c: &ApexSet, v: &Point, depth: usize, steps: &mut Vec<MaStep>) -> bool {
    let rest: Vec<&Point> = c.iter().filter(|u| *u != v).collect();
    let d = c.dim();
    // M_j(empty) = -inf, m_j(empty) = +inf
    let max_rest = |j: usize| rest.iter().map(|u| u.get(j)).max();
    let min_rest = |j: usize| rest.iter().map(|u| u.get(j)).min();

    for j in 0..d {
        let x = v.get(j);
        if x > 0 && max_rest(j).is_none_or(|mj| x > mj) {
            steps.push(MaStep { depth, rule: MaRule::Ma1, axis: Some(j), vertex: v.clone(), set: c.clone() });
            return true;
        }
    }
    for j in 0..d {
        let x = v.get(j);
        if x < 0 && min_rest(j).is_none_or(|mj| x < mj) {
            steps.push(MaStep { depth, rule: MaRule::Ma2, axis: Some(j), vertex: v.clone(), set: c.clone() });
            return true;
        }
    }
    let qualifying: Vec<usize> = (0..d)
        .rev()
        .filter(|&j| {
            let x = v.get(j);
            (x > 0 && max_rest(j) == Some(x)) || (x < 0 && min_rest(j) == Some(x))
        })
        .collect();
    if qualifying.is_empty() || d == 1 {
        steps.push(MaStep { depth, rule: MaRule::Fail, axis: None, vertex: v.clone(), set: c.clone() });
        return false;
    }
    for j in qualifying {
        let projected = c.slice(j, v.get(j));
        let image = v.without_axis(j);
        steps.push(MaStep {
            depth,
            rule: MaRule::Ma3,
            axis: Some(j),
            vertex: v.clone(),
            set: projected.clone(),
        });
        if ma_rec(&projected, &image, depth + 1, steps) {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[&[i64]]) -> ApexSet {
        ApexSet::new(v.iter().map(|c| Point::new(c.to_vec()))).unwrap()
    }

    fn ex43() -> ApexSet {
        pts(&[&[-1, -1], &[-1, 1], &[0, 2], &[1, 1], &[1, -1]])
    }

    pub(crate) fn ex45() -> ApexSet {
        pts(&[
            &[0, 2, -1], &[-1, 0, -1], &[0, -2, -1], &[2, -2, -1], &[3, 0, -1], &[2, 2, -1],
            &[0, 2, 1], &[-1, 0, 1], &[0, -2, 1], &[2, -2, 1], &[3, 0, 1], &[2, 2, 1],
        ])
    }

    #[test]
    fn extrema() {
        assert_eq!(ex43().extremum(1, Extremum::Max), Ok(2));
        assert_eq!(pts(&[&[5, -3]]).extremum(1, Extremum::Min), Ok(-3));
        assert_eq!(ex45().extremum(2, Extremum::Min), Ok(-1));
        assert_eq!(ex43().extremum(2, Extremum::Min), Err(HullError::BadAxis(2)));
        assert_eq!(ApexSet::new(Vec::<Point>::new()), Err(HullError::Empty));
    }

    #[test]
    fn hull_of_small_sets() {
        let sq = pts(&[&[0, 0], &[0, 1], &[1, 0], &[1, 1]]);
        assert_eq!(hull_points(&sq).unwrap().len(), 4);
        assert_eq!(hull_points(&pts(&[&[0, 0]])).unwrap().len(), 1);
        let h = hull_points(&ex43()).unwrap();
        let mut expected: BTreeSet<Point> = Boxed::new(Point::from([-1, -1]), Point::from([1, 1]))
            .unwrap()
            .points()
            .collect();
        expected.insert(Point::from([0, 2]));
        assert_eq!(h.points(), &expected);
        assert_eq!(h.len(), 10);
        let far = ApexSet::new([Point::new(vec![0; 5])]).unwrap();
        assert_eq!(hull_points(&far), Err(HullError::UnsupportedDimension(5)));
    }

    #[test]
    fn minimal_sets() {
        let sq = pts(&[&[-1, -1], &[-1, 1], &[1, -1], &[1, 1], &[0, 0]]);
        assert_eq!(minimal_apex_set(&sq).unwrap(), pts(&[&[-1, -1], &[-1, 1], &[1, -1], &[1, 1]]));
        assert_eq!(minimal_apex_set(&ex43()).unwrap(), ex43());
        let line = pts(&[&[0, 0], &[1, 1], &[2, 2]]);
        assert_eq!(minimal_apex_set(&line).unwrap(), pts(&[&[0, 0], &[2, 2]]));
        assert_eq!(minimal_apex_set(&ex45()).unwrap(), ex45());
    }

    #[test]
    fn hypercuboid_detection() {
        let sq = pts(&[&[0, 0], &[0, 1], &[1, 0], &[1, 1]]);
        assert_eq!(hypercuboid_bounds(&sq), Some(vec![(0, 1), (0, 1)]));
        assert_eq!(hypercuboid_bounds(&ex43()), None);
        assert_eq!(hypercuboid_bounds(&pts(&[&[2, 3]])), Some(vec![(2, 2), (3, 3)]));
        assert_eq!(hypercuboid_bounds(&pts(&[&[0, 0], &[1, 1]])), None);
    }

    #[test]
    fn corner_conditions() {
        let b = [(0, 1), (0, 1)];
        assert_eq!(corner_condition(&Point::from([1, 1]), &b), Ok(true));
        assert_eq!(corner_condition(&Point::from([1, 0]), &b), Ok(false));
        assert_eq!(corner_condition(&Point::from([-1, -1]), &[(-1, 1), (-1, 1)]), Ok(true));
        assert!(corner_condition(&Point::from([2, 0]), &b).is_err());
    }

    #[test]
    fn ma_ex43() {
        let t = mixing_algorithm(&ex43(), &Point::from([0, 2])).unwrap();
        assert!(t.accepted());
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.steps[0].rule, MaRule::Ma1);
        assert_eq!(t.steps[0].axis, Some(1));
    }

    #[test]
    fn ma_ex44() {
        let t = mixing_algorithm(&ex43(), &Point::from([-1, 1])).unwrap();
        assert_eq!(t.depth(), Some(2));
        let path: Vec<(MaRule, Option<usize>)> = t.accepting_path().iter().map(|s| (s.rule, s.axis)).collect();
        assert_eq!(path, vec![(MaRule::Ma3, Some(0)), (MaRule::Ma1, Some(0))]);
        assert_eq!(t.steps[0].set, pts(&[&[-1], &[1]]));
    }

    #[test]
    fn ma_ex45() {
        let t = mixing_algorithm(&ex45(), &Point::from([2, 2, -1])).unwrap();
        assert_eq!(t.depth(), Some(3));
        let path: Vec<(MaRule, Option<usize>)> = t.accepting_path().iter().map(|s| (s.rule, s.axis)).collect();
        assert_eq!(
            path,
            vec![(MaRule::Ma3, Some(2)), (MaRule::Ma3, Some(1)), (MaRule::Ma1, Some(0))]
        );
        assert_eq!(t.steps[0].set, pts(&[&[0, 2], &[-1, 0], &[0, -2], &[2, -2], &[3, 0], &[2, 2]]));
        assert_eq!(t.steps[1].set, pts(&[&[0], &[2]]));
        let text = t.to_string();
        assert!(text.ends_with("accepted (depth 3)"), "{text}");
    }

    #[test]
    fn ma_rejections() {
        let sq = pts(&[&[0, 0], &[0, 1], &[1, 0], &[1, 1]]);
        let t = mixing_algorithm(&sq, &Point::from([1, 0])).unwrap();
        assert!(!t.accepted());
        assert_eq!(t.steps.last().unwrap().rule, MaRule::Fail);
        assert!(mixing_algorithm(&sq, &Point::from([2, 0])).is_err());
        // singleton convention
        assert!(mixing_algorithm(&pts(&[&[0, -1]]), &Point::from([0, -1])).unwrap().accepted());
        assert!(!mixing_algorithm(&pts(&[&[0, 0]]), &Point::from([0, 0])).unwrap().accepted());
    }

    #[test]
    fn apex_text_round_trip() {
        let text = "# ex43\n(-1,-1)\n(-1,1)\n\n(0,2)\n(1,1)\n(1,-1)\n";
        let c: ApexSet = text.parse().unwrap();
        assert_eq!(c, ex43());
        assert_eq!(ApexSet::parse(&c.to_text()).unwrap(), c);
        assert!(matches!(ApexSet::parse("(1,2)\n(1,x)"), Err(HullError::Parse { line: 2, .. })));
        assert!(matches!(ApexSet::parse("(1,2)\n(1)"), Err(HullError::Arity(_))));
    }
}
