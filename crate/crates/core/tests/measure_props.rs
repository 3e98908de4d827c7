use camix_core::{
    corner_condition, escape_bound, exact_joint_measure, parse_rule, preimage_census, sampled_joint_measure, Boxed,
    Budget, Cylinder, ExactMeasure, LocalRule, Point,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn p(c: &[i64]) -> Point {
    Point::new(c.to_vec())
}

/// A random binary linear rule on the corners of a rectangle in `[-1,1]^2`,
/// permutive at a corner that satisfies the corner condition.
fn corner_permutive(rng: &mut StdRng) -> Option<(LocalRule, Point)> {
    let mut bounds = Vec::new();
    for _ in 0..2 {
        let k = rng.random_range(-1..=0);
        bounds.push((k, rng.random_range(k + 1..=1)));
    }
    let corners: Vec<Point> = (0..4)
        .map(|mask| p(&[if mask & 1 == 1 { bounds[0].1 } else { bounds[0].0 }, if mask & 2 == 2 { bounds[1].1 } else { bounds[1].0 }]))
        .collect();
    let v = corners.iter().find(|c| corner_condition(c, &bounds).unwrap())?.clone();
    let terms = corners.iter().map(|c| (c.clone(), if *c == v { 1 } else { rng.random_range(0..2) })).collect();
    Some((LocalRule::linear(2, 2, terms).unwrap(), v))
}

#[test]
fn mixing_identity_beyond_escape_bound() {
    let mut rng = StdRng::seed_from_u64(31);
    let quarter = ExactMeasure::new(1, 2, 2);
    let mut rules = 0;
    while rules < 6 {
        let Some((r, v)) = corner_permutive(&mut rng) else { continue };
        rules += 1;
        for _ in 0..40 {
            let a = p(&[rng.random_range(-2..=2), rng.random_range(-2..=2)]);
            let b = p(&[rng.random_range(-2..=2), rng.random_range(-2..=2)]);
            let (c0, c1) = (Cylinder::single(a, rng.random_range(0..2)), Cylinder::single(b, rng.random_range(0..2)));
            let n0 = escape_bound(&c0, &c1, &v).unwrap();
            for n in n0 + 1..=n0 + 2 {
                let e = exact_joint_measure(&r, &[(0, c0.clone()), (n, c1.clone())], Budget::default()).unwrap();
                assert_eq!(e, quarter, "{r:?} corner {v} {c0} {c1} n={n}");
            }
        }
    }
}

#[test]
fn permutive_rules_have_uniform_fibers() {
    let rules = [
        "m=3\nd=2\nkind=expr\nexpr x[0,0]*x[1,0] + 2*x[1,1]\n",
        "m=4\nd=2\nkind=expr\nexpr 2*(x[-1,-1]*x[0,2] + x[1,1] + x[1,-1]) + x[-1,1]\n",
        "m=5\nd=1\nkind=linear\nterm (0) 3\nterm (1) 0\nterm (2) 4\n",
    ];
    for text in rules {
        let r = parse_rule(text).unwrap();
        assert!(!r.permutive_offsets(Budget::default()).unwrap().is_empty());
        let want = ExactMeasure::new(1, 1, r.m());
        for s in 0..r.m() {
            let c = Cylinder::single(Point::origin(r.dim()), s);
            assert_eq!(exact_joint_measure(&r, &[(1, c)], Budget::default()).unwrap(), want);
        }
    }
}

#[test]
fn corner_permutive_rules_are_balanced() {
    let mut rng = StdRng::seed_from_u64(8);
    let mut seen = 0;
    while seen < 8 {
        let Some((r, _)) = corner_permutive(&mut rng) else { continue };
        seen += 1;
        for hi in [p(&[0, 0]), p(&[1, 1])] {
            let c = preimage_census(&r, &Boxed::new(p(&[0, 0]), hi).unwrap(), Budget::default()).unwrap();
            assert!(c.is_balanced() && c.min() > 0, "{r:?}");
        }
    }
}

#[test]
fn sampled_agrees_with_exact() {
    let r = parse_rule("m=3\nd=2\nkind=expr\nexpr x[0,0]*x[1,0] + x[0,1] + x[1,1]^2\n").unwrap();
    let cases = [
        vec![(0, Cylinder::single(p(&[0, 0]), 1)), (1, Cylinder::single(p(&[0, 0]), 2))],
        vec![(0, "(0,0)=0;(1,0)=0".parse().unwrap()), (2, Cylinder::single(p(&[1, 0]), 0))],
        vec![(1, "(0,0)=2;(0,1)=2".parse().unwrap())],
    ];
    for (i, lagged) in cases.iter().enumerate() {
        let e = exact_joint_measure(&r, lagged, Budget::default()).unwrap().to_f64();
        let s = sampled_joint_measure(&r, lagged, 20_000, i as u64, None).unwrap();
        let sigma = (e * (1.0 - e) / s.trials as f64).sqrt();
        assert!((s.estimate() - e).abs() <= 3.0 * sigma, "case {i}: {} vs {e}", s.estimate());
    }
}
