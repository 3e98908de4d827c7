//! Multidimensional cellular automata over `Z_m`: permutivity, the Mixing
//! Algorithm on apex sets, Laurent iteration of linear rules, torus
//! simulation, and cylinder-set measures.

pub mod engine;
pub mod expr;
pub mod hull;
pub mod lang;
pub mod laurent;
pub mod measure;
pub mod point;
pub mod rng;
pub mod rule;

pub use engine::{detect_translates, iterate, step, window_eval, write_pgm, EngineError, Stepper, TorusConfig, Window};
pub use expr::Expr;
pub use hull::{
    corner_condition, hull_points, hypercuboid_bounds, minimal_apex_set, mixing_algorithm, ApexSet, HullError,
    MaRule, MaStep, MaTrace, Verdict as MaVerdict,
};
pub use lang::{format_rule, parse_rule, parse_rule_with_warnings, ParseError};
pub use laurent::{chi, chi_inverse, iterated_rule, LaurentError, LaurentPoly};
pub use measure::{
    check_k_mixing, cylinder_measure, escape_bound, escape_bound_chain, exact_joint_measure, preimage_census,
    sampled_joint_measure, Census, Cylinder, ExactMeasure, MeasureError, MixingReport, Mode, Verdict,
};
pub use point::{Boxed, Point};
pub use rule::{Alphabet, Budget, LocalRule, Neighborhood, PatternAssignment, RuleError, Symbol};
