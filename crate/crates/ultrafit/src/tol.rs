//! Numeric tolerances used across the crate, collected in one place so the
//! relationships between them stay visible.

/// Maximum constraint violation accepted as "feasible" for LP points.
///
/// Solutions returned by the solver satisfy every emitted row within this
/// tolerance; feasibility prechecks elsewhere (the rounding engine, audits)
/// measure against it as well.
pub const FEASIBILITY: f64 = 1e-7;

/// Reduced-cost threshold at which the simplex declares optimality.
pub const OPTIMALITY: f64 = 1e-7;

/// Cushion for strict threshold comparisons on LP values.
///
/// Classifications of the form "mass strictly above a threshold" must not flip
/// because of round-off in the solved point, so strictness is evaluated with
/// this margin through [`strictly_greater`] / [`strictly_less`].
pub const STRICTNESS: f64 = 1e-9;

/// Slack when cross-checking two independent computations of the same
/// objective value (solver objective vs. per-edge cost sum).
pub const OBJECTIVE_MATCH: f64 = 1e-6;

/// Tolerance for constraint checks performed on cleaned-up solutions in
/// audits; slightly looser than [`FEASIBILITY`] because the post-solve
/// cleanup (clamping, monotonicity sweep) may shift entries by up to the
/// solver tolerance.
pub const AUDIT_FEASIBILITY: f64 = 1e-6;

/// A denominator at or below this is treated as zero when forming ratios.
pub const RATIO_FLOOR: f64 = 1e-9;

/// `a > b`, robust to round-off: true whenever the exact values satisfy the
/// strict inequality, at the price of also accepting values within
/// [`STRICTNESS`] below the threshold.
#[inline]
pub fn strictly_greater(a: f64, b: f64) -> bool {
    a > b - STRICTNESS
}

/// `a < b`, robust to round-off; mirror image of [`strictly_greater`].
#[inline]
pub fn strictly_less(a: f64, b: f64) -> bool {
    a < b + STRICTNESS
}
