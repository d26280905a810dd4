//! The recursive randomized rounding engine that turns a fractional level
//! table into an actual ultrametric.
//!
//! One run walks a random recursion tree. Each call owns a vertex set `V`
//! and an upper level `u` (meaning every current distance inside `V` is
//! already at least as small as `d_u`, i.e. at level `≥ u`):
//!
//! 1. **Base case.** `|V| ≤ 2` or `u = L`: the current distances inside `V`
//!    are kept as they are.
//! 2. **Truncate.** The solved table is viewed with `y_ℓ := 0` for `ℓ < u`,
//!    pushing all mass below `u` up to level `u`. The view stays feasible
//!    and keeps `y_L = 1`.
//! 3. **Pivot.** A uniformly random `i ∈ V` is drawn. Every pivot edge
//!    `(i,j)` gets a new level: deterministically the dominant level `ℓ*`
//!    when its mass clears the class threshold (`1−α` on specified edges,
//!    `1−αβ` on unspecified ones), otherwise sampled from the truncated
//!    table — specified edges through the recentered law
//!    `Pr[level ≤ ℓ] = (y_ℓ − αβ)⁺/(1 − αβ)`, unspecified ones through
//!    `Pr[level ≤ ℓ] = y_ℓ`.
//! 4. **Repair.** Every non-pivot pair `(j,k)` is patched so the triangle
//!    through the pivot is ultrametric: equal pivot levels `a = b` give
//!    `max(old, a)` (keep the smaller distance), distinct ones give
//!    `min(a, b)` (force the larger distance).
//! 5. **Recurse.** `V_ℓ = {j : x'(i,j) = ℓ}` for `ℓ ≥ u`; each nonempty
//!    child recurses with upper level `ℓ`, in ascending level order.
//!
//! The root call is `(all vertices, x = input levels, u = 1)`; unspecified
//! pairs enter at level 1, the identity for the repair rules. Distances are
//! level indices end to end — every comparison in the repair step is an
//! exact integer test — and the full recursion is captured in a
//! [`PivotTrace`] for offline audits.
//!
//! Runs are deterministic: the generator is seeded explicitly and consumed
//! in a fixed order (pivot draw, then pivot edges by ascending vertex; base
//! cases consume nothing), so equal `(instance, table, α, β, seed)` give
//! bit-identical traces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::instance::{first_violation_levels, pair_index, Instance, Ultrametric};
use crate::lp::{self, LevelSolution};
use crate::tol;

#[derive(Debug, Error, PartialEq)]
pub enum PivotError {
    #[error("alpha must lie in (0, 0.5] and beta in [0, 1]; got alpha = {alpha}, beta = {beta}")]
    BadParameters { alpha: f64, beta: f64 },
    #[error(
        "rounding requires a normalized, feasible level table \
         (worst violation {violation:.3e})"
    )]
    Infeasible { violation: f64 },
    #[error("level distribution mass {total} differs from 1 beyond 1e-9")]
    CorruptDistribution { total: f64 },
    #[error("internal invariant violated: {0} — this is an implementation bug")]
    Internal(String),
}

/// View of a solution with all mass below `upper` pushed up to `upper`:
/// `y_ℓ = 0` for `ℓ < upper`, untouched above. Cheap to construct (borrows
/// the table); feasibility and `y_L = 1` survive truncation.
#[derive(Clone, Copy)]
pub struct TruncatedView<'a> {
    y_star: &'a LevelSolution,
    upper: usize,
}

/// Truncate a solution at `upper` (1-based; `upper = 1` is the identity).
pub fn truncate(y_star: &LevelSolution, upper: usize) -> TruncatedView<'_> {
    assert!(
        (1..=y_star.num_levels()).contains(&upper),
        "truncation level {upper} outside 1..={}",
        y_star.num_levels()
    );
    TruncatedView { y_star, upper }
}

impl TruncatedView<'_> {
    pub fn upper_level(&self) -> usize {
        self.upper
    }

    pub fn num_levels(&self) -> usize {
        self.y_star.num_levels()
    }

    /// `y_ℓ(pair)` under truncation, `ℓ ∈ 0..=L`.
    pub fn y(&self, level: usize, pair: usize) -> f64 {
        if level < self.upper {
            0.0
        } else {
            self.y_star.y(level, pair)
        }
    }

    /// `Δy_ℓ(pair)` under truncation, `ℓ` 1-based. At `ℓ = upper` this is
    /// the whole accumulated mass `y_upper`.
    pub fn delta(&self, level: usize, pair: usize) -> f64 {
        self.y(level, pair) - self.y(level - 1, pair)
    }

    /// Dominant level of a pair under truncation — the literal argmax over
    /// all levels with the shared smallest-level tie rule, so it agrees
    /// exactly with [`lp::dominant_level`] at `upper = 1`.
    pub fn dominant_level(&self, pair: usize) -> usize {
        lp::argmax_level((1..=self.num_levels()).map(|l| self.delta(l, pair)))
    }
}

/// How one pivot edge is rounded in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RoundingTag {
    /// Specified edge whose dominant mass exceeds `1 − α`: fixed.
    DeterministicE,
    /// Specified edge below the threshold: sampled from the recentered law.
    RandomE,
    /// Unspecified edge whose dominant mass exceeds `1 − αβ`: fixed.
    DeterministicEmpty,
    /// Unspecified edge below the threshold: sampled from the plain law.
    RandomEmpty,
}

/// Classification of a pivot edge: its tag plus the dominant level that
/// deterministic rounding would fix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RoundingClass {
    pub tag: RoundingTag,
    pub dominant_level: usize,
}

/// Classify one pivot edge under a truncated view.
pub fn classify_pivot_edge(
    view: &TruncatedView<'_>,
    pair: usize,
    in_e: bool,
    alpha: f64,
    beta: f64,
) -> RoundingClass {
    let dominant_level = view.dominant_level(pair);
    let mass = view.delta(dominant_level, pair);
    let tag = if in_e {
        if tol::strictly_greater(mass, 1.0 - alpha) {
            RoundingTag::DeterministicE
        } else {
            RoundingTag::RandomE
        }
    } else if tol::strictly_greater(mass, 1.0 - alpha * beta) {
        RoundingTag::DeterministicEmpty
    } else {
        RoundingTag::RandomEmpty
    };
    RoundingClass { tag, dominant_level }
}

/// Inverse-transform draw of a level from the truncated table, recentered
/// by `shift`: `Pr[level ≤ ℓ] = (y_ℓ − shift)⁺ / (1 − shift)`. One uniform
/// consumed per call.
fn draw_level<R: Rng>(
    view: &TruncatedView<'_>,
    pair: usize,
    shift: f64,
    rng: &mut R,
) -> Result<usize, PivotError> {
    let levels = view.num_levels();
    let g = |level: usize| (view.y(level, pair) - shift).max(0.0) / (1.0 - shift);
    let total = g(levels);
    if (total - 1.0).abs() > 1e-9 {
        return Err(PivotError::CorruptDistribution { total });
    }
    let v: f64 = rng.random();
    for level in 1..=levels {
        if g(level) > v {
            return Ok(level);
        }
    }
    Ok(levels)
}

/// New level of a pivot edge: the dominant level for deterministic classes
/// (no randomness consumed), a draw from the class's law otherwise.
pub fn sample_pivot_distance<R: Rng>(
    view: &TruncatedView<'_>,
    pair: usize,
    class: &RoundingClass,
    alpha: f64,
    beta: f64,
    rng: &mut R,
) -> Result<usize, PivotError> {
    match class.tag {
        RoundingTag::DeterministicE | RoundingTag::DeterministicEmpty => {
            Ok(class.dominant_level)
        }
        RoundingTag::RandomE => draw_level(view, pair, alpha * beta, rng),
        RoundingTag::RandomEmpty => draw_level(view, pair, 0.0, rng),
    }
}

/// Repair rule for a non-pivot pair, in level indices. `a` and `b` are the
/// new levels of the two pivot edges of the triangle; `old` is the pair's
/// current level. Equal pivot levels keep the smaller distance
/// (`max(old, a)` in levels); distinct ones force the larger pivot distance
/// (`min(a, b)` in levels). Either way the triangle through the pivot comes
/// out ultrametric.
pub fn repair_level(old: usize, a: usize, b: usize) -> usize {
    if a == b {
        old.max(a)
    } else {
        a.min(b)
    }
}

/// One pivot edge in one frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PivotEdgeRecord {
    /// The non-pivot endpoint.
    pub vertex: usize,
    /// Whether the edge is specified.
    pub in_e: bool,
    pub tag: RoundingTag,
    pub dominant_level: usize,
    /// Level entering the frame.
    pub old_level: usize,
    /// Level after rounding.
    pub new_level: usize,
}

/// One repaired non-pivot pair in one frame (recorded even when unchanged).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairRecord {
    pub j: usize,
    pub k: usize,
    pub old_level: usize,
    pub new_level: usize,
}

/// One child recursion of a frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChildRecord {
    /// The child's upper level: every vertex here sits at this level from
    /// the pivot.
    pub level: usize,
    pub vertices: Vec<usize>,
}

/// One call frame of the recursion, in depth-first pre-order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub index: usize,
    pub parent: Option<usize>,
    pub vertices: Vec<usize>,
    pub upper_level: usize,
    /// `|V| ≤ 2` or `u = L`: nothing was touched and no randomness used.
    pub base_case: bool,
    pub pivot: Option<usize>,
    pub pivot_edges: Vec<PivotEdgeRecord>,
    pub repairs: Vec<RepairRecord>,
    pub children: Vec<ChildRecord>,
}

/// The full recursion of one run, one record per call frame. Everything the
/// offline audits need: entry levels are recoverable because every pair of
/// a frame shows up either as a pivot edge or as a repair, both carrying
/// old and new levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PivotTrace {
    pub frames: Vec<FrameRecord>,
}

impl PivotTrace {
    /// One JSON object per frame, newline-delimited.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for frame in &self.frames {
            out.push_str(&serde_json::to_string(frame).expect("trace serializes"));
            out.push('\n');
        }
        out
    }
}

/// Round a solved table into an ultrametric with a fresh generator seeded
/// from `seed`. See [`run_with`] for the full contract.
pub fn run(
    inst: &Instance,
    y_star: &LevelSolution,
    alpha: f64,
    beta: f64,
    seed: u64,
) -> Result<(Ultrametric, PivotTrace), PivotError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_with(inst, y_star, alpha, beta, &mut rng, false)
}

/// Round a solved table into an ultrametric, consuming randomness from the
/// caller's generator.
///
/// With `force_random` every pivot edge is sampled from the plain law
/// `Pr[level ≤ ℓ] = y_ℓ` regardless of class — the purely randomized
/// rounding used as a comparison baseline; trace tags then record only
/// specified/unspecified membership.
///
/// The output is checked before returning: a non-ultrametric result or a
/// pivot level escaping `[u, L]` is reported as [`PivotError::Internal`]
/// rather than returned.
///
/// # Errors
///
/// Parameters out of range, a table that is unnormalized or infeasible
/// beyond audit tolerance, or an internal invariant failure.
pub fn run_with(
    inst: &Instance,
    y_star: &LevelSolution,
    alpha: f64,
    beta: f64,
    rng: &mut ChaCha8Rng,
    force_random: bool,
) -> Result<(Ultrametric, PivotTrace), PivotError> {
    if !(alpha > 0.0 && alpha <= 0.5) || !(0.0..=1.0).contains(&beta) {
        return Err(PivotError::BadParameters { alpha, beta });
    }
    assert_eq!(y_star.n(), inst.n(), "solution/instance mismatch");
    assert_eq!(y_star.num_levels(), inst.ladder().num_levels());
    if !lp::is_normalized(y_star) {
        return Err(PivotError::Infeasible { violation: f64::INFINITY });
    }
    let violation = lp::feasibility_error(y_star);
    if violation > tol::AUDIT_FEASIBILITY {
        return Err(PivotError::Infeasible { violation });
    }

    let n = inst.n();
    let levels = y_star.num_levels();
    // Unspecified pairs enter at level 1: the largest distance, which the
    // "keep the smaller distance" repair treats as free to overwrite.
    let mut x: Vec<usize> = (0..inst.num_pairs())
        .map(|p| inst.input_level(p).unwrap_or(1))
        .collect();

    let mut frames: Vec<FrameRecord> = Vec::new();
    let mut stack: Vec<(Vec<usize>, usize, Option<usize>)> =
        vec![((0..n).collect(), 1, None)];

    while let Some((vertices, upper, parent)) = stack.pop() {
        let index = frames.len();
        if vertices.len() <= 2 || upper == levels {
            frames.push(FrameRecord {
                index,
                parent,
                vertices,
                upper_level: upper,
                base_case: true,
                pivot: None,
                pivot_edges: Vec::new(),
                repairs: Vec::new(),
                children: Vec::new(),
            });
            continue;
        }

        let view = truncate(y_star, upper);
        let pivot = vertices[rng.random_range(0..vertices.len())];

        let mut pivot_edges = Vec::new();
        for &j in &vertices {
            if j == pivot {
                continue;
            }
            let p = pair_of(n, pivot, j);
            let in_e = inst.is_specified(p);
            let class = classify_pivot_edge(&view, p, in_e, alpha, beta);
            let old_level = x[p];
            let new_level = if force_random {
                draw_level(&view, p, 0.0, rng)?
            } else {
                sample_pivot_distance(&view, p, &class, alpha, beta, rng)?
            };
            if !(upper..=levels).contains(&new_level) {
                return Err(PivotError::Internal(format!(
                    "pivot edge ({pivot}, {j}) rounded to level {new_level} \
                     outside [{upper}, {levels}]"
                )));
            }
            x[p] = new_level;
            pivot_edges.push(PivotEdgeRecord {
                vertex: j,
                in_e,
                tag: class.tag,
                dominant_level: class.dominant_level,
                old_level,
                new_level,
            });
        }

        let mut repairs = Vec::new();
        for (idx, &j) in vertices.iter().enumerate() {
            if j == pivot {
                continue;
            }
            for &k in &vertices[idx + 1..] {
                if k == pivot {
                    continue;
                }
                let p = pair_of(n, j, k);
                let a = x[pair_of(n, pivot, j)];
                let b = x[pair_of(n, pivot, k)];
                let old_level = x[p];
                let new_level = repair_level(old_level, a, b);
                x[p] = new_level;
                repairs.push(RepairRecord { j, k, old_level, new_level });
            }
        }

        let mut children = Vec::new();
        for level in upper..=levels {
            let members: Vec<usize> = vertices
                .iter()
                .copied()
                .filter(|&j| j != pivot && x[pair_of(n, pivot, j)] == level)
                .collect();
            if !members.is_empty() {
                children.push(ChildRecord { level, vertices: members });
            }
        }
        let assigned: usize = children.iter().map(|c| c.vertices.len()).sum();
        if assigned != vertices.len() - 1 {
            return Err(PivotError::Internal(
                "child partition does not cover the frame".into(),
            ));
        }
        // Reverse push so children pop in ascending level order.
        for child in children.iter().rev() {
            stack.push((child.vertices.clone(), child.level, Some(index)));
        }

        frames.push(FrameRecord {
            index,
            parent,
            vertices,
            upper_level: upper,
            base_case: false,
            pivot: Some(pivot),
            pivot_edges,
            repairs,
            children,
        });
    }

    if let Some((i, j, k)) = first_violation_levels(n, &x) {
        return Err(PivotError::Internal(format!(
            "output violates the ultrametric condition at ({i}, {j}, {k})"
        )));
    }
    Ok((Ultrametric::new(n, x), PivotTrace { frames }))
}

fn pair_of(n: usize, a: usize, b: usize) -> usize {
    if a < b {
        pair_index(n, a, b)
    } else {
        pair_index(n, b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{disagreement_cost, parse_instance, InputFormat, Mode};
    use crate::lp::{build_lp, normalize_top_level, solve_lp};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn complete(text: &str) -> Instance {
        parse_instance(text, Mode::Complete, InputFormat::Edges).unwrap()
    }

    fn solved(inst: &Instance) -> LevelSolution {
        normalize_top_level(&solve_lp(&build_lp(inst).unwrap()).unwrap(), inst)
    }

    /// Complete instance on `n` vertices with pair levels drawn uniformly
    /// from a ladder of `levels` values.
    fn random_instance(n: usize, levels: usize, seed: u64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let value = (levels - rng.random_range(0..levels)) as f64;
                edges.push((i, j, value, 1.0));
            }
        }
        let labels: Vec<String> = (0..n).map(|v| format!("v{v}")).collect();
        Instance::new(Mode::Complete, labels, edges).unwrap()
    }

    #[test]
    fn ultrametric_input_with_integral_table_is_kept_verbatim() {
        let inst = complete("a,b,1.0\na,c,2.0\nb,c,2.0\n");
        let y = solved(&inst);
        for seed in 0..20 {
            let (fitted, trace) = run(&inst, &y, 0.4, 0.0, seed).unwrap();
            assert_eq!(disagreement_cost(&inst, &fitted).unwrap(), 0.0);
            for frame in &trace.frames {
                for edge in &frame.pivot_edges {
                    assert!(edge.in_e);
                    assert_eq!(edge.tag, RoundingTag::DeterministicE);
                    assert_eq!(edge.old_level, edge.new_level);
                }
            }
        }
    }

    #[test]
    fn two_vertices_return_immediately() {
        let inst = complete("a,b,4.0\n");
        let y = solved(&inst);
        let (fitted, trace) = run(&inst, &y, 0.5, 0.0, 1).unwrap();
        assert_eq!(fitted.levels(), &[1]);
        assert_eq!(trace.frames.len(), 1);
        assert!(trace.frames[0].base_case);
        assert_eq!(trace.frames[0].pivot, None);
    }

    #[test]
    fn single_level_ladder_is_a_base_case() {
        // u = 1 = L at the root: one frame, nothing modified.
        let inst = complete("a,b,3\na,c,3\na,d,3\nb,c,3\nb,d,3\nc,d,3\n");
        let y = solved(&inst);
        let (fitted, trace) = run(&inst, &y, 0.4, 0.0, 9).unwrap();
        assert_eq!(fitted.levels(), &[1, 1, 1, 1, 1, 1]);
        assert_eq!(trace.frames.len(), 1);
        assert!(trace.frames[0].base_case);
        assert_eq!(trace.frames[0].vertices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn truncation_views() {
        let inst = complete("a,b,1.0\na,c,1.0\nb,c,2.0\n");
        let y = lp::LevelSolution::from_tables(
            &inst,
            &[vec![0.3, 0.6, 0.2], vec![1.0, 1.0, 1.0]],
        );
        // upper = 1 is the identity view.
        let id = truncate(&y, 1);
        for pair in 0..3 {
            for level in 0..=2 {
                assert_eq!(id.y(level, pair), y.y(level, pair));
            }
        }
        // upper = L concentrates all mass at the top level.
        let top = truncate(&y, 2);
        for pair in 0..3 {
            assert_eq!(top.delta(2, pair), 1.0);
            assert_eq!(top.y(1, pair), 0.0);
            assert_eq!(top.dominant_level(pair), 2);
        }
    }

    #[test]
    fn classification_worked_examples() {
        let inst = complete("a,b,1.0\na,c,1.0\nb,c,2.0\n");
        // Pair 0 deltas (0.7, 0.3); pair 1 deltas (0.5, 0.5).
        let y = lp::LevelSolution::from_tables(
            &inst,
            &[vec![0.7, 0.5, 0.0], vec![1.0, 1.0, 1.0]],
        );
        let view = truncate(&y, 1);

        let specified = classify_pivot_edge(&view, 0, true, 0.4, 0.0);
        assert_eq!(specified.tag, RoundingTag::DeterministicE);
        assert_eq!(specified.dominant_level, 1);

        // Same masses as an unspecified edge at α = 3/8, β = 2/3: the
        // threshold is 1 − αβ = 3/4 and 0.7 does not clear it.
        let unspecified = classify_pivot_edge(&view, 0, false, 3.0 / 8.0, 2.0 / 3.0);
        assert_eq!(unspecified.tag, RoundingTag::RandomEmpty);

        // Exact tie goes to the smaller level.
        let tie = classify_pivot_edge(&view, 1, true, 0.4, 0.0);
        assert_eq!(tie.dominant_level, 1);
        assert_eq!(tie.tag, RoundingTag::RandomE);
    }

    #[test]
    fn mass_below_the_shift_is_never_sampled() {
        // α = 3/8, β = 2/3 ⇒ shift 1/4. y₁ = 0.2 < 1/4 on pair 0, so level
        // 1 has recentered probability 0.
        let inst = complete("a,b,1.0\na,c,1.0\nb,c,2.0\n");
        let y = lp::LevelSolution::from_tables(
            &inst,
            &[vec![0.2, 0.5, 0.5], vec![1.0, 1.0, 1.0]],
        );
        let view = truncate(&y, 1);
        let class = RoundingClass { tag: RoundingTag::RandomE, dominant_level: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let level =
                sample_pivot_distance(&view, 0, &class, 3.0 / 8.0, 2.0 / 3.0, &mut rng)
                    .unwrap();
            assert_eq!(level, 2);
        }
    }

    fn chi_squared_ok(observed: &[u64], expected: &[f64]) -> bool {
        let total: u64 = observed.iter().sum();
        let stat: f64 = observed
            .iter()
            .zip(expected)
            .map(|(&o, &p)| {
                let e = p * total as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        let dof = (observed.len() - 1) as f64;
        let critical = ChiSquared::new(dof).unwrap().inverse_cdf(0.999);
        stat < critical
    }

    #[test]
    fn recentered_law_frequencies() {
        // y = (0.5, 1.0) at shift 1/4: Pr[level 1] = (0.5 − 0.25)/0.75 = ⅓.
        let inst = complete("a,b,1.0\na,c,1.0\nb,c,2.0\n");
        let y = lp::LevelSolution::from_tables(
            &inst,
            &[vec![0.5, 0.5, 0.5], vec![1.0, 1.0, 1.0]],
        );
        let view = truncate(&y, 1);
        let class = RoundingClass { tag: RoundingTag::RandomE, dominant_level: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0u64; 2];
        for _ in 0..100_000 {
            let level =
                sample_pivot_distance(&view, 0, &class, 3.0 / 8.0, 2.0 / 3.0, &mut rng)
                    .unwrap();
            counts[level - 1] += 1;
        }
        assert!(
            chi_squared_ok(&counts, &[1.0 / 3.0, 2.0 / 3.0]),
            "counts {counts:?}"
        );
    }

    #[test]
    fn plain_and_recentered_laws_on_three_levels() {
        let inst = complete("a,b,1\na,c,2\na,d,3\nb,c,2\nb,d,3\nc,d,3\n");
        let y = lp::LevelSolution::from_tables(
            &inst,
            &[
                vec![0.5; 6],
                vec![0.8; 6],
                vec![1.0; 6],
            ],
        );
        let view = truncate(&y, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(21);

        // Plain law (shift 0, as for unspecified edges or β = 0): masses
        // (0.5, 0.3, 0.2).
        let plain = RoundingClass { tag: RoundingTag::RandomEmpty, dominant_level: 1 };
        let mut counts = [0u64; 3];
        for _ in 0..100_000 {
            let level = sample_pivot_distance(&view, 0, &plain, 0.5, 0.0, &mut rng).unwrap();
            counts[level - 1] += 1;
        }
        assert!(chi_squared_ok(&counts, &[0.5, 0.3, 0.2]), "plain {counts:?}");

        // Recentered at shift 1/4: ((0.5−¼), (0.8−0.5), (1−0.8))/¾ =
        // (⅓, ⅖, 4/15).
        let recentered = RoundingClass { tag: RoundingTag::RandomE, dominant_level: 1 };
        let mut counts = [0u64; 3];
        for _ in 0..100_000 {
            let level =
                sample_pivot_distance(&view, 0, &recentered, 3.0 / 8.0, 2.0 / 3.0, &mut rng)
                    .unwrap();
            counts[level - 1] += 1;
        }
        assert!(
            chi_squared_ok(&counts, &[1.0 / 3.0, 2.0 / 5.0, 4.0 / 15.0]),
            "recentered {counts:?}"
        );
    }

    #[test]
    fn repair_rule_worked_examples() {
        // Levels: 1 is the largest distance d₁, 3 the smallest d₃.
        // Equal pivot levels d₂ against an old d₁: pulled down to d₂.
        assert_eq!(repair_level(1, 2, 2), 2);
        // Distinct pivot levels d₁ and d₃: forced to the larger distance.
        assert_eq!(repair_level(2, 1, 3), 1);
        // Equal pivot levels d₁ with old d₃: min rule keeps the smaller
        // distance unchanged.
        assert_eq!(repair_level(3, 1, 1), 3);
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let inst = random_instance(7, 3, 77);
        let y = solved(&inst);
        let (fit_a, trace_a) = run(&inst, &y, 0.4, 0.0, 123).unwrap();
        let (fit_b, trace_b) = run(&inst, &y, 0.4, 0.0, 123).unwrap();
        assert_eq!(fit_a, fit_b);
        assert_eq!(trace_a, trace_b);
        let (_, trace_c) = run(&inst, &y, 0.4, 0.0, 124).unwrap();
        assert!(trace_c != trace_a || trace_a.frames.len() == 1);
    }

    #[test]
    fn outputs_are_ultrametric_for_many_seeds() {
        let inst = random_instance(8, 3, 3);
        let y = solved(&inst);
        for seed in 0..60 {
            let (fitted, _) = run(&inst, &y, 0.4, 0.0, seed).unwrap();
            assert!(crate::instance::is_ultrametric(&fitted));
            let cost = disagreement_cost(&inst, &fitted).unwrap();
            assert!(cost.is_finite() && cost >= 0.0);
        }
    }

    #[test]
    fn kpartite_runs_fill_unspecified_pairs() {
        let text = "4\n0,*,1,1\n*,0,2,1\n1,2,0,*\n1,1,*,0\n";
        let inst = parse_instance(text, Mode::Kpartite, InputFormat::Matrix).unwrap();
        let y = solved(&inst);
        for seed in 0..30 {
            let (fitted, trace) = run(&inst, &y, 3.0 / 8.0, 2.0 / 3.0, seed).unwrap();
            assert!(crate::instance::is_ultrametric(&fitted));
            // Unspecified pairs enter the recursion at level 1.
            for frame in &trace.frames {
                for edge in &frame.pivot_edges {
                    if !edge.in_e && frame.parent.is_none() {
                        assert_eq!(edge.old_level, 1);
                    }
                }
            }
        }
    }

    #[test]
    fn force_random_still_yields_ultrametrics() {
        let inst = random_instance(7, 3, 15);
        let y = solved(&inst);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (fitted, _) = run_with(&inst, &y, 0.4, 0.0, &mut rng, true).unwrap();
            assert!(crate::instance::is_ultrametric(&fitted));
        }
    }

    #[test]
    fn parameter_and_feasibility_guards() {
        let inst = complete("a,b,1.0\na,c,2.0\nb,c,2.0\n");
        let y = solved(&inst);
        assert!(matches!(
            run(&inst, &y, 0.6, 0.0, 1),
            Err(PivotError::BadParameters { .. })
        ));
        assert!(matches!(
            run(&inst, &y, 0.4, 1.5, 1),
            Err(PivotError::BadParameters { .. })
        ));
        // Unnormalized table is rejected.
        let raw = lp::LevelSolution::from_tables(
            &inst,
            &[vec![0.0, 0.0, 0.0], vec![0.9, 0.9, 0.9]],
        );
        assert!(matches!(
            run(&inst, &raw, 0.4, 0.0, 1),
            Err(PivotError::Infeasible { .. })
        ));
        // Infeasible table (monotonicity broken) is rejected.
        let broken = lp::LevelSolution::from_tables(
            &inst,
            &[vec![0.9, 0.9, 0.9], vec![1.0, 0.5, 1.0]],
        );
        assert!(matches!(
            run(&inst, &broken, 0.4, 0.0, 1),
            Err(PivotError::Infeasible { .. })
        ));
    }

    #[test]
    fn trace_serializes_to_jsonl() {
        let inst = random_instance(5, 2, 4);
        let y = solved(&inst);
        let (_, trace) = run(&inst, &y, 0.4, 0.0, 2).unwrap();
        let jsonl = trace.to_jsonl();
        assert_eq!(jsonl.lines().count(), trace.frames.len());
        for line in jsonl.lines() {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(value.get("vertices").is_some());
            assert!(value.get("upper_level").is_some());
        }
    }
}
