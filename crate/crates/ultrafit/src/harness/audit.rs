//! Offline audits over captured rounding traces.
//!
//! Three independent instruments:
//!
//! * [`audit_trace`] re-derives, frame by frame, the structural facts the
//!   approximation analysis rests on — truncated tables stay feasible, the
//!   dominant mass of a pair never shrinks from a call to its children,
//!   edges that start cheap or deterministic stay deterministic (and cheap
//!   ones untouched), and a frame's dominant level is either the frame's
//!   upper level or the root one. Any violation indicates a bug.
//! * [`classify_triangles`] tallies the pivot triangles of every frame by
//!   how many of their three edges round deterministically, and flags the
//!   forbidden event: an all-deterministic triangle of three cheap
//!   specified edges losing an edge at α ≤ 1/3.
//! * [`partition_probability_audit`] accumulates, per frame, how often the
//!   two endpoints of a non-pivot pair are separated, bucketed by the
//!   classes of the two pivot edges, and compares against the analytical
//!   lower bounds.

use std::collections::BTreeSet;
use std::collections::HashMap;

use serde::Serialize;

use crate::instance::{pair_index, Instance};
use crate::lp::{self, EdgeClass, LevelSolution};
use crate::pivot::{
    classify_pivot_edge, truncate, FrameRecord, PivotTrace, RoundingTag, TruncatedView,
};
use crate::tol;

fn pair_of(n: usize, a: usize, b: usize) -> usize {
    pair_index(n, a.min(b), a.max(b))
}

fn is_deterministic(tag: RoundingTag) -> bool {
    matches!(tag, RoundingTag::DeterministicE | RoundingTag::DeterministicEmpty)
}

/// Dominant mass of a pair under a truncated view.
fn dominant_mass(view: &TruncatedView<'_>, pair: usize) -> f64 {
    view.delta(view.dominant_level(pair), pair)
}

/// Outcome of [`audit_trace`]: how many frames were checked and every
/// violation found (none expected).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub frames: usize,
    pub violations: Vec<String>,
}

/// Check one trace against the invariants listed in the module docs.
/// `y_star` must be the same normalized solution the run consumed.
pub fn audit_trace(
    inst: &Instance,
    y_star: &LevelSolution,
    trace: &PivotTrace,
    alpha: f64,
) -> AuditReport {
    let n = inst.n();
    let levels = y_star.num_levels();
    let mut violations = Vec::new();

    // Truncated tables stay feasible (within audit tolerance) and keep the
    // top level pinned, at every upper level the recursion visited.
    let uppers: BTreeSet<usize> = trace.frames.iter().map(|f| f.upper_level).collect();
    for &upper in &uppers {
        let view = truncate(y_star, upper);
        if let Some(msg) = truncated_feasibility(&view, n, levels) {
            violations.push(format!("truncation at {upper}: {msg}"));
        }
    }

    let root_costs = lp::edge_costs(inst, y_star, alpha).expect("alpha validated by the run");

    for frame in &trace.frames {
        // Dominant mass never shrinks from a frame to its children: exact
        // comparison, since the solved tables are exactly monotone.
        let parent_view = truncate(y_star, frame.upper_level);
        for child in &frame.children {
            let child_view = truncate(y_star, child.level);
            for (idx, &j) in child.vertices.iter().enumerate() {
                for &k in &child.vertices[idx + 1..] {
                    let p = pair_of(n, j, k);
                    if dominant_mass(&child_view, p) < dominant_mass(&parent_view, p) {
                        violations.push(format!(
                            "frame {}: dominant mass of ({j}, {k}) shrank from \
                             upper {} to child upper {}",
                            frame.index, frame.upper_level, child.level
                        ));
                    }
                }
            }
        }

        let Some(pivot) = frame.pivot else { continue };
        for edge in &frame.pivot_edges {
            let p = pair_of(n, pivot, edge.vertex);

            // Dichotomy: a frame's dominant level is the frame's upper
            // level or the root dominant level, nothing else.
            let root_dominant = lp::dominant_level(y_star, p);
            if edge.dominant_level != frame.upper_level
                && edge.dominant_level != root_dominant
            {
                violations.push(format!(
                    "frame {}: pivot edge ({pivot}, {}) dominant level {} is \
                     neither the frame upper {} nor the root dominant {root_dominant}",
                    frame.index, edge.vertex, edge.dominant_level, frame.upper_level
                ));
            }

            // Initially cheap or deterministic specified edges round
            // deterministically in every frame. A cheap edge additionally
            // arrives holding exactly its dominant level — earlier repairs
            // may have moved it off its input level, but always onto the
            // level that dominates under the new truncation — so rounding
            // it as a pivot edge never modifies it.
            match root_costs.class[p] {
                // The keep-the-dominant-level argument needs strict
                // dominance: an edge sitting exactly on the cost threshold
                // (alpha = 1/2 meets exact LP halves) can tie between two
                // levels, so the clause is audited on the class interior.
                Some(EdgeClass::LowCost)
                    if root_costs.c_star[p] < alpha - tol::STRICTNESS =>
                {
                    if edge.tag != RoundingTag::DeterministicE
                        || edge.old_level != edge.dominant_level
                        || edge.new_level != edge.old_level
                    {
                        violations.push(format!(
                            "frame {}: low-cost pivot edge ({pivot}, {}) was not \
                             kept deterministically at its dominant level {} \
                             (tag {:?}, {} -> {})",
                            frame.index, edge.vertex, edge.dominant_level,
                            edge.tag, edge.old_level, edge.new_level
                        ));
                    }
                }
                Some(EdgeClass::HighDeterministic) => {
                    if edge.tag != RoundingTag::DeterministicE {
                        violations.push(format!(
                            "frame {}: initially-deterministic pivot edge \
                             ({pivot}, {}) was classified {:?}",
                            frame.index, edge.vertex, edge.tag
                        ));
                    }
                }
                _ => {}
            }
        }
    }

    AuditReport { frames: trace.frames.len(), violations }
}

/// Box, monotonicity, per-level triangle rows, and the pinned top level,
/// all on the truncated view. Returns the first problem found.
fn truncated_feasibility(
    view: &TruncatedView<'_>,
    n: usize,
    levels: usize,
) -> Option<String> {
    let m = n * (n - 1) / 2;
    let eps = tol::AUDIT_FEASIBILITY;
    for p in 0..m {
        if view.y(levels, p) != 1.0 {
            return Some(format!("pair {p}: top level {} != 1", view.y(levels, p)));
        }
        for l in 1..=levels {
            let y = view.y(l, p);
            if !(-eps..=1.0 + eps).contains(&y) {
                return Some(format!("pair {p} level {l}: {y} outside [0, 1]"));
            }
            if view.y(l - 1, p) > y + eps {
                return Some(format!("pair {p}: levels {} and {l} not monotone", l - 1));
            }
        }
    }
    for l in view.upper_level()..=levels {
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let ij = view.y(l, pair_index(n, i, j));
                    let ik = view.y(l, pair_index(n, i, k));
                    let jk = view.y(l, pair_index(n, j, k));
                    if ij > ik + jk + eps || ik > ij + jk + eps || jk > ij + ik + eps {
                        return Some(format!(
                            "triangle ({i}, {j}, {k}) violated at level {l}"
                        ));
                    }
                }
            }
        }
    }
    None
}

/// A pivot triangle, by deterministic-edge count and, at two, whether the
/// two deterministic edges share their dominant level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TriangleClass {
    AllDeterministic,
    TwoDeterministicSameLevel,
    TwoDeterministicSplitLevel,
    OneDeterministic,
    AllRandom,
}

/// Census of pivot triangles across a trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TriangleCensus {
    /// Non-base frames visited.
    pub frames: usize,
    /// Triangles through a pivot: Σ C(|V|−1, 2).
    pub triangles: usize,
    pub all_deterministic: usize,
    pub two_det_same_level: usize,
    pub two_det_split_level: usize,
    pub one_deterministic: usize,
    pub all_random: usize,
    /// All-deterministic triangles of three cheap specified edges that had
    /// an edge modified at α ≤ 1/3 — forbidden by the analysis.
    pub protected_violations: usize,
}

impl TriangleCensus {
    pub fn count(&self, class: TriangleClass) -> usize {
        match class {
            TriangleClass::AllDeterministic => self.all_deterministic,
            TriangleClass::TwoDeterministicSameLevel => self.two_det_same_level,
            TriangleClass::TwoDeterministicSplitLevel => self.two_det_split_level,
            TriangleClass::OneDeterministic => self.one_deterministic,
            TriangleClass::AllRandom => self.all_random,
        }
    }

    fn add(&mut self, class: TriangleClass) {
        self.triangles += 1;
        match class {
            TriangleClass::AllDeterministic => self.all_deterministic += 1,
            TriangleClass::TwoDeterministicSameLevel => self.two_det_same_level += 1,
            TriangleClass::TwoDeterministicSplitLevel => self.two_det_split_level += 1,
            TriangleClass::OneDeterministic => self.one_deterministic += 1,
            TriangleClass::AllRandom => self.all_random += 1,
        }
    }
}

/// Classify every pivot triangle of every frame. The two pivot edges carry
/// their recorded classes; the closing edge is classified under the same
/// truncated view it faced.
pub fn classify_triangles(
    inst: &Instance,
    y_star: &LevelSolution,
    trace: &PivotTrace,
    alpha: f64,
    beta: f64,
) -> TriangleCensus {
    let n = inst.n();
    let root_costs = lp::edge_costs(inst, y_star, alpha).expect("alpha validated upstream");
    let low_cost =
        |p: usize| root_costs.class[p] == Some(EdgeClass::LowCost);
    let protected_alpha = alpha <= 1.0 / 3.0 + tol::STRICTNESS;

    let mut census = TriangleCensus::default();
    for frame in &trace.frames {
        let Some(pivot) = frame.pivot else { continue };
        census.frames += 1;
        let view = truncate(y_star, frame.upper_level);
        let by_vertex: HashMap<usize, &crate::pivot::PivotEdgeRecord> =
            frame.pivot_edges.iter().map(|e| (e.vertex, e)).collect();

        // The repair list enumerates exactly the non-pivot pairs of the
        // frame, i.e. one entry per pivot triangle.
        for repair in &frame.repairs {
            let ej = by_vertex[&repair.j];
            let ek = by_vertex[&repair.k];
            let p_jk = pair_of(n, repair.j, repair.k);
            let closing = classify_pivot_edge(
                &view,
                p_jk,
                inst.is_specified(p_jk),
                alpha,
                beta,
            );

            let det: Vec<(bool, usize)> = vec![
                (is_deterministic(ej.tag), ej.dominant_level),
                (is_deterministic(ek.tag), ek.dominant_level),
                (is_deterministic(closing.tag), closing.dominant_level),
            ];
            let det_count = det.iter().filter(|(d, _)| *d).count();
            let class = match det_count {
                3 => TriangleClass::AllDeterministic,
                2 => {
                    let levels: Vec<usize> = det
                        .iter()
                        .filter(|(d, _)| *d)
                        .map(|&(_, l)| l)
                        .collect();
                    if levels[0] == levels[1] {
                        TriangleClass::TwoDeterministicSameLevel
                    } else {
                        TriangleClass::TwoDeterministicSplitLevel
                    }
                }
                1 => TriangleClass::OneDeterministic,
                _ => TriangleClass::AllRandom,
            };
            census.add(class);

            if protected_alpha
                && class == TriangleClass::AllDeterministic
                && inst.is_specified(p_jk)
                && low_cost(pair_of(n, pivot, repair.j))
                && low_cost(pair_of(n, pivot, repair.k))
                && low_cost(p_jk)
            {
                let modified = ej.old_level != ej.new_level
                    || ek.old_level != ek.new_level
                    || repair.old_level != repair.new_level;
                if modified {
                    census.protected_violations += 1;
                }
            }
        }
    }
    census
}

/// One split-frequency bucket: events seen, splits among them, and the
/// analytical lower bound on the split probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BucketStat {
    pub bound: f64,
    pub events: u64,
    pub splits: u64,
}

impl BucketStat {
    fn new(bound: f64) -> BucketStat {
        BucketStat { bound, events: 0, splits: 0 }
    }

    fn observe(&mut self, split: bool) {
        self.events += 1;
        self.splits += u64::from(split);
    }

    pub fn frequency(&self) -> Option<f64> {
        (self.events > 0).then(|| self.splits as f64 / self.events as f64)
    }

    /// Conclusive buckets need at least 10^4 events.
    pub fn conclusive(&self) -> bool {
        self.events >= 10_000
    }

    /// `None` while inconclusive; otherwise whether the empirical
    /// frequency clears the bound minus three standard errors.
    pub fn verdict(&self) -> Option<bool> {
        if !self.conclusive() {
            return None;
        }
        let p = self.splits as f64 / self.events as f64;
        let stderr = (p * (1.0 - p) / self.events as f64).sqrt();
        Some(p >= self.bound - 3.0 * stderr)
    }
}

/// Split-frequency audit across many traces; see [`partition_probability_audit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionAudit {
    /// Both pivot edges deterministic, at different levels: always split.
    pub det_det_split: BucketStat,
    /// At least one of the two pivot edges randomly rounded in E.
    pub random_specified: BucketStat,
    /// At least one randomly rounded unspecified edge.
    pub random_unspecified: BucketStat,
}

/// For every non-pivot pair of every frame, record whether its endpoints
/// were separated, bucketed by the classes of its two pivot edges. Buckets
/// may overlap. Bounds: 1, `α(1−β)/(1−αβ)`, and `αβ`.
pub fn partition_probability_audit<'a>(
    traces: impl IntoIterator<Item = &'a PivotTrace>,
    alpha: f64,
    beta: f64,
) -> PartitionAudit {
    let mut audit = PartitionAudit {
        det_det_split: BucketStat::new(1.0),
        random_specified: BucketStat::new(
            alpha * (1.0 - beta) / (1.0 - alpha * beta),
        ),
        random_unspecified: BucketStat::new(alpha * beta),
    };
    for trace in traces {
        for frame in &trace.frames {
            if frame.pivot.is_none() {
                continue;
            }
            let by_vertex: HashMap<usize, (RoundingTag, usize)> = frame
                .pivot_edges
                .iter()
                .map(|e| (e.vertex, (e.tag, e.new_level)))
                .collect();
            for repair in &frame.repairs {
                let (tag_j, level_j) = by_vertex[&repair.j];
                let (tag_k, level_k) = by_vertex[&repair.k];
                let split = level_j != level_k;
                // Deterministic edges land exactly on their forced levels,
                // so "fixed to different levels" is decidable pre-draw.
                if is_deterministic(tag_j) && is_deterministic(tag_k) && level_j != level_k
                {
                    audit.det_det_split.observe(split);
                }
                if tag_j == RoundingTag::RandomE || tag_k == RoundingTag::RandomE {
                    audit.random_specified.observe(split);
                }
                if tag_j == RoundingTag::RandomEmpty || tag_k == RoundingTag::RandomEmpty {
                    audit.random_unspecified.observe(split);
                }
            }
        }
    }
    audit
}

/// Expected triangle count of a trace: Σ over non-base frames of
/// C(|V|−1, 2). Exposed for tests and acceptance checks.
pub fn expected_triangles(frames: &[FrameRecord]) -> usize {
    frames
        .iter()
        .filter(|f| f.pivot.is_some())
        .map(|f| {
            let v = f.vertices.len() - 1;
            v * (v - 1) / 2
        })
        .sum()
}
