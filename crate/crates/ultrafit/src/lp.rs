//! The relaxation at the heart of the solver: level indicator variables,
//! an embedded simplex, and the per-edge cost analysis of the optimum.
//!
//! For each pair `(i,j)` and level `ℓ ∈ [L]` there is a variable
//! `y_ℓ(i,j) ∈ [0,1]`, read as "the fitted distance of `(i,j)` is at least
//! as small as `d_ℓ`" (`y_0 ≡ 0` by definition). The program is
//!
//! * minimize `Σ_E w(i,j) · (1 − y_{ℓ̃}(i,j) + y_{ℓ̃−1}(i,j))` where `ℓ̃` is
//!   the pair's input level — each term is the fractional price of moving
//!   the pair off its input level;
//! * `y_ℓ(i,j) ≤ y_ℓ(i,k) + y_ℓ(k,j)` for every level and all three
//!   rotations of every triple — the fractional ultrametric condition;
//! * `y_{ℓ−1}(i,j) ≤ y_ℓ(i,j)` for every pair and level — deeper levels
//!   mean smaller distances, so the indicators are monotone;
//! * `0 ≤ y ≤ 1`.
//!
//! An integral feasible point is exactly an ultrametric on the ladder, so
//! the optimum lower-bounds the best achievable modification weight; the
//! rounding engine consumes the fractional optimum.
//!
//! # Solving
//!
//! Rows are materialized once in a fixed emission order (triangles by level
//! then triple then rotation, monotone rows after). The solve works over an
//! active subset, starting from the monotone rows, then repeatedly solving
//! and activating the most-violated triangle rows until every row holds
//! within [`tol::FEASIBILITY`] — at which point the restricted optimum is an
//! optimum of the full program. Each round restarts the simplex cold; both
//! the activation order and the solver are deterministic, so the solution
//! (not just its objective) is reproducible bit for bit.
//!
//! The returned tables are post-processed: values clamped into `[0,1]` and
//! swept so `y_ℓ ≥ y_{ℓ−1}` holds *exactly* in floating point. Downstream
//! consumers (truncation, sampling, audits) rely on that exactness; triangle
//! rows stay satisfied within [`tol::AUDIT_FEASIBILITY`].

mod simplex;

use std::fmt::Write as _;

use thiserror::Error;

use crate::instance::{pair_index, pairs, Instance};
use crate::tol;

/// Cap on `L · n(n−1)/2` accepted by [`build_lp`].
pub const DEFAULT_VARIABLE_BUDGET: usize = 250_000;
/// Most-violated rows activated per round.
const ACTIVATION_BATCH: usize = 300;
/// Cap on activation rounds before declaring failure.
const MAX_ACTIVATION_ROUNDS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("program needs {variables} variables, over the budget {budget}")]
    TooLarge { variables: usize, budget: usize },
    #[error("alpha must lie in (0, 0.5], got {alpha}")]
    BadAlpha { alpha: f64 },
    #[error(transparent)]
    Solver(#[from] simplex::SimplexError),
    #[error("row activation did not converge in {0} rounds")]
    ActivationStalled(usize),
}

/// Row provenance, recoverable from its position in emission order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// `y_ℓ(i,j) − y_ℓ(i,k) − y_ℓ(j,k) ≤ 0` (one rotation of one triple).
    Triangle,
    /// `y_{ℓ−1}(i,j) − y_ℓ(i,j) ≤ 0` (for `ℓ = 1` just `−y_1 ≤ 0`).
    Monotone,
}

#[derive(Debug)]
struct Row {
    coeffs: Vec<(usize, f64)>,
}

/// The built program: variables, objective, and all rows in emission order.
#[derive(Debug)]
pub struct LinearProgram {
    n: usize,
    num_levels: usize,
    num_pairs: usize,
    weights: Vec<f64>,
    input_levels: Vec<Option<usize>>,
    objective: Vec<f64>,
    objective_constant: f64,
    rows: Vec<Row>,
    num_triangle_rows: usize,
}

impl LinearProgram {
    /// Column of `y_ℓ(pair)`; `level` is 1-based.
    pub fn var_index(&self, pair: usize, level: usize) -> usize {
        debug_assert!((1..=self.num_levels).contains(&level));
        (level - 1) * self.num_pairs + pair
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn num_pairs(&self) -> usize {
        self.num_pairs
    }

    pub fn num_variables(&self) -> usize {
        self.num_levels * self.num_pairs
    }

    pub fn num_triangle_rows(&self) -> usize {
        self.num_triangle_rows
    }

    pub fn num_monotone_rows(&self) -> usize {
        self.rows.len() - self.num_triangle_rows
    }

    pub fn row_kind(&self, row: usize) -> RowKind {
        if row < self.num_triangle_rows {
            RowKind::Triangle
        } else {
            RowKind::Monotone
        }
    }

    /// The program in LP text interchange format (CPLEX dialect), for
    /// cross-checking against external solvers.
    pub fn to_lp_text(&self) -> String {
        let m = self.num_pairs;
        let var_name = |v: usize| {
            let (lvl, pair) = (v / m + 1, v % m);
            let (i, j) = pairs(self.n).nth(pair).expect("pair in range");
            format!("y_{i}_{j}_{lvl}")
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "\\ level indicator program: {} vertices, {} levels, {} pairs",
            self.n, self.num_levels, m
        );
        out.push_str("Minimize\n obj: ");
        let mut first = true;
        for (v, &c) in self.objective.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let sign = if c < 0.0 {
                " - "
            } else if first {
                ""
            } else {
                " + "
            };
            let _ = write!(out, "{sign}{} {}", c.abs(), var_name(v));
            first = false;
        }
        if self.objective_constant != 0.0 || first {
            let _ = write!(
                out,
                "{}{}",
                if first { "" } else { " + " },
                self.objective_constant
            );
        }
        out.push_str("\nSubject To\n");
        for (r, row) in self.rows.iter().enumerate() {
            let tag = match self.row_kind(r) {
                RowKind::Triangle => format!("t{r}"),
                RowKind::Monotone => format!("m{}", r - self.num_triangle_rows),
            };
            let _ = write!(out, " {tag}:");
            for &(v, c) in &row.coeffs {
                let sign = if c < 0.0 { " -" } else { " +" };
                let _ = write!(out, "{sign} {} {}", c.abs(), var_name(v));
            }
            out.push_str(" <= 0\n");
        }
        out.push_str("Bounds\n");
        for v in 0..self.num_variables() {
            let _ = writeln!(out, " 0 <= {} <= 1", var_name(v));
        }
        out.push_str("End\n");
        out
    }
}

/// Build the program for an instance under the default variable budget.
pub fn build_lp(inst: &Instance) -> Result<LinearProgram, LpError> {
    build_lp_with_budget(inst, DEFAULT_VARIABLE_BUDGET)
}

/// Build the program, rejecting instances whose variable count exceeds
/// `budget`.
pub fn build_lp_with_budget(inst: &Instance, budget: usize) -> Result<LinearProgram, LpError> {
    let n = inst.n();
    let m = inst.num_pairs();
    let levels = inst.ladder().num_levels();
    let variables = levels * m;
    if variables > budget {
        return Err(LpError::TooLarge { variables, budget });
    }

    let weights: Vec<f64> = (0..m).map(|p| inst.weight(p)).collect();
    let input_levels: Vec<Option<usize>> = (0..m).map(|p| inst.input_level(p)).collect();

    let mut objective = vec![0.0; variables];
    let mut objective_constant = 0.0;
    let var = |pair: usize, level: usize| (level - 1) * m + pair;
    for p in 0..m {
        let Some(lt) = input_levels[p] else { continue };
        let w = weights[p];
        objective_constant += w;
        objective[var(p, lt)] -= w;
        if lt >= 2 {
            objective[var(p, lt - 1)] += w;
        }
    }

    let mut rows = Vec::new();
    for level in 1..=levels {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let a = var(pair_index(n, i, j), level);
                    let b = var(pair_index(n, i, k), level);
                    let c = var(pair_index(n, j, k), level);
                    rows.push(Row { coeffs: vec![(a, 1.0), (b, -1.0), (c, -1.0)] });
                    rows.push(Row { coeffs: vec![(b, 1.0), (a, -1.0), (c, -1.0)] });
                    rows.push(Row { coeffs: vec![(c, 1.0), (a, -1.0), (b, -1.0)] });
                }
            }
        }
    }
    let num_triangle_rows = rows.len();
    for p in 0..m {
        for level in 1..=levels {
            let coeffs = if level == 1 {
                vec![(var(p, 1), -1.0)]
            } else {
                vec![(var(p, level - 1), 1.0), (var(p, level), -1.0)]
            };
            rows.push(Row { coeffs });
        }
    }

    Ok(LinearProgram {
        n,
        num_levels: levels,
        num_pairs: m,
        weights,
        input_levels,
        objective,
        objective_constant,
        rows,
        num_triangle_rows,
    })
}

/// A solved (or handcrafted) table of level indicators.
///
/// Stores `y_ℓ(pair)` for `ℓ ∈ 0..=L` with the `ℓ = 0` row identically zero,
/// plus the objective value of the table against its instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSolution {
    n: usize,
    num_levels: usize,
    num_pairs: usize,
    /// `(L+1) × m`, level-major; row 0 is all zeros.
    y: Vec<f64>,
    objective: f64,
}

impl LevelSolution {
    /// Assemble from per-level tables (`tables[ℓ−1]` is the `y_ℓ` row, each
    /// of length `n(n−1)/2`), computing the objective against `inst`.
    /// Feasibility is the caller's business — see [`feasibility_error`].
    pub fn from_tables(inst: &Instance, tables: &[Vec<f64>]) -> LevelSolution {
        let n = inst.n();
        let m = inst.num_pairs();
        assert_eq!(tables.len(), inst.ladder().num_levels(), "one table per level");
        let mut y = vec![0.0; (tables.len() + 1) * m];
        for (idx, table) in tables.iter().enumerate() {
            assert_eq!(table.len(), m, "level table has wrong length");
            y[(idx + 1) * m..(idx + 2) * m].copy_from_slice(table);
        }
        let weights: Vec<f64> = (0..m).map(|p| inst.weight(p)).collect();
        let input_levels: Vec<Option<usize>> = (0..m).map(|p| inst.input_level(p)).collect();
        let objective = objective_of(&y, m, &weights, &input_levels);
        LevelSolution {
            n,
            num_levels: tables.len(),
            num_pairs: m,
            y,
            objective,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn num_pairs(&self) -> usize {
        self.num_pairs
    }

    /// `y_ℓ(pair)` for `ℓ ∈ 0..=L` (level 0 is identically 0).
    pub fn y(&self, level: usize, pair: usize) -> f64 {
        debug_assert!(level <= self.num_levels);
        self.y[level * self.num_pairs + pair]
    }

    /// Mass at exactly level `ℓ`: `Δy_ℓ = y_ℓ − y_{ℓ−1}`, `ℓ` 1-based.
    pub fn delta(&self, level: usize, pair: usize) -> f64 {
        self.y(level, pair) - self.y(level - 1, pair)
    }

    /// Objective of this table against its instance.
    pub fn objective(&self) -> f64 {
        self.objective
    }
}

fn objective_of(
    y: &[f64],
    m: usize,
    weights: &[f64],
    input_levels: &[Option<usize>],
) -> f64 {
    let mut total = 0.0;
    for p in 0..m {
        let Some(lt) = input_levels[p] else { continue };
        total += weights[p] * (1.0 - y[lt * m + p] + y[(lt - 1) * m + p]);
    }
    total
}

/// Solve the program to optimality (within [`tol::OPTIMALITY`]) and return
/// the cleaned-up indicator tables.
///
/// Deterministic: the same program yields bit-identical tables.
///
/// # Errors
///
/// Iteration-limit or numerical failures from the simplex, or a stalled
/// activation loop; all carry diagnostics.
pub fn solve_lp(program: &LinearProgram) -> Result<LevelSolution, LpError> {
    let m = program.num_pairs;
    let levels = program.num_levels;
    let upper = vec![1.0; program.num_variables()];

    let total_rows = program.rows.len();
    let mut active = vec![false; total_rows];
    for flag in active.iter_mut().skip(program.num_triangle_rows) {
        *flag = true;
    }

    let mut x = Vec::new();
    let mut converged = false;
    for _ in 0..MAX_ACTIVATION_ROUNDS {
        let rows: Vec<(&[(usize, f64)], f64)> = (0..total_rows)
            .filter(|&r| active[r])
            .map(|r| (program.rows[r].coeffs.as_slice(), 0.0))
            .collect();
        let solved = simplex::solve(&simplex::Problem {
            objective: &program.objective,
            upper: &upper,
            rows,
        })?;
        x = solved.x;

        let mut violated: Vec<(f64, usize)> = Vec::new();
        for (r, row) in program.rows.iter().enumerate() {
            if active[r] {
                continue;
            }
            let activity: f64 = row.coeffs.iter().map(|&(v, c)| c * x[v]).sum();
            if activity > tol::FEASIBILITY {
                violated.push((activity, r));
            }
        }
        if violated.is_empty() {
            converged = true;
            break;
        }
        violated.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite").then(a.1.cmp(&b.1)));
        for &(_, r) in violated.iter().take(ACTIVATION_BATCH) {
            active[r] = true;
        }
    }
    if !converged {
        return Err(LpError::ActivationStalled(MAX_ACTIVATION_ROUNDS));
    }

    // Clean up: clamp into the box, then sweep levels upward so
    // monotonicity holds exactly — audits and truncation count on it.
    let mut y = vec![0.0; (levels + 1) * m];
    for level in 1..=levels {
        for p in 0..m {
            let raw = x[(level - 1) * m + p].clamp(0.0, 1.0);
            let below = y[(level - 1) * m + p];
            y[level * m + p] = raw.max(below);
        }
    }
    let objective = objective_of(&y, m, &program.weights, &program.input_levels);
    Ok(LevelSolution {
        n: program.n,
        num_levels: levels,
        num_pairs: m,
        y,
        objective,
    })
}

/// Pin the top level to 1 on every pair, leaving everything else unchanged
/// and recomputing the objective (which cannot increase: the top level only
/// ever appears with non-positive objective coefficients). Idempotent.
pub fn normalize_top_level(sol: &LevelSolution, inst: &Instance) -> LevelSolution {
    assert_eq!(sol.num_pairs, inst.num_pairs(), "solution/instance mismatch");
    assert_eq!(sol.num_levels, inst.ladder().num_levels());
    let m = sol.num_pairs;
    let mut y = sol.y.clone();
    for p in 0..m {
        y[sol.num_levels * m + p] = 1.0;
    }
    let weights: Vec<f64> = (0..m).map(|p| inst.weight(p)).collect();
    let input_levels: Vec<Option<usize>> = (0..m).map(|p| inst.input_level(p)).collect();
    let objective = objective_of(&y, m, &weights, &input_levels);
    LevelSolution {
        n: sol.n,
        num_levels: sol.num_levels,
        num_pairs: m,
        y,
        objective,
    }
}

/// Whether `y_L` is exactly 1 on every pair.
pub fn is_normalized(sol: &LevelSolution) -> bool {
    let m = sol.num_pairs;
    (0..m).all(|p| sol.y(sol.num_levels, p) == 1.0)
}

/// Worst constraint violation of the tables: box, monotonicity, and the
/// level-wise triangle inequality over all triples. 0 means exactly
/// feasible.
pub fn feasibility_error(sol: &LevelSolution) -> f64 {
    let n = sol.n;
    let m = sol.num_pairs;
    let mut worst: f64 = 0.0;
    for level in 1..=sol.num_levels {
        for p in 0..m {
            let v = sol.y(level, p);
            worst = worst.max(-v).max(v - 1.0);
            worst = worst.max(sol.y(level - 1, p) - v);
        }
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let a = sol.y(level, pair_index(n, i, j));
                    let b = sol.y(level, pair_index(n, i, k));
                    let c = sol.y(level, pair_index(n, j, k));
                    worst = worst.max(a - b - c).max(b - a - c).max(c - a - b);
                }
            }
        }
    }
    worst
}

/// Level with the largest mass `Δy_ℓ`; ties go to the smallest level
/// (largest distance). The one tie rule shared by every consumer.
pub fn dominant_level(sol: &LevelSolution, pair: usize) -> usize {
    argmax_level((1..=sol.num_levels).map(|l| sol.delta(l, pair)))
}

/// Index (1-based) of the strictly largest value, first occurrence on ties.
pub(crate) fn argmax_level<I: Iterator<Item = f64>>(deltas: I) -> usize {
    let mut best_level = 1;
    let mut best = f64::NEG_INFINITY;
    for (idx, d) in deltas.enumerate() {
        if d > best {
            best = d;
            best_level = idx + 1;
        }
    }
    best_level
}

/// How the rounding engine will treat a specified edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum EdgeClass {
    /// Fractional cost below `α`: the optimum nearly keeps the input level.
    LowCost,
    /// Expensive, but one level holds more than `1 − α` of the mass; the
    /// rounding fixes that level deterministically.
    HighDeterministic,
    /// Expensive with spread-out mass; the rounding samples.
    HighRandom,
}

/// Per-edge fractional costs and classes, plus the optimum lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCosts {
    /// `c*(e) = 1 − Δy_{ℓ̃(e)}(e)` per pair; 0 on unspecified pairs.
    pub c_star: Vec<f64>,
    /// Class per pair; `None` on unspecified pairs.
    pub class: Vec<Option<EdgeClass>>,
    /// `Σ_E w(e) · c*(e)` — a lower bound on the optimal modification
    /// weight, because any ultrametric is a feasible integral point whose
    /// objective is exactly its modification weight.
    pub lp_lower_bound: f64,
}

/// Cost and class of every specified edge under a normalized solution.
///
/// Classification: `LowCost` when `c* < α`; otherwise `HighDeterministic`
/// when the dominant mass exceeds `1 − α`; otherwise `HighRandom`. The
/// strict comparisons are cushioned by [`tol::STRICTNESS`] so solver
/// round-off cannot flip a mathematically strict inequality.
///
/// # Errors
///
/// [`LpError::BadAlpha`] unless `0 < α ≤ ½`.
pub fn edge_costs(
    inst: &Instance,
    sol: &LevelSolution,
    alpha: f64,
) -> Result<EdgeCosts, LpError> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(LpError::BadAlpha { alpha });
    }
    debug_assert!(is_normalized(sol), "edge costs require a normalized solution");
    let m = inst.num_pairs();
    let mut c_star = vec![0.0; m];
    let mut class = vec![None; m];
    let mut lp_lower_bound = 0.0;
    for p in 0..m {
        let Some(lt) = inst.input_level(p) else { continue };
        let c = 1.0 - sol.delta(lt, p);
        let dominant = dominant_level(sol, p);
        let label = if tol::strictly_less(c, alpha) {
            EdgeClass::LowCost
        } else if tol::strictly_greater(sol.delta(dominant, p), 1.0 - alpha) {
            EdgeClass::HighDeterministic
        } else {
            EdgeClass::HighRandom
        };
        c_star[p] = c;
        class[p] = Some(label);
        lp_lower_bound += inst.weight(p) * c;
    }
    Ok(EdgeCosts {
        c_star,
        class,
        lp_lower_bound,
    })
}
