//! Bounded-variable revised simplex for sparse `a·x ≤ b` programs.
//!
//! Scope: minimize `c·x` subject to sparse inequality rows with
//! non-negative right-hand sides and per-variable bounds `0 ≤ x_j ≤ u_j`
//! (`u_j` may be infinite). Slacks complete each row to an equality, and the
//! all-slack basis is the feasible start — which is why `b ≥ 0` is required.
//!
//! Design choices, in order of importance:
//!
//! * **Determinism.** Every scan runs in fixed index order and every tie has
//!   a written rule, so identical inputs give bit-identical solutions.
//! * **Anti-cycling.** Pricing is steepest-violation (Dantzig, smallest
//!   index on ties) for speed, switching to Bland's smallest-index rule
//!   after a run of degenerate steps and back after real progress. Our
//!   programs start from an all-zero vertex, so early degeneracy is the
//!   normal case, not the exception.
//! * **Simplicity over scale.** The basis inverse is a dense matrix updated
//!   in `O(m²)` per pivot and refactored from scratch periodically. Desk
//!   scale (a few thousand rows) needs nothing smarter.

use thiserror::Error;

use crate::tol;

/// Treat a would-be pivot element at or below this as zero.
const EPS_PIVOT: f64 = 1e-10;
/// A step this small counts as degenerate for the pricing switch.
const EPS_STEP: f64 = 1e-12;
/// Slop when comparing ratio-test candidates for ties.
const EPS_RATIO_TIE: f64 = 1e-12;
/// Consecutive degenerate pivots before falling back to Bland pricing.
const BLAND_TRIGGER: u32 = 40;
/// Basis changes between full refactorizations of the inverse.
const REFACTOR_EVERY: u32 = 400;
/// Hard cap on simplex iterations per solve.
const MAX_ITERATIONS: u64 = 500_000;

#[derive(Debug, Error, PartialEq)]
pub enum SimplexError {
    #[error(
        "simplex hit the iteration limit ({iterations}); current objective \
         {objective}, worst remaining reduced cost {max_violation}"
    )]
    IterationLimit {
        iterations: u64,
        objective: f64,
        max_violation: f64,
    },
    #[error("simplex numerical failure: {0}")]
    Numerical(String),
}

/// One solve's input. Rows borrow the caller's sparse coefficient lists.
pub struct Problem<'a> {
    /// Cost per structural variable.
    pub objective: &'a [f64],
    /// Upper bound per structural variable (lower bounds are all 0).
    pub upper: &'a [f64],
    /// `(coefficients, rhs)` rows meaning `Σ coeff·x ≤ rhs`, `rhs ≥ 0`.
    pub rows: Vec<(&'a [(usize, f64)], f64)>,
}

pub struct Solution {
    /// Structural variable values.
    pub x: Vec<f64>,
    /// `objective · x` (no constant term); diagnostic — callers recompute
    /// objectives from the tables they assemble out of `x`.
    #[allow(dead_code)]
    pub objective: f64,
    /// Pricing steps taken (bound flips included); diagnostic only.
    #[allow(dead_code)]
    pub iterations: u64,
}

#[derive(Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
}

enum Pricing {
    Dantzig,
    Bland,
}

enum Step {
    /// Entering variable runs to its opposite bound; basis unchanged.
    Flip { t: f64 },
    /// Basic variable at position `pos` leaves toward `to_upper`.
    Pivot { t: f64, pos: usize, to_upper: bool },
    Unbounded,
}

struct Simplex<'a> {
    nv: usize,
    ma: usize,
    cost: &'a [f64],
    upper: &'a [f64],
    /// Sparse columns of the structural part, row-index/coefficient.
    cols: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    /// Dense basis inverse, row-major `ma × ma`.
    binv: Vec<f64>,
    /// Values of the basic variables.
    xb: Vec<f64>,
    iterations: u64,
    since_refactor: u32,
    degenerate_run: u32,
}

pub fn solve(problem: &Problem<'_>) -> Result<Solution, SimplexError> {
    let nv = problem.objective.len();
    assert_eq!(problem.upper.len(), nv, "one upper bound per variable");
    for (coeffs, rhs) in &problem.rows {
        assert!(*rhs >= 0.0, "slack start requires non-negative rhs");
        debug_assert!(coeffs.iter().all(|&(j, _)| j < nv));
    }

    let ma = problem.rows.len();
    let mut cols = vec![Vec::new(); nv];
    for (r, (coeffs, _)) in problem.rows.iter().enumerate() {
        for &(j, a) in *coeffs {
            cols[j].push((r, a));
        }
    }

    let mut s = Simplex {
        nv,
        ma,
        cost: problem.objective,
        upper: problem.upper,
        cols,
        b: problem.rows.iter().map(|&(_, rhs)| rhs).collect(),
        basis: (nv..nv + ma).collect(),
        state: (0..nv + ma)
            .map(|j| if j < nv { VarState::AtLower } else { VarState::Basic(j - nv) })
            .collect(),
        binv: identity(ma),
        xb: problem.rows.iter().map(|&(_, rhs)| rhs).collect(),
        iterations: 0,
        since_refactor: 0,
        degenerate_run: 0,
    };
    s.run()?;
    Ok(s.extract())
}

fn identity(m: usize) -> Vec<f64> {
    let mut id = vec![0.0; m * m];
    for i in 0..m {
        id[i * m + i] = 1.0;
    }
    id
}

impl Simplex<'_> {
    fn run(&mut self) -> Result<(), SimplexError> {
        let mut pricing = Pricing::Dantzig;
        loop {
            if self.iterations >= MAX_ITERATIONS {
                let pi = self.duals();
                let (_, worst) = self.price(&pi, &Pricing::Dantzig);
                return Err(SimplexError::IterationLimit {
                    iterations: self.iterations,
                    objective: self.current_objective(),
                    max_violation: worst,
                });
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }

            let pi = self.duals();
            let (entering, _) = self.price(&pi, &pricing);
            let Some(entering) = entering else {
                return Ok(());
            };

            let increasing = self.state[entering] == VarState::AtLower;
            let w = self.direction(entering);
            let step = self.ratio_test(entering, increasing, &w);
            self.iterations += 1;

            match step {
                Step::Unbounded => {
                    return Err(SimplexError::Numerical(
                        "objective unbounded below (malformed program)".into(),
                    ))
                }
                Step::Flip { t } => {
                    self.apply_flip(entering, increasing, &w, t);
                    self.degenerate_run = 0;
                    pricing = Pricing::Dantzig;
                }
                Step::Pivot { t, pos, to_upper } => {
                    self.apply_pivot(entering, increasing, &w, t, pos, to_upper)?;
                    if t <= EPS_STEP {
                        self.degenerate_run += 1;
                        if self.degenerate_run >= BLAND_TRIGGER {
                            pricing = Pricing::Bland;
                        }
                    } else {
                        self.degenerate_run = 0;
                        pricing = Pricing::Dantzig;
                    }
                }
            }
        }
    }

    fn cost_of(&self, var: usize) -> f64 {
        if var < self.nv {
            self.cost[var]
        } else {
            0.0
        }
    }

    fn upper_of(&self, var: usize) -> f64 {
        if var < self.nv {
            self.upper[var]
        } else {
            f64::INFINITY
        }
    }

    /// `π = c_B · B⁻¹`.
    fn duals(&self) -> Vec<f64> {
        let mut pi = vec![0.0; self.ma];
        for (k, &var) in self.basis.iter().enumerate() {
            let cb = self.cost_of(var);
            if cb != 0.0 {
                let row = &self.binv[k * self.ma..(k + 1) * self.ma];
                for (p, &v) in pi.iter_mut().zip(row) {
                    *p += cb * v;
                }
            }
        }
        pi
    }

    fn reduced_cost(&self, pi: &[f64], var: usize) -> f64 {
        if var < self.nv {
            let mut d = self.cost[var];
            for &(r, a) in &self.cols[var] {
                d -= pi[r] * a;
            }
            d
        } else {
            -pi[var - self.nv]
        }
    }

    /// Entering candidate under the active rule, plus the worst violation
    /// seen (for diagnostics). A variable at lower bound wants `d < 0`, one
    /// at upper bound wants `d > 0`.
    fn price(&self, pi: &[f64], pricing: &Pricing) -> (Option<usize>, f64) {
        let mut best: Option<usize> = None;
        let mut best_violation = 0.0;
        for var in 0..self.nv + self.ma {
            let violation = match self.state[var] {
                VarState::Basic(_) => continue,
                VarState::AtLower => -self.reduced_cost(pi, var),
                VarState::AtUpper => self.reduced_cost(pi, var),
            };
            if violation <= tol::OPTIMALITY {
                continue;
            }
            match pricing {
                Pricing::Bland => return (Some(var), violation),
                Pricing::Dantzig => {
                    if violation > best_violation {
                        best_violation = violation;
                        best = Some(var);
                    }
                }
            }
        }
        (best, best_violation)
    }

    /// `w = B⁻¹ · A_entering`.
    fn direction(&self, entering: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.ma];
        let apply = |w: &mut [f64], binv: &[f64], r: usize, a: f64| {
            for k in 0..self.ma {
                w[k] += binv[k * self.ma + r] * a;
            }
        };
        if entering < self.nv {
            for &(r, a) in &self.cols[entering] {
                apply(&mut w, &self.binv, r, a);
            }
        } else {
            apply(&mut w, &self.binv, entering - self.nv, 1.0);
        }
        w
    }

    /// Largest step `t ≥ 0` for the entering variable. Moving by `t` changes
    /// basic values by `−σ·w·t` where `σ = +1` when entering increases.
    /// Ties prefer the bound flip (no factorization churn), then the larger
    /// pivot magnitude, then the smaller variable index.
    fn ratio_test(&self, entering: usize, increasing: bool, w: &[f64]) -> Step {
        let sigma = if increasing { 1.0 } else { -1.0 };
        let span = self.upper_of(entering);
        let mut best = if span.is_finite() {
            Step::Flip { t: span }
        } else {
            Step::Unbounded
        };
        let mut best_t = span; // infinite when unbounded
        let mut best_mag = 0.0;

        for (k, &wk) in w.iter().enumerate() {
            let rate = sigma * wk;
            let (t, to_upper) = if rate > EPS_PIVOT {
                // Basic value falls toward its lower bound 0.
                ((self.xb[k] / rate).max(0.0), false)
            } else if rate < -EPS_PIVOT {
                let ub = self.upper_of(self.basis[k]);
                if !ub.is_finite() {
                    continue;
                }
                (((ub - self.xb[k]) / -rate).max(0.0), true)
            } else {
                continue;
            };
            let mag = wk.abs();
            let replace = if t < best_t - EPS_RATIO_TIE {
                true
            } else if t <= best_t + EPS_RATIO_TIE {
                match best {
                    // A tie with the flip keeps the flip: it is exact.
                    Step::Flip { .. } => false,
                    Step::Pivot { pos, .. } => {
                        mag > best_mag
                            || (mag == best_mag && self.basis[k] < self.basis[pos])
                    }
                    Step::Unbounded => true,
                }
            } else {
                false
            };
            if replace {
                best_t = t;
                best_mag = mag;
                best = Step::Pivot { t, pos: k, to_upper };
            }
        }
        best
    }

    fn apply_flip(&mut self, entering: usize, increasing: bool, w: &[f64], t: f64) {
        let sigma = if increasing { 1.0 } else { -1.0 };
        for (xb, &wk) in self.xb.iter_mut().zip(w) {
            *xb -= sigma * wk * t;
        }
        self.state[entering] = if increasing {
            VarState::AtUpper
        } else {
            VarState::AtLower
        };
    }

    fn apply_pivot(
        &mut self,
        entering: usize,
        increasing: bool,
        w: &[f64],
        t: f64,
        pos: usize,
        to_upper: bool,
    ) -> Result<(), SimplexError> {
        let pivot = w[pos];
        if pivot.abs() <= EPS_PIVOT {
            return Err(SimplexError::Numerical(format!(
                "pivot element {pivot:.3e} below threshold"
            )));
        }

        let sigma = if increasing { 1.0 } else { -1.0 };
        for (xb, &wk) in self.xb.iter_mut().zip(w) {
            *xb -= sigma * wk * t;
        }
        let entering_value = if increasing {
            t
        } else {
            self.upper_of(entering) - t
        };

        let leaving = self.basis[pos];
        self.state[leaving] = if to_upper {
            VarState::AtUpper
        } else {
            VarState::AtLower
        };
        self.basis[pos] = entering;
        self.state[entering] = VarState::Basic(pos);
        self.xb[pos] = entering_value;

        // Eta update: row `pos` scaled, every other row swept.
        let ma = self.ma;
        let (before, rest) = self.binv.split_at_mut(pos * ma);
        let (prow, after) = rest.split_at_mut(ma);
        for v in prow.iter_mut() {
            *v /= pivot;
        }
        let sweep = |rows: &mut [f64], base: usize| {
            for (i, chunk) in rows.chunks_exact_mut(ma).enumerate() {
                let f = w[base + i];
                if f != 0.0 {
                    for (c, &p) in chunk.iter_mut().zip(prow.iter()) {
                        *c -= f * p;
                    }
                }
            }
        };
        sweep(before, 0);
        sweep(after, pos + 1);

        self.since_refactor += 1;
        Ok(())
    }

    /// Rebuild the inverse and basic values from scratch (Gauss–Jordan with
    /// partial pivoting on the current basis matrix).
    fn refactor(&mut self) -> Result<(), SimplexError> {
        let ma = self.ma;
        let mut m = vec![0.0; ma * ma];
        for (k, &var) in self.basis.iter().enumerate() {
            if var < self.nv {
                for &(r, a) in &self.cols[var] {
                    m[r * ma + k] = a;
                }
            } else {
                m[(var - self.nv) * ma + k] = 1.0;
            }
        }
        let mut inv = identity(ma);
        for c in 0..ma {
            let pivot_row = (c..ma)
                .max_by(|&a, &b| {
                    m[a * ma + c]
                        .abs()
                        .partial_cmp(&m[b * ma + c].abs())
                        .expect("finite basis entries")
                })
                .expect("non-empty range");
            let pivot = m[pivot_row * ma + c];
            if pivot.abs() < 1e-11 {
                return Err(SimplexError::Numerical(format!(
                    "singular basis during refactorization (column {c})"
                )));
            }
            if pivot_row != c {
                for j in 0..ma {
                    m.swap(c * ma + j, pivot_row * ma + j);
                    inv.swap(c * ma + j, pivot_row * ma + j);
                }
            }
            let inv_p = 1.0 / pivot;
            for j in 0..ma {
                m[c * ma + j] *= inv_p;
                inv[c * ma + j] *= inv_p;
            }
            for r in 0..ma {
                if r == c {
                    continue;
                }
                let f = m[r * ma + c];
                if f != 0.0 {
                    for j in 0..ma {
                        m[r * ma + j] -= f * m[c * ma + j];
                        inv[r * ma + j] -= f * inv[c * ma + j];
                    }
                }
            }
        }
        self.binv = inv;

        // xB = B⁻¹ (b − Σ_{j at upper} A_j u_j).
        let mut r = self.b.clone();
        for var in 0..self.nv {
            if self.state[var] == VarState::AtUpper {
                let u = self.upper[var];
                for &(row, a) in &self.cols[var] {
                    r[row] -= a * u;
                }
            }
        }
        for k in 0..ma {
            let row = &self.binv[k * ma..(k + 1) * ma];
            self.xb[k] = row.iter().zip(&r).map(|(&bi, &ri)| bi * ri).sum();
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn value_of(&self, var: usize) -> f64 {
        match self.state[var] {
            VarState::Basic(k) => self.xb[k],
            VarState::AtLower => 0.0,
            VarState::AtUpper => self.upper_of(var),
        }
    }

    fn current_objective(&self) -> f64 {
        (0..self.nv).map(|j| self.cost[j] * self.value_of(j)).sum()
    }

    fn extract(&self) -> Solution {
        Solution {
            x: (0..self.nv).map(|j| self.value_of(j)).collect(),
            objective: self.current_objective(),
            iterations: self.iterations,
        }
    }
}
