//! Exact brute-force optimum for small instances, plus independent
//! feasibility/quality checking. Ground truth for tests and benchmarks.
//!
//! # Why enumerating ladder levels is exhaustive
//!
//! The search space is every assignment of *input* distance values to pairs,
//! not arbitrary reals. This loses nothing for the count-of-changes
//! objective: take any ultrametric `t` over arbitrary reals and compose it
//! with the monotone map "round down to the nearest ladder value `d_ℓ`
//! (values below `d_L` map to `d_L`)". A monotone map applied entrywise
//! preserves the defining inequality `t(i,k) ≤ max(t(i,j), t(j,k))`, so the
//! composed table is still an ultrametric, and on any pair where `t` agreed
//! with the input it still agrees (input values are ladder values and map to
//! themselves). So the composed table has no more disagreements than `t`,
//! and an optimal solution always exists inside the enumerated space.
//!
//! # Search
//!
//! Depth-first over pairs in lexicographic order, levels ascending. Placing
//! the level of pair `(j,k)` completes every triangle `{a,j,k}` with
//! `a < j`, and those triangles are checked immediately: a partial
//! assignment whose completed triangle has a unique minimum level can never
//! extend to an ultrametric, so the branch is cut. That is the only
//! cleverness; no bounding, so the result is easy to trust. The first
//! strict improvement is kept, which makes the witness the lexicographically
//! smallest optimal assignment independent of sharding.

use rayon::prelude::*;
use thiserror::Error;

use crate::instance::{
    first_violation_levels, pair_count, pair_index, pairs, Instance, Ultrametric,
};

/// Default cap on the enumeration space `L^(number of pairs)`.
/// Covers `n ≤ 6` at `L = 3` and `n ≤ 7` at `L = 2`.
pub const DEFAULT_BUDGET: u64 = 20_000_000;

/// Outcome of an exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    /// Minimum weighted disagreement over all ultrametrics.
    pub opt_cost: f64,
    /// An ultrametric attaining it (lexicographically smallest such).
    pub witness: Ultrametric,
    /// Candidates conclusively decided: complete assignments scored plus
    /// partial assignments rejected by the triangle cut (each cut counts
    /// once, not its subtree size).
    pub enumerated_count: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error(
        "enumeration space {required} exceeds the budget {budget}; \
         raise the budget or shrink the instance"
    )]
    BudgetExceeded { required: u128, budget: u64 },
}

/// Exhaustively minimize weighted disagreement over all ultrametrics whose
/// values lie on the instance's ladder (without loss; see module docs).
///
/// # Errors
///
/// [`OracleError::BudgetExceeded`] when `L^(n(n−1)/2) > budget`; the guard
/// uses the unpruned space because the cut's effectiveness is input-shaped.
pub fn exact_opt(inst: &Instance, budget: u64) -> Result<ExactResult, OracleError> {
    let n = inst.n();
    let m = pair_count(n);
    let levels = inst.ladder().num_levels();

    let required = (levels as u128).saturating_pow(m as u32);
    if required > budget as u128 {
        return Err(OracleError::BudgetExceeded { required, budget });
    }

    if m == 0 {
        return Ok(ExactResult {
            opt_cost: 0.0,
            witness: Ultrametric::new(n, Vec::new()),
            enumerated_count: 1,
        });
    }

    // For each pair position p = (j,k), the earlier-pair indices closing a
    // triangle {a,j,k}, a < j, at the moment p is placed.
    let mut closing: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
    for (j, k) in pairs(n) {
        let p = pair_index(n, j, k);
        closing[p] = (0..j)
            .map(|a| (pair_index(n, a, j), pair_index(n, a, k)))
            .collect();
    }

    // Shard on the first pair's level; each shard explores a disjoint block
    // of the lexicographic order, so merging by (cost, then shard order)
    // reproduces the sequential first-improvement result exactly.
    let shards: Vec<Shard> = (1..=levels)
        .into_par_iter()
        .map(|first| {
            let mut search = Search {
                inst,
                closing: &closing,
                m,
                levels,
                assignment: vec![0usize; m],
                best_cost: f64::INFINITY,
                best: None,
                count: 0,
            };
            search.assignment[0] = first;
            let cost0 = search.place_cost(0, first);
            if search.triangles_ok(0) {
                search.descend(1, cost0);
            } else {
                search.count += 1;
            }
            Shard {
                best_cost: search.best_cost,
                best: search.best,
                count: search.count,
            }
        })
        .collect();

    let mut opt_cost = f64::INFINITY;
    let mut witness: Option<Vec<usize>> = None;
    let mut enumerated_count = 0;
    for shard in shards {
        enumerated_count += shard.count;
        if shard.best_cost < opt_cost {
            opt_cost = shard.best_cost;
            witness = shard.best;
        }
    }
    let witness = witness.expect("level 1 everywhere is always an ultrametric");
    Ok(ExactResult {
        opt_cost,
        witness: Ultrametric::new(n, witness),
        enumerated_count,
    })
}

struct Shard {
    best_cost: f64,
    best: Option<Vec<usize>>,
    count: u64,
}

struct Search<'a> {
    inst: &'a Instance,
    closing: &'a [Vec<(usize, usize)>],
    m: usize,
    levels: usize,
    assignment: Vec<usize>,
    best_cost: f64,
    best: Option<Vec<usize>>,
    count: u64,
}

impl Search<'_> {
    fn place_cost(&self, p: usize, level: usize) -> f64 {
        match self.inst.input_level(p) {
            Some(input) if input != level => self.inst.weight(p),
            _ => 0.0,
        }
    }

    fn triangles_ok(&self, p: usize) -> bool {
        let c = self.assignment[p];
        self.closing[p].iter().all(|&(pa, pb)| {
            let a = self.assignment[pa];
            let b = self.assignment[pb];
            let lo = a.min(b).min(c);
            (a == lo) as u8 + (b == lo) as u8 + (c == lo) as u8 >= 2
        })
    }

    fn descend(&mut self, p: usize, cost: f64) {
        if p == self.m {
            self.count += 1;
            if cost < self.best_cost {
                self.best_cost = cost;
                self.best = Some(self.assignment.clone());
            }
            return;
        }
        for level in 1..=self.levels {
            self.assignment[p] = level;
            if self.triangles_ok(p) {
                let added = self.place_cost(p, level);
                self.descend(p + 1, cost + added);
            } else {
                self.count += 1;
            }
        }
    }
}

/// Independent check of any candidate: is it an ultrametric, and what does
/// it cost against the instance?
///
/// Validity and cost are judged separately, so a non-ultrametric candidate
/// still gets its cost reported (the raw input, for example, scores
/// `(false, 0)` when it violates the ultrametric condition somewhere but by
/// definition agrees with itself everywhere).
///
/// # Panics
///
/// If the candidate covers a different vertex count than the instance.
pub fn verify_solution(inst: &Instance, u: &Ultrametric) -> (bool, f64) {
    assert_eq!(
        u.n(),
        inst.n(),
        "candidate covers {} vertices, instance has {}",
        u.n(),
        inst.n()
    );
    let is_valid = first_violation_levels(u.n(), u.levels()).is_none();
    let mut cost = 0.0;
    for p in 0..inst.num_pairs() {
        if let Some(input) = inst.input_level(p) {
            if input != u.level_by_pair(p) {
                cost += inst.weight(p);
            }
        }
    }
    (is_valid, cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{parse_instance, InputFormat, Mode};

    /// Unpruned odometer over all level assignments: the slowest possible
    /// correct answer, used to cross-check the pruned search.
    fn odometer_opt(inst: &Instance) -> f64 {
        let m = inst.num_pairs();
        let levels = inst.ladder().num_levels();
        let mut assignment = vec![1usize; m];
        let mut best = f64::INFINITY;
        loop {
            if first_violation_levels(inst.n(), &assignment).is_none() {
                let u = Ultrametric::new(inst.n(), assignment.clone());
                let cost = crate::instance::disagreement_cost(inst, &u).unwrap();
                if cost < best {
                    best = cost;
                }
            }
            // Increment the mixed-radix odometer.
            let mut p = 0;
            loop {
                if p == m {
                    return best;
                }
                if assignment[p] < levels {
                    assignment[p] += 1;
                    break;
                }
                assignment[p] = 1;
                p += 1;
            }
        }
    }

    fn complete(text: &str) -> Instance {
        parse_instance(text, Mode::Complete, InputFormat::Edges).unwrap()
    }

    #[test]
    fn ultrametric_input_is_its_own_optimum() {
        let inst = complete("a,b,1.0\na,c,2.0\nb,c,2.0\n");
        let res = exact_opt(&inst, DEFAULT_BUDGET).unwrap();
        assert_eq!(res.opt_cost, 0.0);
        assert_eq!(res.witness.levels(), &[2, 1, 1]);
        let (valid, cost) = verify_solution(&inst, &res.witness);
        assert!(valid);
        assert_eq!(cost, res.opt_cost);
    }

    #[test]
    fn conflicted_triangle_costs_one_change() {
        // Two similar pairs, one dissimilar: no ultrametric matches all
        // three, and changing any single edge suffices.
        let inst = complete("a,b,1.0\na,c,1.0\nb,c,2.0\n");
        let res = exact_opt(&inst, DEFAULT_BUDGET).unwrap();
        assert_eq!(res.opt_cost, 1.0);
        // Lexicographically smallest optimum: lower (a,b) to the far level.
        assert_eq!(res.witness.levels(), &[1, 2, 1]);
        // All 2^3 assignments get decided at the last edge: scored or cut.
        assert_eq!(res.enumerated_count, 8);
        // The raw input is not an ultrametric but costs nothing against
        // itself.
        let raw = Ultrametric::new(3, vec![2, 2, 1]);
        assert_eq!(verify_solution(&inst, &raw), (false, 0.0));
    }

    #[test]
    fn two_disjoint_clusters_cost_nothing() {
        let inst = complete(
            "a,b,1.0\nc,d,1.0\na,c,2.0\na,d,2.0\nb,c,2.0\nb,d,2.0\n",
        );
        let res = exact_opt(&inst, DEFAULT_BUDGET).unwrap();
        assert_eq!(res.opt_cost, 0.0);
    }

    #[test]
    fn kpartite_fill_is_free_but_constrained() {
        // Parts {a,b} and {c}; (a,c) near, (b,c) far. The only ultrametric
        // extension puts the unspecified (a,b) at the far level, and it
        // costs nothing.
        let text = "3\n0,*,1.0\n*,0,2.0\n1.0,2.0,0\n";
        let inst = parse_instance(text, Mode::Kpartite, InputFormat::Matrix).unwrap();
        let res = exact_opt(&inst, DEFAULT_BUDGET).unwrap();
        assert_eq!(res.opt_cost, 0.0);
        // Pairs in order: (1,2) unspecified, (1,3) level 2, (2,3) level 1.
        assert_eq!(res.witness.levels(), &[1, 2, 1]);
    }

    #[test]
    fn budget_guard_reports_required_space() {
        // n = 7 at L = 3: 3^21 far exceeds the default budget.
        let mut lines = String::new();
        for i in 0..7u32 {
            for j in i + 1..7 {
                let d = 1.0 + ((i + j) % 3) as f64;
                lines.push_str(&format!("v{i},v{j},{d}\n"));
            }
        }
        let inst = complete(&lines);
        let err = exact_opt(&inst, DEFAULT_BUDGET).unwrap_err();
        assert_eq!(
            err,
            OracleError::BudgetExceeded {
                required: (3u128).pow(21),
                budget: DEFAULT_BUDGET,
            }
        );
    }

    #[test]
    fn matches_the_unpruned_odometer() {
        // A few fixed small instances with 2 and 3 levels.
        let texts = [
            "a,b,1\na,c,2\na,d,1\nb,c,1\nb,d,2\nc,d,2\n",
            "a,b,3\na,c,1\na,d,2\nb,c,2\nb,d,3\nc,d,1\n",
            "a,b,1\na,c,1\na,d,3\nb,c,2\nb,d,2\nc,d,3\n",
        ];
        for text in texts {
            let inst = complete(text);
            let res = exact_opt(&inst, DEFAULT_BUDGET).unwrap();
            assert_eq!(res.opt_cost, odometer_opt(&inst), "instance {text:?}");
            let (valid, cost) = verify_solution(&inst, &res.witness);
            assert!(valid);
            assert_eq!(cost, res.opt_cost);
        }
    }

    #[test]
    fn relabeling_vertices_preserves_the_optimum() {
        // The same metric under three vertex orders.
        let base = "a,b,1\na,c,2\na,d,3\nb,c,2\nb,d,3\nc,d,3\n";
        let rotated = "b,c,2\nb,d,3\nb,a,1\nc,d,3\nc,a,2\nd,a,3\n";
        let reversed = "d,c,3\nd,b,3\nd,a,3\nc,b,2\nc,a,2\nb,a,1\n";
        let opts: Vec<f64> = [base, rotated, reversed]
            .iter()
            .map(|t| exact_opt(&complete(t), DEFAULT_BUDGET).unwrap().opt_cost)
            .collect();
        assert_eq!(opts[0], opts[1]);
        assert_eq!(opts[0], opts[2]);
    }

    #[test]
    fn uniform_weights_scale_the_unweighted_optimum() {
        let plain = "a,b,1\na,c,1\nb,c,2\n";
        let inst = complete(plain);
        let unweighted = exact_opt(&inst, DEFAULT_BUDGET).unwrap().opt_cost;

        let ones = parse_instance(
            "a,b,1,1\na,c,1,1\nb,c,2,1\n",
            Mode::Weighted,
            InputFormat::Edges,
        )
        .unwrap();
        assert_eq!(exact_opt(&ones, DEFAULT_BUDGET).unwrap().opt_cost, unweighted);

        let scaled = parse_instance(
            "a,b,1,2.5\na,c,1,2.5\nb,c,2,2.5\n",
            Mode::Weighted,
            InputFormat::Edges,
        )
        .unwrap();
        assert_eq!(
            exact_opt(&scaled, DEFAULT_BUDGET).unwrap().opt_cost,
            2.5 * unweighted
        );
    }

    #[test]
    fn single_pair_and_single_vertex_are_trivial() {
        let two = complete("a,b,4.0\n");
        let res = exact_opt(&two, DEFAULT_BUDGET).unwrap();
        assert_eq!(res.opt_cost, 0.0);
        assert_eq!(res.witness.levels(), &[1]);
    }
}
