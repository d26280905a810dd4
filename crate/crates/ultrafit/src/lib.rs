//! Fit an ultrametric to pairwise distance data while changing as little of
//! the input as possible.
//!
//! The input is a set of pairwise distances (complete, weighted, or complete
//! multipartite with some pairs left unspecified). The goal is an ultrametric
//! — a distance where every triangle's two largest sides tie — that disagrees
//! with the input on the minimum total weight of entries. The pipeline:
//!
//! 1. [`lp`] builds and solves a linear relaxation whose variables form, for
//!    every pair, a cumulative distribution over the ladder of distinct input
//!    distances.
//! 2. [`pivot`] rounds the fractional solution with a recursive randomized
//!    pivot scheme: pivot edges are fixed or sampled from their level
//!    distribution, the remaining edges are minimally repaired, and the
//!    recursion descends into the distance classes around the pivot.
//! 3. [`oracle`] provides exact brute-force optima for small instances, and
//!    [`harness`] runs seeded Monte-Carlo studies that compare the rounded
//!    cost against the LP lower bound and the exact optimum.
//!
//! Fitted ultrametrics export to Newick trees via [`newick`].
//!
//! ```
//! use ultrafit::instance::{parse_instance, InputFormat, Mode};
//! use ultrafit::{lp, pivot};
//!
//! let text = "a,b,1.0\na,c,2.0\nb,c,2.0\n";
//! let inst = parse_instance(text, Mode::Complete, InputFormat::Edges).unwrap();
//! let program = lp::build_lp(&inst).unwrap();
//! let solution = lp::normalize_top_level(&lp::solve_lp(&program).unwrap(), &inst);
//! let (fitted, _trace) = pivot::run(&inst, &solution, 0.4, 0.0, 7).unwrap();
//! // The input is already an ultrametric, so nothing is modified.
//! let cost = ultrafit::instance::disagreement_cost(&inst, &fitted).unwrap();
//! assert_eq!(cost, 0.0);
//! ```

pub mod harness;
pub mod instance;
pub mod lp;
pub mod newick;
pub mod oracle;
pub mod pivot;
pub mod tol;
