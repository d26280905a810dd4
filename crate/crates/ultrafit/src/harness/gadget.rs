//! Two handcrafted regression families with known analytical behavior.
//!
//! **Hub family.** A two-part instance — a hub vertex in its own part
//! against a companion plus `m` satellites — with a handcrafted fractional
//! table: the hub–companion pair carries `y₁ = mε`, hub–satellite pairs
//! `1 − ε`, and every unspecified pair `1 − (m+1)ε`. The table is feasible
//! with objective `2mε`, and at the multipartite defaults (α = 3/8,
//! β = 2/3) every pivot edge is deterministic, so threshold rounding never
//! modifies anything. Purely randomized rounding, in contrast, keeps
//! re-risking the hub–companion edge in every frame a satellite pivots,
//! paying Θ(m²ε) in expectation — the separation that motivates the
//! deterministic class.
//!
//! **Stable triangles.** Two-level triangles whose three edges are all
//! deterministic and cheap at α = 1/3 (two high pairs at the large
//! distance, one low pair at the small one). Feasibility forces the two
//! high values within the low value of each other; rejection sampling over
//! that region produces, for every pivot choice, a frame that modifies
//! nothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::instance::{disagreement_cost, Instance, Mode};
use crate::lp::{self, LevelSolution};
use crate::pivot::run_with;
use crate::tol;

/// The hub instance and its handcrafted feasible table.
#[derive(Debug, Clone)]
pub struct HubGadget {
    pub instance: Instance,
    pub solution: LevelSolution,
    /// Objective of the table: `2mε`.
    pub lp_cost: f64,
}

/// Build the hub gadget for `m ≥ 1` satellites. `epsilon` must be small
/// enough that every class threshold clears, `(m + 1)·ε < 1/4`.
pub fn hub_gadget(m: usize, epsilon: f64) -> HubGadget {
    assert!(m >= 1, "need at least one satellite");
    assert!(
        epsilon > 0.0 && (m + 1) as f64 * epsilon < 0.25,
        "epsilon out of range: need 0 < (m+1)·epsilon < 1/4"
    );
    let n = m + 2;
    let mut labels = vec!["hub".to_string(), "companion".to_string()];
    labels.extend((0..m).map(|t| format!("s{t}")));

    // Hub (part 0) against everyone else (part 1): the specified pairs are
    // exactly the hub's, at the small distance for the companion and the
    // large one for satellites.
    let mut edges = vec![(0usize, 1usize, 1.0, 1.0)];
    for t in 2..n {
        edges.push((0, t, 2.0, 1.0));
    }
    let instance = Instance::new(Mode::Kpartite, labels, edges).expect("gadget is valid");

    let me = m as f64 * epsilon;
    let within = 1.0 - (m as f64 + 1.0) * epsilon;
    let mut y1 = vec![within; n * (n - 1) / 2];
    for p in 0..instance.num_pairs() {
        if instance.is_specified(p) {
            y1[p] = if instance.input_level(p) == Some(2) { me } else { 1.0 - epsilon };
        }
    }
    let y2 = vec![1.0; n * (n - 1) / 2];
    let solution = LevelSolution::from_tables(&instance, &[y1, y2]);
    debug_assert!(lp::feasibility_error(&solution) <= tol::FEASIBILITY);
    let lp_cost = solution.objective();
    HubGadget { instance, solution, lp_cost }
}

/// Mean rounding cost of the hub gadget under threshold rounding and under
/// purely randomized rounding, over `trials` paired runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GadgetComparison {
    pub m: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub lp_cost: f64,
    pub default_mean_cost: f64,
    pub forced_mean_cost: f64,
}

impl GadgetComparison {
    pub fn default_ratio(&self) -> f64 {
        self.default_mean_cost / self.lp_cost
    }

    pub fn forced_ratio(&self) -> f64 {
        self.forced_mean_cost / self.lp_cost
    }
}

/// Run the comparison at the multipartite defaults. Trial `t` uses stream
/// `2t` for threshold rounding and `2t + 1` for the forced-random run.
pub fn gadget_comparison(
    m: usize,
    epsilon: f64,
    trials: usize,
    master_seed: u64,
) -> GadgetComparison {
    let gadget = hub_gadget(m, epsilon);
    let (alpha, beta) = super::default_parameters(Mode::Kpartite);
    let mut totals = [0.0, 0.0];
    for t in 0..trials {
        for (which, total) in totals.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(2 * t as u64 + which as u64);
            let (fitted, _) = run_with(
                &gadget.instance,
                &gadget.solution,
                alpha,
                beta,
                &mut rng,
                which == 1,
            )
            .expect("gadget table is feasible");
            *total += disagreement_cost(&gadget.instance, &fitted)
                .expect("engine output is in range");
        }
    }
    GadgetComparison {
        m,
        epsilon,
        trials,
        lp_cost: gadget.lp_cost,
        default_mean_cost: totals[0] / trials as f64,
        forced_mean_cost: totals[1] / trials as f64,
    }
}

/// Outcome of the stable-triangle study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableTriangleReport {
    /// Rounding frames constructed (one per sampled triangle).
    pub frames: usize,
    /// Frames that modified any edge — the analysis says zero.
    pub modified_frames: usize,
}

/// Sample `samples` all-deterministic cheap triangles at α = 1/3 and round
/// each once; count frames with any modification.
///
/// Sampling: the two pairs at the large distance draw `y₁` uniformly from
/// `(2/3 + 10⁻⁶, 1]`, the small-distance pair from `[0, 1/3 − 10⁻⁶)`,
/// rejected until the level-1 triangle row `|y_high − y_high'| ≤ y_low`
/// holds (the only nontrivial feasibility constraint).
pub fn stable_triangle_study(samples: usize, master_seed: u64) -> StableTriangleReport {
    let labels: Vec<String> =
        ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    // (a,b) and (a,c) at the large distance, (b,c) at the small one.
    let edges = vec![
        (0usize, 1usize, 2.0, 1.0),
        (0, 2, 2.0, 1.0),
        (1, 2, 1.0, 1.0),
    ];
    let instance = Instance::new(Mode::Complete, labels, edges).expect("valid triangle");

    let margin = 1e-6;
    let mut modified_frames = 0;
    let mut frames = 0;
    for s in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(s as u64);
        let (h1, h2, low) = loop {
            let low = rng.random::<f64>() * (1.0 / 3.0 - margin);
            let h1 = 2.0 / 3.0 + margin + rng.random::<f64>() * (1.0 / 3.0 - margin);
            let h2 = 2.0 / 3.0 + margin + rng.random::<f64>() * (1.0 / 3.0 - margin);
            if (h1 - h2).abs() <= low {
                break (h1, h2, low);
            }
        };
        let solution = LevelSolution::from_tables(
            &instance,
            &[vec![h1, h2, low], vec![1.0, 1.0, 1.0]],
        );
        debug_assert!(lp::feasibility_error(&solution) <= tol::FEASIBILITY);

        let (_, trace) =
            run_with(&instance, &solution, 1.0 / 3.0, 0.0, &mut rng, false)
                .expect("sampled table is feasible");
        for frame in &trace.frames {
            if frame.pivot.is_none() {
                continue;
            }
            frames += 1;
            let touched = frame
                .pivot_edges
                .iter()
                .any(|e| e.old_level != e.new_level)
                || frame.repairs.iter().any(|r| r.old_level != r.new_level);
            if touched {
                modified_frames += 1;
            }
        }
    }
    StableTriangleReport { frames, modified_frames }
}
