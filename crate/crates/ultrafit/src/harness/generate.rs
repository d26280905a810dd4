//! Seeded random instance generators.
//!
//! All randomness flows through an explicit ChaCha generator so every
//! instance is reproducible from its seed. The ladder of a generated
//! instance uses the values `L, L−1, …, 1` (level ℓ ↦ value `L + 1 − ℓ`).
//!
//! The base distribution is a random ultrametric drawn by recursive uniform
//! partitioning: starting with all vertices and level 1, every vertex of
//! the current block picks one of `|block|` part slots uniformly, empty
//! slots are dropped, cross-part pairs get the current level, and each part
//! recurses with the next level; blocks reaching level `L` keep `L` on all
//! internal pairs. Perturbed variants then reassign `k` uniformly chosen
//! pairs to uniformly chosen *other* levels, which certifies that the
//! optimal modification cost is at most `k` (undoing the perturbation is
//! one feasible repair).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::HarnessError;
use crate::instance::{pair_index, Instance, Mode, Ultrametric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GeneratorKind {
    /// Random ultrametric with `corruptions` pairs moved to other levels.
    PerturbedUltrametric,
    /// Every pair gets an independent uniform level.
    RandomLevels,
    /// Two-level ± instance: level 2 ("similar") with probability
    /// `density`, level 1 otherwise.
    CcRandom,
    /// Balanced multipartite restriction of a perturbed ultrametric:
    /// within-part pairs are unspecified.
    KpartitePerturbed,
}

/// Everything a generator needs besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub levels: usize,
    /// Perturbed kinds: number of corrupted pairs.
    pub corruptions: usize,
    /// CcRandom: probability of the "similar" level.
    pub density: f64,
    /// KpartitePerturbed: number of parts.
    pub parts: usize,
    /// Draw weights as a shortest-path metric instead of unit weights
    /// (weighted-mode studies; the triangle inequality holds by
    /// construction).
    pub metric_weights: bool,
}

impl GeneratorSpec {
    pub fn perturbed(n: usize, levels: usize, corruptions: usize) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::PerturbedUltrametric,
            n,
            levels,
            corruptions,
            density: 0.0,
            parts: 0,
            metric_weights: false,
        }
    }

    pub fn random_levels(n: usize, levels: usize) -> Self {
        GeneratorSpec { kind: GeneratorKind::RandomLevels, ..Self::perturbed(n, levels, 0) }
    }

    pub fn cc_random(n: usize, density: f64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::CcRandom,
            density,
            ..Self::perturbed(n, 2, 0)
        }
    }

    pub fn kpartite(n: usize, levels: usize, parts: usize, corruptions: usize) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::KpartitePerturbed,
            parts,
            ..Self::perturbed(n, levels, corruptions)
        }
    }

    pub fn with_metric_weights(mut self) -> Self {
        self.metric_weights = true;
        self
    }

    /// The mode of the instances this spec produces.
    pub fn mode(&self) -> Mode {
        if self.kind == GeneratorKind::KpartitePerturbed {
            Mode::Kpartite
        } else if self.metric_weights {
            Mode::Weighted
        } else {
            Mode::Complete
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::BadGenerator(msg));
        if self.n < 2 {
            return bad(format!("need at least 2 vertices, got {}", self.n));
        }
        if self.levels < 1 {
            return bad("need at least one level".into());
        }
        let max_pairs = match self.kind {
            GeneratorKind::KpartitePerturbed => {
                if !(2..=self.n).contains(&self.parts) {
                    return bad(format!(
                        "parts must lie in 2..={}, got {}",
                        self.n, self.parts
                    ));
                }
                cross_pair_count(self.n, self.parts)
            }
            _ => self.n * (self.n - 1) / 2,
        };
        if self.corruptions > max_pairs {
            return bad(format!(
                "cannot corrupt {} of {max_pairs} pairs",
                self.corruptions
            ));
        }
        if self.kind == GeneratorKind::CcRandom {
            if !(0.0..=1.0).contains(&self.density) {
                return bad(format!("density {} outside [0, 1]", self.density));
            }
            if self.levels != 2 {
                return bad("two-level generator requires levels = 2".into());
            }
        }
        if self.metric_weights && self.kind == GeneratorKind::KpartitePerturbed {
            return bad("multipartite instances use unit weights".into());
        }
        Ok(())
    }
}

/// Number of cross-part pairs under balanced `v ↦ v mod parts` assignment.
fn cross_pair_count(n: usize, parts: usize) -> usize {
    let mut within = 0;
    for p in 0..parts {
        let size = n / parts + usize::from(p < n % parts);
        within += size * (size - 1) / 2;
    }
    n * (n - 1) / 2 - within
}

/// Random ultrametric by recursive uniform partitioning (see the module
/// docs for the exact law). Deterministic given the generator state.
pub fn random_ultrametric(n: usize, levels: usize, rng: &mut ChaCha8Rng) -> Ultrametric {
    let mut level = vec![levels; n * (n - 1) / 2];
    let mut stack = vec![((0..n).collect::<Vec<_>>(), 1)];
    while let Some((block, l)) = stack.pop() {
        if l >= levels || block.len() <= 1 {
            continue;
        }
        let mut parts: Vec<Vec<usize>> = vec![Vec::new(); block.len()];
        for &v in &block {
            parts[rng.random_range(0..block.len())].push(v);
        }
        let parts: Vec<Vec<usize>> = parts.into_iter().filter(|p| !p.is_empty()).collect();
        for (pi, part) in parts.iter().enumerate() {
            for other in parts.iter().skip(pi + 1) {
                for &i in part {
                    for &j in other {
                        level[pair_index(n, i.min(j), i.max(j))] = l;
                    }
                }
            }
            stack.push((part.clone(), l + 1));
        }
    }
    Ultrametric::new(n, level)
}

/// Generate one instance from a fresh generator seeded with `seed`.
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<Instance, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_with(spec, &mut rng)
}

/// Generate one instance, consuming randomness from the caller's generator.
pub fn generate_with(
    spec: &GeneratorSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Instance, HarnessError> {
    spec.validate()?;
    let n = spec.n;
    let value = |level: usize| (spec.levels + 1 - level) as f64;

    // Per-pair levels, pair-major draw order.
    let mut level: Vec<usize> = match spec.kind {
        GeneratorKind::PerturbedUltrametric | GeneratorKind::KpartitePerturbed => {
            random_ultrametric(n, spec.levels, rng).levels().to_vec()
        }
        GeneratorKind::RandomLevels => (0..n * (n - 1) / 2)
            .map(|_| 1 + rng.random_range(0..spec.levels))
            .collect(),
        GeneratorKind::CcRandom => (0..n * (n - 1) / 2)
            .map(|_| if rng.random::<f64>() < spec.density { 2 } else { 1 })
            .collect(),
    };

    // Which pairs exist, and the part labels for multipartite instances.
    let specified: Vec<bool> = match spec.kind {
        GeneratorKind::KpartitePerturbed => {
            let mut s = vec![false; n * (n - 1) / 2];
            for i in 0..n {
                for j in (i + 1)..n {
                    s[pair_index(n, i, j)] = i % spec.parts != j % spec.parts;
                }
            }
            s
        }
        _ => vec![true; n * (n - 1) / 2],
    };

    // Corrupt `k` uniformly chosen specified pairs to uniform other levels
    // (partial Fisher–Yates over the specified pool, then ascending
    // reassignment).
    if spec.corruptions > 0 && spec.levels > 1 {
        let mut pool: Vec<usize> = (0..level.len()).filter(|&p| specified[p]).collect();
        for t in 0..spec.corruptions {
            let swap = t + rng.random_range(0..pool.len() - t);
            pool.swap(t, swap);
        }
        let mut chosen: Vec<usize> = pool[..spec.corruptions].to_vec();
        chosen.sort_unstable();
        for p in chosen {
            let offset = 1 + rng.random_range(0..spec.levels - 1);
            level[p] = 1 + (level[p] - 1 + offset) % spec.levels;
        }
    }

    // Weights: unit, or an all-pairs shortest-path metric over uniform
    // [0.5, 2) edge lengths (pair-major draw order).
    let weight: Vec<f64> = if spec.metric_weights {
        let mut w: Vec<f64> = (0..n * (n - 1) / 2)
            .map(|_| 0.5 + 1.5 * rng.random::<f64>())
            .collect();
        for k in 0..n {
            for i in 0..n {
                for j in (i + 1)..n {
                    if k == i || k == j {
                        continue;
                    }
                    let via = w[pair_index(n, i.min(k), i.max(k))]
                        + w[pair_index(n, j.min(k), j.max(k))];
                    let p = pair_index(n, i, j);
                    if via < w[p] {
                        w[p] = via;
                    }
                }
            }
        }
        w
    } else {
        vec![1.0; n * (n - 1) / 2]
    };

    let labels: Vec<String> = (0..n).map(|v| format!("v{v}")).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = pair_index(n, i, j);
            if specified[p] {
                edges.push((i, j, value(level[p]), weight[p]));
            }
        }
    }
    Ok(Instance::new(spec.mode(), labels, edges)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::is_ultrametric;
    use crate::lp::{build_lp, solve_lp};
    use crate::oracle::exact_opt;

    fn levels_of(inst: &Instance) -> Vec<usize> {
        (0..inst.num_pairs())
            .map(|p| inst.input_level(p).unwrap_or(0))
            .collect()
    }

    #[test]
    fn unperturbed_instances_are_ultrametrics_with_zero_lp_cost() {
        for seed in 0..10 {
            let inst = generate(&GeneratorSpec::perturbed(6, 3, 0), seed).unwrap();
            let u = Ultrametric::new(inst.n(), levels_of(&inst));
            assert!(is_ultrametric(&u));
            let sol = solve_lp(&build_lp(&inst).unwrap()).unwrap();
            assert!(sol.objective().abs() < 1e-7, "seed {seed}");
        }
    }

    #[test]
    fn perturbed_instances_have_opt_at_most_k() {
        for seed in 0..10 {
            let inst = generate(&GeneratorSpec::perturbed(6, 3, 2), seed).unwrap();
            let result = exact_opt(&inst, 100_000_000).unwrap();
            assert!(result.opt_cost <= 2.0 + 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn two_level_random_instances_look_like_sign_patterns() {
        let inst = generate(&GeneratorSpec::cc_random(5, 0.5), 3).unwrap();
        assert_eq!(inst.mode(), Mode::Complete);
        assert!(inst.ladder().num_levels() <= 2);
        for p in 0..inst.num_pairs() {
            let d = inst.distance(p).unwrap();
            assert!(d == 1.0 || d == 2.0);
        }
        // Density 1 ⇒ all pairs land on the small value.
        let all_similar = generate(&GeneratorSpec::cc_random(5, 1.0), 3).unwrap();
        assert!((0..10).all(|p| all_similar.distance(p) == Some(1.0)));
    }

    #[test]
    fn kpartite_instances_are_balanced_and_partial() {
        let spec = GeneratorSpec::kpartite(12, 3, 3, 2);
        let inst = generate(&spec, 9).unwrap();
        assert_eq!(inst.mode(), Mode::Kpartite);
        let parts = inst.parts().unwrap();
        for v in 0..12 {
            assert_eq!(parts[v], v % 3, "balanced round-robin parts");
        }
        for i in 0..12 {
            for j in (i + 1)..12 {
                assert_eq!(
                    inst.is_specified_pair(i, j),
                    i % 3 != j % 3,
                    "cross-part pairs and only those are specified"
                );
            }
        }
    }

    #[test]
    fn metric_weights_satisfy_the_triangle_inequality() {
        // Instance::new re-validates the weight triangle inequality, so
        // construction succeeding is the assertion.
        for seed in 0..10 {
            let spec = GeneratorSpec::perturbed(8, 3, 3).with_metric_weights();
            let inst = generate(&spec, seed).unwrap();
            assert_eq!(inst.mode(), Mode::Weighted);
            assert!((0..inst.num_pairs()).all(|p| inst.weight(p) > 0.0));
        }
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let spec = GeneratorSpec::perturbed(7, 4, 3);
        assert_eq!(generate(&spec, 42).unwrap(), generate(&spec, 42).unwrap());
        assert_ne!(generate(&spec, 42).unwrap(), generate(&spec, 43).unwrap());
    }

    #[test]
    fn invalid_parameters_are_refused() {
        assert!(matches!(
            generate(&GeneratorSpec::perturbed(4, 2, 100), 1),
            Err(HarnessError::BadGenerator(_))
        ));
        assert!(matches!(
            generate(&GeneratorSpec::cc_random(5, 1.5), 1),
            Err(HarnessError::BadGenerator(_))
        ));
        assert!(matches!(
            generate(&GeneratorSpec::kpartite(6, 2, 1, 0), 1),
            Err(HarnessError::BadGenerator(_))
        ));
    }

    #[test]
    fn corruption_changes_exactly_k_pairs() {
        // Same seed, same base ultrametric; the corruption pass then moves
        // exactly k distances (level indices may renumber, values cannot).
        for seed in 0..10 {
            let base = generate(&GeneratorSpec::perturbed(7, 3, 0), seed).unwrap();
            let spec = GeneratorSpec::perturbed(7, 3, 4);
            let perturbed = generate(&spec, seed).unwrap();
            let differs = (0..base.num_pairs())
                .filter(|&p| base.distance(p) != perturbed.distance(p))
                .count();
            assert_eq!(differs, 4, "seed {seed}");
        }
    }
}
