//! Monte-Carlo ratio studies: generate instances, solve the relaxation
//! once per instance, round it many times, and report cost ratios against
//! the LP lower bound (always) and the exact optimum (when the oracle
//! budget allows).
//!
//! Per-trial failures are recorded on the trial, never dropped. Aggregates
//! are a pure fold over the record list in (instance, run) order, so they
//! are independent of execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::audit::audit_trace;
use super::generate::{generate_with, GeneratorSpec};
use crate::instance::{disagreement_cost, Instance, Mode};
use crate::lp::{build_lp, edge_costs, normalize_top_level, solve_lp};
use crate::oracle::{exact_opt, OracleError};
use crate::pivot::run_with;
use crate::tol;

/// `(3 − √5)/2`, the smallest α with a constant-factor guarantee on
/// complete instances.
pub const GOLDEN_ALPHA: f64 = 0.381_966_011_250_105_1;

/// What the theory promises for a parameter choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Guarantee {
    /// Expected cost at most this multiple of the optimum.
    Constant(f64),
    /// O(min{L, log n}) — a trend, not a constant.
    Logarithmic,
    /// No stated guarantee for this parameter combination.
    Unspecified,
}

/// Default (α, β) per mode.
pub fn default_parameters(mode: Mode) -> (f64, f64) {
    match mode {
        Mode::Complete => (0.4, 0.0),
        Mode::Weighted => (1.0 / 3.0, 0.0),
        Mode::Kpartite => (3.0 / 8.0, 2.0 / 3.0),
    }
}

/// The guarantee implied by (mode, α, β), if any.
pub fn guarantee(mode: Mode, alpha: f64, beta: f64) -> Guarantee {
    match mode {
        Mode::Complete
            if beta == 0.0 && (GOLDEN_ALPHA - 1e-12..=0.5).contains(&alpha) =>
        {
            Guarantee::Constant((3.0 / (1.0 - alpha)).max(2.0 / alpha))
        }
        Mode::Weighted if beta == 0.0 && (alpha - 1.0 / 3.0).abs() < 1e-12 => {
            Guarantee::Logarithmic
        }
        Mode::Kpartite
            if (alpha - 3.0 / 8.0).abs() < 1e-12
                && (beta - 2.0 / 3.0).abs() < 1e-12 =>
        {
            Guarantee::Constant(16.0)
        }
        _ => Guarantee::Unspecified,
    }
}

/// One study: `instances × runs_per_instance` trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub mode: Mode,
    pub alpha: f64,
    pub beta: f64,
    pub generator: GeneratorSpec,
    pub instances: usize,
    pub runs_per_instance: usize,
    pub master_seed: u64,
    /// `Some(budget)`: attempt the exact oracle per instance, skipping
    /// instances whose search exceeds the budget.
    pub oracle_budget: Option<u64>,
    /// Use purely randomized rounding instead of the threshold scheme.
    pub force_random: bool,
    /// Run the structural-invariant audits on every trace.
    pub audit: bool,
}

impl StudyConfig {
    /// A study at the mode's default parameters, no oracle, audits off.
    pub fn new(generator: GeneratorSpec, instances: usize, runs: usize, seed: u64) -> Self {
        let mode = generator.mode();
        let (alpha, beta) = default_parameters(mode);
        StudyConfig {
            mode,
            alpha,
            beta,
            generator,
            instances,
            runs_per_instance: runs,
            master_seed: seed,
            oracle_budget: None,
            force_random: false,
            audit: false,
        }
    }
}

/// One rounding run of one generated instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub instance: usize,
    pub run: usize,
    pub run_seed: u64,
    pub alg_cost: f64,
    pub lp_bound: f64,
    pub opt_cost: Option<f64>,
    /// A failed trial carries its error here and zeros elsewhere.
    pub error: Option<String>,
}

/// Mean/spread of a sample, with the standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStat {
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
    pub max: f64,
}

impl MeanStat {
    fn from_samples(samples: &[f64]) -> Option<MeanStat> {
        if samples.is_empty() {
            return None;
        }
        let count = samples.len();
        let mean = samples.iter().sum::<f64>() / count as f64;
        let var = if count > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(MeanStat { count, mean, stderr: (var / count as f64).sqrt(), max })
    }
}

/// Order-independent summary of a record list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    pub trials: usize,
    pub failed: usize,
    /// Trials whose LP bound is (numerically) zero: ratios are undefined
    /// there, so they are counted separately instead.
    pub perfect: usize,
    pub mean_cost: f64,
    /// Cost / LP bound over trials with a positive bound.
    pub ratio_lp: Option<MeanStat>,
    /// Cost / exact optimum over trials where the oracle ran and OPT > 0.
    pub ratio_opt: Option<MeanStat>,
}

impl Aggregates {
    /// Pure fold over the records; sorted internally so any ordering of
    /// the same multiset gives bit-identical aggregates.
    pub fn from_records(records: &[TrialRecord]) -> Aggregates {
        let mut ordered: Vec<&TrialRecord> = records.iter().collect();
        ordered.sort_by_key(|r| (r.instance, r.run));
        let ok: Vec<&&TrialRecord> =
            ordered.iter().filter(|r| r.error.is_none()).collect();
        let failed = ordered.len() - ok.len();
        let perfect = ok.iter().filter(|r| r.lp_bound <= tol::RATIO_FLOOR).count();
        let mean_cost = if ok.is_empty() {
            0.0
        } else {
            ok.iter().map(|r| r.alg_cost).sum::<f64>() / ok.len() as f64
        };
        let lp_samples: Vec<f64> = ok
            .iter()
            .filter(|r| r.lp_bound > tol::RATIO_FLOOR)
            .map(|r| r.alg_cost / r.lp_bound)
            .collect();
        let opt_samples: Vec<f64> = ok
            .iter()
            .filter_map(|r| {
                r.opt_cost
                    .filter(|&o| o > tol::RATIO_FLOOR)
                    .map(|o| r.alg_cost / o)
            })
            .collect();
        Aggregates {
            trials: ordered.len(),
            failed,
            perfect,
            mean_cost,
            ratio_lp: MeanStat::from_samples(&lp_samples),
            ratio_opt: MeanStat::from_samples(&opt_samples),
        }
    }
}

/// Full study output: configuration echo, per-trial records, aggregates,
/// and audit counters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub config: StudyConfig,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
    pub aggregates: Aggregates,
    pub audit_frames: usize,
    pub audit_violation_count: usize,
    /// First few violation messages (the count above is complete).
    pub audit_violations: Vec<String>,
}

impl RatioReport {
    /// Per-trial rows as CSV.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "instance", "run", "run_seed", "alg_cost", "lp_bound", "opt_cost", "error",
            ])
            .expect("in-memory write");
        for r in &self.records {
            writer
                .write_record([
                    r.instance.to_string(),
                    r.run.to_string(),
                    r.run_seed.to_string(),
                    r.alg_cost.to_string(),
                    r.lp_bound.to_string(),
                    r.opt_cost.map(|o| o.to_string()).unwrap_or_default(),
                    r.error.clone().unwrap_or_default(),
                ])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush"))
            .expect("csv is utf-8")
    }

    /// Aggregate summary (everything but the per-trial rows) as JSON.
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Write `trials.csv` and `summary.json` into a directory.
    pub fn write_report_dir(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trials.csv"), self.to_csv())?;
        std::fs::write(dir.join("summary.json"), self.summary_json())
    }
}

/// Run a full study. Instance `i` draws from stream `2i` of the master
/// seed, its rounding seeds from stream `2i + 1`; instances run in
/// parallel, runs within an instance share its solved relaxation.
pub fn ratio_study(config: &StudyConfig) -> RatioReport {
    let per_instance: Vec<(Vec<TrialRecord>, usize, Vec<String>)> = (0..config.instances)
        .into_par_iter()
        .map(|i| run_instance(config, i))
        .collect();

    let mut records = Vec::with_capacity(config.instances * config.runs_per_instance);
    let mut audit_frames = 0;
    let mut audit_violations = Vec::new();
    for (batch, frames, violations) in per_instance {
        records.extend(batch);
        audit_frames += frames;
        audit_violations.extend(violations);
    }
    let aggregates = Aggregates::from_records(&records);
    let audit_violation_count = audit_violations.len();
    audit_violations.truncate(20);
    RatioReport {
        config: config.clone(),
        records,
        aggregates,
        audit_frames,
        audit_violation_count,
        audit_violations,
    }
}

/// All runs of one generated instance; returns (records, audited frames,
/// audit violations).
fn run_instance(
    config: &StudyConfig,
    index: usize,
) -> (Vec<TrialRecord>, usize, Vec<String>) {
    let runs = config.runs_per_instance;
    let mut seed_rng = ChaCha8Rng::seed_from_u64(config.master_seed);
    seed_rng.set_stream(2 * index as u64 + 1);
    let run_seeds: Vec<u64> = (0..runs).map(|_| seed_rng.random()).collect();

    let failed_batch = |message: String| {
        let records = run_seeds
            .iter()
            .enumerate()
            .map(|(r, &seed)| TrialRecord {
                instance: index,
                run: r,
                run_seed: seed,
                alg_cost: 0.0,
                lp_bound: 0.0,
                opt_cost: None,
                error: Some(message.clone()),
            })
            .collect();
        (records, 0, Vec::new())
    };

    let mut gen_rng = ChaCha8Rng::seed_from_u64(config.master_seed);
    gen_rng.set_stream(2 * index as u64);
    let inst: Instance = match generate_with(&config.generator, &mut gen_rng) {
        Ok(inst) => inst,
        Err(e) => return failed_batch(format!("generate: {e}")),
    };
    let solution = match build_lp(&inst).and_then(|p| solve_lp(&p)) {
        Ok(sol) => normalize_top_level(&sol, &inst),
        Err(e) => return failed_batch(format!("lp: {e}")),
    };
    let lp_bound = match edge_costs(&inst, &solution, config.alpha) {
        Ok(costs) => costs.lp_lower_bound,
        Err(e) => return failed_batch(format!("lp: {e}")),
    };
    let opt_cost = config.oracle_budget.and_then(|budget| match exact_opt(&inst, budget) {
        Ok(result) => Some(result.opt_cost),
        Err(OracleError::BudgetExceeded { .. }) => None,
    });

    let mut records = Vec::with_capacity(runs);
    let mut audit_frames = 0;
    let mut audit_violations = Vec::new();
    for (r, &run_seed) in run_seeds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        let outcome = run_with(
            &inst,
            &solution,
            config.alpha,
            config.beta,
            &mut rng,
            config.force_random,
        );
        let record = match outcome {
            Ok((fitted, trace)) => {
                if config.audit {
                    let report = audit_trace(&inst, &solution, &trace, config.alpha);
                    audit_frames += report.frames;
                    audit_violations.extend(report.violations);
                }
                let alg_cost =
                    disagreement_cost(&inst, &fitted).expect("engine output is in range");
                TrialRecord {
                    instance: index,
                    run: r,
                    run_seed,
                    alg_cost,
                    lp_bound,
                    opt_cost,
                    error: None,
                }
            }
            Err(e) => TrialRecord {
                instance: index,
                run: r,
                run_seed,
                alg_cost: 0.0,
                lp_bound,
                opt_cost,
                error: Some(format!("pivot: {e}")),
            },
        };
        records.push(record);
    }
    (records, audit_frames, audit_violations)
}
