//! End-to-end tests driving the compiled `ultrafit` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ultrafit"))
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

/// The `key=value` tokens of the final summary line, parsed as floats.
fn summary_value(stdout: &str, key: &str) -> f64 {
    let line = stdout
        .lines()
        .find(|l| l.starts_with("cost=") || l.starts_with("opt_cost=") || l.starts_with("lp_bound="))
        .expect("summary line");
    for token in line.split_whitespace() {
        if let Some(rest) = token.strip_prefix(&format!("{key}=")) {
            return rest.parse().unwrap();
        }
    }
    panic!("no `{key}=` in summary line `{line}`");
}

/// Lines of the modification list (between its header and the summary).
fn modification_rows(stdout: &str) -> Vec<String> {
    let mut rows = Vec::new();
    let mut in_list = false;
    for line in stdout.lines() {
        if line == "u,v,old,new,note" {
            in_list = true;
            continue;
        }
        if in_list {
            if line.starts_with("cost=") {
                break;
            }
            rows.push(line.to_owned());
        }
    }
    rows
}

/// The matrix block of `solve` output, as `check`-ready text.
fn matrix_block(stdout: &str) -> String {
    let mut block = String::new();
    let mut in_matrix = false;
    for line in stdout.lines() {
        if line == "matrix:" {
            in_matrix = true;
            continue;
        }
        if line == "modifications:" {
            break;
        }
        if in_matrix {
            block.push_str(line);
            block.push('\n');
        }
    }
    block
}

const ULTRAMETRIC_TRIANGLE: &str = "a,b,1\na,c,2\nb,c,2\n";
const CONFLICTED_TRIANGLE: &str = "a,b,1\na,c,1\nb,c,2\n";

#[test]
fn solve_keeps_ultrametric_input_unmodified() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.edges", ULTRAMETRIC_TRIANGLE);
    let out = bin().args(["solve", &input, "--seed", "1"]).output().unwrap();
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    let stdout = stdout_of(&out);
    assert!(modification_rows(&stdout).is_empty(), "{stdout}");
    assert_eq!(summary_value(&stdout, "cost"), 0.0);
    assert_eq!(summary_value(&stdout, "ratio"), 1.0);
    assert!(stdout.contains("matrix:\n3\n"));
}

#[test]
fn conflicted_triangle_costs_stay_within_the_guarantee() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.edges", CONFLICTED_TRIANGLE);
    let mut total = 0.0;
    for seed in 0..500u64 {
        let out = bin()
            .args(["solve", &input, "--seed", &seed.to_string()])
            .output()
            .unwrap();
        assert_eq!(exit_code(&out), 0);
        let cost = summary_value(&stdout_of(&out), "cost");
        // One edge must change, and at worst all three do.
        assert!(
            cost == 1.0 || cost == 2.0 || cost == 3.0,
            "seed {seed}: cost {cost}"
        );
        total += cost;
    }
    // The optimum is 1; the default parameters promise a factor of 5 in
    // expectation.
    assert!(total / 500.0 <= 5.0, "mean cost {}", total / 500.0);
}

#[test]
fn solve_output_feeds_check() {
    let dir = tempfile::tempdir().unwrap();
    // Five points, two plausible clusters, one corrupted cross pair.
    let input = write(
        dir.path(),
        "in.edges",
        "a,b,1\na,c,1\nb,c,3\na,d,3\na,e,3\nb,d,3\nb,e,3\nc,d,3\nc,e,3\nd,e,1\n",
    );
    let out = bin().args(["solve", &input, "--seed", "6"]).output().unwrap();
    assert_eq!(exit_code(&out), 0);
    let candidate = write(dir.path(), "cand.matrix", &matrix_block(&stdout_of(&out)));
    let check = bin().args(["check", &candidate]).output().unwrap();
    assert_eq!(exit_code(&check), 0, "stdout: {}", stdout_of(&check));
    assert!(stdout_of(&check).starts_with("ok:"));
}

#[test]
fn modification_weights_sum_to_the_reported_cost() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "in.edges",
        "a,b,1,1\na,c,1,1.5\nb,c,2,2\n",
    );
    for seed in 0..20u64 {
        let out = bin()
            .args([
                "solve",
                &input,
                "--mode",
                "weighted",
                "--seed",
                &seed.to_string(),
            ])
            .output()
            .unwrap();
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
        let stdout = stdout_of(&out);
        let weight_of = |u: &str, v: &str| match (u, v) {
            ("a", "b") => 1.0,
            ("a", "c") => 1.5,
            ("b", "c") => 2.0,
            _ => panic!("unexpected pair ({u}, {v})"),
        };
        let mut sum = 0.0;
        for row in modification_rows(&stdout) {
            let fields: Vec<&str> = row.split(',').collect();
            sum += weight_of(fields[0], fields[1]);
        }
        // Exact equality: both sides add the same weights in the same order.
        assert_eq!(sum, summary_value(&stdout, "cost"), "seed {seed}");
    }
}

#[test]
fn kpartite_fills_are_marked_in_the_note_column() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.edges", "a,x,2\na,y,2\nb,x,2\nb,y,1\n");
    let out = bin()
        .args(["solve", &input, "--mode", "kpartite", "--seed", "4"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    let stdout = stdout_of(&out);
    let rows = modification_rows(&stdout);
    let fills: Vec<&String> = rows.iter().filter(|r| r.ends_with(",filled")).collect();
    assert_eq!(fills.len(), 2, "{stdout}");
    for fill in fills {
        let fields: Vec<&str> = fill.split(',').collect();
        assert_eq!(fields[2], "*", "unspecified pairs have no old distance");
    }
    // The matrix itself is complete: no `*` left.
    assert!(!matrix_block(&stdout).contains('*'));
}

#[test]
fn same_seed_reproduces_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.edges", CONFLICTED_TRIANGLE);
    let run = || bin().args(["solve", &input, "--seed", "42"]).output().unwrap();
    assert_eq!(stdout_of(&run()), stdout_of(&run()));
}

#[test]
fn omitted_seed_is_printed_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.edges", CONFLICTED_TRIANGLE);
    let out = bin().args(["solve", &input]).output().unwrap();
    assert_eq!(exit_code(&out), 0);
    let stderr = stderr_of(&out);
    let seed_line = stderr
        .lines()
        .find(|l| l.starts_with("seed: "))
        .expect("drawn seed is announced");
    let seed = seed_line
        .split_whitespace()
        .nth(1)
        .unwrap()
        .to_string();
    let replay = bin().args(["solve", &input, "--seed", &seed]).output().unwrap();
    assert_eq!(stdout_of(&out), stdout_of(&replay));
}

#[test]
fn check_flags_the_first_violating_triple() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "cand.matrix", "3\n0,1,2\n1,0,1\n2,1,0\n");
    let out = bin().args(["check", &input]).output().unwrap();
    assert_eq!(exit_code(&out), 1);
    assert!(stdout_of(&out).starts_with("violation:"));
}

#[test]
fn malformed_input_exits_with_the_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let asym = write(dir.path(), "bad.matrix", "3\n0,1,1\n1,0,1\n1,2,0\n");
    let out = bin().args(["check", &asym]).output().unwrap();
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_of(&out).starts_with("error:"));

    let missing = dir.path().join("none.edges");
    let out = bin()
        .args(["solve", missing.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);

    let syntax = write(dir.path(), "syn.edges", "a,b,1\na,c,x\n");
    let out = bin().args(["solve", &syntax]).output().unwrap();
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn exact_reports_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.edges", CONFLICTED_TRIANGLE);
    let out = bin().args(["exact", &input]).output().unwrap();
    assert_eq!(exit_code(&out), 0);
    assert_eq!(summary_value(&stdout_of(&out), "opt_cost"), 1.0);
}

#[test]
fn exhausted_oracle_budget_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.edges", CONFLICTED_TRIANGLE);
    let out = bin()
        .args(["exact", &input, "--oracle-budget", "3"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 3);
    assert!(stderr_of(&out).contains("budget"));
}

#[test]
fn lower_bound_matches_the_conflicted_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.edges", CONFLICTED_TRIANGLE);
    let out = bin().args(["lower-bound", &input]).output().unwrap();
    assert_eq!(exit_code(&out), 0);
    let bound = summary_value(&stdout_of(&out), "lp_bound");
    assert!((bound - 1.0).abs() <= 1e-6, "bound {bound}");
}

#[test]
fn newick_round_trips_the_tree() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "in.edges", ULTRAMETRIC_TRIANGLE);
    let out = bin().args(["newick", &good]).output().unwrap();
    assert_eq!(exit_code(&out), 0);
    assert_eq!(stdout_of(&out), "((a:0.5,b:0.5):0.5,c:1);\n");

    let bad = write(dir.path(), "bad.edges", CONFLICTED_TRIANGLE);
    let out = bin().args(["newick", &bad]).output().unwrap();
    assert_eq!(exit_code(&out), 1);
    assert!(stdout_of(&out).starts_with("violation:"));
}

#[test]
fn solve_writes_trace_and_lp_dump() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.edges", CONFLICTED_TRIANGLE);
    let trace = dir.path().join("trace.jsonl");
    let lp = dir.path().join("program.lp");
    let out = bin()
        .args([
            "solve",
            &input,
            "--seed",
            "3",
            "--trace",
            trace.to_str().unwrap(),
            "--dump-lp",
            lp.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
    let trace_text = fs::read_to_string(&trace).unwrap();
    assert!(trace_text.lines().next().unwrap().contains("\"pivot\""));
    let lp_text = fs::read_to_string(&lp).unwrap();
    assert!(lp_text.contains("Minimize"));
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report");
    let out = bin()
        .args([
            "bench",
            "--generator",
            "perturbed",
            "--n",
            "7",
            "--levels",
            "2",
            "--corruptions",
            "1",
            "--trials",
            "8",
            "--runs",
            "2",
            "--seed",
            "11",
            "--jobs",
            "2",
            "--audit",
            "--report-dir",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    let stdout = stdout_of(&out);
    assert!(stdout.contains("trials=16"), "{stdout}");
    assert!(stdout.contains("violations=0"), "{stdout}");
    let summary = fs::read_to_string(report.join("summary.json")).unwrap();
    assert!(summary.contains("\"aggregates\""));
    let trials = fs::read_to_string(report.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 17, "header plus one row per trial");
}

#[test]
fn parameter_overrides_note_the_guarantee() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.edges", CONFLICTED_TRIANGLE);

    let out = bin()
        .args(["solve", &input, "--alpha", "0.5", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
    assert!(stderr_of(&out).contains("guarantee of 6.000000"));

    let out = bin()
        .args(["solve", &input, "--alpha", "0.45", "--beta", "0.1", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
    assert!(stderr_of(&out).contains("warning: no stated guarantee"));

    let out = bin()
        .args(["solve", &input, "--alpha", "0.9", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
}
