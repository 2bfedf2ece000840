//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion NN <label>: PASS/FAIL` line (visible with `--nocapture`);
//! suites run at their full default replica counts with seed 42.

use ltlab::config::Config;
use ltlab::suites;
use std::time::Instant;

fn empty_cfg() -> Config {
    Config::from_pairs(Vec::<String>::new()).expect("empty config is valid")
}

fn report_verdict(num: u32, label: &str, report: &ltlab::report::SuiteReport, secs: f64, budget: Option<f64>) {
    let within_budget = budget.is_none_or(|b| secs <= b);
    let verdict = report.pass && within_budget;
    println!("criterion {num:02} {label}: {} ({secs:.1}s)", if verdict { "PASS" } else { "FAIL" });
    if !report.pass {
        let failing: Vec<&str> =
            report.tests.iter().filter(|t| !t.pass).map(|t| t.name.as_str()).collect();
        panic!("criterion {num:02} {label}: failing checks {failing:?}");
    }
    if let Some(b) = budget {
        assert!(within_budget, "criterion {num:02} {label}: runtime {secs:.1}s over {b}s budget");
    }
}

fn check_suite(num: u32, label: &str, suite: &str, budget: Option<f64>) {
    let cfg = empty_cfg();
    let t = Instant::now();
    let report = match suites::run_suite(suite, &cfg, 42) {
        Ok(r) => r,
        Err(e) => {
            println!("criterion {num:02} {label}: FAIL");
            panic!("criterion {num:02} {label}: suite error: {e}");
        }
    };
    report_verdict(num, label, &report, t.elapsed().as_secs_f64(), budget);
}

#[test]
fn criterion_01_occupation_identity() {
    check_suite(1, "occupation identity exact", "occupation", Some(60.0));
}

#[test]
fn criterion_02_exit_probability() {
    check_suite(2, "one-sided exit probability", "exit-prob", Some(120.0));
}

#[test]
fn criterion_03_overshoot_law() {
    check_suite(3, "first-passage overshoot law", "overshoot", Some(120.0));
}

#[test]
fn criterion_04_never_return() {
    check_suite(4, "never-return probability", "never-return", Some(120.0));
}

#[test]
fn criterion_05_geometric_visits() {
    check_suite(5, "geometric visit counts", "geometric-visits", None);
}

#[test]
fn criterion_06_scale_solver() {
    check_suite(6, "scale solver residuals", "scale-laplace", None);
}

#[test]
fn criterion_07_laplace_t0() {
    check_suite(7, "Laplace transform of T(0)", "laplace-T0", None);
}

#[test]
fn criterion_08_two_sided_exit() {
    check_suite(8, "two-sided exit probability", "two-sided-exit", None);
}

#[test]
fn criterion_09_passage_density() {
    check_suite(9, "first-passage joint density", "passage-density", Some(600.0));
}

#[test]
fn criterion_10_fd_compare() {
    check_suite(10, "level-increment decomposition", "fd-compare", None);
}

#[test]
fn criterion_11_cmj_localtime() {
    check_suite(11, "population size vs level visits", "cmj-localtime", None);
}

#[test]
fn criterion_12_ps_lamperti() {
    // Two sub-suites, one combined verdict: busy-period law and the
    // pathwise exactness of the time change.
    let cfg = empty_cfg();
    let t = Instant::now();
    let ps = suites::run_suite("ps-lamperti", &cfg, 42).expect("ps-lamperti runs");
    let rt = suites::run_suite("lamperti-roundtrip", &cfg, 42).expect("lamperti-roundtrip runs");
    let secs = t.elapsed().as_secs_f64();
    let pass = ps.pass && rt.pass;
    println!(
        "criterion 12 processor-sharing and time-change exactness: {} ({secs:.1}s)",
        if pass { "PASS" } else { "FAIL" }
    );
    let failing: Vec<&str> = ps
        .tests
        .iter()
        .chain(&rt.tests)
        .filter(|t| !t.pass)
        .map(|t| t.name.as_str())
        .collect();
    assert!(pass, "criterion 12: failing checks {failing:?}");
}

#[test]
fn criterion_13_moment_bound() {
    check_suite(13, "excursion-count moment bound uniform in n", "ci-bound", None);
}

#[test]
fn criterion_14_convergence_diagnostic() {
    let cfg = empty_cfg();
    let t = Instant::now();
    let report = match suites::run_converge_fdd(&cfg, 42) {
        Ok(r) => r,
        Err(e) => {
            println!("criterion 14 finite-dimensional convergence diagnostic: FAIL");
            panic!("criterion 14: diagnostic error: {e}");
        }
    };
    report_verdict(14, "finite-dimensional convergence diagnostic", &report, t.elapsed().as_secs_f64(), None);
}

#[test]
fn criterion_15_determinism() {
    let exe = env!("CARGO_BIN_EXE_ltlab");
    let run = || {
        std::process::Command::new(exe)
            .args(["run-all", "--seed", "42", "--replicas", "2000"])
            .output()
            .expect("run-all executes")
    };
    let first = run();
    let second = run();
    let pass = !first.stdout.is_empty()
        && first.stdout == second.stdout
        && first.status.code() == second.status.code();
    println!("criterion 15 byte-identical reports for a fixed seed: {}", if pass { "PASS" } else { "FAIL" });
    assert!(!first.stdout.is_empty(), "criterion 15: run-all produced no output");
    assert_eq!(first.status.code(), second.status.code(), "criterion 15: exit codes differ");
    assert_eq!(first.stdout, second.stdout, "criterion 15: reports differ between runs");
}
