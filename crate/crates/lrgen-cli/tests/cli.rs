//! Process-level tests: each one runs the real binary and checks the exit
//! code contract (0 success, 1 domain failure, 2 usage or I/O error) along
//! with the observable output.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn grammar(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../grammars").join(name)
}

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpora").join(name)
}

fn lrgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrgen")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process should exit normally")
}

#[test]
fn auto_compile_then_generate_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("questions.tbl");
    let out = lrgen(&[
        "compile-gen",
        grammar("questions.gram").to_str().unwrap(),
        "--auto",
        "--max-budget",
        "6",
        "-o",
        tables.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("states"), "stdout: {}", stdout(&out));

    let out =
        lrgen(&["generate", "--tables", tables.to_str().unwrap(), "--lf", "mod(sleep(john), ynq)"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "John sleeps ?");
}

#[test]
fn malformed_term_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("q.tbl");
    let out = lrgen(&[
        "compile-gen",
        grammar("questions.gram").to_str().unwrap(),
        "--fixed",
        "1",
        "-o",
        tables.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);

    let out = lrgen(&["generate", "--tables", tables.to_str().unwrap(), "--lf", "mod(sleep(john)"]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("lrgen:"), "stderr: {}", stderr(&out));
}

#[test]
fn ungenerable_term_is_a_domain_failure() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("q.tbl");
    let out = lrgen(&[
        "compile-gen",
        grammar("questions.gram").to_str().unwrap(),
        "--fixed",
        "0",
        "-o",
        tables.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);

    let out = lrgen(&["generate", "--tables", tables.to_str().unwrap(), "--lf", "john"]);
    assert_eq!(code(&out), 1, "stdout: {}", stdout(&out));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn parse_accepts_and_rejects() {
    let g = grammar("questions.gram");
    let out = lrgen(&["parse", g.to_str().unwrap(), "John", "sleeps", "?"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "mod(sleep(john), ynq)");

    let out = lrgen(&["parse", g.to_str().unwrap(), "sleeps", "John"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn invert_lists_every_rule() {
    let out = lrgen(&["invert", grammar("questions.gram").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let listing = stdout(&out);
    assert_eq!(listing.lines().filter(|l| l.contains("c('")).count(), 15, "{listing}");
}

#[test]
fn compile_parse_prints_the_table() {
    let out =
        lrgen(&["compile-parse", grammar("questions.gram").to_str().unwrap(), "--format", "tsv"]);
    assert_eq!(code(&out), 0);
    let body = stdout(&out);
    assert!(body.starts_with("state\tsymbol\taction"), "{body}");
    assert!(body.contains("2\teos\tacc"), "{body}");
}

#[test]
fn compile_gen_requires_exactly_one_mode() {
    let g = grammar("questions.gram");
    let out = lrgen(&["compile-gen", g.to_str().unwrap()]);
    assert_eq!(code(&out), 2);

    let out = lrgen(&["compile-gen", g.to_str().unwrap(), "--fixed", "1", "--auto"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn strict_compile_within_a_tight_budget_fails_cleanly() {
    // The budget comes from the environment here; depth 1 cannot separate
    // the question rules, so a strict compile must report the conflict.
    let out = Command::new(env!("CARGO_BIN_EXE_lrgen"))
        .args(["compile-gen", grammar("questions.gram").to_str().unwrap(), "--auto", "--strict"])
        .env("GENLR_MAX_BUDGET", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("budget"), "stderr: {}", stderr(&out));
}

#[test]
fn bad_budget_env_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_lrgen"))
        .args(["compile-gen", grammar("questions.gram").to_str().unwrap(), "--auto"])
        .env("GENLR_MAX_BUDGET", "plenty")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
}

#[test]
fn missing_file_is_a_usage_error() {
    let out = lrgen(&["compile-parse", "/no/such/file.gram"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("lrgen:"));
}

#[test]
fn optimize_compare_and_report_work_together() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("nbar.tbl");
    let g = grammar("nbar.gram");
    let c = corpus("nbar-train.lfs");

    let out = lrgen(&[
        "optimize",
        g.to_str().unwrap(),
        "--examples",
        c.to_str().unwrap(),
        "-o",
        tables.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let out = lrgen(&[
        "compare",
        g.to_str().unwrap(),
        "--tables",
        tables.to_str().unwrap(),
        "--corpus",
        c.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let body = stdout(&out);
    assert!(body.contains("total: 5 items"), "{body}");
    assert!(!body.contains("DISAGREE"), "{body}");

    let out = lrgen(&["report", "--tables", tables.to_str().unwrap(), "--format", "tsv"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("state\tentry\tkey\ttarget"), "{}", stdout(&out));
}

#[test]
fn shdg_generate_works_from_the_grammar_alone() {
    let out = lrgen(&[
        "shdg-generate",
        grammar("questions.gram").to_str().unwrap(),
        "--lf",
        "mod(see(mary, john), ynq)",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "John sees Mary ?");
}
