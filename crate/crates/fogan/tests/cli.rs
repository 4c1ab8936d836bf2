//! End-to-end checks of the `fogan` binary: exit codes, file outputs, and
//! the published text formats.

use std::process::Command;

fn fogan() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fogan"))
}

#[test]
fn solve_prints_critic_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.csv");
    let q = dir.path().join("q.csv");
    std::fs::write(&p, "0.0\n").unwrap();
    std::fs::write(&q, "1.0\n").unwrap();

    let out = fogan()
        .args(["solve", "--p"])
        .arg(&p)
        .arg("--q")
        .arg(&q)
        .args(["--lambda", "1.0"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    // Closed form: f(0) - f(1) = 1/2, centered so f(1) = 0, value 1/4.
    assert!(text.contains("tau_p = 0.25000000"), "output:\n{text}");
    assert!(text.contains("0.000000  ->  0.5000000"), "output:\n{text}");
    assert!(text.contains("slope residuals"), "output:\n{text}");
}

#[test]
fn solve_rejects_malformed_points() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.csv");
    let q = dir.path().join("q.csv");
    std::fs::write(&p, "0.0,oops\n").unwrap();
    std::fs::write(&q, "1.0\n").unwrap();
    let out = fogan()
        .args(["solve", "--p"])
        .arg(&p)
        .arg("--q")
        .arg(&q)
        .args(["--lambda", "1.0"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn jsd_command_on_line_corpora() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    // Identical corpora: JSD exactly 0.
    std::fs::write(&a, "abab\nbaba\n").unwrap();
    std::fs::write(&b, "abab\nbaba\n").unwrap();
    let out = fogan()
        .args(["jsd", "--a"])
        .arg(&a)
        .arg("--b")
        .arg(&b)
        .args(["--n", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let value: f64 = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert_eq!(value, 0.0);

    // Disjoint alphabets: maximal divergence 1.
    std::fs::write(&b, "cdcd\ndcdc\n").unwrap();
    let out = fogan()
        .args(["jsd", "--a"])
        .arg(&a)
        .arg("--b")
        .arg(&b)
        .args(["--n", "2"])
        .output()
        .unwrap();
    let value: f64 = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert_eq!(value, 1.0);
}

#[test]
fn run_command_writes_trace_and_respects_seed_env() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("toy.conf");
    std::fs::write(
        &conf,
        format!(
            "task = dirac1d\noutput_dir = {}\ntrain.total_iters = 30\neval_every = 10\n",
            dir.path().join("out_a").display()
        ),
    )
    .unwrap();
    let out = fogan().arg("run").arg(&conf).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let trace = std::fs::read_to_string(dir.path().join("out_a/trace.csv")).unwrap();
    assert_eq!(
        trace.lines().count(),
        31,
        "header plus one row per iteration"
    );
    assert!(dir.path().join("out_a/metrics.csv").exists());
    assert!(dir.path().join("out_a/divergence.svg").exists());

    // FOGAN_SEED overrides the config seed: a different seed must change the
    // trace, the same seed must reproduce it bitwise.
    std::fs::write(
        &conf,
        format!(
            "task = dirac1d\noutput_dir = {}\ntrain.total_iters = 30\neval_every = 10\n",
            dir.path().join("out_b").display()
        ),
    )
    .unwrap();
    let out = fogan()
        .arg("run")
        .arg(&conf)
        .env("FOGAN_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    let trace_b = std::fs::read_to_string(dir.path().join("out_b/trace.csv")).unwrap();
    assert_ne!(trace, trace_b);
}

#[test]
fn run_command_fails_cleanly_on_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "task = dirac1d\nnot_a_key = 1\n").unwrap();
    let out = fogan().arg("run").arg(&conf).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_key"));
}

#[test]
fn check_command_exits_zero() {
    let out = fogan().arg("check").output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(!text.contains("FAIL"));
}
