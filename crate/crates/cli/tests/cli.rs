use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cpsconf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpsconf")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn monitor_golden_and_negation() {
    let dir = tempfile::tempdir().unwrap();
    let tr = write(dir.path(), "y.csv", "t,y1\n0,0.2\n1,0.5\n2,0.9\n");
    let o = cpsconf(&["monitor", "-f", "[]_[0,2] (y < 1)", s(&tr)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0.1\n");
    let o = cpsconf(&["monitor", "-f", "!([]_[0,2] (y < 1))", s(&tr)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "-0.1\n");
}

#[test]
fn monitor_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = cpsconf(&["monitor", "-f", "y < 1", s(&dir.path().join("missing.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    let tr = write(dir.path(), "y.csv", "t,y\n0,0.2\n");
    let o = cpsconf(&["monitor", "-f", "y <", s(&tr)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("formula"));
}

#[test]
fn monitor_temporal_kind() {
    let dir = tempfile::tempdir().unwrap();
    let tr = write(dir.path(), "y.csv", "t,y\n0,0\n1,0\n2,1\n3,1\n");
    // y > 0.5 first becomes true at t = 2, one time unit after t = 1
    let o = cpsconf(&["monitor", "-f", "y > 0.5", "--kind", "temporal", "--t", "1", s(&tr)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "-1\n");
}

#[test]
fn check_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "t,y1\n0,0\n1,1\n2,2\n");
    let b = write(dir.path(), "b.csv", "t,y1\n0,0.3\n1,1.3\n2,2.3\n");
    let o = cpsconf(&["check", s(&a), s(&a), "--tau", "0.5", "--eps", "0.2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "CLOSE\n");
    let o = cpsconf(&["check", s(&a), s(&b), "--tau", "0.5", "--eps", "0.2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("NOT CLOSE, witness i=1"), "{}", stdout(&o));
    let o = cpsconf(&["check", s(&a), s(&b), "--tau", "0.5", "--eps", "0.4", "--robustness", "spatial"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "CLOSE\nrobustness 0.1\n");
}

#[test]
fn check_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "t,y1\n0,0\n");
    let bad = write(dir.path(), "bad.csv", "t,y1\n1,0\n0,1\n");
    let o = cpsconf(&["check", s(&a), s(&bad), "--tau", "0.5", "--eps", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
}

/// Replay pair: a ramp and a copy shifted up by `offset`.
fn replay_config(dir: &Path, offset: f64, budget: usize, extra: &str) -> PathBuf {
    let ramp: String = (0..=20).map(|i| format!("{},{}\n", i as f64 * 0.1, i as f64 * 0.05)).collect();
    let shifted: String =
        (0..=20).map(|i| format!("{},{}\n", i as f64 * 0.1, i as f64 * 0.05 + offset)).collect();
    write(dir, "m.csv", &format!("t,y1\n{ramp}"));
    write(dir, "i.csv", &format!("t,y1\n{shifted}"));
    write(
        dir,
        "run.toml",
        &format!(
            "seed = 5\nhorizon = 2.0\nmax_jumps = 1\nbudget = {budget}\n\
             [model]\nkind = \"replay\"\nfiles = [\"m.csv\"]\n\
             [implementation]\nkind = \"replay\"\nfiles = [\"i.csv\"]\n{extra}"
        ),
    )
}

const CONFORMANCE: &str = "[objective]\ntype = \"conformance\"\ntau = 0.05\neps = 0.5\n";

#[test]
fn falsify_identical_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_config(dir.path(), 0.0, 5, CONFORMANCE);
    let out = dir.path().join("out");
    let o = cpsconf(&["falsify", s(&cfg), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("NOT FALSIFIED after 5 tests"));
    for f in ["manifest.json", "report.json", "timing.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("witness.json").exists());
}

#[test]
fn falsify_offset_finds_witness() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_config(dir.path(), 1.0, 5, CONFORMANCE);
    let out = dir.path().join("out");
    let o = cpsconf(&["falsify", s(&cfg), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "FALSIFIED after 1 tests, robustness -0.5\n");
    let witness: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("witness.json")).unwrap()).unwrap();
    assert!(witness.get("h0").is_some());
    let m = std::fs::read_to_string(out.join("witness_model.csv")).unwrap();
    assert_eq!(m.lines().count(), 22);
}

#[test]
fn falsify_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_config(dir.path(), 1.0, 0, CONFORMANCE);
    let o = cpsconf(&["falsify", s(&cfg), "-o", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));

    let cfg = replay_config(dir.path(), 1.0, 5, "[objective]\ntype = \"conformance\"\ntau = 0.05\nepsilon = 0.5\n");
    let o = cpsconf(&["falsify", s(&cfg), "-o", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("objective") && err.contains("epsilon"), "{err}");

    let cfg = replay_config(dir.path(), 1.0, 5, "");
    let o = cpsconf(&["falsify", s(&cfg), "-o", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn manifest_records_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_config(dir.path(), 0.0, 3, CONFORMANCE);
    let out = dir.path().join("out");
    cpsconf(&["falsify", s(&cfg), "-o", s(&out), "--seed", "99"]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 99);
    assert_eq!(m["config"]["seed"], 99);
    assert_eq!(m["config"]["optimizer"]["method"], "simulated_annealing");
    assert_eq!(m["config"]["optimizer"]["cooling"], 0.97);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(Path::new(m["config"]["model"]["files"][0].as_str().unwrap()).is_absolute());
}

#[test]
fn missing_seed_is_generated_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_config(dir.path(), 0.0, 2, CONFORMANCE);
    let text = std::fs::read_to_string(&cfg).unwrap().replace("seed = 5\n", "");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = cpsconf(&["falsify", s(&cfg), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let seed = m["seed"].as_u64().unwrap();
    assert!(String::from_utf8_lossy(&o.stderr).contains(&format!("seed {seed}")));
}

#[test]
fn degree_brackets_constant_offset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_config(dir.path(), 0.3, 3, "[degree]\naxis = \"epsilon\"\nfixed = 0.05\nk = 10\n");
    let out = dir.path().join("out");
    let o = cpsconf(&["degree", s(&cfg), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let (lo, hi) = (r["result"]["lower"].as_f64().unwrap(), r["result"]["upper"].as_f64().unwrap());
    assert!(lo <= 0.3 && 0.3 <= hi, "[{lo}, {hi}]");
    assert!(hi - lo <= 0.5 / 1024.0);
    let csv = std::fs::read_to_string(out.join("degree.csv")).unwrap();
    assert!(csv.starts_with("phase,iteration,value,best_robustness,falsified,tests_run\n"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("bisect,")).count(), 10);
}

#[test]
fn degree_pareto_front() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_config(dir.path(), 0.3, 3, "[degree]\naxis = \"epsilon\"\ntaus = [0.05, 0.15, 0.65]\nk = 8\nupper = 1.0\n");
    let out = dir.path().join("out");
    let o = cpsconf(&["degree", s(&cfg), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("degree.csv")).unwrap();
    let uppers: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(uppers.len(), 3);
    // wider time windows let the ramp catch up with its shifted copy
    assert!(uppers.windows(2).all(|w| w[1] <= w[0]), "{uppers:?}");
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("nav4_guard_offset.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = cpsconf(&["falsify", s(&cfg), "-o", s(&a), "--budget", "20"]);
    assert_eq!(o.status.code(), Some(1));
    cpsconf(&["falsify", s(&a.join("manifest.json")), "-o", s(&b)]);
    for f in ["manifest.json", "report.json", "witness.json", "witness_model.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bench_identity_never_falsifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bench.toml",
        "seed = 2\nruns = 3\nhorizon = 4.0\nmax_jumps = 10\nbudget = 10\n\
         [base]\nkind = \"builtin\"\nname = \"nav4\"\n\
         [objective]\ntype = \"conformance\"\ntau = 0.01\neps = 0.25\n\
         [space]\ninput_boxes = [{ lower = [-0.1, -0.1], upper = [0.1, 0.1] }]\n\
         [[mutants]]\nname = \"Nav0\"\n\
         [[mutants]]\nname = \"Same\"\nmutation = { kind = \"dynamics_scale\", factors = [1.0] }\n",
    );
    let out = dir.path().join("out");
    let o = cpsconf(&["bench", s(&cfg), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r[3], "0", "{r:?}");
        assert_eq!(r[5], "10");
    }
}

#[test]
fn bench_unknown_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bench.toml",
        "horizon = 4.0\nbudget = 10\n[base]\nkind = \"builtin\"\nname = \"nav9\"\n\
         [objective]\ntype = \"pwc\"\nd = 1.0\n[[mutants]]\nname = \"a\"\n",
    );
    let o = cpsconf(&["bench", s(&cfg), "-o", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nav9"));
}
