// End-to-end checks of the installed binary: exit codes, override plumbing,
// and bitwise reproducibility of the emitted tables.

use std::path::Path;
use std::process::{Command, Output};

fn bapkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bapkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

// Settings small enough that a full command finishes in well under a second.
fn tiny(out: &Path, extra: &[&str]) -> Vec<String> {
    let mut args: Vec<String> = vec![
        "--out".into(),
        out.display().to_string(),
        "--set".into(),
        "samples=1".into(),
        "--set".into(),
        "window_steps=50".into(),
        "--set".into(),
        "l_list=2".into(),
        "--set".into(),
        "m_list=2,3".into(),
        "--set".into(),
        "l=2".into(),
        "--set".into(),
        "m=3".into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    args
}

fn run_tiny(cmd: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = tiny(out, extra);
    args.push(cmd.into());
    let refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    bapkit(&refs)
}

#[test]
fn bap_run_tables_are_byte_identical_across_reruns() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = run_tiny("bap-run", dir_a.path(), &["--seed", "9"]);
    let b = run_tiny("bap-run", dir_b.path(), &["--seed", "9"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());

    for name in ["megr_bap.csv", "megr_eimsv.csv"] {
        let bytes_a = std::fs::read(dir_a.path().join(name)).unwrap();
        let bytes_b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between identical runs");
        assert!(
            bytes_a.starts_with(b"# fingerprint="),
            "{name} is missing the fingerprint line"
        );
    }

    let log = std::fs::read_to_string(dir_a.path().join("run.log")).unwrap();
    assert!(log.contains("command: bap-run"));
    assert!(log.contains("integrations["));

    // A different seed must actually change the sampled states.
    let dir_c = tempfile::tempdir().unwrap();
    let c = run_tiny("bap-run", dir_c.path(), &["--seed", "10"]);
    assert!(c.status.success());
    let bytes_a = std::fs::read(dir_a.path().join("megr_bap.csv")).unwrap();
    let bytes_c = std::fs::read(dir_c.path().join("megr_bap.csv")).unwrap();
    assert_ne!(bytes_a, bytes_c, "seed change left megr_bap.csv untouched");
}

#[test]
fn flag_overrides_beat_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg_path,
        "model = lorenz96\nseed = 7\nsamples = 3\nl_list = 2\nm_list = 2\n\
         l = 2\nm = 2\nwindow_steps = 50\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let result = bapkit(&[
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "11",
        "--set",
        "samples=1",
        "regi-table",
    ]);
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    assert!(out.join("regi_table.csv").exists());

    let log = std::fs::read_to_string(out.join("run.log")).unwrap();
    assert!(log.contains("seed=11"), "--seed did not override the file");
    assert!(log.contains("samples=1"), "--set did not override the file");
}

#[test]
fn config_mistakes_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    // unknown key
    let r = run_tiny("bap-run", dir.path(), &["--set", "tubro=1"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("config error"));
    // unreadable config file
    let r = bapkit(&["--config", "/nonexistent/exp.cfg", "bap-run"]);
    assert_eq!(r.status.code(), Some(2));
    // value out of range
    let r = run_tiny("bap-run", dir.path(), &["--set", "samples=0"]);
    assert_eq!(r.status.code(), Some(2));
    // malformed KEY=VALUE pair
    let r = run_tiny("bap-run", dir.path(), &["--set", "samples"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn numerical_blowup_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    // dt = 5 puts RK4 on Lorenz-96 far outside its stability region, so the
    // spin-up diverges to non-finite values within a handful of steps.
    let r = run_tiny(
        "bap-run",
        dir.path(),
        &["--set", "dt=5", "--set", "horizon=5", "--set", "T=5"],
    );
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("numerical blowup"));
}

#[test]
fn verify_passes_and_writes_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_tiny("verify", dir.path(), &[]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("[PASS]"), "no pass lines in: {stdout}");
    assert!(dir.path().join("verify_report.txt").exists());
}
