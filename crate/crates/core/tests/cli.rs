use std::path::Path;
use std::process::{Command, Output};

fn homlim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homlim"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const DEMO_GRID: &str = "mode grid\ndepth 3\nfin on\nseed 42\n\
     base ev = ep(;10)\nbase od = ep(;01)\nbase p2 = pow2\nbase p2c = pow2'\n\
     demand 0 h[] f[ev->od]\ndemand 0 h[a1->a0] f[ev->od]\ndemand 0 h[] f[od->ev,p2->p2c]\n";

#[test]
fn verify_runs_are_deterministic_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let a = homlim(dir.path(), &["verify", "all", "--seed", "7", "--report", "c1.txt"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = homlim(dir.path(), &["verify", "all", "--seed", "7", "--report", "c2.txt"]);
    assert!(b.status.success());
    let c1 = std::fs::read(dir.path().join("c1.txt")).unwrap();
    let c2 = std::fs::read(dir.path().join("c2.txt")).unwrap();
    assert_eq!(c1, c2, "same seed, same certificate bytes");
    assert_eq!(stdout(&a).as_bytes(), c1.as_slice(), "report mirrors stdout");
    let text = stdout(&a);
    assert!(text.starts_with("homlim-certificate v="));
    assert!(text.trim_end().ends_with("end checks=10 pass=10"));
}

#[test]
fn verify_accepts_a_single_check_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = homlim(dir.path(), &["verify", "trivial-guard", "--seed", "3"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("check=trivial-guard"));
    assert!(stdout(&out).trim_end().ends_with("end checks=1 pass=1"));

    let bad = homlim(dir.path(), &["verify", "nosuch"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(homlim(dir.path(), &["--no-such-flag"]).status.code(), Some(2));
    assert_eq!(homlim(dir.path(), &["frobnicate"]).status.code(), Some(2));
    // Querying without a session is a configuration error, not a crash.
    let out = homlim(dir.path(), &["grid", "member", "a0", "ev"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no session"));
    // Help is an answer, not an error.
    assert_eq!(homlim(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn tower_build_member_satisfy_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("demands.cfg"),
        "base lo = fin[0]\nbase hi = fin[1]\ndemand 0 h[a0->a1] f[lo->hi]\n",
    )
    .unwrap();
    let built = homlim(
        dir.path(),
        &[
            "tower", "build", "--atoms", "2", "--depth", "2", "--support-bound", "2",
            "--demands", "demands.cfg",
        ],
    );
    assert!(built.status.success(), "{}", String::from_utf8_lossy(&built.stderr));
    assert!(dir.path().join("homlim.session").exists());

    let m = homlim(dir.path(), &["tower", "member", "a0", "lo"]);
    assert!(m.status.success());
    assert_eq!(stdout(&m).trim(), "true");
    let m2 = homlim(dir.path(), &["tower", "member", "a1", "Phi0(lo)"]);
    assert!(m2.status.success());
    assert_eq!(stdout(&m2).trim(), "false");

    let s = homlim(dir.path(), &["tower", "satisfy", "d0", "--check-fragment"]);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    assert!(stdout(&s).contains("fragment sweep: ok"));
}

#[test]
fn grid_session_answers_queries_and_survives_export() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("demo.cfg"), DEMO_GRID).unwrap();
    let built = homlim(dir.path(), &["grid", "homogenize", "--config", "demo.cfg"]);
    assert!(built.status.success(), "{}", String::from_utf8_lossy(&built.stderr));

    let m = homlim(dir.path(), &["grid", "member", "a4", "ev"]);
    assert_eq!(stdout(&m).trim(), "true");
    let t = homlim(dir.path(), &["grid", "trace", "Phi1(Phi0(od))"]);
    assert_eq!(stdout(&t).trim(), "in-family ep(;01)");
    let sat = homlim(dir.path(), &["grid", "satisfy", "d1"]);
    assert!(sat.status.success());

    for what in ["projection", "free-action", "star2"] {
        let chk = homlim(dir.path(), &["grid", "check", what]);
        assert!(chk.status.success(), "{what}: {}", String::from_utf8_lossy(&chk.stderr));
        assert!(stdout(&chk).contains("ok"));
    }

    let ex = homlim(dir.path(), &["export", "copy.session"]);
    assert!(ex.status.success());
    let imp = homlim(dir.path(), &["import", "copy.session"]);
    assert!(imp.status.success());
    assert!(stdout(&imp).contains("probes=ok"));

    // Any byte flip below the seal is rejected.
    let path = dir.path().join("copy.session");
    let tampered = std::fs::read_to_string(&path).unwrap().replacen("depth 3", "depth 4", 1);
    std::fs::write(&path, tampered).unwrap();
    let bad = homlim(dir.path(), &["import", "copy.session"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("corrupt"));
}

#[test]
fn pruned_sessions_unlock_the_disjointness_check() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("demo.cfg"), DEMO_GRID).unwrap();
    std::fs::write(dir.path().join("picks.eta"), "10\n").unwrap();

    // Without pruning the check is refused as a configuration error.
    let plain = homlim(dir.path(), &["grid", "homogenize", "--config", "demo.cfg"]);
    assert!(plain.status.success());
    let refused = homlim(dir.path(), &["grid", "check", "disjoint"]);
    assert_eq!(refused.status.code(), Some(2));

    let pruned = homlim(
        dir.path(),
        &["grid", "homogenize", "--config", "demo.cfg", "--prune", "picks.eta"],
    );
    assert!(pruned.status.success(), "{}", String::from_utf8_lossy(&pruned.stderr));
    assert!(stdout(&pruned).contains("mode=grid-pruned"));
    let chk = homlim(dir.path(), &["grid", "check", "disjoint"]);
    assert!(chk.status.success(), "{}", String::from_utf8_lossy(&chk.stderr));
    assert!(stdout(&chk).contains("check disjoint: ok"));
}

#[test]
fn budget_override_is_validated_and_persisted() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("demo.cfg"), DEMO_GRID).unwrap();
    let bad = Command::new(env!("CARGO_BIN_EXE_homlim"))
        .current_dir(dir.path())
        .env("HOMLIM_BUDGET", "lots")
        .args(["grid", "homogenize", "--config", "demo.cfg"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));

    let ok = Command::new(env!("CARGO_BIN_EXE_homlim"))
        .current_dir(dir.path())
        .env("HOMLIM_BUDGET", "123456")
        .args(["grid", "homogenize", "--config", "demo.cfg"])
        .output()
        .unwrap();
    assert!(ok.status.success());
    let dump = std::fs::read_to_string(dir.path().join("homlim.session")).unwrap();
    assert!(dump.contains("budget eval=123456 "));
}
