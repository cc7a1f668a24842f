use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latticeblow"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn moments_prints_a_summary_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&[
        "moments", "--reps", "200", "--seed", "3", "--out", out, "--id", "m",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("\"schema_version\": 1"));
    assert!(dir.path().join("m.summary.csv").exists());
    assert!(dir.path().join("m.summary.json").exists());
}

#[test]
fn serial_and_parallel_agree() {
    let a = run(&[
        "lattice", "--reps", "16", "--T", "0.125", "--J", "4", "--J", "8",
    ]);
    let b = run(&[
        "lattice", "--reps", "16", "--T", "0.125", "--J", "4", "--J", "8", "--serial",
    ]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn run_accepts_a_config_and_rejects_typos() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(
        &good,
        "id = \"cfg\"\nseed = 5\nreps = 50\n\n[params]\nkind = \"moments\"\nk = 2\nt = 0.1\nwalk = \"srw\"\n",
    )
    .unwrap();
    let o = run(&["run", good.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("\"id\": \"cfg\""));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "id = \"cfg\"\nseed = 5\nreps = 50\nrepz = 1\n\n[params]\nkind = \"moments\"\nk = 2\nt = 0.1\nwalk = \"srw\"\n").unwrap();
    let o = run(&["run", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("repz"));
}

#[test]
fn goldens_list_and_check() {
    let o = run(&["golden", "list"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("moments-k2"));
    let o = run(&["golden", "check", "moments-k2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["golden", "check", "moments-k2", "--seed", "1"]);
    assert!(!o.status.success());
}

#[test]
fn bad_arguments_fail_cleanly() {
    assert!(!run(&["sde1d", "--drift", "nonsense"]).status.success());
    assert!(!run(&["pipeline", "--reps", "0"]).status.success());
    assert!(!run(&["pipeline", "--reps", "2", "--L=-1"]).status.success());
    assert!(!run(&["moments", "--reps", "0"]).status.success());
}
