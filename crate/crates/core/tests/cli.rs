use std::path::Path;
use std::process::{Command, Output};

fn rcl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcl"))
        .args(args)
        .current_dir(dir)
        .env_remove("RCL_SEED")
        .output()
        .expect("spawn rcl")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn critical_dimension_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rcl(
        &["simulate", "--mode", "intermediate", "--d", "4", "--n", "256", "--beta-hat", "0.5", "--walkers", "8"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("critical dimension"));
}

#[test]
fn empty_report_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.jsonl");
    std::fs::write(&p, "").unwrap();
    let o = rcl(&["report", "--in", p.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("EMPTY REPORT"));
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "kind = \"simulate\"\nseed = 1\nout = \"x.jsonl\"\nbogus = 3\n").unwrap();
    let o = rcl(&["run", p.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_is_reproducible_across_widths() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "simulate", "--mode", "quenched", "--d", "2", "--n", "64", "--beta-hat", "0", "--beta", "0.3", "--walkers", "2000",
        "--replicas", "3", "--seed", "9",
    ];
    let mut a = base.to_vec();
    a.extend(["--width", "1", "--out", "a.jsonl"]);
    let mut b = base.to_vec();
    b.extend(["--width", "4", "--out", "b.jsonl"]);
    assert_eq!(code(&rcl(&a, dir.path())), 0);
    assert_eq!(code(&rcl(&b, dir.path())), 0);
    let strip = |name: &str| -> Vec<serde_json::Value> {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_ms");
                v
            })
            .collect()
    };
    let (ra, rb) = (strip("a.jsonl"), strip("b.jsonl"));
    assert_eq!(ra.len(), 3);
    assert_eq!(ra, rb);
    assert!(dir.path().join("a.jsonl.run.json").exists());

    let o = rcl(&["report", "--in", "a.jsonl", "--kind", "simulate"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(csv.starts_with("mode,d,n,replica,value,stderr,ess"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn kpoint_table_and_report_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let o = rcl(&["kpoint", "--d", "2", "--points", "1,0", "--n-list", "2^8,2^10", "--out", "table.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("N,estimate,stderr,limit,ratio"));
    assert_eq!(lines.next().unwrap().split(',').count(), 5);
    assert!(csv.contains("# monotone_drift="));

    let o = rcl(&["report", "--in", "table.jsonl"], dir.path());
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(out.starts_with("N,estimate,limit,ratio\n"));
    assert!(out.lines().nth(1).unwrap().split(',').count() == 4);
}

#[test]
fn dump_config_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = rcl(
        &["range1d", "--beta", "1", "--t-list", "4,8", "--replicas", "2", "--seed", "3", "--dump-config"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(text.contains("kind = \"range1d\""));
    std::fs::write(dir.path().join("c.toml"), text).unwrap();
    let o = rcl(&["run", "c.toml"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("fe.csv").exists());
}
