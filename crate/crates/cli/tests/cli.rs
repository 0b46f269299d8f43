use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irtree-fuzzy")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn full_workflow_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cell.json"), r#"{"I": 40, "J": 5, "M": 3, "beta0": -10.5, "B": 1}"#).unwrap();
    let ok = |args: &[&str]| {
        let o = run(args, d);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    };
    ok(&["simulate", "--scenario", "cell.json", "--seed", "4", "--out", "sim"]);
    ok(&["fit", "--data", "sim/rep_0/Y.csv", "--tree", "linear:3", "--out", "out"]);
    ok(&["fuzzify", "--out", "out", "--shape", "tri-moment", "--curves"]);
    ok(&["summarize", "--out", "out"]);
    ok(&["evaluate", "--scenario", "cell.json", "--seed", "4", "--reps", "2", "--out", "eval"]);
    for f in ["sim/scenario.json", "out/fit.json", "out/fuzzy.csv", "out/curves.csv", "out/summary.csv"] {
        assert!(d.join(f).is_file(), "missing {f}");
    }
    for f in ["auc_table.csv", "auc_long.csv", "auc_items.csv", "auc_failures.log"] {
        assert!(d.join("eval").join(f).is_file(), "missing {f}");
    }
    let header = fs::read_to_string(d.join("out/fuzzy.csv")).unwrap();
    assert!(header.starts_with("person,item,y,"));
}

#[test]
fn config_file_paths_are_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("proj")).unwrap();
    fs::write(d.join("proj/Y.csv"), "person,a,b,c\np1,1,2,3\np2,2,2,1\np3,3,3,2\np4,1,1,2\np5,2,3,3\n").unwrap();
    fs::write(d.join("proj/run.json"), r#"{"data": "Y.csv", "tree": "linear:3", "out": "results"}"#).unwrap();
    let o = run(&["fit", "--config", "proj/run.json"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("proj/results/fit.json").is_file());
}

#[test]
fn errors_are_one_line_with_stable_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("Y.csv"), "person,a\np1,1\np2,5\n").unwrap();
    fs::write(d.join("cell.json"), r#"{"I": 10, "J": 2, "M": 3, "beta0": -10.5}"#).unwrap();
    let cases: [(&[&str], &str, i32); 5] = [
        (&["evaluate", "--scenario", "cell.json"], "config", 2),
        (&["fuzzify", "--fit", "nowhere.json"], "io", 3),
        (&["fit", "--data", "Y.csv", "--tree", "linear:3"], "input", 4),
        (&["fit", "--data", "Y.csv", "--tree", "linear:3", "--quad-nodes", "0"], "config", 2),
        (&["fit", "--data", "Y.csv", "--tree", "builtin:nine"], "config", 2),
    ];
    for (args, code, exit) in cases {
        let o = run(args, d);
        let err = stderr(&o);
        assert_eq!(o.status.code(), Some(exit), "{args:?}: {err}");
        assert!(err.starts_with(&format!("error[{code}]: ")), "{args:?}: {err}");
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cell.json"), r#"{"I": 30, "J": 4, "M": 4, "beta0": -20.5, "B": 1}"#).unwrap();
    for out in ["a", "b"] {
        let o = run(&["simulate", "--scenario", "cell.json", "--seed", "11", "--out", out], d);
        assert!(o.status.success(), "{}", stderr(&o));
        let data = format!("{out}/rep_0/Y.csv");
        let o = run(&["fit", "--data", &data, "--tree", "linear:4", "--out", out], d);
        assert!(o.status.success(), "{}", stderr(&o));
        let o = run(&["fuzzify", "--out", out], d);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["scenario.json", "rep_0/Y.csv", "rep_0/R.csv", "fit.json", "fuzzy.csv"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f} differs");
    }
}
