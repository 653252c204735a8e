use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fairalloc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairalloc")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn synth(dir: &Path, kind: &str, extra: &[&str]) -> PathBuf {
    let target = dir.join(kind);
    let mut args = vec!["synth", "--kind", kind, "--seed", "3", "--out-dir", target.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = fairalloc(&args, dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    target
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn housing_solve_treats_the_second_unit() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = synth(tmp.path(), "housing", &[]);
    let out = fairalloc(&["solve", "--instance", inst.to_str().unwrap(), "--tau", "inf", "--out", "s.json"], tmp.path());
    assert_eq!(code(&out), 0);
    let s = json(&tmp.path().join("s.json"));
    assert_eq!(s["status"], "Optimal");
    assert_eq!(s["z"], serde_json::json!(["2"]));
    assert_eq!(s["tau"], "inf");
}

#[test]
fn path_below_threshold_is_all_infeasible() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = synth(tmp.path(), "additive_infeasible", &[]);
    let config = inst.join("config.toml");
    let text = fs::read_to_string(&config).unwrap();
    let text: String = text
        .lines()
        .map(|l| if l.starts_with("tau_list") { "tau_list = [0.1, 0.5, 0.99]" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&config, text).unwrap();
    let out = fairalloc(&["path", "--instance", inst.to_str().unwrap(), "--out-dir", "p"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("p/path.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("Infeasible")), "{csv}");
    assert!(tmp.path().join("p/solution_002.json").exists());
}

#[test]
fn oracle_and_solve_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = synth(tmp.path(), "random", &[]);
    let dir = inst.to_str().unwrap();
    for tau in ["inf", "0.5", "0.05"] {
        let a = fairalloc(&["solve", "--instance", dir, "--tau", tau, "--out", "s.json"], tmp.path());
        let b = fairalloc(&["oracle", "--instance", dir, "--tau", tau, "--out", "o.json"], tmp.path());
        assert_eq!(code(&a), code(&b));
        let (s, o) = (json(&tmp.path().join("s.json")), json(&tmp.path().join("o.json")));
        assert_eq!(s["status"], o["status"], "tau {tau}");
        assert_eq!(s["z"], o["z"], "tau {tau}");
        match (s["objective"].as_f64(), o["objective"].as_f64()) {
            (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-6, "tau {tau}: {x} vs {y}"),
            (x, y) => assert_eq!(x, y),
        }
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let additive = synth(tmp.path(), "additive_infeasible", &[]);
    let out = fairalloc(&["solve", "--instance", additive.to_str().unwrap(), "--tau", "0.5", "--out", "x.json"], tmp.path());
    assert_eq!(code(&out), 2);
    assert_eq!(json(&tmp.path().join("x.json"))["status"], "Infeasible");

    let nyc = synth(tmp.path(), "nyc_like", &["--n", "40", "--budget", "4"]);
    let config = nyc.join("config.toml");
    let text = fs::read_to_string(&config).unwrap().replace("node_limit = 10000000", "node_limit = 0");
    fs::write(&config, text).unwrap();
    let out = fairalloc(&["solve", "--instance", nyc.to_str().unwrap(), "--tau", "inf", "--out", "l.json"], tmp.path());
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&tmp.path().join("l.json"))["status"], "LimitReached");

    assert_eq!(code(&fairalloc(&["frobnicate"], tmp.path())), 1);
    assert_eq!(code(&fairalloc(&["solve", "--out", "y.json"], tmp.path())), 1);

    let broken = tmp.path().join("broken");
    fs::create_dir(&broken).unwrap();
    for f in ["model.json", "config.toml"] {
        fs::copy(additive.join(f), broken.join(f)).unwrap();
    }
    let units = fs::read_to_string(additive.join("units.csv")).unwrap().replace(",outcome", ",result");
    fs::write(broken.join("units.csv"), units).unwrap();
    let out = fairalloc(&["solve", "--instance", broken.to_str().unwrap(), "--out", "z.json"], tmp.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("outcome"));
}

#[test]
fn fit_then_solve_and_summarize() {
    let tmp = tempfile::tempdir().unwrap();
    let nyc = synth(tmp.path(), "nyc_like", &["--n", "90", "--budget", "6"]);
    let dir = nyc.to_str().unwrap();
    let out = fairalloc(&["fit", "--instance", dir, "--out", "fitted.json"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fitted = json(&tmp.path().join("fitted.json"));
    let alpha = fitted["objective"]["params"]["white"]["alpha"].as_f64().unwrap();
    assert!((alpha - 2.0e-4).abs() < 5e-5, "{alpha}");

    let out = fairalloc(
        &["solve", "--instance", dir, "--model", "fitted.json", "--tau", "inf", "--out", "s.json", "--node-log", "nodes.log"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(tmp.path().join("nodes.log")).unwrap().lines().count() >= 1);
    let out = fairalloc(&["summarize", "--instance", dir, "--model", "fitted.json", "--solution", "s.json", "--out", "sum.json"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&tmp.path().join("s.json"));
    let sum = json(&tmp.path().join("sum.json"));
    let treated: u64 = sum["treated_counts"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(treated, s["budget_used"].as_u64().unwrap());
    assert!((sum["objective"].as_f64().unwrap() - s["objective"].as_f64().unwrap()).abs() <= 1e-9);
    assert!(sum["treated"][0]["coords"].is_array());
}

/// Every command, with its outputs written into `root`.
fn run_all(root: &Path) {
    for kind in ["housing", "housing_interference", "additive_infeasible", "random"] {
        synth(root, kind, &[]);
    }
    synth(root, "nyc_like", &["--n", "60", "--budget", "5", "--dominant", "white"]);
    let commands: Vec<Vec<&str>> = vec![
        vec!["fit", "--instance", "nyc_like", "--out", "fit.json"],
        vec!["solve", "--instance", "random", "--out", "solve.json", "--export-milp", "random.milp", "--node-log", "random.log"],
        vec!["solve", "--instance", "nyc_like", "--tau", "0.2", "--out", "nyc.json"],
        vec!["solve", "--instance", "additive_infeasible", "--tau", "0.5", "--out", "additive.json"],
        vec!["oracle", "--instance", "housing_interference", "--out", "oracle.json"],
        vec!["path", "--instance", "nyc_like", "--out-dir", "nyc_path"],
        vec!["path", "--instance", "random", "--out-dir", "random_path"],
        vec!["summarize", "--instance", "random", "--solution", "solve.json", "--out", "summary.json"],
    ];
    for args in commands {
        let out = fairalloc(&args, root);
        assert!(matches!(code(&out), 0 | 2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn every_command_is_deterministic() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    run_all(first.path());
    run_all(second.path());
    let (a, b) = (snapshot(first.path()), snapshot(second.path()));
    assert!(a.len() > 20, "{} files", a.len());
    assert_eq!(a.iter().map(|f| &f.0).collect::<Vec<_>>(), b.iter().map(|f| &f.0).collect::<Vec<_>>());
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        assert!(x == y, "{} differs between runs", name.display());
    }
}
