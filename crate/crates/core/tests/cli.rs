use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bodynet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bodynet")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).expect("column present");
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("net.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_2() {
    for args in [&["frobnicate"][..], &[], &["model"], &["simulate", "--packets", "many"], &["--format", "json", "model", "rf"]] {
        let o = bodynet(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_1_with_one_line_code() {
    let o = bodynet(&["optimize", "bcc", "--tau", "0.001"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("INFEASIBLE:"), "{err}");

    let o = bodynet(&["--config", "/definitely/not/here.toml", "model", "rf"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("CONFIG:"));
}

#[test]
fn unstable_model_reports_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[network]\nn_nodes = 4\nn_relays = 1\nrate = 200.0\n");
    let o = bodynet(&["--config", &cfg, "model", "rf"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("UNSTABLE:"), "{}", stderr(&o));
}

#[test]
fn single_relay_model_has_idle_channel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[network]\nn_nodes = 4\nn_relays = 1\nrate = 5.0\n");
    let o = bodynet(&["--config", &cfg, "model", "rf", "--pi-e", "0.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let pi_cca: f64 = column(&stdout(&o), "pi_cca")[0].parse().unwrap();
    assert_eq!(pi_cca, 0.0);
}

#[test]
fn simulate_is_reproducible_and_writes_files() {
    let args = ["--seed", "4", "simulate", "--channel", "scenario2", "--packets", "200", "--tau", "1"];
    let a = bodynet(&args);
    let b = bodynet(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(column(&stdout(&a), "generated"), vec!["800"]);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let dump = dir.path().join("dump.csv");
    let mut with_out = vec!["--out", out];
    with_out.extend(args);
    with_out.extend(["--dump", dump.to_str().unwrap()]);
    let o = bodynet(&with_out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let metrics = fs::read(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics, a.stdout);
    let dump_text = fs::read_to_string(&dump).unwrap();
    assert!(dump_text.starts_with("time_s,kind,src,dst,payload\n"));
    assert!(dump_text.lines().count() > 1);
}

#[test]
fn optimizer_output_has_best_and_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bodynet(&["--out", out, "optimize", "rf"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let best = fs::read_to_string(dir.path().join("best.csv")).unwrap();
    let candidates = fs::read_to_string(dir.path().join("candidates.csv")).unwrap();
    assert_eq!(column(&best, "m_r").len(), 1);
    assert_eq!(column(&candidates, "objective").len(), 64);
}

#[test]
fn sweep_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        "seeds = 2\npackets = 100\ntau = 1.0\n[axes]\nn_nodes = [4]\nn_relays = [1, 2]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = bodynet(&["--out", out.to_str().unwrap(), "sweep", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let long = fs::read_to_string(out.join("long.csv")).unwrap();
    let aggregate = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let ratios = fs::read_to_string(out.join("ratios.csv")).unwrap();
    // 2 points x 2 seeds x 2 systems
    assert_eq!(column(&long, "seed").len(), 8);
    assert_eq!(column(&aggregate, "runs"), vec!["2"; 4]);
    assert_eq!(column(&ratios, "pairs"), vec!["2"; 2]);
}

#[test]
fn bad_sweep_spec_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, "seeds = 2\nbogus = 1\n").unwrap();
    let o = bodynet(&["sweep", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("SWEEP_SPEC:"), "{}", stderr(&o));
}

#[test]
fn selfcheck_passes() {
    let o = bodynet(&["selfcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS ")));
}
