use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const HEAD: &str = "schema_version = 1\n";

fn domain(m: u32) -> String {
    format!("[domain]\nd = 1\nL = 1.0\nm = {m}\n")
}

fn exps(p: f64, q: f64) -> String {
    format!("[exponents]\np = {p:?}\nq = {q:?}\n")
}

fn bloomlab(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_bloomlab"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("BLOOMLAB_WORKERS")
        .output()
        .unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|x| x.unwrap()[i].to_string()).collect()
}

#[test]
fn bloom_verify_with_unit_weights_passes_with_unit_ratios() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!("{HEAD}experiment = \"bloom-verify\"\n{}{}", domain(6), exps(2.0, 2.0));
    let o = bloomlab(t.path(), &cfg, &["run"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ratios = column(&t.path().join("out/bloom.csv"), "ratio");
    assert_eq!(ratios.len(), 127);
    assert!(ratios.iter().all(|r| r.parse::<f64>().unwrap() == 1.0));
    let s = summary(t.path());
    assert_eq!(s["status"], "pass");
    assert_eq!(s["assertions"]["failed"], 0);
}

#[test]
fn weights_check_flags_divergence_without_failing() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{HEAD}experiment = \"weights-check\"\n{}{}[weights]\nmu = {{ kind = \"power\", beta = -2.0 }}\n[options]\ndepths = [6, 8, 10]\n",
        domain(8),
        exps(2.0, 2.0)
    );
    let o = bloomlab(t.path(), &cfg, &["run"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(t.path());
    let flags = s["flags"].as_object().unwrap();
    let (k, v) = flags.iter().find(|(k, _)| k.starts_with("divergent/") && k.ends_with("/mu")).unwrap();
    assert_eq!(v, true, "{k}");
    assert!(flags.iter().any(|(k, v)| k.starts_with("divergent/") && k.ends_with("/lambda") && v == false));
}

#[test]
fn malformed_configs_exit_with_two() {
    let t = tempfile::tempdir().unwrap();
    for cfg in [
        "this is not toml".to_string(),
        format!("schema_version = 9\nexperiment = \"bloom-verify\"\n{}{}", domain(6), exps(2.0, 2.0)),
        format!("{HEAD}experiment = \"bloom-verify\"\n{}{}", domain(6), exps(3.0, 2.0)),
        format!("{HEAD}experiment = \"bmo-compute\"\n{}{}", domain(6), exps(2.0, 2.0)),
    ] {
        let o = bloomlab(t.path(), &cfg, &["run"]);
        assert_eq!(o.status.code(), Some(2), "{cfg}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
    }
    let o = Command::new(env!("CARGO_BIN_EXE_bloomlab")).args(["run", "--config", "/nonexistent.toml", "--out", "x"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_assertion_exits_with_one() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{HEAD}experiment = \"commutator-sweep\"\n{}{}[kernel]\nname = \"hilbert\"\n[[symbols]]\nkind = \"log_abs\"\n[options]\nwindow = [0.0, 0.1]\nrestarts = 2\n",
        domain(6),
        exps(2.0, 2.0)
    );
    let o = bloomlab(t.path(), &cfg, &["run"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("window/"));
    let s = summary(t.path());
    assert_eq!(s["status"], "fail");
    assert!(s["first_failure"]["name"].as_str().unwrap().starts_with("window/"));
}

#[test]
fn sweep_over_depth_keeps_log_bmo_scale_invariant() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{HEAD}experiment = \"bmo-compute\"\n{}{}[[symbols]]\nkind = \"log_abs\"\n[sweep]\naxis = \"m\"\nvalues = [6, 8, 10]\n",
        domain(6),
        exps(2.0, 2.0)
    );
    let o = bloomlab(t.path(), &cfg, &["sweep"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let path = t.path().join("out/sweep.csv");
    let mut r = csv::Reader::from_path(&path).unwrap();
    let key = r.headers().unwrap().iter().position(|h| h.starts_with("bmo/")).unwrap();
    let vals: Vec<f64> = csv_rows(&path).iter().map(|row| row[key].parse().unwrap()).collect();
    assert_eq!(vals.len(), 3);
    let (lo, hi) = (vals.iter().cloned().fold(f64::INFINITY, f64::min), vals.iter().cloned().fold(0.0, f64::max));
    assert!(hi / lo - 1.0 <= 0.05, "{vals:?}");
    assert!(t.path().join("out/point-002/bmo.csv").exists());
}

#[test]
fn sweep_over_diagonal_exponents_passes() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{HEAD}experiment = \"bloom-verify\"\n{}{}[weights]\nseeded = [0, 1, 2]\n",
        domain(7),
        exps(2.0, 2.0)
    );
    let o = bloomlab(t.path(), &cfg, &["sweep", "--axis", "pq", "--values", "1.5,2,3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let status = column(&t.path().join("out/sweep.csv"), "status");
    assert_eq!(status, vec!["pass"; 3]);
}

#[test]
fn empty_sweep_writes_header_only() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!("{HEAD}experiment = \"bloom-verify\"\n{}{}[sweep]\naxis = \"m\"\nvalues = []\n", domain(6), exps(2.0, 2.0));
    let o = bloomlab(t.path(), &cfg, &["sweep"]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(t.path().join("out/sweep.csv")).unwrap();
    assert_eq!(text, "point,axis,value,status,passed,failed,detail\n");
}

#[test]
fn sweep_reports_bad_points_per_row() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!("{HEAD}experiment = \"bloom-verify\"\n{}{}", domain(6), exps(2.0, 2.0));
    let o = bloomlab(t.path(), &cfg, &["sweep", "--axis", "m", "--values", "5,0.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(column(&t.path().join("out/sweep.csv"), "status"), vec!["pass", "config-error"]);
}

#[test]
fn compactness_profile_writes_eps_rows() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{HEAD}experiment = \"compactness-profile\"\n{}{}[kernel]\nname = \"hilbert\"\n[[symbols]]\nkind = \"bump\"\ncenter = [0.25]\nradius = 0.5\n[options]\neps = [0.5, 0.25, 0.125]\nrestarts = 2\n",
        domain(7),
        exps(2.0, 2.0)
    );
    let o = bloomlab(t.path(), &cfg, &["run"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let path = t.path().join("out/compactness.csv");
    let eps: Vec<f64> = column(&path, "eps").iter().map(|x| x.parse().unwrap()).collect();
    assert_eq!(eps, vec![0.5, 0.25, 0.125]);
    let tails: Vec<f64> = column(&path, "tail").iter().map(|x| x.parse().unwrap()).collect();
    assert!(tails.windows(2).all(|w| w[1] < w[0]), "{tails:?}");
}

#[test]
fn vmo_witness_dumps_family_and_profile() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{HEAD}experiment = \"vmo-witness\"\n{}{}[[symbols]]\nkind = \"log_abs\"\n[[symbols]]\nkind = \"constant\"\nre = 1.0\n[options]\nc0 = 0.5\n",
        domain(10),
        exps(2.0, 2.0)
    );
    let o = bloomlab(t.path(), &cfg, &["run"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let log: Value = serde_json::from_str(&fs::read_to_string(t.path().join("out/witness_0.json")).unwrap()).unwrap();
    assert!(log["pairs"].as_array().unwrap().len() >= 3);
    let constant: Value = serde_json::from_str(&fs::read_to_string(t.path().join("out/witness_1.json")).unwrap()).unwrap();
    assert!(constant["pairs"].as_array().unwrap().is_empty());
    let curves = column(&t.path().join("out/profile.csv"), "curve");
    assert!(curves.iter().any(|c| c == "small") && curves.iter().any(|c| c == "distance"));
}

#[test]
fn commutator_sweep_writes_ratio_table_deterministically() {
    let cfg = format!(
        "{HEAD}experiment = \"commutator-sweep\"\nseed = 3\n{}{}[weights]\nseeded = [1]\n[kernel]\nname = \"hilbert\"\n[[symbols]]\nkind = \"log_abs\"\n[[symbols]]\nkind = \"power\"\ngamma = 0.5\n[options]\nrestarts = 4\n",
        domain(6),
        exps(2.0, 3.0)
    );
    let mut tables = Vec::new();
    for workers in ["1", "2"] {
        let t = tempfile::tempdir().unwrap();
        let o = bloomlab(t.path(), &cfg, &["run", "--workers", workers]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        tables.push(fs::read(t.path().join("out/commutator.csv")).unwrap());
        let methods = column(&t.path().join("out/commutator.csv"), "method");
        assert_eq!(methods, vec!["random-restart-ascent"; 2]);
    }
    assert_eq!(tables[0], tables[1]);
    assert!(String::from_utf8(tables[0].clone()).unwrap().starts_with("pair,symbol,bmo,norm,method,probe,norm_over_bmo,probe_over_bmo\n"));
}

#[test]
fn sparse_and_jn_experiments_pass() {
    let t = tempfile::tempdir().unwrap();
    for (exp, extra) in [("sparse-dominate", ""), ("jn-verify", "[options]\nr = 2.0\n")] {
        let cfg = format!(
            "{HEAD}experiment = \"{exp}\"\n{}{}[[symbols]]\nkind = \"random_logs\"\nseed = 4\ncount = 3\n{extra}",
            domain(9),
            exps(2.0, 2.0)
        );
        let o = bloomlab(t.path(), &cfg, &["run"]);
        assert_eq!(o.status.code(), Some(0), "{exp}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(summary(t.path())["status"], "pass");
    }
    assert!(t.path().join("out/family_0.csv").exists());
}
