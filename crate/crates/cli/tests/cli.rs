use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

struct Run {
    code: i32,
    dir: PathBuf,
}

impl Run {
    fn report(&self) -> Value {
        serde_json::from_slice(&std::fs::read(self.dir.join("report.json")).unwrap()).unwrap()
    }

    fn file(&self, name: &str) -> String {
        std::fs::read_to_string(self.dir.join(name)).unwrap()
    }
}

fn isp(root: &Path, cmd: &str, config: &Value, out: &str, extra: &[&str]) -> Run {
    let cfg = root.join(format!("{out}.json"));
    std::fs::write(&cfg, serde_json::to_string_pretty(config).unwrap()).unwrap();
    let dir = root.join(out);
    let status = Command::new(env!("CARGO_BIN_EXE_isp"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .args(extra)
        .env_remove("ISP_OUT_DIR")
        .output()
        .unwrap();
    Run { code: status.status.code().unwrap(), dir }
}

fn zero(n: usize) -> Vec<Vec<Value>> {
    vec![vec![json!({"exp_sum": []}); n]; n]
}

fn n1_problem(q12: Value, h: [f64; 2]) -> Value {
    json!({
        "dispersion": {"n": 1, "xi": [-1.0, 1.0]},
        "potential": {
            "n": 1,
            "q11": zero(1), "q12": [[q12]], "q21": zero(1), "q22": zero(1),
            "envelope": {"c": 1.0, "eps": 1.0}
        },
        "boundary": [[h]]
    })
}

fn quick(problem: Value) -> Value {
    json!({"lambda_max": 50.0, "n_lambda": 1024, "h": 0.02, "problem": problem})
}

/// Rows of a line-function CSV as `(lambda, k, j, re, im)`.
fn csv_rows(text: &str) -> Vec<(f64, usize, usize, f64, f64)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].parse().unwrap(), c[2].parse().unwrap(), c[3].parse().unwrap(), c[4].parse().unwrap(), c[5].parse().unwrap())
        })
        .collect()
}

#[test]
fn forward_on_zero_potential_gives_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let run = isp(tmp.path(), "forward", &quick(n1_problem(json!({"exp_sum": []}), [0.5, 0.0])), "out", &[]);
    assert_eq!(run.code, 0);
    for (_, k, j, re, im) in csv_rows(&run.file("s_h.csv")) {
        let want = if k == j { 1.0 } else { 0.0 };
        assert!((re - want).abs() < 1e-12 && im.abs() < 1e-12);
    }
    let rep = run.report();
    assert_eq!(rep["status"], "ok");
    assert!(rep["results"]["min_det_plus"].as_f64().unwrap() > 0.99);
    for name in ["kernels.csv", "s_h.csv", "pi.csv", "ah_plus.csv", "blocks.csv"] {
        assert_eq!(rep["manifest"][name].as_str().unwrap().len(), 64, "{name}");
    }
}

#[test]
fn identical_runs_give_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick(n1_problem(json!({"exp_sum": [{"gamma": [0.8, 0.3], "a": 1.0}]}), [1.0, 0.0]));
    let a = isp(tmp.path(), "forward", &cfg, "a", &["--threads", "1"]);
    let b = isp(tmp.path(), "forward", &cfg, "b", &["--threads", "1"]);
    let c = isp(tmp.path(), "forward", &cfg, "c", &["--threads", "3"]);
    assert_eq!(a.code, 0);
    assert_eq!(a.file("report.json"), b.file("report.json"));
    assert_eq!(a.file("report.json"), c.file("report.json"));
    assert_eq!(a.file("kernels.csv"), c.file("kernels.csv"));
}

#[test]
fn e1_roundtrip_recovers_the_single_exponential() {
    let tmp = tempfile::tempdir().unwrap();
    let z = json!({"exp_sum": []});
    let cfg = json!({
        "lambda_max": 100.0,
        "n_lambda": 16384,
        "problem": {"e1": {
            "dispersion": {"n": 2, "xi": [-2.0, -1.0, 1.0, 2.0]},
            "c_first": [z, {"exp_sum": [{"gamma": [1.0, 0.0], "a": 1.0}]}],
            "c_last": [z, z],
            "envelope": {"c": 1.0, "eps": 1.0},
            "h1": [[[1.0, 0.0]]],
            "h1_tilde": [[[2.0, 0.0]]]
        }}
    });
    let run = isp(tmp.path(), "e1-roundtrip", &cfg, "out", &[]);
    assert_eq!(run.code, 0);
    let rep = run.report();
    assert!(rep["results"]["max_rel_error"].as_f64().unwrap() <= 1e-4, "{rep}");
    let profiles = run.file("profiles.csv");
    assert!(profiles.starts_with("s,k,which_family,re,im\n"));
    // c_{3,1}(x) = e^{-x} sampled against s = 3x
    let row = profiles.lines().find(|l| l.contains(",3,first,")).unwrap();
    let cols: Vec<f64> = row.split(',').filter_map(|c| c.parse().ok()).collect();
    assert_eq!(cols[0], 0.0);
    assert!((cols[2] - 1.0).abs() < 1e-4 && cols[3].abs() < 1e-4, "{row}");
}

#[test]
fn equal_boundaries_are_a_degenerate_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let mut problem = n1_problem(json!({"exp_sum": [{"gamma": [0.8, 0.3], "a": 1.0}]}), [1.0, 0.0]);
    problem["factorizations"] = json!([{"boundary": [[[1.0, 0.0]]]}, {"boundary": [[[1.0, 0.0]]]}]);
    let run = isp(tmp.path(), "recover-blocks", &quick(problem), "out", &[]);
    assert_eq!(run.code, 1);
    let rep = run.report();
    assert_eq!(rep["status"], "error");
    assert_eq!(rep["error"]["name"], "DegenerateBoundaryPair");
    assert!(!run.dir.join("blocks.csv").exists());
}

#[test]
fn blocks_recovered_from_factorization_files() {
    let tmp = tempfile::tempdir().unwrap();
    let q = json!({"exp_sum": [{"gamma": [0.8, 0.3], "a": 1.0}]});
    let cfg = |h: [f64; 2]| json!({"lambda_max": 100.0, "n_lambda": 4096, "problem": n1_problem(q.clone(), h)});
    let f1 = isp(tmp.path(), "forward", &cfg([1.0, 0.0]), "h1", &[]);
    let f2 = isp(tmp.path(), "forward", &cfg([-0.5, 0.5]), "h2", &[]);
    assert_eq!((f1.code, f2.code), (0, 0));
    let solved: Vec<Run> = [("h1", &f1), ("h2", &f2)]
        .iter()
        .map(|(name, f)| {
            let mut c = cfg([0.0, 1.0]);
            c["problem"] = json!({"function": {"csv": f.dir.join("s_h.csv")}});
            isp(tmp.path(), "rh-solve", &c, &format!("rh_{name}"), &[])
        })
        .collect();
    assert!(solved.iter().all(|r| r.code == 0));
    let mut c = cfg([1.0, 0.0]);
    c["problem"]["factorizations"] = json!([
        {"boundary": [[[1.0, 0.0]]], "plus": solved[0].dir.join("ah_plus.csv"), "minus": solved[0].dir.join("ah_minus.csv")},
        {"boundary": [[[-0.5, 0.5]]], "plus": solved[1].dir.join("ah_plus.csv"), "minus": solved[1].dir.join("ah_minus.csv")}
    ]);
    let run = isp(tmp.path(), "recover-blocks", &c, "rec", &[]);
    assert_eq!(run.code, 0);
    let err = run.report()["results"]["block_error"].as_f64().unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let run = isp(tmp.path(), "validate", &json!({"n_lambda": 1000}), "bad", &[]);
    assert_eq!(run.code, 2);
    assert_eq!(run.report()["error"]["name"], "ValidationError");

    let path = tmp.path().join("broken.json");
    std::fs::write(&path, "{\n  \"lambda_max\": 100,\n  \"h\": oops\n}").unwrap();
    let out = tmp.path().join("broken");
    let status = Command::new(env!("CARGO_BIN_EXE_isp"))
        .args(["validate", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    let rep: Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["error"]["name"], "ParseError");
    assert_eq!(rep["error"]["location"]["line"], 3);
}

#[test]
fn structure_violation_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let e = json!({"exp_sum": [{"gamma": [1.0, 0.0], "a": 2.0}]});
    let mut q11 = zero(2);
    q11[0][1] = e;
    let problem = json!({
        "dispersion": {"n": 2, "xi": [-2.0, -1.0, 1.0, 2.0]},
        "potential": {"n": 2, "q11": q11, "q12": zero(2), "q21": zero(2), "q22": zero(2), "envelope": {"c": 1.0, "eps": 1.0}}
    });
    let run = isp(tmp.path(), "validate", &json!({"problem": problem}), "out", &[]);
    assert_eq!(run.code, 2);
    let rep = run.report();
    assert_eq!(rep["error"]["name"], "InvalidPotential");
    assert!(rep["error"]["message"].as_str().unwrap().contains("q11(1,2)"), "{rep}");
}

#[test]
fn singular_scattering_reports_where_it_failed() {
    // S = 1 - 1/(lambda^2 + 1) vanishes at lambda = 0, a grid node
    let tmp = tempfile::tempdir().unwrap();
    let g = json!({"dim": 1, "entries": [{"terms": [
        {"coeff": [0.0, 0.5], "pole": [0.0, 1.0], "order": 1},
        {"coeff": [0.0, -0.5], "pole": [0.0, -1.0], "order": 1}
    ]}]});
    let cfg = json!({"lambda_max": 50.0, "n_lambda": 1024, "problem": {"function": {"rational": g}}});
    let run = isp(tmp.path(), "rh-solve", &cfg, "out", &[]);
    assert_eq!(run.code, 1);
    let rep = run.report();
    assert_eq!(rep["error"]["name"], "SingularScattering");
    assert_eq!(rep["error"]["location"]["parameter"], "lambda");
    assert!(rep["error"]["location"]["value"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn rational_split_matches_partial_fractions() {
    let tmp = tempfile::tempdir().unwrap();
    let f = json!({"dim": 1, "entries": [{"terms": [
        {"coeff": [0.0, 1.0], "pole": [0.0, -1.0], "order": 1},
        {"coeff": [0.0, -1.0], "pole": [0.0, 1.0], "order": 1}
    ]}]});
    let cfg = json!({"lambda_max": 100.0, "n_lambda": 16384, "problem": {"function": {"rational": f}}});
    let run = isp(tmp.path(), "split", &cfg, "out", &[]);
    assert_eq!(run.code, 0);
    let res = &run.report()["results"];
    assert!(res["exact_error_plus"].as_f64().unwrap() < 1e-4, "{res}");
    assert!(res["exact_error_minus"].as_f64().unwrap() < 1e-4, "{res}");
}

#[test]
fn seeded_random_systems_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "lambda_max": 50.0,
        "n_lambda": 2048,
        "s_max": 5.0,
        "n_s": 51,
        "problem": {"e1": {
            "dispersion": {"n": 2, "xi": [-2.0, -1.0, 1.0, 2.0]},
            "random_terms": 2,
            "envelope": {"c": 2.0, "eps": 1.0},
            "h1": [[[0.7, 0.2]]]
        }}
    });
    let a = isp(tmp.path(), "e1-forward", &cfg, "a", &["--seed", "5"]);
    let b = isp(tmp.path(), "e1-forward", &cfg, "b", &["--seed", "5"]);
    let c = isp(tmp.path(), "e1-forward", &cfg, "c", &["--seed", "6"]);
    assert_eq!(a.code, 0);
    assert_eq!(a.file("s_h.csv"), b.file("s_h.csv"));
    assert_ne!(a.file("s_h.csv"), c.file("s_h.csv"));
}
