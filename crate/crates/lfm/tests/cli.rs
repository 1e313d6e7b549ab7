use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn lfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfm"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const SMALL: &str = r#"{
  "synthetic": {"classes": 6, "dim": 8, "train_per_class": 120, "val_per_class": 20,
                "pair_groups": [[0, 3], [1, 4]], "image_offset": 0.1, "intra_noise": 0.15},
  "longtail": {"gamma": 10},
  "train": {
    "stage1": {"epochs": 1, "lr0": 0.05, "lr_min": 0.0, "alpha": 1.0, "tau": 1.0},
    "stage2": {"epochs": 2, "lr0": 0.05, "lr_min": 0.0, "alpha": 1.0, "tau": 1.0}
  },
  "sweep": {"alphas": [0, 1], "taus": [1.0]}
}"#;

fn run_ok(args: &[&str]) -> Output {
    let o = lfm(args);
    assert_eq!(
        code(&o),
        0,
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

#[test]
fn synth_make_lt_train_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = write_config(t, "small.json", SMALL);
    let cfg = cfg.to_str().unwrap();
    let data = t.join("data");
    run_ok(&[
        "synth",
        "--config",
        cfg,
        "--seed",
        "3",
        "--out",
        data.to_str().unwrap(),
    ]);
    for f in ["train.lfme", "val.lfme", "catalog.json", "config.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let echoed = read_json(data.join("config.json"));
    assert_eq!(echoed["seed"], 3);
    assert_eq!(echoed["synthetic"]["seed"], 3);

    let lt_cfg = write_config(
        t,
        "lt.json",
        &format!(
            r#"{{"data": {{"train": "{0}/train.lfme", "catalog": "{0}/catalog.json"}}, "longtail": {{"gamma": 10}}}}"#,
            data.display()
        ),
    );
    let lt = t.join("lt");
    run_ok(&[
        "make-lt",
        "--config",
        lt_cfg.to_str().unwrap(),
        "--out",
        lt.to_str().unwrap(),
    ]);
    let cat = read_json(lt.join("catalog_lt.json"));
    let counts: Vec<u64> = serde_json::from_value(cat["counts"].clone()).unwrap();
    assert_eq!(counts[0], 120);
    assert_eq!(counts[5], 12);

    let train_json = format!(
        r#"{{"data": {{"train": "{lt}/train_lt.lfme", "catalog": "{lt}/catalog_lt.json", "val": "{data}/val.lfme"}},
            "train": {{
              "stage1": {{"epochs": 1, "lr0": 0.05, "lr_min": 0.0, "alpha": 1.0, "tau": 1.0}},
              "stage2": {{"epochs": 2, "lr0": 0.05, "lr_min": 0.0, "alpha": 1.0, "tau": 1.0}}}},
            "eval": {{"confusion_csv": true}}}}"#,
        lt = lt.display(),
        data = data.display()
    );
    let train_cfg = write_config(t, "train.json", &train_json);
    let run1 = t.join("run1");
    run_ok(&[
        "train",
        "--config",
        train_cfg.to_str().unwrap(),
        "--arm",
        "balce+lfm",
        "--out",
        run1.to_str().unwrap(),
    ]);
    let head = read_json(run1.join("head.json"));
    assert_eq!(head["dim"], 8);
    assert_eq!(head["W"].as_array().unwrap().len(), 64);
    assert_eq!(head["encoder_proj"].as_array().unwrap().len(), 64);
    assert_eq!(head["history"].as_array().unwrap().len(), 3);
    assert_eq!(head["config"]["train"]["loss"], "balanced_ce");
    let metrics = read_json(run1.join("metrics.json"));
    assert_eq!(metrics["arm"], "balce+lfm");
    assert!(metrics["many"].is_f64() && metrics["few"].is_f64());
    let csv = fs::read_to_string(run1.join("confusion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);

    // evaluating the saved head reproduces the training run's metrics
    let eval_json = train_json.replace(
        "\"data\": {",
        &format!("\"data\": {{\"head\": \"{}/head.json\", ", run1.display()),
    );
    let eval_cfg = write_config(t, "eval.json", &eval_json);
    let ev = t.join("eval");
    run_ok(&[
        "eval",
        "--config",
        eval_cfg.to_str().unwrap(),
        "--arm",
        "balce+lfm",
        "--out",
        ev.to_str().unwrap(),
    ]);
    let again = read_json(ev.join("metrics.json"));
    for k in ["many", "med", "few", "all", "per_class", "confusion"] {
        assert_eq!(again[k], metrics[k], "{k}");
    }
}

#[test]
fn metrics_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let outs: Vec<PathBuf> = (0..2).map(|i| tmp.path().join(format!("r{i}"))).collect();
    for o in &outs {
        run_ok(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "11",
            "--out",
            o.to_str().unwrap(),
        ]);
    }
    for f in ["metrics.json", "head.json"] {
        assert_eq!(
            fs::read(outs[0].join(f)).unwrap(),
            fs::read(outs[1].join(f)).unwrap(),
            "{f}"
        );
    }
    let other = tmp.path().join("other");
    run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "12",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert_ne!(
        fs::read(outs[0].join("head.json")).unwrap(),
        fs::read(other.join("head.json")).unwrap()
    );
}

#[test]
fn zero_epochs_then_eval_is_zero_shot() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let zero = SMALL
        .replace("\"epochs\": 1", "\"epochs\": 0")
        .replace("\"epochs\": 2", "\"epochs\": 0");
    let cfg = write_config(t, "z.json", &zero);
    let run = t.join("run");
    run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    let head = read_json(run.join("head.json"));
    let w: Vec<f64> = serde_json::from_value(head["W"].clone()).unwrap();
    assert!(w
        .iter()
        .enumerate()
        .all(|(k, &x)| x == if k % 9 == 0 { 1.0 } else { 0.0 }));

    let with_head = zero.replacen(
        '{',
        &format!("{{\"data\": {{\"head\": \"{}/head.json\"}},", run.display()),
        1,
    );
    let cfg = write_config(t, "e.json", &with_head);
    let ev = t.join("ev");
    run_ok(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        ev.to_str().unwrap(),
    ]);
    assert_eq!(
        read_json(ev.join("metrics.json"))["confusion"],
        read_json(run.join("metrics.json"))["confusion"]
    );
}

#[test]
fn analyze_reports_both_pair_distributions() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "a.json",
        &SMALL.replacen('{', "{\"analyze\": {\"tau\": 0.05, \"csv\": true},", 1),
    );
    let out = tmp.path().join("a");
    run_ok(&[
        "analyze",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let a = read_json(out.join("analysis.json"));
    let p_y: Vec<f64> = serde_json::from_value(a["p_y"].clone()).unwrap();
    let ind: Vec<f64> = serde_json::from_value(a["p_y_independent"].clone()).unwrap();
    assert!((p_y.iter().sum::<f64>() - 2.0).abs() < 1e-9);
    assert!(p_y.iter().zip(&ind).all(|(e, i)| i <= e));
    let rows = a["p_cond"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    for (i, row) in rows.iter().enumerate() {
        let row: Vec<f64> = serde_json::from_value(row.clone()).unwrap();
        assert_eq!(row[i], 0.0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(a["gamma"].as_f64().unwrap() > a["gamma_prime"].as_f64().unwrap());
    assert_eq!(
        fs::read_to_string(out.join("p_cond.csv"))
            .unwrap()
            .lines()
            .count(),
        7
    );
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SMALL);
    let out = tmp.path().join("s");
    run_ok(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "alpha,tau,many,med,few,all");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,1,") && lines[2].starts_with("1,1,"));
}

#[test]
fn verify_prints_one_line_per_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "v.json",
        r#"{"verify": {"label_shift_triples": 500, "ks_samples": 100000, "gradient_points": 10, "sampler_draws": 50000, "limit_samples": 100000}}"#,
    );
    let out = tmp.path().join("v");
    let o = lfm(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8(o.stdout.clone()).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 5, "{stdout}");
    let failed = lines.iter().any(|l| l.starts_with("FAIL"));
    assert!(lines
        .iter()
        .all(|l| l.starts_with("PASS") || l.starts_with("FAIL")));
    assert_eq!(code(&o), if failed { 4 } else { 0 });
    let report = read_json(out.join("verify.json"));
    assert_eq!(report["passed"], !failed);
    assert_eq!(report["suites"].as_array().unwrap().len(), 5);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let unknown = write_config(t, "u.json", r#"{"trian": {}}"#);
    assert_eq!(
        code(&lfm(&[
            "synth",
            "--config",
            unknown.to_str().unwrap(),
            "--out",
            t.join("o1").to_str().unwrap()
        ])),
        2
    );
    let bad_tau = write_config(t, "b.json", r#"{"analyze": {"tau": -1}}"#);
    assert_eq!(
        code(&lfm(&[
            "analyze",
            "--config",
            bad_tau.to_str().unwrap(),
            "--out",
            t.join("o2").to_str().unwrap()
        ])),
        2
    );
    assert_eq!(
        code(&lfm(&[
            "train",
            "--arm",
            "focal+lfm",
            "--out",
            t.join("o3").to_str().unwrap()
        ])),
        2
    );
    assert_eq!(code(&lfm(&["synth"])), 2, "missing --out");
    let occupied = t.join("occupied");
    fs::create_dir(&occupied).unwrap();
    fs::write(occupied.join("x"), "").unwrap();
    let small = write_config(t, "small.json", SMALL);
    let args = [
        "synth",
        "--config",
        small.to_str().unwrap(),
        "--out",
        occupied.to_str().unwrap(),
    ];
    assert_eq!(code(&lfm(&args)), 2);
    let mut forced = args.to_vec();
    forced.push("--force");
    run_ok(&forced);
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let small = write_config(t, "small.json", SMALL);
    let data = t.join("data");
    run_ok(&[
        "synth",
        "--config",
        small.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);
    let mut bytes = fs::read(data.join("train.lfme")).unwrap();
    bytes[0] = b'X';
    fs::write(data.join("bad.lfme"), &bytes).unwrap();
    let cfg = write_config(
        t,
        "bad.json",
        &format!(
            r#"{{"data": {{"train": "{0}/bad.lfme", "catalog": "{0}/catalog.json"}}}}"#,
            data.display()
        ),
    );
    let o = lfm(&[
        "make-lt",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        t.join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("LFME"));
    let missing = write_config(
        t,
        "missing.json",
        &format!(
            r#"{{"data": {{"train": "{0}/nope.lfme", "catalog": "{0}/catalog.json"}}}}"#,
            data.display()
        ),
    );
    assert_eq!(
        code(&lfm(&[
            "make-lt",
            "--config",
            missing.to_str().unwrap(),
            "--out",
            t.join("o2").to_str().unwrap()
        ])),
        3
    );
}
