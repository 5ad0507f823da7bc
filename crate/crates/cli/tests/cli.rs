use std::path::Path;
use std::process::{Command, Output};

fn sepsis(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sepsis"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path) {
    let o = sepsis(dir, &["--out", "data", "synth", "--n", "400"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_then_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let o = sepsis(
        tmp.path(),
        &["--out", "run", "--format", "json", "run", "data/synthetic.csv"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["leakage"]["passed"], true);
    for f in [
        "model_glm.json",
        "model_gbt.json",
        "report_gbt.txt",
        "explanations.csv",
        "manifest.json",
    ] {
        assert!(tmp.path().join("run").join(f).exists(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(sepsis(tmp.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(sepsis(tmp.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        sepsis(tmp.path(), &["evaluate", "missing.json", "missing.csv"])
            .status
            .code(),
        Some(2)
    );
    synth(tmp.path());
    let o = sepsis(
        tmp.path(),
        &[
            "split",
            "data/synthetic.csv",
            "--train",
            "0.8",
            "--validation",
            "0.3",
            "--test",
            "0.1",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fractions"));
}

#[test]
fn bad_config_fractions_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    std::fs::write(
        tmp.path().join("bad.toml"),
        "[input]\npath = \"data/synthetic.csv\"\n[split]\ntrain_fraction = 0.9\nvalidation_fraction = 0.2\ntest_fraction = 0.1\n",
    )
    .unwrap();
    let o = sepsis(tmp.path(), &["--config", "bad.toml", "run"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("split.fractions"));
}

#[test]
fn stagewise_commands_and_inspect() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d);
    assert!(sepsis(d, &["--out", "imp", "impute", "data/synthetic.csv"])
        .status
        .success());
    assert!(sepsis(d, &["--out", "sp", "split", "imp/imputed.csv"]).status.success());
    let o = sepsis(d, &["--out", "m", "train", "sp/train.csv", "--model", "gbt"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = sepsis(d, &["model", "inspect", "m/model_gbt.json"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("model_type: gbt"));
    assert!(text.contains("tree 0"));

    let o = sepsis(d, &["--out", "m", "evaluate", "m/model_gbt.json", "sp/test.csv"]);
    assert!(stdout(&o).contains("Confusion Matrix and Statistics"));

    let o = sepsis(
        d,
        &[
            "--out",
            "x",
            "explain",
            "m/model_gbt.json",
            "sp/train.csv",
            "sp/test.csv",
            "--cases",
            "0,1",
            "--k",
            "3",
            "--samples",
            "300",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(d.join("x/explanations.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new().from_reader(table.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header.len(), 13);
    assert_eq!(header[0], "model_type");
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.len() == 13));
}

#[test]
fn json_format_is_machine_readable() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let o = sepsis(
        tmp.path(),
        &["--format", "json", "--out", "p", "profile", "data/synthetic.csv"],
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.as_array().unwrap().iter().any(|r| r["column"] == "WBC"));
}

#[test]
fn held_out_rows_reuse_the_train_imputation() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d);
    assert!(sepsis(d, &["--out", "sp", "split", "data/synthetic.csv"])
        .status
        .success());
    assert!(sepsis(d, &["--out", "tr", "impute", "sp/train.csv"]).status.success());
    let o = sepsis(
        d,
        &[
            "--out",
            "te",
            "impute",
            "sp/test.csv",
            "--apply",
            "tr/imputation_model.json",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!d.join("te/imputation_model.json").exists());

    let cells = |path: &str| -> Vec<Vec<String>> {
        let text = std::fs::read_to_string(d.join(path)).unwrap();
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        rdr.records()
            .map(|r| r.unwrap().iter().map(str::to_string).collect())
            .collect()
    };
    let raw = cells("sp/test.csv");
    let imputed = cells("te/imputed.csv");
    assert_eq!(raw.len(), imputed.len());
    assert!(raw.iter().flatten().any(String::is_empty));
    assert!(!imputed.iter().flatten().any(String::is_empty));
    for (r, i) in raw.iter().zip(&imputed) {
        for (a, b) in r.iter().zip(i) {
            if !a.is_empty() {
                assert_eq!(a, b);
            }
        }
    }

    let o = sepsis(d, &["--out", "m", "train", "tr/imputed.csv", "--model", "glm"]);
    assert!(o.status.success());
    let o = sepsis(d, &["--out", "m", "evaluate", "m/model_glm.json", "te/imputed.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
