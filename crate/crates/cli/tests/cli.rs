use std::path::Path;
use std::process::{Command, Output};

fn volchem(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volchem"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn encode_train_compile_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let bits = |k: u32| -> Vec<bool> { (0..16).map(|b| (k >> b) & 1 == 1).collect() };
    let datasets = serde_json::json!([
        {"analyte": 1, "bits": bits(0x00ff)},
        {"analyte": 2, "bits": bits(0xff00)},
    ]);
    std::fs::write(d.join("data.json"), datasets.to_string()).unwrap();
    let features: Vec<Vec<u8>> = (0..64u32)
        .map(|k| {
            (0..16)
                .map(|b| (k.wrapping_mul(2654435761) >> b & 1) as u8)
                .collect()
        })
        .collect();
    let labels: Vec<&str> = features
        .iter()
        .map(|x| {
            if x[..8].iter().sum::<u8>() > x[8..].iter().sum::<u8>() {
                "match"
            } else {
                "mismatch"
            }
        })
        .collect();
    let train = serde_json::json!({"foreground": "left", "features": features, "labels": labels});
    std::fs::write(d.join("train.json"), train.to_string()).unwrap();

    let out = stdout(&volchem(d, &["encode", "data.json", "--out", "o"]));
    assert!(out.contains("32 write transfers"), "{out}");
    stdout(&volchem(
        d,
        &["train", "train.json", "--no-bias", "--out", "o"],
    ));
    stdout(&volchem(
        d,
        &["compile", "o/classifier.json", "o/plan.json", "--out", "o"],
    ));
    let out = stdout(&volchem(
        d,
        &[
            "run",
            "o/write.jsonl",
            "o/pool.jsonl",
            "--noise",
            "off",
            "--out",
            "o",
        ],
    ));
    let pools: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(pools.as_object().unwrap().len(), 2);
    for f in [
        "execution_log.csv",
        "cost.json",
        "data_plate.json",
        "output_plate.json",
        "chromatogram_out_A1.csv",
    ] {
        assert!(d.join("o").join(f).exists(), "{f}");
    }

    let q = stdout(&volchem(d, &["quantify", "o/chromatogram_out_A1.csv"]));
    let q: serde_json::Value = serde_json::from_str(&q).unwrap();
    let a1 = &pools["out:A1"];
    for (name, c) in q.as_object().unwrap() {
        let c = c.as_f64().unwrap();
        assert!((c - a1[name].as_f64().unwrap()).abs() <= 1e-6 * c.abs().max(1.0));
    }
}

#[test]
fn errors_are_json_with_a_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = volchem(d, &["quantify", "missing.csv"]);
    assert!(!o.status.success());
    let line: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(line["kind"], "Io");

    std::fs::write(d.join("bad.jsonl"), "{\"op\":\"transfer_from_well\",\"src\":\"A1\",\"dst\":\"out:A1\",\"vol_ul\":5.0,\"new_tip\":true}\n").unwrap();
    let o = volchem(d, &["run", "bad.jsonl"]);
    let line: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(line["kind"], "BudgetExceeded");
}

#[test]
fn calibrate_experiment_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    stdout(&volchem(
        d,
        &["experiment", "calibrate", "--noise", "off", "--out", "cal"],
    ));
    let names: Vec<String> = std::fs::read_dir(d.join("cal"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().any(|n| n.ends_with(".json")));
    assert!(names.iter().any(|n| n.ends_with(".svg")));
}

#[test]
fn config_file_sets_seeds_and_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("exp.toml"),
        "seeds = [3, 4]\n[noise]\nenabled = false\n",
    )
    .unwrap();
    let out = stdout(&volchem(
        d,
        &[
            "--config",
            "exp.toml",
            "experiment",
            "validate",
            "--out",
            "v",
        ],
    ));
    assert!(out.contains("median accuracy 48/48"), "{out}");
    let acc = std::fs::read_to_string(d.join("v/validation_accuracy.csv")).unwrap();
    assert_eq!(acc.lines().count(), 3, "{acc}");
}
