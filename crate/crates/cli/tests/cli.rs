//! End-to-end command tests against the built binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn catreg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_catreg"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("catreg_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("spawning catreg");
    assert!(
        output.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

const GEN_CONFIG: &str = r#"{
  "world": {
    "n_items": 160,
    "feature_dim": 4,
    "quality_spread": 1.0,
    "sigma_min": 0.02,
    "sigma_max": 0.3,
    "sigma_scale": 1.0,
    "windows": 1,
    "window_jitter": 0.1,
    "seed": 5
  },
  "scenario": {
    "tag": "S12Agt",
    "core_size": 160,
    "extended_size": 0,
    "split_ratios": [0.6, 0.2, 0.2],
    "seed": 9
  },
  "calibrate_disagreement": 0.474
}"#;

fn experiment_config(method: &str, tag: &str, gt: &str) -> String {
    format!(
        r#"{{
  "world": {{
    "n_items": 160, "feature_dim": 4, "quality_spread": 1.0,
    "sigma_min": 0.02, "sigma_max": 0.3, "sigma_scale": 1.0,
    "windows": 1, "window_jitter": 0.1, "seed": 5
  }},
  "scenario": {{
    "tag": "{tag}", "core_size": 160, "extended_size": 0,
    "split_ratios": [0.6, 0.2, 0.2], "seed": 9
  }},
  "method": "{method}",
  "gt_mode": "{gt}",
  "hidden": [8],
  "mixture_components": 1,
  "hyper": {{
    "learning_rate": 0.001, "lr_decay": 0.91, "lr_decay_every": 2,
    "weight_decay": 0.0005, "epochs": 3, "batch_size": 32,
    "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8,
    "mc_passes": 5, "mc_dropout_rate": 0.1
  }},
  "master_seed": 1,
  "ensemble_size": 2,
  "merge_validation": true
}}"#
    )
}

#[test]
fn gen_data_writes_splits_without_truth_in_train() {
    let dir = temp_dir("gendata");
    write(&dir.join("config.json"), GEN_CONFIG);
    let stdout = run_ok(
        catreg()
            .arg("gen-data")
            .arg("--config")
            .arg(dir.join("config.json"))
            .arg("--out-dir")
            .arg(&dir),
    );
    assert!(stdout.contains("96 train / 32 validation / 32 test"));
    let train = std::fs::read_to_string(dir.join("train.csv")).unwrap();
    assert!(train.starts_with("id,window,feat_0,feat_1,feat_2,feat_3,a1,a2\n"));
    let test = std::fs::read_to_string(dir.join("test.csv")).unwrap();
    assert!(test.starts_with("id,window,feat_0,feat_1,feat_2,feat_3,a1,a2,true_y,true_sigma\n"));

    // --seed overrides the scenario seed deterministically
    let alt = temp_dir("gendata_alt");
    write(&alt.join("config.json"), GEN_CONFIG);
    run_ok(
        catreg()
            .arg("gen-data")
            .arg("--config")
            .arg(alt.join("config.json"))
            .arg("--out-dir")
            .arg(&alt)
            .arg("--seed")
            .arg("9"),
    );
    let again = std::fs::read_to_string(alt.join("train.csv")).unwrap();
    assert_eq!(train, again);
}

#[test]
fn train_eval_compare_calibration_pipeline() {
    let dir = temp_dir("pipeline");
    write(&dir.join("exp_a.json"), &experiment_config("CdfProb", "S12Agt", "Agt"));
    write(&dir.join("exp_b.json"), &experiment_config("Regression", "S12Agt", "Agt"));

    let out_a = dir.join("out_a");
    let out_b = dir.join("out_b");
    let stdout = run_ok(
        catreg()
            .arg("train")
            .arg("--config")
            .arg(dir.join("exp_a.json"))
            .arg("--out-dir")
            .arg(&out_a),
    );
    assert!(stdout.contains("cdf-prob"));
    run_ok(
        catreg()
            .arg("train")
            .arg("--config")
            .arg(dir.join("exp_b.json"))
            .arg("--out-dir")
            .arg(&out_b),
    );
    assert!(out_a.join("checkpoint_seed_1.json").exists());
    assert!(out_a.join("checkpoint_seed_2.json").exists());
    assert!(out_a.join("metrics_seed_1.json").exists());
    assert!(out_a.join("report.json").exists());

    // evaluate checkpoint on a dual-label dataset
    write(&dir.join("gen.json"), GEN_CONFIG);
    run_ok(
        catreg()
            .arg("gen-data")
            .arg("--config")
            .arg(dir.join("gen.json"))
            .arg("--out-dir")
            .arg(&dir),
    );
    let eval_out = dir.join("eval_report.json");
    let stdout = run_ok(
        catreg()
            .arg("eval")
            .arg("--checkpoint")
            .arg(out_a.join("checkpoint_seed_1.json"))
            .arg("--data")
            .arg(dir.join("test.csv"))
            .arg("--out")
            .arg(&eval_out),
    );
    assert!(stdout.contains("accuracy"));
    assert!(eval_out.exists());
    assert!(dir.join("eval_report.confusion.csv").exists());

    // t-test between the two prediction dumps
    let cmp_out = dir.join("ttest.json");
    let stdout = run_ok(
        catreg()
            .arg("compare")
            .arg("--first")
            .arg(out_a.join("predictions.json"))
            .arg("--second")
            .arg(out_b.join("predictions.json"))
            .arg("--out")
            .arg(&cmp_out),
    );
    assert!(stdout.contains("one-tail p"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&cmp_out).unwrap()).unwrap();
    let p = report["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));

    // calibration report over the predictions
    let cal_out = dir.join("calibration.json");
    let stdout = run_ok(
        catreg()
            .arg("calibration-report")
            .arg("--predictions")
            .arg(out_a.join("predictions.json"))
            .arg("--out")
            .arg(&cal_out)
            .arg("--bins")
            .arg("10"),
    );
    assert!(stdout.contains("ece"));
    assert!(dir.join("calibration.bins.csv").exists());
}

#[test]
fn loss_surface_grid() {
    let dir = temp_dir("surface");
    let out = dir.join("surface.csv");
    run_ok(catreg().arg("loss-surface").arg("--out").arg(&out));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1000);
    assert_eq!(lines[0], "p_plus,red,yellow,blue");
}

#[test]
fn active_learn_trace() {
    let dir = temp_dir("active");
    let mut config: serde_json::Value =
        serde_json::from_str(&experiment_config("Regression", "S1", "Single")).unwrap();
    config["hyper"]["epochs"] = serde_json::json!(8);
    write(&dir.join("exp.json"), &serde_json::to_string(&config).unwrap());
    write(
        &dir.join("al.json"),
        r#"{
  "initial_fraction": 0.25,
  "warmup_epochs": 4,
  "query_period": 2,
  "query_fraction": 0.1,
  "terminal_budget": 0.5
}"#,
    );
    let stdout = run_ok(
        catreg()
            .arg("active-learn")
            .arg("--config")
            .arg(dir.join("exp.json"))
            .arg("--al-config")
            .arg(dir.join("al.json"))
            .arg("--out-dir")
            .arg(&dir),
    );
    assert!(stdout.contains("pool"));
    let trace = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 9); // header + 8 epochs
    assert!(trace.starts_with("epoch,labeled,test_accuracy,test_abs_error\n"));
}
