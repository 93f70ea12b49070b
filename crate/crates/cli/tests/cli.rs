mod common;

use std::path::Path;

use common::*;
use eegdit::signal::load_dataset;
use eegdit_cli::experiment::ExperimentRecord;
use serde_json::json;

fn code(o: &std::process::Output) -> Option<i32> {
    o.status.code()
}

#[test]
fn synth_is_deterministic_and_rejects_bad_bands() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.json", &tiny_config(&dir.path().join("a")));
    let b = write_config(dir.path(), "b.json", &tiny_config(&dir.path().join("b")));
    let out = stdout(&ok(run(&a, &["synth"])));
    assert!(out.contains("16 segments, 2 classes, 1x64 at 64 Hz"), "{out}");
    ok(run(&b, &["synth"]));
    let read = |d: &str| std::fs::read(dir.path().join(d).join("dataset.sdf")).unwrap();
    assert_eq!(read("a"), read("b"));

    let mut cfg = tiny_config(&dir.path().join("c"));
    cfg["dataset"]["synth"]["bands"] = json!([[2.0, 6.0], [40.0, 50.0]]);
    let bad = run(&write_config(dir.path(), "c.json", &cfg), &["synth"]);
    assert_eq!(code(&bad), Some(1));
    assert!(stderr(&bad).contains("bands"), "{}", stderr(&bad));
}

#[test]
fn generator_training_sampling_and_class_requests() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg_path = write_config(dir.path(), "c.json", &tiny_config(&out));

    let trained = stdout(&ok(run(&cfg_path, &["train-diffusion"])));
    assert!(trained.contains("over 2 epochs"), "{trained}");
    let curve = std::fs::read_to_string(out.join("diffusion_loss.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    assert_eq!(curve.lines().next(), Some("epoch,loss"));
    let ckpt = out.join("diffusion.edtm");
    let ckpt = ckpt.to_str().unwrap();

    ok(run(&cfg_path, &["generate", "--checkpoint", ckpt, "--count", "5"]));
    let g = load_dataset(out.join("generated.sdf")).unwrap();
    assert_eq!((g.len(), g.shape()), (5, Some((1, 64))));
    assert_eq!(g.labels(), vec![Some(0), Some(1), Some(0), Some(1), Some(0)]);
    assert!(g.segments().iter().all(|s| s.data().iter().all(|v| v.is_finite())));

    ok(run(&cfg_path, &["generate", "--checkpoint", ckpt, "--classes", "1,1,0"]));
    let g = load_dataset(out.join("generated.sdf")).unwrap();
    assert_eq!(g.labels(), vec![Some(1), Some(1), Some(0)]);

    let bad = run(&cfg_path, &["generate", "--checkpoint", ckpt, "--classes", "0,2"]);
    assert_eq!(code(&bad), Some(1), "{}", stderr(&bad));
    let bad = run(&cfg_path, &["generate", "--checkpoint", ckpt, "--count", "3", "--classes", "0,1"]);
    assert_eq!(code(&bad), Some(1));

    // Unconditional generator without the spectral branch.
    let mut cfg = tiny_config(&dir.path().join("plain"));
    cfg["conditional"] = json!(false);
    cfg["model"]["dfsi_enabled"] = json!(false);
    cfg["diffusion_training"]["epochs"] = json!(0);
    let plain = write_config(dir.path(), "plain.json", &cfg);
    let msg = stdout(&ok(run(&plain, &["train-diffusion"])));
    assert!(msg.contains("no epochs run"), "{msg}");
    let pck = dir.path().join("plain/diffusion.edtm");
    let pck = pck.to_str().unwrap();
    ok(run(&plain, &["generate", "--checkpoint", pck, "--count", "2"]));
    assert_eq!(load_dataset(dir.path().join("plain/generated.sdf")).unwrap().labels(), vec![None, None]);
    let bad = run(&plain, &["generate", "--checkpoint", pck, "--classes", "0"]);
    assert_eq!(code(&bad), Some(1));

    // A checkpoint trained with another step count is refused.
    let mut cfg = tiny_config(&out);
    cfg["schedule"]["steps"] = json!(12);
    let other = write_config(dir.path(), "other.json", &cfg);
    let bad = run(&other, &["generate", "--checkpoint", ckpt]);
    assert_eq!(code(&bad), Some(1));
    assert!(stderr(&bad).contains("steps"), "{}", stderr(&bad));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(threads);
        let cfg = write_config(dir.path(), &format!("{threads}.json"), &tiny_config(&out));
        let o = bin().env("SDF_THREADS", threads).arg("--config").arg(&cfg).arg("train-diffusion").output().unwrap();
        ok(o);
        let ck = out.join("diffusion.edtm");
        let o = bin()
            .env("SDF_THREADS", threads)
            .arg("--config")
            .arg(&cfg)
            .args(["generate", "--checkpoint", ck.to_str().unwrap(), "--count", "6"])
            .output()
            .unwrap();
        ok(o);
        bytes.push((std::fs::read(&ck).unwrap(), std::fs::read(out.join("generated.sdf")).unwrap()));
    }
    assert!(bytes[0] == bytes[1]);
}

#[test]
fn divergence_exits_with_the_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(&dir.path().join("run"));
    cfg["diffusion_training"]["lr"] = json!(1e200);
    cfg["diffusion_training"]["epochs"] = json!(20);
    let o = run(&write_config(dir.path(), "c.json", &cfg), &["train-diffusion"]);
    assert_eq!(code(&o), Some(2), "{}", stderr(&o));
}

fn classifier_line(o: &std::process::Output) -> String {
    stdout(o).lines().next().unwrap_or_default().to_string()
}

#[test]
fn classifier_modes_report_their_training_sets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg_path = write_config(dir.path(), "c.json", &tiny_config(&out));
    ok(run(&cfg_path, &["train-diffusion"]));
    let ck = out.join("diffusion.edtm");
    ok(run(&cfg_path, &["generate", "--checkpoint", ck.to_str().unwrap(), "--count", "8"]));
    let pool = out.join("generated.sdf");
    let pool = pool.to_str().unwrap();

    // 16 segments split 8/4/4.
    let plain = ok(run(&cfg_path, &["train-classifier", "--mode", "none"]));
    assert_eq!(classifier_line(&plain), "mode plain_ce trained on 8 segments");
    assert!(stdout(&plain).contains("test acc "));
    let report = std::fs::read_to_string(out.join("classifier_plain_ce.txt")).unwrap();
    assert!(report.contains("mode=plain_ce"), "{report}");

    let go = ok(run(&cfg_path, &["train-classifier", "--mode", "go", "--pool", pool]));
    assert_eq!(classifier_line(&go), "mode go trained on 8 segments");
    let report = std::fs::read_to_string(out.join("classifier_go.txt")).unwrap();
    for key in ["beta_smooth=", "alpha=", "eta="] {
        assert!(report.contains(key), "{key} missing from\n{report}");
    }

    let app = ok(run(&cfg_path, &["train-classifier", "--mode", "append", "--pool", pool, "--ratio", "0.5"]));
    assert_eq!(classifier_line(&app), "mode append trained on 12 segments");

    let missing = run(&cfg_path, &["train-classifier", "--mode", "go"]);
    assert_eq!(code(&missing), Some(1));
    let too_many = run(&cfg_path, &["train-classifier", "--mode", "append", "--pool", pool, "--ratio", "2"]);
    assert_eq!(code(&too_many), Some(1), "{}", stderr(&too_many));
}

#[test]
fn evaluation_rows_repeat_and_fid_of_a_file_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg_path = write_config(dir.path(), "c.json", &tiny_config(&out));
    ok(run(&cfg_path, &["synth"]));
    ok(run(&cfg_path, &["train-classifier"]));
    let ck = out.join("classifier_plain_ce.edtm");
    let ck = ck.to_str().unwrap();

    let first = stdout(&ok(run(&cfg_path, &["evaluate", "--checkpoint", ck])));
    let second = stdout(&ok(run(&cfg_path, &["evaluate", "--checkpoint", ck])));
    assert_eq!(normalize(&first), normalize(&second));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert_eq!(metrics.lines().next(), Some("timestamp,dataset,model_tag,acc,auc,f1"));
    let missing = run(&cfg_path, &["evaluate", "--checkpoint", dir.path().join("nope.edtm").to_str().unwrap()]);
    assert_eq!(code(&missing), Some(3));

    let data = out.join("dataset.sdf");
    let data = data.to_str().unwrap();
    let fid = ok(run(&cfg_path, &["fid", "--original", data, "--generated", data, "--extractor", ck, "--spectra"]));
    assert_eq!(stdout(&fid).lines().next(), Some("fid 0.000000"));
    for f in ["fid_results.csv", "spectra.csv", "spectra_ch0.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(std::fs::read_to_string(out.join("spectra_ch0.svg")).unwrap().starts_with("<svg"));

    // A longer dataset does not fit the extractor or the original.
    let mut cfg = tiny_config(&dir.path().join("long"));
    cfg["dataset"]["synth"]["len"] = json!(128);
    ok(run(&write_config(dir.path(), "long.json", &cfg), &["synth"]));
    let long = dir.path().join("long/dataset.sdf");
    let bad = run(&cfg_path, &["fid", "--original", data, "--generated", long.to_str().unwrap(), "--extractor", ck]);
    assert_eq!(code(&bad), Some(1));
    assert!(stderr(&bad).contains("1x64") && stderr(&bad).contains("1x128"), "{}", stderr(&bad));
}

fn record(dir: &Path) -> ExperimentRecord {
    ExperimentRecord::load(dir).unwrap().expect("record exists")
}

#[test]
fn interrupted_experiment_resumes_to_the_same_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let whole = dir.path().join("whole");
    let parts = dir.path().join("parts");
    let cw = write_config(dir.path(), "whole.json", &tiny_config(&whole));
    let cp = write_config(dir.path(), "parts.json", &tiny_config(&parts));

    let table = stdout(&ok(run(&cw, &["experiment"])));
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "mode,n_seeds,acc_mean,acc_std,auc_mean,auc_std,f1_mean,f1_std,acc_gain_mean,acc_gain_std");
    assert_eq!(rows.len(), 4);
    for (row, mode) in rows[1..].iter().zip(["plain_ce", "go", "append"]) {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!((cells[0], cells[1]), (mode, "2"));
        assert!(cells.iter().all(|c| !c.is_empty()), "{row}");
    }
    let rec = record(&whole);
    assert!(rec.audit.as_ref().unwrap().passed);
    assert_eq!(rec.runs.len(), 6);
    assert!(rec.fid.is_some_and(|f| f.is_finite() && f >= 0.0));
    assert!(whole.join("extractor.edtm").exists());

    let stopped = stdout(&ok(run(&cp, &["experiment", "--stop-after", "diffusion"])));
    assert!(stopped.contains("stopped after diffusion"), "{stopped}");
    assert!(!parts.join("generated.sdf").exists());
    ok(run(&cp, &["experiment", "--stop-after", "classifier/go/seed1"]));
    let resumed = ok(run(&cp, &["experiment"]));
    assert!(stderr(&resumed).contains("[diffusion] already done"));
    assert_eq!(stdout(&resumed), table);
    let diff = differing(&snapshot(&whole), &snapshot(&parts));
    assert!(diff.is_empty(), "differing artifacts: {diff:?}");

    let mut cfg = tiny_config(&parts);
    cfg["seed"] = json!(9);
    let bad = run(&write_config(dir.path(), "changed.json", &cfg), &["experiment"]);
    assert_eq!(code(&bad), Some(1));
    assert!(stderr(&bad).contains("different config"), "{}", stderr(&bad));
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"seed\": ").unwrap();
    assert_eq!(code(&run(&broken, &["show-config"])), Some(1));
    std::fs::write(&broken, "{\"sedes\": [1]}").unwrap();
    assert_eq!(code(&run(&broken, &["show-config"])), Some(1));
    assert_eq!(code(&run(&dir.path().join("absent.json"), &["show-config"])), Some(3));

    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().env("SDF_THREADS", "0").arg("show-config").output().unwrap().status.code(), Some(1));

    let shown = stdout(&ok(bin().arg("show-config").output().unwrap()));
    let cfg: eegdit_cli::RunConfig = serde_json::from_str(&shown).unwrap();
    assert_eq!(cfg, eegdit_cli::RunConfig::default());

    let corrupt = dir.path().join("corrupt.sdf");
    std::fs::write(&corrupt, b"NOPE").unwrap();
    let cfg_path = write_config(dir.path(), "c.json", &tiny_config(&dir.path().join("run")));
    let o = run(&cfg_path, &["train-diffusion", "--data", corrupt.to_str().unwrap()]);
    assert_eq!(code(&o), Some(3));
}
