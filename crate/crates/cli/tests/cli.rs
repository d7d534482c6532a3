use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectropose"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn spectropose")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth_small(dir: &Path, seed: u64) {
    let out = run(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--n-normal",
        "4",
        "--n-abnormal",
        "3",
        "--duration",
        "4",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn version_lists_format_versions() {
    let out = run(&["--version"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for fmt in ["seqfile v1", "features-binary v1", "checkpoint v1", "attention v1"] {
        assert!(text.contains(fmt), "missing '{fmt}' in {text}");
    }
}

#[test]
fn bad_flag_exits_2() {
    let out = run(&["loocv", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_then_loocv_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    synth_small(&data, 7);
    let loocv = |report: &Path| {
        let out = run(&[
            "loocv",
            "--data",
            data.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
            "--n-fft",
            "128",
            "--c",
            "1.2",
            "--epochs",
            "6",
            "--preset",
            "rvi38_like",
            "--seed",
            "7",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    };
    let r1 = tmp.path().join("r1.txt");
    let r2 = tmp.path().join("r2.txt");
    loocv(&r1);
    loocv(&r2);
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
    let text = fs::read_to_string(&r1).unwrap();
    assert!(text.starts_with("report v1\nkind loocv\nseed 7\nfolds 7\n"), "{text}");
}

#[test]
fn missing_label_exits_1_and_names_subject() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    synth_small(&data, 3);
    // strip the label of one subject
    let victim = data.join("syn_a01.seq");
    let text = fs::read_to_string(&victim).unwrap();
    fs::write(&victim, text.replace("label abnormal", "label none")).unwrap();
    let out = run(&[
        "loocv",
        "--data",
        data.to_str().unwrap(),
        "--out",
        tmp.path().join("r.txt").to_str().unwrap(),
        "--n-fft",
        "128",
        "--c",
        "1.2",
        "--epochs",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("syn_a01"), "{}", stderr(&out));
}

#[test]
fn features_logs_resampling_to_reference_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    synth_small(&data, 1);
    let out = run(&[
        "features",
        "--data",
        data.to_str().unwrap(),
        "--out",
        tmp.path().join("f").to_str().unwrap(),
        "--fps",
        "30",
        "--n-fft",
        "128",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("resample 30 fps -> 25 fps reference"), "{}", stdout(&out));
    assert!(tmp.path().join("f/syn_n00.feat").exists());
}

#[test]
fn train_checkpoint_then_attention_export() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    synth_small(&data, 5);
    let ckpt = tmp.path().join("model.ckpt");
    let out = run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--n-fft",
        "128",
        "--c",
        "1.2",
        "--epochs",
        "3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let export = tmp.path().join("attn.txt");
    let out = run(&[
        "attention-export",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        data.join("syn_n00.seq").to_str().unwrap(),
        "--out",
        export.to_str().unwrap(),
        "--n-fft",
        "128",
        "--c",
        "1.2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&export).unwrap();
    assert!(text.starts_with("attention v1\nsubject syn_n00\n"), "{text}");
    assert_eq!(text.matches("Knee").count(), 2); // both knees listed once
}

#[test]
fn config_file_supplies_defaults_but_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.conf");
    fs::write(&cfg, "seed = 9\nduration = 4\n").unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for (dir, extra) in [(&a, None), (&b, None), (&c, Some("11"))] {
        let mut args = vec![
            "synth",
            "--out",
            dir.to_str().unwrap(),
            "--n-normal",
            "2",
            "--n-abnormal",
            "1",
            "--config",
            cfg.to_str().unwrap(),
        ];
        if let Some(seed) = extra {
            args.extend(["--seed", seed]);
        }
        let out = run(&args);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let read = |d: &Path| fs::read(d.join("syn_n00.seq")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c)); // explicit --seed overrides the file

    // unknown keys are rejected
    fs::write(&cfg, "banana = 1\n").unwrap();
    let out = run(&[
        "synth",
        "--out",
        tmp.path().join("x").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("banana"));
}
