//! Command-line behaviour: exit codes, outputs and reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use genoseq::geno::{build_sequences_multi, parse_genotype_csv, parse_phenotype_csv};
use genoseq::linalg::Matrix;
use genoseq::pipeline::Manifest;
use genoseq::rnn::{predict, Checkpoint};
use serde_json::Value;

fn genoseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genoseq"))
        .args(args)
        .env_remove("GENOSEQ_LOG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Writes a small synthetic dataset and returns its directory.
fn synth(root: &Path, extra: &[&str]) -> PathBuf {
    let dir = root.join("data");
    let mut args = vec![
        "synth",
        "--out",
        s(&dir),
        "--samples",
        "40",
        "--snps",
        "50",
        "--rank",
        "3",
        "--seed",
        "4",
    ];
    args.extend_from_slice(extra);
    let o = genoseq(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir
}

#[test]
fn help_documents_every_command() {
    let top = genoseq(&["--help"]);
    assert_eq!(code(&top), 0);
    let text = String::from_utf8_lossy(&top.stdout);
    for cmd in [
        "impute",
        "train",
        "predict",
        "benchmark",
        "synth",
        "gradcheck",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from top-level help");
        let o = genoseq(&[cmd, "--help"]);
        assert_eq!(code(&o), 0, "{cmd}");
        let help = String::from_utf8_lossy(&o.stdout);
        for flag in ["--config", "--seed", "--out", "--threads"] {
            assert!(help.contains(flag), "{cmd} help lacks {flag}");
        }
    }
    let train = String::from_utf8_lossy(&genoseq(&["train", "--help"]).stdout).to_string();
    for flag in [
        "--geno",
        "--pheno",
        "--cell",
        "--epochs",
        "--traits",
        "--formats",
    ] {
        assert!(train.contains(flag), "train help lacks {flag}");
    }
}

#[test]
fn invalid_flags_exit_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    for args in [
        vec!["synth", "--out", s(&out), "--bogus"],
        vec!["train", "--out", s(&out), "--cell", "gru"],
        vec!["synth", "--out", s(&out), "--samples", "many"],
        vec!["frobnicate"],
        vec![],
    ] {
        let o = genoseq(&args);
        assert_eq!(code(&o), 1, "{args:?}");
    }
    assert!(!out.exists());
}

#[test]
fn synth_writes_requested_shapes_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--traits", "3", "--missing-frac", "0.2"]);
    let holed = parse_genotype_csv(fs::File::open(data.join("genotypes.csv")).unwrap()).unwrap();
    let truth = parse_genotype_csv(fs::File::open(data.join("truth.csv")).unwrap()).unwrap();
    let pheno = parse_phenotype_csv(fs::File::open(data.join("phenotypes.csv")).unwrap()).unwrap();
    assert_eq!((holed.samples(), holed.snps()), (40, 50));
    assert_eq!(holed.missing_count(), 400);
    assert!(truth.is_complete());
    assert_eq!((pheno.samples(), pheno.traits()), (40, 3));
    let side = read_json(&data.join("synth.json"));
    assert_eq!(side["seed"], 4);
    assert_eq!(side["genotypes"]["rank"], 3);
    assert_eq!(manifest(&data).files.len(), 4);

    let full = tempfile::tempdir().unwrap();
    let data = synth(full.path(), &["--missing-frac", "0"]);
    assert_eq!(
        fs::read(data.join("genotypes.csv")).unwrap(),
        fs::read(data.join("truth.csv")).unwrap()
    );
}

#[test]
fn impute_writes_outputs_and_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("imp");
    let o = genoseq(&[
        "impute",
        "--geno",
        s(&data.join("genotypes.csv")),
        "--truth",
        s(&data.join("truth.csv")),
        "--features",
        "3",
        "--epochs",
        "100",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = manifest(&out).files.into_iter().map(|e| e.file).collect();
    assert_eq!(names, ["fit_report.json", "imputed.csv", "mf_cost.csv"]);
    let report = read_json(&out.join("fit_report.json"));
    assert!(report["accuracy"]["missing_pct"].as_f64().unwrap() > 0.0);
    assert!(report["accuracy"]["full_pct"].as_f64().unwrap() > 0.0);
    assert_eq!(report["epochs_run"], 100);
    let imputed = parse_genotype_csv(fs::File::open(out.join("imputed.csv")).unwrap()).unwrap();
    assert!(imputed.is_complete());
    assert_eq!(
        fs::read_to_string(out.join("mf_cost.csv"))
            .unwrap()
            .lines()
            .count(),
        101
    );

    let plain = dir.path().join("plain");
    let o = genoseq(&[
        "impute",
        "--geno",
        s(&data.join("genotypes.csv")),
        "--features",
        "3",
        "--epochs",
        "5",
        "--out",
        s(&plain),
    ]);
    assert_eq!(code(&o), 0);
    assert!(read_json(&plain.join("fit_report.json"))["accuracy"].is_null());

    let missing = dir.path().join("missing");
    let o = genoseq(&[
        "impute",
        "--geno",
        s(&dir.path().join("nope.csv")),
        "--out",
        s(&missing),
    ]);
    assert_eq!(code(&o), 1);
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    assert!(!missing.exists());
}

#[test]
fn impute_divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let o = genoseq(&[
        "impute",
        "--geno",
        s(&data.join("genotypes.csv")),
        "--alpha",
        "10",
        "--epochs",
        "50",
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let (geno, pheno) = (data.join("genotypes.csv"), data.join("phenotypes.csv"));
    let mut args = vec![
        "train",
        "--geno",
        s(&geno),
        "--pheno",
        s(&pheno),
        "--features",
        "3",
        "--mf-epochs",
        "50",
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    for (flag, value) in [("--epochs", "5"), ("--hidden", "4")] {
        if !extra.contains(&flag) {
            args.extend([flag, value]);
        }
    }
    genoseq(&args)
}

#[test]
fn train_writes_report_models_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("tr");
    let o = train(&data, &out, &["--truth", s(&data.join("truth.csv"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = manifest(&out).files.into_iter().map(|e| e.file).collect();
    assert_eq!(
        names,
        [
            "curve_trait1.csv",
            "curve_trait2.csv",
            "imputed.csv",
            "metrics.csv",
            "mf_cost.csv",
            "model_trait1.json",
            "model_trait2.json",
            "report.json",
        ]
    );
    assert!(out.join("timings.json").exists());
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["version"], "genoseq-report-v1");
    assert!(report["mf"]["accuracy"]["full_pct"].is_number());
    assert_eq!(report["models"].as_array().unwrap().len(), 2);

    let json_only = dir.path().join("json");
    let o = train(&data, &json_only, &["--formats", "json", "--traits", "1"]);
    assert_eq!(code(&o), 0);
    let names: Vec<String> = manifest(&json_only)
        .files
        .into_iter()
        .map(|e| e.file)
        .collect();
    assert_eq!(names, ["imputed.csv", "model_trait2.json", "report.json"]);
}

#[test]
fn relu_checkpoint_starts_from_identity() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("relu");
    let o = train(
        &data,
        &out,
        &[
            "--cell", "relu", "--epochs", "0", "--hidden", "5", "--traits", "0",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ck = Checkpoint::load(&out.join("model_trait1.json")).unwrap();
    assert_eq!(ck.params.w_hh, Matrix::identity(5));
    assert!(ck.params.b_h.iter().all(|&b| b == 0.0));
}

#[test]
fn train_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(
        code(&train(&data, &a, &["--seed", "11", "--threads", "1"])),
        0
    );
    assert_eq!(
        code(&train(&data, &b, &["--seed", "11", "--threads", "1"])),
        0
    );
    assert_eq!(manifest(&a), manifest(&b));
    let c = dir.path().join("c");
    assert_eq!(code(&train(&data, &c, &["--seed", "12"])), 0);
    assert_ne!(manifest(&a), manifest(&c));
}

#[test]
fn predict_matches_in_process_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--missing-frac", "0"]);
    let out = dir.path().join("tr");
    assert_eq!(
        code(&train(
            &data,
            &out,
            &["--traits", "0", "--chunk-width", "7"]
        )),
        0
    );
    let pred_dir = dir.path().join("pred");
    let model = out.join("model_trait1.json");
    let o = genoseq(&[
        "predict",
        "--checkpoint",
        s(&model),
        "--geno",
        s(&data.join("truth.csv")),
        "--pheno",
        s(&data.join("phenotypes.csv")),
        "--out",
        s(&pred_dir),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("correlation"));

    let ck = Checkpoint::load(&model).unwrap();
    let g = parse_genotype_csv(fs::File::open(data.join("truth.csv")).unwrap()).unwrap();
    let p = parse_phenotype_csv(fs::File::open(data.join("phenotypes.csv")).unwrap()).unwrap();
    let pre = ck.preprocessing.unwrap();
    assert_eq!(pre.chunk_width, 7);
    let batch = build_sequences_multi(&g, &p, &[0], pre.chunk_width, pre.normalization).unwrap();
    let expected = predict(&ck.params, &batch).unwrap();

    let mut rdr = csv::Reader::from_path(pred_dir.join("predictions.csv")).unwrap();
    let mut written = std::collections::HashMap::new();
    for row in rdr.records() {
        let row = row.unwrap();
        written.insert(
            row[0].parse::<usize>().unwrap(),
            row[1].parse::<f64>().unwrap(),
        );
    }
    assert_eq!(written.len(), 40);
    for (id, y) in batch.sample_ids.iter().zip(&expected) {
        assert_eq!(written[id].to_bits(), y[0].to_bits(), "sample {id}");
    }
    let metrics = read_json(&pred_dir.join("metrics.json"));
    let m = &metrics["targets"][0]["metrics"];
    assert!(m["correlation"].is_number());
    assert_eq!(m["n"].as_u64().unwrap() as usize, batch.len());

    let o = genoseq(&[
        "predict",
        "--checkpoint",
        s(&dir.path().join("none.json")),
        "--geno",
        s(&data.join("truth.csv")),
        "--out",
        s(&dir.path().join("p2")),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn benchmark_writes_aligned_curves_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = genoseq(&[
            "benchmark",
            "--task",
            "adding-12",
            "--samples",
            "8",
            "--epochs",
            "6",
            "--seed",
            "3",
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    let names: Vec<String> = manifest(&a).files.into_iter().map(|e| e.file).collect();
    assert_eq!(
        names,
        [
            "benchmark.json",
            "curve_lstm.csv",
            "curve_relu_identity.csv",
            "curve_simple_tanh.csv",
            "curves.csv"
        ]
    );
    let curves = fs::read_to_string(a.join("curves.csv")).unwrap();
    assert!(curves.starts_with("epoch,simple_tanh,lstm,relu_identity\n"));
    assert_eq!(curves.lines().count(), 7);
    assert_eq!(manifest(&a), manifest(&run("b")));
}

#[test]
fn gradcheck_scope_and_trials() {
    let o = genoseq(&["gradcheck", "--cells", "lstm", "--trials", "3"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("lstm"));
    let o = genoseq(&["gradcheck", "--cells", "lstm", "--mf", "--trials", "2"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);
    assert_eq!(code(&genoseq(&["gradcheck", "--trials", "0"])), 1);
    assert_eq!(
        code(&genoseq(&[
            "gradcheck",
            "--trials",
            "2",
            "--threshold",
            "1e-30"
        ])),
        2
    );
}

#[test]
fn config_file_is_strict_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"pipeline": {"sed": 1}}"#).unwrap();
    let o = genoseq(&["gradcheck", "--config", s(&bad), "--trials", "1"]);
    assert_eq!(code(&o), 1);

    let cfg = dir.path().join("cfg.json");
    let out_cfg = dir.path().join("from_config");
    fs::write(
        &cfg,
        serde_json::json!({
            "out": out_cfg,
            "pipeline": {"seed": 5},
            "synth": {"samples": 12, "snps": 9, "rank": 2, "traits": 1, "causal_snps": 3}
        })
        .to_string(),
    )
    .unwrap();
    let o = genoseq(&["synth", "--config", s(&cfg), "--snps", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let side = read_json(&out_cfg.join("synth.json"));
    assert_eq!(side["seed"], 5);
    assert_eq!(side["genotypes"]["samples"], 12);
    assert_eq!(side["genotypes"]["snps"], 7);

    let flag_out = dir.path().join("flag");
    let o = genoseq(&[
        "synth",
        "--config",
        s(&cfg),
        "--seed",
        "6",
        "--out",
        s(&flag_out),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&flag_out.join("synth.json"))["seed"], 6);
    assert_eq!(
        code(&genoseq(&["synth", "--config", s(&cfg), "--threads", "0"])),
        1
    );
}

#[test]
fn logs_go_to_stderr_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let o = Command::new(env!("CARGO_BIN_EXE_genoseq"))
        .args([
            "impute",
            "--geno",
            s(&data.join("genotypes.csv")),
            "--epochs",
            "3",
            "--out",
            s(&dir.path().join("i")),
        ])
        .env("GENOSEQ_LOG", "info")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("INFO"));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("INFO"));
}
