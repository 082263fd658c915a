//! End-to-end tests of the `pointfill` binary: directory layout, config
//! echo, log format, resume, metrics report schema, and exit codes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pointfill::data::load_xyz;
use pointfill::harness::{save_bundle, AdamW, LogRecord, MetricsReport};
use pointfill::model::{CompletionModel, ModelConfig};
use pointfill::numerics::save_checkpoint;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pointfill"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success for {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_code(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().expect("binary runs");
    let code = out.status.code().expect("no signal");
    (code, String::from_utf8_lossy(&out.stderr).into_owned())
}

/// The mandatory trailing summary line, parsed.
fn result_line(out: &Output) -> serde_json::Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let last = stdout.trim_end().lines().last().expect("nonempty stdout");
    let json = last
        .strip_prefix("RESULT ")
        .unwrap_or_else(|| panic!("last line is not a RESULT line: {last}"));
    serde_json::from_str(json).expect("RESULT line is valid JSON")
}

fn gen_bench(dir: &Path) {
    run_ok(&[
        "gen-data",
        "--out",
        dir.to_str().unwrap(),
        "--synthetic",
        "10",
        "--seed",
        "42",
    ]);
}

fn write_config(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}

fn relative_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn gen_data_materializes_the_documented_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let bench = tmp.path().join("bench");
    let out = run_ok(&[
        "gen-data",
        "--out",
        bench.to_str().unwrap(),
        "--synthetic",
        "10",
        "--seed",
        "7",
    ]);
    let result = result_line(&out);
    assert_eq!(result["command"], "gen-data");
    assert_eq!(result["objects"], 10);
    assert_eq!(result["eval_samples"], 240); // 10 objects × 8 viewpoints × 3 tiers

    assert!(bench.join("manifest.json").is_file());
    assert_eq!(std::fs::read_dir(bench.join("objects")).unwrap().count(), 10);
    assert_eq!(std::fs::read_dir(bench.join("eval")).unwrap().count(), 240);

    // the config echo is the first line and parses back to the same spec
    let stdout = String::from_utf8_lossy(&out.stdout);
    let config = stdout.lines().next().unwrap().strip_prefix("CONFIG ").unwrap();
    let spec: pointfill::data::DatasetSpec = serde_json::from_str(config).unwrap();
    assert_eq!(spec.seed, 7);
    assert_eq!(spec.n_objects, 10);
}

#[test]
fn gen_data_rejects_unknown_spec_key() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    write_config(&spec, r#"{"n_objectz": 10}"#);
    let (code, stderr) = run_code(&[
        "gen-data",
        "--out",
        tmp.path().join("bench").to_str().unwrap(),
        "--spec",
        spec.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("n_objectz"), "stderr: {stderr}");
}

#[test]
fn train_emits_monotone_log_and_loadable_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let bench = tmp.path().join("bench");
    gen_bench(&bench);
    let cfg = tmp.path().join("cfg.json");
    write_config(&cfg, r#"{"train": {"epochs": 2, "batch_size": 4, "seed": 5}}"#);
    let ckpt = tmp.path().join("model.ckpt");

    let out = run_ok(&[
        "train",
        "--data",
        bench.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);

    // 5 train objects / batch 4 → 2 steps per epoch → 4 steps
    let result = result_line(&out);
    assert_eq!(result["steps"], 4);
    assert!(ckpt.is_file());

    let log = tmp.path().join("model.log.jsonl");
    let lines: Vec<LogRecord> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    for (i, rec) in lines.iter().enumerate() {
        assert_eq!(rec.step, i as u64);
        assert!(rec.j.is_finite() && rec.j > 0.0);
        assert!((rec.j - (rec.j0 + rec.j1)).abs() < 1e-6);
    }

    let (model, _) = pointfill::harness::load_model(&ckpt).unwrap();
    assert_eq!(model.config(), &ModelConfig::desk());
}

#[test]
fn train_resume_reproduces_the_uninterrupted_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let bench = tmp.path().join("bench");
    gen_bench(&bench);

    let cfg2 = tmp.path().join("cfg2.json");
    let cfg4 = tmp.path().join("cfg4.json");
    write_config(&cfg2, r#"{"train": {"epochs": 2, "batch_size": 4, "seed": 9}}"#);
    write_config(&cfg4, r#"{"train": {"epochs": 4, "batch_size": 4, "seed": 9}}"#);

    let straight = tmp.path().join("straight.ckpt");
    run_ok(&[
        "train",
        "--data",
        bench.to_str().unwrap(),
        "--config",
        cfg4.to_str().unwrap(),
        "--out",
        straight.to_str().unwrap(),
    ]);

    let half = tmp.path().join("half.ckpt");
    run_ok(&[
        "train",
        "--data",
        bench.to_str().unwrap(),
        "--config",
        cfg2.to_str().unwrap(),
        "--out",
        half.to_str().unwrap(),
    ]);
    let resumed = tmp.path().join("resumed.ckpt");
    run_ok(&[
        "train",
        "--data",
        bench.to_str().unwrap(),
        "--config",
        cfg4.to_str().unwrap(),
        "--out",
        resumed.to_str().unwrap(),
        "--resume",
        half.to_str().unwrap(),
    ]);

    assert_eq!(
        std::fs::read(&straight).unwrap(),
        std::fs::read(&resumed).unwrap(),
        "resumed checkpoint must be byte-identical to the uninterrupted one"
    );
}

#[test]
fn eval_writes_schema_conforming_report_with_zero_fidelity() {
    let tmp = tempfile::tempdir().unwrap();
    let bench = tmp.path().join("bench");
    gen_bench(&bench);

    // an untrained checkpoint is enough to exercise the metrics plumbing
    let ckpt = tmp.path().join("init.ckpt");
    let model = CompletionModel::new(ModelConfig::desk(), 3).unwrap();
    save_bundle(&ckpt, &model, None).unwrap();

    let report_path = tmp.path().join("report.json");
    let out = run_ok(&[
        "eval",
        "--data",
        bench.to_str().unwrap(),
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--report",
        report_path.to_str().unwrap(),
    ]);

    let report: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    // test split: 5 objects × 24 samples
    assert_eq!(report.n_samples, 120);
    assert_eq!(report.groups.len(), 15); // 5 categories × 3 difficulties
    for g in &report.groups {
        assert_eq!(g.fidelity, 0.0, "{}/{}", g.category, g.difficulty);
    }
    let expect_avg = (report.cd_s + report.cd_m + report.cd_h) / 3.0;
    assert!((report.cd_avg - expect_avg).abs() < 1e-9);

    let result = result_line(&out);
    assert_eq!(result["n_samples"], 120);
    assert!((result["cd_avg"].as_f64().unwrap() - report.cd_avg).abs() < 1e-12);
}

#[test]
fn eval_rejects_shape_mismatched_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let bench = tmp.path().join("bench");
    gen_bench(&bench);

    // desk parameters, but config tensors claiming a narrower model
    let model = CompletionModel::new(ModelConfig::desk(), 3).unwrap();
    let mut narrow = ModelConfig::desk();
    narrow.embed_dim = 48;
    narrow.ffn_hidden = 96;
    let mut map = model.params().to_map();
    map.extend(narrow.to_tensors());
    let ckpt = tmp.path().join("mismatched.ckpt");
    save_checkpoint(&ckpt, &map).unwrap();

    let (code, stderr) = run_code(&[
        "eval",
        "--data",
        bench.to_str().unwrap(),
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--report",
        tmp.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("shape"), "stderr: {stderr}");
}

#[test]
fn complete_appends_missing_region_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let bench = tmp.path().join("bench");
    gen_bench(&bench);

    let ckpt = tmp.path().join("init.ckpt");
    let model = CompletionModel::new(ModelConfig::desk(), 4).unwrap();
    save_bundle(&ckpt, &model, None).unwrap();

    let input = bench.join("eval/sphere_0000_vp0_moderate.xyz");
    let pred = tmp.path().join("pred.xyz");
    let out = run_ok(&[
        "complete",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--in",
        input.to_str().unwrap(),
        "--out",
        pred.to_str().unwrap(),
        "--ply",
    ]);

    let result = result_line(&out);
    // desk: 24 queries × 16 folded points = 384 predicted points
    assert_eq!(result["points_in"], 128);
    assert_eq!(result["points_out"], 128 + 384);

    let input_cloud = load_xyz(&input).unwrap();
    let pred_cloud = load_xyz(&pred).unwrap();
    assert_eq!(pred_cloud.len(), 512);
    for p in input_cloud.iter() {
        let present = pred_cloud.iter().any(|q| {
            (0..3).all(|k| (p[k] - q[k]).abs() <= 1e-4)
        });
        assert!(present, "input point {p:?} missing from completion");
    }

    let ply = pred.with_extension("ply");
    assert!(ply.is_file());
    let first = std::fs::read(&pred).unwrap();
    run_ok(&[
        "complete",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--in",
        input.to_str().unwrap(),
        "--out",
        pred.to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read(&pred).unwrap(), first, "completion must be deterministic");
}

#[test]
fn complete_reports_parse_errors_with_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = tmp.path().join("init.ckpt");
    let model = CompletionModel::new(ModelConfig::desk(), 4).unwrap();
    save_bundle(&ckpt, &model, None).unwrap();

    let bad = tmp.path().join("bad.xyz");
    std::fs::write(&bad, "0.0 0.0 0.0\n1.0 oops 0.0\n").unwrap();
    let (code, stderr) = run_code(&[
        "complete",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--in",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().join("p.xyz").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains(":2"), "expected line number in: {stderr}");
}

#[test]
fn inspect_sums_tensor_counts_and_handles_empty_files() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = tmp.path().join("model.ckpt");
    let model = CompletionModel::new(ModelConfig::desk(), 5).unwrap();
    save_bundle(&ckpt, &model, None).unwrap();

    let out = run_ok(&["inspect", "--ckpt", ckpt.to_str().unwrap()]);
    let result = result_line(&out);
    // params + 14 config scalars
    let expected = model.param_scalars() + 14;
    assert_eq!(result["total_scalars"], expected as u64);

    // per-tensor lines sum to the reported total
    let stdout = String::from_utf8_lossy(&out.stdout);
    let sum: usize = stdout
        .lines()
        .filter(|l| !l.starts_with("RESULT") && l.contains("  "))
        .filter_map(|l| l.rsplit("  ").next()?.trim().parse::<usize>().ok())
        .sum();
    assert_eq!(sum, expected);

    let empty = tmp.path().join("empty.ckpt");
    save_checkpoint(&empty, &BTreeMap::new()).unwrap();
    let out = run_ok(&["inspect", "--ckpt", empty.to_str().unwrap()]);
    let result = result_line(&out);
    assert_eq!(result["tensors"], 0);
    assert_eq!(result["total_scalars"], 0);
}

#[test]
fn non_finite_training_exits_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let bench = tmp.path().join("bench");
    gen_bench(&bench);

    // a checkpoint whose parameters immediately produce a non-finite loss
    let mut model = CompletionModel::new(ModelConfig::desk(), 6).unwrap();
    let id = model.params().id_by_name("folding.stage2.1.b").unwrap();
    model.params_mut().get_mut(id).data_mut()[0] = f32::NAN;
    let opt = AdamW::new(model.params(), 0.0005);
    let poisoned = tmp.path().join("poisoned.ckpt");
    save_bundle(&poisoned, &model, Some(&opt)).unwrap();

    let cfg = tmp.path().join("cfg.json");
    write_config(&cfg, r#"{"train": {"epochs": 1, "batch_size": 4}}"#);
    let (code, stderr) = run_code(&[
        "train",
        "--data",
        bench.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("out.ckpt").to_str().unwrap(),
        "--resume",
        poisoned.to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
    assert!(stderr.contains("step 0"), "stderr: {stderr}");
}

#[test]
fn gen_data_same_seed_same_bytes_different_seed_differs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    for (dir, seed) in [(&a, "11"), (&b, "11"), (&c, "12")] {
        run_ok(&[
            "gen-data",
            "--out",
            dir.to_str().unwrap(),
            "--synthetic",
            "10",
            "--seed",
            seed,
        ]);
    }
    assert_eq!(relative_files(&a), relative_files(&b));
    assert_ne!(relative_files(&a), relative_files(&c));
}
