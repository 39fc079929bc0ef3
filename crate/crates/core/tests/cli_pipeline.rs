use std::path::{Path, PathBuf};
use std::process::Command as Process;

use sap_unlearn::cli::{
    boundary, cmd_corrupt, cmd_finetune, cmd_run, cmd_sweep, load_splits, read_csv, read_manifest,
    retain_indices, sweep, train_vanilla, verify_run, ExperimentConfig, GridSpec, MetricsRecord,
    NoiseSpec, Stage, SweepParam, SweepRow, METRICS_FILE, SAP_CKPT, VANILLA_CKPT,
};
use sap_unlearn::data::{load_checkpoint, spiral, LabeledDataset};
use sap_unlearn::linalg::{Matrix, TensorShape};
use sap_unlearn::nn::{argmax, Architecture, Dense, Layer, Model};
use sap_unlearn::sap::{sap, SapConfig};
use sap_unlearn::Error;

const TINY: &str = r#"{
  "seed": 3,
  "dataset": {"kind": "spiral", "n_per_class": 60, "test_per_class": 200},
  "model": {"kind": "mlp", "hidden": [16, 16]},
  "noise": {"kind": "symmetric", "eta": 0.1},
  "train": {"learning_rate": 0.05, "momentum": 0.9, "nesterov": true, "batch_size": 32, "epochs": 25},
  "sap": {"n_trust": 60, "alpha_grid": [10, 100, 1000, 30000]},
  "retrain": true,
  "finetune": {"retain_fraction": 0.5, "train": {"epochs": 3, "batch_size": 32}}
}"#;

fn tiny(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_json(TINY).unwrap();
    c.output_dir = dir.to_path_buf();
    c
}

fn metrics(dir: &Path) -> Vec<MetricsRecord> {
    read_csv(&dir.join(METRICS_FILE)).unwrap()
}

fn without_wall_time(rows: Vec<MetricsRecord>) -> Vec<MetricsRecord> {
    rows.into_iter()
        .map(|mut r| {
            r.wall_time_s = 0.0;
            r
        })
        .collect()
}

#[test]
fn run_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cmd_run(&tiny(&a)).unwrap();
    cmd_run(&tiny(&b)).unwrap();

    let rows = metrics(&a);
    let stages: Vec<Stage> = rows.iter().map(|r| r.stage).collect();
    assert_eq!(
        stages,
        [Stage::Vanilla, Stage::Retrain, Stage::Finetune, Stage::Sap]
    );
    for r in &rows {
        for acc in [r.train_accuracy, r.val_accuracy, r.test_accuracy] {
            assert!((0.0..=1.0).contains(&acc));
        }
    }
    let sap_row = rows.iter().find(|r| r.stage == Stage::Sap).unwrap();
    assert!(sap_row.purity.is_some());
    assert!([10.0, 100.0, 1000.0, 30000.0].contains(&sap_row.alpha.unwrap()));

    assert!(verify_run(&a).unwrap().is_empty());
    let manifest = read_manifest(&a).unwrap();
    assert_eq!(manifest.config_digest, tiny(&a).digest());
    assert_eq!(manifest.artifacts.len(), 5);

    for name in [VANILLA_CKPT, SAP_CKPT, "retrain.ckpt", "finetune.ckpt"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(
        without_wall_time(metrics(&a)),
        without_wall_time(metrics(&b))
    );
}

#[test]
fn noiseless_run_matches_retrain() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = tiny(tmp.path());
    c.noise = NoiseSpec::None;
    c.finetune = None;
    cmd_run(&c).unwrap();
    let rows = metrics(tmp.path());
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].test_accuracy, rows[1].test_accuracy);
    assert_eq!(rows[2].purity, Some(1.0));
}

#[test]
fn tampering_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = tiny(tmp.path());
    c.retrain = false;
    c.finetune = None;
    cmd_run(&c).unwrap();
    let path = tmp.path().join(SAP_CKPT);
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    let problems = verify_run(tmp.path()).unwrap();
    assert_eq!(problems.len(), 1, "{problems:?}");
    assert!(problems[0].contains(SAP_CKPT));

    let mut m = read_manifest(tmp.path()).unwrap();
    m.config.seed += 1;
    std::fs::write(
        tmp.path().join("manifest.json"),
        serde_json::to_string(&m).unwrap(),
    )
    .unwrap();
    assert!(verify_run(tmp.path())
        .unwrap()
        .iter()
        .any(|p| p.contains("config digest")));
}

#[test]
fn alpha_sweep_reuses_decomposition() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tiny(tmp.path());
    let splits = load_splits(&c).unwrap();
    let (vanilla, _) = train_vanilla(&c, &splits).unwrap();
    let values = [1.0, 50.0, 2e3, 1e5];
    let rows = sweep(&c, &vanilla, &splits, SweepParam::Alpha, &values).unwrap();
    assert_eq!(rows.len(), values.len());
    for (row, &alpha) in rows.iter().zip(&values) {
        let cfg = SapConfig {
            alpha,
            n_trust: c.sap.n_trust,
            patch_cap: c.sap.patch_cap,
        };
        let full = sap(&vanilla, &splits.train, &cfg).unwrap();
        let e = sap_unlearn::nn::evaluate(&full.model, &splits.test).unwrap();
        assert!((row.test_accuracy - e.accuracy).abs() <= 1e-10);
        assert!((row.test_loss - e.loss).abs() <= 1e-10);
    }
    let trust = sweep(
        &c,
        &vanilla,
        &splits,
        SweepParam::NTrust,
        &[10.0, 100.0, 1000.0],
    )
    .unwrap();
    assert_eq!(trust.len(), 3);
    assert_eq!(trust[0].n_trust, 10);
    assert!(matches!(
        sweep(&c, &vanilla, &splits, SweepParam::Alpha, &[]),
        Err(Error::Validation(_))
    ));
    assert!(sweep(&c, &vanilla, &splits, SweepParam::NTrust, &[2.5]).is_err());
}

#[test]
fn sweep_command_keeps_the_run_vanilla() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = tiny(tmp.path());
    c.retrain = false;
    c.finetune = None;
    cmd_run(&c).unwrap();
    let before = std::fs::read(tmp.path().join(VANILLA_CKPT)).unwrap();
    let manifest = std::fs::read(tmp.path().join("manifest.json")).unwrap();
    let mut swept = c.clone();
    swept.sap.alpha = 77.0;
    cmd_sweep(&swept, SweepParam::Alpha, &[10.0, 1000.0]).unwrap();
    assert_eq!(
        std::fs::read(tmp.path().join(VANILLA_CKPT)).unwrap(),
        before
    );
    assert_eq!(
        std::fs::read(tmp.path().join("manifest.json")).unwrap(),
        manifest
    );
    let rows: Vec<SweepRow> = read_csv(&tmp.path().join("sweep_alpha.csv")).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.value).collect::<Vec<_>>(),
        [10.0, 1000.0]
    );
}

fn zero_model() -> Model {
    Model::new(
        TensorShape::flat(2),
        2,
        vec![Layer::Dense(Dense {
            weight: Matrix::zeros(2, 2),
            bias: vec![0.0, 1.0],
        })],
    )
    .unwrap()
}

#[test]
fn boundary_grid() {
    let grid = GridSpec {
        xmin: 0.0,
        xmax: 1.0,
        ymin: 0.0,
        ymax: 1.0,
        res: 3,
    };
    let pts = boundary(&zero_model(), &grid).unwrap();
    assert_eq!(pts.len(), 9);
    assert!(pts.iter().all(|p| p.class == 1));
    assert_eq!((pts[5].x, pts[5].y), (1.0, 0.5));

    let d = spiral(40, 0.05, 0).unwrap();
    let m = Model::init(&Architecture::mlp(2, &[8], 2, false), 4).unwrap();
    let m = sap_unlearn::nn::train(&m, &d, &Default::default())
        .unwrap()
        .0;
    let wide = GridSpec {
        xmin: -1.2,
        xmax: 1.2,
        ymin: -1.2,
        ymax: 1.2,
        res: 25,
    };
    for p in boundary(&m, &wide).unwrap() {
        let logits = m
            .logits(&Matrix::new(1, 2, vec![p.x, p.y]).unwrap())
            .unwrap();
        assert_eq!(p.class, argmax(logits.row(0)));
    }
    let flat3 = Model::init(&Architecture::mlp(3, &[4], 2, false), 0).unwrap();
    assert!(matches!(boundary(&flat3, &grid), Err(Error::Validation(_))));
}

#[test]
fn finetune_command() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = tiny(tmp.path());
    c.retrain = false;
    c.finetune = None;
    cmd_run(&c).unwrap();
    let ckpt = tmp.path().join(VANILLA_CKPT);
    let vanilla = load_checkpoint(&ckpt).unwrap().model;

    let mut zero = tiny(&tmp.path().join("zero"));
    zero.finetune.as_mut().unwrap().train.epochs = 0;
    cmd_finetune(&ckpt, &zero).unwrap();
    let out = load_checkpoint(&zero.output_dir.join("finetune.ckpt"))
        .unwrap()
        .model;
    assert_eq!(out, vanilla);
    let rows: Vec<MetricsRecord> = read_csv(&zero.output_dir.join("finetune_metrics.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].stage, Stage::Finetune);

    let x = tiny(&tmp.path().join("x"));
    let y = tiny(&tmp.path().join("y"));
    cmd_finetune(&ckpt, &x).unwrap();
    cmd_finetune(&ckpt, &y).unwrap();
    let read = |p: PathBuf| std::fs::read(p.join("finetune.ckpt")).unwrap();
    assert_eq!(read(x.output_dir.clone()), read(y.output_dir.clone()));
    assert_ne!(
        load_checkpoint(&x.output_dir.join("finetune.ckpt"))
            .unwrap()
            .model,
        vanilla
    );

    let mut none = tiny(tmp.path());
    none.finetune = None;
    assert!(matches!(
        cmd_finetune(&ckpt, &none),
        Err(Error::Validation(_))
    ));
}

#[test]
fn empty_retain_set_is_rejected() {
    let d = spiral(5, 0.0, 0).unwrap();
    let flipped: Vec<usize> = d.labels().iter().map(|&y| 1 - y).collect();
    let d = d.relabeled(flipped).unwrap();
    let m = Model::init(&Architecture::mlp(2, &[4], 2, false), 0).unwrap();
    assert!(matches!(
        retain_indices(&m, &d, 0.5, 0),
        Err(Error::Validation(_))
    ));
    let unlabeled =
        LabeledDataset::new(d.samples().clone(), d.shape(), d.labels().to_vec(), None, 2).unwrap();
    assert_eq!(retain_indices(&m, &unlabeled, 0.3, 0).unwrap().len(), 3);
}

#[test]
fn corrupt_exports_csv() {
    let tmp = tempfile::tempdir().unwrap();
    cmd_corrupt(&tiny(tmp.path())).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("corrupted.csv")).unwrap();
    assert!(text.starts_with("x0,x1,label,true_label\n"));
    assert_eq!(text.lines().count(), 121);
    let back = LabeledDataset::load_csv(&tmp.path().join("corrupted.csv"), 2).unwrap();
    assert_eq!(back.len(), 120);
    assert!(back.noise_rate().unwrap() > 0.0);
}

fn sap_bin() -> Process {
    let mut p = Process::new(env!("CARGO_BIN_EXE_sap"));
    p.env_remove("UNLEARN_SEED");
    p
}

#[test]
fn binary_reports_config_errors_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(
        &path,
        "{\n  \"dataset\": {\"kind\": \"spiral\"},\n  \"modle\": {}\n}\n",
    )
    .unwrap();
    let out = sap_bin()
        .args(["run", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn binary_seed_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, TINY).unwrap();
    let export = |dir: &str, env: Option<&str>, flag: Option<&str>| {
        let mut p = sap_bin();
        p.args(["corrupt", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(tmp.path().join(dir));
        if let Some(e) = env {
            p.env("UNLEARN_SEED", e);
        }
        if let Some(f) = flag {
            p.args(["--seed", f]);
        }
        let out = p.output().unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(tmp.path().join(dir).join("corrupted.csv")).unwrap()
    };
    let file = export("file", None, None);
    let env = export("env", Some("11"), None);
    let flag = export("flag", Some("11"), Some("3"));
    let env_again = export("env2", None, Some("11"));
    assert_ne!(file, env);
    assert_eq!(flag, file);
    assert_eq!(env, env_again);
}

#[test]
fn binary_eval_and_boundary() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = tiny(tmp.path());
    c.retrain = false;
    c.finetune = None;
    cmd_run(&c).unwrap();
    let ckpt = tmp.path().join(SAP_CKPT);
    let out = sap_bin()
        .args(["eval", "--ckpt"])
        .arg(&ckpt)
        .args(["--data", "spiral:30"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let e: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(e["total"], 60);

    let grid = tmp.path().join("grid.csv");
    let out = sap_bin()
        .args(["boundary", "--ckpt"])
        .arg(&ckpt)
        .args([
            "--xmin", "-1", "--xmax", "1", "--ymin", "-1", "--ymax", "1", "--res", "4", "--out",
        ])
        .arg(&grid)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&grid).unwrap();
    assert!(text.starts_with("x,y,class\n"));
    assert_eq!(text.lines().count(), 17);

    let out = sap_bin()
        .args(["eval", "--ckpt"])
        .arg(&ckpt)
        .args(["--data", "blob:3"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
