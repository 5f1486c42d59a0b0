use std::fs;
use std::path::Path;
use std::process::Command;

use cpsize::dataio::SyntheticKind;
use cpsize::learners::{LearnerKind, TrainConfig};
use cpsize_harness::experiment::point_path;
use cpsize_harness::{read_records, render_report, run_sweep, run_trial, DataSource, ExperimentConfig, Task};

fn small(task: Task, out: &Path) -> ExperimentConfig {
    let generator = match task {
        Task::Classification => SyntheticKind::Classification {
            k: 4,
            d: 3,
            separation: 4.0,
        },
        Task::Regression => SyntheticKind::Regression {
            d: 2,
            noise: 0.05,
            lo: 0.0,
            hi: 1.0,
        },
    };
    ExperimentConfig {
        task,
        data: DataSource::Synthetic { generator },
        train: TrainConfig {
            learner: LearnerKind::Logistic,
            hidden: vec![],
            epochs: 10,
            ensemble_size: 2,
            ..TrainConfig::default()
        },
        n_tr: vec![30, 60],
        n_cal: vec![20, 40],
        alpha: vec![0.1, 0.3],
        delta: 0.1,
        slack_mode: Default::default(),
        tail_mode: Default::default(),
        n_trials: 3,
        n_test: 50,
        seed: 11,
        out_dir: out.to_path_buf(),
        c: 1.0,
        p: 1.0,
        per_point_draws: true,
    }
}

#[test]
fn config_files_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["classification.toml", "regression.toml"] {
        let cfg = ExperimentConfig::load(&root.join(name)).unwrap();
        assert_eq!(cfg.grid().len(), cfg.n_tr.len() * cfg.n_cal.len() * cfg.alpha.len());
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/classification.toml");
    let text = fs::read_to_string(root).unwrap().replace("n_trials = 20", "n_trials = 20\nn_trails = 3");
    fs::write(&path, text).unwrap();
    assert!(ExperimentConfig::load(&path).is_err());
}

#[test]
fn trial_is_deterministic_and_in_range() {
    let dir = tempfile::tempdir().unwrap();
    for task in [Task::Classification, Task::Regression] {
        let cfg = small(task, dir.path());
        for point in cfg.grid() {
            let a = run_trial(&cfg, &point, 1).unwrap();
            let b = run_trial(&cfg, &point, 1).unwrap();
            assert!(a.same_result(&b), "{a:?} vs {b:?}");
            for v in [a.coverage, a.mean_size_norm, a.bound_thm1, a.bound_cls_or_reg, a.bound_cor1] {
                assert!((0.0..=1.0).contains(&v), "{a:?}");
            }
        }
    }
}

#[test]
fn sweep_cardinality_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Task::Classification, &dir.path().join("a"));
    let full = run_sweep(&cfg).unwrap();
    assert_eq!(full.records.len(), cfg.grid().len() * cfg.n_trials);
    assert_eq!(full.computed.len(), cfg.grid().len());
    assert_eq!(read_records(&full.records_path).unwrap().len(), full.records.len());

    // Interrupt: drop two finished points and truncate a third.
    let grid = cfg.grid();
    fs::remove_file(point_path(&cfg.out_dir, &grid[0])).unwrap();
    fs::remove_file(point_path(&cfg.out_dir, &grid[5])).unwrap();
    let p3 = point_path(&cfg.out_dir, &grid[3]);
    let text = fs::read_to_string(&p3).unwrap();
    fs::write(&p3, text.lines().take(2).collect::<Vec<_>>().join("\n")).unwrap();
    fs::remove_file(&full.records_path).unwrap();

    let resumed = run_sweep(&cfg).unwrap();
    assert_eq!(resumed.computed.len(), 3);
    assert_eq!(resumed.records.len(), full.records.len());
    for (a, b) in full.records.iter().zip(&resumed.records) {
        assert!(a.same_result(b), "{a:?} vs {b:?}");
    }

    let again = run_sweep(&cfg).unwrap();
    assert!(again.computed.is_empty());
}

#[test]
fn sweep_matches_single_trials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Task::Regression, dir.path());
    let out = run_sweep(&cfg).unwrap();
    let point = cfg.grid()[6];
    let rec = out
        .records
        .iter()
        .find(|r| r.n_tr == point.n_tr && r.n_cal == point.n_cal && r.alpha == point.alpha && r.seed == out.records[1].seed)
        .unwrap();
    assert!(rec.same_result(&run_trial(&cfg, &point, 1).unwrap()));
}

#[test]
fn separable_classification_gives_singletons() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Task::Classification, dir.path());
    cfg.data = DataSource::Synthetic {
        generator: SyntheticKind::Classification {
            k: 4,
            d: 2,
            separation: 60.0,
        },
    };
    cfg.train.epochs = 40;
    cfg.n_tr = vec![200];
    cfg.n_cal = vec![50];
    cfg.alpha = vec![0.1];
    let r = run_trial(&cfg, &cfg.grid()[0], 0).unwrap();
    assert_eq!(r.coverage, 1.0);
    assert_eq!(r.mean_size_norm, 0.25);
}

#[test]
fn report_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Task::Classification, &dir.path().join("run"));
    let out = run_sweep(&cfg).unwrap();
    let a = render_report(&out.records_path, &dir.path().join("r1"), "t").unwrap();
    let b = render_report(&out.records_path, &dir.path().join("r2"), "t").unwrap();
    assert_eq!(fs::read(&a.svg).unwrap(), fs::read(&b.svg).unwrap());
    assert_eq!(fs::read(&a.markdown).unwrap(), fs::read(&b.markdown).unwrap());
    assert!(fs::read_to_string(&a.svg).unwrap().starts_with("<svg"));
}

#[test]
fn report_rejects_empty_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    fs::write(&path, "").unwrap();
    assert!(render_report(&path, dir.path(), "t").is_err());
}

#[test]
fn cli_bound_and_report() {
    let bin = env!("CARGO_BIN_EXE_cpsize");
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.json");
    fs::write(
        &q,
        r#"{"kind": "classification", "p_tr_hat": 0.95, "k": 10, "n_cal": 100, "alpha": 0.1,
            "slack": {"mode": "oracle_zero"}, "n_tr": 500}"#,
    )
    .unwrap();
    let out = Command::new(bin).args(["bound", "--query"]).arg(&q).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let b = v["normalized_bound"].as_f64().unwrap();
    assert!((b - 0.21410).abs() < 1e-4, "{b}");

    let out = Command::new(bin)
        .args(["report", "--records"])
        .arg(dir.path().join("missing.csv"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}
