use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mangocnn::synthetic::{two_class, write_dataset};

const BIN: &str = env!("CARGO_BIN_EXE_mangocnn");
const TINY: &str = "input 8 8 3\nconv 8 3 3 same relu\nmaxpool 2 2\nflatten\ndense 2 softmax\n";

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("MANGOCNN_SEED")
        .output()
        .expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    cfg: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let data = root.join("data");
        write_dataset(&data, &["left", "right"], &two_class(20, 8, 3)).unwrap();
        let cfg = root.join("tiny.cfg");
        std::fs::write(&cfg, TINY).unwrap();
        Fixture {
            _dir: dir,
            root,
            data,
            cfg,
        }
    }

    fn path(&self, name: &str) -> String {
        self.root.join(name).to_string_lossy().into_owned()
    }

    fn s(p: &Path) -> &str {
        p.to_str().unwrap()
    }

    fn train(&self, extra: &[&str]) -> Output {
        let mut args = vec![
            "train",
            "--data",
            Self::s(&self.data),
            "--config",
            Self::s(&self.cfg),
            "--epochs",
            "3",
            "--batch-size",
            "8",
        ];
        args.extend_from_slice(extra);
        run(&args)
    }
}

#[test]
fn params_accepts_bundled_names_with_or_without_extension() {
    for name in ["gournet", "gournet.cfg"] {
        let o = run(&["params", "--config", name]);
        assert!(o.status.success());
        assert!(
            stdout(&o).contains("total/trainable: 683,656/683,656"),
            "{}",
            stdout(&o)
        );
    }
}

#[test]
fn usage_and_config_errors_exit_1() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["params"]).status.code(), Some(1));
    let o = run(&["params", "--config", "no-such-model"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
}

#[test]
fn invalid_hyperparameters_exit_1() {
    let f = Fixture::new();
    let out = f.path("m.gnck");
    assert_eq!(
        f.train(&["--out", &out, "--batch-size", "0"]).status.code(),
        Some(1)
    );
    assert_eq!(
        f.train(&["--out", &out, "--lr", "-0.1"]).status.code(),
        Some(1)
    );
}

#[test]
fn missing_data_exits_2() {
    let f = Fixture::new();
    let o = run(&[
        "train",
        "--data",
        &f.path("nowhere"),
        "--config",
        Fixture::s(&f.cfg),
        "--out",
        &f.path("m.gnck"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn checkpoint_for_another_model_exits_2() {
    let f = Fixture::new();
    let ck = f.path("m.gnck");
    assert!(f.train(&["--out", &ck]).status.success());
    let other = f.path("other.cfg");
    std::fs::write(&other, TINY.replace("conv 8", "conv 6")).unwrap();
    let o = run(&[
        "evaluate",
        "--data",
        Fixture::s(&f.data),
        "--config",
        &other,
        "--checkpoint",
        &ck,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("shape mismatch"));
}

#[test]
fn test_split_is_only_read_by_evaluate_on_test() {
    let f = Fixture::new();
    let ck = f.path("m.gnck");
    let log = f.path("access.log");
    let manifest = f.path("split.csv");
    assert!(f
        .train(&["--out", &ck, "--access-log", &log, "--manifest", &manifest])
        .status
        .success());

    let test_paths: Vec<String> = std::fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .filter(|l| l.ends_with(",test"))
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(test_paths.len(), 4);
    let read = |p: &str| std::fs::read_to_string(p).unwrap();
    let touched_test = |logged: &str| {
        logged
            .lines()
            .filter(|l| test_paths.iter().any(|t| l.ends_with(t.as_str())))
            .count()
    };

    assert_eq!(touched_test(&read(&log)), 0);
    let eval = |split: &str| {
        run(&[
            "evaluate",
            "--data",
            Fixture::s(&f.data),
            "--config",
            Fixture::s(&f.cfg),
            "--checkpoint",
            &ck,
            "--manifest",
            &manifest,
            "--split",
            split,
            "--access-log",
            &log,
        ])
    };
    let o = eval("val");
    assert!(o.status.success());
    assert!(
        stdout(&o).starts_with("val split: 4 samples"),
        "{}",
        stdout(&o)
    );
    assert_eq!(touched_test(&read(&log)), 0);
    assert!(eval("test").status.success());
    assert_eq!(touched_test(&read(&log)), 4);
}

#[test]
fn predict_prints_a_distribution_over_class_names() {
    let f = Fixture::new();
    let ck = f.path("m.gnck");
    assert!(f.train(&["--out", &ck]).status.success());
    let image = f.data.join("left").join("0_0000.ppm");
    let o = run(&[
        "predict",
        "--config",
        Fixture::s(&f.cfg),
        "--checkpoint",
        &ck,
        "--image",
        Fixture::s(&image),
        "--data",
        Fixture::s(&f.data),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<(f64, String)> = stdout(&o)
        .lines()
        .map(|l| {
            let (p, name) = l.split_once("  ").unwrap();
            (p.parse().unwrap(), name.to_string())
        })
        .collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].0 >= rows[1].0);
    let mut names: Vec<&str> = rows.iter().map(|r| r.1.as_str()).collect();
    names.sort_unstable();
    assert_eq!(names, ["left", "right"]);
    assert!((rows.iter().map(|r| r.0).sum::<f64>() - 1.0).abs() < 1e-5);
}

#[test]
fn predict_on_unreadable_image_exits_2() {
    let f = Fixture::new();
    let ck = f.path("m.gnck");
    assert!(f.train(&["--out", &ck]).status.success());
    let junk = f.path("junk.jpg");
    std::fs::write(&junk, b"not an image").unwrap();
    let o = run(&[
        "predict",
        "--config",
        Fixture::s(&f.cfg),
        "--checkpoint",
        &ck,
        "--image",
        &junk,
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_can_come_from_the_environment() {
    let f = Fixture::new();
    let go = |hist: &str, ck: &str, env: bool| {
        let mut args = vec![
            "train".to_string(),
            "--data".into(),
            Fixture::s(&f.data).into(),
            "--config".into(),
            Fixture::s(&f.cfg).into(),
            "--epochs".into(),
            "3".into(),
            "--out".into(),
            f.path(ck),
            "--history".into(),
            f.path(hist),
            "--manifest".into(),
            f.path(&format!("{hist}.split")),
        ];
        let mut cmd = Command::new(BIN);
        if env {
            cmd.env("MANGOCNN_SEED", "9");
        } else {
            cmd.env_remove("MANGOCNN_SEED");
            args.extend(["--seed".into(), "9".into()]);
        }
        assert!(cmd.args(&args).output().unwrap().status.success());
        std::fs::read(f.path(hist)).unwrap()
    };
    assert_eq!(go("a.csv", "a.gnck", true), go("b.csv", "b.gnck", false));
    assert_eq!(
        std::fs::read(f.path("a.gnck")).unwrap(),
        std::fs::read(f.path("b.gnck")).unwrap()
    );
}

#[test]
fn split_writes_manifest_and_counts() {
    let f = Fixture::new();
    let m = f.path("m.csv");
    let o = run(&[
        "split",
        "--data",
        Fixture::s(&f.data),
        "--seed",
        "1",
        "--manifest",
        &m,
    ]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o),
        "left: train 16  val 2  test 2\nright: train 16  val 2  test 2\n"
    );
    let first = std::fs::read(&m).unwrap();
    run(&[
        "split",
        "--data",
        Fixture::s(&f.data),
        "--seed",
        "1",
        "--manifest",
        &m,
    ]);
    assert_eq!(std::fs::read(&m).unwrap(), first);
}

#[test]
fn train_writes_history_and_curves() {
    let f = Fixture::new();
    let hist = f.path("h.csv");
    let svg = f.path("c.svg");
    let o = f.train(&[
        "--out",
        &f.path("m.gnck"),
        "--history",
        &hist,
        "--curves",
        &svg,
    ]);
    assert!(o.status.success());
    let h = std::fs::read_to_string(&hist).unwrap();
    assert!(h.starts_with("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n"));
    assert_eq!(h.lines().count(), 4);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("val-loss"));
    assert_eq!(
        stdout(&o)
            .lines()
            .filter(|l| l.starts_with("epoch"))
            .count(),
        3
    );
}
