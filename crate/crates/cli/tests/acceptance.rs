//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p mangocnn-cli --test acceptance`. Set `MBD_ROOT` to
//! a MangoLeafBD checkout to run the desk-scale criterion on real images;
//! otherwise a procedurally generated eight-class proxy is used and the line
//! says so.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use mangocnn::config::{bundled, parse_config};
use mangocnn::data::{stratified_split, Dataset, Sample};
use mangocnn::gradcheck;
use mangocnn::layers::{softmax, Param};
use mangocnn::optim::{adam_step, AdamConfig, AdamState, EarlyStopping, StopDecision};
use mangocnn::preprocess::ImageTensor;
use mangocnn::solver::{solve_config, Family, Member};
use mangocnn::synthetic::{leaf_proxy, two_class, write_dataset, LEAF_CLASSES};
use mangocnn::train::{parse_history_csv, run_training, EpochRecord, TrainJob, TrainingConfig};
use mangocnn::{AugmentPolicy, Checkpoint, Error, ModelConfig, Rng, Sequential, Tensor};

const BIN: &str = env!("CARGO_BIN_EXE_mangocnn");

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn fail(detail: impl std::fmt::Display) -> Outcome {
    outcome(false, detail.to_string())
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().expect("spawn cli");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const TINY_CFG: &str = "input 8 8 3\nconv 8 3 3 same relu\nmaxpool 2 2\nflatten\ndense 2 softmax\n";

fn write_two_class(root: &Path) -> mangocnn::Result<()> {
    write_dataset(root, &["left", "right"], &two_class(32, 8, 5))
}

// 1 ---------------------------------------------------------------------------

fn softmax_example() -> Outcome {
    let z = [2.5, -1.2, 4.1, 0.8, -0.3, 3.7, 1.9, -2.0];
    let exps_ref = [12.182, 0.301, 60.340, 2.226, 0.741, 40.447, 6.686, 0.135];
    let probs_ref = [0.098, 0.002, 0.491, 0.018, 0.006, 0.329, 0.054, 0.001];
    let t = Tensor::<f64>::from_vec(&[1, 8], z.to_vec()).unwrap();
    let exps = t.exp();
    let p = softmax(&t);
    let exp_err = exps
        .data()
        .iter()
        .zip(exps_ref)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let p_err = p
        .data()
        .iter()
        .zip(probs_ref)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let arg = mangocnn::layers::argmax(p.data());
    outcome(
        exp_err < 1e-3 && p_err < 5e-3 && arg == 2,
        format!(
            "max|exp−ref| {exp_err:.2e} (tol 1e-3), max|p−ref| {p_err:.2e} (tol 5e-3), argmax {arg}, top p {:.4}",
            p.data()[2]
        ),
    )
}

// 2 ---------------------------------------------------------------------------

fn table_four() -> Outcome {
    let want = [
        ("vgg16-8.cfg", "134,293,320/134,293,320"),
        ("alexnet-bn-8.cfg", "58,319,624/58,316,872"),
    ];
    let mut details = Vec::new();
    let mut ok = true;
    for (cfg, expected) in want {
        let (code, out, err) = cli(&["params", "--config", cfg]);
        let line = out
            .lines()
            .find_map(|l| l.strip_prefix("total/trainable: "))
            .unwrap_or("<missing>")
            .to_string();
        ok &= code == 0 && line == expected;
        details.push(format!(
            "{cfg} → {line}{}",
            if code == 0 { "" } else { &err }
        ));
    }
    outcome(ok, details.join("; "))
}

// 3 ---------------------------------------------------------------------------

fn gournet_target() -> Outcome {
    let t0 = Instant::now();
    let (code, out, _) = cli(&["solve-config", "--target", "683656"]);
    if code != 0 {
        return fail(format!("solve-config exited {code}"));
    }
    let family = Family::default();
    let search = solve_config(683_656, &family);
    let shipped = parse_config(bundled("gournet.cfg").unwrap()).unwrap();
    let totals = shipped.audit().unwrap().totals;
    let shipped_ok = totals.total == 683_656 && totals.trainable == 683_656;
    let first_is_shipped = search.configs.first() == Some(&shipped);
    let log_complete = out.contains("search complete");

    let mut rng = Rng::new(20_240_683);
    let mut fixtures = 0;
    let mut missing = 0;
    while fixtures < 100 {
        let blocks = family.min_blocks
            + rng.below((family.max_blocks - family.min_blocks + 1) as u64) as usize;
        let filters: Vec<usize> = std::iter::once(family.first_filters)
            .chain((1..blocks).map(|_| {
                family.filter_choices[rng.below(family.filter_choices.len() as u64) as usize]
            }))
            .collect();
        let member = Member {
            filters,
            padding: family.paddings[rng.below(family.paddings.len() as u64) as usize],
            units: family.min_units
                + rng.below((family.max_units - family.min_units + 1) as u64) as usize,
        };
        let Ok(report) = member.to_config(&family).audit() else {
            continue;
        };
        fixtures += 1;
        if !solve_config(report.totals.total, &family)
            .members
            .contains(&member)
        {
            missing += 1;
        }
    }
    let elapsed = t0.elapsed();
    outcome(
        !search.members.is_empty() && shipped_ok && first_is_shipped && log_complete && missing == 0 && elapsed < Duration::from_secs(300),
        format!(
            "{} solutions, shipped gournet.cfg audits {}/{} and is the first; round-trip fixtures {}/{} recovered; {:.1?}",
            search.members.len(),
            totals.total,
            totals.trainable,
            fixtures - missing,
            fixtures,
            elapsed
        ),
    )
}

// 4 ---------------------------------------------------------------------------

fn gradients() -> Outcome {
    let t0 = Instant::now();
    let n = 25;
    let checks = [
        ("conv2d", gradcheck::check_conv2d(n, 1)),
        ("dense", gradcheck::check_dense(n, 2)),
        ("relu", gradcheck::check_relu(n, 3)),
        ("maxpool", gradcheck::check_maxpool(n, 4)),
        ("softmax+ce", gradcheck::check_softmax_ce(n, 5)),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, r) in checks {
        match r {
            Ok(r) => {
                ok &= r.instances >= 20 && r.max_rel_error < 1e-4;
                parts.push(format!("{name} {:.1e}", r.max_rel_error));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{name} error: {e}"));
            }
        }
    }
    let elapsed = t0.elapsed();
    outcome(
        ok && elapsed < Duration::from_secs(120),
        format!(
            "{n} instances each, max rel. error (tol 1e-4): {}; {elapsed:.1?}",
            parts.join(", ")
        ),
    )
}

// 5 ---------------------------------------------------------------------------

fn adam_trace(grads: &[f64]) -> Vec<f64> {
    let cfg = AdamConfig::default();
    let mut p = Param::new("p".into(), Tensor::<f64>::scalar(1.0));
    let mut state = AdamState::new();
    grads
        .iter()
        .map(|&g| {
            p.grad = Tensor::scalar(g);
            adam_step(&mut [&mut p], &mut state, &cfg).unwrap();
            p.value.data()[0]
        })
        .collect()
}

fn adam() -> Outcome {
    let (lr, b1, b2, eps): (f64, f64, f64, f64) = (0.001, 0.9, 0.999, 1e-7);
    let (g1, g2): (f64, f64) = (0.3, -0.7);
    let m1 = (1.0 - b1) * g1;
    let v1 = (1.0 - b2) * g1 * g1;
    let p1 = 1.0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
    let m2 = b1 * m1 + (1.0 - b1) * g2;
    let v2 = b2 * v1 + (1.0 - b2) * g2 * g2;
    let p2 = p1 - lr * (m2 / (1.0 - b1.powi(2))) / ((v2 / (1.0 - b2.powi(2))).sqrt() + eps);
    let got = adam_trace(&[g1, g2]);
    let trace_err = (got[0] - p1).abs().max((got[1] - p2).abs());

    let constant = adam_trace(&[0.25; 1000]);
    let step = (constant[999] - constant[998]).abs();
    let rel = (step - lr).abs() / lr;
    outcome(
        trace_err < 1e-9 && rel <= 0.01,
        format!("two-step trace error {trace_err:.1e} (tol 1e-9); step at t=1000 = {step:.6e}, {:.3}% from lr", 100.0 * rel),
    )
}

// 6 ---------------------------------------------------------------------------

fn early_stopping() -> Outcome {
    let run = |losses: &[f64]| {
        let mut es = EarlyStopping::<()>::new(3);
        let mut counters = Vec::new();
        let mut stopped_at = None;
        for (i, &l) in losses.iter().enumerate() {
            let d = es.update(l, || ());
            counters.push(es.epochs_since_improvement());
            if d == StopDecision::Stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        (counters, stopped_at, es.best_epoch())
    };
    let a = run(&[1.0, 1.1, 1.2, 1.3]);
    let b = run(&[1.0, 0.9, 1.0, 1.0, 0.85]);
    let ok = a == (vec![0, 1, 2, 3], Some(4), 1) && b == (vec![0, 0, 1, 2, 0], None, 5);
    outcome(
        ok,
        format!(
            "rising: counters {:?}, stop after epoch {:?}, best epoch {}; reset: counters {:?}, stop {:?}, best epoch {}",
            a.0, a.1, a.2, b.0, b.1, b.2
        ),
    )
}

// 7 ---------------------------------------------------------------------------

fn split() -> Outcome {
    let ds = Dataset {
        root: PathBuf::from("."),
        class_names: vec!["a".into(), "b".into()],
        samples: (0..500)
            .map(|i| Sample {
                path: format!("a/{i:04}.jpg"),
                class_index: 0,
            })
            .chain((0..501).map(|i| Sample {
                path: format!("b/{i:04}.jpg"),
                class_index: 1,
            }))
            .collect(),
    };
    let m = stratified_split(&ds, 42);
    let counts = m.per_class_counts();
    let mut paths: Vec<&str> = m.entries.iter().map(|e| e.sample.path.as_str()).collect();
    paths.sort_unstable();
    let mut want: Vec<&str> = ds.samples.iter().map(|s| s.path.as_str()).collect();
    want.sort_unstable();
    let partition = paths == want;
    let same = stratified_split(&ds, 42).to_csv() == m.to_csv();
    outcome(
        counts == vec![[400, 50, 50], [401, 50, 50]] && partition && same,
        format!(
            "500 → {:?}, 501 → {:?}; partition {partition}; same seed byte-identical {same}",
            counts[0], counts[1]
        ),
    )
}

// 8 ---------------------------------------------------------------------------

fn desk_two_class(dir: &Path) -> (bool, String) {
    let root = dir.join("two");
    if let Err(e) = write_two_class(&root) {
        return (false, format!("fixture: {e}"));
    }
    let mut ok = true;
    let mut firsts = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in 0..5 {
        let job = TrainJob {
            data_root: root.clone(),
            model: parse_config(TINY_CFG).unwrap(),
            training: TrainingConfig {
                max_epochs: 20,
                seed,
                augment: AugmentPolicy::none(),
                ..TrainingConfig::default()
            },
            manifest: Some(dir.join(format!("two-{seed}.csv"))),
            checkpoint_out: None,
            history_out: None,
            curves_out: None,
        };
        let t0 = Instant::now();
        match run_training(&job, |_| {}) {
            Ok(r) => {
                slowest = slowest.max(t0.elapsed());
                let first = r
                    .outcome
                    .history
                    .iter()
                    .find(|e| e.train_accuracy == 1.0)
                    .map(|e| e.epoch);
                ok &= first.is_some();
                firsts.push(first.map_or("never".to_string(), |e| e.to_string()));
            }
            Err(e) => return (false, format!("2-class run failed: {e}")),
        }
    }
    (
        ok && slowest < Duration::from_secs(30),
        format!(
            "2-class 8×8, seeds 0-4: train acc 1.0 first at epochs [{}], slowest run {slowest:.1?}",
            firsts.join(", ")
        ),
    )
}

/// At most one non-decreasing step, and that one no larger than 1e-4.
fn strictly_decreasing(losses: &[f64]) -> bool {
    let mut plateaus = 0;
    for w in losses.windows(2) {
        if w[1] >= w[0] {
            if w[1] - w[0] > 1e-4 {
                return false;
            }
            plateaus += 1;
        }
    }
    plateaus <= 1
}

fn desk_eight_class(dir: &Path) -> (bool, String) {
    let seed = 1;
    let (root, label, dataset) = match std::env::var_os("MBD_ROOT") {
        Some(mbd) => {
            let root = PathBuf::from(mbd);
            match mangocnn::data::scan_dataset(&root) {
                Ok((ds, _)) => (root, "MBD subset", ds.truncate_per_class(100)),
                Err(e) => return (false, format!("MBD_ROOT scan failed: {e}")),
            }
        }
        None => {
            let root = dir.join("leaf-proxy");
            let images: Vec<(ImageTensor, usize)> = leaf_proxy(100, 64, seed);
            if let Err(e) = write_dataset(&root, &LEAF_CLASSES, &images) {
                return (false, format!("proxy fixture: {e}"));
            }
            match mangocnn::data::scan_dataset(&root) {
                Ok((ds, _)) => (
                    root,
                    "PROXY (synthetic 8-class leaves; MBD_ROOT not set)",
                    ds,
                ),
                Err(e) => return (false, format!("proxy scan failed: {e}")),
            }
        }
    };
    let manifest_path = dir.join("desk-manifest.csv");
    if let Err(e) = stratified_split(&dataset, seed).save(&manifest_path) {
        return (false, format!("manifest: {e}"));
    }
    let job = TrainJob {
        data_root: root,
        model: parse_config(bundled("desk-64.cfg").unwrap()).unwrap(),
        training: TrainingConfig {
            max_epochs: 15,
            seed,
            augment: AugmentPolicy::none(),
            ..TrainingConfig::default()
        },
        manifest: Some(manifest_path),
        checkpoint_out: None,
        history_out: None,
        curves_out: None,
    };
    let t0 = Instant::now();
    match run_training(&job, |_| {}) {
        Ok(r) => {
            let elapsed = t0.elapsed();
            let h: &[EpochRecord] = &r.outcome.history;
            let best_val = h.iter().map(|e| e.val_accuracy).fold(0.0, f64::max);
            let first5: Vec<f64> = h.iter().take(5).map(|e| e.train_loss).collect();
            let decreasing = first5.len() == 5 && strictly_decreasing(&first5);
            (
                best_val >= 0.6 && decreasing && elapsed < Duration::from_secs(900),
                format!(
                    "{label}, {} images at 64×64: best val acc {best_val:.3} over {} epochs (need ≥ 0.60), first-5 train losses {:?} decreasing {decreasing}, {elapsed:.0?}",
                    dataset.samples.len(),
                    h.len(),
                    first5.iter().map(|l| (l * 1e4).round() / 1e4).collect::<Vec<_>>()
                ),
            )
        }
        Err(e) => (false, format!("{label} run failed: {e}")),
    }
}

fn desk_scale(dir: &Path) -> Outcome {
    let (a_ok, a) = desk_two_class(dir);
    let (b_ok, b) = desk_eight_class(dir);
    outcome(a_ok && b_ok, format!("{a}\n        {b}"))
}

// 9 ---------------------------------------------------------------------------

fn determinism(dir: &Path) -> Outcome {
    let root = dir.join("det");
    if let Err(e) = write_two_class(&root) {
        return fail(e);
    }
    std::fs::write(dir.join("tiny.cfg"), TINY_CFG).unwrap();
    let run = |tag: &str| {
        let ck = dir.join(format!("{tag}.gnck"));
        let hist = dir.join(format!("{tag}.csv"));
        let (code, _, err) = cli(&[
            "train",
            "--data",
            root.to_str().unwrap(),
            "--config",
            dir.join("tiny.cfg").to_str().unwrap(),
            "--epochs",
            "6",
            "--batch-size",
            "8",
            "--seed",
            "77",
            "--out",
            ck.to_str().unwrap(),
            "--history",
            hist.to_str().unwrap(),
        ]);
        (code, err, std::fs::read(ck).ok(), std::fs::read(hist).ok())
    };
    let a = run("a");
    let b = run("b");
    if a.0 != 0 || b.0 != 0 {
        return fail(format!("train exited {} / {}: {}{}", a.0, b.0, a.1, b.1));
    }
    let hist_same = a.3.is_some() && a.3 == b.3;
    let ck_same = a.2.is_some() && a.2 == b.2;
    let rows =
        a.3.as_deref()
            .map(|h| parse_history_csv(std::str::from_utf8(h).unwrap()).map(|v| v.len()));
    outcome(
        hist_same && ck_same,
        format!("augmented 6-epoch runs: history identical {hist_same} ({rows:?} rows), checkpoint identical {ck_same}"),
    )
}

// 10 --------------------------------------------------------------------------

fn checkpoint(dir: &Path) -> Outcome {
    let cfg: ModelConfig = parse_config(TINY_CFG).unwrap();
    let model = Sequential::<f32>::new(&cfg, &mut Rng::new(4)).unwrap();
    let p1 = dir.join("c1.gnck");
    let p2 = dir.join("c2.gnck");
    if let Err(e) = Checkpoint::from_model(&model).save(&p1) {
        return fail(e);
    }
    let mut reloaded = Sequential::<f32>::zeros(&cfg).unwrap();
    let loaded = Checkpoint::load(&p1).and_then(|c| c.apply_to(&mut reloaded));
    let resaved = loaded.and_then(|_| Checkpoint::from_model(&reloaded).save(&p2));
    let identical = resaved.is_ok() && std::fs::read(&p1).ok() == std::fs::read(&p2).ok();

    let mut bytes = std::fs::read(&p1).unwrap();
    bytes[0] = b'X';
    let magic =
        matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(ref m)) if m == "bad magic");

    let other = parse_config(&TINY_CFG.replace("conv 8 3 3", "conv 5 3 3")).unwrap();
    let mut wrong = Sequential::<f32>::zeros(&other).unwrap();
    let mismatch = match Checkpoint::load(&p1).and_then(|c| c.apply_to(&mut wrong)) {
        Err(Error::Checkpoint(m)) => m.contains("shape mismatch for tensor 'conv2d_0.weight'"),
        _ => false,
    };
    outcome(
        identical && magic && mismatch,
        format!("save→load→save identical {identical}; corrupted magic → 'bad magic' {magic}; shape mismatch named {mismatch}"),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("softmax worked example", Box::new(softmax_example)),
        ("parameter table arithmetic", Box::new(table_four)),
        ("exact parameter target search", Box::new(gournet_target)),
        ("gradient correctness", Box::new(gradients)),
        ("Adam traces", Box::new(adam)),
        ("early stopping traces", Box::new(early_stopping)),
        ("stratified split", Box::new(split)),
        ("desk-scale training", Box::new(|| desk_scale(dir.path()))),
        ("determinism", Box::new(|| determinism(dir.path()))),
        (
            "checkpoint round trip and errors",
            Box::new(|| checkpoint(dir.path())),
        ),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let r = run();
        if !r.ok {
            failed += 1;
        }
        println!(
            "{} [{:>2}] {name}: {}",
            if r.ok { "PASS" } else { "FAIL" },
            i + 1,
            r.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
