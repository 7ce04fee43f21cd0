//! Training loop, evaluation, prediction and the per-epoch history file.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::config::ModelConfig;
use crate::curves::emit_curves;
use crate::data::{
    augment_seed, batches, epoch_order, scan_dataset, stratified_split, Sample, Split,
    SplitManifest,
};
use crate::error::{Error, Result};
use crate::layers::{argmax, softmax};
use crate::model::Sequential;
use crate::objective::{correct_count, sparse_ce_grad_logits, sparse_ce_per_sample};
use crate::optim::{adam_step, AdamConfig, AdamState, EarlyStopping, StopDecision};
use crate::preprocess::{augment, load_preprocessed, AugmentPolicy, ImageTensor};
use crate::rng::Rng;
use crate::tensor::Tensor;

const TAG_INIT: u64 = 0x494e_4954; // "INIT"

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Applied to training batches only.
    pub augment: AugmentPolicy,
    /// Put the weights of the best validation epoch back when training ends.
    pub restore_best: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            batch_size: 32,
            max_epochs: 50,
            patience: 3,
            seed: 0,
            augment: AugmentPolicy::default(),
            restore_best: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        AdamConfig::with_lr(self.lr).validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Argument(
                "batch size and epoch count must be positive".into(),
            ));
        }
        self.augment.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Preprocessed images (`[H, W, 3]`, values in `[0, 1]`) with labels.
#[derive(Debug, Clone, Default)]
pub struct InMemorySplit {
    pub images: Vec<ImageTensor>,
    pub labels: Vec<usize>,
}

impl InMemorySplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Stack the selected images into an `[N, H, W, 3]` batch, optionally
    /// augmenting each one with its own seeded stream.
    fn batch(
        &self,
        idx: &[usize],
        augmentation: Option<(&AugmentPolicy, u64, usize)>,
    ) -> Result<(Tensor<f32>, Vec<usize>)> {
        let shape = self.images[idx[0]].shape().to_vec();
        let per = self.images[idx[0]].len();
        let mut data = vec![0f32; idx.len() * per];
        data.par_chunks_mut(per)
            .zip(idx.par_iter())
            .for_each(|(dst, &i)| match augmentation {
                Some((policy, seed, epoch)) if !policy.is_identity() => {
                    let mut rng = Rng::new(augment_seed(seed, epoch, i));
                    dst.copy_from_slice(augment(&self.images[i], policy, &mut rng).data());
                }
                _ => dst.copy_from_slice(self.images[i].data()),
            });
        let mut full = vec![idx.len()];
        full.extend(shape);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Ok((Tensor::from_vec(&full, data)?, labels))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub loss: f64,
    pub accuracy: f64,
    pub correct: usize,
    pub count: usize,
    /// Arg-max class per sample, in split order.
    pub predictions: Vec<usize>,
}

/// One pass without augmentation. The loss is the per-sample mean, so it
/// does not depend on `batch_size`.
pub fn evaluate(
    model: &mut Sequential<f32>,
    split: &InMemorySplit,
    batch_size: usize,
) -> Result<EvalResult> {
    if split.is_empty() {
        return Err(Error::Argument("cannot evaluate an empty split".into()));
    }
    let order: Vec<usize> = (0..split.len()).collect();
    let mut loss_sum = 0f64;
    let mut correct = 0;
    let mut predictions = Vec::with_capacity(split.len());
    for idx in batches(&order, batch_size)? {
        let (x, labels) = split.batch(&idx, None)?;
        let probs = model.predict_proba(x)?;
        loss_sum += sparse_ce_per_sample(&probs, &labels)?
            .iter()
            .map(|&v| v as f64)
            .sum::<f64>();
        correct += correct_count(&probs, &labels)?;
        let k = probs.shape()[1];
        predictions.extend(probs.data().chunks(k).map(argmax));
    }
    let count = split.len();
    Ok(EvalResult {
        loss: loss_sum / count as f64,
        accuracy: correct as f64 / count as f64,
        correct,
        count,
        predictions,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Sequential<f32>,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Fresh model for `config`, initialized from the run seed.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<Sequential<f32>> {
    Sequential::new(config, &mut Rng::derive(seed, &[TAG_INIT]))
}

/// The epoch loop: shuffle, augment, forward, loss, backward, Adam; then
/// validate and consult early stopping. `on_epoch` sees every record as it
/// is produced.
pub fn fit(
    mut model: Sequential<f32>,
    train: &InMemorySplit,
    val: &InMemorySplit,
    cfg: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Data(
            "validation split is empty; early stopping needs one".into(),
        ));
    }
    let k = model.num_classes();
    if let Some(&bad) = train.labels.iter().chain(&val.labels).find(|&&l| l >= k) {
        return Err(Error::Data(format!(
            "label {bad} does not fit the model's {k}-way head"
        )));
    }
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut state = AdamState::new();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let order = epoch_order(train.len(), true, cfg.seed, epoch);
        let mut loss_sum = 0f64;
        let mut correct = 0;
        for (b, idx) in batches(&order, cfg.batch_size)?.iter().enumerate() {
            let (x, labels) = train.batch(idx, Some((&cfg.augment, cfg.seed, epoch)))?;
            let logits = model.forward(x, true)?;
            let probs = softmax(&logits);
            let batch_loss: f64 = sparse_ce_per_sample(&probs, &labels)?
                .iter()
                .map(|&v| v as f64)
                .sum();
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {}",
                    b + 1
                )));
            }
            loss_sum += batch_loss;
            correct += correct_count(&probs, &labels)?;
            model.backward(sparse_ce_grad_logits(&logits, &labels)?)?;
            adam_step(&mut model.params_mut(), &mut state, &adam).map_err(|e| match e {
                Error::Numeric(m) => {
                    Error::Numeric(format!("{m} at epoch {epoch}, batch {}", b + 1))
                }
                other => other,
            })?;
        }
        let v = evaluate(&mut model, val, cfg.batch_size)?;
        if !v.loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_loss: v.loss,
            val_accuracy: v.accuracy,
        };
        on_epoch(&record);
        history.push(record);
        if stopper.update(v.loss, || model.named_tensors()) == StopDecision::Stop {
            stopped_early = true;
            break;
        }
    }
    if cfg.restore_best {
        if let Some(best) = stopper.take_best_snapshot() {
            model.set_tensors(&best)?;
        }
    }
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: stopper.best_epoch(),
        stopped_early,
    })
}

/// Decodes images for a dataset root, resizing to the model input, and
/// records every path it reads.
#[derive(Debug)]
pub struct ImageStore {
    root: PathBuf,
    height: usize,
    width: usize,
    access_log: Mutex<Vec<String>>,
}

impl ImageStore {
    pub fn new(root: &Path, height: usize, width: usize) -> Self {
        Self {
            root: root.to_path_buf(),
            height,
            width,
            access_log: Mutex::new(Vec::new()),
        }
    }

    pub fn load(&self, samples: &[Sample]) -> Result<InMemorySplit> {
        let images = samples
            .par_iter()
            .map(|s| load_preprocessed(&self.root.join(&s.path), self.height, self.width))
            .collect::<Result<Vec<_>>>()?;
        self.access_log
            .lock()
            .expect("access log poisoned")
            .extend(samples.iter().map(|s| s.path.clone()));
        Ok(InMemorySplit {
            images,
            labels: samples.iter().map(|s| s.class_index).collect(),
        })
    }

    /// Relative paths decoded so far, in load order.
    pub fn accessed(&self) -> Vec<String> {
        self.access_log.lock().expect("access log poisoned").clone()
    }
}

/// Everything needed to run training from files.
#[derive(Debug, Clone)]
pub struct TrainJob {
    pub data_root: PathBuf,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    /// Existing manifest to reuse, or where to write a fresh one.
    pub manifest: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
    pub history_out: Option<PathBuf>,
    pub curves_out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct TrainReport {
    pub outcome: TrainOutcome,
    pub manifest: SplitManifest,
    /// Paths decoded during the run.
    pub accessed: Vec<String>,
}

/// Resolve the split (reuse the manifest file if present, otherwise scan and
/// split, saving the manifest when a path is given).
pub fn resolve_manifest(
    data_root: &Path,
    manifest: Option<&Path>,
    seed: u64,
) -> Result<SplitManifest> {
    if let Some(path) = manifest.filter(|p| p.exists()) {
        return SplitManifest::load(path);
    }
    let (ds, report) = scan_dataset(data_root)?;
    if !report.skipped.is_empty() {
        log::warn!("{} undecodable files skipped", report.skipped.len());
    }
    let m = stratified_split(&ds, seed);
    if let Some(path) = manifest {
        m.save(path)?;
    }
    Ok(m)
}

pub fn run_training(job: &TrainJob, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainReport> {
    job.training.validate()?;
    let manifest = resolve_manifest(&job.data_root, job.manifest.as_deref(), job.training.seed)?;
    if manifest.class_names.len() != job.model.num_classes() {
        return Err(Error::Data(format!(
            "dataset has {} classes but the model head has {} units",
            manifest.class_names.len(),
            job.model.num_classes()
        )));
    }
    let [h, w, _] = <[usize; 3]>::try_from(&job.model.input_shape[..])
        .map_err(|_| Error::Argument("model input must be HxWxC".into()))?;
    let store = ImageStore::new(&job.data_root, h, w);
    let t0 = Instant::now();
    let train = store.load(&manifest.samples(Split::Train))?;
    let val = store.load(&manifest.samples(Split::Val))?;
    log::info!(
        "loaded {} train / {} val images in {:.1?}",
        train.len(),
        val.len(),
        t0.elapsed()
    );
    let model = init_model(&job.model, job.training.seed)?;
    let outcome = fit(model, &train, &val, &job.training, on_epoch)?;
    if let Some(path) = &job.checkpoint_out {
        Checkpoint::from_model(&outcome.model).save(path)?;
    }
    if let Some(path) = &job.history_out {
        std::fs::write(path, history_csv(&outcome.history)).map_err(|e| Error::io(path, e))?;
    }
    if let Some(path) = &job.curves_out {
        std::fs::write(path, emit_curves(&outcome.history)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(TrainReport {
        outcome,
        manifest,
        accessed: store.accessed(),
    })
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_accuracy,val_loss,val_accuracy";

/// History CSV: fixed header, six decimals, LF line endings.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
        ));
    }
    out
}

pub fn parse_history_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(Error::Data(format!(
            "history header must be `{HISTORY_HEADER}`"
        )));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Data(format!("history row {}: malformed `{line}`", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: num(f[1])?,
                train_accuracy: num(f[2])?,
                val_loss: num(f[3])?,
                val_accuracy: num(f[4])?,
            })
        })
        .collect()
}

/// Class probabilities for one image, highest first (ties keep class order).
pub fn predict(
    model: &mut Sequential<f32>,
    image_path: &Path,
    class_names: &[String],
) -> Result<Vec<(String, f32)>> {
    let [h, w, _] = <[usize; 3]>::try_from(&model.config.input_shape[..])
        .map_err(|_| Error::Argument("model input must be HxWxC".into()))?;
    let img = load_preprocessed(image_path, h, w).map_err(|e| match e {
        Error::Io { .. } | Error::Data(_) => Error::Data(format!("cannot read input image: {e}")),
        other => other,
    })?;
    let x = img.reshape(&[1, h, w, 3])?;
    let probs = model.predict_proba(x)?;
    Ok(rank(probs.data(), class_names))
}

/// Pair probabilities with class names and sort descending.
pub fn rank(probs: &[f32], class_names: &[String]) -> Vec<(String, f32)> {
    let mut ranked: Vec<(String, f32)> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let name = class_names
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("class_{i}"));
            (name, p)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn history_format() {
        let h = vec![EpochRecord {
            epoch: 1,
            train_loss: 0.5,
            train_accuracy: 0.25,
            val_loss: 1.0 / 3.0,
            val_accuracy: 1.0,
        }];
        let text = history_csv(&h);
        assert_eq!(
            text,
            "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n1,0.500000,0.250000,0.333333,1.000000\n"
        );
        let back = parse_history_csv(&text).unwrap();
        assert_eq!(back[0].epoch, 1);
        assert!((back[0].val_loss - 0.333333).abs() < 1e-12);
    }

    #[test]
    fn rank_orders_descending() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = rank(&[0.2, 0.5, 0.3], &names);
        assert_eq!(
            r.iter().map(|x| x.0.as_str()).collect::<Vec<_>>(),
            ["b", "c", "a"]
        );
    }

    #[test]
    fn evaluate_rejects_empty() {
        let cfg = parse_config("input 2 2 3\nflatten\ndense 2 softmax\n").unwrap();
        let mut m = Sequential::zeros(&cfg).unwrap();
        assert!(matches!(
            evaluate(&mut m, &InMemorySplit::default(), 4),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn uniform_model_scores_ln_k() {
        let cfg = parse_config("input 2 2 3\nflatten\ndense 8 softmax\n").unwrap();
        let mut m = Sequential::zeros(&cfg).unwrap();
        let mut rng = Rng::new(1);
        let split = InMemorySplit {
            images: (0..10)
                .map(|_| {
                    Tensor::from_vec(&[2, 2, 3], (0..12).map(|_| rng.uniform() as f32).collect())
                        .unwrap()
                })
                .collect(),
            labels: (0..10).map(|i| i % 8).collect(),
        };
        let a = evaluate(&mut m, &split, 3).unwrap();
        assert!((a.loss - 8f64.ln()).abs() < 1e-3);
        // Uniform rows tie everywhere, so every prediction is class 0.
        assert_eq!(a.correct, 2);
        assert_eq!(a, evaluate(&mut m, &split, 7).unwrap());
    }
}
