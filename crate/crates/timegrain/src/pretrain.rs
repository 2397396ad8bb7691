//! Blank-infilling pretraining: the reconstruction objective over
//! predicted patch rows, Adam with warmup + cosine annealing, and the
//! epoch loop with validation-based early stopping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::Model;
use crate::data::TimeSeriesDataset;
use crate::embedding::{
    build_infilling_instance, sample_spans, window_and_patch, GranularityQuintuple,
    InfillingInstance, PatchMatrix,
};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Parameter, Real, Tensor, VarId};

/// Optimization and sampling hyperparameters. Reference pretraining scale
/// uses lr 1e-5 over 30 epochs; the desk defaults below suit minutes-long
/// CPU runs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps regardless of epochs.
    pub max_steps: Option<usize>,
    pub warmup_steps: usize,
    pub early_stop_patience: usize,
    pub mask_ratio: f64,
    /// Probability that a training instance uses tail masking (all masked
    /// patches in one run at the end, the forecasting-like layout).
    pub tail_prob: f64,
    pub span_len_range: [usize; 2],
    pub window_len: usize,
    pub window_stride: usize,
    /// Tail fraction of the train region reserved for validation when the
    /// dataset does not define a validation split.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 8,
            epochs: 10,
            max_steps: None,
            warmup_steps: 10,
            early_stop_patience: 5,
            mask_ratio: 0.25,
            tail_prob: 0.5,
            span_len_range: [1, 3],
            window_len: 128,
            window_stride: 32,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(0.0 < self.mask_ratio && self.mask_ratio < 1.0) {
            return Err(Error::Config(format!(
                "mask_ratio {} outside (0,1)",
                self.mask_ratio
            )));
        }
        if !(0.0..=1.0).contains(&self.tail_prob) {
            return Err(Error::Config(format!(
                "tail_prob {} outside [0,1]",
                self.tail_prob
            )));
        }
        Ok(())
    }
}

/// Mean over predicted rows of the squared L2 row error.
pub fn infilling_loss<F: Real>(predictions: &Tensor<F>, targets: &Tensor<F>) -> Result<F> {
    if predictions.shape() != targets.shape() {
        return Err(Error::Dimension(format!(
            "infilling_loss: {:?} vs {:?}",
            predictions.shape(),
            targets.shape()
        )));
    }
    let m = predictions.rows();
    if m == 0 {
        return Err(Error::Data("infilling_loss: no predicted rows".into()));
    }
    let mut total = F::zero();
    for (p, t) in predictions.data().iter().zip(targets.data()) {
        let d = *p - *t;
        total = total + d * d;
    }
    Ok(total / F::from_usize(m).unwrap())
}

/// Loss node over the numeric-target rows of an instance (END positions
/// carry no numeric target and are excluded).
pub fn infilling_loss_graph<F: Real>(
    g: &mut Graph<F>,
    predictions: VarId,
    inst: &InfillingInstance<F>,
) -> Result<VarId> {
    let rows = inst.numeric_target_rows();
    if rows.is_empty() {
        return Err(Error::Data("infilling_loss: no numeric targets".into()));
    }
    let sel = g.gather_rows(predictions, &rows)?;
    let tgt = g.leaf(inst.target_matrix()?);
    let diff = g.sub(sel, tgt)?;
    let sq = g.mul(diff, diff)?;
    let total = g.sum_all(sq)?;
    g.scale(total, F::from_usize(rows.len()).unwrap().recip())
}

/// First and second moment accumulators per parameter.
pub struct AdamState<F: Real> {
    step: u64,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl<F: Real> AdamState<F> {
    pub fn new(params: &[Parameter<F>]) -> Self {
        AdamState {
            step: 0,
            m: params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape().to_vec()))
                .collect(),
            v: params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape().to_vec()))
                .collect(),
        }
    }
}

/// One Adam update from the gradients currently stored on the parameters.
pub fn adam_step<F: Real>(params: &mut [Parameter<F>], state: &mut AdamState<F>, lr: f64) {
    debug_assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let b1 = F::of_f64(ADAM_BETA1);
    let b2 = F::of_f64(ADAM_BETA2);
    let eps = F::of_f64(ADAM_EPS);
    let lr = F::of_f64(lr);
    let c1 = (F::one() - b1.powi(t)).recip();
    let c2 = (F::one() - b2.powi(t)).recip();
    for (pi, p) in params.iter_mut().enumerate() {
        let m = state.m[pi].data_mut();
        let v = state.v[pi].data_mut();
        for ((w, &g), (mi, vi)) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(p.grad.data())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mi = b1 * *mi + (F::one() - b1) * g;
            *vi = b2 * *vi + (F::one() - b2) * g * g;
            let mhat = *mi * c1;
            let vhat = *vi * c2;
            *w = *w - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Linear warmup followed by cosine annealing to ~0 at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, warmup_steps: usize, base_lr: f64) -> f64 {
    let warmup = warmup_steps.min(total_steps.saturating_sub(1));
    if step < warmup {
        return base_lr * (step + 1) as f64 / warmup as f64;
    }
    let span = (total_steps - warmup).max(1) as f64;
    let progress = ((step + 1 - warmup) as f64 / span).clamp(0.0, 1.0);
    0.5 * base_lr * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// One logged optimizer step.
#[derive(Clone, Debug)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Loss curve plus the validation summary of a pretraining run.
#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub steps: Vec<StepLog>,
    pub initial_val_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub best_val_loss: Option<f64>,
    pub stopped_early: bool,
}

impl TrainReport {
    /// Line-delimited structured text: step, lr, train_loss, val_loss.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("step\tlr\ttrain_loss\tval_loss\n");
        for s in &self.steps {
            let val = s
                .val_loss
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                s.step, s.lr, s.train_loss, val
            ));
        }
        out
    }
}

/// Standardized training windows of every channel's train region.
fn training_windows<F: Real>(
    dataset: &TimeSeriesDataset,
    cfg: &TrainConfig,
    patch_len: usize,
    region: std::ops::Range<usize>,
    stride: usize,
) -> Result<Vec<PatchMatrix<F>>> {
    let mut windows = Vec::new();
    for c in 0..dataset.n_channels() {
        let region_data = &dataset.channel(c)[region.clone()];
        if region_data.len() < cfg.window_len {
            continue;
        }
        let series: Vec<F> = region_data.iter().map(|&v| F::of_f64(v)).collect();
        for pm in window_and_patch(&series, cfg.window_len, stride, patch_len, c)? {
            let (std_pm, _) = pm.standardized()?;
            windows.push(std_pm);
        }
    }
    Ok(windows)
}

fn sample_instance<F: Real>(
    pm: &PatchMatrix<F>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<InfillingInstance<F>> {
    let tail = rng.random_bool(cfg.tail_prob);
    let spans = sample_spans(
        pm.n_patches(),
        cfg.mask_ratio,
        (cfg.span_len_range[0], cfg.span_len_range[1]),
        tail,
        rng,
    )?;
    build_infilling_instance(pm, &spans)
}

fn eval_loss<F: Real>(
    model: &Model<F>,
    instances: &[InfillingInstance<F>],
    quintuple: &GranularityQuintuple,
) -> Result<f64> {
    let mut total = 0.0;
    for inst in instances {
        let mut g = Graph::new();
        let fv = model.build_forward(&mut g, inst, quintuple)?;
        let loss = infilling_loss_graph(&mut g, fv.predictions, inst)?;
        total += g.value(loss).data()[0].as_f64();
    }
    Ok(total / instances.len() as f64)
}

/// Pretrain in place. Iterates shuffled instance batches (masks resampled
/// every epoch), logs one line per optimizer step, evaluates a fixed
/// validation instance set per epoch, early-stops on plateau and restores
/// the best-validation parameters before returning.
pub fn pretrain<F: Real>(
    dataset: &TimeSeriesDataset,
    model: &mut Model<F>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("pretrain: empty dataset".into()));
    }
    let patch_len = model.config().patch_len;
    if cfg.window_len % patch_len != 0 {
        return Err(Error::Config(format!(
            "window {} not divisible by patch length {patch_len}",
            cfg.window_len
        )));
    }
    let quintuple = dataset.granularity;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // train region; validation from the dataset's val split when present,
    // otherwise carved off the train tail and never sampled for training
    let train_range = dataset.splits.train.clone();
    let (train_range, val_range) = if !dataset.splits.val.is_empty() {
        (train_range, dataset.splits.val.clone())
    } else {
        let holdout = ((train_range.len() as f64) * cfg.val_fraction) as usize;
        let cut = train_range.end - holdout;
        (train_range.start..cut, cut..train_range.end)
    };
    let train_windows: Vec<PatchMatrix<F>> =
        training_windows(dataset, cfg, patch_len, train_range, cfg.window_stride)?;
    if train_windows.is_empty() {
        return Err(Error::Data(format!(
            "pretrain: train split shorter than one window of {}",
            cfg.window_len
        )));
    }
    let val_windows: Vec<PatchMatrix<F>> =
        training_windows(dataset, cfg, patch_len, val_range, cfg.window_len)?;
    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
    let val_instances: Vec<InfillingInstance<F>> = val_windows
        .iter()
        .map(|pm| sample_instance(pm, cfg, &mut val_rng))
        .collect::<Result<_>>()?;

    let mut report = TrainReport::default();
    if !val_instances.is_empty() {
        report.initial_val_loss = Some(eval_loss(model, &val_instances, &quintuple)?);
    }
    if cfg.epochs == 0 {
        return Ok(report);
    }

    let steps_per_epoch = train_windows.len().div_ceil(cfg.batch_size);
    let total_steps = cfg
        .max_steps
        .unwrap_or(usize::MAX)
        .min(cfg.epochs * steps_per_epoch);
    let scale_f = |n: usize| F::from_usize(n).unwrap().recip();

    let mut adam = AdamState::new(model.params());
    let mut best: Option<(f64, Vec<Tensor<F>>)> = None;
    let mut patience = 0usize;
    let mut step = 0usize;
    'outer: for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_windows.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let lr = cosine_lr(step, total_steps, cfg.warmup_steps, cfg.lr);
            model.zero_grads();
            let mut batch_loss = 0.0f64;
            for &wi in chunk {
                let inst = sample_instance(&train_windows[wi], cfg, &mut rng)?;
                let mut g = Graph::new();
                let fv = model.build_forward(&mut g, &inst, &quintuple)?;
                let loss = infilling_loss_graph(&mut g, fv.predictions, &inst)?;
                let loss_v = g.value(loss).data()[0].as_f64();
                if !loss_v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "pretrain: non-finite loss at step {step}"
                    )));
                }
                batch_loss += loss_v;
                let grads = g.backward(loss)?;
                model.accumulate_grads(&grads, &fv.param_vars, scale_f(chunk.len()));
            }
            adam_step(model.params_mut(), &mut adam, lr);
            report.steps.push(StepLog {
                step,
                lr,
                train_loss: batch_loss / chunk.len() as f64,
                val_loss: None,
            });
            step += 1;
            if step >= total_steps {
                break 'outer;
            }
        }
        if !val_instances.is_empty() {
            let val = eval_loss(model, &val_instances, &quintuple)?;
            if let Some(last) = report.steps.last_mut() {
                last.val_loss = Some(val);
            }
            let improved = best.as_ref().map_or(true, |(b, _)| val < *b);
            if improved {
                best = Some((
                    val,
                    model.params().iter().map(|p| p.value.clone()).collect(),
                ));
                patience = 0;
            } else {
                patience += 1;
                if patience > cfg.early_stop_patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }

    if let Some((val, snapshot)) = best {
        for (p, v) in model.params_mut().iter_mut().zip(snapshot) {
            p.value = v;
        }
        report.best_val_loss = Some(val);
    }
    if !val_instances.is_empty() {
        report.final_val_loss = Some(eval_loss(model, &val_instances, &quintuple)?);
    }
    Ok(report)
}
