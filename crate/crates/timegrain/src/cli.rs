//! The `analyze | pretrain | forecast | impute | detect` commands behind
//! the thin binary. Every command loads one RunConfig, writes the fully
//! resolved config into the output directory, and emits its results as
//! delimited text files there.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    density_distance, extract_spectrum, kde2d, scott_bandwidth, DensityGrid, GridSpec,
    SpectrumSample,
};
use crate::backbone::Model;
use crate::config::RunConfig;
use crate::data::{save_delimited, SyntheticTruth, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::pretrain::{pretrain, TrainConfig};
use crate::tasks::{
    detect, detection_scores, forecast, impute, point_adjust, reconstruction_scores, ForecastSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Pretrain,
    Forecast,
    Impute,
    Detect,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Pretrain => "pretrain",
            Command::Forecast => "forecast",
            Command::Impute => "impute",
            Command::Detect => "detect",
        }
    }
}

/// Load the config, apply the flag overrides (only output dir and seed),
/// resolve seeds, record the resolved config, and dispatch.
pub fn run(
    command: Command,
    config_path: &Path,
    out_override: Option<PathBuf>,
    seed_override: Option<u64>,
) -> Result<()> {
    let mut cfg = RunConfig::from_file(config_path)?;
    if let Some(out) = out_override {
        cfg.out_dir = out;
    }
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let cfg = cfg.resolve();
    cfg.write_resolved()?;
    match command {
        Command::Analyze => cmd_analyze(&cfg),
        Command::Pretrain => cmd_pretrain(&cfg),
        Command::Forecast => cmd_task(&cfg, Command::Forecast),
        Command::Impute => cmd_task(&cfg, Command::Impute),
        Command::Detect => cmd_task(&cfg, Command::Detect),
    }
}

fn subsample(points: &mut Vec<(f64, f64)>, cap: usize, rng: &mut ChaCha8Rng) {
    if points.len() <= cap {
        return;
    }
    for i in 0..cap {
        let j = rng.random_range(i..points.len());
        points.swap(i, j);
    }
    points.truncate(cap);
}

/// Per dataset and mode: spectrum extraction and a density-grid export on
/// a mode-wide shared grid, plus the pairwise L1 distance matrix.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<()> {
    if cfg.datasets.is_empty() {
        return Err(Error::Config("analyze: no datasets configured".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x616e_616c);
    let mut loaded: Vec<TimeSeriesDataset> = Vec::new();
    for (i, d) in cfg.datasets.iter().enumerate() {
        let (ds, _) = d.load(d.seed.unwrap_or(cfg.seed ^ i as u64))?;
        loaded.push(ds);
    }

    for mode in &cfg.analyze.modes {
        // collect per-dataset point clouds
        let mut clouds: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for ds in &loaded {
            let mut sample = SpectrumSample::default();
            for c in 0..ds.n_channels() {
                sample.extend(extract_spectrum(ds.channel(c), *mode)?);
            }
            let mut points = sample.points;
            subsample(&mut points, cfg.analyze.max_points, &mut rng);
            match scott_bandwidth(&points) {
                Ok(_) => clouds.push((ds.name.clone(), points)),
                Err(e) => {
                    eprintln!(
                        "warning: skipping {} for {} analysis: {e}",
                        ds.name,
                        mode.label()
                    );
                }
            }
        }
        if clouds.is_empty() {
            continue;
        }
        // one shared grid per mode so distances are well-defined
        let bandwidths: Vec<(f64, f64)> = clouds
            .iter()
            .map(|(_, pts)| scott_bandwidth(pts))
            .collect::<Result<_>>()?;
        let max_bw = bandwidths
            .iter()
            .fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        let all_points: Vec<(f64, f64)> =
            clouds.iter().flat_map(|(_, pts)| pts.iter().copied()).collect();
        let grid = GridSpec::covering(&all_points, max_bw, cfg.analyze.max_cells)?;

        let mut grids: Vec<DensityGrid> = Vec::new();
        for ((name, pts), bw) in clouds.iter().zip(&bandwidths) {
            let density = kde2d(pts, &grid, *bw)?;
            let fname = format!("density_{}_{}.tsv", sanitize(name), mode.label());
            std::fs::write(cfg.out_dir.join(fname), density.to_tsv(name))?;
            grids.push(density);
        }

        let mut table = String::from("dataset");
        for (name, _) in &clouds {
            let _ = write!(table, "\t{name}");
        }
        table.push('\n');
        for (i, (name, _)) in clouds.iter().enumerate() {
            let _ = write!(table, "{name}");
            for j in 0..clouds.len() {
                let d = density_distance(&grids[i], &grids[j])?;
                let _ = write!(table, "\t{d}");
            }
            table.push('\n');
        }
        std::fs::write(
            cfg.out_dir.join(format!("distance_matrix_{}.tsv", mode.label())),
            table,
        )?;
    }
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect()
}

fn primary_dataset(cfg: &RunConfig) -> Result<(TimeSeriesDataset, SyntheticTruth)> {
    let d = cfg
        .datasets
        .first()
        .ok_or_else(|| Error::Config("no datasets configured".into()))?;
    d.load(d.seed.unwrap_or(cfg.seed))
}

/// Pretrain (optionally warm-starting from `resume`), then write the
/// best-validation checkpoint and the per-step training report.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<()> {
    let (ds, _) = primary_dataset(cfg)?;
    let mut model: Model<f32> = match &cfg.resume {
        Some(path) => Model::load(path)?,
        None => Model::new(cfg.model.clone())?,
    };
    let report = pretrain(&ds, &mut model, &cfg.train)?;
    model.save(&cfg.checkpoint_path())?;
    std::fs::write(cfg.out_dir.join("training_report.tsv"), report.to_tsv())?;
    let summary = format!(
        "steps\t{}\ninitial_val_loss\t{}\nfinal_val_loss\t{}\n",
        report.steps.len(),
        report.initial_val_loss.map_or(String::new(), |v| v.to_string()),
        report.final_val_loss.map_or(String::new(), |v| v.to_string()),
    );
    std::fs::write(cfg.out_dir.join("training_summary.tsv"), summary)?;
    Ok(())
}

const METRICS_HEADER: &str = "dataset\ttask\tparam\tmetric\tvalue";

struct MetricsTable {
    rows: Vec<String>,
    tasks: Vec<String>,
}

impl MetricsTable {
    fn new() -> Self {
        MetricsTable {
            rows: Vec::new(),
            tasks: Vec::new(),
        }
    }

    fn push(&mut self, dataset: &str, task: &str, param: &str, metric: &str, value: f64) {
        self.rows
            .push(format!("{dataset}\t{task}\t{param}\t{metric}\t{value}"));
        if !self.tasks.iter().any(|t| t == task) {
            self.tasks.push(task.to_string());
        }
    }

    /// Merge into any existing metrics.tsv: rows of the tasks being
    /// rewritten are replaced, other tasks' rows are kept, so one out
    /// directory accumulates all task results and reruns stay idempotent.
    fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join("metrics.tsv");
        let mut kept: Vec<String> = Vec::new();
        if let Ok(existing) = std::fs::read_to_string(&path) {
            for line in existing.lines().skip(1) {
                let task = line.split('\t').nth(1).unwrap_or_default();
                if !line.is_empty() && !self.tasks.iter().any(|t| t == task) {
                    kept.push(line.to_string());
                }
            }
        }
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for line in kept.iter().chain(&self.rows) {
            out.push_str(line);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Load the checkpoint unmodified and run one task harness; emits
/// metrics.tsv rows (dataset, task, horizon/ratio, MSE/MAE/F1) and
/// prediction files.
pub fn cmd_task(cfg: &RunConfig, task: Command) -> Result<()> {
    let ckpt = cfg.checkpoint_path();
    if !ckpt.exists() {
        return Err(Error::Config(format!(
            "checkpoint {} does not exist (run pretrain first)",
            ckpt.display()
        )));
    }
    let model: Model<f32> = Model::load(&ckpt)?;
    let (ds, truth) = primary_dataset(cfg)?;
    let mut metrics = MetricsTable::new();
    match task {
        Command::Forecast => task_forecast(cfg, &model, &ds, &mut metrics)?,
        Command::Impute => task_impute(cfg, model, &ds, &mut metrics)?,
        Command::Detect => task_detect(cfg, model, &ds, &truth, &mut metrics)?,
        _ => return Err(Error::Config(format!("{} is not a task", task.name()))),
    }
    metrics.write(&cfg.out_dir)?;
    Ok(())
}

fn task_forecast(
    cfg: &RunConfig,
    model: &Model<f32>,
    ds: &TimeSeriesDataset,
    metrics: &mut MetricsTable,
) -> Result<()> {
    let patch_len = model.config().patch_len;
    let test = ds.splits.test.clone();
    for &horizon in &cfg.forecast.horizons {
        let mut spec = match cfg.forecast.lookback {
            Some(lb) => ForecastSpec {
                lookback: lb,
                horizon,
            },
            None => ForecastSpec::for_horizon(horizon),
        };
        // keep the lookback patch-aligned and inside the positional table
        spec.lookback -= spec.lookback % patch_len.max(1);
        let cap = (model.config().max_pos - 2) * patch_len;
        spec.lookback = spec.lookback.min(cap - cap % patch_len);
        spec.validate(patch_len)?;
        if test.len() < horizon || test.start < spec.lookback {
            return Err(Error::Data(format!(
                "forecast: test region of {} points cannot evaluate horizon {horizon} with lookback {}",
                test.len(),
                spec.lookback
            )));
        }
        let mut origins: Vec<usize> = Vec::new();
        let mut origin = test.start;
        while origin + horizon <= test.end && origins.len() < cfg.forecast.max_origins {
            origins.push(origin);
            origin += horizon;
        }
        let mut se = 0.0f64;
        let mut ae = 0.0f64;
        let mut n = 0usize;
        let mut first_forecast: Option<Vec<Vec<f64>>> = None;
        for &o in &origins {
            let history: Vec<Vec<f64>> = (0..ds.n_channels())
                .map(|c| ds.channel(c)[o - spec.lookback..o].to_vec())
                .collect();
            let preds = forecast(model, &history, &ds.granularity, &spec)?;
            for c in 0..ds.n_channels() {
                let target = &ds.channel(c)[o..o + horizon];
                se += preds[c]
                    .iter()
                    .zip(target)
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>();
                ae += preds[c]
                    .iter()
                    .zip(target)
                    .map(|(p, t)| (p - t).abs())
                    .sum::<f64>();
                n += horizon;
            }
            if first_forecast.is_none() {
                first_forecast = Some(preds);
            }
        }
        metrics.push(&ds.name, "forecast", &horizon.to_string(), "mse", se / n as f64);
        metrics.push(&ds.name, "forecast", &horizon.to_string(), "mae", ae / n as f64);
        if let Some(preds) = first_forecast {
            save_delimited(
                &cfg.out_dir.join(format!("predictions_forecast_{horizon}.csv")),
                &preds,
                None,
            )?;
        }
    }
    Ok(())
}

fn finetune_if_requested(
    model: Model<f32>,
    epochs: usize,
    ds: &TimeSeriesDataset,
    train_cfg: &TrainConfig,
    patch_len_must_be: Option<usize>,
) -> Result<Model<f32>> {
    if let Some(need) = patch_len_must_be {
        if model.config().patch_len != need {
            return Err(Error::Incompatible(format!(
                "task needs a checkpoint with patch length {need}, got {}",
                model.config().patch_len
            )));
        }
    }
    if epochs == 0 {
        return Ok(model);
    }
    let mut model = model;
    let cfg = TrainConfig {
        epochs,
        max_steps: None,
        ..train_cfg.clone()
    };
    pretrain(ds, &mut model, &cfg)?;
    Ok(model)
}

fn task_impute(
    cfg: &RunConfig,
    model: Model<f32>,
    ds: &TimeSeriesDataset,
    metrics: &mut MetricsTable,
) -> Result<()> {
    let model = finetune_if_requested(model, cfg.impute.finetune_epochs, ds, &cfg.train, Some(1))?;
    let test = ds.splits.test.clone();
    if test.is_empty() {
        return Err(Error::Data("impute: empty test region".into()));
    }
    let series: Vec<Vec<f64>> = (0..ds.n_channels())
        .map(|c| ds.channel(c)[test.clone()].to_vec())
        .collect();
    for (ri, &ratio) in cfg.impute.missing_ratios.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x696d_7000 + ri as u64));
        let t_len = series[0].len();
        let mask = crate::tasks::exact_missing_mask(t_len, ratio, &mut rng)?;
        let filled = impute(&model, &series, &mask, &ds.granularity, cfg.impute.window)?;
        let mut se = 0.0;
        let mut ae = 0.0;
        let mut n = 0usize;
        for c in 0..series.len() {
            for t in 0..t_len {
                if mask[t] {
                    let d = filled[c][t] - series[c][t];
                    se += d * d;
                    ae += d.abs();
                    n += 1;
                } else if filled[c][t].to_bits() != series[c][t].to_bits() {
                    return Err(Error::Numeric(
                        "impute: an observed point was modified".into(),
                    ));
                }
            }
        }
        if n == 0 {
            continue;
        }
        let label = format!("{ratio}");
        metrics.push(&ds.name, "impute", &label, "mse", se / n as f64);
        metrics.push(&ds.name, "impute", &label, "mae", ae / n as f64);
        save_delimited(
            &cfg.out_dir.join(format!("predictions_impute_{ri}.csv")),
            &filled,
            None,
        )?;
    }
    Ok(())
}

fn task_detect(
    cfg: &RunConfig,
    model: Model<f32>,
    ds: &TimeSeriesDataset,
    truth: &SyntheticTruth,
    metrics: &mut MetricsTable,
) -> Result<()> {
    let model =
        finetune_if_requested(model, cfg.detect.finetune_epochs, ds, &cfg.train, None)?;
    let window = cfg.detect.window;
    let val = ds.splits.val.clone();
    let test = ds.splits.test.clone();
    if val.len() < window || test.len() < window {
        return Err(Error::Data(format!(
            "detect: val/test regions must hold at least one window of {window}"
        )));
    }
    let score_region = |region: std::ops::Range<usize>| -> Result<Vec<f64>> {
        let series: Vec<Vec<f64>> = (0..ds.n_channels())
            .map(|c| ds.channel(c)[region.clone()].to_vec())
            .collect();
        let per_channel = reconstruction_scores(&model, &series, &ds.granularity, window)?;
        let t_len = region.len();
        Ok((0..t_len)
            .map(|t| per_channel.iter().map(|s| s[t]).sum::<f64>() / per_channel.len() as f64)
            .collect())
    };
    let val_scores = score_region(val.clone())?;
    let test_scores = score_region(test.clone())?;

    let quantile = match cfg.detect.threshold_quantile {
        Some(q) => q,
        None => match &truth.anomaly_mask {
            Some(mask) => {
                let rate = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
                (1.0 - rate).clamp(0.5, 0.9999)
            }
            None => 0.99,
        },
    };
    let labels = detect(&test_scores, &val_scores, quantile)?;

    let mut score_rows = String::from("index\tscore\tlabel\n");
    for (i, (&s, &l)) in test_scores.iter().zip(&labels).enumerate() {
        let _ = writeln!(score_rows, "{}\t{s}\t{}", test.start + i, u8::from(l));
    }
    std::fs::write(cfg.out_dir.join("anomaly_scores.tsv"), score_rows)?;

    let qlabel = format!("{quantile}");
    if let Some(mask) = &truth.anomaly_mask {
        let truth_test: Vec<bool> = mask[test.clone()].to_vec();
        let adjusted = point_adjust(&labels, &truth_test)?;
        let scores = detection_scores(&adjusted, &truth_test)?;
        metrics.push(&ds.name, "detect", &qlabel, "precision", scores.precision);
        metrics.push(&ds.name, "detect", &qlabel, "recall", scores.recall);
        metrics.push(&ds.name, "detect", &qlabel, "f1", scores.f1);
    } else {
        let rate = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
        metrics.push(&ds.name, "detect", &qlabel, "flagged_rate", rate);
    }
    Ok(())
}

