//! Downstream harnesses on top of one pretrained checkpoint: long-term
//! forecasting via tail-masked generation, point-wise imputation via
//! infilling with the patching step omitted (point tokens), and
//! reconstruction-based anomaly detection with the segment point-adjust
//! evaluation convention.

use serde::{Deserialize, Serialize};

use crate::backbone::Model;
use crate::embedding::{destandardize, standardize, GranularityQuintuple, Token};
use crate::error::{Error, Result};
use crate::numerics::Real;

/// Lookback/horizon pair for long-term forecasting; both must be
/// divisible by the model's patch length.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastSpec {
    pub lookback: usize,
    pub horizon: usize,
}

impl ForecastSpec {
    /// Default lookback for a horizon: 4x capped at 1440 (the reference
    /// scheme picks a window in [96, 1440]).
    pub fn for_horizon(horizon: usize) -> Self {
        ForecastSpec {
            lookback: (4 * horizon).min(1440),
            horizon,
        }
    }

    pub fn validate(&self, patch_len: usize) -> Result<()> {
        if self.horizon == 0 || self.horizon % patch_len != 0 {
            return Err(Error::Config(format!(
                "horizon {} not a positive multiple of patch length {patch_len}",
                self.horizon
            )));
        }
        if self.lookback == 0 || self.lookback % patch_len != 0 {
            return Err(Error::Config(format!(
                "lookback {} not a positive multiple of patch length {patch_len}",
                self.lookback
            )));
        }
        Ok(())
    }
}

/// Point-wise imputation settings. The benchmark ratio set is
/// {0.125, 0.25, 0.375, 0.5}.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputationSpec {
    pub missing_ratio: f64,
    /// Processing window (capped by the model's positional capacity).
    #[serde(default = "default_impute_window")]
    pub window: usize,
}

fn default_impute_window() -> usize {
    256
}

/// Reconstruction-scoring settings for anomaly detection.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySpec {
    /// Validation-score quantile used as the detection threshold.
    pub threshold_quantile: f64,
    pub window: usize,
}

impl AnomalySpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.threshold_quantile && self.threshold_quantile <= 1.0) {
            return Err(Error::Config(format!(
                "threshold_quantile {} outside (0,1]",
                self.threshold_quantile
            )));
        }
        Ok(())
    }
}

/// Forecast `spec.horizon` points per channel from the trailing
/// `spec.lookback` points of `history`. Per channel: normalize, patch,
/// generate autoregressively, denormalize. The pretrained network is used
/// as is.
pub fn forecast<F: Real>(
    model: &Model<F>,
    history: &[Vec<f64>],
    quintuple: &GranularityQuintuple,
    spec: &ForecastSpec,
) -> Result<Vec<Vec<f64>>> {
    let patch_len = model.config().patch_len;
    spec.validate(patch_len)?;
    let mut out = Vec::with_capacity(history.len());
    for channel in history {
        if channel.len() < spec.lookback {
            return Err(Error::Data(format!(
                "forecast: history of {} points shorter than lookback {}",
                channel.len(),
                spec.lookback
            )));
        }
        let window = &channel[channel.len() - spec.lookback..];
        let window_f: Vec<F> = window.iter().map(|&v| F::of_f64(v)).collect();
        let (normed, stats) = standardize(&window_f)?;
        let (gamma, beta) = model.revin_affine();
        let context: Vec<Vec<F>> = normed
            .chunks(patch_len)
            .map(|p| p.iter().map(|&v| gamma * v + beta).collect())
            .collect();
        let generated = model.generate(&context, spec.horizon / patch_len, quintuple)?;
        let flat: Vec<F> = generated.into_iter().flatten().collect();
        out.push(
            destandardize(&flat, &stats)
                .iter()
                .map(|v| v.as_f64())
                .collect(),
        );
    }
    Ok(out)
}

/// Point-level missing mask with exactly `round(ratio * len)` masked
/// positions, so the realized ratio is within 1/len of the request.
pub fn exact_missing_mask(len: usize, ratio: f64, rng: &mut impl rand::Rng) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Config(format!(
            "missing ratio {ratio} outside [0,1)"
        )));
    }
    let k = ((ratio * len as f64).round() as usize).min(len);
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..k {
        let j = rng.random_range(i..len);
        idx.swap(i, j);
    }
    let mut mask = vec![false; len];
    for &i in &idx[..k] {
        mask[i] = true;
    }
    Ok(mask)
}

/// Maximal runs of `true` in a mask.
pub fn missing_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - s));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, mask.len() - s));
    }
    runs
}

/// Reconstruct missing points via blank infilling with the patching step
/// omitted: tokens are single points, each maximal missing run becomes a
/// masked span (long runs are chunked to the positional capacity), and
/// the model regenerates them autoregressively. Observed points are
/// returned bit-unchanged.
pub fn impute<F: Real>(
    model: &Model<F>,
    series: &[Vec<f64>],
    missing: &[bool],
    quintuple: &GranularityQuintuple,
    window: usize,
) -> Result<Vec<Vec<f64>>> {
    if model.config().patch_len != 1 {
        return Err(Error::Incompatible(format!(
            "impute requires a point-token checkpoint (patch_len 1), got {}",
            model.config().patch_len
        )));
    }
    let t_len = missing.len();
    if series.iter().any(|c| c.len() != t_len) {
        return Err(Error::Dimension("impute: mask/series length mismatch".into()));
    }
    let window = window.min(model.config().max_pos).min(t_len).max(2);
    let max_chunk = model.config().max_span - 2;
    let (gamma, beta) = model.revin_affine();

    let mut out = Vec::with_capacity(series.len());
    for channel in series {
        let observed: Vec<f64> = channel
            .iter()
            .zip(missing)
            .filter(|(_, &m)| !m)
            .map(|(&v, _)| v)
            .collect();
        if observed.len() < 2 {
            return Err(Error::Data(
                "impute: fewer than 2 observed points in a channel".into(),
            ));
        }
        let channel_mean = observed.iter().sum::<f64>() / observed.len() as f64;

        let mut filled = channel.clone();
        let mut start = 0usize;
        while start < t_len {
            let end = (start + window).min(t_len);
            let wmask = &missing[start..end];
            let wvals = &channel[start..end];
            if wmask.iter().all(|&m| m) {
                // no context in this window at all; fall back to the
                // channel-level observed mean
                for i in start..end {
                    filled[i] = channel_mean;
                }
                start = end;
                continue;
            }
            let obs: Vec<F> = wvals
                .iter()
                .zip(wmask)
                .filter(|(_, &m)| !m)
                .map(|(&v, _)| F::of_f64(v))
                .collect();
            if obs.len() < 2 {
                for i in start..end {
                    if missing[i] {
                        filled[i] = channel_mean;
                    }
                }
                start = end;
                continue;
            }
            let (_, stats) = standardize(&obs)?;

            // Part A: observed point tokens (affine space), one mask per
            // missing chunk
            let mut tokens: Vec<Token<F>> = Vec::new();
            let mut span_lens: Vec<usize> = Vec::new();
            let mut span_starts: Vec<usize> = Vec::new();
            for (run_start, run_len) in missing_runs(wmask) {
                let mut off = 0;
                while off < run_len {
                    let chunk = (run_len - off).min(max_chunk);
                    span_starts.push(start + run_start + off);
                    span_lens.push(chunk);
                    off += chunk;
                }
            }
            let mut run_iter = 0usize;
            let mut i = 0usize;
            while i < wmask.len() {
                if wmask[i] {
                    // one mask token per chunk of this run
                    let run_len = wmask[i..].iter().take_while(|&&m| m).count();
                    let mut off = 0;
                    while off < run_len {
                        tokens.push(Token::Mask);
                        off += (run_len - off).min(max_chunk);
                        run_iter += 1;
                    }
                    i += run_len;
                } else {
                    let z = (F::of_f64(wvals[i]) - stats.mean) / stats.stdev;
                    tokens.push(Token::Patch(vec![gamma * z + beta]));
                    i += 1;
                }
            }
            debug_assert_eq!(run_iter, span_lens.len());

            if !span_lens.is_empty() {
                let spans = model.infill(&tokens, &span_lens, quintuple)?;
                for (k, span) in spans.iter().enumerate() {
                    for (j, p) in span.iter().enumerate() {
                        let z = p[0];
                        let raw = (z * stats.stdev + stats.mean).as_f64();
                        filled[span_starts[k] + j] = raw;
                    }
                }
            }
            start = end;
        }
        out.push(filled);
    }
    Ok(out)
}

/// Robust location/scale for scoring windows: median and scaled MAD.
/// Unlike the mean/std pair this is barely moved by a spike inside the
/// window, so errors near an anomaly stay on the clean scale instead of
/// being inflated by the anomaly's own contribution to the statistics.
fn robust_stats(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let median = v[v.len() / 2];
    let mut dev: Vec<f64> = values.iter().map(|x| (x - median).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = dev[dev.len() / 2];
    let scale = (1.4826 * mad).max(1e-6);
    (median, scale)
}

/// Observed context values are clipped at this many robust deviations
/// before being fed to the model, bounding how far an extreme neighbor
/// can distort the reconstruction of a masked patch.
const CONTEXT_CLIP: f64 = 8.0;

/// Patches containing a point beyond this many robust deviations are
/// treated as unobserved while scoring their neighbors: they are masked
/// in context (and infilled on the fly), so an extreme spike cannot
/// distort the reconstructions around it. The spike itself is still
/// scored against its raw value in its own round.
const OUTLIER_MASK_Z: f64 = 5.0;

/// Per-point squared reconstruction error from sliding-window masked
/// reconstruction: within each window, patches are masked in round-robin
/// groups so every point is reconstructed once per covering window;
/// scores are averaged over the windows covering each point.
pub fn reconstruction_scores<F: Real>(
    model: &Model<F>,
    series: &[Vec<f64>],
    quintuple: &GranularityQuintuple,
    window: usize,
) -> Result<Vec<Vec<f64>>> {
    let patch_len = model.config().patch_len;
    if window == 0 || window % patch_len != 0 {
        return Err(Error::Config(format!(
            "reconstruction window {window} not a positive multiple of patch length {patch_len}"
        )));
    }
    let n_patches = window / patch_len;
    if n_patches < 2 {
        return Err(Error::Config(
            "reconstruction window must hold at least 2 patches".into(),
        ));
    }
    let groups = 4.min(n_patches);
    let (gamma, beta) = model.revin_affine();

    let mut out = Vec::with_capacity(series.len());
    for channel in series {
        let t_len = channel.len();
        if t_len < window {
            return Err(Error::Data(format!(
                "series of {t_len} points shorter than window {window}"
            )));
        }
        let mut sum = vec![0.0f64; t_len];
        let mut count = vec![0usize; t_len];
        let mut starts: Vec<usize> = (0..=t_len - window).step_by(window / 2).collect();
        if *starts.last().unwrap() != t_len - window {
            starts.push(t_len - window);
        }
        for &wstart in &starts {
            let wvals = &channel[wstart..wstart + window];
            let (center, scale) = robust_stats(wvals);
            let normed: Vec<f64> = wvals.iter().map(|&v| (v - center) / scale).collect();
            let outlier_patch: Vec<bool> = (0..n_patches)
                .map(|p| {
                    normed[p * patch_len..(p + 1) * patch_len]
                        .iter()
                        .any(|z| z.abs() > OUTLIER_MASK_Z)
                })
                .collect();
            for g in 0..groups {
                let is_masked =
                    |p: usize| p % groups == g || outlier_patch[p];
                if (0..n_patches).all(is_masked) {
                    continue;
                }
                let mut tokens: Vec<Token<F>> = Vec::new();
                let mut span_positions: Vec<usize> = Vec::new();
                for p in 0..n_patches {
                    if is_masked(p) {
                        tokens.push(Token::Mask);
                        span_positions.push(p);
                    } else {
                        let payload: Vec<F> = normed[p * patch_len..(p + 1) * patch_len]
                            .iter()
                            .map(|&z| {
                                gamma * F::of_f64(z.clamp(-CONTEXT_CLIP, CONTEXT_CLIP)) + beta
                            })
                            .collect();
                        tokens.push(Token::Patch(payload));
                    }
                }
                let span_lens = vec![1usize; span_positions.len()];
                let recon = model.infill(&tokens, &span_lens, quintuple)?;
                for (k, &p) in span_positions.iter().enumerate() {
                    if p % groups != g {
                        continue; // outlier masked for context only this round
                    }
                    let pred = &recon[k][0];
                    for c in 0..patch_len {
                        let raw = pred[c].as_f64() * scale + center;
                        let idx = wstart + p * patch_len + c;
                        let e = raw - channel[idx];
                        sum[idx] += e * e;
                        count[idx] += 1;
                    }
                }
            }
        }
        out.push(
            sum.iter()
                .zip(&count)
                .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
                .collect(),
        );
    }
    Ok(out)
}

/// Linear-interpolation quantile (the `[x_0..x_{n-1}]` order-statistic
/// convention where q=0.5 of [1,2,3,4] is 2.5).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("quantile of empty set".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("quantile {q} outside [0,1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] * (1.0 - frac) + sorted[hi] * frac)
}

/// Threshold the scores at a quantile of the validation scores: a point
/// is anomalous iff its score strictly exceeds the threshold.
pub fn detect(scores: &[f64], val_scores: &[f64], threshold_quantile: f64) -> Result<Vec<bool>> {
    if scores.iter().chain(val_scores).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("detect: non-finite score".into()));
    }
    let threshold = quantile(val_scores, threshold_quantile)?;
    Ok(scores.iter().map(|&s| s > threshold).collect())
}

/// Segment adjustment: every maximal ground-truth anomaly segment that
/// contains at least one predicted point counts as fully detected.
/// Predictions outside truth segments are unchanged.
pub fn point_adjust(pred: &[bool], truth: &[bool]) -> Result<Vec<bool>> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "point_adjust: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut adjusted = pred.to_vec();
    for (start, len) in missing_runs(truth) {
        if pred[start..start + len].iter().any(|&p| p) {
            for a in adjusted[start..start + len].iter_mut() {
                *a = true;
            }
        }
    }
    Ok(adjusted)
}

/// Precision / recall / F1 over boolean labels. With no positives on
/// either side the F1 is defined as 0 and flagged degenerate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

pub fn detection_scores(pred: &[bool], truth: &[bool]) -> Result<DetectionScores> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "detection_scores: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fnn = 0usize;
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    if tp + fp + fnn == 0 {
        return Ok(DetectionScores {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            degenerate: true,
        });
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fnn > 0 {
        tp as f64 / (tp + fnn) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(DetectionScores {
        precision,
        recall,
        f1,
        degenerate: false,
    })
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64
}

pub fn mae(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::ModelConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_model(patch_len: usize) -> Model<f64> {
        let cfg = ModelConfig {
            d_model: 16,
            n_layers: 1,
            patch_len,
            n_heads: 2,
            d_fk: 8,
            max_pos: 128,
            max_span: 16,
            seed: 0,
            ..ModelConfig::default()
        };
        let mut m: Model<f64> = Model::new(cfg).unwrap();
        for p in m.params_mut() {
            p.value.fill(0.0);
        }
        m
    }

    fn quint() -> GranularityQuintuple {
        GranularityQuintuple::new(0, 0, 15, 0, 0)
    }

    #[test]
    fn zero_model_forecasts_the_channel_mean() {
        let model = zero_model(4);
        let history = vec![vec![5.0f64; 64], vec![-3.0f64; 64]];
        let spec = ForecastSpec {
            lookback: 32,
            horizon: 8,
        };
        let out = forecast(&model, &history, &quint(), &spec).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].len(), 8);
        for &v in &out[0] {
            assert!((v - 5.0).abs() < 1e-9);
        }
        for &v in &out[1] {
            assert!((v + 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn horizon_must_divide_by_patch_len() {
        let model = zero_model(4);
        let spec = ForecastSpec {
            lookback: 32,
            horizon: 10,
        };
        assert!(forecast(&model, &[vec![0.0; 64]], &quint(), &spec).is_err());
    }

    #[test]
    fn imputation_leaves_observed_points_bit_unchanged() {
        let model = zero_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let series: Vec<Vec<f64>> = vec![(0..100).map(|_| rng.random_range(-5.0..5.0)).collect()];
        let missing: Vec<bool> = (0..100).map(|i| i % 7 == 3).collect();
        let out = impute(&model, &series, &missing, &quint(), 64).unwrap();
        for i in 0..100 {
            if !missing[i] {
                assert_eq!(out[0][i].to_bits(), series[0][i].to_bits());
            }
        }
    }

    #[test]
    fn no_missing_points_is_identity() {
        let model = zero_model(1);
        let series = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]];
        let missing = vec![false; 6];
        let out = impute(&model, &series, &missing, &quint(), 64).unwrap();
        assert_eq!(out[0], series[0]);
    }

    #[test]
    fn patch_checkpoint_rejected_for_imputation() {
        let model = zero_model(4);
        let res = impute(&model, &[vec![0.0; 16]], &[false; 16], &quint(), 16);
        assert!(matches!(res, Err(Error::Incompatible(_))));
    }

    #[test]
    fn fully_missing_channel_rejected() {
        let model = zero_model(1);
        let res = impute(&model, &[vec![0.0; 16]], &[true; 16], &quint(), 16);
        assert!(matches!(res, Err(Error::Data(_))));
    }

    #[test]
    fn exact_mask_ratio_within_one_over_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(len, ratio) in &[(100usize, 0.125), (97, 0.25), (1000, 0.375), (64, 0.5)] {
            let mask = exact_missing_mask(len, ratio, &mut rng).unwrap();
            let realized = mask.iter().filter(|&&m| m).count() as f64 / len as f64;
            assert!(
                (realized - ratio).abs() <= 1.0 / len as f64 + 1e-12,
                "len {len} ratio {ratio} got {realized}"
            );
        }
        assert!(exact_missing_mask(10, 1.5, &mut rng).is_err());
    }

    #[test]
    fn alternating_mask_gives_unit_runs() {
        let mask: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let runs = missing_runs(&mask);
        assert_eq!(runs.len(), 5);
        assert!(runs.iter().all(|&(_, l)| l == 1));
        let mask2 = [true, true, false, true, false, false, true, true, true];
        assert_eq!(missing_runs(&mask2), vec![(0, 2), (3, 1), (6, 3)]);
    }

    #[test]
    fn constant_series_scores_zero_for_zero_model() {
        let model = zero_model(4);
        let series = vec![vec![7.5f64; 64]];
        let scores = reconstruction_scores(&model, &series, &quint(), 32).unwrap();
        assert!(scores[0].iter().all(|&s| s.abs() < 1e-18));
        assert!(scores[0].iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn quantile_matches_interpolation_oracle() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5).unwrap(), 2.5);
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 4.0);
        let labels = detect(&v, &v, 0.5).unwrap();
        assert_eq!(labels, vec![false, false, true, true]);
    }

    #[test]
    fn quantile_extremes() {
        let val = [1.0, 2.0, 3.0, 4.0];
        let scores = [1.5, 2.5, 3.5];
        assert_eq!(
            detect(&scores, &val, 1.0).unwrap(),
            vec![false, false, false]
        );
        assert_eq!(detect(&scores, &val, 1e-12).unwrap(), vec![true, true, true]);
    }

    #[test]
    fn detect_is_rank_invariant_under_monotone_transform() {
        // 41 validation scores: q=0.9 selects order statistic 36 exactly,
        // so the threshold itself transforms with the scores
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let val: Vec<f64> = (0..41).map(|_| rng.random_range(0.0..1.0)).collect();
        let scores: Vec<f64> = (0..80).map(|_| rng.random_range(0.0..1.0)).collect();
        let l1 = detect(&scores, &val, 0.9).unwrap();
        let t = |v: f64| (3.0 * v).exp();
        let val_t: Vec<f64> = val.iter().map(|&v| t(v)).collect();
        let scores_t: Vec<f64> = scores.iter().map(|&v| t(v)).collect();
        let l2 = detect(&scores_t, &val_t, 0.9).unwrap();
        assert_eq!(l1, l2);
    }

    #[test]
    fn point_adjust_flips_whole_segment() {
        let truth = [false, true, true, true, false];
        let pred = [false, false, true, false, false];
        let adj = point_adjust(&pred, &truth).unwrap();
        assert_eq!(adj, vec![false, true, true, true, false]);
        // all-zero predictions unchanged
        let none = point_adjust(&[false; 5], &truth).unwrap();
        assert_eq!(none, vec![false; 5]);
    }

    /// Independent brute-force oracle: adjusted[i] for a truth point is
    /// "any prediction within i's segment", scanned per point.
    fn adjust_oracle(pred: &[bool], truth: &[bool]) -> Vec<bool> {
        let n = pred.len();
        let mut out = pred.to_vec();
        for i in 0..n {
            if truth[i] {
                let mut lo = i;
                while lo > 0 && truth[lo - 1] {
                    lo -= 1;
                }
                let mut hi = i;
                while hi + 1 < n && truth[hi + 1] {
                    hi += 1;
                }
                out[i] = (lo..=hi).any(|j| pred[j]);
            }
        }
        out
    }

    #[test]
    fn point_adjust_matches_oracle_and_is_idempotent_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = 50;
            let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
            let pred: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
            let adj = point_adjust(&pred, &truth).unwrap();
            assert_eq!(adj, adjust_oracle(&pred, &truth));
            // idempotent
            assert_eq!(point_adjust(&adj, &truth).unwrap(), adj);
            // monotone: adding a predicted point never removes adjusted 1s
            let mut pred2 = pred.clone();
            let flip = rng.random_range(0..n);
            pred2[flip] = true;
            let adj2 = point_adjust(&pred2, &truth).unwrap();
            for i in 0..n {
                assert!(!adj[i] || adj2[i]);
            }
        }
    }

    #[test]
    fn metric_conventions() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        let a = [1.0, -1.0, 1.0, -1.0];
        let z = [0.0; 4];
        assert_eq!(mse(&a, &z), 1.0);
        assert_eq!(mae(&a, &z), 1.0);

        let t = [true, false, true, true, false];
        let s = detection_scores(&t, &t).unwrap();
        assert_eq!(s.f1, 1.0);
        assert!(!s.degenerate);
        let empty = detection_scores(&[false; 4], &[false; 4]).unwrap();
        assert_eq!(empty.f1, 0.0);
        assert!(empty.degenerate);
    }
}
