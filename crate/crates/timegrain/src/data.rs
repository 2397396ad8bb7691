//! Dataset ingestion (delimited text time series), granularity inference
//! from timestamps, chronological train/val/test splitting, and synthetic
//! generators for desk-scale experiments.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDateTime;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedding::GranularityQuintuple;
use crate::error::{Error, Result};

/// Chronological, disjoint index ranges: train before val before test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Splits {
    pub fn all(len: usize) -> Self {
        Splits {
            train: 0..len,
            val: len..len,
            test: len..len,
        }
    }
}

/// A multivariate series: channels-by-time values, optional uniform
/// timestamps, the sampling-granularity quintuple and split ranges.
#[derive(Clone, Debug)]
pub struct TimeSeriesDataset {
    pub name: String,
    /// `[C][T]`
    pub values: Vec<Vec<f64>>,
    /// Epoch milliseconds, strictly increasing and uniform when present.
    pub timestamps: Option<Vec<i64>>,
    pub granularity: GranularityQuintuple,
    pub splits: Splits,
}

impl TimeSeriesDataset {
    pub fn n_channels(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c]
    }
}

/// Decompose the (modal) timestamp delta into the granularity quintuple.
/// Spacing must be uniform within 1%.
pub fn infer_granularity(timestamps: &[i64]) -> Result<GranularityQuintuple> {
    if timestamps.len() < 2 {
        return Err(Error::Data(
            "infer_granularity: need at least 2 timestamps".into(),
        ));
    }
    let mut deltas: Vec<i64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    if deltas.iter().any(|&d| d <= 0) {
        return Err(Error::Data(
            "infer_granularity: timestamps not strictly increasing".into(),
        ));
    }
    deltas.sort_unstable();
    let modal = deltas[deltas.len() / 2];
    for (i, w) in timestamps.windows(2).enumerate() {
        let d = w[1] - w[0];
        if (d - modal).abs() as f64 > 0.01 * modal as f64 {
            return Err(Error::Data(format!(
                "infer_granularity: irregular spacing at index {} ({d} ms vs modal {modal} ms)",
                i + 1
            )));
        }
    }
    GranularityQuintuple::from_millis(modal)
}

fn parse_timestamp(field: &str, row: usize) -> Result<i64> {
    if let Ok(ms) = field.parse::<i64>() {
        return Ok(ms);
    }
    for fmt in [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y/%m/%d %H:%M:%S",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(field, fmt) {
            return Ok(dt.and_utc().timestamp_millis());
        }
    }
    Err(Error::Data(format!(
        "row {row}: cannot parse timestamp {field:?}"
    )))
}

/// Load a comma- or tab-delimited rectangular numeric table; channels are
/// columns (minus the optional leading timestamp column). A non-numeric
/// first row is treated as a header.
pub fn load_delimited(path: &Path, has_timestamp: bool) -> Result<TimeSeriesDataset> {
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_delimited(&text, has_timestamp, name)
}

pub fn parse_delimited(
    text: &str,
    has_timestamp: bool,
    name: String,
) -> Result<TimeSeriesDataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let delim = match lines.peek() {
        Some((_, l)) if l.contains('\t') => '\t',
        Some(_) => ',',
        None => return Err(Error::Data("empty input".into())),
    };
    let mut header_skipped = false;
    let mut width: Option<usize> = None;
    let mut timestamps: Vec<i64> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        if !header_skipped {
            header_skipped = true;
            let data_fields = if has_timestamp { &fields[1..] } else { &fields[..] };
            let numeric = data_fields.iter().all(|f| f.parse::<f64>().is_ok());
            if !numeric {
                continue; // header row
            }
        }
        match width {
            None => {
                width = Some(fields.len());
                let n_data = fields.len() - usize::from(has_timestamp);
                if n_data == 0 {
                    return Err(Error::Data(format!("row {line_no}: no data columns")));
                }
                columns = vec![Vec::new(); n_data];
            }
            Some(w) if fields.len() != w => {
                return Err(Error::Data(format!(
                    "row {line_no}: {} fields, expected {w} (ragged table)",
                    fields.len()
                )));
            }
            _ => {}
        }
        let data_fields = if has_timestamp {
            timestamps.push(parse_timestamp(fields[0], line_no)?);
            &fields[1..]
        } else {
            &fields[..]
        };
        for (c, f) in data_fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                Error::Data(format!("row {line_no}: non-numeric cell {f:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("row {line_no}: non-finite value")));
            }
            columns[c].push(v);
        }
    }
    if columns.is_empty() || columns[0].is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    let len = columns[0].len();
    let (timestamps, granularity) = if has_timestamp {
        let g = infer_granularity(&timestamps)?;
        (Some(timestamps), g)
    } else {
        (None, GranularityQuintuple::new(0, 1, 0, 0, 0))
    };
    Ok(TimeSeriesDataset {
        name,
        values: columns,
        timestamps,
        granularity,
        splits: Splits::all(len),
    })
}

/// Serialize values (and timestamps when present) back to the same
/// delimited format; floats use shortest round-trip formatting so a
/// load/save cycle is value-identical.
pub fn to_delimited(values: &[Vec<f64>], timestamps: Option<&[i64]>) -> String {
    let t = values.first().map_or(0, |c| c.len());
    let mut out = String::new();
    for i in 0..t {
        let mut first = true;
        if let Some(ts) = timestamps {
            let _ = write!(out, "{}", ts[i]);
            first = false;
        }
        for col in values {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{}", col[i]);
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn save_delimited(
    path: &Path,
    values: &[Vec<f64>],
    timestamps: Option<&[i64]>,
) -> Result<()> {
    std::fs::write(path, to_delimited(values, timestamps))?;
    Ok(())
}

/// Chronological contiguous split by fractions (must sum to 1).
pub fn split(dataset: &mut TimeSeriesDataset, fractions: (f64, f64, f64)) -> Result<()> {
    let (a, b, c) = fractions;
    for f in [a, b, c] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Config(format!("split: fraction {f} outside [0,1]")));
        }
    }
    if ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split: fractions sum to {}, expected 1",
            a + b + c
        )));
    }
    let t = dataset.len();
    let t1 = (t as f64 * a).round() as usize;
    let t2 = (t as f64 * (a + b)).round() as usize;
    dataset.splits = Splits {
        train: 0..t1,
        val: t1..t2,
        test: t2..t,
    };
    Ok(())
}

/// One sinusoidal component of a synthetic series.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    /// Period in samples (>= 2).
    pub period: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Spike-anomaly injection: `count` segments of `width` points shifted by
/// `magnitude` clean-series standard deviations, placed uniformly at
/// random inside `region` (a fraction range of the series, default all
/// of it).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyInjection {
    pub count: usize,
    pub magnitude: f64,
    pub width: usize,
    #[serde(default)]
    pub region: Option<[f64; 2]>,
}

/// Desk-scale synthetic stand-in for a large pretraining corpus: a sum of
/// sinusoids plus Gaussian noise, with optional labeled spike anomalies
/// and an optional point-level missing mask.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_synth_name")]
    pub name: String,
    pub channels: usize,
    pub len: usize,
    pub components: Vec<Component>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub anomalies: Option<AnomalyInjection>,
    /// Point-level missing ratio shared across channels.
    #[serde(default)]
    pub missing_ratio: Option<f64>,
    #[serde(default = "default_synth_granularity")]
    pub granularity: [u32; 5],
}

fn default_synth_name() -> String {
    "synthetic".into()
}

fn default_synth_granularity() -> [u32; 5] {
    [0, 0, 15, 0, 0]
}

/// Ground truth emitted alongside synthetic data (per time point).
#[derive(Clone, Debug, Default)]
pub struct SyntheticTruth {
    pub anomaly_mask: Option<Vec<bool>>,
    pub missing_mask: Option<Vec<bool>>,
}

pub fn synthesize(
    spec: &SyntheticSpec,
    rng: &mut impl Rng,
) -> Result<(TimeSeriesDataset, SyntheticTruth)> {
    if spec.channels == 0 || spec.len == 0 {
        return Err(Error::Config("synthesize: empty spec".into()));
    }
    if spec.components.iter().any(|c| c.period < 2.0) {
        return Err(Error::Config("synthesize: component period < 2 samples".into()));
    }
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let mut values = Vec::with_capacity(spec.channels);
    for ch in 0..spec.channels {
        // distinct phase offset per channel so channels are not clones
        let ch_phase = ch as f64 * 0.7;
        let mut series = Vec::with_capacity(spec.len);
        for t in 0..spec.len {
            let mut v = 0.0;
            for comp in &spec.components {
                v += comp.amplitude
                    * (2.0 * std::f64::consts::PI * t as f64 / comp.period
                        + comp.phase
                        + ch_phase)
                        .sin();
            }
            if let Some(n) = &noise {
                v += n.sample(rng);
            }
            series.push(v);
        }
        values.push(series);
    }

    let mut truth = SyntheticTruth::default();
    if let Some(a) = &spec.anomalies {
        if a.count * a.width.max(1) * 4 > spec.len {
            return Err(Error::Config(
                "synthesize: anomaly segments would cover most of the series".into(),
            ));
        }
        let clean_std = {
            let flat: Vec<f64> = values.iter().flatten().copied().collect();
            let mean = flat.iter().sum::<f64>() / flat.len() as f64;
            (flat.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / flat.len() as f64).sqrt()
        };
        let (rlo, rhi) = match a.region {
            Some([lo, hi]) if (0.0..=1.0).contains(&lo) && lo < hi && hi <= 1.0 => (
                (lo * spec.len as f64) as usize,
                (hi * spec.len as f64) as usize,
            ),
            Some(r) => {
                return Err(Error::Config(format!(
                    "synthesize: invalid anomaly region {r:?}"
                )))
            }
            None => (0, spec.len),
        };
        if rhi - rlo <= a.width + 2 {
            return Err(Error::Config(
                "synthesize: anomaly region too small for the segment width".into(),
            ));
        }
        let mut mask = vec![false; spec.len];
        let mut placed = 0usize;
        let mut guard = 0usize;
        while placed < a.count {
            guard += 1;
            if guard > 10_000 {
                return Err(Error::Config(
                    "synthesize: could not place disjoint anomaly segments".into(),
                ));
            }
            let start = rng.random_range(rlo..rhi - a.width);
            // keep one clean point around each segment so segments stay separate
            let lo = start.saturating_sub(1);
            let hi = (start + a.width + 1).min(spec.len);
            if mask[lo..hi].iter().any(|&m| m) {
                continue;
            }
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            for i in start..start + a.width {
                mask[i] = true;
                for col in values.iter_mut() {
                    col[i] += sign * a.magnitude * clean_std;
                }
            }
            placed += 1;
        }
        truth.anomaly_mask = Some(mask);
    }
    if let Some(ratio) = spec.missing_ratio {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::Config(format!(
                "synthesize: missing ratio {ratio} outside [0,1)"
            )));
        }
        let mask: Vec<bool> = (0..spec.len).map(|_| rng.random_bool(ratio)).collect();
        truth.missing_mask = Some(mask);
    }

    let len = spec.len;
    Ok((
        TimeSeriesDataset {
            name: spec.name.clone(),
            values,
            timestamps: None,
            granularity: GranularityQuintuple::from_array(spec.granularity),
            splits: Splits::all(len),
        },
        truth,
    ))
}
