use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, Real, Tensor, VarId};

/// `[day, hour, minute, second, millisecond]` descriptor of a series'
/// sampling interval. A 15-minute series is `[0,0,15,0,0]`, a daily one
/// `[1,0,0,0,0]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GranularityQuintuple {
    pub day: u32,
    pub hour: u32,
    pub minute: u32,
    pub second: u32,
    pub millisecond: u32,
}

impl GranularityQuintuple {
    pub fn new(day: u32, hour: u32, minute: u32, second: u32, millisecond: u32) -> Self {
        GranularityQuintuple {
            day,
            hour,
            minute,
            second,
            millisecond,
        }
    }

    pub fn from_array(a: [u32; 5]) -> Self {
        GranularityQuintuple::new(a[0], a[1], a[2], a[3], a[4])
    }

    /// Decompose a sampling interval in milliseconds.
    pub fn from_millis(delta_ms: i64) -> Result<Self> {
        if delta_ms <= 0 {
            return Err(Error::Data(format!(
                "granularity: non-positive interval {delta_ms} ms"
            )));
        }
        let mut rem = delta_ms as u64;
        let day = rem / 86_400_000;
        rem %= 86_400_000;
        let hour = rem / 3_600_000;
        rem %= 3_600_000;
        let minute = rem / 60_000;
        rem %= 60_000;
        let second = rem / 1_000;
        rem %= 1_000;
        Ok(GranularityQuintuple::new(
            day as u32,
            hour as u32,
            minute as u32,
            second as u32,
            rem as u32,
        ))
    }

    pub fn total_millis(&self) -> i64 {
        self.day as i64 * 86_400_000
            + self.hour as i64 * 3_600_000
            + self.minute as i64 * 60_000
            + self.second as i64 * 1_000
            + self.millisecond as i64
    }

    pub fn is_zero(&self) -> bool {
        self.total_millis() == 0
    }

    pub fn as_raw(&self) -> [f64; 5] {
        [
            self.day as f64,
            self.hour as f64,
            self.minute as f64,
            self.second as f64,
            self.millisecond as f64,
        ]
    }
}

/// How the raw quintuple integers are scaled before the linear query
/// embedding. The millisecond field spans five orders of magnitude across
/// datasets, so the default compresses with log1p; raw mode keeps the map
/// exactly linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GranularityScaling {
    #[default]
    Log1p,
    Raw,
}

pub fn scale_quintuple(g: &GranularityQuintuple, mode: GranularityScaling) -> [f64; 5] {
    let raw = g.as_raw();
    match mode {
        GranularityScaling::Raw => raw,
        GranularityScaling::Log1p => raw.map(|v| (1.0 + v).ln()),
    }
}

/// Deterministic linear map of the (scaled) quintuple onto the gating
/// query space: `q_f = q · W_f^Q` with `W_f^Q` of shape `[5, d_fk]`.
pub fn encode_granularity_value<F: Real>(
    g: &GranularityQuintuple,
    mode: GranularityScaling,
    w_fq: &Tensor<F>,
) -> Result<Tensor<F>> {
    let q = scaled_row::<F>(g, mode)?;
    crate::numerics::matmul(&q, w_fq)
}

/// Differentiable version of [`encode_granularity_value`]; returns a
/// `[1, d_fk]` node.
pub fn encode_granularity<F: Real>(
    graph: &mut Graph<F>,
    g: &GranularityQuintuple,
    mode: GranularityScaling,
    w_fq: VarId,
) -> Result<VarId> {
    if graph.value(w_fq).rows() != 5 {
        return Err(Error::Dimension(format!(
            "encode_granularity: W_f^Q has {} rows, expected 5",
            graph.value(w_fq).rows()
        )));
    }
    let q = graph.leaf(scaled_row::<F>(g, mode)?);
    graph.matmul(q, w_fq)
}

fn scaled_row<F: Real>(g: &GranularityQuintuple, mode: GranularityScaling) -> Result<Tensor<F>> {
    let scaled = scale_quintuple(g, mode);
    Tensor::new(vec![1, 5], scaled.iter().map(|&v| F::of_f64(v)).collect())
}
