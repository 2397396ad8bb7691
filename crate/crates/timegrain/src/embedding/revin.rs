use crate::error::{Error, Result};
use crate::numerics::Real;

/// Per-instance normalization statistics recorded for inversion. An
/// instance is one window of one channel. The learnable affine lives in
/// the model (`revin.gamma` / `revin.beta`); these are pure data
/// statistics.
#[derive(Clone, Copy, Debug)]
pub struct RevinStats<F: Real> {
    pub mean: F,
    pub stdev: F,
    /// Window was (numerically) constant; the stdev is the eps floor.
    pub degenerate: bool,
}

const VAR_EPS: f64 = 1e-10;
const DEGENERATE_VAR: f64 = 1e-8;

/// Standardize a window to zero mean / unit variance (the pre-affine part
/// of reversible instance normalization).
pub fn standardize<F: Real>(x: &[F]) -> Result<(Vec<F>, RevinStats<F>)> {
    if x.len() < 2 {
        return Err(Error::Data(format!(
            "standardize: window length {} < 2",
            x.len()
        )));
    }
    let n = F::from_usize(x.len()).unwrap();
    let mean = x.iter().fold(F::zero(), |s, &v| s + v) / n;
    let var = x
        .iter()
        .fold(F::zero(), |s, &v| s + (v - mean) * (v - mean))
        / n;
    let degenerate = var.as_f64() < DEGENERATE_VAR;
    let stdev = (var + F::of_f64(VAR_EPS)).sqrt();
    let out = x.iter().map(|&v| (v - mean) / stdev).collect();
    Ok((
        out,
        RevinStats {
            mean,
            stdev,
            degenerate,
        },
    ))
}

/// Invert [`standardize`].
pub fn destandardize<F: Real>(y: &[F], stats: &RevinStats<F>) -> Vec<F> {
    y.iter().map(|&v| v * stats.stdev + stats.mean).collect()
}

/// Full reversible instance normalization: standardize then apply the
/// affine `gamma * x + beta`.
pub fn revin_normalize<F: Real>(
    x: &[F],
    gamma: F,
    beta: F,
) -> Result<(Vec<F>, RevinStats<F>)> {
    let (z, stats) = standardize(x)?;
    Ok((z.iter().map(|&v| gamma * v + beta).collect(), stats))
}

/// Exact inverse of [`revin_normalize`]; `gamma == 0` is not invertible.
pub fn revin_denormalize<F: Real>(
    y: &[F],
    stats: &RevinStats<F>,
    gamma: F,
    beta: F,
) -> Result<Vec<F>> {
    if gamma == F::zero() {
        return Err(Error::Numeric(
            "revin_denormalize: gamma is zero, affine not invertible".into(),
        ));
    }
    Ok(y
        .iter()
        .map(|&v| ((v - beta) / gamma) * stats.stdev + stats.mean)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_stats_and_centers() {
        let (z, stats) = standardize(&[1.0f64, 2.0, 3.0]).unwrap();
        assert!((stats.mean - 2.0).abs() < 1e-12);
        let m: f64 = z.iter().sum::<f64>() / 3.0;
        assert!(m.abs() < 1e-12);
        let var: f64 = z.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!((var - 1.0).abs() < 1e-5);
        assert!(!stats.degenerate);
    }

    #[test]
    fn round_trip_for_several_gammas() {
        let x = [0.3f64, -1.2, 4.5, 2.2, 0.0, 9.1];
        for gamma in [0.5f64, 1.0, 2.0] {
            let (y, stats) = revin_normalize(&x, gamma, 0.25).unwrap();
            let back = revin_denormalize(&y, &stats, gamma, 0.25).unwrap();
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-5, "gamma={gamma}");
            }
        }
    }

    #[test]
    fn constant_window_is_degenerate_zeros() {
        let (z, stats) = standardize(&[5.0f64; 8]).unwrap();
        assert!(stats.degenerate);
        assert!((stats.mean - 5.0).abs() < 1e-12);
        assert!(z.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gamma_zero_not_invertible() {
        let stats = RevinStats {
            mean: 0.0f64,
            stdev: 1.0,
            degenerate: false,
        };
        assert!(revin_denormalize(&[1.0], &stats, 0.0, 0.0).is_err());
    }

    #[test]
    fn zeros_denormalize_to_mean() {
        let (_, stats) = standardize(&[3.0f64, 5.0, 7.0]).unwrap();
        let back = revin_denormalize(&[0.0, 0.0], &stats, 1.0, 0.0).unwrap();
        for v in back {
            assert!((v - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scaling_output_scales_residual_from_mean() {
        // algebraic oracle: denorm(2y) - mean == 2 (denorm(y) - mean) at beta=0
        let x = [1.0f64, 4.0, -2.0, 8.0];
        let (y, stats) = revin_normalize(&x, 1.0, 0.0).unwrap();
        let doubled: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let d1 = revin_denormalize(&y, &stats, 1.0, 0.0).unwrap();
        let d2 = revin_denormalize(&doubled, &stats, 1.0, 0.0).unwrap();
        for i in 0..x.len() {
            let r1 = d1[i] - stats.mean;
            let r2 = d2[i] - stats.mean;
            assert!((r2 - 2.0 * r1).abs() < 1e-9);
        }
    }

    #[test]
    fn too_short_window_rejected() {
        assert!(standardize(&[1.0f64]).is_err());
    }
}
