//! Spectral-distribution measurement: per-series FFT spectrum extraction
//! and 2D Gaussian kernel density estimation of the (amplitude, frequency)
//! and (phase, frequency) joint distributions with Scott's-rule bandwidth,
//! plus an L1 discrepancy measure between density grids. This is the
//! tooling behind the finding that series of different time granularities
//! occupy visibly different regions of these joint distributions.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::spectral::rfft;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumMode {
    Amplitude,
    Phase,
}

impl SpectrumMode {
    pub fn label(&self) -> &'static str {
        match self {
            SpectrumMode::Amplitude => "amplitude",
            SpectrumMode::Phase => "phase",
        }
    }
}

/// Cloud of (frequency, amplitude) or (frequency, phase) points; one point
/// per positive-frequency bin. Frequencies are in cycles/sample, in
/// (0, 0.5]; the DC bin is excluded.
#[derive(Clone, Debug, Default)]
pub struct SpectrumSample {
    pub points: Vec<(f64, f64)>,
}

impl SpectrumSample {
    pub fn extend(&mut self, other: SpectrumSample) {
        self.points.extend(other.points);
    }
}

/// rFFT of the mean-removed series (truncated to the largest power of two
/// at desk scale) mapped to per-bin points. Amplitudes are normalized so
/// a unit sinusoid reports amplitude 1.
pub fn extract_spectrum(series: &[f64], mode: SpectrumMode) -> Result<SpectrumSample> {
    if series.len() < 8 {
        return Err(Error::Data(format!(
            "extract_spectrum: series of {} points, need >= 8",
            series.len()
        )));
    }
    let d = largest_pow2_at_most(series.len());
    let mean = series[..d].iter().sum::<f64>() / d as f64;
    let centered: Vec<f64> = series[..d].iter().map(|&v| v - mean).collect();
    let spec = rfft(&Tensor::vector(centered))?;
    let b = spec.bin_count();
    let mut points = Vec::with_capacity(b - 1);
    for k in 1..b {
        let re = spec.bins.re.data()[k];
        let im = spec.bins.im.data()[k];
        let freq = k as f64 / d as f64;
        let value = match mode {
            SpectrumMode::Amplitude => {
                let mag = (re * re + im * im).sqrt();
                if k == b - 1 {
                    mag / d as f64
                } else {
                    2.0 * mag / d as f64
                }
            }
            SpectrumMode::Phase => im.atan2(re),
        };
        points.push((freq, value));
    }
    Ok(SpectrumSample { points })
}

fn largest_pow2_at_most(n: usize) -> usize {
    let mut p = 8usize;
    while p * 2 <= n {
        p *= 2;
    }
    p
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> (f64, usize) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (var.sqrt(), n)
}

/// 2D Scott's rule: `h_x = h_y = n^(-1/6) sqrt(sigma_x sigma_y)` with
/// population standard deviations.
pub fn scott_bandwidth(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Data(format!(
            "scott_bandwidth: {} points, need >= 2",
            points.len()
        )));
    }
    let (sx, n) = population_std(points.iter().map(|p| p.0));
    let (sy, _) = population_std(points.iter().map(|p| p.1));
    if sx <= 0.0 || sy <= 0.0 {
        return Err(Error::Data(
            "scott_bandwidth: degenerate point cloud (zero variance)".into(),
        ));
    }
    let h = (n as f64).powf(-1.0 / 6.0) * (sx * sy).sqrt();
    Ok((h, h))
}

/// Rectangular evaluation grid described by monotone cell edges; the
/// density is evaluated at cell centers.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
}

impl GridSpec {
    pub fn nx(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_edges.len() - 1
    }

    /// Uniform grid extending 5 bandwidths beyond the data range in each
    /// coordinate, with cells of roughly a third of a bandwidth (capped
    /// at `max_cells` per axis).
    pub fn covering(points: &[(f64, f64)], bandwidth: (f64, f64), max_cells: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Data("grid over empty point set".into()));
        }
        let (hx, hy) = bandwidth;
        if hx <= 0.0 || hy <= 0.0 {
            return Err(Error::Config("grid: non-positive bandwidth".into()));
        }
        let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        Ok(GridSpec {
            x_edges: uniform_edges(x0 - 5.0 * hx, x1 + 5.0 * hx, hx / 3.0, max_cells),
            y_edges: uniform_edges(y0 - 5.0 * hy, y1 + 5.0 * hy, hy / 3.0, max_cells),
        })
    }
}

fn uniform_edges(lo: f64, hi: f64, target_cell: f64, max_cells: usize) -> Vec<f64> {
    let span = hi - lo;
    let n = ((span / target_cell).ceil() as usize).clamp(8, max_cells);
    (0..=n).map(|i| lo + span * i as f64 / n as f64).collect()
}

/// Kernel density estimate on a grid: values, bandwidth, sample count.
#[derive(Clone, Debug)]
pub struct DensityGrid {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// Row-major `[nx, ny]`: `density[ix * ny + iy]`.
    pub density: Vec<f64>,
    pub bandwidth: (f64, f64),
    pub n_samples: usize,
}

impl DensityGrid {
    pub fn nx(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_edges.len() - 1
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.density[ix * self.ny() + iy]
    }

    /// Midpoint Riemann sum of the density over the grid.
    pub fn integral(&self) -> f64 {
        let ny = self.ny();
        let mut total = 0.0;
        for ix in 0..self.nx() {
            let dx = self.x_edges[ix + 1] - self.x_edges[ix];
            for iy in 0..ny {
                let dy = self.y_edges[iy + 1] - self.y_edges[iy];
                total += self.density[ix * ny + iy] * dx * dy;
            }
        }
        total
    }

    /// Delimited text export: metadata header then one `x y density` row
    /// per cell center.
    pub fn to_tsv(&self, label: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# label\t{label}");
        let _ = writeln!(out, "# n_samples\t{}", self.n_samples);
        let _ = writeln!(
            out,
            "# bandwidth\t{}\t{}",
            self.bandwidth.0, self.bandwidth.1
        );
        let _ = writeln!(out, "x\ty\tdensity");
        let ny = self.ny();
        for ix in 0..self.nx() {
            let x = 0.5 * (self.x_edges[ix] + self.x_edges[ix + 1]);
            for iy in 0..ny {
                let y = 0.5 * (self.y_edges[iy] + self.y_edges[iy + 1]);
                let _ = writeln!(out, "{x}\t{y}\t{}", self.density[ix * ny + iy]);
            }
        }
        out
    }
}

/// Unit bivariate Gaussian kernel (sigma 1, mean 0; the bandwidth carries
/// all scale): `K(0,0) = 1/(2 pi)`.
fn gaussian_kernel(u: f64, v: f64) -> f64 {
    (1.0 / (2.0 * PI)) * (-0.5 * (u * u + v * v)).exp()
}

/// `f(x,y) = 1/(n h_x h_y) sum_i K((x-x_i)/h_x, (y-y_i)/h_y)` evaluated at
/// every cell center of the grid.
pub fn kde2d(
    points: &[(f64, f64)],
    grid: &GridSpec,
    bandwidth: (f64, f64),
) -> Result<DensityGrid> {
    if points.is_empty() {
        return Err(Error::Data("kde2d: empty point set".into()));
    }
    let (hx, hy) = bandwidth;
    if hx <= 0.0 || hy <= 0.0 {
        return Err(Error::Config("kde2d: non-positive bandwidth".into()));
    }
    let nx = grid.nx();
    let ny = grid.ny();
    let xc: Vec<f64> = (0..nx)
        .map(|i| 0.5 * (grid.x_edges[i] + grid.x_edges[i + 1]))
        .collect();
    let yc: Vec<f64> = (0..ny)
        .map(|i| 0.5 * (grid.y_edges[i] + grid.y_edges[i + 1]))
        .collect();
    let norm = 1.0 / (points.len() as f64 * hx * hy);
    let mut density = vec![0.0f64; nx * ny];
    // kernels past ~8 sigma are numerically zero; skip those cells
    let cut = 8.0;
    for &(px, py) in points {
        let ix_lo = xc.partition_point(|&x| x < px - cut * hx);
        let ix_hi = xc.partition_point(|&x| x <= px + cut * hx);
        let iy_lo = yc.partition_point(|&y| y < py - cut * hy);
        let iy_hi = yc.partition_point(|&y| y <= py + cut * hy);
        for ix in ix_lo..ix_hi {
            let u = (xc[ix] - px) / hx;
            for iy in iy_lo..iy_hi {
                let v = (yc[iy] - py) / hy;
                density[ix * ny + iy] += gaussian_kernel(u, v);
            }
        }
    }
    for d in density.iter_mut() {
        *d *= norm;
    }
    Ok(DensityGrid {
        x_edges: grid.x_edges.clone(),
        y_edges: grid.y_edges.clone(),
        density,
        bandwidth,
        n_samples: points.len(),
    })
}

/// L1 distance between two densities on the same grid:
/// `sum |a - b| * cell_area`, in [0, 2].
pub fn density_distance(a: &DensityGrid, b: &DensityGrid) -> Result<f64> {
    if a.x_edges != b.x_edges || a.y_edges != b.y_edges {
        return Err(Error::Dimension(
            "density_distance: grids do not match".into(),
        ));
    }
    let ny = a.ny();
    let mut total = 0.0;
    for ix in 0..a.nx() {
        let dx = a.x_edges[ix + 1] - a.x_edges[ix];
        for iy in 0..ny {
            let dy = a.y_edges[iy + 1] - a.y_edges[iy];
            total += (a.density[ix * ny + iy] - b.density[ix * ny + iy]).abs() * dx * dy;
        }
    }
    Ok(total)
}

/// Convenience pipeline: Scott bandwidth on the points, covering grid,
/// KDE.
pub fn density_of(points: &[(f64, f64)], max_cells: usize) -> Result<DensityGrid> {
    let bw = scott_bandwidth(points)?;
    let grid = GridSpec::covering(points, bw, max_cells)?;
    kde2d(points, &grid, bw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pure_cosine_concentrates_in_one_bin() {
        let t_len = 64;
        let series: Vec<f64> = (0..t_len)
            .map(|t| (2.0 * PI * 3.0 * t as f64 / t_len as f64).cos())
            .collect();
        let s = extract_spectrum(&series, SpectrumMode::Amplitude).unwrap();
        // point for bin 3 at frequency 3/64 with amplitude 1
        let (freq, amp) = s.points[2];
        assert!((freq - 3.0 / 64.0).abs() < 1e-12);
        assert!((amp - 1.0).abs() < 1e-9);
        for (i, &(_, a)) in s.points.iter().enumerate() {
            if i != 2 {
                assert!(a.abs() < 1e-9);
            }
        }
        // frequencies live in (0, 0.5]
        assert!(s.points.iter().all(|&(f, _)| f > 0.0 && f <= 0.5));
    }

    #[test]
    fn averaged_white_noise_spectrum_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t_len = 256;
        let mut avg = vec![0.0f64; t_len / 2];
        let trials = 50;
        for _ in 0..trials {
            let series: Vec<f64> = (0..t_len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = extract_spectrum(&series, SpectrumMode::Amplitude).unwrap();
            for (i, &(_, a)) in s.points.iter().enumerate() {
                avg[i] += a / trials as f64;
            }
        }
        let mut sorted = avg.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let max = sorted[sorted.len() - 1];
        assert!(max < 5.0 * median, "max {max} vs median {median}");
    }

    #[test]
    fn constant_series_has_zero_amplitudes() {
        let s = extract_spectrum(&[3.25; 32], SpectrumMode::Amplitude).unwrap();
        assert!(s.points.iter().all(|&(_, a)| a.abs() < 1e-12));
    }

    #[test]
    fn phases_in_half_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let series: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = extract_spectrum(&series, SpectrumMode::Phase).unwrap();
        assert!(s.points.iter().all(|&(_, p)| p > -PI - 1e-12 && p <= PI + 1e-12));
    }

    #[test]
    fn scott_rule_reference_values() {
        // 100 points with population sigma exactly 1 in both coordinates
        let mut points = Vec::new();
        for i in 0..50 {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            points.push((s, s));
            points.push((-s, s));
        }
        let (hx, hy) = scott_bandwidth(&points).unwrap();
        assert!((hx - 0.4641588833612779).abs() < 1e-9);
        assert_eq!(hx, hy);

        // sigma_x = 4, sigma_y = 1, n = 64 -> h = 64^(-1/6) * 2
        let mut pts2 = Vec::new();
        for i in 0..32 {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            pts2.push((4.0 * s, s));
            pts2.push((-4.0 * s, s));
        }
        let (h2, _) = scott_bandwidth(&pts2).unwrap();
        let want = 64f64.powf(-1.0 / 6.0) * 2.0;
        assert!((h2 - want).abs() < 1e-9);
    }

    #[test]
    fn scott_rule_scales_with_the_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0)))
            .collect();
        let (h1, _) = scott_bandwidth(&pts).unwrap();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (3.0 * x, 3.0 * y)).collect();
        let (h2, _) = scott_bandwidth(&scaled).unwrap();
        assert!((h2 - 3.0 * h1).abs() < 1e-9);
    }

    #[test]
    fn degenerate_cloud_rejected() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 1.0)).collect();
        assert!(scott_bandwidth(&pts).is_err());
    }

    #[test]
    fn single_point_peak_height() {
        let points = [(0.0, 0.0)];
        let bw = (0.5, 0.25);
        // grid with a cell centered exactly on the point
        let grid = GridSpec {
            x_edges: (-20..=20).map(|i| (i as f64 - 0.5) * 0.1).collect(),
            y_edges: (-20..=20).map(|i| (i as f64 - 0.5) * 0.05).collect(),
        };
        let d = kde2d(&points, &grid, bw).unwrap();
        let peak = d.density.iter().cloned().fold(0.0, f64::max);
        let want = 1.0 / (2.0 * PI * bw.0 * bw.1);
        assert!((peak - want).abs() / want < 1e-12, "peak {peak} want {want}");
        // kernel value at zero is 1/(2 pi)
        assert!((gaussian_kernel(0.0, 0.0) - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn density_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points: Vec<(f64, f64)> = (0..200)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..3.0)))
            .collect();
        let d = density_of(&points, 400).unwrap();
        let integral = d.integral();
        assert!((integral - 1.0).abs() < 0.02, "integral {integral}");
        assert!(d.density.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn two_far_points_give_equal_peaks() {
        let points = [(-10.0, 0.0), (10.0, 0.0)];
        let bw = (0.5, 0.5);
        let grid = GridSpec::covering(&points, bw, 600).unwrap();
        let d = kde2d(&points, &grid, bw).unwrap();
        let ny = d.ny();
        let mid = d.nx() / 2;
        let left = (0..mid)
            .flat_map(|ix| (0..ny).map(move |iy| (ix, iy)))
            .map(|(ix, iy)| d.at(ix, iy))
            .fold(0.0, f64::max);
        let right = (mid..d.nx())
            .flat_map(|ix| (0..ny).map(move |iy| (ix, iy)))
            .map(|(ix, iy)| d.at(ix, iy))
            .fold(0.0, f64::max);
        assert!((left - right).abs() / left < 1e-9);
    }

    #[test]
    fn swapping_identical_points_changes_nothing() {
        let pts1 = [(0.0, 0.0), (1.0, 1.0), (1.0, 1.0)];
        let pts2 = [(1.0, 1.0), (0.0, 0.0), (1.0, 1.0)];
        let bw = (0.4, 0.4);
        let grid = GridSpec::covering(&pts1, bw, 100).unwrap();
        let d1 = kde2d(&pts1, &grid, bw).unwrap();
        let d2 = kde2d(&pts2, &grid, bw).unwrap();
        assert_eq!(d1.density, d2.density);
    }

    fn box_grid() -> GridSpec {
        GridSpec {
            x_edges: (0..=30).map(|i| i as f64 * 0.05).collect(), // [0, 1.5]
            y_edges: (0..=20).map(|i| i as f64 * 0.05).collect(), // [0, 1.0]
        }
    }

    fn uniform_box(grid: &GridSpec, x0: f64, x1: f64) -> DensityGrid {
        let nx = grid.nx();
        let ny = grid.ny();
        let mut density = vec![0.0; nx * ny];
        for ix in 0..nx {
            let xc = 0.5 * (grid.x_edges[ix] + grid.x_edges[ix + 1]);
            if xc > x0 && xc < x1 {
                for iy in 0..ny {
                    density[ix * ny + iy] = 1.0 / (x1 - x0); // y-span is 1
                }
            }
        }
        DensityGrid {
            x_edges: grid.x_edges.clone(),
            y_edges: grid.y_edges.clone(),
            density,
            bandwidth: (0.0, 0.0),
            n_samples: 0,
        }
    }

    #[test]
    fn distance_conventions() {
        let grid = box_grid();
        let a = uniform_box(&grid, 0.0, 1.0);
        let b = uniform_box(&grid, 0.5, 1.5);
        assert_eq!(density_distance(&a, &a).unwrap(), 0.0);
        // half-overlapping unit boxes -> 1
        let d = density_distance(&a, &b).unwrap();
        assert!((d - 1.0).abs() < 1e-9, "d = {d}");
        // disjoint supports -> 2
        let c = uniform_box(&grid, 0.0, 0.5);
        let e = uniform_box(&grid, 1.0, 1.5);
        let d2 = density_distance(&c, &e).unwrap();
        assert!((d2 - 2.0).abs() < 1e-9);
        // grid mismatch is an error
        let other = GridSpec {
            x_edges: (0..=10).map(|i| i as f64 * 0.15).collect(),
            y_edges: grid.y_edges.clone(),
        };
        let f = kde2d(&[(0.5, 0.5)], &other, (0.3, 0.3)).unwrap();
        assert!(density_distance(&a, &f).is_err());
    }
}
