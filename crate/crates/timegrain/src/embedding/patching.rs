use crate::embedding::revin::{standardize, RevinStats};
use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// One window of one channel split into contiguous non-overlapping
/// patches. Windows overlap each other through the stride; patches within
/// a window do not overlap.
#[derive(Clone, Debug)]
pub struct PatchMatrix<F: Real> {
    /// `[N_p, L_p]`, row i is patch i.
    pub patches: Tensor<F>,
    pub window_start: usize,
    pub channel: usize,
    pub stride: usize,
    pub window_len: usize,
}

impl<F: Real> PatchMatrix<F> {
    pub fn n_patches(&self) -> usize {
        self.patches.rows()
    }

    pub fn patch_len(&self) -> usize {
        self.patches.cols()
    }

    pub fn patch(&self, i: usize) -> &[F] {
        self.patches.row(i)
    }

    /// Standardize over the whole window (patches partition it exactly)
    /// and return the normalized copy plus the inversion statistics.
    pub fn standardized(&self) -> Result<(PatchMatrix<F>, RevinStats<F>)> {
        let (data, stats) = standardize(self.patches.data())?;
        Ok((
            PatchMatrix {
                patches: Tensor::new(self.patches.shape().to_vec(), data)?,
                ..self.clone()
            },
            stats,
        ))
    }
}

/// Split a univariate series into overlapping windows of `window_len`
/// points at stride `stride`, each divided into `window_len / patch_len`
/// contiguous patches. Window i covers `[i*stride, i*stride + window_len)`.
pub fn window_and_patch<F: Real>(
    series: &[F],
    window_len: usize,
    stride: usize,
    patch_len: usize,
    channel: usize,
) -> Result<Vec<PatchMatrix<F>>> {
    if patch_len == 0 || window_len == 0 || stride == 0 {
        return Err(Error::Config(
            "window_and_patch: window, stride and patch length must be positive".into(),
        ));
    }
    if window_len % patch_len != 0 {
        return Err(Error::Config(format!(
            "patch length {patch_len} does not divide window length {window_len}"
        )));
    }
    if series.len() < window_len {
        return Err(Error::Data(format!(
            "series length {} shorter than window {window_len}",
            series.len()
        )));
    }
    let n_patches = window_len / patch_len;
    let mut out = Vec::new();
    let mut start = 0usize;
    while start + window_len <= series.len() {
        let window = &series[start..start + window_len];
        out.push(PatchMatrix {
            patches: Tensor::new(vec![n_patches, patch_len], window.to_vec())?,
            window_start: start,
            channel,
            stride,
            window_len,
        });
        start += stride;
    }
    Ok(out)
}
