//! Real FFT / inverse FFT along the feature dimension and complex-safe
//! application of real matrices. Each token row is transformed
//! independently; a length-D real vector yields D/2+1 nonnegative-frequency
//! bins. Forward transform is unnormalized, the inverse carries the 1/D
//! factor (any other convention only rescales the learned frequency
//! matrices).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{Graph, Real, Tensor, VarId};

/// Pair of equally-shaped real tensors holding the real and imaginary
/// parts of complex data.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor<F: Real> {
    pub re: Tensor<F>,
    pub im: Tensor<F>,
}

impl<F: Real> ComplexTensor<F> {
    pub fn new(re: Tensor<F>, im: Tensor<F>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::Dimension(format!(
                "ComplexTensor: re {:?} vs im {:?}",
                re.shape(),
                im.shape()
            )));
        }
        Ok(ComplexTensor { re, im })
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }
}

/// Per-token frequency-domain view of a `[n, D]` real tensor.
#[derive(Clone, Debug)]
pub struct Spectrum<F: Real> {
    pub bins: ComplexTensor<F>,
    pub d_original: usize,
}

impl<F: Real> Spectrum<F> {
    pub fn bin_count(&self) -> usize {
        self.bins.re.cols()
    }
}

/// Number of rFFT bins for a length-`d` real signal.
pub fn bin_count_for(d: usize) -> usize {
    d / 2 + 1
}

fn require_pow2(d: usize) -> Result<()> {
    if d < 2 || !d.is_power_of_two() {
        return Err(Error::Dimension(format!(
            "FFT length must be a power of two >= 2, got {d}"
        )));
    }
    Ok(())
}

/// In-place iterative radix-2 complex FFT. `inverse` flips the twiddle
/// sign; no normalization is applied in either direction.
fn fft_radix2<F: Real>(re: &mut [F], im: &mut [F], inverse: bool) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2usize;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let (wr, wi) = (F::of_f64(ang.cos()), F::of_f64(ang.sin()));
        let mut start = 0usize;
        while start < n {
            let mut cr = F::one();
            let mut ci = F::zero();
            for k in 0..len / 2 {
                let a = start + k;
                let b = start + k + len / 2;
                let tr = re[b] * cr - im[b] * ci;
                let ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] = re[a] + tr;
                im[a] = im[a] + ti;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            start += len;
        }
        len <<= 1;
    }
}

/// Forward DFT of a real signal restricted to nonnegative frequencies.
/// The DC and Nyquist imaginary parts are exactly zero.
pub fn rfft_slice<F: Real>(x: &[F]) -> Result<(Vec<F>, Vec<F>)> {
    let d = x.len();
    require_pow2(d)?;
    let mut re = x.to_vec();
    let mut im = vec![F::zero(); d];
    fft_radix2(&mut re, &mut im, false);
    let b = bin_count_for(d);
    re.truncate(b);
    im.truncate(b);
    im[0] = F::zero();
    im[b - 1] = F::zero();
    Ok((re, im))
}

/// Inverse of [`rfft_slice`] including the 1/D normalization. The stored
/// DC/Nyquist imaginary parts are ignored (they are structurally zero).
pub fn irfft_slice<F: Real>(re: &[F], im: &[F], d: usize) -> Result<Vec<F>> {
    require_pow2(d)?;
    let b = bin_count_for(d);
    if re.len() != b || im.len() != b {
        return Err(Error::Dimension(format!(
            "irfft: {} bins inconsistent with D={d} (expected {b})",
            re.len()
        )));
    }
    let mut fr = vec![F::zero(); d];
    let mut fi = vec![F::zero(); d];
    fr[0] = re[0];
    fr[d / 2] = re[d / 2];
    for k in 1..d / 2 {
        fr[k] = re[k];
        fi[k] = im[k];
        fr[d - k] = re[k];
        fi[d - k] = -im[k];
    }
    fft_radix2(&mut fr, &mut fi, true);
    let scale = F::from_usize(d).unwrap().recip();
    Ok(fr.iter().map(|&v| v * scale).collect())
}

/// Row-wise rFFT of a `[n, D]` tensor.
pub fn rfft<F: Real>(x: &Tensor<F>) -> Result<Spectrum<F>> {
    let (n, d) = match x.shape() {
        [n, d] => (*n, *d),
        [d] => (1, *d),
        s => return Err(Error::Dimension(format!("rfft: rank {:?}", s))),
    };
    require_pow2(d)?;
    let b = bin_count_for(d);
    let mut re = Vec::with_capacity(n * b);
    let mut im = Vec::with_capacity(n * b);
    for r in 0..n {
        let (rr, ri) = rfft_slice(&x.data()[r * d..(r + 1) * d])?;
        re.extend(rr);
        im.extend(ri);
    }
    Ok(Spectrum {
        bins: ComplexTensor::new(
            Tensor::new(vec![n, b], re)?,
            Tensor::new(vec![n, b], im)?,
        )?,
        d_original: d,
    })
}

/// Row-wise inverse rFFT back to `[n, D]`.
pub fn irfft<F: Real>(z: &ComplexTensor<F>, d: usize) -> Result<Tensor<F>> {
    let (n, b) = match z.shape() {
        [n, b] => (*n, *b),
        [b] => (1, *b),
        s => return Err(Error::Dimension(format!("irfft: rank {:?}", s))),
    };
    if b != bin_count_for(d) {
        return Err(Error::Dimension(format!(
            "irfft: {b} bins inconsistent with D={d}"
        )));
    }
    let mut out = Vec::with_capacity(n * d);
    for r in 0..n {
        out.extend(irfft_slice(
            &z.re.data()[r * b..(r + 1) * b],
            &z.im.data()[r * b..(r + 1) * b],
            d,
        )?);
    }
    Tensor::new(vec![n, d], out)
}

/// Apply a real matrix to complex rows: `out.re = z.re Mᵀ`, `out.im =
/// z.im Mᵀ`. Real gating/knowledge matrices act separately on the real
/// and imaginary parts.
pub fn apply_real_matrix<F: Real>(m: &Tensor<F>, z: &ComplexTensor<F>) -> Result<ComplexTensor<F>> {
    ComplexTensor::new(
        crate::numerics::matmul_nt(&z.re, m)?,
        crate::numerics::matmul_nt(&z.im, m)?,
    )
}

impl<F: Real> Graph<F> {
    /// Differentiable row-wise rFFT; returns (re, im) node ids of shape
    /// `[n, D/2+1]`.
    pub fn rfft(&mut self, x: VarId) -> Result<(VarId, VarId)> {
        let spec = rfft(self.value(x))?;
        let d = spec.d_original;
        let b = spec.bin_count();
        let n = spec.bins.re.rows();
        let re_id = self.push_dependent("rfft.re", spec.bins.re)?;
        let im_id = re_id + 1;
        // The sibling node carries the joint backstep: it runs before the
        // re node in the reverse sweep and by then both cotangents are
        // complete (all consumers sit later on the tape).
        let pushed = self.push_node(
            "rfft.im",
            spec.bins.im,
            Box::new(move |_vals, grads| {
                let gre = grads[re_id].clone();
                let gim = grads[im_id].clone();
                let half = F::of_f64(0.5);
                let df = F::from_usize(d).unwrap();
                for r in 0..n {
                    let mut hre = vec![F::zero(); b];
                    let mut him = vec![F::zero(); b];
                    hre[0] = gre.at(r, 0);
                    hre[b - 1] = gre.at(r, b - 1);
                    for k in 1..b - 1 {
                        hre[k] = gre.at(r, k) * half;
                        him[k] = gim.at(r, k) * half;
                    }
                    let gx = irfft_slice(&hre, &him, d).expect("rfft backward");
                    for t in 0..d {
                        grads[x].data_mut()[r * d + t] =
                            grads[x].data()[r * d + t] + gx[t] * df;
                    }
                }
            }),
        )?;
        debug_assert_eq!(pushed, im_id);
        Ok((re_id, im_id))
    }

    /// Differentiable row-wise inverse rFFT back to `[n, D]`.
    pub fn irfft(&mut self, re: VarId, im: VarId, d: usize) -> Result<VarId> {
        let z = ComplexTensor::new(self.value(re).clone(), self.value(im).clone())?;
        let out = irfft(&z, d)?;
        let b = bin_count_for(d);
        let n = out.rows();
        let out_id = self.len();
        self.push_node(
            "irfft",
            out,
            Box::new(move |_vals, grads| {
                let gy = grads[out_id].clone();
                let df = F::from_usize(d).unwrap();
                let two = F::of_f64(2.0);
                for r in 0..n {
                    let (fr, fi) = rfft_slice(&gy.data()[r * d..(r + 1) * d])
                        .expect("irfft backward");
                    grads[re].data_mut()[r * b] = grads[re].data()[r * b] + fr[0] / df;
                    grads[re].data_mut()[r * b + b - 1] =
                        grads[re].data()[r * b + b - 1] + fr[b - 1] / df;
                    for k in 1..b - 1 {
                        grads[re].data_mut()[r * b + k] =
                            grads[re].data()[r * b + k] + two * fr[k] / df;
                        grads[im].data_mut()[r * b + k] =
                            grads[im].data()[r * b + k] + two * fi[k] / df;
                    }
                }
            }),
        )
    }

    /// Differentiable [`apply_real_matrix`] on a (re, im) node pair.
    pub fn apply_real_matrix(
        &mut self,
        m: VarId,
        zre: VarId,
        zim: VarId,
    ) -> Result<(VarId, VarId)> {
        Ok((self.matmul_nt(zre, m)?, self.matmul_nt(zim, m)?))
    }
}
