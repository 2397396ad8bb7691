//! Temporal self-attention under the blank-infilling mask and the
//! frequency-domain knowledge attention with granularity gating: five
//! gated rank-1 modules plus an always-active global matrix applied
//! between rFFT and inverse rFFT.

use crate::embedding::InfillingInstance;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Real, VarId};
use crate::spectral::bin_count_for;

/// Attention visibility for one instance: bidirectional within the
/// corrupted context (Part A), causal within the generated spans (Part B,
/// which additionally sees all of Part A). No row ever sees a future
/// Part B column.
#[derive(Clone, Debug)]
pub struct GlmMask {
    allowed: Vec<bool>,
    n: usize,
    part_a_len: usize,
}

/// Build the mask from the corrupted-context length and the per-span patch
/// counts (each span contributes `len + 1` tokens including its START).
pub fn build_glm_mask(part_a_len: usize, span_lens: &[usize]) -> GlmMask {
    let n = part_a_len + span_lens.iter().map(|l| l + 1).sum::<usize>();
    let a = part_a_len;
    let mut allowed = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            allowed[i * n + j] = if i < a { j < a } else { j < a || j <= i };
        }
    }
    GlmMask {
        allowed,
        n,
        part_a_len,
    }
}

impl GlmMask {
    pub fn for_instance<F: Real>(inst: &InfillingInstance<F>) -> GlmMask {
        build_glm_mask(inst.part_a_len, &inst.span_lens)
    }

    pub fn n_tokens(&self) -> usize {
        self.n
    }

    pub fn part_a_len(&self) -> usize {
        self.part_a_len
    }

    pub fn allows(&self, row: usize, col: usize) -> bool {
        self.allowed[row * self.n + col]
    }

    /// Row-major `n*n` flags.
    pub fn flags(&self) -> &[bool] {
        &self.allowed
    }
}

/// Graph nodes of one temporal-attention block: fused `[D, D]` query, key,
/// value and output projections, split into heads along the feature axis.
#[derive(Clone, Copy, Debug)]
pub struct TemporalVars {
    pub w_q: VarId,
    pub w_k: VarId,
    pub w_v: VarId,
    pub w_o: VarId,
}

/// Multi-head scaled dot-product self-attention with the GLM mask applied
/// by overwriting disallowed logits with -inf before the softmax, so
/// disallowed positions receive exactly zero weight. With one head this is
/// plain single-head attention.
pub fn temporal_self_attention<F: Real>(
    g: &mut Graph<F>,
    h: VarId,
    v: &TemporalVars,
    mask: &GlmMask,
    n_heads: usize,
) -> Result<VarId> {
    let n = g.value(h).rows();
    let d = g.value(h).cols();
    if n_heads == 0 || d % n_heads != 0 {
        return Err(Error::Config(format!(
            "attention: feature dim {d} not divisible by {n_heads} heads"
        )));
    }
    if mask.n_tokens() != n {
        return Err(Error::Dimension(format!(
            "attention: mask over {} tokens, input has {n}",
            mask.n_tokens()
        )));
    }
    let dh = d / n_heads;
    let q = g.matmul(h, v.w_q)?;
    let k = g.matmul(h, v.w_k)?;
    let val = g.matmul(h, v.w_v)?;
    let scale = F::of_f64(1.0 / (dh as f64).sqrt());
    let mut heads = Vec::with_capacity(n_heads);
    for hd in 0..n_heads {
        let qh = g.slice_cols(q, hd * dh, dh)?;
        let kh = g.slice_cols(k, hd * dh, dh)?;
        let vh = g.slice_cols(val, hd * dh, dh)?;
        let scores = g.matmul_nt(qh, kh)?;
        let scores = g.scale(scores, scale)?;
        let attn = g.masked_softmax_rows(scores, mask.flags())?;
        heads.push(g.matmul(attn, vh)?);
    }
    let ctx = if heads.len() == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)?
    };
    g.matmul(ctx, v.w_o)
}

/// Softmax attention of the granularity query against the five learnable
/// granularity keys: `softmax(K_f q_f / sqrt(d_fk))`, a `[1, 5]` simplex
/// point that depends only on the quintuple, never on the data tensor.
pub fn granularity_gate<F: Real>(g: &mut Graph<F>, q_f: VarId, k_f: VarId) -> Result<VarId> {
    let d_fk = g.value(k_f).cols();
    if g.value(q_f).shape() != [1, d_fk] {
        return Err(Error::Dimension(format!(
            "granularity_gate: q_f {:?} vs keys [5,{d_fk}]",
            g.value(q_f).shape()
        )));
    }
    if g.value(k_f).rows() != 5 {
        return Err(Error::Dimension(format!(
            "granularity_gate: {} keys, expected 5",
            g.value(k_f).rows()
        )));
    }
    let scores = g.matmul_nt(q_f, k_f)?;
    let scores = g.scale(scores, F::of_f64(1.0 / (d_fk as f64).sqrt()))?;
    g.softmax_rows(scores)
}

/// Graph nodes of one frequency-domain knowledge block. `a[i]` is
/// `[B, 1]`, `b[i]` is `[1, B]`, `w_full` is `[B, B]` with `B = D/2+1`;
/// each product `a[i]·b[i]` has rank at most one by construction.
#[derive(Clone, Copy, Debug)]
pub struct FourierVars {
    pub a: [VarId; 5],
    pub b: [VarId; 5],
    pub w_full: VarId,
}

/// Frequency-domain knowledge attention: rFFT each token row, apply the
/// gate-weighted sum of the five rank-1 modules plus the unconditionally
/// active global matrix (all acting separately on real and imaginary
/// parts), and transform back.
pub fn fourier_knowledge_attention<F: Real>(
    g: &mut Graph<F>,
    h: VarId,
    gate: VarId,
    v: &FourierVars,
    d: usize,
) -> Result<VarId> {
    if g.value(h).cols() != d {
        return Err(Error::Dimension(format!(
            "fourier attention: input {:?} vs D={d}",
            g.value(h).shape()
        )));
    }
    let b = bin_count_for(d);
    if g.value(v.w_full).shape() != [b, b] {
        return Err(Error::Dimension(format!(
            "fourier attention: W_full {:?}, expected [{b},{b}]",
            g.value(v.w_full).shape()
        )));
    }
    if g.value(gate).shape() != [1, 5] {
        return Err(Error::Dimension(format!(
            "fourier attention: gate {:?}, expected [1,5]",
            g.value(gate).shape()
        )));
    }
    let (re, im) = g.rfft(h)?;
    // global path, activated with probability 1
    let (mut acc_re, mut acc_im) = g.apply_real_matrix(v.w_full, re, im)?;
    for i in 0..5 {
        if g.value(v.a[i]).shape() != [b, 1] || g.value(v.b[i]).shape() != [1, b] {
            return Err(Error::Dimension(format!(
                "fourier attention: module {i} shapes {:?}/{:?}, expected [{b},1]/[1,{b}]",
                g.value(v.a[i]).shape(),
                g.value(v.b[i]).shape()
            )));
        }
        // (A_i B_i) z = (z B_iᵀ) A_iᵀ, kept in factored form
        let ure = g.matmul_nt(re, v.b[i])?;
        let uim = g.matmul_nt(im, v.b[i])?;
        let mre = g.matmul_nt(ure, v.a[i])?;
        let mim = g.matmul_nt(uim, v.a[i])?;
        let gre = g.scale_by_entry(mre, gate, i)?;
        let gim = g.scale_by_entry(mim, gate, i)?;
        acc_re = g.add(acc_re, gre)?;
        acc_im = g.add(acc_im, gim)?;
    }
    g.irfft(acc_re, acc_im, d)
}
