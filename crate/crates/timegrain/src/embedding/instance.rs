use crate::embedding::patching::PatchMatrix;
use crate::embedding::spans::SpanSet;
use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Input token of a blank-infilling sequence. `End` never appears as an
/// input; it exists only on the target side.
#[derive(Clone, Debug, PartialEq)]
pub enum Token<F: Real> {
    Patch(Vec<F>),
    Mask,
    Start,
}

/// Supervision for one Part B position.
#[derive(Clone, Debug, PartialEq)]
pub enum Target<F: Real> {
    Patch(Vec<F>),
    End,
}

/// One training sequence: the corrupted patch sequence (Part A) followed
/// by the shuffled padded spans (Part B), with the two-level positional
/// indices and next-token targets.
///
/// Layout invariants:
/// - Part A holds exactly one `Mask` per span; Part B is, per presented
///   span, `[Start, patch, patch, ...]`.
/// - Every Part B token of a span carries the `pos1` of that span's mask;
///   `pos2` is 0 throughout Part A and `1..=span_len+1` within a span.
/// - The target of a Part B token is the next patch of its span, or `End`
///   after the last patch.
#[derive(Clone, Debug)]
pub struct InfillingInstance<F: Real> {
    pub tokens: Vec<Token<F>>,
    pub part_a_len: usize,
    pub pos1: Vec<usize>,
    pub pos2: Vec<usize>,
    /// One target per Part B position.
    pub targets: Vec<Target<F>>,
    /// Patch counts per span, presentation order.
    pub span_lens: Vec<usize>,
    /// Original `(start, len)` per span, presentation order.
    pub spans_sigma: Vec<(usize, usize)>,
    /// Original patch index behind each Part A token (`None` for masks).
    pub part_a_origin: Vec<Option<usize>>,
    pub patch_len: usize,
    pub n_patches: usize,
}

impl<F: Real> InfillingInstance<F> {
    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn part_b_len(&self) -> usize {
        self.tokens.len() - self.part_a_len
    }

    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    pub fn n_patches(&self) -> usize {
        self.n_patches
    }

    /// True exactly on Part B positions.
    pub fn predict_flags(&self) -> Vec<bool> {
        (0..self.tokens.len()).map(|i| i >= self.part_a_len).collect()
    }

    /// Indices into Part B whose target is a patch (END positions carry no
    /// numeric target and are excluded from the reconstruction loss).
    pub fn numeric_target_rows(&self) -> Vec<usize> {
        self.targets
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match t {
                Target::Patch(_) => Some(i),
                Target::End => None,
            })
            .collect()
    }

    /// Numeric targets stacked as `[m, L_p]`, aligned with
    /// [`Self::numeric_target_rows`].
    pub fn target_matrix(&self) -> Result<Tensor<F>> {
        let rows: Vec<Vec<F>> = self
            .targets
            .iter()
            .filter_map(|t| match t {
                Target::Patch(p) => Some(p.clone()),
                Target::End => None,
            })
            .collect();
        Tensor::from_rows(&rows)
    }

    /// `[n_tokens, L_p]` with patch payloads on patch rows, zeros on
    /// special-token rows.
    pub fn payload_matrix(&self) -> Tensor<F> {
        let mut t = Tensor::zeros(vec![self.tokens.len(), self.patch_len]);
        for (i, tok) in self.tokens.iter().enumerate() {
            if let Token::Patch(p) = tok {
                t.data_mut()[i * self.patch_len..(i + 1) * self.patch_len].copy_from_slice(p);
            }
        }
        t
    }

    /// `[n_tokens, L_p]` indicator of patch rows (used to broadcast the
    /// instance-affine shift only onto numeric tokens).
    pub fn patch_indicator(&self) -> Tensor<F> {
        let mut t = Tensor::zeros(vec![self.tokens.len(), self.patch_len]);
        for (i, tok) in self.tokens.iter().enumerate() {
            if matches!(tok, Token::Patch(_)) {
                for c in 0..self.patch_len {
                    t.data_mut()[i * self.patch_len + c] = F::one();
                }
            }
        }
        t
    }

    /// `[n_tokens, 3]` one-hot selector over (mask, start, end) learnable
    /// vectors. The end column is structurally zero on the input side.
    pub fn special_matrix(&self) -> Tensor<F> {
        let mut t = Tensor::zeros(vec![self.tokens.len(), 3]);
        for (i, tok) in self.tokens.iter().enumerate() {
            match tok {
                Token::Mask => t.data_mut()[i * 3] = F::one(),
                Token::Start => t.data_mut()[i * 3 + 1] = F::one(),
                Token::Patch(_) => {}
            }
        }
        t
    }

    /// Reassemble the original `[N_p, L_p]` patch matrix from the
    /// unmasked Part A payloads plus the Part B targets routed through the
    /// inverse permutation.
    pub fn reconstruct(&self) -> Result<Tensor<F>> {
        let mut out = Tensor::zeros(vec![self.n_patches, self.patch_len]);
        let mut filled = vec![false; self.n_patches];
        for (i, tok) in self.tokens[..self.part_a_len].iter().enumerate() {
            if let (Token::Patch(p), Some(orig)) = (tok, self.part_a_origin[i]) {
                out.data_mut()[orig * self.patch_len..(orig + 1) * self.patch_len]
                    .copy_from_slice(p);
                filled[orig] = true;
            }
        }
        let mut b = 0usize;
        for (k, &(start, len)) in self.spans_sigma.iter().enumerate() {
            debug_assert_eq!(self.span_lens[k], len);
            for j in 0..len {
                match &self.targets[b + j] {
                    Target::Patch(p) => {
                        let orig = start + j;
                        out.data_mut()
                            [orig * self.patch_len..(orig + 1) * self.patch_len]
                            .copy_from_slice(p);
                        filled[orig] = true;
                    }
                    Target::End => {
                        return Err(Error::Data(
                            "reconstruct: END where a patch target was expected".into(),
                        ))
                    }
                }
            }
            debug_assert!(matches!(self.targets[b + len], Target::End));
            b += len + 1;
        }
        if filled.iter().any(|&f| !f) {
            return Err(Error::Data("reconstruct: uncovered patch".into()));
        }
        Ok(out)
    }
}

/// Lay out a tail-masked instance for autoregressive generation: the
/// context patches plus one trailing mask form Part A; Part B is the
/// START token followed by the span patches produced (or supplied) so
/// far. Targets are filled with `End` placeholders; generation never
/// reads them.
pub fn tail_instance<F: Real>(
    context: &[Vec<F>],
    span_inputs: &[Vec<F>],
    span_total: usize,
) -> Result<InfillingInstance<F>> {
    if context.is_empty() {
        return Err(Error::Data("tail_instance: empty context".into()));
    }
    let patch_len = context[0].len();
    if context
        .iter()
        .chain(span_inputs.iter())
        .any(|p| p.len() != patch_len)
    {
        return Err(Error::Dimension("tail_instance: ragged patches".into()));
    }
    if span_inputs.len() > span_total {
        return Err(Error::Config(
            "tail_instance: more span inputs than the span length".into(),
        ));
    }
    let ctx = context.len();
    let mut tokens: Vec<Token<F>> = context.iter().map(|p| Token::Patch(p.clone())).collect();
    tokens.push(Token::Mask);
    let mut pos1: Vec<usize> = (0..=ctx).collect();
    let mut pos2 = vec![0usize; ctx + 1];
    tokens.push(Token::Start);
    pos1.push(ctx);
    pos2.push(1);
    for (j, p) in span_inputs.iter().enumerate() {
        tokens.push(Token::Patch(p.clone()));
        pos1.push(ctx);
        pos2.push(2 + j);
    }
    let part_b = span_inputs.len() + 1;
    Ok(InfillingInstance {
        tokens,
        part_a_len: ctx + 1,
        pos1,
        pos2,
        targets: vec![Target::End; part_b],
        span_lens: vec![span_inputs.len()],
        spans_sigma: vec![(ctx, span_inputs.len())],
        part_a_origin: (0..ctx).map(Some).chain([None]).collect(),
        patch_len,
        n_patches: ctx + span_total,
    })
}

/// Corrupt a patch matrix with the sampled spans and lay out the
/// blank-infilling token sequence, targets and 2-level positions.
pub fn build_infilling_instance<F: Real>(
    pm: &PatchMatrix<F>,
    spans: &SpanSet,
) -> Result<InfillingInstance<F>> {
    let n_patches = pm.n_patches();
    let patch_len = pm.patch_len();
    if spans
        .spans()
        .iter()
        .any(|&(s, l)| s + l > n_patches)
    {
        return Err(Error::Config("spans exceed patch matrix".into()));
    }

    // Part A: walk the patches, collapsing each span to one mask token.
    let mut tokens: Vec<Token<F>> = Vec::new();
    let mut pos1: Vec<usize> = Vec::new();
    let mut part_a_origin: Vec<Option<usize>> = Vec::new();
    let mut mask_pos = vec![0usize; spans.len()]; // span idx -> pos in part A
    let mut i = 0usize;
    let mut span_iter = spans.spans().iter().enumerate().peekable();
    while i < n_patches {
        if let Some(&(si, &(start, len))) = span_iter.peek() {
            if start == i {
                mask_pos[si] = tokens.len();
                pos1.push(tokens.len());
                tokens.push(Token::Mask);
                part_a_origin.push(None);
                span_iter.next();
                i += len;
                continue;
            }
        }
        pos1.push(tokens.len());
        tokens.push(Token::Patch(pm.patch(i).to_vec()));
        part_a_origin.push(Some(i));
        i += 1;
    }
    let part_a_len = tokens.len();
    let mut pos2 = vec![0usize; part_a_len];

    // Part B: presented spans, each as [Start, patches...] with
    // next-patch targets closed by End.
    let mut targets: Vec<Target<F>> = Vec::new();
    let mut span_lens = Vec::with_capacity(spans.len());
    let mut spans_sigma = Vec::with_capacity(spans.len());
    for &si in spans.order() {
        let (start, len) = spans.spans()[si];
        span_lens.push(len);
        spans_sigma.push((start, len));
        let anchor = mask_pos[si];
        tokens.push(Token::Start);
        pos1.push(anchor);
        pos2.push(1);
        for j in 0..len {
            tokens.push(Token::Patch(pm.patch(start + j).to_vec()));
            pos1.push(anchor);
            pos2.push(2 + j);
            targets.push(Target::Patch(pm.patch(start + j).to_vec()));
        }
        targets.push(Target::End);
    }

    Ok(InfillingInstance {
        tokens,
        part_a_len,
        pos1,
        pos2,
        targets,
        span_lens,
        spans_sigma,
        part_a_origin,
        patch_len,
        n_patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Patches p1..p8 with distinguishable payloads (patch i has values
    /// 10(i+1), 10(i+1)+1).
    fn fig_layout() -> PatchMatrix<f64> {
        let patches = Tensor::from_fn(8, 2, |r, c| (10 * (r + 1) + c) as f64);
        PatchMatrix {
            patches,
            window_start: 0,
            channel: 0,
            stride: 8,
            window_len: 16,
        }
    }

    fn patch_of(i: usize) -> Vec<f64> {
        vec![(10 * (i + 1)) as f64, (10 * (i + 1) + 1) as f64]
    }

    #[test]
    fn reference_two_span_layout_identity_order() {
        // spans {(1,3),(7,1)}: P_crpt = [p1 [M] p5 p6 p7 [M]],
        // S_in = [S p2 p3 p4 S p8], Y = [p2 p3 p4 E p8 E]
        let pm = fig_layout();
        let spans = SpanSet::identity_order(vec![(1, 3), (7, 1)], 8).unwrap();
        let inst = build_infilling_instance(&pm, &spans).unwrap();

        assert_eq!(inst.part_a_len, 6);
        assert_eq!(inst.tokens[0], Token::Patch(patch_of(0)));
        assert_eq!(inst.tokens[1], Token::Mask);
        assert_eq!(inst.tokens[2], Token::Patch(patch_of(4)));
        assert_eq!(inst.tokens[3], Token::Patch(patch_of(5)));
        assert_eq!(inst.tokens[4], Token::Patch(patch_of(6)));
        assert_eq!(inst.tokens[5], Token::Mask);

        let b: Vec<&Token<f64>> = inst.tokens[6..].iter().collect();
        assert_eq!(
            b,
            vec![
                &Token::Start,
                &Token::Patch(patch_of(1)),
                &Token::Patch(patch_of(2)),
                &Token::Patch(patch_of(3)),
                &Token::Start,
                &Token::Patch(patch_of(7)),
            ]
        );
        assert_eq!(
            inst.targets,
            vec![
                Target::Patch(patch_of(1)),
                Target::Patch(patch_of(2)),
                Target::Patch(patch_of(3)),
                Target::End,
                Target::Patch(patch_of(7)),
                Target::End,
            ]
        );

        // pos1 of span tokens equals pos1 of their mask
        assert_eq!(&inst.pos1[..6], &[0, 1, 2, 3, 4, 5]);
        assert_eq!(&inst.pos1[6..], &[1, 1, 1, 1, 5, 5]);
        // pos2: zero on part A, 1..=len+1 within each span
        assert_eq!(&inst.pos2[..6], &[0; 6]);
        assert_eq!(&inst.pos2[6..], &[1, 2, 3, 4, 1, 2]);
        let flags = inst.predict_flags();
        assert!(flags[..6].iter().all(|&f| !f));
        assert!(flags[6..].iter().all(|&f| f));
    }

    #[test]
    fn reversed_order_presents_last_span_first() {
        let pm = fig_layout();
        let spans = SpanSet::new(vec![(1, 3), (7, 1)], vec![1, 0], 8).unwrap();
        let inst = build_infilling_instance(&pm, &spans).unwrap();
        let b: Vec<&Token<f64>> = inst.tokens[6..].iter().collect();
        assert_eq!(
            b,
            vec![
                &Token::Start,
                &Token::Patch(patch_of(7)),
                &Token::Start,
                &Token::Patch(patch_of(1)),
                &Token::Patch(patch_of(2)),
                &Token::Patch(patch_of(3)),
            ]
        );
        assert_eq!(&inst.pos1[6..], &[5, 5, 1, 1, 1, 1]);
    }

    #[test]
    fn single_span_covering_everything() {
        let pm = fig_layout();
        let spans = SpanSet::identity_order(vec![(0, 8)], 8).unwrap();
        let inst = build_infilling_instance(&pm, &spans).unwrap();
        assert_eq!(inst.part_a_len, 1);
        assert_eq!(inst.tokens[0], Token::Mask);
        assert_eq!(inst.part_b_len(), 9);
    }

    #[test]
    fn reconstruct_inverts_the_permutation() {
        let pm = fig_layout();
        for order in [vec![0, 1, 2], vec![2, 0, 1], vec![1, 2, 0]] {
            let spans = SpanSet::new(vec![(0, 2), (3, 1), (5, 3)], order, 8).unwrap();
            let inst = build_infilling_instance(&pm, &spans).unwrap();
            let rec = inst.reconstruct().unwrap();
            assert_eq!(rec.data(), pm.patches.data());
        }
    }
}
