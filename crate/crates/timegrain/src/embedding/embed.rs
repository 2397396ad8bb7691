use crate::embedding::instance::InfillingInstance;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Real, VarId};

/// Graph nodes of the embedding-side parameters. Numeric payloads pass
/// through the instance affine (`gamma * x + beta`, the learnable half of
/// reversible instance normalization) and the linear embedding;
/// mask/start tokens use the learnable bank vectors; both positional
/// tables are added on top.
#[derive(Clone, Copy, Debug)]
pub struct EmbedVars {
    /// `[L_p, D]`
    pub w_emb: VarId,
    /// `[max_pos, D]`
    pub pos1: VarId,
    /// `[max_span, D]`
    pub pos2: VarId,
    /// `[D]` each
    pub mask_vec: VarId,
    pub start_vec: VarId,
    pub end_vec: VarId,
    /// `[1]` each
    pub revin_gamma: VarId,
    pub revin_beta: VarId,
}

/// Embed an infilling instance into `[n_tokens, D]`.
pub fn embed_tokens<F: Real>(
    g: &mut Graph<F>,
    inst: &InfillingInstance<F>,
    v: &EmbedVars,
) -> Result<VarId> {
    let max_pos = g.value(v.pos1).rows();
    let max_span = g.value(v.pos2).rows();
    if let Some(&p) = inst.pos1.iter().max() {
        if p >= max_pos {
            return Err(Error::Config(format!(
                "embed: pos1 index {p} overflows table of {max_pos}"
            )));
        }
    }
    if let Some(&p) = inst.pos2.iter().max() {
        if p >= max_span {
            return Err(Error::Config(format!(
                "embed: pos2 index {p} overflows table of {max_span}"
            )));
        }
    }
    if g.value(v.w_emb).rows() != inst.patch_len() {
        return Err(Error::Dimension(format!(
            "embed: W_emb expects patch length {}, instance has {}",
            g.value(v.w_emb).rows(),
            inst.patch_len()
        )));
    }

    let payload = g.leaf(inst.payload_matrix());
    let indicator = g.leaf(inst.patch_indicator());
    let scaled = g.scale_by_entry(payload, v.revin_gamma, 0)?;
    let shifted = g.scale_by_entry(indicator, v.revin_beta, 0)?;
    let affine = g.add(scaled, shifted)?;
    let emb = g.matmul(affine, v.w_emb)?;

    let bank = g.concat_rows(&[v.mask_vec, v.start_vec, v.end_vec])?;
    let selector = g.leaf(inst.special_matrix());
    let special = g.matmul(selector, bank)?;

    let p1 = g.gather_rows(v.pos1, &inst.pos1)?;
    let p2 = g.gather_rows(v.pos2, &inst.pos2)?;
    let h = g.add(emb, special)?;
    let h = g.add(h, p1)?;
    g.add(h, p2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::instance::build_infilling_instance;
    use crate::embedding::patching::PatchMatrix;
    use crate::embedding::spans::SpanSet;
    use crate::numerics::Tensor;

    fn vars(
        g: &mut Graph<f64>,
        w_emb: Tensor<f64>,
        pos1: Tensor<f64>,
        pos2: Tensor<f64>,
        bank: [Tensor<f64>; 3],
    ) -> EmbedVars {
        let [m, s, e] = bank;
        EmbedVars {
            w_emb: g.leaf(w_emb),
            pos1: g.leaf(pos1),
            pos2: g.leaf(pos2),
            mask_vec: g.leaf(m),
            start_vec: g.leaf(s),
            end_vec: g.leaf(e),
            revin_gamma: g.leaf(Tensor::scalar(1.0)),
            revin_beta: g.leaf(Tensor::scalar(0.0)),
        }
    }

    fn two_patch_instance() -> InfillingInstance<f64> {
        let pm = PatchMatrix {
            patches: Tensor::from_fn(2, 3, |r, c| (r * 3 + c + 1) as f64),
            window_start: 0,
            channel: 0,
            stride: 6,
            window_len: 6,
        };
        let spans = SpanSet::identity_order(vec![(1, 1)], 2).unwrap();
        build_infilling_instance(&pm, &spans).unwrap()
    }

    #[test]
    fn special_rows_equal_bank_vectors_when_everything_else_is_zero() {
        let mut g = Graph::new();
        let inst = two_patch_instance();
        // zero patches: zero out payload by zero embedding, zero pos tables
        let v = vars(
            &mut g,
            Tensor::zeros(vec![3, 4]),
            Tensor::zeros(vec![8, 4]),
            Tensor::zeros(vec![4, 4]),
            [
                Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]),
                Tensor::vector(vec![-1.0, -2.0, -3.0, -4.0]),
                Tensor::vector(vec![9.0, 9.0, 9.0, 9.0]),
            ],
        );
        let h = embed_tokens(&mut g, &inst, &v).unwrap();
        // tokens: [p0, M | S, p1]
        assert_eq!(g.value(h).row(1), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.value(h).row(2), &[-1.0, -2.0, -3.0, -4.0]);
        assert_eq!(g.value(h).row(0), &[0.0; 4]);
    }

    #[test]
    fn identity_embedding_adds_positions() {
        let mut g = Graph::new();
        let inst = two_patch_instance();
        let eye = Tensor::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.0 });
        let pos1 = Tensor::from_fn(8, 3, |r, _| r as f64 * 100.0);
        let pos2 = Tensor::from_fn(4, 3, |r, _| r as f64);
        let v = vars(
            &mut g,
            eye,
            pos1,
            pos2,
            [
                Tensor::zeros(vec![3]),
                Tensor::zeros(vec![3]),
                Tensor::zeros(vec![3]),
            ],
        );
        let h = embed_tokens(&mut g, &inst, &v).unwrap();
        // row 0: patch [1,2,3] + pos1[0] (=0) + pos2[0] (=0)
        assert_eq!(g.value(h).row(0), &[1.0, 2.0, 3.0]);
        // row 3 is the span patch p1: payload [4,5,6] + pos1[1] (=100) + pos2[2] (=2)
        assert_eq!(g.value(h).row(3), &[106.0, 107.0, 108.0]);
        // row 2 is START: pos1 row of its mask (index 1) + pos2[1]
        assert_eq!(g.value(h).row(2), &[101.0, 101.0, 101.0]);
    }

    #[test]
    fn position_overflow_is_config_error() {
        let mut g = Graph::new();
        let inst = two_patch_instance();
        let v = vars(
            &mut g,
            Tensor::zeros(vec![3, 4]),
            Tensor::zeros(vec![1, 4]), // too small for pos1=1
            Tensor::zeros(vec![4, 4]),
            [
                Tensor::zeros(vec![4]),
                Tensor::zeros(vec![4]),
                Tensor::zeros(vec![4]),
            ],
        );
        assert!(matches!(
            embed_tokens(&mut g, &inst, &v),
            Err(crate::error::Error::Config(_))
        ));
    }

    #[test]
    fn instance_affine_rescales_payload_rows_only() {
        let mut g = Graph::new();
        let inst = two_patch_instance();
        let eye = Tensor::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.0 });
        let mut v = vars(
            &mut g,
            eye,
            Tensor::zeros(vec![8, 3]),
            Tensor::zeros(vec![4, 3]),
            [
                Tensor::vector(vec![5.0, 5.0, 5.0]),
                Tensor::zeros(vec![3]),
                Tensor::zeros(vec![3]),
            ],
        );
        v.revin_gamma = g.leaf(Tensor::scalar(2.0));
        v.revin_beta = g.leaf(Tensor::scalar(1.0));
        let h = embed_tokens(&mut g, &inst, &v).unwrap();
        // patch row: 2*[1,2,3] + 1
        assert_eq!(g.value(h).row(0), &[3.0, 5.0, 7.0]);
        // mask row untouched by the affine
        assert_eq!(g.value(h).row(1), &[5.0, 5.0, 5.0]);
    }
}
