//! The N-stack decoder, residual composition of the temporal and
//! frequency attention blocks, the unified linear projection head shared
//! by pretraining and every downstream task, autoregressive patch
//! generation, and the checkpoint container.

use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    fourier_knowledge_attention, granularity_gate, temporal_self_attention, FourierVars, GlmMask,
    TemporalVars,
};
use crate::embedding::{
    embed_tokens, encode_granularity, tail_instance, EmbedVars, GranularityQuintuple,
    GranularityScaling, InfillingInstance, Token,
};

fn push_span_tokens<F: Real>(
    tokens: &mut Vec<Token<F>>,
    pos1: &mut Vec<usize>,
    pos2: &mut Vec<usize>,
    anchor: usize,
    patches: &[Vec<F>],
) {
    tokens.push(Token::Start);
    pos1.push(anchor);
    pos2.push(1);
    for (j, p) in patches.iter().enumerate() {
        tokens.push(Token::Patch(p.clone()));
        pos1.push(anchor);
        pos2.push(2 + j);
    }
}
use crate::error::{Error, Result};
use crate::numerics::{Graph, Parameter, Real, Tensor, VarId};
use crate::spectral::bin_count_for;

pub const LAYER_NORM_EPS: f64 = 1e-5;

const CHECKPOINT_FORMAT: &str = "timegrain-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Architecture hyperparameters. The defaults are desk scale; reference
/// pretraining scale would be d_model=768, n_layers=12, patch_len=96.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub patch_len: usize,
    pub n_heads: usize,
    pub d_fk: usize,
    pub max_pos: usize,
    pub max_span: usize,
    pub seed: u64,
    pub granularity_scaling: GranularityScaling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_layers: 2,
            patch_len: 16,
            n_heads: 4,
            d_fk: 16,
            max_pos: 512,
            max_span: 64,
            seed: 0,
            granularity_scaling: GranularityScaling::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model < 2 || !self.d_model.is_power_of_two() {
            return Err(Error::Config(format!(
                "d_model must be a power of two >= 2, got {}",
                self.d_model
            )));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.patch_len == 0 || self.d_fk == 0 || self.max_pos == 0 || self.max_span < 3 {
            return Err(Error::Config(
                "patch_len/d_fk/max_pos must be positive, max_span >= 3".into(),
            ));
        }
        Ok(())
    }

    pub fn freq_bins(&self) -> usize {
        bin_count_for(self.d_model)
    }
}

#[derive(Clone, Debug)]
struct LayerIdx {
    w_q: usize,
    w_k: usize,
    w_v: usize,
    w_o: usize,
    n1_gamma: usize,
    n1_beta: usize,
    n2_gamma: usize,
    n2_beta: usize,
    a: [usize; 5],
    b: [usize; 5],
    w_full: usize,
    k_f: usize,
}

#[derive(Clone, Debug)]
struct ParamIndex {
    w_emb: usize,
    pos1: usize,
    pos2: usize,
    mask_vec: usize,
    start_vec: usize,
    end_vec: usize,
    revin_gamma: usize,
    revin_beta: usize,
    w_fq: usize,
    layers: Vec<LayerIdx>,
    w_linpoj: usize,
}

/// The full model: flat named parameter storage plus a typed index into
/// it. One `Parameter` per tensor; the projection head `head.w_linpoj` is
/// the single output head shared by pretraining, forecasting, imputation
/// and anomaly reconstruction.
pub struct Model<F: Real> {
    config: ModelConfig,
    params: Vec<Parameter<F>>,
    idx: ParamIndex,
}

/// Node ids of one forward pass: every parameter leafed in storage order,
/// plus the prediction rows (one `[L_p]` patch per Part B position).
pub struct ForwardVars {
    pub param_vars: Vec<VarId>,
    pub predictions: VarId,
}

struct Init<'r> {
    rng: &'r mut ChaCha8Rng,
}

impl<'r> Init<'r> {
    fn xavier(&mut self, rows: usize, cols: usize) -> Tensor<f64> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Tensor::from_fn(rows, cols, |_, _| self.rng.random_range(-limit..limit))
    }

    fn normal(&mut self, shape: Vec<usize>, std: f64) -> Tensor<f64> {
        let dist = rand_distr::Normal::new(0.0, std).expect("normal init std");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.sample(dist)).collect();
        Tensor::new(shape, data).expect("normal init")
    }
}

impl<F: Real> Model<F> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut init = Init { rng: &mut rng };
        let d = config.d_model;
        let b = config.freq_bins();

        let mut params: Vec<Parameter<F>> = Vec::new();
        let push = |params: &mut Vec<Parameter<F>>, name: String, t: Tensor<f64>| -> usize {
            let v = Tensor::from_f64_slice(t.shape().to_vec(), t.data()).expect("init tensor");
            params.push(Parameter::new(name, v));
            params.len() - 1
        };

        let w_emb = push(
            &mut params,
            "embed.w_emb".into(),
            init.xavier(config.patch_len, d),
        );
        let pos1 = push(
            &mut params,
            "embed.pos1".into(),
            init.normal(vec![config.max_pos, d], 0.02),
        );
        let pos2 = push(
            &mut params,
            "embed.pos2".into(),
            init.normal(vec![config.max_span, d], 0.02),
        );
        let mask_vec = push(
            &mut params,
            "embed.mask".into(),
            init.normal(vec![d], 0.02),
        );
        let start_vec = push(
            &mut params,
            "embed.start".into(),
            init.normal(vec![d], 0.02),
        );
        let end_vec = push(&mut params, "embed.end".into(), init.normal(vec![d], 0.02));
        let revin_gamma = push(
            &mut params,
            "revin.gamma".into(),
            Tensor::scalar(1.0),
        );
        let revin_beta = push(&mut params, "revin.beta".into(), Tensor::scalar(0.0));
        let w_fq = push(
            &mut params,
            "gate.w_query".into(),
            init.xavier(5, config.d_fk),
        );

        let mut layers = Vec::with_capacity(config.n_layers);
        for li in 0..config.n_layers {
            let p = |s: &str| format!("layers.{li}.{s}");
            let w_q = push(&mut params, p("temporal.w_q"), init.xavier(d, d));
            let w_k = push(&mut params, p("temporal.w_k"), init.xavier(d, d));
            let w_v = push(&mut params, p("temporal.w_v"), init.xavier(d, d));
            let w_o = push(&mut params, p("temporal.w_o"), init.xavier(d, d));
            let n1_gamma = push(&mut params, p("norm1.gamma"), Tensor::filled(vec![d], 1.0));
            let n1_beta = push(&mut params, p("norm1.beta"), Tensor::zeros(vec![d]));
            let n2_gamma = push(&mut params, p("norm2.gamma"), Tensor::filled(vec![d], 1.0));
            let n2_beta = push(&mut params, p("norm2.beta"), Tensor::zeros(vec![d]));
            let a = std::array::from_fn(|i| {
                push(
                    &mut params,
                    p(&format!("fourier.a{i}")),
                    init.normal(vec![b, 1], 0.02),
                )
            });
            let bm = std::array::from_fn(|i| {
                push(
                    &mut params,
                    p(&format!("fourier.b{i}")),
                    init.normal(vec![1, b], 0.02),
                )
            });
            let w_full = push(&mut params, p("fourier.w_full"), init.xavier(b, b));
            let k_f = push(
                &mut params,
                p("gate.keys"),
                init.normal(vec![5, config.d_fk], 0.2),
            );
            layers.push(LayerIdx {
                w_q,
                w_k,
                w_v,
                w_o,
                n1_gamma,
                n1_beta,
                n2_gamma,
                n2_beta,
                a,
                b: bm,
                w_full,
                k_f,
            });
        }
        let w_linpoj = push(
            &mut params,
            "head.w_linpoj".into(),
            init.xavier(d, config.patch_len),
        );

        Ok(Model {
            config,
            params,
            idx: ParamIndex {
                w_emb,
                pos1,
                pos2,
                mask_vec,
                start_vec,
                end_vec,
                revin_gamma,
                revin_beta,
                w_fq,
                layers,
                w_linpoj,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Parameter<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<F>] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.shape().to_vec()))
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    /// Current instance-affine values (the learnable half of reversible
    /// instance normalization).
    pub fn revin_affine(&self) -> (F, F) {
        (
            self.params[self.idx.revin_gamma].value.data()[0],
            self.params[self.idx.revin_beta].value.data()[0],
        )
    }

    /// Per-layer granularity gate weights for a quintuple. These depend
    /// only on the quintuple and the gating parameters, never on the data
    /// tensor flowing through the layer.
    pub fn gate_weights(&self, quintuple: &GranularityQuintuple) -> Result<Vec<Vec<F>>> {
        let mut g = Graph::new();
        let w_fq = g.leaf(self.params[self.idx.w_fq].value.clone());
        let q_f = encode_granularity(&mut g, quintuple, self.config.granularity_scaling, w_fq)?;
        let mut out = Vec::with_capacity(self.idx.layers.len());
        for layer in &self.idx.layers {
            let k_f = g.leaf(self.params[layer.k_f].value.clone());
            let w = granularity_gate(&mut g, q_f, k_f)?;
            out.push(g.value(w).data().to_vec());
        }
        Ok(out)
    }

    fn leaf_params(&self, g: &mut Graph<F>) -> Vec<VarId> {
        self.params
            .iter()
            .map(|p| g.leaf(p.value.clone()))
            .collect()
    }

    /// Embed, run the N decoder layers under the GLM mask, and project
    /// every Part B row through the unified head.
    pub fn build_forward(
        &self,
        g: &mut Graph<F>,
        inst: &InfillingInstance<F>,
        quintuple: &GranularityQuintuple,
    ) -> Result<ForwardVars> {
        if inst.patch_len() != self.config.patch_len {
            return Err(Error::Incompatible(format!(
                "instance patch length {} vs model {}",
                inst.patch_len(),
                self.config.patch_len
            )));
        }
        if inst.part_b_len() == 0 {
            return Err(Error::Data("forward: instance has no Part B".into()));
        }
        let pv = self.leaf_params(g);
        let ev = EmbedVars {
            w_emb: pv[self.idx.w_emb],
            pos1: pv[self.idx.pos1],
            pos2: pv[self.idx.pos2],
            mask_vec: pv[self.idx.mask_vec],
            start_vec: pv[self.idx.start_vec],
            end_vec: pv[self.idx.end_vec],
            revin_gamma: pv[self.idx.revin_gamma],
            revin_beta: pv[self.idx.revin_beta],
        };
        let mut h = embed_tokens(g, inst, &ev)?;
        let q_f = encode_granularity(
            g,
            quintuple,
            self.config.granularity_scaling,
            pv[self.idx.w_fq],
        )?;
        let mask = GlmMask::for_instance(inst);
        let eps = F::of_f64(LAYER_NORM_EPS);
        for layer in &self.idx.layers {
            let gate = granularity_gate(g, q_f, pv[layer.k_f])?;
            let tv = TemporalVars {
                w_q: pv[layer.w_q],
                w_k: pv[layer.w_k],
                w_v: pv[layer.w_v],
                w_o: pv[layer.w_o],
            };
            let fv = FourierVars {
                a: std::array::from_fn(|i| pv[layer.a[i]]),
                b: std::array::from_fn(|i| pv[layer.b[i]]),
                w_full: pv[layer.w_full],
            };
            let n1 = g.layer_norm(h, pv[layer.n1_gamma], pv[layer.n1_beta], eps)?;
            let t = temporal_self_attention(g, n1, &tv, &mask, self.config.n_heads)?;
            let h1 = g.add(h, t)?;
            let n2 = g.layer_norm(h1, pv[layer.n2_gamma], pv[layer.n2_beta], eps)?;
            let f = fourier_knowledge_attention(g, n2, gate, &fv, self.config.d_model)?;
            h = g.add(h1, f)?;
        }
        let rows: Vec<usize> = (inst.part_a_len..inst.n_tokens()).collect();
        let part_b = g.gather_rows(h, &rows)?;
        let predictions = g.matmul(part_b, pv[self.idx.w_linpoj])?;
        Ok(ForwardVars {
            param_vars: pv,
            predictions,
        })
    }

    /// Teacher-forced forward returning the prediction rows as a tensor.
    pub fn forward(
        &self,
        inst: &InfillingInstance<F>,
        quintuple: &GranularityQuintuple,
    ) -> Result<Tensor<F>> {
        let mut g = Graph::new();
        let fv = self.build_forward(&mut g, inst, quintuple)?;
        Ok(g.value(fv.predictions).clone())
    }

    /// Scatter graph gradients back into the parameter stores, scaled.
    pub fn accumulate_grads(
        &mut self,
        grads: &[Tensor<F>],
        param_vars: &[VarId],
        scale: F,
    ) {
        for (p, &v) in self.params.iter_mut().zip(param_vars) {
            let g = &grads[v];
            for (acc, &gv) in p.grad.data_mut().iter_mut().zip(g.data()) {
                *acc = *acc + gv * scale;
            }
        }
    }

    /// Autoregressive generation of `n_future` patches from a standardized
    /// context: one tail span, one token at a time, each prediction fed
    /// back as the next span input. Position t's output is a pure function
    /// of the context and the generated tokens before t.
    pub fn generate(
        &self,
        context: &[Vec<F>],
        n_future: usize,
        quintuple: &GranularityQuintuple,
    ) -> Result<Vec<Vec<F>>> {
        if n_future == 0 {
            return Err(Error::Config("generate: n_future must be >= 1".into()));
        }
        if n_future + 2 > self.config.max_span {
            return Err(Error::Config(format!(
                "generate: span of {n_future} patches exceeds max_span {}",
                self.config.max_span
            )));
        }
        if context.len() + 1 > self.config.max_pos {
            return Err(Error::Config(format!(
                "generate: context of {} patches exceeds max_pos {}",
                context.len(),
                self.config.max_pos
            )));
        }
        let mut generated: Vec<Vec<F>> = Vec::with_capacity(n_future);
        for _ in 0..n_future {
            let inst = tail_instance(context, &generated, n_future)?;
            let preds = self.forward(&inst, quintuple)?;
            let last = preds.row(preds.rows() - 1).to_vec();
            generated.push(last);
        }
        Ok(generated)
    }

    /// Autoregressively regenerate every masked span of a corrupted token
    /// sequence. `part_a` must contain exactly `span_lens.len()` masks;
    /// spans are produced in order, each conditioned on Part A and all
    /// previously generated spans. Returns the generated patches per span.
    pub fn infill(
        &self,
        part_a: &[Token<F>],
        span_lens: &[usize],
        quintuple: &GranularityQuintuple,
    ) -> Result<Vec<Vec<Vec<F>>>> {
        let mask_positions: Vec<usize> = part_a
            .iter()
            .enumerate()
            .filter_map(|(i, t)| matches!(t, Token::Mask).then_some(i))
            .collect();
        if mask_positions.len() != span_lens.len() {
            return Err(Error::Config(format!(
                "infill: {} masks vs {} spans",
                mask_positions.len(),
                span_lens.len()
            )));
        }
        if span_lens.contains(&0) {
            return Err(Error::Config("infill: zero-length span".into()));
        }
        if let Some(&longest) = span_lens.iter().max() {
            if longest + 2 > self.config.max_span {
                return Err(Error::Config(format!(
                    "infill: span of {longest} patches exceeds max_span {}",
                    self.config.max_span
                )));
            }
        }
        if part_a.len() > self.config.max_pos {
            return Err(Error::Config(format!(
                "infill: context of {} tokens exceeds max_pos {}",
                part_a.len(),
                self.config.max_pos
            )));
        }
        let patch_len = self.config.patch_len;
        let mut done: Vec<Vec<Vec<F>>> = Vec::with_capacity(span_lens.len());
        for (k, &len) in span_lens.iter().enumerate() {
            let mut current: Vec<Vec<F>> = Vec::with_capacity(len);
            for _ in 0..len {
                let mut tokens: Vec<Token<F>> = part_a.to_vec();
                let mut pos1: Vec<usize> = (0..part_a.len()).collect();
                let mut pos2: Vec<usize> = vec![0; part_a.len()];
                let mut lens_so_far: Vec<usize> = Vec::new();
                for (j, span) in done.iter().enumerate().take(k) {
                    push_span_tokens(&mut tokens, &mut pos1, &mut pos2, mask_positions[j], span);
                    lens_so_far.push(span.len());
                }
                push_span_tokens(&mut tokens, &mut pos1, &mut pos2, mask_positions[k], &current);
                lens_so_far.push(current.len());
                let part_b = tokens.len() - part_a.len();
                let inst = InfillingInstance {
                    tokens,
                    part_a_len: part_a.len(),
                    pos1,
                    pos2,
                    targets: vec![crate::embedding::Target::End; part_b],
                    span_lens: lens_so_far,
                    spans_sigma: Vec::new(),
                    part_a_origin: vec![None; part_a.len()],
                    patch_len,
                    n_patches: 0,
                };
                let preds = self.forward(&inst, quintuple)?;
                current.push(preds.row(preds.rows() - 1).to_vec());
            }
            done.push(current);
        }
        Ok(done)
    }

    /// Write a versioned structured-text checkpoint (config + named
    /// parameter tensors). Values round-trip bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dtype: F::DTYPE.into(),
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| ParamEntry {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    data: p.value.to_f64_vec(),
                })
                .collect(),
        };
        let f = std::fs::File::create(path)?;
        serde_json::to_writer(BufWriter::new(f), &file)
            .map_err(|e| Error::Data(format!("checkpoint write: {e}")))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let file: CheckpointFile = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| Error::Incompatible(format!("checkpoint parse: {e}")))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Incompatible(format!(
                "unknown checkpoint format {:?}",
                file.format
            )));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Incompatible(format!(
                "unsupported checkpoint version {}",
                file.version
            )));
        }
        if file.dtype != F::DTYPE {
            return Err(Error::Incompatible(format!(
                "checkpoint dtype {} vs requested {}",
                file.dtype,
                F::DTYPE
            )));
        }
        let mut model = Model::new(file.config)?;
        if file.params.len() != model.params.len() {
            return Err(Error::Incompatible(format!(
                "checkpoint has {} tensors, model expects {}",
                file.params.len(),
                model.params.len()
            )));
        }
        for entry in &file.params {
            let pi = model
                .params
                .iter()
                .position(|p| p.name == entry.name)
                .ok_or_else(|| {
                    Error::Incompatible(format!("unknown parameter {:?}", entry.name))
                })?;
            if model.params[pi].value.shape() != entry.shape.as_slice() {
                return Err(Error::Incompatible(format!(
                    "parameter {} shape {:?} vs expected {:?}",
                    entry.name,
                    entry.shape,
                    model.params[pi].value.shape()
                )));
            }
            model.params[pi].value = Tensor::from_f64_slice(entry.shape.clone(), &entry.data)?;
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    dtype: String,
    config: ModelConfig,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}
