use crate::error::{Error, Result};
use crate::numerics::tensor::{Real, Tensor};

/// Handle to a node in a [`Graph`].
pub type VarId = usize;

type BackFn<F> = Box<dyn Fn(&[Tensor<F>], &mut [Tensor<F>])>;

/// Reverse-mode tape. Operations append nodes; `backward` replays the tape
/// in reverse (append order is already topological) and accumulates
/// gradients for every node. All forward values are kept alive until the
/// graph is dropped, so one graph per training instance is the intended
/// usage pattern.
pub struct Graph<F: Real> {
    pub(crate) values: Vec<Tensor<F>>,
    steps: Vec<Option<BackFn<F>>>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Plain dense matmul helpers shared by forward ops, backward closures and
/// test oracles. `nn` = a·b, `nt` = a·bᵀ, `tn` = aᵀ·b.
pub fn matmul<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (n, k) = dims2(a)?;
    let (k2, m) = dims2(b)?;
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul: [{n},{k}] x [{k2},{m}]"
        )));
    }
    let mut out = vec![F::zero(); n * m];
    for i in 0..n {
        for p in 0..k {
            let av = a.data()[i * k + p];
            if av == F::zero() {
                continue;
            }
            let brow = &b.data()[p * m..(p + 1) * m];
            let orow = &mut out[i * m..(i + 1) * m];
            for j in 0..m {
                orow[j] = orow[j] + av * brow[j];
            }
        }
    }
    Ok(Tensor::new(vec![n, m], out).expect("matmul output"))
}

pub fn matmul_nt<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (n, k) = dims2(a)?;
    let (m, k2) = dims2(b)?;
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul_nt: [{n},{k}] x [{m},{k2}]^T"
        )));
    }
    let mut out = vec![F::zero(); n * m];
    for i in 0..n {
        let arow = &a.data()[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b.data()[j * k..(j + 1) * k];
            let mut s = F::zero();
            for p in 0..k {
                s = s + arow[p] * brow[p];
            }
            out[i * m + j] = s;
        }
    }
    Ok(Tensor::new(vec![n, m], out).expect("matmul_nt output"))
}

pub fn matmul_tn<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (k, n) = dims2(a)?;
    let (k2, m) = dims2(b)?;
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul_tn: [{k},{n}]^T x [{k2},{m}]"
        )));
    }
    let mut out = vec![F::zero(); n * m];
    for p in 0..k {
        let arow = &a.data()[p * n..(p + 1) * n];
        let brow = &b.data()[p * m..(p + 1) * m];
        for i in 0..n {
            let av = arow[i];
            if av == F::zero() {
                continue;
            }
            let orow = &mut out[i * m..(i + 1) * m];
            for j in 0..m {
                orow[j] = orow[j] + av * brow[j];
            }
        }
    }
    Ok(Tensor::new(vec![n, m], out).expect("matmul_tn output"))
}

fn dims2<F: Real>(t: &Tensor<F>) -> Result<(usize, usize)> {
    match t.shape() {
        [n, m] => Ok((*n, *m)),
        s => Err(Error::Dimension(format!("expected rank-2 tensor, got {s:?}"))),
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph {
            values: Vec::new(),
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: VarId) -> &Tensor<F> {
        &self.values[id]
    }

    /// Insert a leaf node (input or parameter value).
    pub fn leaf(&mut self, t: Tensor<F>) -> VarId {
        self.values.push(t);
        self.steps.push(None);
        self.values.len() - 1
    }

    /// Push a finite-checked node whose gradient is produced by a sibling
    /// node's backstep (used by multi-output ops).
    pub(crate) fn push_dependent(&mut self, label: &str, value: Tensor<F>) -> Result<VarId> {
        value.check_finite(label)?;
        self.values.push(value);
        self.steps.push(None);
        Ok(self.values.len() - 1)
    }

    pub(crate) fn push_node(
        &mut self,
        label: &str,
        value: Tensor<F>,
        step: BackFn<F>,
    ) -> Result<VarId> {
        value.check_finite(label)?;
        self.values.push(value);
        self.steps.push(Some(step));
        Ok(self.values.len() - 1)
    }

    fn shape_of(&self, id: VarId) -> &[usize] {
        self.values[id].shape()
    }

    /// Elementwise sum of two nodes of identical shape.
    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::Dimension(format!(
                "add: {:?} vs {:?}",
                self.shape_of(a),
                self.shape_of(b)
            )));
        }
        let mut out = self.values[a].clone();
        out.add_assign(&self.values[b]);
        let out_id = self.values.len();
        self.push_node(
            "add",
            out,
            Box::new(move |_vals, grads| {
                let g = grads[out_id].clone();
                grads[a].add_assign(&g);
                grads[b].add_assign(&g);
            }),
        )
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::Dimension(format!(
                "sub: {:?} vs {:?}",
                self.shape_of(a),
                self.shape_of(b)
            )));
        }
        let data = self.values[a]
            .data()
            .iter()
            .zip(self.values[b].data())
            .map(|(&x, &y)| x - y)
            .collect();
        let out = Tensor::new(self.shape_of(a).to_vec(), data)?;
        let out_id = self.values.len();
        self.push_node(
            "sub",
            out,
            Box::new(move |_vals, grads| {
                let g = grads[out_id].clone();
                grads[a].add_assign(&g);
                for (gb, gv) in grads[b].data_mut().iter_mut().zip(g.data()) {
                    *gb = *gb - *gv;
                }
            }),
        )
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::Dimension(format!(
                "mul: {:?} vs {:?}",
                self.shape_of(a),
                self.shape_of(b)
            )));
        }
        let data = self.values[a]
            .data()
            .iter()
            .zip(self.values[b].data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::new(self.shape_of(a).to_vec(), data)?;
        let out_id = self.values.len();
        self.push_node(
            "mul",
            out,
            Box::new(move |vals, grads| {
                let g = grads[out_id].clone();
                for i in 0..g.numel() {
                    let gv = g.data()[i];
                    let av = vals[a].data()[i];
                    let bv = vals[b].data()[i];
                    grads[a].data_mut()[i] = grads[a].data()[i] + gv * bv;
                    grads[b].data_mut()[i] = grads[b].data()[i] + gv * av;
                }
            }),
        )
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&mut self, x: VarId, c: F) -> Result<VarId> {
        let out = self.values[x].map(|v| v * c);
        let out_id = self.values.len();
        self.push_node(
            "scale",
            out,
            Box::new(move |_vals, grads| {
                let g = grads[out_id].clone();
                for (gx, gv) in grads[x].data_mut().iter_mut().zip(g.data()) {
                    *gx = *gx + *gv * c;
                }
            }),
        )
    }

    /// Multiply a tensor by one entry of another node (used for gate
    /// weights applied to whole matrices).
    pub fn scale_by_entry(&mut self, x: VarId, s: VarId, entry: usize) -> Result<VarId> {
        if entry >= self.values[s].numel() {
            return Err(Error::Dimension(format!(
                "scale_by_entry: entry {entry} out of {}",
                self.values[s].numel()
            )));
        }
        let sv = self.values[s].data()[entry];
        let out = self.values[x].map(|v| v * sv);
        let out_id = self.values.len();
        self.push_node(
            "scale_by_entry",
            out,
            Box::new(move |vals, grads| {
                let g = grads[out_id].clone();
                let sv = vals[s].data()[entry];
                let mut ds = F::zero();
                for i in 0..g.numel() {
                    let gv = g.data()[i];
                    ds = ds + gv * vals[x].data()[i];
                    grads[x].data_mut()[i] = grads[x].data()[i] + gv * sv;
                }
                grads[s].data_mut()[entry] = grads[s].data()[entry] + ds;
            }),
        )
    }

    /// `x[n,d] + b[d]` broadcast over rows.
    pub fn add_bias(&mut self, x: VarId, b: VarId) -> Result<VarId> {
        let (n, d) = dims2(&self.values[x])?;
        if self.shape_of(b) != [d] {
            return Err(Error::Dimension(format!(
                "add_bias: bias {:?} vs cols {d}",
                self.shape_of(b)
            )));
        }
        let mut out = self.values[x].clone();
        for r in 0..n {
            for c in 0..d {
                let v = out.at(r, c) + self.values[b].data()[c];
                out.data_mut()[r * d + c] = v;
            }
        }
        let out_id = self.values.len();
        self.push_node(
            "add_bias",
            out,
            Box::new(move |_vals, grads| {
                let g = grads[out_id].clone();
                grads[x].add_assign(&g);
                for r in 0..n {
                    for c in 0..d {
                        grads[b].data_mut()[c] = grads[b].data()[c] + g.at(r, c);
                    }
                }
            }),
        )
    }

    /// `y = x W`, tokens as rows.
    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = matmul(&self.values[a], &self.values[b])?;
        let out_id = self.values.len();
        self.push_node(
            "matmul",
            out,
            Box::new(move |vals, grads| {
                let g = grads[out_id].clone();
                let da = matmul_nt(&g, &vals[b]).expect("matmul backward a");
                let db = matmul_tn(&vals[a], &g).expect("matmul backward b");
                grads[a].add_assign(&da);
                grads[b].add_assign(&db);
            }),
        )
    }

    /// `y = x Wᵀ`.
    pub fn matmul_nt(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = matmul_nt(&self.values[a], &self.values[b])?;
        let out_id = self.values.len();
        self.push_node(
            "matmul_nt",
            out,
            Box::new(move |vals, grads| {
                let g = grads[out_id].clone();
                let da = matmul(&g, &vals[b]).expect("matmul_nt backward a");
                let db = matmul_tn(&g, &vals[a]).expect("matmul_nt backward b");
                grads[a].add_assign(&da);
                grads[b].add_assign(&db);
            }),
        )
    }

    /// Select rows by index; indices may repeat (gradients accumulate).
    /// This is both the embedding-table lookup and the row-selection op.
    pub fn gather_rows(&mut self, x: VarId, indices: &[usize]) -> Result<VarId> {
        let (n, d) = dims2(&self.values[x])?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Config(format!(
                "gather_rows: index {bad} out of {n} rows"
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.values[x].row(i));
        }
        let out = Tensor::new(vec![indices.len(), d], data)?;
        let idx: Vec<usize> = indices.to_vec();
        let out_id = self.values.len();
        self.push_node(
            "gather_rows",
            out,
            Box::new(move |_vals, grads| {
                let g = grads[out_id].clone();
                for (k, &i) in idx.iter().enumerate() {
                    for c in 0..d {
                        grads[x].data_mut()[i * d + c] =
                            grads[x].data()[i * d + c] + g.at(k, c);
                    }
                }
            }),
        )
    }

    /// Stack parts vertically. 1-D parts count as single rows.
    pub fn concat_rows(&mut self, parts: &[VarId]) -> Result<VarId> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat_rows: empty".into()));
        }
        let d = self.values[parts[0]].cols();
        let mut rows = 0usize;
        for &p in parts {
            if self.values[p].cols() != d {
                return Err(Error::Dimension(format!(
                    "concat_rows: cols {} vs {d}",
                    self.values[p].cols()
                )));
            }
            rows += self.values[p].rows();
        }
        let mut data = Vec::with_capacity(rows * d);
        for &p in parts {
            data.extend_from_slice(self.values[p].data());
        }
        let out = Tensor::new(vec![rows, d], data)?;
        let parts: Vec<VarId> = parts.to_vec();
        let out_id = self.values.len();
        self.push_node(
            "concat_rows",
            out,
            Box::new(move |_vals, grads| {
                let g = grads[out_id].clone();
                let mut offset = 0usize;
                for &p in &parts {
                    let len = grads[p].numel();
                    for i in 0..len {
                        grads[p].data_mut()[i] = grads[p].data()[i] + g.data()[offset + i];
                    }
                    offset += len;
                }
            }),
        )
    }

    /// Column slice `x[:, start..start+len]`.
    pub fn slice_cols(&mut self, x: VarId, start: usize, len: usize) -> Result<VarId> {
        let (n, d) = dims2(&self.values[x])?;
        if start + len > d {
            return Err(Error::Dimension(format!(
                "slice_cols: {start}+{len} > {d}"
            )));
        }
        let mut data = Vec::with_capacity(n * len);
        for r in 0..n {
            data.extend_from_slice(&self.values[x].row(r)[start..start + len]);
        }
        let out = Tensor::new(vec![n, len], data)?;
        let out_id = self.values.len();
        self.push_node(
            "slice_cols",
            out,
            Box::new(move |_vals, grads| {
                let g = grads[out_id].clone();
                for r in 0..n {
                    for c in 0..len {
                        grads[x].data_mut()[r * d + start + c] =
                            grads[x].data()[r * d + start + c] + g.at(r, c);
                    }
                }
            }),
        )
    }

    /// Concatenate along the feature axis.
    pub fn concat_cols(&mut self, parts: &[VarId]) -> Result<VarId> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat_cols: empty".into()));
        }
        let n = self.values[parts[0]].rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            if self.values[p].rows() != n {
                return Err(Error::Dimension("concat_cols: row mismatch".into()));
            }
            widths.push(self.values[p].cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                data.extend_from_slice(self.values[p].row(r));
            }
        }
        let out = Tensor::new(vec![n, total], data)?;
        let parts: Vec<VarId> = parts.to_vec();
        let out_id = self.values.len();
        self.push_node(
            "concat_cols",
            out,
            Box::new(move |_vals, grads| {
                let g = grads[out_id].clone();
                for r in 0..n {
                    let mut offset = 0usize;
                    for &p in &parts {
                        let w = grads[p].cols();
                        for c in 0..w {
                            grads[p].data_mut()[r * w + c] =
                                grads[p].data()[r * w + c] + g.at(r, offset + c);
                        }
                        offset += w;
                    }
                }
            }),
        )
    }

    pub fn reshape(&mut self, x: VarId, shape: Vec<usize>) -> Result<VarId> {
        let numel: usize = shape.iter().product();
        if numel != self.values[x].numel() {
            return Err(Error::Dimension(format!(
                "reshape: {:?} -> {:?}",
                self.shape_of(x),
                shape
            )));
        }
        let out = Tensor::new(shape, self.values[x].data().to_vec())?;
        let out_id = self.values.len();
        self.push_node(
            "reshape",
            out,
            Box::new(move |_vals, grads| {
                let g = grads[out_id].clone();
                for i in 0..g.numel() {
                    grads[x].data_mut()[i] = grads[x].data()[i] + g.data()[i];
                }
            }),
        )
    }

    /// Row-wise softmax with max-subtraction stabilization. Each output row
    /// is a probability simplex point.
    pub fn softmax_rows(&mut self, x: VarId) -> Result<VarId> {
        self.softmax_impl(x, None)
    }

    /// Row-wise softmax where only `allowed` positions participate;
    /// disallowed positions get exactly zero weight. `allowed` is row-major
    /// `n*k`. A row with no allowed position is an error.
    pub fn masked_softmax_rows(&mut self, x: VarId, allowed: &[bool]) -> Result<VarId> {
        if allowed.len() != self.values[x].numel() {
            return Err(Error::Dimension(format!(
                "masked_softmax_rows: mask len {} vs {}",
                allowed.len(),
                self.values[x].numel()
            )));
        }
        self.softmax_impl(x, Some(allowed.to_vec()))
    }

    fn softmax_impl(&mut self, x: VarId, allowed: Option<Vec<bool>>) -> Result<VarId> {
        let (n, k) = dims2(&self.values[x])?;
        if k < 1 {
            return Err(Error::Dimension("softmax: empty last dimension".into()));
        }
        let mut data = vec![F::zero(); n * k];
        for r in 0..n {
            let row = self.values[x].row(r);
            let allow = |c: usize| allowed.as_ref().map_or(true, |m| m[r * k + c]);
            let mut m = F::neg_infinity();
            for c in 0..k {
                if allow(c) && row[c] > m {
                    m = row[c];
                }
            }
            if m == F::neg_infinity() {
                return Err(Error::Numeric(format!(
                    "softmax: row {r} has no allowed positions"
                )));
            }
            let mut s = F::zero();
            for c in 0..k {
                if allow(c) {
                    let e = (row[c] - m).exp();
                    data[r * k + c] = e;
                    s = s + e;
                }
            }
            for c in 0..k {
                data[r * k + c] = data[r * k + c] / s;
            }
        }
        let out = Tensor::new(vec![n, k], data)?;
        let out_id = self.values.len();
        self.push_node(
            "softmax",
            out,
            Box::new(move |vals, grads| {
                let g = grads[out_id].clone();
                let y = &vals[out_id];
                for r in 0..n {
                    let mut dot = F::zero();
                    for c in 0..k {
                        dot = dot + g.at(r, c) * y.at(r, c);
                    }
                    for c in 0..k {
                        let d = y.at(r, c) * (g.at(r, c) - dot);
                        grads[x].data_mut()[r * k + c] = grads[x].data()[r * k + c] + d;
                    }
                }
            }),
        )
    }

    /// Row-wise normalization to zero mean / unit variance (population
    /// variance, eps inside the square root) followed by a learnable
    /// affine.
    pub fn layer_norm(&mut self, x: VarId, gamma: VarId, beta: VarId, eps: F) -> Result<VarId> {
        let (n, d) = dims2(&self.values[x])?;
        if self.shape_of(gamma) != [d] || self.shape_of(beta) != [d] {
            return Err(Error::Dimension(format!(
                "layer_norm: gamma {:?} beta {:?} vs d={d}",
                self.shape_of(gamma),
                self.shape_of(beta)
            )));
        }
        let mut data = vec![F::zero(); n * d];
        let mut stats = Vec::with_capacity(n);
        let df = F::from_usize(d).unwrap();
        for r in 0..n {
            let row = self.values[x].row(r);
            let mean = row.iter().fold(F::zero(), |s, &v| s + v) / df;
            let var = row
                .iter()
                .fold(F::zero(), |s, &v| s + (v - mean) * (v - mean))
                / df;
            let inv = (var + eps).sqrt().recip();
            stats.push((mean, inv));
            for c in 0..d {
                let xhat = (row[c] - mean) * inv;
                data[r * d + c] =
                    self.values[gamma].data()[c] * xhat + self.values[beta].data()[c];
            }
        }
        let out = Tensor::new(vec![n, d], data)?;
        let out_id = self.values.len();
        self.push_node(
            "layer_norm",
            out,
            Box::new(move |vals, grads| {
                let g = grads[out_id].clone();
                let df = F::from_usize(d).unwrap();
                for r in 0..n {
                    let (mean, inv) = stats[r];
                    let row = vals[x].row(r);
                    // h = g ⊙ gamma; dx = inv (h − mean(h) − x̂ mean(h⊙x̂))
                    let mut mean_h = F::zero();
                    let mut mean_hx = F::zero();
                    for c in 0..d {
                        let xhat = (row[c] - mean) * inv;
                        let h = g.at(r, c) * vals[gamma].data()[c];
                        mean_h = mean_h + h;
                        mean_hx = mean_hx + h * xhat;
                    }
                    mean_h = mean_h / df;
                    mean_hx = mean_hx / df;
                    for c in 0..d {
                        let xhat = (row[c] - mean) * inv;
                        let h = g.at(r, c) * vals[gamma].data()[c];
                        let dx = inv * (h - mean_h - xhat * mean_hx);
                        grads[x].data_mut()[r * d + c] = grads[x].data()[r * d + c] + dx;
                        grads[gamma].data_mut()[c] =
                            grads[gamma].data()[c] + g.at(r, c) * xhat;
                        grads[beta].data_mut()[c] = grads[beta].data()[c] + g.at(r, c);
                    }
                }
            }),
        )
    }

    /// Sum of all entries, a `[1]` node.
    pub fn sum_all(&mut self, x: VarId) -> Result<VarId> {
        let s = self.values[x].data().iter().fold(F::zero(), |a, &v| a + v);
        let out = Tensor::scalar(s);
        let out_id = self.values.len();
        self.push_node(
            "sum_all",
            out,
            Box::new(move |_vals, grads| {
                let g = grads[out_id].data()[0];
                for v in grads[x].data_mut() {
                    *v = *v + g;
                }
            }),
        )
    }

    /// Mean of all entries, a `[1]` node.
    pub fn mean_all(&mut self, x: VarId) -> Result<VarId> {
        let n = self.values[x].numel();
        let s = self.sum_all(x)?;
        self.scale(s, F::from_usize(n).unwrap().recip())
    }

    /// Accumulate gradients of every node with respect to a scalar output.
    pub fn backward(&self, out: VarId) -> Result<Vec<Tensor<F>>> {
        if self.values[out].numel() != 1 {
            return Err(Error::Dimension(format!(
                "backward: output must be scalar, got {:?}",
                self.values[out].shape()
            )));
        }
        let mut grads: Vec<Tensor<F>> = self
            .values
            .iter()
            .map(|v| Tensor::zeros(v.shape().to_vec()))
            .collect();
        grads[out].fill(F::one());
        for id in (0..self.steps.len()).rev() {
            if let Some(step) = &self.steps[id] {
                step(&self.values, &mut grads);
            }
        }
        for (id, g) in grads.iter().enumerate() {
            g.check_finite(&format!("gradient of node {id}"))?;
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn linear_identity_input() {
        // x = I2, W = [[1,2],[3,4]] -> [[1,2],[3,4]]
        let mut g = Graph::new();
        let x = g.leaf(t2(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let w = g.leaf(t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let y = g.matmul(x, w).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn linear_with_bias_hand_multiply() {
        // x=[[1,1]], W=[[1,2],[3,4]], b=[0,0] -> [[4,6]]
        let mut g = Graph::new();
        let x = g.leaf(t2(&[&[1.0, 1.0]]));
        let w = g.leaf(t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = g.leaf(Tensor::vector(vec![0.0, 0.0]));
        let xw = g.matmul(x, w).unwrap();
        let y = g.add_bias(xw, b).unwrap();
        assert_eq!(g.value(y).data(), &[4.0, 6.0]);
    }

    #[test]
    fn grad_of_sum_linear_wrt_w_is_xt_ones() {
        let mut g = Graph::new();
        let x = g.leaf(t2(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let w = g.leaf(t2(&[&[0.5, -0.25], &[1.5, 2.0]]));
        let y = g.matmul(x, w).unwrap();
        let s = g.sum_all(y).unwrap();
        let grads = g.backward(s).unwrap();
        // dW = xᵀ·1: each column of dW is the column sums of x.
        let expected = t2(&[&[9.0, 9.0], &[12.0, 12.0]]);
        assert!(grads[w].max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn softmax_uniform_and_stabilized() {
        let mut g = Graph::new();
        let x = g.leaf(t2(&[&[0.0, 0.0, 0.0, 0.0, 0.0]]));
        let y = g.softmax_rows(x).unwrap();
        for &v in g.value(y).data() {
            assert!((v - 0.2).abs() < 1e-12);
        }
        let x2 = g.leaf(t2(&[&[1000.0, 0.0]]));
        let y2 = g.softmax_rows(x2).unwrap();
        assert!((g.value(y2).data()[0] - 1.0).abs() < 1e-12);
        assert!(g.value(y2).data()[1].abs() < 1e-12);
    }

    #[test]
    fn softmax_log_ratios() {
        let mut g = Graph::new();
        let x = g.leaf(t2(&[&[1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()]]));
        let y = g.softmax_rows(x).unwrap();
        let want = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
        for (v, w) in g.value(y).data().iter().zip(want) {
            assert!((v - w).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.leaf(t2(&[&[0.3, -2.0, 5.0, 0.01], &[9.0, 8.0, -1.0, 0.0]]));
        let y = g.softmax_rows(x).unwrap();
        for r in 0..2 {
            let s: f64 = g.value(y).row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(g.value(y).row(r).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn layer_norm_hand_cases() {
        let mut g = Graph::new();
        let gamma = g.leaf(Tensor::vector(vec![1.0, 1.0]));
        let beta = g.leaf(Tensor::vector(vec![0.0, 0.0]));
        // constant row -> zeros (eps floors the zero variance)
        let x = g.leaf(t2(&[&[5.0, 5.0]]));
        let y = g.layer_norm(x, gamma, beta, 1e-12).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v.abs() < 1e-6));
        // x=[1,3] -> [-1,1] with population variance
        let x2 = g.leaf(t2(&[&[1.0, 3.0]]));
        let y2 = g.layer_norm(x2, gamma, beta, 1e-12).unwrap();
        assert!((g.value(y2).data()[0] + 1.0).abs() < 1e-5);
        assert!((g.value(y2).data()[1] - 1.0).abs() < 1e-5);
        // gamma=0 -> output == beta
        let gamma0 = g.leaf(Tensor::vector(vec![0.0, 0.0]));
        let beta7 = g.leaf(Tensor::vector(vec![7.0, 7.0]));
        let y3 = g.layer_norm(x2, gamma0, beta7, 1e-12).unwrap();
        assert_eq!(g.value(y3).data(), &[7.0, 7.0]);
    }

    #[test]
    fn masked_softmax_zeroes_disallowed() {
        let mut g = Graph::new();
        let x = g.leaf(t2(&[&[3.0, 100.0, -1.0]]));
        let y = g
            .masked_softmax_rows(x, &[true, false, true])
            .unwrap();
        assert_eq!(g.value(y).data()[1], 0.0);
        let s: f64 = g.value(y).data().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_masked_row_errors() {
        let mut g = Graph::new();
        let x = g.leaf(t2(&[&[1.0, 2.0]]));
        assert!(g.masked_softmax_rows(x, &[false, false]).is_err());
    }

    #[test]
    fn gather_rows_accumulates_repeated_indices() {
        let mut g = Graph::new();
        let x = g.leaf(t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let y = g.gather_rows(x, &[1, 1, 0]).unwrap();
        assert_eq!(g.value(y).shape(), &[3, 2]);
        let s = g.sum_all(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads[x].data(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mut g: Graph<f64> = Graph::new();
        let a = g.leaf(Tensor::zeros(vec![2, 3]));
        let b = g.leaf(Tensor::zeros(vec![2, 2]));
        assert!(matches!(
            g.matmul(a, b),
            Err(crate::error::Error::Dimension(_))
        ));
        assert!(g.add(a, b).is_err());
    }
}
