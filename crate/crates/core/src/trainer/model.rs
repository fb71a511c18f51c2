use serde::{Deserialize, Serialize};

use crate::attention::{attention_backward, attention_forward, AttentionOutput, AttentionParams};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, ParamSet, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// `logits = x·W + b`. The logits double as the embedding.
    Linear,
    /// One ReLU hidden layer; the hidden activations are the embedding.
    Mlp { hidden: usize },
    /// Attention over a set of node features, then a linear classifier on
    /// `[features, aggregated]`.
    AttentionHead { dk: usize },
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Linear => "linear",
            Architecture::Mlp { .. } => "mlp",
            Architecture::AttentionHead { .. } => "attention",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    input_dim: usize,
    num_outputs: usize,
    params: ParamSet,
}

/// Uniform in `±1/√fan_in`.
fn fan_in_uniform(rng: &mut RngStream, fan_in: usize, fan_out: usize) -> DenseMatrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    rng.uniform_matrix(fan_in, fan_out, -bound, bound)
}

impl ModelParams {
    pub fn init(arch: Architecture, input_dim: usize, num_outputs: usize, rng: &mut RngStream) -> Result<Self> {
        if input_dim == 0 || num_outputs == 0 {
            return Err(Error::config("model needs non-zero input and output widths"));
        }
        let mut params = ParamSet::new();
        match arch {
            Architecture::Linear => {
                params.push("w", fan_in_uniform(rng, input_dim, num_outputs));
                params.push("b", DenseMatrix::zeros(1, num_outputs));
            }
            Architecture::Mlp { hidden } => {
                if hidden == 0 {
                    return Err(Error::config("hidden width must be at least 1"));
                }
                params.push("w1", fan_in_uniform(rng, input_dim, hidden));
                params.push("b1", DenseMatrix::zeros(1, hidden));
                params.push("w2", fan_in_uniform(rng, hidden, num_outputs));
                params.push("b2", DenseMatrix::zeros(1, num_outputs));
            }
            Architecture::AttentionHead { dk } => {
                let att = AttentionParams::init(input_dim, dk, rng)?;
                params.push("wk", att.wk);
                params.push("wq", att.wq);
                params.push("wc", fan_in_uniform(rng, 2 * input_dim, num_outputs));
                params.push("bc", DenseMatrix::zeros(1, num_outputs));
            }
        }
        Ok(Self {
            arch,
            input_dim,
            num_outputs,
            params,
        })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn p(&self, name: &str) -> &DenseMatrix {
        self.params
            .get(name)
            .expect("parameter layout is fixed at construction")
    }

    pub fn attention_params(&self) -> Result<AttentionParams> {
        match self.arch {
            Architecture::AttentionHead { .. } => {
                AttentionParams::new(self.p("wk").clone(), self.p("wq").clone())
            }
            _ => Err(Error::State(format!("{} model has no attention head", self.arch.name()))),
        }
    }

    fn check_input(&self, x: &DenseMatrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::shape(format!(
                "model expects {} input features, got {}",
                self.input_dim,
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<FeedForwardPass> {
        self.check_input(x)?;
        match self.arch {
            Architecture::Linear => Ok(FeedForwardPass {
                input: x.clone(),
                pre: None,
                hidden: None,
                logits: add_row_bias(&x.matmul(self.p("w"))?, self.p("b"))?,
            }),
            Architecture::Mlp { .. } => {
                let pre = add_row_bias(&x.matmul(self.p("w1"))?, self.p("b1"))?;
                let hidden = pre.map(|v| v.max(0.0));
                let logits = add_row_bias(&hidden.matmul(self.p("w2"))?, self.p("b2"))?;
                Ok(FeedForwardPass {
                    input: x.clone(),
                    pre: Some(pre),
                    hidden: Some(hidden),
                    logits,
                })
            }
            Architecture::AttentionHead { .. } => Err(Error::State(
                "attention models take forward_attention".into(),
            )),
        }
    }

    /// Parameter gradients given `∂L/∂logits` and optionally `∂L/∂embedding`.
    pub fn backward(
        &self,
        pass: &FeedForwardPass,
        d_logits: &DenseMatrix,
        d_embedding: Option<&DenseMatrix>,
    ) -> Result<ParamSet> {
        if d_logits.shape() != pass.logits.shape() {
            return Err(Error::shape("logit gradient does not match the forward pass"));
        }
        if let Some(d) = d_embedding {
            if d.shape() != pass.embedding().shape() {
                return Err(Error::shape("embedding gradient does not match the forward pass"));
            }
        }
        let mut grads = ParamSet::new();
        match self.arch {
            Architecture::Linear => {
                let mut d = d_logits.clone();
                if let Some(e) = d_embedding {
                    d.add_scaled(e, 1.0)?;
                }
                grads.push("w", pass.input.matmul_at(&d)?);
                grads.push("b", col_sums(&d));
            }
            Architecture::Mlp { .. } => {
                let (pre, hidden) = match (&pass.pre, &pass.hidden) {
                    (Some(p), Some(h)) => (p, h),
                    _ => return Err(Error::State("forward pass lacks hidden activations".into())),
                };
                let mut d_hidden = d_logits.matmul_bt(self.p("w2"))?;
                if let Some(e) = d_embedding {
                    d_hidden.add_scaled(e, 1.0)?;
                }
                let d_pre = d_hidden.zip_with(pre, "relu_backward", |g, z| if z > 0.0 { g } else { 0.0 })?;
                grads.push("w1", pass.input.matmul_at(&d_pre)?);
                grads.push("b1", col_sums(&d_pre));
                grads.push("w2", hidden.matmul_at(d_logits)?);
                grads.push("b2", col_sums(d_logits));
            }
            Architecture::AttentionHead { .. } => {
                return Err(Error::State("attention models take backward_attention".into()))
            }
        }
        Ok(grads)
    }

    pub fn forward_attention(&self, features: &DenseMatrix) -> Result<AttentionPass> {
        self.check_input(features)?;
        let attention = attention_forward(features, &self.attention_params()?)?;
        let concat = hcat(features, &attention.out)?;
        let logits = add_row_bias(&concat.matmul(self.p("wc"))?, self.p("bc"))?;
        Ok(AttentionPass {
            attention,
            concat,
            logits,
        })
    }

    /// Parameter gradients given `∂L/∂logits` and optionally `∂L/∂raw`
    /// on the attention scores. Input features are treated as data.
    pub fn backward_attention(
        &self,
        pass: &AttentionPass,
        d_logits: &DenseMatrix,
        d_raw: Option<&DenseMatrix>,
    ) -> Result<ParamSet> {
        if d_logits.shape() != pass.logits.shape() {
            return Err(Error::shape("logit gradient does not match the forward pass"));
        }
        let d = self.input_dim;
        let d_concat = d_logits.matmul_bt(self.p("wc"))?;
        let n = d_concat.rows();
        let d_out = DenseMatrix::from_fn(n, d, |r, c| d_concat[(r, d + c)]);
        let att = attention_backward(
            &pass.attention.cache,
            &self.attention_params()?,
            &d_out,
            d_raw,
            1.0,
        )?;
        let mut grads = ParamSet::new();
        grads.push("wk", att.d_wk);
        grads.push("wq", att.d_wq);
        grads.push("wc", pass.concat.matmul_at(d_logits)?);
        grads.push("bc", col_sums(d_logits));
        Ok(grads)
    }
}

#[derive(Clone, Debug)]
pub struct FeedForwardPass {
    input: DenseMatrix,
    pre: Option<DenseMatrix>,
    hidden: Option<DenseMatrix>,
    pub logits: DenseMatrix,
}

impl FeedForwardPass {
    /// Representation the batch affinity is computed on.
    pub fn embedding(&self) -> &DenseMatrix {
        self.hidden.as_ref().unwrap_or(&self.logits)
    }
}

#[derive(Clone, Debug)]
pub struct AttentionPass {
    pub attention: AttentionOutput,
    concat: DenseMatrix,
    pub logits: DenseMatrix,
}

#[derive(Clone, Debug)]
pub struct CrossEntropy {
    pub loss: f64,
    pub d_logits: DenseMatrix,
    pub correct: usize,
}

/// Mean softmax cross-entropy over rows, its gradient, and the number of
/// rows whose arg-max (lowest index on ties) equals the label.
pub fn cross_entropy(logits: &DenseMatrix, labels: &[usize]) -> Result<CrossEntropy> {
    let (n, c) = logits.shape();
    if labels.len() != n || n == 0 {
        return Err(Error::shape(format!(
            "{} labels for {n} rows of logits",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::shape(format!("label {bad} outside {c} classes")));
    }
    let mut d_logits = DenseMatrix::zeros(n, c);
    let mut loss = 0.0;
    let mut correct = 0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        if argmax(row) == y {
            correct += 1;
        }
        for (g, v) in d_logits.row_mut(r).iter_mut().zip(row) {
            *g = (v - lse).exp() / n as f64;
        }
        d_logits[(r, y)] -= 1.0 / n as f64;
    }
    Ok(CrossEntropy {
        loss: loss / n as f64,
        d_logits,
        correct,
    })
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn add_row_bias(m: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if b.shape() != (1, m.cols()) {
        return Err(Error::shape("bias width does not match layer output"));
    }
    let mut out = m.clone();
    for r in 0..out.rows() {
        for (o, bv) in out.row_mut(r).iter_mut().zip(b.as_slice()) {
            *o += bv;
        }
    }
    Ok(out)
}

fn col_sums(m: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(1, m.cols());
    for row in m.iter_rows() {
        for (o, v) in out.as_mut_slice().iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

fn hcat(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::shape("cannot concatenate matrices with different row counts"));
    }
    let (ca, cb) = (a.cols(), b.cols());
    Ok(DenseMatrix::from_fn(a.rows(), ca + cb, |r, c| {
        if c < ca {
            a[(r, c)]
        } else {
            b[(r, c - ca)]
        }
    }))
}
