//! A toy BERT-style bidirectional encoder: token/position/segment embeddings,
//! post-layer-norm blocks (multi-head attention -> add&norm -> GELU
//! feed-forward -> add&norm), a tanh pooler, and NSP/NLI classification
//! heads. The forward pass exposes the four intervention hook points used by
//! the debiasing machinery.

pub mod tokenizer;
pub mod train;
pub mod weights;

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use tokenizer::{tokenize, tokenize_single, Encoding, Vocab};
pub use train::{head_gradient, head_loss, train_head, HeadKind, TrainOutcome};
pub use weights::{Tensor, TensorArchive};

/// Which attention projection a hook or subspace refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttnRole {
    Key,
    Query,
    Value,
}

impl AttnRole {
    pub const ALL: [AttnRole; 3] = [AttnRole::Key, AttnRole::Query, AttnRole::Value];

    pub fn short(&self) -> &'static str {
        match self {
            AttnRole::Key => "k",
            AttnRole::Query => "q",
            AttnRole::Value => "v",
        }
    }

    pub fn from_short(s: &str) -> Option<Self> {
        match s {
            "k" => Some(AttnRole::Key),
            "q" => Some(AttnRole::Query),
            "v" => Some(AttnRole::Value),
            _ => None,
        }
    }
}

pub type RowHook = Box<dyn Fn(&mut [f64]) + Send + Sync>;
pub type AttnRowHook = Box<dyn Fn(usize, AttnRole, &mut [f64]) + Send + Sync>;

/// Callbacks installed into a forward pass. All default to absent; an absent
/// hook and an identity hook produce bit-identical traces.
#[derive(Default)]
pub struct ForwardHooks {
    /// Per-head K/Q/V rows at the penultimate layer, before attention scores.
    pub penult_attn: Option<AttnRowHook>,
    /// Every token row output by the penultimate layer (including CLS).
    pub penult_tokens: Option<RowHook>,
    /// The CLS row output by the final layer.
    pub final_cls: Option<RowHook>,
    /// The pooled sentence vector, before the classification heads.
    pub sent: Option<RowHook>,
}

impl ForwardHooks {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.penult_attn.is_none()
            && self.penult_tokens.is_none()
            && self.final_cls.is_none()
            && self.sent.is_none()
    }
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 2 {
            return Err(Error::InvalidParameter {
                name: "n_layers",
                detail: "at least 2 layers required (penultimate and final)".into(),
            });
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidParameter {
                name: "n_heads",
                detail: format!(
                    "d_model {} must be divisible by n_heads {}",
                    self.d_model, self.n_heads
                ),
            });
        }
        if self.max_len < 4 {
            return Err(Error::InvalidParameter {
                name: "max_len",
                detail: "max_len must be at least 4".into(),
            });
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Weights of one encoder block.
#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub wq: Matrix,
    pub bq: Vec<f64>,
    pub wk: Matrix,
    pub bk: Vec<f64>,
    pub wv: Matrix,
    pub bv: Vec<f64>,
    pub wo: Matrix,
    pub bo: Vec<f64>,
    pub w_in: Matrix,
    pub b_in: Vec<f64>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
    pub norm1_gamma: Vec<f64>,
    pub norm1_beta: Vec<f64>,
    pub norm2_gamma: Vec<f64>,
    pub norm2_beta: Vec<f64>,
}

/// Immutable toy transformer weights plus the vocabulary.
#[derive(Debug, Clone)]
pub struct EncoderModel {
    pub vocab: Vocab,
    pub cfg: EncoderConfig,
    pub tok_emb: Matrix,
    pub pos_emb: Matrix,
    pub seg_emb: Matrix,
    pub layers: Vec<LayerWeights>,
    pub pooler_w: Matrix,
    pub pooler_b: Vec<f64>,
    pub nsp_w: Matrix,
    pub nsp_b: Vec<f64>,
    pub nli_w: Matrix,
    pub nli_b: Vec<f64>,
}

/// Per-head K, Q, V matrices (tokens x head_dim) captured at the penultimate
/// layer, after any attention hooks ran.
#[derive(Debug, Clone)]
pub struct PenultAttention {
    pub k: Vec<Matrix>,
    pub q: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl PenultAttention {
    pub fn role(&self, role: AttnRole) -> &[Matrix] {
        match role {
            AttnRole::Key => &self.k,
            AttnRole::Query => &self.q,
            AttnRole::Value => &self.v,
        }
    }
}

/// Everything observable from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Entry 0 is the embedding sum; entry `l + 1` is the output of layer `l`
    /// (with the penultimate-token hook already applied at its layer).
    pub token_states: Vec<Matrix>,
    /// `attn_weights[layer][head]` rows are per-query softmax distributions.
    pub attn_weights: Vec<Vec<Matrix>>,
    pub penult_kqv: PenultAttention,
    /// CLS row after the final layer and the final-CLS hook.
    pub cls_final: Vec<f64>,
    /// Pooled sentence vector after the SENT hook.
    pub sent: Vec<f64>,
    /// `[p(is next), p(not next)]`.
    pub nsp_probs: Vec<f64>,
    /// `[p(entailment), p(neutral), p(contradiction)]`.
    pub nli_probs: Vec<f64>,
}

impl ForwardTrace {
    /// Probability that sentence B is a plausible next sentence.
    pub fn p_next(&self) -> f64 {
        self.nsp_probs[0]
    }
}

const LN_EPS: f64 = 1e-12;

fn layer_norm_row(row: &mut [f64], gamma: &[f64], beta: &[f64]) {
    let d = row.len() as f64;
    let mean = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / d;
    let denom = (var + LN_EPS).sqrt();
    for ((x, &g), &b) in row.iter_mut().zip(gamma).zip(beta) {
        *x = (*x - mean) / denom * g + b;
    }
}

fn gelu(x: f64) -> f64 {
    // tanh approximation, as used by the original BERT implementation
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

fn add_bias(m: &mut Matrix, bias: &[f64]) {
    for r in 0..m.rows() {
        for (x, &b) in m.row_mut(r).iter_mut().zip(bias) {
            *x += b;
        }
    }
}

fn head_slice(m: &Matrix, head: usize, head_dim: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), head_dim);
    for r in 0..m.rows() {
        let src = &m.row(r)[head * head_dim..(head + 1) * head_dim];
        out.row_mut(r).copy_from_slice(src);
    }
    out
}

impl EncoderModel {
    /// Validates every tensor shape against the architecture numbers.
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        let d = self.cfg.d_model;
        let check = |name: &str, m: &Matrix, rows: usize, cols: usize| -> Result<()> {
            if m.rows() != rows || m.cols() != cols {
                return Err(Error::TensorShape {
                    name: name.to_string(),
                    detail: format!(
                        "expected {}x{}, got {}x{}",
                        rows,
                        cols,
                        m.rows(),
                        m.cols()
                    ),
                });
            }
            Ok(())
        };
        let check_vec = |name: &str, v: &[f64], len: usize| -> Result<()> {
            if v.len() != len {
                return Err(Error::TensorShape {
                    name: name.to_string(),
                    detail: format!("expected length {}, got {}", len, v.len()),
                });
            }
            Ok(())
        };
        check("embeddings.token", &self.tok_emb, self.vocab.len(), d)?;
        check("embeddings.position", &self.pos_emb, self.cfg.max_len, d)?;
        check("embeddings.segment", &self.seg_emb, 2, d)?;
        if self.layers.len() != self.cfg.n_layers {
            return Err(Error::TensorShape {
                name: "layers".into(),
                detail: format!(
                    "expected {} layers, got {}",
                    self.cfg.n_layers,
                    self.layers.len()
                ),
            });
        }
        for (i, l) in self.layers.iter().enumerate() {
            check(&format!("layer.{i}.attn.q.weight"), &l.wq, d, d)?;
            check(&format!("layer.{i}.attn.k.weight"), &l.wk, d, d)?;
            check(&format!("layer.{i}.attn.v.weight"), &l.wv, d, d)?;
            check(&format!("layer.{i}.attn.out.weight"), &l.wo, d, d)?;
            check_vec(&format!("layer.{i}.attn.q.bias"), &l.bq, d)?;
            check_vec(&format!("layer.{i}.attn.k.bias"), &l.bk, d)?;
            check_vec(&format!("layer.{i}.attn.v.bias"), &l.bv, d)?;
            check_vec(&format!("layer.{i}.attn.out.bias"), &l.bo, d)?;
            check(&format!("layer.{i}.ffn.in.weight"), &l.w_in, d, self.cfg.d_ff)?;
            check(&format!("layer.{i}.ffn.out.weight"), &l.w_out, self.cfg.d_ff, d)?;
            check_vec(&format!("layer.{i}.ffn.in.bias"), &l.b_in, self.cfg.d_ff)?;
            check_vec(&format!("layer.{i}.ffn.out.bias"), &l.b_out, d)?;
            check_vec(&format!("layer.{i}.norm1.gamma"), &l.norm1_gamma, d)?;
            check_vec(&format!("layer.{i}.norm1.beta"), &l.norm1_beta, d)?;
            check_vec(&format!("layer.{i}.norm2.gamma"), &l.norm2_gamma, d)?;
            check_vec(&format!("layer.{i}.norm2.beta"), &l.norm2_beta, d)?;
        }
        check("pooler.weight", &self.pooler_w, d, d)?;
        check_vec("pooler.bias", &self.pooler_b, d)?;
        check("head.nsp.weight", &self.nsp_w, d, 2)?;
        check_vec("head.nsp.bias", &self.nsp_b, 2)?;
        check("head.nli.weight", &self.nli_w, d, 3)?;
        check_vec("head.nli.bias", &self.nli_b, 3)?;
        Ok(())
    }

    pub fn d_model(&self) -> usize {
        self.cfg.d_model
    }

    pub fn n_heads(&self) -> usize {
        self.cfg.n_heads
    }

    pub fn head_dim(&self) -> usize {
        self.cfg.head_dim()
    }

    /// Index of the penultimate encoder layer.
    pub fn penult_layer(&self) -> usize {
        self.cfg.n_layers - 2
    }

    /// Runs the encoder stack over pre-tokenized input.
    pub fn forward(
        &self,
        ids: &[usize],
        segments: &[u8],
        hooks: &ForwardHooks,
    ) -> Result<ForwardTrace> {
        let t = ids.len();
        if t == 0 {
            return Err(Error::EmptySentence);
        }
        if t > self.cfg.max_len {
            return Err(Error::SequenceTooLong {
                len: t,
                max_len: self.cfg.max_len,
            });
        }
        if segments.len() != t {
            return Err(Error::DimensionMismatch {
                context: "segment ids",
                expected: t,
                got: segments.len(),
            });
        }
        for &id in ids {
            if id >= self.vocab.len() {
                return Err(Error::TokenIdOutOfRange {
                    id,
                    vocab_size: self.vocab.len(),
                });
            }
        }

        let d = self.cfg.d_model;
        let n_heads = self.cfg.n_heads;
        let head_dim = self.cfg.head_dim();
        let penult = self.penult_layer();

        let mut x = Matrix::zeros(t, d);
        for (pos, (&id, &seg)) in ids.iter().zip(segments).enumerate() {
            let row = x.row_mut(pos);
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.tok_emb.get(id, j)
                    + self.pos_emb.get(pos, j)
                    + self.seg_emb.get(seg as usize, j);
            }
        }

        let mut token_states = Vec::with_capacity(self.cfg.n_layers + 1);
        token_states.push(x.clone());
        let mut attn_weights: Vec<Vec<Matrix>> = Vec::with_capacity(self.cfg.n_layers);
        let mut penult_kqv: Option<PenultAttention> = None;

        for (l, lw) in self.layers.iter().enumerate() {
            let mut q = x.matmul(&lw.wq);
            add_bias(&mut q, &lw.bq);
            let mut k = x.matmul(&lw.wk);
            add_bias(&mut k, &lw.bk);
            let mut v = x.matmul(&lw.wv);
            add_bias(&mut v, &lw.bv);

            let mut heads_k: Vec<Matrix> = (0..n_heads).map(|h| head_slice(&k, h, head_dim)).collect();
            let mut heads_q: Vec<Matrix> = (0..n_heads).map(|h| head_slice(&q, h, head_dim)).collect();
            let mut heads_v: Vec<Matrix> = (0..n_heads).map(|h| head_slice(&v, h, head_dim)).collect();

            if l == penult {
                if let Some(hook) = &hooks.penult_attn {
                    for h in 0..n_heads {
                        for r in 0..t {
                            hook(h, AttnRole::Key, heads_k[h].row_mut(r));
                            hook(h, AttnRole::Query, heads_q[h].row_mut(r));
                            hook(h, AttnRole::Value, heads_v[h].row_mut(r));
                        }
                    }
                }
                penult_kqv = Some(PenultAttention {
                    k: heads_k.clone(),
                    q: heads_q.clone(),
                    v: heads_v.clone(),
                });
            }

            let scale = 1.0 / (head_dim as f64).sqrt();
            let mut layer_weights = Vec::with_capacity(n_heads);
            let mut ctx = Matrix::zeros(t, d);
            for h in 0..n_heads {
                let mut scores = heads_q[h].matmul_transb(&heads_k[h]);
                for r in 0..t {
                    for val in scores.row_mut(r) {
                        *val *= scale;
                    }
                    softmax_row(scores.row_mut(r));
                }
                let head_ctx = scores.matmul(&heads_v[h]);
                for r in 0..t {
                    ctx.row_mut(r)[h * head_dim..(h + 1) * head_dim]
                        .copy_from_slice(head_ctx.row(r));
                }
                layer_weights.push(scores);
            }
            attn_weights.push(layer_weights);

            let mut attn_out = ctx.matmul(&lw.wo);
            add_bias(&mut attn_out, &lw.bo);
            for r in 0..t {
                let dst = x.row_mut(r);
                for (a, &b) in dst.iter_mut().zip(attn_out.row(r)) {
                    *a += b;
                }
                layer_norm_row(dst, &lw.norm1_gamma, &lw.norm1_beta);
            }

            let mut hidden = x.matmul(&lw.w_in);
            add_bias(&mut hidden, &lw.b_in);
            for r in 0..t {
                for h in hidden.row_mut(r) {
                    *h = gelu(*h);
                }
            }
            let mut ffn_out = hidden.matmul(&lw.w_out);
            add_bias(&mut ffn_out, &lw.b_out);
            for r in 0..t {
                let dst = x.row_mut(r);
                for (a, &b) in dst.iter_mut().zip(ffn_out.row(r)) {
                    *a += b;
                }
                layer_norm_row(dst, &lw.norm2_gamma, &lw.norm2_beta);
            }

            if l == penult {
                if let Some(hook) = &hooks.penult_tokens {
                    for r in 0..t {
                        hook(x.row_mut(r));
                    }
                }
            }
            token_states.push(x.clone());
        }

        let mut cls_final = x.row(0).to_vec();
        if let Some(hook) = &hooks.final_cls {
            hook(&mut cls_final);
        }

        let mut sent = vec![0.0; d];
        for (j, s) in sent.iter_mut().enumerate() {
            let mut acc = self.pooler_b[j];
            for (i, &c) in cls_final.iter().enumerate() {
                acc += c * self.pooler_w.get(i, j);
            }
            *s = acc.tanh();
        }
        if let Some(hook) = &hooks.sent {
            hook(&mut sent);
        }

        let head = |w: &Matrix, b: &[f64]| -> Vec<f64> {
            let mut logits = b.to_vec();
            for (i, &s) in sent.iter().enumerate() {
                for (j, l) in logits.iter_mut().enumerate() {
                    *l += s * w.get(i, j);
                }
            }
            softmax_row(&mut logits);
            logits
        };
        let nsp_probs = head(&self.nsp_w, &self.nsp_b);
        let nli_probs = head(&self.nli_w, &self.nli_b);

        Ok(ForwardTrace {
            token_states,
            attn_weights,
            penult_kqv: penult_kqv.expect("n_layers >= 2"),
            cls_final,
            sent,
            nsp_probs,
            nli_probs,
        })
    }

    /// Tokenizes a sentence pair and runs the stack.
    pub fn forward_pair(&self, sent_a: &str, sent_b: &str, hooks: &ForwardHooks) -> Result<ForwardTrace> {
        let enc = tokenize(&self.vocab, sent_a, sent_b, self.cfg.max_len)?;
        self.forward(&enc.ids, &enc.segments, hooks)
    }

    /// Tokenizes a single sentence (one segment) and runs the stack.
    pub fn forward_single(&self, sent: &str, hooks: &ForwardHooks) -> Result<ForwardTrace> {
        let enc = tokenize_single(&self.vocab, sent, self.cfg.max_len)?;
        self.forward(&enc.ids, &enc.segments, hooks)
    }

    /// Returns a copy with the given classification head replaced.
    pub fn with_head(&self, head: HeadKind, weight: Matrix, bias: Vec<f64>) -> EncoderModel {
        let mut m = self.clone();
        match head {
            HeadKind::Nsp => {
                m.nsp_w = weight;
                m.nsp_b = bias;
            }
            HeadKind::Nli => {
                m.nli_w = weight;
                m.nli_b = bias;
            }
        }
        m
    }

    /// Serializes weights (manifest + blob) and the vocab into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut a = TensorArchive::new();
        a.set_meta("d_model", self.cfg.d_model);
        a.set_meta("n_layers", self.cfg.n_layers);
        a.set_meta("n_heads", self.cfg.n_heads);
        a.set_meta("d_ff", self.cfg.d_ff);
        a.set_meta("max_len", self.cfg.max_len);
        a.set_meta("vocab_size", self.vocab.len());

        let push_mat = |a: &mut TensorArchive, name: String, m: &Matrix| {
            a.push(name, vec![m.rows(), m.cols()], m.data().to_vec());
        };
        let push_vec = |a: &mut TensorArchive, name: String, v: &[f64]| {
            a.push(name, vec![v.len()], v.to_vec());
        };

        push_mat(&mut a, "embeddings.token".into(), &self.tok_emb);
        push_mat(&mut a, "embeddings.position".into(), &self.pos_emb);
        push_mat(&mut a, "embeddings.segment".into(), &self.seg_emb);
        for (i, l) in self.layers.iter().enumerate() {
            push_mat(&mut a, format!("layer.{i}.attn.q.weight"), &l.wq);
            push_vec(&mut a, format!("layer.{i}.attn.q.bias"), &l.bq);
            push_mat(&mut a, format!("layer.{i}.attn.k.weight"), &l.wk);
            push_vec(&mut a, format!("layer.{i}.attn.k.bias"), &l.bk);
            push_mat(&mut a, format!("layer.{i}.attn.v.weight"), &l.wv);
            push_vec(&mut a, format!("layer.{i}.attn.v.bias"), &l.bv);
            push_mat(&mut a, format!("layer.{i}.attn.out.weight"), &l.wo);
            push_vec(&mut a, format!("layer.{i}.attn.out.bias"), &l.bo);
            push_mat(&mut a, format!("layer.{i}.ffn.in.weight"), &l.w_in);
            push_vec(&mut a, format!("layer.{i}.ffn.in.bias"), &l.b_in);
            push_mat(&mut a, format!("layer.{i}.ffn.out.weight"), &l.w_out);
            push_vec(&mut a, format!("layer.{i}.ffn.out.bias"), &l.b_out);
            push_vec(&mut a, format!("layer.{i}.norm1.gamma"), &l.norm1_gamma);
            push_vec(&mut a, format!("layer.{i}.norm1.beta"), &l.norm1_beta);
            push_vec(&mut a, format!("layer.{i}.norm2.gamma"), &l.norm2_gamma);
            push_vec(&mut a, format!("layer.{i}.norm2.beta"), &l.norm2_beta);
        }
        push_mat(&mut a, "pooler.weight".into(), &self.pooler_w);
        push_vec(&mut a, "pooler.bias".into(), &self.pooler_b);
        push_mat(&mut a, "head.nsp.weight".into(), &self.nsp_w);
        push_vec(&mut a, "head.nsp.bias".into(), &self.nsp_b);
        push_mat(&mut a, "head.nli.weight".into(), &self.nli_w);
        push_vec(&mut a, "head.nli.bias".into(), &self.nli_b);

        a.save(dir)?;
        self.vocab.save(&dir.join("vocab.txt"))
    }

    /// Loads a model saved by [`EncoderModel::save`], validating every tensor
    /// shape against the manifest's architecture numbers.
    pub fn load(dir: &Path) -> Result<EncoderModel> {
        let a = TensorArchive::load(dir)?;
        let cfg = EncoderConfig {
            d_model: a.meta_usize("d_model")?,
            n_layers: a.meta_usize("n_layers")?,
            n_heads: a.meta_usize("n_heads")?,
            d_ff: a.meta_usize("d_ff")?,
            max_len: a.meta_usize("max_len")?,
        };
        let vocab_size = a.meta_usize("vocab_size")?;
        let vocab = Vocab::load(&dir.join("vocab.txt"))?;
        if vocab.len() != vocab_size {
            return Err(Error::TensorShape {
                name: "vocab".into(),
                detail: format!(
                    "manifest vocab_size {} but vocab file has {} tokens",
                    vocab_size,
                    vocab.len()
                ),
            });
        }

        let mat = |name: &str| -> Result<Matrix> {
            let t = a.get(name)?;
            if t.shape.len() != 2 {
                return Err(Error::TensorShape {
                    name: name.to_string(),
                    detail: format!("expected rank 2, got rank {}", t.shape.len()),
                });
            }
            Matrix::new(t.shape[0], t.shape[1], t.values.clone())
        };
        let vec1 = |name: &str| -> Result<Vec<f64>> {
            let t = a.get(name)?;
            if t.shape.len() != 1 {
                return Err(Error::TensorShape {
                    name: name.to_string(),
                    detail: format!("expected rank 1, got rank {}", t.shape.len()),
                });
            }
            Ok(t.values.clone())
        };

        let mut layers = Vec::with_capacity(cfg.n_layers);
        for i in 0..cfg.n_layers {
            layers.push(LayerWeights {
                wq: mat(&format!("layer.{i}.attn.q.weight"))?,
                bq: vec1(&format!("layer.{i}.attn.q.bias"))?,
                wk: mat(&format!("layer.{i}.attn.k.weight"))?,
                bk: vec1(&format!("layer.{i}.attn.k.bias"))?,
                wv: mat(&format!("layer.{i}.attn.v.weight"))?,
                bv: vec1(&format!("layer.{i}.attn.v.bias"))?,
                wo: mat(&format!("layer.{i}.attn.out.weight"))?,
                bo: vec1(&format!("layer.{i}.attn.out.bias"))?,
                w_in: mat(&format!("layer.{i}.ffn.in.weight"))?,
                b_in: vec1(&format!("layer.{i}.ffn.in.bias"))?,
                w_out: mat(&format!("layer.{i}.ffn.out.weight"))?,
                b_out: vec1(&format!("layer.{i}.ffn.out.bias"))?,
                norm1_gamma: vec1(&format!("layer.{i}.norm1.gamma"))?,
                norm1_beta: vec1(&format!("layer.{i}.norm1.beta"))?,
                norm2_gamma: vec1(&format!("layer.{i}.norm2.gamma"))?,
                norm2_beta: vec1(&format!("layer.{i}.norm2.beta"))?,
            });
        }

        let model = EncoderModel {
            vocab,
            cfg,
            tok_emb: mat("embeddings.token")?,
            pos_emb: mat("embeddings.position")?,
            seg_emb: mat("embeddings.segment")?,
            layers,
            pooler_w: mat("pooler.weight")?,
            pooler_b: vec1("pooler.bias")?,
            nsp_w: mat("head.nsp.weight")?,
            nsp_b: vec1("head.nsp.bias")?,
            nli_w: mat("head.nli.weight")?,
            nli_b: vec1("head.nli.bias")?,
        };
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::seeded_model;

    fn toy() -> EncoderModel {
        seeded_model(7, 8, 2, 2, 32)
    }

    #[test]
    fn probabilities_are_simplices() {
        let m = toy();
        let trace = m.forward_pair("he went home", "she stayed", &ForwardHooks::none()).unwrap();
        assert_eq!(trace.nsp_probs.len(), 2);
        assert_eq!(trace.nli_probs.len(), 3);
        assert!((trace.nsp_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((trace.nli_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(trace.nsp_probs.iter().all(|&p| p >= 0.0));
        assert!(trace.nli_probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let m = toy();
        let a = m.forward_pair("the man walked", "he sat down", &ForwardHooks::none()).unwrap();
        let b = m.forward_pair("the man walked", "he sat down", &ForwardHooks::none()).unwrap();
        assert_eq!(a.sent, b.sent);
        assert_eq!(a.nsp_probs, b.nsp_probs);
        assert_eq!(a.cls_final, b.cls_final);
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let m = toy();
        let trace = m.forward_pair("he went home", "she stayed here", &ForwardHooks::none()).unwrap();
        for layer in &trace.attn_weights {
            for head in layer {
                for r in 0..head.rows() {
                    let s: f64 = head.row(r).iter().sum();
                    assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn identity_hooks_reproduce_no_hook_trace() {
        let m = toy();
        let plain = m.forward_pair("he went home", "she stayed", &ForwardHooks::none()).unwrap();
        let hooks = ForwardHooks {
            penult_attn: Some(Box::new(|_, _, _row| {})),
            penult_tokens: Some(Box::new(|_row| {})),
            final_cls: Some(Box::new(|_row| {})),
            sent: Some(Box::new(|_row| {})),
        };
        let hooked = m.forward_pair("he went home", "she stayed", &hooks).unwrap();
        assert_eq!(plain.sent, hooked.sent);
        assert_eq!(plain.nsp_probs, hooked.nsp_probs);
        assert_eq!(plain.cls_final, hooked.cls_final);
        for (a, b) in plain.token_states.iter().zip(&hooked.token_states) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn sequence_too_long_is_rejected() {
        let m = toy();
        let ids = vec![0; m.cfg.max_len + 1];
        let segs = vec![0u8; m.cfg.max_len + 1];
        let err = m.forward(&ids, &segs, &ForwardHooks::none()).unwrap_err();
        assert!(err.to_string().contains("sequence too long"));
    }

    #[test]
    fn out_of_range_token_id_is_rejected() {
        let m = toy();
        let err = m
            .forward(&[m.vocab.len()], &[0], &ForwardHooks::none())
            .unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = toy();
        m.save(dir.path()).unwrap();
        let back = EncoderModel::load(dir.path()).unwrap();
        assert_eq!(m.tok_emb.data(), back.tok_emb.data());
        assert_eq!(m.pos_emb.data(), back.pos_emb.data());
        for (a, b) in m.layers.iter().zip(&back.layers) {
            assert_eq!(a.wq.data(), b.wq.data());
            assert_eq!(a.w_out.data(), b.w_out.data());
            assert_eq!(a.norm2_beta, b.norm2_beta);
        }
        assert_eq!(m.pooler_w.data(), back.pooler_w.data());
        assert_eq!(m.nsp_w.data(), back.nsp_w.data());
        assert_eq!(m.nli_b, back.nli_b);
    }

    #[test]
    fn manifest_width_mismatch_names_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let m = toy();
        m.save(dir.path()).unwrap();
        // Rewrite the manifest claiming d_model 10 while tensors stay width 8.
        let mpath = dir.path().join(weights::MANIFEST_FILE);
        let manifest = std::fs::read_to_string(&mpath).unwrap();
        let patched = manifest.replace("meta d_model 8", "meta d_model 10");
        std::fs::write(&mpath, patched).unwrap();
        let err = EncoderModel::load(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("embeddings.token") || msg.contains("weight"), "{msg}");
    }

    #[test]
    fn vocab_permutation_leaves_outputs_unchanged() {
        let m = toy();
        let plain = m.forward_pair("he went home", "she stayed", &ForwardHooks::none()).unwrap();

        // Rotate the vocabulary and the embedding rows by the same permutation.
        let n = m.vocab.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + 7) % n).collect();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let tokens: Vec<String> = perm.iter().map(|&old| m.vocab.token(old).to_string()).collect();
        let vocab = Vocab::new(tokens).unwrap();
        let mut tok_emb = Matrix::zeros(n, m.cfg.d_model);
        for (new, &old) in perm.iter().enumerate() {
            tok_emb.row_mut(new).copy_from_slice(m.tok_emb.row(old));
        }
        let mut permuted = m.clone();
        permuted.vocab = vocab;
        permuted.tok_emb = tok_emb;

        let got = permuted
            .forward_pair("he went home", "she stayed", &ForwardHooks::none())
            .unwrap();
        for (a, b) in plain.sent.iter().zip(&got.sent) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in plain.nsp_probs.iter().zip(&got.nsp_probs) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
