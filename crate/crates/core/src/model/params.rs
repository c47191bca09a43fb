use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// HAN shares one attention context per level across labels; HLAN has one
/// context row per label at both levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Han,
    Hlan,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "han" => Ok(Mode::Han),
            "hlan" => Ok(Mode::Hlan),
            other => Err(Error::invalid(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Per-direction GRU hidden size; encoder states are twice this.
    pub hidden: usize,
    pub attention: usize,
    pub n_labels: usize,
}

/// How a tensor is treated by L2 regularization and the padding rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Weight,
    Bias,
    /// Weight whose row 0 is the padding vector, excluded from updates.
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_z: Matrix,
    pub u_z: Matrix,
    pub b_z: Matrix,
    pub w_r: Matrix,
    pub u_r: Matrix,
    pub b_r: Matrix,
    pub w_h: Matrix,
    pub u_h: Matrix,
    pub b_h: Matrix,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Matrix::zeros(hidden, input);
        let u = || Matrix::zeros(hidden, hidden);
        let b = || Matrix::zeros(hidden, 1);
        GruParams {
            w_z: w(),
            u_z: u(),
            b_z: b(),
            w_r: w(),
            u_r: u(),
            b_r: b(),
            w_h: w(),
            u_h: u(),
            b_h: b(),
        }
    }

    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden);
        for m in [&mut p.w_z, &mut p.w_r, &mut p.w_h] {
            *m = Matrix::xavier(hidden, input, rng);
        }
        for m in [&mut p.u_z, &mut p.u_r, &mut p.u_h] {
            *m = Matrix::xavier(hidden, hidden, rng);
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.w_z.cols
    }

    pub fn hidden_size(&self) -> usize {
        self.w_z.rows
    }

    fn tensors(&self) -> [(&'static str, &Matrix, TensorRole); 9] {
        use TensorRole::*;
        [
            ("w_z", &self.w_z, Weight),
            ("u_z", &self.u_z, Weight),
            ("b_z", &self.b_z, Bias),
            ("w_r", &self.w_r, Weight),
            ("u_r", &self.u_r, Weight),
            ("b_r", &self.b_r, Bias),
            ("w_h", &self.w_h, Weight),
            ("u_h", &self.u_h, Weight),
            ("b_h", &self.b_h, Bias),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Matrix; 9] {
        [
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiGruParams {
    pub forward: GruParams,
    pub backward: GruParams,
}

impl BiGruParams {
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        BiGruParams {
            forward: GruParams::init(input, hidden, rng),
            backward: GruParams::init(input, hidden, rng),
        }
    }
}

/// `u_i = tanh(proj_w · h_i + proj_b)`, scored against each `context` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub proj_w: Matrix,
    pub proj_b: Matrix,
    pub context: Matrix,
}

impl AttentionParams {
    pub fn init<R: Rng>(state: usize, attention: usize, contexts: usize, rng: &mut R) -> Self {
        AttentionParams {
            proj_w: Matrix::xavier(attention, state, rng),
            proj_b: Matrix::zeros(attention, 1),
            context: Matrix::xavier(contexts, attention, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mode: Mode,
    pub labels: Vec<String>,
    pub embedding: Matrix,
    pub word_gru: BiGruParams,
    pub sentence_gru: BiGruParams,
    pub word_attention: AttentionParams,
    pub sentence_attention: AttentionParams,
    /// `|Y| × 2·hidden`
    pub out_w: Matrix,
    /// `|Y| × 1`
    pub out_b: Matrix,
}

impl ModelParams {
    /// All-zero parameters with the given shapes.
    pub fn zeros(mode: Mode, dims: ModelDims, labels: Vec<String>) -> Result<Self> {
        if labels.len() != dims.n_labels {
            return Err(Error::Dimension(format!(
                "{} labels for n_labels = {}",
                labels.len(),
                dims.n_labels
            )));
        }
        let state = 2 * dims.hidden;
        let contexts = match mode {
            Mode::Han => 1,
            Mode::Hlan => dims.n_labels,
        };
        let bigru = |input| BiGruParams {
            forward: GruParams::zeros(input, dims.hidden),
            backward: GruParams::zeros(input, dims.hidden),
        };
        let attention = || AttentionParams {
            proj_w: Matrix::zeros(dims.attention, state),
            proj_b: Matrix::zeros(dims.attention, 1),
            context: Matrix::zeros(contexts, dims.attention),
        };
        Ok(ModelParams {
            mode,
            labels,
            embedding: Matrix::zeros(dims.vocab_size, dims.embed_dim),
            word_gru: bigru(dims.embed_dim),
            sentence_gru: bigru(state),
            word_attention: attention(),
            sentence_attention: attention(),
            out_w: Matrix::zeros(dims.n_labels, state),
            out_b: Matrix::zeros(dims.n_labels, 1),
        })
    }

    /// Xavier-uniform weights, zero biases, zero padding embedding row.
    pub fn init<R: Rng>(mode: Mode, dims: ModelDims, labels: Vec<String>, rng: &mut R) -> Result<Self> {
        if labels.len() != dims.n_labels {
            return Err(Error::Dimension(format!(
                "{} labels for n_labels = {}",
                labels.len(),
                dims.n_labels
            )));
        }
        if dims.vocab_size < 2 || dims.embed_dim == 0 || dims.hidden == 0 || dims.attention == 0 || dims.n_labels == 0 {
            return Err(Error::invalid(format!("degenerate model dimensions {dims:?}")));
        }
        let state = 2 * dims.hidden;
        let contexts = match mode {
            Mode::Han => 1,
            Mode::Hlan => dims.n_labels,
        };
        let mut embedding = Matrix::uniform(dims.vocab_size, dims.embed_dim, 0.1, rng);
        embedding.row_mut(0).fill(0.0);
        Ok(ModelParams {
            mode,
            labels,
            embedding,
            word_gru: BiGruParams::init(dims.embed_dim, dims.hidden, rng),
            sentence_gru: BiGruParams::init(state, dims.hidden, rng),
            word_attention: AttentionParams::init(state, dims.attention, contexts, rng),
            sentence_attention: AttentionParams::init(state, dims.attention, contexts, rng),
            out_w: Matrix::xavier(dims.n_labels, state, rng),
            out_b: Matrix::zeros(dims.n_labels, 1),
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab_size: self.embedding.rows,
            embed_dim: self.embedding.cols,
            hidden: self.word_gru.forward.hidden_size(),
            attention: self.word_attention.proj_w.rows,
            n_labels: self.labels.len(),
        }
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    /// Number of attention maps per level: 1 for HAN, `|Y|` for HLAN.
    pub fn n_contexts(&self) -> usize {
        match self.mode {
            Mode::Han => 1,
            Mode::Hlan => self.labels.len(),
        }
    }

    /// Every trainable tensor in the fixed checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &Matrix, TensorRole)> {
        let mut out = vec![("embedding".to_string(), &self.embedding, TensorRole::Embedding)];
        for (prefix, gru) in [
            ("word_gru.fwd", &self.word_gru.forward),
            ("word_gru.bwd", &self.word_gru.backward),
            ("sentence_gru.fwd", &self.sentence_gru.forward),
            ("sentence_gru.bwd", &self.sentence_gru.backward),
        ] {
            for (name, m, role) in gru.tensors() {
                out.push((format!("{prefix}.{name}"), m, role));
            }
        }
        for (prefix, att) in [
            ("word_attention", &self.word_attention),
            ("sentence_attention", &self.sentence_attention),
        ] {
            out.push((format!("{prefix}.proj_w"), &att.proj_w, TensorRole::Weight));
            out.push((format!("{prefix}.proj_b"), &att.proj_b, TensorRole::Bias));
            out.push((format!("{prefix}.context"), &att.context, TensorRole::Weight));
        }
        out.push(("out_w".into(), &self.out_w, TensorRole::Weight));
        out.push(("out_b".into(), &self.out_b, TensorRole::Bias));
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.embedding];
        for gru in [
            &mut self.word_gru.forward,
            &mut self.word_gru.backward,
            &mut self.sentence_gru.forward,
            &mut self.sentence_gru.backward,
        ] {
            out.extend(gru.tensors_mut());
        }
        for att in [&mut self.word_attention, &mut self.sentence_attention] {
            out.push(&mut att.proj_w);
            out.push(&mut att.proj_b);
            out.push(&mut att.context);
        }
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }

    /// Zero tensors with this model's shapes, used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for m in z.tensors_mut() {
            m.fill(0.0);
        }
        z
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, m, _)| m.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        let state = 2 * d.hidden;
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Dimension(what.to_string()))
            }
        };
        for (name, gru, input) in [
            ("word_gru.fwd", &self.word_gru.forward, d.embed_dim),
            ("word_gru.bwd", &self.word_gru.backward, d.embed_dim),
            ("sentence_gru.fwd", &self.sentence_gru.forward, state),
            ("sentence_gru.bwd", &self.sentence_gru.backward, state),
        ] {
            let h = d.hidden;
            let ok = [&gru.w_z, &gru.w_r, &gru.w_h].iter().all(|m| m.shape() == (h, input))
                && [&gru.u_z, &gru.u_r, &gru.u_h].iter().all(|m| m.shape() == (h, h))
                && [&gru.b_z, &gru.b_r, &gru.b_h].iter().all(|m| m.shape() == (h, 1));
            check(ok, &format!("{name} gate shapes"))?;
        }
        for (name, att) in [("word_attention", &self.word_attention), ("sentence_attention", &self.sentence_attention)] {
            check(att.proj_w.shape() == (d.attention, state), &format!("{name}.proj_w"))?;
            check(att.proj_b.shape() == (d.attention, 1), &format!("{name}.proj_b"))?;
            check(
                att.context.shape() == (self.n_contexts(), d.attention),
                &format!("{name}.context must have {} rows", self.n_contexts()),
            )?;
        }
        check(self.out_w.shape() == (d.n_labels, state), "out_w")?;
        check(self.out_b.shape() == (d.n_labels, 1), "out_b")?;
        check(self.embedding.row(0).iter().all(|&v| v == 0.0), "padding embedding row must be zero")?;
        for (name, m, _) in self.tensors() {
            if !m.is_finite() {
                return Err(Error::invalid(format!("tensor `{name}` has non-finite entries")));
            }
        }
        Ok(())
    }
}
