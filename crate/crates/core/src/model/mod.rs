//! Per-modality MLP encoders, optional projection heads and linear classifiers.
//!
//! For modality `M ∈ {A, B}`:
//!
//! ```text
//! h = f_M(x)          depth × (Linear → ReLU), the representation used by metrics
//! logits = h·W_M + b  linear classifier
//! z = normalize(g_M(h))
//! ```
//!
//! `g_M` is the identity when projections are disabled, otherwise an MLP with
//! ReLU between layers and inverted dropout on each layer input during
//! training. Rows are L2-normalized with a `1e-12` floor on the divisor, so an
//! all-zero row stays zero; such rows are reported by [`ModelState::project_with_diagnostics`].
//!
//! Every computation exists twice: plain matrix functions for evaluation and
//! `*_on` variants that record onto a [`Tape`] for training. Both call the
//! same matrix kernels in the same order, so their forward values agree bit
//! for bit.

mod checkpoint;

use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};

use crate::error::{invalid, Error, Result};
use crate::numcore::{Matrix, NodeId, Rng, Tape};

/// Divisor floor for row normalization.
pub const NORM_EPS: f64 = 1e-12;

const STREAM_INIT_A: u64 = 101;
const STREAM_INIT_B: u64 = 102;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    A,
    B,
}

impl Modality {
    pub const BOTH: [Modality; 2] = [Modality::A, Modality::B];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub depth: usize,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 12,
            hidden_dim: 12,
            depth: 3,
            activation: Activation::Relu,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub enabled: bool,
    pub out_dim: usize,
    pub depth: usize,
    pub dropout: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            out_dim: 12,
            depth: 1,
            dropout: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub projection: ProjectionConfig,
    pub n_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            projection: ProjectionConfig::default(),
            n_classes: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        if e.depth == 0 || e.input_dim == 0 || e.hidden_dim == 0 {
            return Err(invalid("encoder depth and dimensions must be positive"));
        }
        if self.n_classes < 2 {
            return Err(invalid("need at least two classes"));
        }
        let p = &self.projection;
        if p.enabled && (p.depth == 0 || p.out_dim == 0) {
            return Err(invalid("enabled projection needs positive depth and out_dim"));
        }
        if !(0.0..1.0).contains(&p.dropout) {
            return Err(invalid(format!("dropout must be in [0, 1), got {}", p.dropout)));
        }
        Ok(())
    }

    /// Dimension of the normalized embedding `z`.
    pub fn embed_dim(&self) -> usize {
        if self.projection.enabled {
            self.projection.out_dim
        } else {
            self.encoder.hidden_dim
        }
    }
}

/// `y = x·w + b` with `w` of shape `in×out` and `b` of shape `1×out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Matrix,
    pub b: Matrix,
}

impl Linear {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Matrix::zeros(fan_in, fan_out),
            b: Matrix::zeros(1, fan_out),
        }
    }

    /// He-uniform weights `U(−√(6/fan_in), √(6/fan_in))`, zero bias.
    pub fn he_uniform(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        Self {
            w: Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform_range(-bound, bound)),
            b: Matrix::zeros(1, fan_out),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul(&self.w)?;
        let b = self.b.row(0);
        for i in 0..y.rows() {
            for (v, bb) in y.row_mut(i).iter_mut().zip(b) {
                *v += bb;
            }
        }
        Ok(y)
    }
}

fn relu(m: &Matrix) -> Matrix {
    m.map(|x| if x > 0.0 { x } else { 0.0 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: ModelConfig,
    pub init_seed: u64,
    pub encoder_a: Vec<Linear>,
    pub encoder_b: Vec<Linear>,
    /// Empty when projections are disabled.
    pub proj_a: Vec<Linear>,
    pub proj_b: Vec<Linear>,
    pub clf_a: Linear,
    pub clf_b: Linear,
}

/// Tape handles for every parameter, laid out like [`ModelState::params`].
#[derive(Clone, Debug)]
pub struct ParamNodes {
    ids: Vec<NodeId>,
    enc: [usize; 2],
    proj: [usize; 2],
    clf: [usize; 2],
}

impl ParamNodes {
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    fn layer(&self, start: usize, k: usize) -> (NodeId, NodeId) {
        (self.ids[start + 2 * k], self.ids[start + 2 * k + 1])
    }
}

/// Rows whose norm fell below [`NORM_EPS`] during normalization.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProjectionDiagnostics {
    pub zero_rows: Vec<usize>,
}

impl ModelState {
    /// Deterministic He-uniform initialization. Each modality draws from its
    /// own stream of `seed`, in the order encoder, projection, classifier.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let build = |stream: u64| {
            let mut rng = Rng::substream(seed, stream);
            let e = &config.encoder;
            let enc: Vec<Linear> = (0..e.depth)
                .map(|k| {
                    let fan_in = if k == 0 { e.input_dim } else { e.hidden_dim };
                    Linear::he_uniform(fan_in, e.hidden_dim, &mut rng)
                })
                .collect();
            let proj = projection_shapes(config)
                .into_iter()
                .map(|(i, o)| Linear::he_uniform(i, o, &mut rng))
                .collect();
            let clf = Linear::he_uniform(e.hidden_dim, config.n_classes, &mut rng);
            (enc, proj, clf)
        };
        let (encoder_a, proj_a, clf_a) = build(STREAM_INIT_A);
        let (encoder_b, proj_b, clf_b) = build(STREAM_INIT_B);
        Ok(Self {
            config: config.clone(),
            init_seed: seed,
            encoder_a,
            encoder_b,
            proj_a,
            proj_b,
            clf_a,
            clf_b,
        })
    }

    /// All parameters zero.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let e = &config.encoder;
        let enc = || -> Vec<Linear> {
            (0..e.depth)
                .map(|k| Linear::zeros(if k == 0 { e.input_dim } else { e.hidden_dim }, e.hidden_dim))
                .collect()
        };
        let proj = || -> Vec<Linear> {
            projection_shapes(config)
                .into_iter()
                .map(|(i, o)| Linear::zeros(i, o))
                .collect()
        };
        Ok(Self {
            config: config.clone(),
            init_seed: 0,
            encoder_a: enc(),
            encoder_b: enc(),
            proj_a: proj(),
            proj_b: proj(),
            clf_a: Linear::zeros(e.hidden_dim, config.n_classes),
            clf_b: Linear::zeros(e.hidden_dim, config.n_classes),
        })
    }

    fn groups(&self) -> [(&'static str, &[Linear]); 6] {
        [
            ("encoder_a", &self.encoder_a),
            ("proj_a", &self.proj_a),
            ("clf_a", std::slice::from_ref(&self.clf_a)),
            ("encoder_b", &self.encoder_b),
            ("proj_b", &self.proj_b),
            ("clf_b", std::slice::from_ref(&self.clf_b)),
        ]
    }

    /// Parameter names in canonical order, e.g. `encoder_a.0.w`.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (g, layers) in self.groups() {
            for k in 0..layers.len() {
                out.push(format!("{g}.{k}.w"));
                out.push(format!("{g}.{k}.b"));
            }
        }
        out
    }

    /// Parameters in canonical order: per modality encoder, projection,
    /// classifier; weight before bias in each layer.
    pub fn params(&self) -> Vec<&Matrix> {
        self.groups()
            .into_iter()
            .flat_map(|(_, layers)| layers.iter().flat_map(|l| [&l.w, &l.b]))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for layers in [
            &mut self.encoder_a,
            &mut self.proj_a,
            std::slice::from_mut(&mut self.clf_a),
            &mut self.encoder_b,
            &mut self.proj_b,
            std::slice::from_mut(&mut self.clf_b),
        ] {
            for l in layers.iter_mut() {
                out.push(&mut l.w);
                out.push(&mut l.b);
            }
        }
        out
    }

    /// Parameters belonging to one modality's encoder, projection and classifier.
    pub fn modality_param_range(&self, m: Modality) -> std::ops::Range<usize> {
        let half = 2 * (self.encoder_a.len() + self.proj_a.len() + 1);
        match m {
            Modality::A => 0..half,
            Modality::B => half..2 * half,
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params().iter().map(|p| p.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    fn encoder(&self, m: Modality) -> &[Linear] {
        match m {
            Modality::A => &self.encoder_a,
            Modality::B => &self.encoder_b,
        }
    }

    fn projection(&self, m: Modality) -> &[Linear] {
        match m {
            Modality::A => &self.proj_a,
            Modality::B => &self.proj_b,
        }
    }

    fn classifier(&self, m: Modality) -> &Linear {
        match m {
            Modality::A => &self.clf_a,
            Modality::B => &self.clf_b,
        }
    }

    /// Final hidden representation `f_M(x)`.
    pub fn encode(&self, m: Modality, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.config.encoder.input_dim {
            return Err(Error::Shape {
                op: "encode",
                left: x.shape(),
                right: (x.rows(), self.config.encoder.input_dim),
            });
        }
        let mut h = x.clone();
        for layer in self.encoder(m) {
            h = relu(&layer.forward(&h)?);
        }
        Ok(h)
    }

    pub fn classify(&self, m: Modality, h: &Matrix) -> Result<Matrix> {
        self.classifier(m).forward(h)
    }

    /// Normalized embedding without dropout.
    pub fn project(&self, m: Modality, h: &Matrix) -> Result<Matrix> {
        Ok(self.project_with_diagnostics(m, h)?.0)
    }

    pub fn project_with_diagnostics(&self, m: Modality, h: &Matrix) -> Result<(Matrix, ProjectionDiagnostics)> {
        let layers = self.projection(m);
        let mut g = h.clone();
        for (k, layer) in layers.iter().enumerate() {
            g = layer.forward(&g)?;
            if k + 1 < layers.len() {
                g = relu(&g);
            }
        }
        let mut diag = ProjectionDiagnostics::default();
        for i in 0..g.rows() {
            let row = g.row_mut(i);
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n < NORM_EPS {
                diag.zero_rows.push(i);
            }
            let d = n.max(NORM_EPS);
            row.iter_mut().for_each(|v| *v /= d);
        }
        Ok((g, diag))
    }

    /// Records every parameter as a differentiable tape leaf.
    pub fn bind(&self, tape: &mut Tape) -> ParamNodes {
        let mut ids = Vec::new();
        let mut starts = [0usize; 6];
        for (slot, (_, layers)) in self.groups().into_iter().enumerate() {
            starts[slot] = ids.len();
            for l in layers {
                ids.push(tape.param(l.w.clone()));
                ids.push(tape.param(l.b.clone()));
            }
        }
        ParamNodes {
            ids,
            enc: [starts[0], starts[3]],
            proj: [starts[1], starts[4]],
            clf: [starts[2], starts[5]],
        }
    }

    pub fn encode_on(&self, tape: &mut Tape, p: &ParamNodes, m: Modality, x: NodeId) -> Result<NodeId> {
        let mi = m as usize;
        let mut h = x;
        for k in 0..self.encoder(m).len() {
            let (w, b) = p.layer(p.enc[mi], k);
            let y = tape.matmul(h, w)?;
            let y = tape.add_row(y, b)?;
            h = tape.relu(y);
        }
        Ok(h)
    }

    pub fn classify_on(&self, tape: &mut Tape, p: &ParamNodes, m: Modality, h: NodeId) -> Result<NodeId> {
        let (w, b) = p.layer(p.clf[m as usize], 0);
        let y = tape.matmul(h, w)?;
        tape.add_row(y, b)
    }

    /// Projection and normalization on the tape. With `dropout_rng` set and a
    /// positive dropout rate, each projection layer input is masked with
    /// inverted dropout.
    pub fn project_on(
        &self,
        tape: &mut Tape,
        p: &ParamNodes,
        m: Modality,
        h: NodeId,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<NodeId> {
        let rate = self.config.projection.dropout;
        let n_layers = self.projection(m).len();
        let mut g = h;
        for k in 0..n_layers {
            if let (Some(rng), true) = (dropout_rng.as_deref_mut(), rate > 0.0) {
                let (r, c) = tape.value(g).shape();
                let keep = 1.0 / (1.0 - rate);
                let mask = Matrix::from_fn(r, c, |_, _| if rng.uniform() < rate { 0.0 } else { keep });
                g = tape.mask_mul(g, mask)?;
            }
            let (w, b) = p.layer(p.proj[m as usize], k);
            let y = tape.matmul(g, w)?;
            g = tape.add_row(y, b)?;
            if k + 1 < n_layers {
                g = tape.relu(g);
            }
        }
        Ok(tape.row_l2_normalize(g, NORM_EPS))
    }
}

fn projection_shapes(config: &ModelConfig) -> Vec<(usize, usize)> {
    let p = &config.projection;
    if !p.enabled {
        return Vec::new();
    }
    (0..p.depth)
        .map(|k| {
            let fan_in = if k == 0 { config.encoder.hidden_dim } else { p.out_dim };
            (fan_in, p.out_dim)
        })
        .collect()
}
