//! Window encoder, prototype bank and contrastive projection head.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autodiff::{Graph, Var};
use crate::datagen::{Dataset, WindowSpec};
use crate::error::{Error, Result};
use crate::numcore::tensorfile::{TensorFile, TensorWriter};
use crate::numcore::{cosine_floored, l2_normalize_rows, Mat, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub embed_dim: usize,
    pub num_prototypes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            embed_dim: 32,
            num_prototypes: 256,
        }
    }
}

fn linear_init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> (Mat, Mat) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = Mat::from_vec(
        fan_in,
        fan_out,
        (0..fan_in * fan_out).map(|_| rng.uniform_range(-bound, bound)).collect(),
    )
    .unwrap();
    let b = Mat::from_vec(1, fan_out, (0..fan_out).map(|_| rng.uniform_range(-bound, bound)).collect()).unwrap();
    (w, b)
}

fn affine(x: &Mat, w: &Mat, b: &Mat) -> Result<Mat> {
    let mut out = x.matmul(w)?;
    for r in 0..out.rows() {
        for (o, bi) in out.row_mut(r).iter_mut().zip(b.as_slice()) {
            *o += bi;
        }
    }
    Ok(out)
}

/// Two-layer MLP over flattened windows: `C·W → hidden → D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

impl Encoder {
    pub fn new(input: usize, hidden: usize, out: usize, rng: &mut Rng) -> Self {
        let (w1, b1) = linear_init(input, hidden, rng);
        let (w2, b2) = linear_init(hidden, out, rng);
        Encoder { w1, b1, w2, b2 }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    fn check_input(&self, windows: &Mat) -> Result<()> {
        if windows.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "patch_embed",
                left: windows.shape(),
                right: self.w1.shape(),
            });
        }
        Ok(())
    }

    /// First-layer affine map, before the ReLU.
    pub fn preactivation(&self, windows: &Mat) -> Result<Mat> {
        self.check_input(windows)?;
        affine(windows, &self.w1, &self.b1)
    }

    /// Embeds each row (one flattened window) to `D` dimensions.
    pub fn embed(&self, windows: &Mat) -> Result<Mat> {
        let h = self.preactivation(windows)?.map(|x| x.max(0.0));
        affine(&h, &self.w2, &self.b2)
    }
}

/// Embedding of every window of one sample: `windows × D`.
pub fn patch_embed(enc: &Encoder, sample: &[f32], channels: usize, spec: WindowSpec) -> Result<Mat> {
    let ws = crate::datagen::windows(sample, channels, spec);
    enc.embed(&Mat::from_rows(&ws))
}

/// Where a grounded prototype came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceWindow {
    pub corpus: String,
    pub sample: usize,
    pub window: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtoRecord {
    /// `(label, slot)` the prototype serves, if assigned.
    pub slot: Option<(usize, usize)>,
    pub source: Option<SourceWindow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeBank {
    /// `K×D`
    pub p: Mat,
    pub records: Vec<ProtoRecord>,
}

impl PrototypeBank {
    /// `k` rows drawn uniformly from the unit sphere.
    pub fn random(k: usize, dim: usize, rng: &mut Rng) -> Self {
        let rows: Vec<Vec<f64>> = (0..k).map(|_| rng.unit_vector(dim)).collect();
        PrototypeBank {
            p: Mat::from_rows(&rows),
            records: vec![ProtoRecord::default(); k],
        }
    }

    pub fn from_mat(p: Mat) -> Self {
        let k = p.rows();
        PrototypeBank {
            p,
            records: vec![ProtoRecord::default(); k],
        }
    }

    pub fn len(&self) -> usize {
        self.p.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.p.cols()
    }

    /// Indices of assigned prototypes ordered by `(label, slot)`.
    pub fn slot_order(&self) -> Vec<usize> {
        let mut v: Vec<(usize, usize, usize)> = self
            .records
            .iter()
            .enumerate()
            .filter_map(|(k, r)| r.slot.map(|(l, m)| (l, m, k)))
            .collect();
        v.sort_unstable();
        v.into_iter().map(|(_, _, k)| k).collect()
    }
}

/// `K → K → ⌊K/2⌋` MLP with ReLU, used only by the contrastive objective.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHead {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

impl ProjectionHead {
    pub fn new(k: usize, rng: &mut Rng) -> Self {
        let (w1, b1) = linear_init(k, k, rng);
        let (w2, b2) = linear_init(k, (k / 2).max(1), rng);
        ProjectionHead { w1, b1, w2, b2 }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }
}

pub fn head_forward(head: &ProjectionHead, a: &Mat) -> Result<Mat> {
    if a.cols() != head.input_dim() {
        return Err(Error::Shape {
            op: "head_forward",
            left: a.shape(),
            right: head.w1.shape(),
        });
    }
    let h = affine(a, &head.w1, &head.b1)?.map(|x| x.max(0.0));
    affine(&h, &head.w2, &head.b2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub channels: usize,
    pub window: WindowSpec,
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub bank: PrototypeBank,
    pub head: ProjectionHead,
}

impl Model {
    pub fn new(channels: usize, window: WindowSpec, config: &ModelConfig, rng: &mut Rng) -> Self {
        let encoder = Encoder::new(
            channels * window.width,
            config.hidden,
            config.embed_dim,
            &mut rng.derive("encoder"),
        );
        let bank = PrototypeBank::random(config.num_prototypes, config.embed_dim, &mut rng.derive("prototypes"));
        let head = ProjectionHead::new(config.num_prototypes, &mut rng.derive("head"));
        Model {
            channels,
            window,
            config: config.clone(),
            encoder,
            bank,
            head,
        }
    }

    pub fn windows_per_sample(&self, length: usize) -> usize {
        self.window.count(length)
    }

    /// Embeddings of every window of the listed samples, stacked sample-major.
    pub fn embed_samples(&self, data: &Dataset, idx: &[usize]) -> Result<Mat> {
        let mut out = Mat::zeros(0, self.encoder.output_dim());
        let mut rows = Vec::new();
        for chunk in idx.chunks(256) {
            let w = data.window_matrix(chunk, self.window);
            let e = self.encoder.embed(&w)?;
            rows.extend_from_slice(e.as_slice());
        }
        if !rows.is_empty() {
            out = Mat::from_vec(rows.len() / self.encoder.output_dim(), self.encoder.output_dim(), rows)?;
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path, extra: serde_json::Value) -> Result<()> {
        let mut w = TensorWriter::new();
        w.add_mat("encoder.w1", &self.encoder.w1)
            .add_mat("encoder.b1", &self.encoder.b1)
            .add_mat("encoder.w2", &self.encoder.w2)
            .add_mat("encoder.b2", &self.encoder.b2)
            .add_mat("bank.p", &self.bank.p)
            .add_mat("head.w1", &self.head.w1)
            .add_mat("head.b1", &self.head.b1)
            .add_mat("head.w2", &self.head.w2)
            .add_mat("head.b2", &self.head.b2)
            .meta(json!({
                "channels": self.channels,
                "window": self.window,
                "model": self.config,
                "provenance": self.bank.records,
                "extra": extra,
            }));
        w.write(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let f = TensorFile::read(dir)?;
        let meta = f.meta();
        let get = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| Error::format(dir, format!("checkpoint meta lacks `{k}`")))
        };
        let channels = get("channels")?
            .as_u64()
            .ok_or_else(|| Error::format(dir, "`channels` must be an integer"))? as usize;
        let window: WindowSpec = serde_json::from_value(get("window")?).map_err(|e| Error::format(dir, e.to_string()))?;
        let config: ModelConfig = serde_json::from_value(get("model")?).map_err(|e| Error::format(dir, e.to_string()))?;
        let records: Vec<ProtoRecord> =
            serde_json::from_value(get("provenance")?).map_err(|e| Error::format(dir, e.to_string()))?;
        let p = f.mat("bank.p")?;
        if records.len() != p.rows() {
            return Err(Error::format(dir, "provenance length differs from prototype count"));
        }
        Ok(Model {
            channels,
            window,
            config,
            encoder: Encoder {
                w1: f.mat("encoder.w1")?,
                b1: f.mat("encoder.b1")?,
                w2: f.mat("encoder.w2")?,
                b2: f.mat("encoder.b2")?,
            },
            bank: PrototypeBank { p, records },
            head: ProjectionHead {
                w1: f.mat("head.w1")?,
                b1: f.mat("head.b1")?,
                w2: f.mat("head.w2")?,
                b2: f.mat("head.b2")?,
            },
        })
    }
}

/// Max-over-windows cosine activations plus the winning window per entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Activations {
    /// `N×K`
    pub a: Mat,
    /// `N×K` row-major window indices.
    pub argmax: Vec<usize>,
}

impl Activations {
    pub fn window_of(&self, n: usize, k: usize) -> usize {
        self.argmax[n * self.a.cols() + k]
    }
}

/// Activations of `protos` (rows) against precomputed window embeddings laid
/// out as `windows_per_sample` consecutive rows per sample. Ties pick the
/// earliest window.
pub fn activations_from_embeddings(emb: &Mat, windows_per_sample: usize, protos: &Mat) -> Result<Activations> {
    if emb.cols() != protos.cols() {
        return Err(Error::Shape {
            op: "activations",
            left: emb.shape(),
            right: protos.shape(),
        });
    }
    if windows_per_sample == 0 || emb.rows() % windows_per_sample != 0 {
        return Err(Error::Domain(format!(
            "activations: {} embedding rows do not split into {windows_per_sample} windows per sample",
            emb.rows()
        )));
    }
    let n = emb.rows() / windows_per_sample;
    let k = protos.rows();
    let sims = l2_normalize_rows(emb).matmul_t(&l2_normalize_rows(protos))?;
    let mut a = Mat::zeros(n, k);
    let mut argmax = vec![0usize; n * k];
    for s in 0..n {
        let base = s * windows_per_sample;
        a.row_mut(s).copy_from_slice(sims.row(base));
        for t in 1..windows_per_sample {
            let row = sims.row(base + t);
            for j in 0..k {
                if row[j] > a[(s, j)] {
                    a[(s, j)] = row[j];
                    argmax[s * k + j] = t;
                }
            }
        }
    }
    for v in a.as_mut_slice() {
        *v = v.clamp(-1.0, 1.0);
    }
    Ok(Activations { a, argmax })
}

/// Activation matrix of `data[idx]` against `protos`.
pub fn activations(model: &Model, protos: &Mat, data: &Dataset, idx: &[usize]) -> Result<Activations> {
    if protos.cols() != model.encoder.output_dim() {
        return Err(Error::Shape {
            op: "activations",
            left: protos.shape(),
            right: model.encoder.w2.shape(),
        });
    }
    let emb = model.embed_samples(data, idx)?;
    activations_from_embeddings(&emb, model.windows_per_sample(data.length), protos)
}

/// Cosine of one stored window embedding with one prototype, recomputed
/// directly from vectors.
pub fn window_similarity(emb: &Mat, row: usize, proto: &[f64]) -> f64 {
    cosine_floored(emb.row(row), proto)
}

/// Graph handles for encoder parameters.
#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl EncoderVars {
    pub fn params(g: &mut Graph, enc: &Encoder) -> Self {
        EncoderVars {
            w1: g.param(enc.w1.clone()),
            b1: g.param(enc.b1.clone()),
            w2: g.param(enc.w2.clone()),
            b2: g.param(enc.b2.clone()),
        }
    }

    pub fn frozen(g: &mut Graph, enc: &Encoder) -> Self {
        EncoderVars {
            w1: g.constant(enc.w1.clone()),
            b1: g.constant(enc.b1.clone()),
            w2: g.constant(enc.w2.clone()),
            b2: g.constant(enc.b2.clone()),
        }
    }

    pub fn embed(&self, g: &mut Graph, windows: Var) -> Result<Var> {
        let h = g.matmul(windows, self.w1)?;
        let h = g.add_row(h, self.b1)?;
        let h = g.relu(h);
        let e = g.matmul(h, self.w2)?;
        g.add_row(e, self.b2)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl HeadVars {
    pub fn params(g: &mut Graph, head: &ProjectionHead) -> Self {
        HeadVars {
            w1: g.param(head.w1.clone()),
            b1: g.param(head.b1.clone()),
            w2: g.param(head.w2.clone()),
            b2: g.param(head.b2.clone()),
        }
    }

    pub fn forward(&self, g: &mut Graph, a: Var) -> Result<Var> {
        let h = g.matmul(a, self.w1)?;
        let h = g.add_row(h, self.b1)?;
        let h = g.relu(h);
        let z = g.matmul(h, self.w2)?;
        g.add_row(z, self.b2)
    }
}

/// Differentiable max-over-windows activations: `(B·T)×D` embeddings against
/// `K×D` prototypes give `B×K`.
pub fn activations_graph(g: &mut Graph, emb: Var, protos: Var, windows_per_sample: usize) -> Result<Var> {
    let sims = g.cosine_sim_matrix(emb, protos)?;
    g.segment_max(sims, windows_per_sample)
}
