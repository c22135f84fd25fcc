//! Contrastive pretraining over projected prototype activations, with a
//! nearest-neighbour spreading term on the prototypes.

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamW, EpochVerdict, Graph, PlateauSchedule, Var};
use crate::datagen::{Dataset, Split};
use crate::error::{Error, Result};
use crate::numcore::{Mat, Rng};
use crate::protomodel::{activations_graph, EncoderVars, HeadVars, Model};

/// Mask value that removes an entry from a log-sum-exp.
const MASKED: f64 = -1e30;
/// Floor on nearest-neighbour distances inside the KoLeo log.
pub const KOLEO_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SslConfig {
    pub temperature: f64,
    pub koleo_weight: f64,
    /// Groups per step; each contributes both of its views.
    pub batch_pairs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
}

impl Default for SslConfig {
    fn default() -> Self {
        SslConfig {
            temperature: 0.1,
            koleo_weight: 1.0,
            batch_pairs: 64,
            lr: 1e-3,
            weight_decay: 0.01,
            max_epochs: 30,
            plateau_patience: 3,
            plateau_factor: 0.1,
            early_stop_patience: 10,
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: &str| {
            Err(Error::Config {
                path: format!("pretrain.{path}"),
                msg: msg.into(),
            })
        };
        if !(self.temperature > 0.0) {
            return bad("temperature", "must be > 0");
        }
        if self.batch_pairs < 2 {
            return bad("batch_pairs", "needs at least 2 pairs so every view has negatives");
        }
        if !(self.lr > 0.0) {
            return bad("lr", "must be > 0");
        }
        if !(self.koleo_weight >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("koleo_weight", "weights must be >= 0");
        }
        Ok(())
    }
}

/// NT-Xent over `2N` rows ordered as view pairs `(0,1), (2,3), …`: the mean
/// over both directions of every pair of
/// `−log exp(s_ij/τ) / Σ_{n≠i} exp(s_in/τ)` with cosine `s`.
pub fn nt_xent(g: &mut Graph, z: Var, temperature: f64) -> Result<Var> {
    let rows = g.value(z).rows();
    if rows < 2 || rows % 2 != 0 {
        return Err(Error::Domain(format!("nt_xent: need an even number of rows >= 2, got {rows}")));
    }
    let zn = g.row_l2_normalize(z);
    let sims = g.matmul_t(zn, zn)?;
    let logits = g.scale(sims, 1.0 / temperature);
    let mut mask = Mat::zeros(rows, rows);
    for i in 0..rows {
        mask[(i, i)] = MASKED;
    }
    let masked = g.add_const(logits, &mask)?;
    let denom = g.logsumexp(masked);
    let partners: Vec<usize> = (0..rows).map(|i| i ^ 1).collect();
    let pos = g.pick(logits, partners)?;
    let per_row = g.sub(denom, pos)?;
    Ok(g.mean(per_row))
}

/// `−(1/K) Σ_k log max(min_{i≠k} ‖p̂_k − p̂_i‖, 1e-8)` on row-normalized
/// prototypes.
pub fn koleo(g: &mut Graph, p: Var) -> Result<Var> {
    let k = g.value(p).rows();
    if k < 2 {
        return Err(Error::Domain(format!("koleo: need at least 2 prototypes, got {k}")));
    }
    let pn = g.row_l2_normalize(p);
    let gram = g.matmul_t(pn, pn)?;
    // −‖p̂_k − p̂_i‖² = 2·gram − 2, diagonal excluded
    let neg_sq = g.scale(gram, 2.0);
    let mut shift = Mat::filled(k, k, -2.0);
    for i in 0..k {
        shift[(i, i)] = MASKED;
    }
    let neg_sq = g.add_const(neg_sq, &shift)?;
    let nearest = g.rowwise_max(neg_sq);
    let min_sq = g.scale(nearest, -1.0);
    let floored = g.clamp_min(min_sq, KOLEO_FLOOR * KOLEO_FLOOR);
    let logs = g.log(floored);
    let m = g.mean(logs);
    Ok(g.scale(m, -0.5))
}

/// Smallest pairwise distance between normalized prototype rows.
pub fn min_pairwise_distance(p: &Mat) -> f64 {
    let pn = crate::numcore::l2_normalize_rows(p);
    let mut best = f64::INFINITY;
    for i in 0..pn.rows() {
        for j in i + 1..pn.rows() {
            let d: f64 = pn.row(i).iter().zip(pn.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(d.sqrt());
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_ntxent: f64,
    pub train_koleo: f64,
    pub val_ntxent: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Row 0 is the untrained model.
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub steps: u64,
}

impl PretrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_ntxent,train_koleo,val_ntxent,lr\n");
        for r in &self.curve {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_ntxent, r.train_koleo, r.val_ntxent, r.lr
            ));
        }
        s
    }
}

/// Consecutive `(view, view)` sample pairs for each group of `split`.
fn pairs(corpus: &Dataset, split: Split) -> Result<Vec<[usize; 2]>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < corpus.len() {
        let gid = corpus.group_ids[i];
        let mut j = i;
        while j < corpus.len() && corpus.group_ids[j] == gid {
            j += 1;
        }
        if j - i < 2 {
            return Err(Error::Domain(format!("pretrain: group {gid} has fewer than 2 views")));
        }
        if corpus.splits[i] == split {
            out.push([i, i + 1]);
        }
        i = j;
    }
    Ok(out)
}

struct Batch {
    windows: Mat,
    size: usize,
}

fn batch(corpus: &Dataset, model: &Model, pairs: &[[usize; 2]]) -> Batch {
    let idx: Vec<usize> = pairs.iter().flat_map(|p| p.iter().copied()).collect();
    Batch {
        windows: corpus.window_matrix(&idx, model.window),
        size: idx.len(),
    }
}

struct Step {
    ntxent: f64,
    koleo: f64,
}

fn forward_backward(model: &Model, b: &Batch, cfg: &SslConfig, wpsample: usize, train: bool) -> Result<(Step, Option<Vec<Mat>>)> {
    let mut g = Graph::new();
    let ev = EncoderVars::params(&mut g, &model.encoder);
    let p = g.param(model.bank.p.clone());
    let hv = HeadVars::params(&mut g, &model.head);
    let w = g.constant(b.windows.clone());
    let emb = ev.embed(&mut g, w)?;
    let a = activations_graph(&mut g, emb, p, wpsample)?;
    debug_assert_eq!(g.value(a).rows(), b.size);
    let z = hv.forward(&mut g, a)?;
    let nt = nt_xent(&mut g, z, cfg.temperature)?;
    let ko = koleo(&mut g, p)?;
    let step = Step {
        ntxent: g.scalar(nt),
        koleo: g.scalar(ko),
    };
    if !train {
        return Ok((step, None));
    }
    let weighted = g.scale(ko, cfg.koleo_weight);
    let total = g.add(nt, weighted)?;
    if !g.scalar(total).is_finite() {
        return Err(Error::NonFinite(format!(
            "pretraining loss (ntxent {}, koleo {})",
            step.ntxent, step.koleo
        )));
    }
    let grads = g.backward(total)?;
    let order = [ev.w1, ev.b1, ev.w2, ev.b2, p, hv.w1, hv.b1, hv.w2, hv.b2];
    Ok((step, Some(order.iter().map(|&v| grads.get(v)).collect())))
}

/// Mean NT-Xent over fixed consecutive batches of the validation groups.
pub fn validation_ntxent(corpus: &Dataset, model: &Model, cfg: &SslConfig) -> Result<f64> {
    let val = pairs(corpus, Split::Val)?;
    let wps = model.windows_per_sample(corpus.length);
    let mut total = 0.0;
    let mut n = 0;
    for chunk in val.chunks(cfg.batch_pairs) {
        if chunk.len() < 2 {
            continue;
        }
        let (s, _) = forward_backward(model, &batch(corpus, model, chunk), cfg, wps, false)?;
        total += s.ntxent;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Domain("pretrain: validation split needs at least 2 groups".into()));
    }
    Ok(total / n as f64)
}

fn apply(model: &mut Model, opt: &mut AdamW, grads: &[Mat], lr: f64) -> Result<()> {
    let m = model;
    let mut params: [(&str, &mut Mat); 9] = [
        ("encoder.w1", &mut m.encoder.w1),
        ("encoder.b1", &mut m.encoder.b1),
        ("encoder.w2", &mut m.encoder.w2),
        ("encoder.b2", &mut m.encoder.b2),
        ("bank.p", &mut m.bank.p),
        ("head.w1", &mut m.head.w1),
        ("head.b1", &mut m.head.b1),
        ("head.w2", &mut m.head.w2),
        ("head.b2", &mut m.head.b2),
    ];
    opt.step(&mut params, grads, lr)
}

/// Trains encoder, prototypes and head in place. On return `model` holds the
/// parameters of the epoch with the lowest validation NT-Xent; if a
/// non-finite loss aborts training, `model` holds the last good state and
/// the error is returned.
pub fn pretrain(corpus: &Dataset, model: &mut Model, cfg: &SslConfig, seed: u64) -> Result<PretrainReport> {
    cfg.validate()?;
    let train = pairs(corpus, Split::Train)?;
    let wps = model.windows_per_sample(corpus.length);
    let mut rng = Rng::new(seed, "pretrain/batches");
    let mut opt = AdamW::new(cfg.weight_decay);
    let mut sched = PlateauSchedule::new(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.early_stop_patience);

    let init_val = validation_ntxent(corpus, model, cfg)?;
    sched.observe(init_val);
    let mut curve = vec![EpochRecord {
        epoch: 0,
        train_ntxent: f64::NAN,
        train_koleo: f64::NAN,
        val_ntxent: init_val,
        lr: cfg.lr,
    }];
    let mut best = model.clone();
    let mut best_epoch = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut order = train.clone();
        rng.shuffle(&mut order);
        let lr = sched.lr;
        let (mut nt_sum, mut ko_sum, mut steps) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_pairs) {
            if chunk.len() < 2 {
                continue;
            }
            let b = batch(corpus, model, chunk);
            let (s, grads) = match forward_backward(model, &b, cfg, wps, true) {
                Ok(v) => v,
                Err(e) => {
                    *model = best;
                    return Err(e);
                }
            };
            if let Err(e) = apply(model, &mut opt, &grads.unwrap(), lr) {
                *model = best;
                return Err(e);
            }
            nt_sum += s.ntxent;
            ko_sum += s.koleo;
            steps += 1;
        }
        let val = validation_ntxent(corpus, model, cfg)?;
        if !val.is_finite() {
            *model = best;
            return Err(Error::NonFinite(format!("validation NT-Xent at epoch {epoch}")));
        }
        let steps_f = steps.max(1) as f64;
        curve.push(EpochRecord {
            epoch,
            train_ntxent: nt_sum / steps_f,
            train_koleo: ko_sum / steps_f,
            val_ntxent: val,
            lr,
        });
        match sched.observe(val) {
            EpochVerdict::Improved => {
                best = model.clone();
                best_epoch = epoch;
            }
            EpochVerdict::Continue => {}
            EpochVerdict::Stop => break,
        }
    }
    *model = best;
    Ok(PretrainReport {
        curve,
        best_epoch,
        steps: opt.steps_taken(),
    })
}
