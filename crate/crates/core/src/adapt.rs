//! Target adaptation: supervised prototype losses and fine-tuning, projection
//! of slots onto real windows, and the per-label logistic probe.

use serde::{Deserialize, Serialize};

use crate::assign::SlotAssignment;
use crate::autodiff::{sigmoid, softplus, AdamW, EpochVerdict, Graph, PlateauSchedule, Var};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::numcore::{l2_normalize_rows, Mat, Rng, ZScore, EPS};
use crate::protomodel::{activations, activations_graph, EncoderVars, Model, PrototypeBank, SourceWindow};

/// Margin below which same-label prototype cosines are not penalized.
pub const DIV_MARGIN: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupLossWeights {
    pub clst: f64,
    pub sep: f64,
    pub div: f64,
    pub cntrst: f64,
}

impl Default for SupLossWeights {
    fn default() -> Self {
        SupLossWeights {
            clst: 0.004,
            sep: 0.0004,
            div: 250.0,
            cntrst: 300.0,
        }
    }
}

impl SupLossWeights {
    pub fn zero() -> Self {
        SupLossWeights {
            clst: 0.0,
            sep: 0.0,
            div: 0.0,
            cntrst: 0.0,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, v) in [("clst", self.clst), ("sep", self.sep), ("div", self.div), ("cntrst", self.cntrst)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config {
                    path: format!("{prefix}.weights.{name}"),
                    msg: "must be finite and >= 0".into(),
                });
            }
        }
        Ok(())
    }
}

/// Co-occurrence weights for the cross-label pull: how much more often two
/// labels appear together than independence predicts, `max(0, f_ij − f_i·f_j)`.
/// The diagonal is unused and left at zero.
pub fn cooccurrence(y: &Mat) -> Mat {
    let l = y.cols();
    let n = y.rows().max(1) as f64;
    let mut joint = Mat::zeros(l, l);
    let mut marg = vec![0.0; l];
    for r in 0..y.rows() {
        let row = y.row(r);
        for i in 0..l {
            marg[i] += row[i] / n;
            for j in 0..l {
                joint[(i, j)] += row[i] * row[j] / n;
            }
        }
    }
    let mut f = Mat::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            if i != j {
                f[(i, j)] = (joint[(i, j)] - marg[i] * marg[j]).max(0.0);
            }
        }
    }
    f
}

/// Slot layout shared by the supervised losses: `per_label` consecutive
/// slots per label.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotLayout {
    pub labels: usize,
    pub per_label: usize,
}

impl SlotLayout {
    pub fn of(a: &SlotAssignment) -> Self {
        SlotLayout {
            labels: a.labels,
            per_label: a.per_label,
        }
    }

    pub fn slots(&self) -> usize {
        self.labels * self.per_label
    }
}

/// Graph nodes of each supervised loss term.
#[derive(Clone, Copy, Debug)]
pub struct SupLossVars {
    pub total: Var,
    pub ce: Var,
    pub clst: Var,
    pub sep: Var,
    pub div: Var,
    pub cntrst: Var,
}

fn scalar_plus(g: &mut Graph, v: Var, c: f64) -> Result<Var> {
    g.add_const(v, &Mat::scalar(c))
}

/// `CE + λ_Clst·Clst + λ_Sep·Sep + λ_Div·Div + λ_Cntrst·Cntrst` over slot
/// activations `s` (`B×L·M`, slots grouped by label) and slot prototypes
/// `protos` (`L·M×D`). `cooc` is the label co-occurrence frequency matrix.
#[allow(clippy::too_many_arguments)]
pub fn sup_losses(
    g: &mut Graph,
    s: Var,
    protos: Var,
    head_w: Var,
    head_b: Var,
    y: &Mat,
    layout: &SlotLayout,
    cooc: &Mat,
    w: &SupLossWeights,
) -> Result<SupLossVars> {
    let (b, n_slots) = g.value(s).shape();
    if n_slots != layout.slots() || g.value(protos).rows() != n_slots {
        return Err(Error::Domain(format!(
            "sup_losses: expected {} slots, activations have {n_slots} and prototypes {}",
            layout.slots(),
            g.value(protos).rows()
        )));
    }
    if y.shape() != (b, layout.labels) {
        return Err(Error::Shape {
            op: "sup_losses",
            left: y.shape(),
            right: (b, layout.labels),
        });
    }
    let (l, m) = (layout.labels, layout.per_label);

    let logits = g.matmul(s, head_w)?;
    let logits = g.add_row(logits, head_b)?;
    let ce = g.bce_with_logits(logits, y)?;

    // best slot activation per (sample, label)
    let st = g.transpose(s);
    let best = g.segment_max(st, m)?;
    let best = g.transpose(best);

    let n_pos = y.sum();
    let n_neg = (b * l) as f64 - n_pos;
    let clst = if n_pos > 0.0 {
        let hit = g.mul_const(best, y.clone())?;
        let hit = g.sum(hit);
        let hit = g.scale(hit, -1.0 / n_pos);
        scalar_plus(g, hit, 1.0)?
    } else {
        g.constant(Mat::scalar(0.0))
    };
    let sep = if n_neg > 0.0 {
        let pos_part = g.relu(best);
        let neg = g.mul_const(pos_part, y.map(|v| 1.0 - v))?;
        let neg = g.sum(neg);
        g.scale(neg, 1.0 / n_neg)
    } else {
        g.constant(Mat::scalar(0.0))
    };

    let gram = g.cosine_sim_matrix(protos, protos)?;
    let mut div_mask = Mat::zeros(n_slots, n_slots);
    let mut cross = Mat::zeros(n_slots, n_slots);
    let mut cross_total = 0.0;
    for i in 0..n_slots {
        for j in i + 1..n_slots {
            let (li, lj) = (i / m, j / m);
            if li == lj {
                div_mask[(i, j)] = 1.0;
            } else {
                cross[(i, j)] = cooc[(li, lj)] / (m * m) as f64;
            }
        }
    }
    for li in 0..l {
        for lj in li + 1..l {
            cross_total += cooc[(li, lj)];
        }
    }
    let div_pairs = div_mask.sum();
    let div = if div_pairs > 0.0 {
        let shifted = g.add_const(gram, &Mat::filled(n_slots, n_slots, -DIV_MARGIN))?;
        let hinge = g.relu(shifted);
        let masked = g.mul_const(hinge, div_mask)?;
        let sq = g.square(masked);
        let total = g.sum(sq);
        g.scale(total, 1.0 / div_pairs)
    } else {
        g.constant(Mat::scalar(0.0))
    };
    let pulled = g.mul_const(gram, cross)?;
    let pulled = g.sum(pulled);
    let pulled = g.scale(pulled, -1.0);
    let cntrst = scalar_plus(g, pulled, cross_total)?;

    let mut total = ce;
    for (v, lambda) in [(clst, w.clst), (sep, w.sep), (div, w.div), (cntrst, w.cntrst)] {
        if lambda != 0.0 {
            let t = g.scale(v, lambda);
            total = g.add(total, t)?;
        }
    }
    Ok(SupLossVars {
        total,
        ce,
        clst,
        sep,
        div,
        cntrst,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub weights: SupLossWeights,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    /// Inverse L2 strength of the logistic fit that initializes the linear
    /// head from the starting slot activations; `null` starts it at zero.
    pub head_init_c: Option<f64>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            weights: SupLossWeights::default(),
            lr: 1e-3,
            weight_decay: 0.01,
            batch_size: 64,
            max_epochs: 30,
            plateau_patience: 3,
            plateau_factor: 0.1,
            early_stop_patience: 10,
            head_init_c: Some(0.0005),
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        self.weights.validate(prefix)?;
        let bad = |f: &str, msg: &str| {
            Err(Error::Config {
                path: format!("{prefix}.{f}"),
                msg: msg.into(),
            })
        };
        if !(self.lr > 0.0) {
            return bad("lr", "must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay", "must be >= 0");
        }
        if let Some(c) = self.head_init_c {
            if !(c > 0.0 && c.is_finite()) {
                return bad("head_init_c", "must be > 0 or null");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_ce: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub curve: Vec<FinetuneRecord>,
    pub best_epoch: usize,
}

impl FinetuneReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_ce,lr\n");
        for r in &self.curve {
            s.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.val_ce, r.lr));
        }
        s
    }
}

struct SupState {
    protos: Mat,
    head_w: Mat,
    head_b: Mat,
}

struct SupEval {
    total: f64,
    ce: f64,
    grads: Option<Vec<Mat>>,
}

#[allow(clippy::too_many_arguments)]
fn sup_step(
    model: &Model,
    state: &SupState,
    data: &Dataset,
    idx: &[usize],
    layout: &SlotLayout,
    cooc: &Mat,
    w: &SupLossWeights,
    train: bool,
) -> Result<SupEval> {
    let mut g = Graph::new();
    let ev = if train {
        EncoderVars::params(&mut g, &model.encoder)
    } else {
        EncoderVars::frozen(&mut g, &model.encoder)
    };
    let p = g.param(state.protos.clone());
    let hw = g.param(state.head_w.clone());
    let hb = g.param(state.head_b.clone());
    let x = g.constant(data.window_matrix(idx, model.window));
    let emb = ev.embed(&mut g, x)?;
    let s = activations_graph(&mut g, emb, p, model.windows_per_sample(data.length))?;
    let parts = sup_losses(&mut g, s, p, hw, hb, &data.labels_of(idx), layout, cooc, w)?;
    let total = g.scalar(parts.total);
    if !total.is_finite() {
        return Err(Error::NonFinite("supervised prototype loss".into()));
    }
    let grads = if train {
        let gr = g.backward(parts.total)?;
        Some([ev.w1, ev.b1, ev.w2, ev.b2, p, hw, hb].iter().map(|&v| gr.get(v)).collect())
    } else {
        None
    };
    Ok(SupEval {
        total,
        ce: g.scalar(parts.ce),
        grads,
    })
}

fn sup_validation(
    model: &Model,
    state: &SupState,
    data: &Dataset,
    idx: &[usize],
    layout: &SlotLayout,
    cooc: &Mat,
    w: &SupLossWeights,
) -> Result<(f64, f64)> {
    let (mut total, mut ce, mut n) = (0.0, 0.0, 0.0);
    for chunk in idx.chunks(256) {
        let e = sup_step(model, state, data, chunk, layout, cooc, w, false)?;
        let c = chunk.len() as f64;
        total += e.total * c;
        ce += e.ce * c;
        n += c;
    }
    Ok((total / n, ce / n))
}

/// Jointly trains the encoder, the assigned prototypes and a zero-initialized
/// linear head under the supervised prototype loss. Unassigned prototypes and
/// the contrastive head are left untouched. The parameters of the epoch with
/// the lowest validation loss are kept.
pub fn finetune(
    model: &mut Model,
    data: &Dataset,
    train_idx: &[usize],
    val_idx: &[usize],
    assignment: &SlotAssignment,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneReport> {
    cfg.validate("finetune")?;
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Domain("finetune: empty train or validation set".into()));
    }
    let layout = SlotLayout::of(assignment);
    let chosen = assignment.prototypes();
    let cooc = cooccurrence(&data.labels_of(train_idx));
    let protos = model.bank.p.select_rows(&chosen);
    let (head_w, head_b) = match cfg.head_init_c {
        Some(c) => {
            let a = activations(model, &protos, data, train_idx)?.a;
            train_probe(&a, &data.labels_of(train_idx), c)?.raw_head()
        }
        None => (Mat::zeros(layout.slots(), layout.labels), Mat::zeros(1, layout.labels)),
    };
    let mut state = SupState { protos, head_w, head_b };
    let mut rng = Rng::new(seed, "finetune/batches");
    let mut opt = AdamW::new(cfg.weight_decay);
    let mut sched = PlateauSchedule::new(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.early_stop_patience);
    let (v0, c0) = sup_validation(model, &state, data, val_idx, &layout, &cooc, &cfg.weights)?;
    sched.observe(v0);
    let mut curve = vec![FinetuneRecord {
        epoch: 0,
        train_loss: f64::NAN,
        val_loss: v0,
        val_ce: c0,
        lr: cfg.lr,
    }];
    let mut best = (model.encoder.clone(), state.protos.clone());
    let mut best_epoch = 0;
    let restore = |model: &mut Model, best: &(crate::protomodel::Encoder, Mat)| {
        model.encoder = best.0.clone();
        for (row, &k) in chosen.iter().enumerate() {
            model.bank.p.set_row(k, best.1.row(row));
        }
    };

    for epoch in 1..=cfg.max_epochs {
        let mut order = train_idx.to_vec();
        rng.shuffle(&mut order);
        let lr = sched.lr;
        let (mut sum, mut steps) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let e = match sup_step(model, &state, data, chunk, &layout, &cooc, &cfg.weights, true) {
                Ok(e) => e,
                Err(err) => {
                    restore(model, &best);
                    return Err(err);
                }
            };
            let grads = e.grads.unwrap();
            let enc = &mut model.encoder;
            let mut params: [(&str, &mut Mat); 7] = [
                ("encoder.w1", &mut enc.w1),
                ("encoder.b1", &mut enc.b1),
                ("encoder.w2", &mut enc.w2),
                ("encoder.b2", &mut enc.b2),
                ("slots.p", &mut state.protos),
                ("slots.head_w", &mut state.head_w),
                ("slots.head_b", &mut state.head_b),
            ];
            if let Err(err) = opt.step(&mut params, &grads, lr) {
                restore(model, &best);
                return Err(err);
            }
            sum += e.total;
            steps += 1;
        }
        let (val, val_ce) = sup_validation(model, &state, data, val_idx, &layout, &cooc, &cfg.weights)?;
        curve.push(FinetuneRecord {
            epoch,
            train_loss: sum / steps.max(1) as f64,
            val_loss: val,
            val_ce,
            lr,
        });
        match sched.observe(val) {
            EpochVerdict::Improved => {
                best = (model.encoder.clone(), state.protos.clone());
                best_epoch = epoch;
            }
            EpochVerdict::Continue => {}
            EpochVerdict::Stop => break,
        }
    }
    restore(model, &best);
    Ok(FinetuneReport { curve, best_epoch })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    LabelSupervised,
    Pit,
    Pip,
}

impl ProjectionMode {
    pub fn name(self) -> &'static str {
        match self {
            ProjectionMode::LabelSupervised => "label_supervised",
            ProjectionMode::Pit => "pit",
            ProjectionMode::Pip => "pip",
        }
    }
}

/// Replaces every assigned prototype with the embedding of the window that
/// activates it most among the candidates of `mode`, recording the source.
///
/// Candidates: windows of `target[idx]` positive for the slot's label
/// (label-supervised), all windows of `target[idx]` (PIT), or all windows of
/// `pretrain` (PIP). Ties go to the lowest `(sample, window)`.
pub fn project(
    model: &Model,
    bank: &PrototypeBank,
    assignment: &SlotAssignment,
    target: &Dataset,
    idx: &[usize],
    mode: ProjectionMode,
    pretrain: Option<&Dataset>,
) -> Result<PrototypeBank> {
    let (data, samples, corpus): (&Dataset, Vec<usize>, &str) = match mode {
        ProjectionMode::LabelSupervised | ProjectionMode::Pit => (target, idx.to_vec(), "target"),
        ProjectionMode::Pip => {
            let p = pretrain.ok_or_else(|| Error::Domain("PIP projection needs the pretraining corpus".into()))?;
            (p, (0..p.len()).collect(), "pretrain")
        }
    };
    let emb = model.embed_samples(data, &samples)?;
    let embn = l2_normalize_rows(&emb);
    let wps = model.windows_per_sample(data.length);
    let mut out = bank.clone();
    for s in &assignment.slots {
        let allowed: Vec<usize> = match mode {
            ProjectionMode::LabelSupervised => (0..samples.len())
                .filter(|&i| data.y[(samples[i], s.label)] > 0.5)
                .collect(),
            _ => (0..samples.len()).collect(),
        };
        if allowed.is_empty() {
            return Err(Error::SingleClass {
                label: s.label,
                missing: "positive training",
            });
        }
        let p = crate::numcore::l2_normalize_rows(&bank.p.select_rows(&[s.prototype]));
        let pv = p.row(0);
        let mut best: Option<(f64, usize, usize)> = None;
        for &i in &allowed {
            for t in 0..wps {
                let sim: f64 = embn.row(i * wps + t).iter().zip(pv).map(|(a, b)| a * b).sum();
                if best.is_none_or(|(b, _, _)| sim > b) {
                    best = Some((sim, i, t));
                }
            }
        }
        let (_, i, t) = best.expect("non-empty candidates");
        out.p.set_row(s.prototype, emb.row(i * wps + t));
        out.records[s.prototype].source = Some(SourceWindow {
            corpus: corpus.into(),
            sample: samples[i],
            window: t,
        });
    }
    Ok(out)
}

/// Per-label logistic regression over z-scored slot activations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub zscore: ZScore,
    /// `L×F`
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub c: f64,
    pub iterations: Vec<usize>,
}

pub const PROBE_TOL: f64 = 1e-8;
pub const PROBE_MAX_ITER: usize = 100;

fn cholesky_solve(h: &[Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = h[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * z[k]).sum();
        z[i] = (g[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (z[i] - s) / l[i][i];
    }
    Some(x)
}

fn logreg_objective(x: &Mat, y: &[f64], w: &[f64], penalty: f64) -> f64 {
    let d = x.cols();
    let n = x.rows() as f64;
    let mut loss = 0.0;
    for r in 0..x.rows() {
        let z: f64 = x.row(r).iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[d];
        loss += softplus(z) - y[r] * z;
    }
    loss / n + 0.5 * penalty * w[..d].iter().map(|v| v * v).sum::<f64>()
}

/// Newton iterations with step halving for one label. Returns weights with
/// the bias last and the number of iterations used.
fn fit_logreg(x: &Mat, y: &[f64], c: f64) -> (Vec<f64>, usize) {
    let (n, d) = x.shape();
    let penalty = 1.0 / (c * n as f64);
    let mut w = vec![0.0; d + 1];
    let mut obj = logreg_objective(x, y, &w, penalty);
    for it in 1..=PROBE_MAX_ITER {
        let mut grad = vec![0.0; d + 1];
        let mut hess = vec![vec![0.0; d + 1]; d + 1];
        for r in 0..n {
            let row = x.row(r);
            let z: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d];
            let p = sigmoid(z);
            let (e, s) = (p - y[r], p * (1.0 - p));
            for i in 0..=d {
                let xi = if i < d { row[i] } else { 1.0 };
                grad[i] += e * xi;
                for j in 0..=i {
                    let xj = if j < d { row[j] } else { 1.0 };
                    hess[i][j] += s * xi * xj;
                }
            }
        }
        for i in 0..=d {
            grad[i] /= n as f64;
            for j in 0..=i {
                hess[i][j] /= n as f64;
                hess[j][i] = hess[i][j];
            }
            if i < d {
                grad[i] += penalty * w[i];
                hess[i][i] += penalty;
            }
        }
        if grad.iter().all(|v| v.abs() <= PROBE_TOL) {
            return (w, it - 1);
        }
        let step = cholesky_solve(&hess, &grad).unwrap_or_else(|| {
            let mut h = hess.clone();
            for (i, r) in h.iter_mut().enumerate() {
                r[i] += 1e-10;
            }
            cholesky_solve(&h, &grad).unwrap_or_else(|| grad.clone())
        });
        let mut t = 1.0;
        let mut next;
        loop {
            next = w.iter().zip(&step).map(|(a, b)| a - t * b).collect::<Vec<_>>();
            let o = logreg_objective(x, y, &next, penalty);
            if o <= obj || t < 1e-10 {
                obj = o.min(obj);
                break;
            }
            t *= 0.5;
        }
        let moved = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        if moved <= PROBE_TOL {
            return (w, it);
        }
    }
    (w, PROBE_MAX_ITER)
}

/// Fits one regularized logistic regression per label on `a` (raw slot
/// activations, z-scored here with its own statistics). `c` is the inverse
/// regularization strength: the objective is mean BCE + ‖w‖²/(2·c·N).
pub fn train_probe(a: &Mat, y: &Mat, c: f64) -> Result<Classifier> {
    if a.rows() != y.rows() {
        return Err(Error::Shape {
            op: "train_probe",
            left: a.shape(),
            right: y.shape(),
        });
    }
    if !(c > 0.0) {
        return Err(Error::Config {
            path: "probe.c".into(),
            msg: "must be > 0".into(),
        });
    }
    for label in 0..y.cols() {
        let pos = y.col(label).iter().filter(|&&v| v > 0.5).count();
        if pos == 0 {
            return Err(Error::SingleClass { label, missing: "positive" });
        }
        if pos == y.rows() {
            return Err(Error::SingleClass { label, missing: "negative" });
        }
    }
    let zscore = ZScore::fit(a)?;
    let x = zscore.apply(a)?;
    let d = x.cols();
    let mut weights = Mat::zeros(y.cols(), d);
    let mut bias = Vec::with_capacity(y.cols());
    let mut iterations = Vec::with_capacity(y.cols());
    for label in 0..y.cols() {
        let (w, it) = fit_logreg(&x, &y.col(label), c);
        weights.set_row(label, &w[..d]);
        bias.push(w[d]);
        iterations.push(it);
    }
    Ok(Classifier {
        zscore,
        weights,
        bias,
        c,
        iterations,
    })
}

impl Classifier {
    /// Logits `N×L` for raw slot activations.
    pub fn decision(&self, a: &Mat) -> Result<Mat> {
        let x = self.zscore.apply(a)?;
        let mut z = x.matmul_t(&self.weights)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    /// The same decision function as an affine map on raw activations:
    /// `(F×L weights, 1×L bias)`.
    pub fn raw_head(&self) -> (Mat, Mat) {
        let (l, f) = self.weights.shape();
        let mut w = Mat::zeros(f, l);
        let mut b = Mat::zeros(1, l);
        for j in 0..l {
            let mut shift = self.bias[j];
            for i in 0..f {
                let sd = self.zscore.stds[i].max(EPS);
                w[(i, j)] = self.weights[(j, i)] / sd;
                shift -= self.weights[(j, i)] * self.zscore.means[i] / sd;
            }
            b[(0, j)] = shift;
        }
        (w, b)
    }
}

/// Odds-ratio summary of one label's coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub label: usize,
    /// Mean `exp(β)` over the label's own slots.
    pub pos_odds: f64,
    /// Mean `exp(β)` over all other slots; absent with a single label.
    pub neg_odds: Option<f64>,
    pub ratio: Option<f64>,
}

pub fn coefficient_report(clf: &Classifier, slot_labels: &[usize]) -> Result<Vec<CoefficientRow>> {
    if slot_labels.len() != clf.weights.cols() {
        return Err(Error::Domain(format!(
            "coefficient_report: {} slot labels for {} coefficients",
            slot_labels.len(),
            clf.weights.cols()
        )));
    }
    let mut rows = Vec::new();
    for label in 0..clf.weights.rows() {
        let w = clf.weights.row(label);
        let mean_exp = |own: bool| {
            let v: Vec<f64> = w
                .iter()
                .zip(slot_labels)
                .filter(|(_, &l)| (l == label) == own)
                .map(|(b, _)| b.exp())
                .collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let pos_odds = mean_exp(true).unwrap_or(f64::NAN);
        let neg_odds = mean_exp(false);
        rows.push(CoefficientRow {
            label,
            pos_odds,
            neg_odds,
            ratio: neg_odds.map(|n| pos_odds / n),
        });
    }
    Ok(rows)
}

/// Mean of the defined per-label ratios.
pub fn mean_ratio(rows: &[CoefficientRow]) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// One-sided sign test of `values > 1`: `(successes, trials, p)` with
/// `p = P(X ≥ successes)` under Binomial(trials, ½).
pub fn sign_test(values: &[f64]) -> (usize, usize, f64) {
    let n = values.len();
    let k = values.iter().filter(|&&v| v > 1.0).count();
    let mut p = 0.0;
    for i in k..=n {
        let mut c = 1.0f64;
        for j in 0..i {
            c = c * (n - j) as f64 / (j + 1) as f64;
        }
        p += c * 0.5f64.powi(n as i32);
    }
    (k, n, p)
}

pub fn coefficients_csv(rows: &[CoefficientRow]) -> String {
    let mut s = String::from("label,pos_odds,neg_odds,ratio\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.label, r.pos_odds, opt(r.neg_odds), opt(r.ratio)));
    }
    s
}

/// Slot activations of `data[idx]` under the assigned prototypes.
pub fn slot_activations(model: &Model, bank: &PrototypeBank, assignment: &SlotAssignment, data: &Dataset, idx: &[usize]) -> Result<Mat> {
    let protos = bank.p.select_rows(&assignment.prototypes());
    Ok(activations(model, &protos, data, idx)?.a)
}
