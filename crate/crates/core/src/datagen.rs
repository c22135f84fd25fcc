//! Synthetic multilabel time series with planted motifs.
//!
//! A shared [`MotifLibrary`] is drawn once per seed. The unlabeled pretraining
//! corpus holds groups of two noisy instantiations of the same motif
//! placement; the labeled target corpus marks which label classes had a
//! motif planted.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::numcore::tensorfile::{TensorFile, TensorWriter};
use crate::numcore::{Mat, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub channels: usize,
    pub length: usize,
    pub labels: usize,
    pub window: usize,
    pub stride: usize,
    pub motif_width: usize,
    pub variants_per_label: usize,
    /// Adds one motif that switches on labels 0 and 1 together.
    pub confounder: bool,
    pub min_motifs: usize,
    pub max_motifs: usize,
    pub noise_sigma: f64,
    pub amp_jitter: (f64, f64),
    pub onset_jitter: usize,
    pub pretrain_groups: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            channels: 3,
            length: 200,
            labels: 6,
            window: 20,
            stride: 10,
            motif_width: 10,
            variants_per_label: 2,
            confounder: true,
            min_motifs: 1,
            max_motifs: 3,
            noise_sigma: 0.3,
            amp_jitter: (0.8, 1.25),
            onset_jitter: 5,
            pretrain_groups: 1200,
            train: 1024,
            val: 256,
            test: 512,
        }
    }
}

impl GenConfig {
    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            width: self.window,
            stride: self.stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: String| {
            Err(Error::Config {
                path: format!("gen.{path}"),
                msg,
            })
        };
        if self.channels == 0 {
            return bad("channels", "must be at least 1".into());
        }
        if self.labels == 0 {
            return bad("labels", "must be at least 1".into());
        }
        if self.confounder && self.labels < 2 {
            return bad("confounder", "needs at least 2 labels".into());
        }
        if self.variants_per_label == 0 {
            return bad("variants_per_label", "must be at least 1".into());
        }
        self.window_spec().validate(self.length).map_err(|e| Error::Config {
            path: "gen.window".into(),
            msg: e.to_string(),
        })?;
        if self.motif_width == 0 || self.motif_width > self.window {
            return bad("motif_width", format!("must be in 1..={}", self.window));
        }
        if self.min_motifs == 0 || self.min_motifs > self.max_motifs {
            return bad("min_motifs", "need 1 <= min_motifs <= max_motifs".into());
        }
        let footprint = self.max_motifs * (self.motif_width + 2 * self.onset_jitter);
        if footprint > self.length {
            return bad(
                "max_motifs",
                format!(
                    "cannot place {} motifs of width {} (+/-{} jitter) in {} timesteps without overlap",
                    self.max_motifs, self.motif_width, self.onset_jitter, self.length
                ),
            );
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma", "must be >= 0".into());
        }
        let (lo, hi) = self.amp_jitter;
        if !(lo > 0.0 && lo <= hi) {
            return bad("amp_jitter", "need 0 < lo <= hi".into());
        }
        for (name, n) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if n < self.labels {
                return bad(name, format!("{n} samples cannot cover {} labels", self.labels));
            }
        }
        if self.pretrain_groups < 4 {
            return bad("pretrain_groups", "need at least 4 groups".into());
        }
        Ok(())
    }
}

/// Sliding-window layout over the time axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub width: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn validate(&self, length: usize) -> Result<()> {
        if self.width == 0 || self.stride == 0 || self.stride > self.width {
            return Err(Error::Domain(format!(
                "window spec needs 0 < stride <= width, got width {} stride {}",
                self.width, self.stride
            )));
        }
        if length < self.width || (length - self.width) % self.stride != 0 {
            return Err(Error::Domain(format!(
                "length {length} is not tiled by windows of {} with stride {}",
                self.width, self.stride
            )));
        }
        Ok(())
    }

    pub fn count(&self, length: usize) -> usize {
        (length - self.width) / self.stride + 1
    }
}

/// Flattened `C·W` windows of one `C×T` sample (channel-major inside each
/// window). Window `t` starts at `t·stride`.
pub fn windows(sample: &[f32], channels: usize, spec: WindowSpec) -> Vec<Vec<f64>> {
    let length = sample.len() / channels;
    (0..spec.count(length))
        .map(|t| {
            let start = t * spec.stride;
            let mut w = Vec::with_capacity(channels * spec.width);
            for c in 0..channels {
                let row = &sample[c * length..(c + 1) * length];
                w.extend(row[start..start + spec.width].iter().map(|&v| f64::from(v)));
            }
            w
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Motif {
    /// `C×W_m` template, peak |value| = 1.
    pub template: Mat,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotifLibrary {
    pub motifs: Vec<Motif>,
}

impl MotifLibrary {
    pub fn generate(cfg: &GenConfig, rng: &mut Rng) -> Self {
        let mut motifs = Vec::new();
        for l in 0..cfg.labels {
            for _ in 0..cfg.variants_per_label {
                motifs.push(Motif {
                    template: random_template(cfg.channels, cfg.motif_width, rng),
                    labels: vec![l],
                });
            }
        }
        if cfg.confounder {
            motifs.push(Motif {
                template: random_template(cfg.channels, cfg.motif_width, rng),
                labels: vec![0, 1],
            });
        }
        MotifLibrary { motifs }
    }

    pub fn len(&self) -> usize {
        self.motifs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motifs.is_empty()
    }

    pub fn motifs_for_label(&self, label: usize) -> Vec<usize> {
        (0..self.motifs.len())
            .filter(|&m| self.motifs[m].labels.contains(&label))
            .collect()
    }
}

// One or two Gaussian bumps per channel with signed amplitude of magnitude
// at least 0.5, scaled to unit peak.
fn random_template(channels: usize, width: usize, rng: &mut Rng) -> Mat {
    let mut t = Mat::zeros(channels, width);
    for c in 0..channels {
        let bumps = 1 + rng.below(2);
        for _ in 0..bumps {
            let center = rng.uniform_range(0.0, (width - 1) as f64);
            let spread = rng.uniform_range(width as f64 / 8.0, width as f64 / 4.0);
            let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            let amp = sign * rng.uniform_range(0.5, 1.0);
            for (i, v) in t.row_mut(c).iter_mut().enumerate() {
                let d = (i as f64 - center) / spread;
                *v += amp * (-0.5 * d * d).exp();
            }
        }
    }
    let peak = t.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    t.scale_assign(1.0 / peak);
    t
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A set of `C×T` samples with multilabel targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub channels: usize,
    pub length: usize,
    /// `N·C·T` values, sample-major then channel-major.
    pub x: Vec<f32>,
    pub y: Mat,
    pub group_ids: Vec<u64>,
    pub splits: Vec<Split>,
    pub label_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.group_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group_ids.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.y.cols()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let s = self.channels * self.length;
        &self.x[i * s..(i + 1) * s]
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Stacked windows of the listed samples: `(|idx|·windows) × (C·W)`.
    pub fn window_matrix(&self, idx: &[usize], spec: WindowSpec) -> Mat {
        let nw = spec.count(self.length);
        let width = self.channels * spec.width;
        let mut data = Vec::with_capacity(idx.len() * nw * width);
        for &i in idx {
            for w in windows(self.sample(i), self.channels, spec) {
                data.extend(w);
            }
        }
        Mat::from_vec(idx.len() * nw, width, data).expect("window matrix shape")
    }

    pub fn labels_of(&self, idx: &[usize]) -> Mat {
        self.y.select_rows(idx)
    }

    pub fn save(&self, dir: &Path, meta_extra: serde_json::Value) -> Result<()> {
        let n = self.len();
        let y32: Vec<f32> = self.y.as_slice().iter().map(|&v| v as f32).collect();
        let mut w = TensorWriter::new();
        w.add_f32("x", &[n, self.channels, self.length], &self.x)
            .add_f32("y", &[n, self.y.cols()], &y32)
            .meta(json!({
                "labels": self.label_names,
                "group_ids": self.group_ids,
                "split": self.splits,
                "extra": meta_extra,
            }));
        w.write(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let f = TensorFile::read(dir)?;
        let shape = f.shape("x")?;
        let [n, channels, length] = shape[..] else {
            return Err(Error::format(dir, "tensor `x` must be N x C x T"));
        };
        let meta = f.meta();
        let field = |k: &str| -> Result<serde_json::Value> {
            meta.get(k)
                .cloned()
                .ok_or_else(|| Error::format(dir, format!("manifest meta lacks `{k}`")))
        };
        let label_names: Vec<String> = parse_meta(dir, "labels", field("labels")?)?;
        let group_ids: Vec<u64> = parse_meta(dir, "group_ids", field("group_ids")?)?;
        let splits: Vec<Split> = parse_meta(dir, "split", field("split")?)?;
        let y = f.mat("y")?;
        if y.rows() != n || group_ids.len() != n || splits.len() != n {
            return Err(Error::format(dir, "sample counts disagree across tensors and meta"));
        }
        Ok(Dataset {
            channels,
            length,
            x: f.f32s("x")?,
            y,
            group_ids,
            splits,
            label_names,
        })
    }
}

fn parse_meta<T: serde::de::DeserializeOwned>(dir: &Path, key: &str, v: serde_json::Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::format(dir, format!("meta `{key}`: {e}")))
}

/// One planted motif occurrence.
#[derive(Clone, Debug)]
struct Placement {
    motif: usize,
    onset: usize,
    amplitude: f64,
}

/// Both corpora drawn from one motif library.
#[derive(Clone, Debug)]
pub struct Corpora {
    pub library: MotifLibrary,
    /// Unlabeled views, two consecutive samples per group. `y` holds motif
    /// presence indicators, used only by the supervised-source baseline.
    pub pretrain: Dataset,
    pub target: Dataset,
}

pub fn generate(cfg: &GenConfig, seed: u64) -> Result<Corpora> {
    cfg.validate()?;
    let root = Rng::new(seed, "datagen");
    let library = MotifLibrary::generate(cfg, &mut root.derive("motifs"));
    let pretrain = gen_pretrain(cfg, &library, &mut root.derive("pretrain"));
    let target = gen_target(cfg, &library, &mut root.derive("target"))?;
    Ok(Corpora {
        library,
        pretrain,
        target,
    })
}

fn draw_placements(cfg: &GenConfig, lib: &MotifLibrary, forced: Option<usize>, rng: &mut Rng) -> Vec<Placement> {
    let count = cfg.min_motifs + rng.below(cfg.max_motifs - cfg.min_motifs + 1);
    let mut motifs: Vec<usize> = (0..count).map(|_| rng.below(lib.len())).collect();
    if let Some(m) = forced {
        motifs[0] = m;
    }
    // Non-overlapping slots: split the series into `count` equal segments and
    // draw a jittered onset inside each.
    let seg = cfg.length / count;
    let span = cfg.motif_width;
    let mut order: Vec<usize> = (0..count).collect();
    rng.shuffle(&mut order);
    motifs
        .into_iter()
        .zip(order)
        .map(|(motif, s)| {
            let lo = s * seg;
            let hi = lo + seg - span;
            let nominal = lo + rng.below(hi - lo + 1);
            let j = cfg.onset_jitter as i64;
            let jitter = rng.int_inclusive(-j, j);
            let onset = (nominal as i64 + jitter).clamp(lo as i64, hi as i64) as usize;
            let (alo, ahi) = cfg.amp_jitter;
            Placement {
                motif,
                onset,
                amplitude: rng.uniform_range(alo, ahi),
            }
        })
        .collect()
}

fn render(cfg: &GenConfig, lib: &MotifLibrary, placements: &[Placement], rng: &mut Rng) -> Vec<f32> {
    let (c, t) = (cfg.channels, cfg.length);
    let mut x = vec![0.0f64; c * t];
    for v in &mut x {
        *v = cfg.noise_sigma * rng.normal();
    }
    for p in placements {
        let tpl = &lib.motifs[p.motif].template;
        for ch in 0..c {
            for (i, &v) in tpl.row(ch).iter().enumerate() {
                x[ch * t + p.onset + i] += p.amplitude * v;
            }
        }
    }
    x.into_iter().map(|v| v as f32).collect()
}

fn gen_pretrain(cfg: &GenConfig, lib: &MotifLibrary, rng: &mut Rng) -> Dataset {
    let groups = cfg.pretrain_groups;
    let holdout = (groups / 10).max(1);
    let sample_len = cfg.channels * cfg.length;
    let mut x = Vec::with_capacity(2 * groups * sample_len);
    let mut y = Mat::zeros(2 * groups, lib.len());
    let mut group_ids = Vec::with_capacity(2 * groups);
    let mut splits = Vec::with_capacity(2 * groups);
    for g in 0..groups {
        let placements = draw_placements(cfg, lib, None, rng);
        let split = if g >= groups - holdout { Split::Val } else { Split::Train };
        for view in 0..2 {
            x.extend(render(cfg, lib, &placements, rng));
            for p in &placements {
                y[(2 * g + view, p.motif)] = 1.0;
            }
            group_ids.push(g as u64);
            splits.push(split);
        }
    }
    Dataset {
        channels: cfg.channels,
        length: cfg.length,
        x,
        y,
        group_ids,
        splits,
        label_names: (0..lib.len()).map(|m| format!("motif_{m}")).collect(),
    }
}

fn gen_target(cfg: &GenConfig, lib: &MotifLibrary, rng: &mut Rng) -> Result<Dataset> {
    let total = cfg.train + cfg.val + cfg.test;
    let mut x = Vec::with_capacity(total * cfg.channels * cfg.length);
    let mut y = Mat::zeros(total, cfg.labels);
    let mut splits = Vec::with_capacity(total);
    let mut n = 0;
    for (split, count) in [(Split::Train, cfg.train), (Split::Val, cfg.val), (Split::Test, cfg.test)] {
        for i in 0..count {
            // The first L samples of each split carry one motif of label i,
            // so every label has a positive in every split.
            let forced = (i < cfg.labels).then(|| {
                let options = lib.motifs_for_label(i);
                options[rng.below(options.len())]
            });
            let placements = draw_placements(cfg, lib, forced, rng);
            x.extend(render(cfg, lib, &placements, rng));
            for p in &placements {
                for &l in &lib.motifs[p.motif].labels {
                    y[(n, l)] = 1.0;
                }
            }
            splits.push(split);
            n += 1;
        }
    }
    // Stable sample order within each split is part of the dataset contract;
    // shuffle positions of the forced samples inside their split.
    let mut order = Vec::with_capacity(total);
    let mut start = 0;
    for count in [cfg.train, cfg.val, cfg.test] {
        let mut idx: Vec<usize> = (start..start + count).collect();
        rng.shuffle(&mut idx);
        order.extend(idx);
        start += count;
    }
    let sl = cfg.channels * cfg.length;
    let x: Vec<f32> = order.iter().flat_map(|&i| x[i * sl..(i + 1) * sl].to_vec()).collect();
    let ds = Dataset {
        channels: cfg.channels,
        length: cfg.length,
        x,
        y: y.select_rows(&order),
        group_ids: (0..total as u64).collect(),
        splits: order.iter().map(|&i| splits[i]).collect(),
        label_names: (0..cfg.labels).map(|l| format!("label_{l}")).collect(),
    };
    for split in [Split::Train, Split::Val, Split::Test] {
        let idx = ds.indices(split);
        for l in 0..cfg.labels {
            let pos = idx.iter().filter(|&&i| ds.y[(i, l)] > 0.5).count();
            if pos == 0 || pos == idx.len() {
                return Err(Error::Config {
                    path: "gen".into(),
                    msg: format!("label {l} is single-class in split {split:?}"),
                });
            }
        }
    }
    Ok(ds)
}

/// Nested, approximately label-stratified subsets of `pool` (indices into
/// `y`), one per requested size, largest first. Each subset is drawn from the
/// previous one by greedy iterative stratification; a label left without a
/// positive gets one positive injected from the previous subset, so a subset
/// can exceed its requested size by at most the number of labels.
pub fn nested_subsets(pool: &[usize], y: &Mat, sizes: &[usize], rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    let labels = y.cols();
    if sizes.is_empty() {
        return Ok(Vec::new());
    }
    if sizes.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Config {
            path: "eval.sizes".into(),
            msg: format!("subset sizes must be descending, got {sizes:?}"),
        });
    }
    let smallest = *sizes.last().unwrap();
    if smallest < labels {
        return Err(Error::Config {
            path: "eval.sizes".into(),
            msg: format!("smallest subset {smallest} is below the label count {labels}"),
        });
    }
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(sizes.len());
    let mut prev: Vec<usize> = pool.to_vec();
    for &size in sizes {
        let mut keep = if size >= prev.len() {
            prev.clone()
        } else {
            stratified_pick(&prev, y, size, rng)
        };
        for l in 0..labels {
            if !keep.iter().any(|&i| y[(i, l)] > 0.5) {
                let cands: Vec<usize> = prev.iter().copied().filter(|&i| y[(i, l)] > 0.5).collect();
                if cands.is_empty() {
                    return Err(Error::SingleClass {
                        label: l,
                        missing: "positive",
                    });
                }
                keep.push(cands[rng.below(cands.len())]);
            }
        }
        keep.sort_unstable();
        out.push(keep.clone());
        prev = keep;
    }
    Ok(out)
}

// Two-fold iterative stratification: split `from` into a kept fold of `size`
// and a dropped fold, matching per-label positive proportions.
fn stratified_pick(from: &[usize], y: &Mat, size: usize, rng: &mut Rng) -> Vec<usize> {
    let labels = y.cols();
    let frac = size as f64 / from.len() as f64;
    let mut remaining: Vec<usize> = from.to_vec();
    rng.shuffle(&mut remaining);
    // desired[fold][label], capacity[fold]
    let mut desired = [vec![0.0; labels], vec![0.0; labels]];
    for l in 0..labels {
        let pos = from.iter().filter(|&&i| y[(i, l)] > 0.5).count() as f64;
        desired[0][l] = pos * frac;
        desired[1][l] = pos * (1.0 - frac);
    }
    let mut capacity = [size as f64, (from.len() - size) as f64];
    let mut folds: [Vec<usize>; 2] = [Vec::new(), Vec::new()];

    let mut assign = |i: usize, fold: usize, desired: &mut [Vec<f64>; 2], capacity: &mut [f64; 2]| {
        for (l, d) in desired[fold].iter_mut().enumerate() {
            if y[(i, l)] > 0.5 {
                *d -= 1.0;
            }
        }
        capacity[fold] -= 1.0;
        folds[fold].push(i);
    };

    loop {
        // rarest label among unassigned samples
        let mut best: Option<(usize, usize)> = None;
        for l in 0..labels {
            let c = remaining.iter().filter(|&&i| y[(i, l)] > 0.5).count();
            if c > 0 && best.is_none_or(|(_, bc)| c < bc) {
                best = Some((l, c));
            }
        }
        let Some((l, _)) = best else { break };
        let (with, without): (Vec<usize>, Vec<usize>) = remaining.iter().partition(|&&i| y[(i, l)] > 0.5);
        for i in with {
            let fold = pick_fold(&desired, &capacity, l);
            assign(i, fold, &mut desired, &mut capacity);
        }
        remaining = without;
    }
    for i in remaining {
        let fold = if capacity[0] >= capacity[1] { 0 } else { 1 };
        assign(i, fold, &mut desired, &mut capacity);
    }
    // Capacity is soft during the greedy pass; trim or top up the kept fold.
    let [mut keep, mut drop] = folds;
    while keep.len() > size {
        drop.push(keep.pop().unwrap());
    }
    while keep.len() < size {
        keep.push(drop.pop().unwrap());
    }
    keep
}

fn pick_fold(desired: &[Vec<f64>; 2], capacity: &[f64; 2], l: usize) -> usize {
    if capacity[0] <= 0.0 {
        return 1;
    }
    if capacity[1] <= 0.0 {
        return 0;
    }
    if desired[0][l] > desired[1][l] {
        0
    } else if desired[1][l] > desired[0][l] {
        1
    } else if capacity[0] >= capacity[1] {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        GenConfig {
            pretrain_groups: 40,
            train: 200,
            val: 40,
            test: 40,
            ..GenConfig::default()
        }
    }

    #[test]
    fn default_window_count_is_19() {
        let cfg = GenConfig::default();
        assert_eq!(cfg.window_spec().count(cfg.length), 19);
        let x = vec![0.0f32; 3 * 200];
        assert_eq!(windows(&x, 3, cfg.window_spec()).len(), 19);
    }

    #[test]
    fn window_edge_cases() {
        let x: Vec<f32> = (0..20).map(|v| v as f32).collect();
        let one = windows(&x, 1, WindowSpec { width: 20, stride: 10 });
        assert_eq!(one.len(), 1);
        let x: Vec<f32> = (0..8).map(|v| v as f32).collect();
        let two = windows(&x, 1, WindowSpec { width: 4, stride: 4 });
        assert_eq!(two, vec![vec![0.0, 1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0, 7.0]]);
    }

    #[test]
    fn windows_are_channel_major() {
        // 2 channels, T=4, W=2, stride=2
        let x = [0.0f32, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0];
        let w = windows(&x, 2, WindowSpec { width: 2, stride: 2 });
        assert_eq!(w[1], vec![2.0, 3.0, 12.0, 13.0]);
    }

    #[test]
    fn window_spec_validation() {
        assert!(WindowSpec { width: 20, stride: 30 }.validate(200).is_err());
        assert!(WindowSpec { width: 20, stride: 7 }.validate(200).is_err());
        assert!(WindowSpec { width: 20, stride: 10 }.validate(10).is_err());
    }

    #[test]
    fn zero_noise_views_are_identical() {
        let cfg = GenConfig {
            noise_sigma: 0.0,
            min_motifs: 1,
            max_motifs: 1,
            ..small()
        };
        let c = generate(&cfg, 3).unwrap();
        let p = &c.pretrain;
        for g in 0..cfg.pretrain_groups {
            assert_eq!(p.group_ids[2 * g], p.group_ids[2 * g + 1]);
            assert_eq!(p.sample(2 * g), p.sample(2 * g + 1));
        }
    }

    #[test]
    fn noisy_views_differ() {
        let c = generate(&small(), 3).unwrap();
        assert_ne!(c.pretrain.sample(0), c.pretrain.sample(1));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small(), 9).unwrap();
        let b = generate(&small(), 9).unwrap();
        assert_eq!(a.target, b.target);
        assert_eq!(a.pretrain, b.pretrain);
        let c = generate(&small(), 10).unwrap();
        assert_ne!(a.target.x, c.target.x);
    }

    #[test]
    fn library_shape_and_mapping() {
        let cfg = GenConfig::default();
        let lib = MotifLibrary::generate(&cfg, &mut Rng::new(1, "m"));
        assert_eq!(lib.len(), cfg.labels * 2 + 1);
        for l in 0..cfg.labels {
            assert!(!lib.motifs_for_label(l).is_empty());
        }
        for m in &lib.motifs {
            let peak = m.template.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!((peak - 1.0).abs() < 1e-12);
        }
        assert_eq!(lib.motifs_for_label(0).len(), 3);
    }

    #[test]
    fn every_split_covers_every_label_and_groups_stay_put() {
        let c = generate(&small(), 4).unwrap();
        let t = &c.target;
        for split in [Split::Train, Split::Val, Split::Test] {
            let idx = t.indices(split);
            for l in 0..t.num_labels() {
                assert!(idx.iter().any(|&i| t.y[(i, l)] > 0.5));
            }
        }
        let p = &c.pretrain;
        for i in 0..p.len() {
            for j in 0..p.len() {
                if p.group_ids[i] == p.group_ids[j] {
                    assert_eq!(p.splits[i], p.splits[j]);
                }
            }
        }
    }

    #[test]
    fn infeasible_placement_is_config_error() {
        let cfg = GenConfig {
            max_motifs: 12,
            ..GenConfig::default()
        };
        assert!(matches!(generate(&cfg, 0), Err(Error::Config { .. })));
    }

    #[test]
    fn save_load_roundtrip() {
        let c = generate(&small(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.target.save(dir.path(), json!({"seed": 2})).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, c.target);
    }

    fn label_counts(idx: &[usize], y: &Mat) -> Vec<usize> {
        (0..y.cols())
            .map(|l| idx.iter().filter(|&&i| y[(i, l)] > 0.5).count())
            .collect()
    }

    #[test]
    fn full_size_subset_is_the_pool() {
        let c = generate(&small(), 5).unwrap();
        let pool = c.target.indices(Split::Train);
        let subs = nested_subsets(&pool, &c.target.y, &[pool.len()], &mut Rng::new(0, "s")).unwrap();
        assert_eq!(subs[0], pool);
    }

    #[test]
    fn subsets_nest_and_cover_labels() {
        let cfg = GenConfig {
            train: 1024,
            ..small()
        };
        let c = generate(&cfg, 6).unwrap();
        let pool = c.target.indices(Split::Train);
        let y = &c.target.y;
        let subs = nested_subsets(&pool, y, &[1024, 256, 64], &mut Rng::new(6, "s")).unwrap();
        for w in subs.windows(2) {
            assert!(w[1].iter().all(|i| w[0].binary_search(i).is_ok()));
        }
        let full = label_counts(&pool, y);
        for s in &subs {
            let counts = label_counts(s, y);
            assert!(counts.iter().all(|&c| c >= 1));
            for l in 0..y.cols() {
                if full[l] >= 20 {
                    let rate_full = full[l] as f64 / pool.len() as f64;
                    let rate = counts[l] as f64 / s.len() as f64;
                    assert!((rate / rate_full - 1.0).abs() <= 0.5, "label {l}: {rate} vs {rate_full}");
                }
            }
        }
    }

    #[test]
    fn lone_positive_is_in_every_subset() {
        let mut y = Mat::zeros(50, 2);
        for i in 0..25 {
            y[(i, 0)] = 1.0;
        }
        y[(37, 1)] = 1.0;
        let pool: Vec<usize> = (0..50).collect();
        let subs = nested_subsets(&pool, &y, &[40, 10, 4], &mut Rng::new(1, "s")).unwrap();
        for s in subs {
            assert!(s.contains(&37));
        }
    }

    #[test]
    fn smallest_size_below_label_count_is_rejected() {
        let y = Mat::zeros(10, 6);
        let pool: Vec<usize> = (0..10).collect();
        assert!(matches!(
            nested_subsets(&pool, &y, &[8, 4], &mut Rng::new(1, "s")),
            Err(Error::Config { .. })
        ));
    }
}
