//! AUROC metrics, bootstrap intervals, the condition matrix and the
//! assignment runtime benchmark.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adapt::{
    coefficient_report, finetune, mean_ratio, project, slot_activations, train_probe, Classifier, CoefficientRow,
    FinetuneReport, ProjectionMode,
};
use crate::assign::{apply, pool_assign, random_assignment, score, solve_lap, PoolConfig, ScoreMatrix, SlotAssignment};
use crate::config::PipelineConfig;
use crate::datagen::{generate, nested_subsets, Dataset, Split};
use crate::error::{Error, Result};
use crate::numcore::{Mat, Rng};
use crate::protomodel::{activations, Model, ModelConfig, PrototypeBank};
use crate::ssl::{pretrain, PretrainReport};

/// Rank AUROC with midranks for tied scores.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Domain(format!("auroc: {} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("auroc scores".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y > 0.5).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Domain("auroc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] > 0.5 {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Per-label AUROCs of `scores` (`N×L`) and their unweighted mean.
pub fn macro_auroc(scores: &Mat, y: &Mat) -> Result<(Vec<f64>, f64)> {
    if scores.shape() != y.shape() {
        return Err(Error::Shape {
            op: "macro_auroc",
            left: scores.shape(),
            right: y.shape(),
        });
    }
    let per: Vec<f64> = (0..y.cols())
        .map(|l| auroc(&scores.col(l), &y.col(l)))
        .collect::<Result<_>>()?;
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((per, mean))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bootstrap interval of macro AUROC. Resamples are stratified by the full
/// label pattern of each sample, so every class present in `y` survives.
/// `draw(group_len, i)` picks the member for the `i`-th draw of a stratum.
/// Returns `(point, lo, hi)` with the 2.5/97.5 percentiles widened, if
/// needed, to contain the point estimate.
pub fn bootstrap_ci_with(
    scores: &Mat,
    y: &Mat,
    resamples: usize,
    mut draw: impl FnMut(usize, usize) -> usize,
) -> Result<(f64, f64, f64)> {
    if resamples == 0 {
        return Err(Error::Domain("bootstrap needs at least one resample".into()));
    }
    let (_, point) = macro_auroc(scores, y)?;
    let mut strata: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for n in 0..y.rows() {
        strata.entry(y.row(n).iter().map(|&v| v > 0.5).collect()).or_default().push(n);
    }
    let mut stats = Vec::with_capacity(resamples);
    let mut idx = Vec::with_capacity(y.rows());
    for _ in 0..resamples {
        idx.clear();
        for members in strata.values() {
            for i in 0..members.len() {
                idx.push(members[draw(members.len(), i)]);
            }
        }
        let (_, m) = macro_auroc(&scores.select_rows(&idx), &y.select_rows(&idx))?;
        stats.push(m);
    }
    stats.sort_by(f64::total_cmp);
    let lo = percentile(&stats, 0.025).min(point);
    let hi = percentile(&stats, 0.975).max(point);
    Ok((point, lo, hi))
}

pub fn bootstrap_ci(scores: &Mat, y: &Mat, resamples: usize, rng: &mut Rng) -> Result<(f64, f64, f64)> {
    bootstrap_ci_with(scores, y, resamples, |n, _| rng.below(n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    ProtosslProbe,
    ProtosslTuned,
    SupprotoDirect,
    SupprotoPretrained,
    RandomAssign,
    Pit,
    Pip,
}

impl Condition {
    pub const ALL: [Condition; 7] = [
        Condition::ProtosslProbe,
        Condition::ProtosslTuned,
        Condition::SupprotoDirect,
        Condition::SupprotoPretrained,
        Condition::RandomAssign,
        Condition::Pit,
        Condition::Pip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::ProtosslProbe => "protossl_probe",
            Condition::ProtosslTuned => "protossl_tuned",
            Condition::SupprotoDirect => "supproto_direct",
            Condition::SupprotoPretrained => "supproto_pretrained",
            Condition::RandomAssign => "random_assign",
            Condition::Pit => "pit",
            Condition::Pip => "pip",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: Condition,
    pub seed: u64,
    pub train_size: usize,
    pub per_label: Vec<f64>,
    pub macro_auroc: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Mean over labels of `mean exp(β⁺) / mean exp(β⁻)`.
    pub coef_ratio: Option<f64>,
    /// Wall-clock seconds per phase; kept out of the reproducible tables.
    #[serde(skip)]
    pub runtimes: BTreeMap<String, f64>,
}

/// Everything a finished cell produced.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub report: EvalReport,
    pub assignment: SlotAssignment,
    pub bank: PrototypeBank,
    pub classifier: Classifier,
    pub coefficients: Vec<CoefficientRow>,
    pub finetune: Option<FinetuneReport>,
}

/// Q scores of the pretrained bank on `idx` and the exact slot assignment.
pub fn lap_assign(
    model: &Model,
    protos: &Mat,
    data: &Dataset,
    idx: &[usize],
    per_label: usize,
    balance: bool,
    rng: &mut Rng,
) -> Result<(ScoreMatrix, SlotAssignment, f64, f64)> {
    let acts = activations(model, protos, data, idx)?.a;
    let t = Instant::now();
    let q = score(&acts, &data.labels_of(idx), balance, rng)?;
    let score_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let a = solve_lap(&q.q, per_label)?;
    Ok((q, a, score_s, t.elapsed().as_secs_f64()))
}

/// Trains the probe on `train` slot activations and scores the test split.
#[allow(clippy::too_many_arguments)]
pub fn probe_and_score(
    model: &Model,
    bank: &PrototypeBank,
    assignment: &SlotAssignment,
    data: &Dataset,
    train: &[usize],
    c: f64,
    bootstrap: usize,
    rng: &mut Rng,
) -> Result<(Classifier, Vec<CoefficientRow>, Vec<f64>, f64, f64, f64)> {
    let a_train = slot_activations(model, bank, assignment, data, train)?;
    let clf = train_probe(&a_train, &data.labels_of(train), c)?;
    let test = data.indices(Split::Test);
    let a_test = slot_activations(model, bank, assignment, data, &test)?;
    let z = clf.decision(&a_test)?;
    let y = data.labels_of(&test);
    let (per, _) = macro_auroc(&z, &y)?;
    let (point, lo, hi) = bootstrap_ci(&z, &y, bootstrap, rng)?;
    let coef = coefficient_report(&clf, &assignment.slot_labels())?;
    Ok((clf, coef, per, point, lo, hi))
}

/// Identity assignment of `labels·per_label` slots onto the first prototypes.
pub fn identity_assignment(labels: usize, per_label: usize) -> Result<SlotAssignment> {
    solve_lap(&Mat::zeros(labels * per_label, labels), per_label)
}

/// Supervised prototype model trained on the pretraining corpus's motif
/// labels, optionally grounded on its windows.
#[derive(Clone, Debug)]
pub struct SourceModel {
    pub model: Model,
    pub report: FinetuneReport,
}

pub fn train_source(cfg: &PipelineConfig, pretrain_corpus: &Dataset, seed: u64) -> Result<SourceModel> {
    let labels = pretrain_corpus.num_labels();
    let per_label = cfg.source_per_label(labels);
    let mcfg = ModelConfig {
        num_prototypes: labels * per_label,
        ..cfg.model.clone()
    };
    let mut model = Model::new(
        pretrain_corpus.channels,
        cfg.gen.window_spec(),
        &mcfg,
        &mut Rng::new(seed, "eval/source/model"),
    );
    let a = identity_assignment(labels, per_label)?;
    model.bank = apply(&model.bank, &a)?;
    let train = pretrain_corpus.indices(Split::Train);
    let val = pretrain_corpus.indices(Split::Val);
    let report = finetune(&mut model, pretrain_corpus, &train, &val, &a, &cfg.eval.source.finetune, seed)?;
    if !cfg.project.no_proj {
        model.bank = project(
            &model,
            &model.bank,
            &a,
            pretrain_corpus,
            &train,
            ProjectionMode::LabelSupervised,
            None,
        )?;
    }
    Ok(SourceModel { model, report })
}

/// Per-seed state shared by every cell: data, the pretrained model, nested
/// subsets and the lazily trained supervised source.
pub struct SeedRun<'a> {
    pub cfg: &'a PipelineConfig,
    pub seed: u64,
    pub pretrain: Dataset,
    pub target: Dataset,
    pub model: Model,
    pub pretrain_report: Option<PretrainReport>,
    pub subsets: Vec<Vec<usize>>,
    source: Option<SourceModel>,
}

impl<'a> SeedRun<'a> {
    /// Generates data and pretrains from scratch.
    pub fn prepare(cfg: &'a PipelineConfig, seed: u64) -> Result<Self> {
        let c = generate(&cfg.gen, seed)?;
        let mut model = Model::new(c.target.channels, cfg.gen.window_spec(), &cfg.model, &mut Rng::new(seed, "model"));
        let rep = pretrain(&c.pretrain, &mut model, &cfg.pretrain, seed)?;
        let mut run = Self::from_parts(cfg, seed, c.pretrain, c.target, model)?;
        run.pretrain_report = Some(rep);
        Ok(run)
    }

    pub fn from_parts(cfg: &'a PipelineConfig, seed: u64, pretrain: Dataset, target: Dataset, model: Model) -> Result<Self> {
        let pool = target.indices(Split::Train);
        let subsets = nested_subsets(&pool, &target.y, &cfg.eval.sizes, &mut Rng::new(seed, "eval/subsets"))?;
        Ok(SeedRun {
            cfg,
            seed,
            pretrain,
            target,
            model,
            pretrain_report: None,
            subsets,
            source: None,
        })
    }

    pub fn subset(&self, size: usize) -> Result<&[usize]> {
        let i = self.cfg.eval.sizes.iter().position(|&s| s == size).ok_or_else(|| Error::Config {
            path: "eval.sizes".into(),
            msg: format!("no subset of size {size}"),
        })?;
        Ok(&self.subsets[i])
    }

    fn source(&mut self) -> Result<&SourceModel> {
        if self.source.is_none() {
            self.source = Some(train_source(self.cfg, &self.pretrain, self.seed)?);
        }
        Ok(self.source.as_ref().unwrap())
    }

    pub fn run(&mut self, cond: Condition, size: usize) -> Result<CellResult> {
        self.run_with(cond, size, self.cfg.assign.per_label)
    }

    /// One cell with an explicit slot count per label.
    pub fn run_with(&mut self, cond: Condition, size: usize, per_label: usize) -> Result<CellResult> {
        let cfg = self.cfg;
        let seed = self.seed;
        let train = self.subset(size)?.to_vec();
        let tag = format!("eval/{}/{size}/{per_label}", cond.name());
        let rng = Rng::new(seed, &tag);
        let mut runtimes = BTreeMap::new();
        let labels = self.target.num_labels();
        let start = Instant::now();

        let (model, assignment, mode, ft) = match cond {
            Condition::ProtosslProbe | Condition::Pit | Condition::Pip | Condition::RandomAssign | Condition::ProtosslTuned => {
                let (q, lap, score_s, solve_s) = lap_assign(
                    &self.model,
                    &self.model.bank.p,
                    &self.target,
                    &train,
                    per_label,
                    cfg.assign.balance,
                    &mut rng.derive("balance"),
                )?;
                runtimes.insert("score".into(), score_s);
                runtimes.insert("solve".into(), solve_s);
                let a = if cond == Condition::RandomAssign {
                    random_assignment(&q.q, per_label, &mut rng.derive("random"))?
                } else {
                    lap
                };
                let mut model = self.model.clone();
                model.bank = apply(&model.bank, &a)?;
                let mut ft = None;
                if cond == Condition::ProtosslTuned {
                    let val = self.target.indices(Split::Val);
                    let t = Instant::now();
                    ft = Some(finetune(&mut model, &self.target, &train, &val, &a, &cfg.finetune, seed)?);
                    runtimes.insert("finetune".into(), t.elapsed().as_secs_f64());
                }
                let mode = match cond {
                    Condition::Pit => ProjectionMode::Pit,
                    Condition::Pip => ProjectionMode::Pip,
                    _ => ProjectionMode::LabelSupervised,
                };
                (model, a, mode, ft)
            }
            Condition::SupprotoDirect => {
                let mcfg = ModelConfig {
                    num_prototypes: labels * per_label,
                    ..cfg.model.clone()
                };
                let mut model = Model::new(
                    self.target.channels,
                    cfg.gen.window_spec(),
                    &mcfg,
                    &mut Rng::new(seed, &format!("{tag}/model")),
                );
                let a = identity_assignment(labels, per_label)?;
                model.bank = apply(&model.bank, &a)?;
                let val = self.target.indices(Split::Val);
                let t = Instant::now();
                let ft = finetune(&mut model, &self.target, &train, &val, &a, &cfg.finetune, seed)?;
                runtimes.insert("finetune".into(), t.elapsed().as_secs_f64());
                (model, a, ProjectionMode::LabelSupervised, Some(ft))
            }
            Condition::SupprotoPretrained => {
                let t = Instant::now();
                let src = self.source()?.model.clone();
                runtimes.insert("source".into(), t.elapsed().as_secs_f64());
                let (_, a, score_s, solve_s) = lap_assign(
                    &src,
                    &src.bank.p,
                    &self.target,
                    &train,
                    per_label,
                    cfg.assign.balance,
                    &mut rng.derive("balance"),
                )?;
                runtimes.insert("score".into(), score_s);
                runtimes.insert("solve".into(), solve_s);
                let mut model = src;
                model.bank = apply(&model.bank, &a)?;
                (model, a, ProjectionMode::LabelSupervised, None)
            }
        };

        let bank = project(&model, &model.bank, &assignment, &self.target, &train, mode, Some(&self.pretrain))?;
        let (classifier, coefficients, per_label_auroc, point, lo, hi) = probe_and_score(
            &model,
            &bank,
            &assignment,
            &self.target,
            &train,
            cfg.probe.c,
            cfg.eval.bootstrap,
            &mut rng.derive("bootstrap"),
        )?;
        runtimes.insert("total".into(), start.elapsed().as_secs_f64());
        Ok(CellResult {
            report: EvalReport {
                condition: cond,
                seed,
                train_size: size,
                per_label: per_label_auroc,
                macro_auroc: point,
                ci_lo: lo,
                ci_hi: hi,
                coef_ratio: mean_ratio(&coefficients),
                runtimes,
            },
            assignment,
            bank,
            classifier,
            coefficients,
            finetune: ft,
        })
    }
}

/// Outcome of one matrix cell.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub condition: Condition,
    pub seed: u64,
    pub train_size: usize,
    pub result: std::result::Result<EvalReport, String>,
}

/// Runs every `(condition, size)` cell for one prepared seed. A failing cell
/// is recorded and the rest continue.
pub fn run_matrix(run: &mut SeedRun, conditions: &[Condition], sizes: &[usize]) -> Vec<CellOutcome> {
    let mut out = Vec::new();
    for &c in conditions {
        for &s in sizes {
            out.push(CellOutcome {
                condition: c,
                seed: run.seed,
                train_size: s,
                result: run.run(c, s).map(|r| r.report).map_err(|e| e.to_string()),
            });
        }
    }
    out
}

pub const MATRIX_COLUMNS: &str = "seed,condition,train_size,status,macro_auroc,ci_lo,ci_hi,coef_ratio,per_label_auroc";

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per cell; per-label AUROCs are `;`-separated.
pub fn matrix_csv(cells: &[CellOutcome]) -> String {
    let mut s = format!("{MATRIX_COLUMNS}\n");
    for c in cells {
        match &c.result {
            Ok(r) => s.push_str(&format!(
                "{},{},{},ok,{},{},{},{},{}\n",
                c.seed,
                c.condition.name(),
                c.train_size,
                r.macro_auroc,
                r.ci_lo,
                r.ci_hi,
                r.coef_ratio.map(|v| v.to_string()).unwrap_or_default(),
                r.per_label.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
            )),
            Err(e) => s.push_str(&format!(
                "{},{},{},{},,,,,\n",
                c.seed,
                c.condition.name(),
                c.train_size,
                csv_escape(&format!("failed: {e}"))
            )),
        }
    }
    s
}

/// Parses rows written by [`matrix_csv`]; failed cells keep their message.
pub fn parse_matrix_csv(text: &str) -> Result<Vec<CellOutcome>> {
    let mut lines = text.lines();
    if lines.next() != Some(MATRIX_COLUMNS) {
        return Err(Error::Domain("matrix CSV header does not match".into()));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let bad = || Error::Domain(format!("matrix CSV row {}: malformed", i + 2));
        let mut f: Vec<&str> = line.splitn(4, ',').collect();
        if f.len() < 4 {
            return Err(bad());
        }
        let rest = f.pop().unwrap();
        let seed: u64 = f[0].parse().map_err(|_| bad())?;
        let condition: Condition = serde_json::from_value(serde_json::Value::String(f[1].into())).map_err(|_| bad())?;
        let train_size: usize = f[2].parse().map_err(|_| bad())?;
        let result = if let Some(vals) = rest.strip_prefix("ok,") {
            let v: Vec<&str> = vals.split(',').collect();
            if v.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(EvalReport {
                condition,
                seed,
                train_size,
                per_label: v[4].split(';').map(num).collect::<Result<_>>()?,
                macro_auroc: num(v[0])?,
                ci_lo: num(v[1])?,
                ci_hi: num(v[2])?,
                coef_ratio: if v[3].is_empty() { None } else { Some(num(v[3])?) },
                runtimes: BTreeMap::new(),
            })
        } else {
            Err(rest.trim_end_matches(",,,,,").trim_matches('"').to_string())
        };
        out.push(CellOutcome {
            condition,
            seed,
            train_size,
            result,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub condition: Condition,
    pub train_size: usize,
    pub seeds: usize,
    pub mean_macro_auroc: f64,
    pub mean_ci_lo: f64,
    pub mean_ci_hi: f64,
    pub failed: usize,
}

/// Means over seeds per `(condition, size)`.
pub fn summarize(cells: &[CellOutcome]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Condition, std::cmp::Reverse<usize>), Vec<&CellOutcome>> = BTreeMap::new();
    for c in cells {
        groups.entry((c.condition, std::cmp::Reverse(c.train_size))).or_default().push(c);
    }
    groups
        .into_iter()
        .map(|((condition, std::cmp::Reverse(train_size)), cs)| {
            let ok: Vec<&EvalReport> = cs.iter().filter_map(|c| c.result.as_ref().ok()).collect();
            let mean = |f: &dyn Fn(&EvalReport) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            SummaryRow {
                condition,
                train_size,
                seeds: ok.len(),
                mean_macro_auroc: mean(&|r| r.macro_auroc),
                mean_ci_lo: mean(&|r| r.ci_lo),
                mean_ci_hi: mean(&|r| r.ci_hi),
                failed: cs.len() - ok.len(),
            }
        })
        .collect()
}

/// Label-efficiency table: one row per size, one column per condition.
pub fn efficiency_tsv(rows: &[SummaryRow]) -> String {
    let mut conds: Vec<Condition> = rows.iter().map(|r| r.condition).collect();
    conds.sort();
    conds.dedup();
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.train_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut s = String::from("# train_size");
    for c in &conds {
        s.push('\t');
        s.push_str(c.name());
    }
    s.push('\n');
    for size in sizes {
        s.push_str(&size.to_string());
        for c in &conds {
            let v = rows
                .iter()
                .find(|r| r.condition == *c && r.train_size == size)
                .map(|r| r.mean_macro_auroc)
                .unwrap_or(f64::NAN);
            s.push_str(&format!("\t{v}"));
        }
        s.push('\n');
    }
    s
}

/// One replicate of the assignment benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub replicate: usize,
    pub score_seconds: f64,
    pub lap_seconds: f64,
    pub pool_seconds: f64,
    pub lap_objective: f64,
    pub assigned: usize,
}

impl BenchRow {
    pub fn lap_total(&self) -> f64 {
        self.score_seconds + self.lap_seconds
    }
}

/// Synthetic activations in `[-1, 1]` with a few prototypes tied to each
/// label, random labels at 20% prevalence, and random prototype vectors.
pub fn bench_instance(k: usize, l: usize, n: usize, d: usize, rng: &mut Rng) -> (Mat, Mat, Mat) {
    let y = Mat::from_vec(n, l, (0..n * l).map(|_| (rng.uniform() < 0.2) as u8 as f64).collect()).unwrap();
    let effect: Vec<Option<usize>> = (0..k).map(|_| (rng.uniform() < 0.3).then(|| rng.below(l))).collect();
    let mut a = Mat::zeros(n, k);
    for r in 0..n {
        for (j, e) in effect.iter().enumerate() {
            let signal = e.map_or(0.0, |lab| 0.5 * y[(r, lab)]);
            a[(r, j)] = (0.3 * rng.normal() + signal).clamp(-1.0, 1.0);
        }
    }
    let p = Mat::from_vec(k, d, (0..k * d).map(|_| rng.normal()).collect()).unwrap();
    (a, y, p)
}

/// Wall-clock of score + exact assignment against the pool mapping on
/// identical instances, one row per replicate.
#[allow(clippy::too_many_arguments)]
pub fn bench_assign(
    k: usize,
    l: usize,
    m: usize,
    n: usize,
    d: usize,
    replicates: usize,
    pool: &PoolConfig,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for r in 0..replicates {
        let rng = Rng::new(seed, &format!("bench/{r}"));
        let (a, y, p) = bench_instance(k, l, n, d, &mut rng.derive("instance"));
        let t = Instant::now();
        let q = score(&a, &y, true, &mut rng.derive("balance"))?;
        let score_seconds = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let lap = solve_lap(&q.q, m)?;
        let lap_seconds = t.elapsed().as_secs_f64();
        let pooled = pool_assign(&a, &y, &p, m, pool, &mut rng.derive("pool"))?;
        rows.push(BenchRow {
            replicate: r,
            score_seconds,
            lap_seconds,
            pool_seconds: pooled.seconds,
            lap_objective: lap.objective,
            assigned: pooled.assignment.len().min(lap.len()),
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("replicate,score_seconds,lap_seconds,lap_total_seconds,pool_seconds\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.replicate,
            r.score_seconds,
            r.lap_seconds,
            r.lap_total(),
            r.pool_seconds
        ));
    }
    s
}
