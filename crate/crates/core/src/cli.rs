//! Command-line front end. Every stage reads artifacts written by earlier
//! stages under `--out` and writes its own directory with the effective
//! config and run metadata next to the outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::adapt::{coefficient_report, coefficients_csv, finetune, project, slot_activations, train_probe, Classifier};
use crate::assign::{apply, AssignReport, SlotAssignment};
use crate::config::PipelineConfig;
use crate::datagen::{generate, nested_subsets, Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{
    bench_assign, bench_csv, efficiency_tsv, lap_assign, macro_auroc, matrix_csv, parse_matrix_csv, run_matrix,
    summarize, CellOutcome, SeedRun, SummaryRow,
};
use crate::numcore::Rng;
use crate::protomodel::Model;
use crate::ssl::pretrain;

#[derive(Debug, Parser)]
#[command(name = "protossl", version, about = "Prototype pretraining, label assignment and probing on synthetic time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Pipeline config (JSON); defaults are used for missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Root directory holding every stage's outputs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the pretraining and target corpora.
    Gen(Common),
    /// Contrastive pretraining of encoder, prototypes and head.
    Pretrain(Common),
    /// Score the pretrained bank against target labels and solve the slot assignment.
    Assign(Common),
    /// Supervised fine-tuning of the encoder and assigned prototypes.
    Finetune(Common),
    /// Ground assigned prototypes on training windows.
    Project {
        #[command(flatten)]
        common: Common,
        /// Start from the fine-tuned checkpoint instead of the pretrained one.
        #[arg(long)]
        tuned: bool,
    },
    /// Train the logistic probe on grounded slot activations.
    Probe(Common),
    /// Run the condition matrix over subset sizes and seeds.
    Eval(Common),
    /// Time score + exact assignment against the pool mapping.
    BenchAssign(Common),
    /// Aggregate evaluation and benchmark outputs into tables.
    Report(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Gen(c)
            | Command::Pretrain(c)
            | Command::Assign(c)
            | Command::Finetune(c)
            | Command::Probe(c)
            | Command::Eval(c)
            | Command::BenchAssign(c)
            | Command::Report(c) => c,
            Command::Project { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Pretrain(_) => "pretrain",
            Command::Assign(_) => "assign",
            Command::Finetune(_) => "finetune",
            Command::Project { .. } => "project",
            Command::Probe(_) => "probe",
            Command::Eval(_) => "eval",
            Command::BenchAssign(_) => "bench-assign",
            Command::Report(_) => "report",
        }
    }
}

/// Exit status for an error: 2 for invalid configuration, 3 for a missing
/// input artifact, 1 otherwise.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Capacity { .. } => 2,
        Error::MissingInput(_) => 3,
        _ => 1,
    }
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

struct Ctx {
    cfg: PipelineConfig,
    seed: u64,
    out: PathBuf,
    command: String,
}

impl Ctx {
    fn dir(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.out.clone(), |p, s| p.join(s))
    }

    /// Creates a stage directory and writes `config.json` and `meta.json`.
    fn stage(&self, name: &str) -> Result<PathBuf> {
        let dir = self.out.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write(&dir.join("config.json"), &self.cfg.to_json())?;
        let meta = json!({
            "seed": self.seed,
            "command": self.command,
            "git_describe": git_describe(),
            "version": env!("CARGO_PKG_VERSION"),
        });
        write_json(&dir.join("meta.json"), &meta)?;
        Ok(dir)
    }

    fn target(&self) -> Result<Dataset> {
        Dataset::load(&self.dir(&["data", "target"]))
    }

    fn pretrain_corpus(&self) -> Result<Dataset> {
        Dataset::load(&self.dir(&["data", "pretrain"]))
    }

    fn model(&self, stage: &str) -> Result<Model> {
        Model::load(&self.dir(&[stage, "model"]))
    }

    fn assignment(&self) -> Result<SlotAssignment> {
        let path = self.dir(&["assign", "assignment.json"]);
        let r: AssignReport = read_json(&path)?;
        Ok(r.assignment())
    }

    /// Labeled training indices for the single-path stages.
    fn train_idx(&self, target: &Dataset) -> Result<Vec<usize>> {
        let pool = target.indices(Split::Train);
        match self.cfg.probe.train_size {
            None => Ok(pool),
            Some(n) => Ok(nested_subsets(&pool, &target.y, &[n], &mut Rng::new(self.seed, "cli/subset"))?.remove(0)),
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::format(path, e.to_string()))?;
    s.push('\n');
    write(path, &s)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn cmd_gen(ctx: &Ctx) -> Result<()> {
    let c = generate(&ctx.cfg.gen, ctx.seed)?;
    let dir = ctx.stage("data")?;
    let extra = json!({ "seed": ctx.seed, "gen": ctx.cfg.gen });
    c.pretrain.save(&dir.join("pretrain"), extra.clone())?;
    c.target.save(&dir.join("target"), extra)?;
    write_json(&dir.join("motifs.json"), &c.library)
}

fn cmd_pretrain(ctx: &Ctx) -> Result<()> {
    let corpus = ctx.pretrain_corpus()?;
    let mut model = Model::new(corpus.channels, ctx.cfg.gen.window_spec(), &ctx.cfg.model, &mut Rng::new(ctx.seed, "model"));
    let dir = ctx.stage("pretrain")?;
    let t = std::time::Instant::now();
    match pretrain(&corpus, &mut model, &ctx.cfg.pretrain, ctx.seed) {
        Ok(rep) => {
            model.save(&dir.join("model"), json!({ "stage": "pretrain", "seed": ctx.seed }))?;
            write(&dir.join("loss_curve.csv"), &rep.to_csv())?;
            write_json(&dir.join("timing.json"), &json!({ "seconds": t.elapsed().as_secs_f64() }))
        }
        Err(e) => {
            model.save(&dir.join("last_good"), json!({ "stage": "pretrain", "aborted": e.to_string() }))?;
            Err(e)
        }
    }
}

fn cmd_assign(ctx: &Ctx) -> Result<()> {
    let target = ctx.target()?;
    let model = ctx.model("pretrain")?;
    let train = ctx.train_idx(&target)?;
    let (q, a, score_s, solve_s) = lap_assign(
        &model,
        &model.bank.p,
        &target,
        &train,
        ctx.cfg.assign.per_label,
        ctx.cfg.assign.balance,
        &mut Rng::new(ctx.seed, "cli/assign/balance"),
    )?;
    let dir = ctx.stage("assign")?;
    write_json(&dir.join("assignment.json"), &AssignReport::new("lap", &a))?;
    write_json(&dir.join("scores.json"), &q)?;
    write_json(&dir.join("timing.json"), &json!({ "score_ms": score_s * 1e3, "solve_ms": solve_s * 1e3 }))
}

fn cmd_finetune(ctx: &Ctx) -> Result<()> {
    let target = ctx.target()?;
    let mut model = ctx.model("pretrain")?;
    let a = ctx.assignment()?;
    model.bank = apply(&model.bank, &a)?;
    let train = ctx.train_idx(&target)?;
    let val = target.indices(Split::Val);
    let dir = ctx.stage("finetune")?;
    match finetune(&mut model, &target, &train, &val, &a, &ctx.cfg.finetune, ctx.seed) {
        Ok(rep) => {
            model.save(&dir.join("model"), json!({ "stage": "finetune", "seed": ctx.seed }))?;
            write(&dir.join("loss_curve.csv"), &rep.to_csv())
        }
        Err(e) => {
            model.save(&dir.join("last_good"), json!({ "stage": "finetune", "aborted": e.to_string() }))?;
            Err(e)
        }
    }
}

fn cmd_project(ctx: &Ctx, tuned: bool) -> Result<()> {
    let target = ctx.target()?;
    let mut model = ctx.model(if tuned { "finetune" } else { "pretrain" })?;
    let a = ctx.assignment()?;
    model.bank = apply(&model.bank, &a)?;
    let train = ctx.train_idx(&target)?;
    let pre = match ctx.cfg.project.mode {
        crate::adapt::ProjectionMode::Pip => Some(ctx.pretrain_corpus()?),
        _ => None,
    };
    model.bank = project(&model, &model.bank, &a, &target, &train, ctx.cfg.project.mode, pre.as_ref())?;
    let dir = ctx.stage("project")?;
    model.save(
        &dir.join("model"),
        json!({ "stage": "project", "mode": ctx.cfg.project.mode, "tuned": tuned, "seed": ctx.seed }),
    )?;
    let mut csv = String::from("label,slot,prototype,corpus,sample,window\n");
    for s in &a.slots {
        let src = model.bank.records[s.prototype].source.as_ref().expect("projected slot has a source");
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.label, s.slot, s.prototype, src.corpus, src.sample, src.window
        ));
    }
    write(&dir.join("provenance.csv"), &csv)
}

fn cmd_probe(ctx: &Ctx) -> Result<()> {
    let target = ctx.target()?;
    let model = ctx.model("project")?;
    let a = ctx.assignment()?;
    let train = ctx.train_idx(&target)?;
    let a_train = slot_activations(&model, &model.bank, &a, &target, &train)?;
    let clf: Classifier = train_probe(&a_train, &target.labels_of(&train), ctx.cfg.probe.c)?;
    let test = target.indices(Split::Test);
    let z = clf.decision(&slot_activations(&model, &model.bank, &a, &target, &test)?)?;
    let (per_label, macro_auc) = macro_auroc(&z, &target.labels_of(&test))?;
    let coef = coefficient_report(&clf, &a.slot_labels())?;
    let dir = ctx.stage("probe")?;
    write_json(&dir.join("classifier.json"), &clf)?;
    write(&dir.join("coefficients.csv"), &coefficients_csv(&coef))?;
    write_json(
        &dir.join("metrics.json"),
        &json!({ "train_size": train.len(), "per_label_auroc": per_label, "macro_auroc": macro_auc }),
    )
}

fn timing_json(cells: &[(u64, crate::eval::Condition, usize, std::collections::BTreeMap<String, f64>)]) -> serde_json::Value {
    serde_json::Value::Array(
        cells
            .iter()
            .map(|(seed, c, size, rt)| json!({ "seed": seed, "condition": c, "train_size": size, "seconds": rt }))
            .collect(),
    )
}

fn cmd_eval(ctx: &Ctx) -> Result<bool> {
    let cfg = &ctx.cfg;
    let target = ctx.target()?;
    let corpus = ctx.pretrain_corpus()?;
    let model = ctx.model("pretrain")?;
    let mut cells: Vec<CellOutcome> = Vec::new();
    let mut timings = Vec::new();
    let mut collect = |run: &mut SeedRun, cells: &mut Vec<CellOutcome>| {
        for c in run_matrix(run, &cfg.eval.conditions, &cfg.eval.sizes) {
            if let Ok(r) = &c.result {
                timings.push((c.seed, c.condition, c.train_size, r.runtimes.clone()));
            }
            cells.push(c);
        }
    };
    let mut run = SeedRun::from_parts(cfg, ctx.seed, corpus, target, model)?;
    collect(&mut run, &mut cells);
    for &s in cfg.eval.extra_seeds.iter().filter(|&&s| s != ctx.seed) {
        match SeedRun::prepare(cfg, s) {
            Ok(mut r) => collect(&mut r, &mut cells),
            Err(e) => {
                for &c in &cfg.eval.conditions {
                    for &size in &cfg.eval.sizes {
                        cells.push(CellOutcome {
                            condition: c,
                            seed: s,
                            train_size: size,
                            result: Err(format!("seed preparation failed: {e}")),
                        });
                    }
                }
            }
        }
    }
    let dir = ctx.stage("eval")?;
    write(&dir.join("matrix.csv"), &matrix_csv(&cells))?;
    let summary = summarize(&cells);
    write_json(&dir.join("summary.json"), &summary)?;
    write(&dir.join("efficiency.tsv"), &efficiency_tsv(&summary))?;
    write_json(&dir.join("timing.json"), &timing_json(&timings))?;
    let failed: Vec<String> = cells
        .iter()
        .filter_map(|c| {
            c.result
                .as_ref()
                .err()
                .map(|e| format!("{} size {} seed {}: {e}", c.condition.name(), c.train_size, c.seed))
        })
        .collect();
    for f in &failed {
        eprintln!("cell failed: {f}");
    }
    Ok(failed.is_empty())
}

fn cmd_bench(ctx: &Ctx) -> Result<()> {
    let b = &ctx.cfg.bench;
    let rows = bench_assign(b.prototypes, b.labels, b.per_label, b.samples, b.dim, b.replicates, &b.pool, ctx.seed)?;
    let dir = ctx.stage("bench")?;
    let objectives: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| json!({ "replicate": r.replicate, "lap_objective": r.lap_objective, "assigned": r.assigned }))
        .collect();
    write_json(&dir.join("result.json"), &objectives)?;
    write(&dir.join("timing.csv"), &bench_csv(&rows))
}

fn report_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("condition,train_size,seeds,failed,mean_macro_auroc,mean_ci_lo,mean_ci_hi\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.condition.name(),
            r.train_size,
            r.seeds,
            r.failed,
            r.mean_macro_auroc,
            r.mean_ci_lo,
            r.mean_ci_hi
        ));
    }
    s
}

fn cmd_report(ctx: &Ctx) -> Result<()> {
    let cells = parse_matrix_csv(&read_text(&ctx.dir(&["eval", "matrix.csv"]))?)?;
    let summary = summarize(&cells);
    let bench = ctx.dir(&["bench", "timing.csv"]);
    let dir = ctx.stage("report")?;
    write(&dir.join("report.csv"), &report_csv(&summary))?;
    write(&dir.join("efficiency.tsv"), &efficiency_tsv(&summary))?;
    let ratios: Vec<f64> = cells
        .iter()
        .filter_map(|c| c.result.as_ref().ok())
        .filter(|r| r.condition == crate::eval::Condition::ProtosslProbe)
        .filter_map(|r| r.coef_ratio)
        .collect();
    let (k, n, p) = crate::adapt::sign_test(&ratios);
    write_json(
        &dir.join("summary.json"),
        &json!({ "cells": cells.len(), "coefficient_sign_test": { "above_one": k, "trials": n, "p_value": p } }),
    )?;
    if bench.exists() {
        fs::copy(&bench, dir.join("bench_timing.csv")).map_err(|e| Error::io(&bench, e))?;
    }
    Ok(())
}

fn dispatch(cmd: &Command, ctx: &Ctx) -> Result<bool> {
    match cmd {
        Command::Gen(_) => cmd_gen(ctx).map(|_| true),
        Command::Pretrain(_) => cmd_pretrain(ctx).map(|_| true),
        Command::Assign(_) => cmd_assign(ctx).map(|_| true),
        Command::Finetune(_) => cmd_finetune(ctx).map(|_| true),
        Command::Project { tuned, .. } => cmd_project(ctx, *tuned).map(|_| true),
        Command::Probe(_) => cmd_probe(ctx).map(|_| true),
        Command::Eval(_) => cmd_eval(ctx),
        Command::BenchAssign(_) => cmd_bench(ctx).map(|_| true),
        Command::Report(_) => cmd_report(ctx).map(|_| true),
    }
}

/// Parses arguments, runs one subcommand and maps failures to exit codes.
pub fn run(args: impl IntoIterator<Item = String>) -> ExitCode {
    let args: Vec<String> = args.into_iter().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let common = cli.command.common().clone();
    let cfg = match &common.config {
        Some(p) => PipelineConfig::load(p),
        None => PipelineConfig::default().validate().map(|_| PipelineConfig::default()),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let ctx = Ctx {
        cfg,
        seed: common.seed,
        out: common.out,
        command: format!("{} --seed {}", cli.command.name(), common.seed),
    };
    match dispatch(&cli.command, &ctx) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
