//! Acceptance run: one PASS/FAIL line per criterion. The exit status is
//! non-zero on any failure only when `ACCEPTANCE_STRICT` is set, so a plain
//! `cargo test` still runs every other target and shows the report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use protossl::adapt::{cooccurrence, project, sup_losses, ProjectionMode, SlotLayout, SupLossWeights};
use protossl::assign::{apply, score, solve_lap};
use protossl::autodiff::gradcheck::{max_relative_error, FD_STEP};
use protossl::autodiff::{Graph, Var};
use protossl::config::PipelineConfig;
use protossl::datagen::{generate, Split};
use protossl::eval::{bench_assign, Condition, SeedRun};
use protossl::numcore::{cosine_sim, Mat, Rng};
use protossl::protomodel::{patch_embed, Model};
use protossl::ssl::{koleo, nt_xent};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, bad: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad)
    }
}

// ---------------------------------------------------------------- A1

fn brute_force(q: &Mat, m: usize) -> f64 {
    fn go(q: &Mat, m: usize, slot: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        let slots = q.cols() * m;
        if slot == slots {
            *best = best.max(acc);
            return;
        }
        let label = slot / m;
        for k in 0..q.rows() {
            if !used[k] {
                used[k] = true;
                go(q, m, slot + 1, used, acc + q[(k, label)], best);
                used[k] = false;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(q, m, 0, &mut vec![false; q.rows()], 0.0, &mut best);
    best
}

fn a1() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(1, "acceptance/a1");
    let mut n = 0;
    while n < 500 {
        let k = 4 + rng.below(5);
        let l = 1 + rng.below(3);
        let m = 1 + rng.below(2);
        if l * m > k {
            continue;
        }
        // integer-valued scores make exact equality meaningful and create ties
        let q = Mat::from_vec(k, l, (0..k * l).map(|_| rng.below(7) as f64 - 3.0).collect()).unwrap();
        let a = solve_lap(&q, m).map_err(|e| e.to_string())?;
        let bf = brute_force(&q, m);
        if a.objective != bf {
            return Err(format!("instance {n}: objective {} vs brute force {bf}", a.objective));
        }
        let recomputed: f64 = a.slots.iter().map(|s| q[(s.prototype, s.label)]).sum();
        let mut protos = a.prototypes();
        protos.sort_unstable();
        protos.dedup();
        if recomputed != bf || protos.len() != l * m || (0..l).any(|lab| a.prototypes_for(lab).len() != m) {
            return Err(format!("instance {n}: coverage or injectivity violated"));
        }
        n += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 5.0, format!("500 instances exact, {secs:.2}s"), format!("too slow: {secs:.2}s"))
}

// ---------------------------------------------------------------- A2

const GRAD_TOL: f64 = 1e-4;
const KINK: f64 = 1e-4;

fn rmat(rng: &mut Rng, r: usize, c: usize) -> Mat {
    Mat::from_vec(r, c, (0..r * c).map(|_| rng.uniform_range(-1.5, 1.5)).collect()).unwrap()
}

fn weighted(g: &mut Graph, x: Var) -> protossl::Result<Var> {
    let (r, c) = g.value(x).shape();
    let w = Mat::from_vec(r, c, (0..r * c).map(|i| 0.3 + 0.17 * i as f64).collect()).unwrap();
    let y = g.mul_const(x, w)?;
    Ok(g.sum(y))
}

fn row_gap(m: &Mat, seg: usize) -> f64 {
    let mut gap = f64::INFINITY;
    for r in 0..m.rows() {
        for chunk in m.row(r).chunks(seg) {
            let mut v = chunk.to_vec();
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if v.len() > 1 {
                gap = gap.min(v[0] - v[1]);
            }
        }
    }
    gap
}

type Gen = Box<dyn Fn(&mut Rng) -> Option<Vec<Mat>>>;
type Fwd = Box<dyn Fn(&mut Graph, &[Var]) -> protossl::Result<Var>>;

fn suite() -> Vec<(&'static str, Gen, Fwd)> {
    let y3 = Mat::from_rows(&[[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]);
    let layout = SlotLayout { labels: 3, per_label: 2 };
    let cooc = cooccurrence(&y3);
    let same_label_clear = |p: &Mat| {
        (0..3).all(|l| {
            let c = cosine_sim(p.row(2 * l), p.row(2 * l + 1)).unwrap();
            (c - 0.3).abs() > KINK
        })
    };
    let sup_gen = move |r: &mut Rng| {
        let s = rmat(r, 4, 6);
        let p = rmat(r, 6, 3);
        let ok = row_gap(&s, 2) > KINK && s.as_slice().iter().all(|v| v.abs() > KINK) && same_label_clear(&p);
        ok.then(|| vec![s, p, rmat(r, 6, 3), rmat(r, 1, 3)])
    };
    let sup = |which: usize, y: Mat, layout: SlotLayout, cooc: Mat| -> Fwd {
        Box::new(move |g, v| {
            let parts = sup_losses(g, v[0], v[1], v[2], v[3], &y, &layout, &cooc, &SupLossWeights::default())?;
            Ok([parts.ce, parts.clst, parts.sep, parts.div, parts.cntrst, parts.total][which])
        })
    };
    let any = |r: usize, c: usize| -> Gen { Box::new(move |g| Some(vec![rmat(g, r, c)])) };
    let mut s: Vec<(&'static str, Gen, Fwd)> = vec![
        ("matmul", Box::new(|r| Some(vec![rmat(r, 3, 4), rmat(r, 4, 2)])), Box::new(|g, v| {
            let y = g.matmul(v[0], v[1])?;
            weighted(g, y)
        })),
        ("matmul_t", Box::new(|r| Some(vec![rmat(r, 3, 4), rmat(r, 2, 4)])), Box::new(|g, v| {
            let y = g.matmul_t(v[0], v[1])?;
            weighted(g, y)
        })),
        ("add/sub/mul", Box::new(|r| Some(vec![rmat(r, 3, 3), rmat(r, 3, 3)])), Box::new(|g, v| {
            let a = g.add(v[0], v[1])?;
            let b = g.sub(v[0], v[1])?;
            let y = g.mul(a, b)?;
            weighted(g, y)
        })),
        ("add_row/scale", Box::new(|r| Some(vec![rmat(r, 4, 3), rmat(r, 1, 3)])), Box::new(|g, v| {
            let y = g.add_row(v[0], v[1])?;
            let y = g.scale(y, -0.7);
            weighted(g, y)
        })),
        ("add_const/mul_const", any(3, 2), Box::new(|g, v| {
            let y = g.add_const(v[0], &Mat::filled(3, 2, 0.4))?;
            let y = g.mul_const(y, Mat::filled(3, 2, -1.3))?;
            weighted(g, y)
        })),
        ("relu", Box::new(|r| {
            let m = rmat(r, 3, 4);
            m.as_slice().iter().all(|x| x.abs() > KINK).then(|| vec![m])
        }), Box::new(|g, v| {
            let y = g.relu(v[0]);
            weighted(g, y)
        })),
        ("row_l2_normalize", any(3, 4), Box::new(|g, v| {
            let y = g.row_l2_normalize(v[0]);
            weighted(g, y)
        })),
        ("cosine_sim_matrix", Box::new(|r| Some(vec![rmat(r, 3, 4), rmat(r, 5, 4)])), Box::new(|g, v| {
            let y = g.cosine_sim_matrix(v[0], v[1])?;
            weighted(g, y)
        })),
        ("rowwise_max", Box::new(|r| {
            let m = rmat(r, 3, 4);
            (row_gap(&m, 4) > KINK).then(|| vec![m])
        }), Box::new(|g, v| {
            let y = g.rowwise_max(v[0]);
            weighted(g, y)
        })),
        ("segment_max", Box::new(|r| {
            let m = rmat(r, 6, 3);
            (row_gap(&m.transpose(), 3) > KINK).then(|| vec![m])
        }), Box::new(|g, v| {
            let y = g.segment_max(v[0], 3)?;
            weighted(g, y)
        })),
        ("logsumexp", any(3, 4), Box::new(|g, v| {
            let y = g.logsumexp(v[0]);
            weighted(g, y)
        })),
        ("sigmoid/exp", any(3, 3), Box::new(|g, v| {
            let a = g.sigmoid(v[0]);
            let b = g.exp(v[0]);
            let y = g.add(a, b)?;
            weighted(g, y)
        })),
        ("log/sqrt", Box::new(|r| {
            Some(vec![Mat::from_vec(3, 3, (0..9).map(|_| r.uniform_range(0.2, 2.0)).collect()).unwrap()])
        }), Box::new(|g, v| {
            let a = g.log(v[0]);
            let b = g.sqrt(v[0]);
            let y = g.add(a, b)?;
            weighted(g, y)
        })),
        ("square", any(3, 3), Box::new(|g, v| {
            let y = g.square(v[0]);
            weighted(g, y)
        })),
        ("clamp_min", Box::new(|r| {
            let m = rmat(r, 3, 4);
            m.as_slice().iter().all(|x| (x - 0.1).abs() > KINK).then(|| vec![m])
        }), Box::new(|g, v| {
            let y = g.clamp_min(v[0], 0.1);
            weighted(g, y)
        })),
        ("mean", any(3, 4), Box::new(|g, v| {
            let y = g.square(v[0]);
            Ok(g.mean(y))
        })),
        ("row_sum", any(3, 4), Box::new(|g, v| {
            let y = g.row_sum(v[0]);
            weighted(g, y)
        })),
        ("pick", any(3, 4), Box::new(|g, v| {
            let y = g.pick(v[0], vec![2, 0, 3])?;
            weighted(g, y)
        })),
        ("select_rows", any(3, 4), Box::new(|g, v| {
            let y = g.select_rows(v[0], vec![2, 0, 2, 1])?;
            weighted(g, y)
        })),
        ("transpose", any(3, 4), Box::new(|g, v| {
            let y = g.transpose(v[0]);
            weighted(g, y)
        })),
        ("softmax_rows", any(3, 4), Box::new(|g, v| {
            let y = g.softmax_rows(v[0]);
            weighted(g, y)
        })),
        ("bce_with_logits", any(4, 3), Box::new(|g, v| {
            let t = Mat::from_rows(&[[1.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]]);
            g.bce_with_logits(v[0], &t)
        })),
        ("nt_xent", any(6, 4), Box::new(|g, v| nt_xent(g, v[0], 0.3))),
        ("koleo", Box::new(|r| {
            let p = rmat(r, 5, 3);
            let n = Mat::from_rows(&(0..5).map(|i| {
                let row = p.row(i);
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                row.iter().map(|x| x / norm).collect::<Vec<_>>()
            }).collect::<Vec<_>>());
            let mut d = n.matmul_t(&n).unwrap();
            for i in 0..5 {
                d[(i, i)] = f64::NEG_INFINITY;
            }
            (row_gap(&d, 5) > KINK).then(|| vec![p])
        }), Box::new(|g, v| koleo(g, v[0]))),
    ];
    for (i, name) in ["ce", "clst", "sep", "div", "cntrst", "sup_total"].into_iter().enumerate() {
        s.push((name, Box::new(sup_gen), sup(i, y3.clone(), layout.clone(), cooc.clone())));
    }
    s
}

fn a2() -> Outcome {
    let mut worst = 0.0f64;
    let mut names = 0;
    for (name, gen, f) in suite() {
        let mut rng = Rng::new(2, &format!("acceptance/a2/{name}"));
        let (mut done, mut tries) = (0, 0);
        while done < 20 {
            tries += 1;
            if tries > 2000 {
                return Err(format!("{name}: no kink-free instances"));
            }
            let Some(inputs) = gen(&mut rng) else { continue };
            let err = max_relative_error(&inputs, FD_STEP, |g, v| f(g, v)).map_err(|e| format!("{name}: {e}"))?;
            if err > GRAD_TOL {
                return Err(format!("{name}: relative error {err:e} on instance {done}"));
            }
            worst = worst.max(err);
            done += 1;
        }
        names += 1;
    }
    Ok(format!("{names} ops/losses x 20 instances, worst relative error {worst:.1e}"))
}

// ---------------------------------------------------------------- A3

fn a3() -> Outcome {
    let mut g = Graph::new();
    let z = g.constant(Mat::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]));
    let nt = nt_xent(&mut g, z, 0.5).map_err(|e| e.to_string())?;
    let e2 = 2.0f64.exp();
    let nt_expect = -(e2 / (e2 + 2.0)).ln();
    let p = g.constant(Mat::from_rows(&[[1.0, 0.0], [0.0, 1.0]]));
    let ko = koleo(&mut g, p).map_err(|e| e.to_string())?;
    let ko_expect = -(2.0f64.sqrt()).ln();
    let (dn, dk) = ((g.scalar(nt) - nt_expect).abs(), (g.scalar(ko) - ko_expect).abs());
    check(
        dn <= 1e-9 && dk <= 1e-9,
        format!("NT-Xent {:.9} (err {dn:.1e}), KoLeo {:.9} (err {dk:.1e})", g.scalar(nt), g.scalar(ko)),
        format!("NT-Xent err {dn:e}, KoLeo err {dk:e}"),
    )
}

// ---------------------------------------------------------------- A4

fn a4() -> Outcome {
    let col = |v: &[f64]| Mat::column(v);
    let hand = score(&col(&[0.9, 1.1, 0.1, -0.1]), &col(&[1.0, 1.0, 0.0, 0.0]), false, &mut Rng::new(0, "a4"))
        .map_err(|e| e.to_string())?;
    // the variance floor ε=1e-8 sits inside the root, so the exact value is 1/√(0.01+ε)
    let expect = 1.0 / (0.01f64 + 1e-8).sqrt();
    let hand_err = (hand.q[(0, 0)] - expect).abs();
    if hand_err > 1e-12 {
        return Err(format!("hand example {} vs {expect}", hand.q[(0, 0)]));
    }
    let mut rng = Rng::new(4, "acceptance/a4");
    let mut worst_affine = 0.0f64;
    for i in 0..100 {
        let n = 20 + rng.below(40);
        let y: Vec<f64> = (0..n).map(|r| (r % 3 == 0) as u8 as f64).collect();
        let a: Vec<f64> = y.iter().map(|&v| rng.normal() + 0.8 * v).collect();
        let alpha = rng.uniform_range(0.5, 2.0);
        let beta = rng.uniform_range(-1.0, 1.0);
        let b: Vec<f64> = a.iter().map(|x| alpha * x + beta).collect();
        let q1 = score(&col(&a), &col(&y), false, &mut rng).map_err(|e| e.to_string())?;
        let q2 = score(&col(&b), &col(&y), false, &mut rng).map_err(|e| e.to_string())?;
        // first-order effect of ε on an exactly invariant ratio
        let v = 0.5 * (q1.pos_var[(0, 0)] + q1.neg_var[(0, 0)]);
        let eps_shift = q1.q[(0, 0)].abs() * 1e-8 * (1.0 - alpha.powi(-2)).abs() / (2.0 * v);
        let d = (q1.q[(0, 0)] - q2.q[(0, 0)]).abs();
        if d > 1e-9 + eps_shift {
            return Err(format!("instance {i}: affine change moved Q by {d:e}"));
        }
        worst_affine = worst_affine.max(d);
        // same values on both sides: zero numerator
        let half: Vec<f64> = (0..n / 2).map(|_| rng.normal()).collect();
        let same: Vec<f64> = half.iter().chain(half.iter()).copied().collect();
        let ys: Vec<f64> = (0..same.len()).map(|r| (r < half.len()) as u8 as f64).collect();
        let qz = score(&col(&same), &col(&ys), false, &mut rng).map_err(|e| e.to_string())?;
        if qz.q[(0, 0)].abs() > 1e-12 {
            return Err(format!("instance {i}: zero numerator gave {}", qz.q[(0, 0)]));
        }
    }
    Ok(format!("hand example err {hand_err:.1e}; 100 affine and zero-numerator instances (max affine shift {worst_affine:.1e})"))
}

// ---------------------------------------------------------------- A5

fn a5() -> Outcome {
    let cfg = PipelineConfig::from_json(r#"{"gen":{"pretrain_groups":10,"train":256,"val":20,"test":20},"model":{"num_prototypes":40},"eval":{"sizes":[256]}}"#)
        .map_err(|e| e.to_string())?;
    let c = generate(&cfg.gen, 9).map_err(|e| e.to_string())?;
    let model = Model::new(c.target.channels, cfg.gen.window_spec(), &cfg.model, &mut Rng::new(9, "model"));
    let train = c.target.indices(Split::Train);
    let q = score(
        &protossl::protomodel::activations(&model, &model.bank.p, &c.target, &train).map_err(|e| e.to_string())?.a,
        &c.target.labels_of(&train),
        true,
        &mut Rng::new(9, "b"),
    )
    .map_err(|e| e.to_string())?;
    let a = solve_lap(&q.q, 3).map_err(|e| e.to_string())?;
    let bank = apply(&model.bank, &a).map_err(|e| e.to_string())?;
    let grounded = project(&model, &bank, &a, &c.target, &train, ProjectionMode::LabelSupervised, None).map_err(|e| e.to_string())?;
    let spec = model.window;
    let mut checked = 0usize;
    for s in &a.slots {
        let src = grounded.records[s.prototype].source.as_ref().ok_or("slot without provenance")?;
        if c.target.y[(src.sample, s.label)] < 0.5 {
            return Err(format!("slot {:?} grounded on a negative sample", (s.label, s.slot)));
        }
        let emb = patch_embed(&model.encoder, c.target.sample(src.sample), c.target.channels, spec).map_err(|e| e.to_string())?;
        if emb.row(src.window) != grounded.p.row(s.prototype) {
            return Err(format!("slot {:?} is not bit-equal to its source window", (s.label, s.slot)));
        }
        let before = bank.p.row(s.prototype);
        let chosen = cosine_sim(emb.row(src.window), before).map_err(|e| e.to_string())?;
        for &n in train.iter().filter(|&&n| c.target.y[(n, s.label)] > 0.5) {
            let e = patch_embed(&model.encoder, c.target.sample(n), c.target.channels, spec).map_err(|e| e.to_string())?;
            for w in 0..e.rows() {
                if cosine_sim(e.row(w), before).map_err(|e| e.to_string())? > chosen {
                    return Err(format!("window ({n},{w}) beats the chosen source for slot {:?}", (s.label, s.slot)));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{} slots grounded exactly; {checked} positive windows checked", a.len()))
}

// ---------------------------------------------------------------- A8

fn a8() -> Outcome {
    let cfg = PipelineConfig::default();
    let b = &cfg.bench;
    let rows = bench_assign(1000, 12, 14, 10000, 32, 5, &b.pool, 8).map_err(|e| e.to_string())?;
    let detail: Vec<String> = rows.iter().map(|r| format!("{:.2}s/{:.2}s", r.lap_total(), r.pool_seconds)).collect();
    let ok = rows.len() == 5 && rows.iter().all(|r| r.lap_total() < 5.0 && r.lap_total() < r.pool_seconds);
    check(
        ok,
        format!("score+LAP vs pool per replicate: {}", detail.join(", ")),
        format!("score+LAP vs pool per replicate: {}", detail.join(", ")),
    )
}

// ---------------------------------------------------------------- A6 A7 A9 A10

#[derive(Default)]
struct SeedNumbers {
    probe: f64,
    probe64: f64,
    tuned: f64,
    random: f64,
    ratio: f64,
    lap_full: f64,
    pit_full: f64,
    seconds: f64,
}

fn seed_numbers(cfg: &PipelineConfig, seed: u64, full: bool) -> Result<SeedNumbers, String> {
    let start = Instant::now();
    let mut run = SeedRun::prepare(cfg, seed).map_err(|e| e.to_string())?;
    let top = cfg.eval.sizes[0];
    let probe = run.run(Condition::ProtosslProbe, top).map_err(|e| e.to_string())?;
    let mut out = SeedNumbers {
        probe: probe.report.macro_auroc,
        ratio: probe.report.coef_ratio.ok_or("no coefficient ratio")?,
        ..Default::default()
    };
    if full {
        // every condition at every size, as the eval subcommand would run it
        for &c in &cfg.eval.conditions {
            for &size in &cfg.eval.sizes {
                let r = run.run(c, size).map_err(|e| format!("{} @{size}: {e}", c.name()))?;
                match (c, size) {
                    (Condition::ProtosslTuned, s) if s == top => out.tuned = r.report.macro_auroc,
                    (Condition::RandomAssign, s) if s == top => out.random = r.report.macro_auroc,
                    (Condition::ProtosslProbe, 64) => out.probe64 = r.report.macro_auroc,
                    _ => {}
                }
            }
        }
        out.seconds = start.elapsed().as_secs_f64();
        let per_label = cfg.model.num_prototypes / cfg.gen.labels;
        out.lap_full = run.run_with(Condition::ProtosslProbe, top, per_label).map_err(|e| e.to_string())?.report.macro_auroc;
        out.pit_full = run.run_with(Condition::Pit, top, per_label).map_err(|e| e.to_string())?.report.macro_auroc;
    }
    Ok(out)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn pipeline_criteria() -> Vec<(&'static str, Outcome)> {
    let cfg = PipelineConfig::default();
    let mut seeds = Vec::new();
    for seed in 0..10u64 {
        match seed_numbers(&cfg, seed, seed < 5) {
            Ok(n) => seeds.push(n),
            Err(e) => {
                let msg = format!("seed {seed} failed: {e}");
                return ["A6", "A7", "A9", "A10"].into_iter().map(|id| (id, Err(msg.clone()))).collect();
            }
        }
    }
    let five = &seeds[..5];
    let probe = mean(five.iter().map(|s| s.probe));
    let tuned = mean(five.iter().map(|s| s.tuned));
    let random = mean(five.iter().map(|s| s.random));
    let slowest = five.iter().map(|s| s.seconds).fold(0.0, f64::max);
    let a6_text = format!(
        "tuned {tuned:.3}, probe {probe:.3}, random {random:.3}, probe-random {:.3}, slowest seed {slowest:.0}s",
        probe - random
    );
    let a6 = check(tuned >= probe && probe > random && probe - random >= 0.05 && slowest < 300.0, a6_text.clone(), a6_text);

    let p64 = mean(five.iter().map(|s| s.probe64));
    let kept = p64 / probe;
    let a7_text = format!("AUROC at 64 {p64:.3} vs 1024 {probe:.3}: {:.1}% retained", 100.0 * kept);
    let a7 = check(kept >= 0.9, a7_text.clone(), a7_text);

    let above = seeds.iter().filter(|s| s.ratio > 1.0).count();
    let ratios: Vec<String> = seeds.iter().map(|s| format!("{:.3}", s.ratio)).collect();
    let a9_text = format!("{above}/10 seeds above 1 ({})", ratios.join(" "));
    let a9 = check(above >= 9, a9_text.clone(), a9_text);

    let lap = mean(five.iter().map(|s| s.lap_full));
    let pit = mean(five.iter().map(|s| s.pit_full));
    let a10_text = format!("label-supervised {lap:.3} vs PIT {pit:.3}, |diff| {:.3}", (lap - pit).abs());
    let a10 = check((lap - pit).abs() <= 0.05, a10_text.clone(), a10_text);
    vec![("A6", a6), ("A7", a7), ("A9", a9), ("A10", a10)]
}

// ---------------------------------------------------------------- A11

const STAGES: [&str; 9] = ["gen", "pretrain", "assign", "finetune", "project", "probe", "eval", "bench-assign", "report"];

fn run_pipeline(config: &Path, out: &Path) -> Result<f64, String> {
    let start = Instant::now();
    for stage in STAGES {
        let o = Command::new(env!("CARGO_BIN_EXE_protossl"))
            .args([stage, "--config", config.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()])
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{stage} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
        }
    }
    Ok(start.elapsed().as_secs_f64())
}

fn artifacts(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn is_timing(p: &Path) -> bool {
    p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("timing")) || p.ends_with("report/bench_timing.csv")
}

fn a11() -> Outcome {
    let smoke = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = run_pipeline(&smoke, &tmp.path().join("a"))?;
    run_pipeline(&smoke, &tmp.path().join("b"))?;
    let a = artifacts(&tmp.path().join("a"));
    let b = artifacts(&tmp.path().join("b"));
    let dirs_missing_meta: Vec<String> = ["data", "pretrain", "assign", "finetune", "project", "probe", "eval", "bench", "report"]
        .iter()
        .filter(|d| !a.contains_key(&Path::new(d).join("config.json")) || !a.contains_key(&Path::new(d).join("meta.json")))
        .map(|d| d.to_string())
        .collect();
    if !dirs_missing_meta.is_empty() {
        return Err(format!("missing config.json/meta.json in {}", dirs_missing_meta.join(", ")));
    }
    if a.keys().collect::<Vec<_>>() != b.keys().collect::<Vec<_>>() {
        return Err("reruns produced different file sets".into());
    }
    let differing: Vec<String> = a
        .iter()
        .filter(|(p, bytes)| !is_timing(p) && b[*p] != **bytes)
        .map(|(p, _)| p.display().to_string())
        .collect();
    let compared = a.keys().filter(|p| !is_timing(p)).count();
    if !differing.is_empty() {
        return Err(format!("differing artifacts: {}", differing.join(", ")));
    }
    check(
        first < 60.0,
        format!("{compared} artifacts byte-identical across reruns; smoke pipeline {first:.1}s"),
        format!("smoke pipeline took {first:.1}s"),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![("A1", a1()), ("A2", a2()), ("A3", a3()), ("A4", a4()), ("A5", a5())];
    results.push(("A8", a8()));
    results.push(("A11", a11()));
    results.extend(pipeline_criteria());
    results.sort_by_key(|(id, _)| id[1..].parse::<u32>().unwrap());
    let mut failed = 0;
    for (id, r) in &results {
        match r {
            Ok(msg) => println!("{id} PASS {msg}"),
            Err(msg) => {
                failed += 1;
                println!("{id} FAIL {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
