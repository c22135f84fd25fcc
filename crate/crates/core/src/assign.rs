//! Training-free alignment of a prototype bank to downstream labels, and the
//! gradient-trained pool mapping it is compared against.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamW, Graph};
use crate::error::{Error, Result};
use crate::numcore::{Mat, Rng, EPS};
use crate::protomodel::PrototypeBank;

/// Resampling replicates averaged when class balancing is on.
pub const BALANCE_REPLICATES: usize = 8;

/// Prototype/label effect sizes with the statistics they were built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    /// `K×L`
    pub q: Mat,
    pub pos_mean: Mat,
    pub neg_mean: Mat,
    pub pos_var: Mat,
    pub neg_var: Mat,
    /// 0 when balancing is off.
    pub replicates: usize,
}

fn column_stats(a: &Mat, rows: &[usize], weights: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let k = a.cols();
    let mut s1 = vec![0.0; k];
    let mut s2 = vec![0.0; k];
    let mut total = 0.0;
    for (i, &r) in rows.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        total += w;
        for ((a1, a2), &x) in s1.iter_mut().zip(s2.iter_mut()).zip(a.row(r)) {
            *a1 += w * x;
            *a2 += w * x * x;
        }
    }
    let mean: Vec<f64> = s1.iter().map(|s| s / total).collect();
    let var = s2
        .iter()
        .zip(&mean)
        .map(|(s, m)| (s / total - m * m).max(0.0))
        .collect();
    (mean, var)
}

/// Effect size of every prototype's activation for every label:
/// `(mean⁺ − mean⁻) / sqrt(½(var⁺ + var⁻) + ε)` with population variances.
///
/// With `balance`, the majority side of each label is drawn with replacement
/// down to the minority count, [`BALANCE_REPLICATES`] times, and the four
/// statistics are averaged over replicates before forming `q`.
pub fn score(a: &Mat, y: &Mat, balance: bool, rng: &mut Rng) -> Result<ScoreMatrix> {
    if a.rows() != y.rows() {
        return Err(Error::Shape {
            op: "score",
            left: a.shape(),
            right: y.shape(),
        });
    }
    if !a.all_finite() {
        return Err(Error::NonFinite("activation matrix".into()));
    }
    let (k, l) = (a.cols(), y.cols());
    let mut out = ScoreMatrix {
        q: Mat::zeros(k, l),
        pos_mean: Mat::zeros(k, l),
        neg_mean: Mat::zeros(k, l),
        pos_var: Mat::zeros(k, l),
        neg_var: Mat::zeros(k, l),
        replicates: if balance { BALANCE_REPLICATES } else { 0 },
    };
    for label in 0..l {
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..a.rows()).partition(|&n| y[(n, label)] > 0.5);
        if pos.is_empty() {
            return Err(Error::SingleClass { label, missing: "positive" });
        }
        if neg.is_empty() {
            return Err(Error::SingleClass { label, missing: "negative" });
        }
        let (pm, pv, nm, nv) = if !balance || pos.len() == neg.len() {
            let (pm, pv) = column_stats(a, &pos, None);
            let (nm, nv) = column_stats(a, &neg, None);
            (pm, pv, nm, nv)
        } else {
            let pos_is_minority = pos.len() < neg.len();
            let (minority, majority) = if pos_is_minority { (&pos, &neg) } else { (&neg, &pos) };
            let (min_m, min_v) = column_stats(a, minority, None);
            let mut maj_m = vec![0.0; k];
            let mut maj_v = vec![0.0; k];
            let mut counts = vec![0.0; majority.len()];
            for _ in 0..BALANCE_REPLICATES {
                counts.iter_mut().for_each(|c| *c = 0.0);
                for _ in 0..minority.len() {
                    counts[rng.below(majority.len())] += 1.0;
                }
                let (m, v) = column_stats(a, majority, Some(&counts));
                for j in 0..k {
                    maj_m[j] += m[j] / BALANCE_REPLICATES as f64;
                    maj_v[j] += v[j] / BALANCE_REPLICATES as f64;
                }
            }
            if pos_is_minority {
                (min_m, min_v, maj_m, maj_v)
            } else {
                (maj_m, maj_v, min_m, min_v)
            }
        };
        for j in 0..k {
            out.pos_mean[(j, label)] = pm[j];
            out.neg_mean[(j, label)] = nm[j];
            out.pos_var[(j, label)] = pv[j];
            out.neg_var[(j, label)] = nv[j];
            out.q[(j, label)] = (pm[j] - nm[j]) / (0.5 * (pv[j] + nv[j]) + EPS).sqrt();
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub label: usize,
    pub slot: usize,
    pub prototype: usize,
    /// Score of the chosen cell.
    pub q: f64,
}

/// Injective map from `(label, slot)` pairs to prototypes, in slot order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotAssignment {
    pub labels: usize,
    pub per_label: usize,
    pub slots: Vec<Slot>,
    pub objective: f64,
}

impl SlotAssignment {
    fn from_columns(q_slots: &Mat, labels: usize, per_label: usize, cols: &[usize]) -> Self {
        let slots: Vec<Slot> = cols
            .iter()
            .enumerate()
            .map(|(i, &k)| Slot {
                label: i / per_label,
                slot: i % per_label,
                prototype: k,
                q: q_slots[(k, i)],
            })
            .collect();
        let objective = slots.iter().map(|s| s.q).sum();
        SlotAssignment {
            labels,
            per_label,
            slots,
            objective,
        }
    }

    /// Prototype indices in `(label, slot)` order.
    pub fn prototypes(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.prototype).collect()
    }

    /// Prototype indices serving `label`.
    pub fn prototypes_for(&self, label: usize) -> Vec<usize> {
        self.slots.iter().filter(|s| s.label == label).map(|s| s.prototype).collect()
    }

    /// Label of each slot, in slot order.
    pub fn slot_labels(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.label).collect()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

fn check_capacity(k: usize, labels: usize, per_label: usize) -> Result<()> {
    if per_label == 0 {
        return Err(Error::Config {
            path: "assign.per_label".into(),
            msg: "must be >= 1".into(),
        });
    }
    if k < labels * per_label {
        return Err(Error::Capacity {
            labels,
            per_label,
            slots: labels * per_label,
            prototypes: k,
        });
    }
    Ok(())
}

/// Minimum-cost assignment of every row of `cost` (`n×m`, `n ≤ m`) to a
/// distinct column by shortest augmenting paths. Returns the column of each
/// row and the row and column potentials.
fn hungarian(cost: &[Vec<f64>], m: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = &cost[i0 - 1];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            col_of[owner[j] - 1] = j - 1;
        }
    }
    (col_of, u[1..].to_vec(), v[1..].to_vec())
}

/// Optimal columns for rows `free` of `cost` using only columns `avail`.
fn solve_restricted(cost: &[Vec<f64>], free: &[usize], avail: &[usize]) -> Vec<usize> {
    let sub: Vec<Vec<f64>> = free
        .iter()
        .map(|&i| avail.iter().map(|&j| cost[i][j]).collect())
        .collect();
    let (cols, _, _) = hungarian(&sub, avail.len());
    cols.into_iter().map(|c| avail[c]).collect()
}

fn total(cost: &[Vec<f64>], cols: &[usize]) -> f64 {
    cols.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Maximum-weight injective map of the columns of `q_slots` (`K×n`) onto its
/// rows. Among optimal maps the lexicographically smallest row vector in
/// column order is returned.
fn max_assignment(q_slots: &Mat) -> Vec<usize> {
    let (k, n) = q_slots.shape();
    if n == 0 {
        return Vec::new();
    }
    let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..k).map(|j| -q_slots[(j, i)]).collect()).collect();
    let (mut cols, u, v) = hungarian(&cost, k);
    // runs of identical columns are interchangeable; order their rows first
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && cost[end] == cost[start] {
            end += 1;
        }
        cols[start..end].sort_unstable();
        start = end;
    }
    let best = total(&cost, &cols);
    let scale = cost.iter().flatten().fold(1.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-12 * scale * n as f64;

    // Every edge of every optimal map is tight against the optimal duals, so
    // only tight edges can improve the lexicographic order.
    let tight = |i: usize, j: usize| cost[i][j] - u[i] - v[j] <= tol;
    let mut taken = vec![false; k];
    for i in 0..n {
        let candidates: Vec<usize> = (0..cols[i]).filter(|&j| !taken[j] && tight(i, j)).collect();
        for j in candidates {
            let mut prefix = cols[..i].to_vec();
            prefix.push(j);
            let free: Vec<usize> = (i + 1..n).collect();
            let avail: Vec<usize> = (0..k).filter(|c| !prefix.contains(c)).collect();
            let rest = solve_restricted(&cost, &free, &avail);
            let trial: Vec<usize> = prefix.into_iter().chain(rest).collect();
            if total(&cost, &trial) <= best + tol {
                cols = trial;
                break;
            }
        }
        taken[cols[i]] = true;
    }
    cols
}

/// Exact maximum of `Σ q` over injective maps from the `L·M` label-slots to
/// the `K` prototypes, each label's column of `q` replicated `M` times.
pub fn solve_lap(q: &Mat, per_label: usize) -> Result<SlotAssignment> {
    let (k, labels) = q.shape();
    check_capacity(k, labels, per_label)?;
    if !q.all_finite() {
        return Err(Error::NonFinite("score matrix".into()));
    }
    let expanded = expand_slots(q, per_label);
    let cols = max_assignment(&expanded);
    Ok(SlotAssignment::from_columns(&expanded, labels, per_label, &cols))
}

/// `K×L` → `K×(L·M)` with each label column repeated `M` times.
pub fn expand_slots(q: &Mat, per_label: usize) -> Mat {
    let idx: Vec<usize> = (0..q.cols()).flat_map(|l| std::iter::repeat_n(l, per_label)).collect();
    q.select_cols(&idx)
}

/// Uniform random injective slot map; `q` fills in the chosen cells.
pub fn random_assignment(q: &Mat, per_label: usize, rng: &mut Rng) -> Result<SlotAssignment> {
    let (k, labels) = q.shape();
    check_capacity(k, labels, per_label)?;
    let perm = rng.permutation(k)?;
    let expanded = expand_slots(q, per_label);
    Ok(SlotAssignment::from_columns(&expanded, labels, per_label, &perm[..labels * per_label]))
}

/// Marks chosen prototypes with their `(label, slot)` and clears the rest.
pub fn apply(bank: &PrototypeBank, assignment: &SlotAssignment) -> Result<PrototypeBank> {
    let mut out = bank.clone();
    for r in &mut out.records {
        r.slot = None;
    }
    for s in &assignment.slots {
        let rec = out.records.get_mut(s.prototype).ok_or_else(|| {
            Error::Domain(format!("assignment names prototype {} but the bank has {}", s.prototype, bank.len()))
        })?;
        rec.slot = Some((s.label, s.slot));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub ortho_weight: f64,
    pub init_scale: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            epochs: 1,
            batch_size: 256,
            lr: 0.01,
            ortho_weight: 1.0,
            init_scale: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolOutcome {
    pub assignment: SlotAssignment,
    /// Softmax mapping weights, `K×(L·M)`.
    pub weights: Mat,
    pub seconds: f64,
}

/// Learns a soft `K×(L·M)` mapping (softmax over prototypes per slot) by
/// minimizing BCE of a linear head over soft-slot activations plus a squared
/// cosine penalty between same-label soft slots, then hardens it with the
/// exact assignment solver.
pub fn pool_assign(
    acts: &Mat,
    y: &Mat,
    protos: &Mat,
    per_label: usize,
    cfg: &PoolConfig,
    rng: &mut Rng,
) -> Result<PoolOutcome> {
    let start = Instant::now();
    let (k, labels) = (acts.cols(), y.cols());
    check_capacity(k, labels, per_label)?;
    if protos.rows() != k || acts.rows() != y.rows() {
        return Err(Error::Shape {
            op: "pool_assign",
            left: acts.shape(),
            right: protos.shape(),
        });
    }
    let n_slots = labels * per_label;
    let mut logits = Mat::from_vec(k, n_slots, (0..k * n_slots).map(|_| cfg.init_scale * rng.normal()).collect())?;
    let mut head_w = Mat::zeros(n_slots, labels);
    let mut head_b = Mat::zeros(1, labels);
    let mut same_label = Mat::zeros(n_slots, n_slots);
    for i in 0..n_slots {
        for j in 0..n_slots {
            if i != j && i / per_label == j / per_label {
                same_label[(i, j)] = 1.0;
            }
        }
    }
    let pairs = same_label.sum().max(1.0);
    let mut opt = AdamW::new(0.0);
    let mut order: Vec<usize> = (0..acts.rows()).collect();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut g = Graph::new();
            let w = g.param(logits.clone());
            let hw = g.param(head_w.clone());
            let hb = g.param(head_b.clone());
            let wt = g.transpose(w);
            let soft_t = g.softmax_rows(wt);
            let soft = g.transpose(soft_t);
            let a = g.constant(acts.select_rows(chunk));
            let slot_acts = g.matmul(a, soft)?;
            let z = g.matmul(slot_acts, hw)?;
            let z = g.add_row(z, hb)?;
            let ce = g.bce_with_logits(z, &y.select_rows(chunk))?;
            let p = g.constant(protos.clone());
            let slot_vecs = g.matmul(soft_t, p)?;
            let gram = g.cosine_sim_matrix(slot_vecs, slot_vecs)?;
            let off = g.mul_const(gram, same_label.clone())?;
            let sq = g.square(off);
            let ortho = g.sum(sq);
            let ortho = g.scale(ortho, cfg.ortho_weight / pairs);
            let loss = g.add(ce, ortho)?;
            if !g.scalar(loss).is_finite() {
                return Err(Error::NonFinite("pool assignment loss".into()));
            }
            let grads = g.backward(loss)?;
            let gs = [grads.get(w), grads.get(hw), grads.get(hb)];
            opt.step(
                &mut [("pool.logits", &mut logits), ("pool.head_w", &mut head_w), ("pool.head_b", &mut head_b)],
                &gs,
                cfg.lr,
            )?;
        }
    }
    let weights = softmax_columns(&logits);
    let cols = max_assignment(&weights);
    let assignment = SlotAssignment::from_columns(&weights, labels, per_label, &cols);
    Ok(PoolOutcome {
        assignment,
        weights,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn softmax_columns(m: &Mat) -> Mat {
    let mut out = m.clone();
    for c in 0..m.cols() {
        let col = m.col(c);
        let lse = crate::autodiff::lse(&col);
        for (r, x) in col.iter().enumerate() {
            out[(r, c)] = (x - lse).exp();
        }
    }
    out
}

/// Chosen slots as written to `assignment.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignReport {
    pub method: String,
    pub labels: usize,
    pub per_label: usize,
    pub slots: Vec<Slot>,
    pub objective: f64,
}

impl AssignReport {
    pub fn new(method: &str, a: &SlotAssignment) -> Self {
        AssignReport {
            method: method.into(),
            labels: a.labels,
            per_label: a.per_label,
            slots: a.slots.clone(),
            objective: a.objective,
        }
    }

    pub fn assignment(&self) -> SlotAssignment {
        SlotAssignment {
            labels: self.labels,
            per_label: self.per_label,
            slots: self.slots.clone(),
            objective: self.objective,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn q_hand_example() {
        let a = q(&[&[0.9], &[1.1], &[0.1], &[-0.1]]);
        let y = q(&[&[1.0], &[1.0], &[0.0], &[0.0]]);
        let s = score(&a, &y, false, &mut Rng::new(0, "t")).unwrap();
        assert!((s.pos_mean[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((s.neg_mean[(0, 0)]).abs() < 1e-12);
        assert!((s.pos_var[(0, 0)] - 0.01).abs() < 1e-12);
        assert!((s.neg_var[(0, 0)] - 0.01).abs() < 1e-12);
        let expect = 1.0 / (0.01f64 + 1e-8).sqrt();
        assert!((s.q[(0, 0)] - expect).abs() <= 1e-12, "{}", s.q[(0, 0)]);
    }

    #[test]
    fn zero_variance_uses_epsilon_floor() {
        let a = q(&[&[1.0], &[1.0], &[0.0], &[0.0]]);
        let s = score(&a, &a, false, &mut Rng::new(0, "t")).unwrap();
        assert!((s.q[(0, 0)] - 1e4).abs() < 1e-6);
    }

    #[test]
    fn identical_distributions_score_zero() {
        let a = q(&[&[0.2], &[0.7], &[0.2], &[0.7]]);
        let y = q(&[&[1.0], &[1.0], &[0.0], &[0.0]]);
        let s = score(&a, &y, false, &mut Rng::new(0, "t")).unwrap();
        assert_eq!(s.q[(0, 0)], 0.0);
    }

    #[test]
    fn single_class_label_is_named() {
        let a = q(&[&[0.2, 0.1], &[0.7, 0.3]]);
        let y = q(&[&[1.0, 1.0], &[0.0, 1.0]]);
        match score(&a, &y, false, &mut Rng::new(0, "t")) {
            Err(Error::SingleClass { label: 1, missing: "negative" }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn balanced_score_is_seeded_and_close_to_plain_on_balanced_input() {
        let mut rng = Rng::new(3, "data");
        let a = Mat::from_vec(40, 3, (0..120).map(|_| rng.normal()).collect()).unwrap();
        let y = Mat::from_vec(40, 2, (0..80).map(|i| ((i / 2) % 4 == 0) as u8 as f64).collect()).unwrap();
        let s1 = score(&a, &y, true, &mut Rng::new(9, "b")).unwrap();
        let s2 = score(&a, &y, true, &mut Rng::new(9, "b")).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.replicates, BALANCE_REPLICATES);
        assert!(s1.q.all_finite());
    }

    #[test]
    fn lap_examples() {
        let a = solve_lap(&q(&[&[5.0, 1.0], &[1.0, 5.0]]), 1).unwrap();
        assert_eq!(a.prototypes(), vec![0, 1]);
        assert_eq!(a.objective, 10.0);

        let a = solve_lap(&q(&[&[1.0, 2.0], &[2.0, 1.0], &[0.0, 0.0]]), 1).unwrap();
        assert_eq!(a.prototypes(), vec![1, 0]);
        assert_eq!(a.objective, 4.0);

        let a = solve_lap(&q(&[&[3.0], &[1.0], &[2.0]]), 2).unwrap();
        assert_eq!(a.prototypes(), vec![0, 2]);
        assert_eq!(a.objective, 5.0);
    }

    #[test]
    fn lap_ties_resolve_lexicographically() {
        let a = solve_lap(&Mat::filled(5, 2, 1.0), 2).unwrap();
        assert_eq!(a.prototypes(), vec![0, 1, 2, 3]);
        let a = solve_lap(&q(&[&[0.0, 1.0], &[1.0, 1.0], &[1.0, 0.0]]), 1).unwrap();
        // l0←p1 l1←p0, l0←p2 l1←p0 and l0←p2 l1←p1 all reach 2
        assert_eq!(a.objective, 2.0);
        assert_eq!(a.prototypes(), vec![1, 0]);
    }

    #[test]
    fn lap_capacity_error_quotes_numbers() {
        let err = solve_lap(&Mat::zeros(3, 2), 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("4") && msg.contains("3") && msg.contains("K >= L*M"), "{msg}");
    }

    #[test]
    fn apply_marks_slots_and_is_idempotent() {
        let bank = PrototypeBank::random(4, 3, &mut Rng::new(1, "b"));
        let a = solve_lap(&Mat::identity(4).select_cols(&[0, 1, 2, 3]), 1).unwrap();
        let b1 = apply(&bank, &a).unwrap();
        assert_eq!(b1.slot_order(), vec![0, 1, 2, 3]);
        assert_eq!(apply(&b1, &a).unwrap(), b1);
        let a2 = solve_lap(&q(&[&[0.0], &[1.0], &[0.0], &[0.0]]), 1).unwrap();
        let b2 = apply(&b1, &a2).unwrap();
        assert_eq!(b2.records.iter().filter(|r| r.slot.is_some()).count(), 1);
        assert_eq!(b2.slot_order(), vec![1]);
    }

    #[test]
    fn random_assignment_is_injective() {
        let a = random_assignment(&Mat::zeros(10, 3), 2, &mut Rng::new(5, "r")).unwrap();
        let mut p = a.prototypes();
        p.sort();
        p.dedup();
        assert_eq!(p.len(), 6);
    }

    #[test]
    fn pool_picks_the_predictive_prototype() {
        let mut rng = Rng::new(11, "pool");
        let n = 64;
        let y = Mat::from_vec(n, 1, (0..n).map(|i| (i % 2) as f64).collect()).unwrap();
        let mut acts = Mat::zeros(n, 2);
        for i in 0..n {
            acts[(i, 0)] = 0.3 * rng.normal();
            acts[(i, 1)] = if i % 2 == 1 { 1.0 } else { -1.0 };
        }
        let protos = q(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let cfg = PoolConfig {
            epochs: 30,
            batch_size: 16,
            lr: 0.05,
            ..PoolConfig::default()
        };
        let out = pool_assign(&acts, &y, &protos, 1, &cfg, &mut Rng::new(2, "p")).unwrap();
        assert_eq!(out.assignment.prototypes(), vec![1]);
    }

    #[test]
    fn pool_without_steps_hardens_the_initialization() {
        let acts = Mat::zeros(4, 5);
        let y = q(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[0.0, 0.0]]);
        let protos = Mat::identity(5);
        let cfg = PoolConfig {
            epochs: 0,
            ..PoolConfig::default()
        };
        let out = pool_assign(&acts, &y, &protos, 2, &cfg, &mut Rng::new(4, "p")).unwrap();
        let mut rng = Rng::new(4, "p");
        let init = Mat::from_vec(5, 4, (0..20).map(|_| cfg.init_scale * rng.normal()).collect()).unwrap();
        let expect = max_assignment(&softmax_columns(&init));
        assert_eq!(out.assignment.prototypes(), expect);
    }
}
