//! Full-batch training of a layer on a database.
//!
//! Every fact `(k, q, v)` is fed as the sequence `(k, q, v)`; the first logit
//! row is scored against `q` and the second against `v`. Row three predicts
//! nothing, and because attention is causal the `v` token cannot influence
//! the two scored rows, so the loss only ever runs the `(k, q)` prefix.
//! Row one depends on `k` alone and is evaluated once per subject.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attention::{build_bundle, forward, init_weights, LayerConfig, LayerWeights};
use crate::db::Database;
use crate::error::{Error, Result};
use crate::eval::{argmax_accuracy, clears_threshold, tau_accuracy, Tau};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Seed for weight initialization when training from scratch.
    pub seed: u64,
    /// Epoch stride between history rows.
    pub record_every: usize,
    /// Stop once every fact clears the 0.99 threshold.
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 2000,
            learning_rate: 1e-2,
            optimizer: Optimizer::default(),
            seed: 0,
            record_every: 100,
            early_stop: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Loss split by predicted position, each averaged over facts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    /// Cross-entropy of predicting `q` after `k`.
    pub predicate: f64,
    /// Cross-entropy of predicting `v` after `(k, q)`.
    pub object: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.predicate + self.object
    }
}

struct Cache {
    d: usize,
    dqk: usize,
    dvo: usize,
    // per head, per token: query/key/value vectors and the value-output row
    qv: Vec<Vec<f64>>,
    kv: Vec<Vec<f64>>,
    val: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
}

fn check_vocab(w: &LayerWeights, db: &Database) -> Result<()> {
    let n_vocab = w.config().n_vocab;
    if db.vocab_size() > n_vocab {
        return Err(Error::TokenOutOfRange {
            id: db.vocab_size() - 1,
            n_vocab,
        });
    }
    Ok(())
}

fn precompute(w: &LayerWeights, used: &[bool]) -> Cache {
    let c = w.config();
    let (n, d, dqk, dvo) = (c.n_vocab, c.d_model, c.d_head_qk, c.d_head_vo);
    let mut cache = Cache {
        d,
        dqk,
        dvo,
        qv: vec![vec![0.0; n * dqk]; c.n_heads],
        kv: vec![vec![0.0; n * dqk]; c.n_heads],
        val: vec![vec![0.0; n * dvo]; c.n_heads],
        u: vec![vec![0.0; n * d]; c.n_heads],
    };
    for (h, hw) in w.heads.iter().enumerate() {
        for t in (0..n).filter(|&t| used[t]) {
            let e = w.w_e.row(t);
            for b in 0..dqk {
                let mut q = 0.0;
                for m in 0..d {
                    q += e[m] * hw.w_q[(m, b)];
                }
                cache.qv[h][t * dqk + b] = q;
                cache.kv[h][t * dqk + b] = e.iter().zip(hw.w_k.row(b)).map(|(x, y)| x * y).sum();
            }
            for a in 0..dvo {
                let mut v = 0.0;
                for m in 0..d {
                    v += e[m] * hw.w_v[(m, a)];
                }
                cache.val[h][t * dvo + a] = v;
            }
            let val = &cache.val[h][t * dvo..(t + 1) * dvo];
            let urow = &mut cache.u[h][t * d..(t + 1) * d];
            for (a, &va) in val.iter().enumerate() {
                for (o, x) in urow.iter_mut().zip(hw.w_o.row(a)) {
                    *o += va * x;
                }
            }
        }
    }
    cache
}

/// `z = r W_U`, returning `logsumexp(z)` and leaving `softmax(z)` in `probs`.
fn logits_softmax(w_u: &crate::tensor::Matrix, r: &[f64], z: &mut [f64], probs: &mut [f64]) -> f64 {
    z.iter_mut().for_each(|x| *x = 0.0);
    for (m, &rm) in r.iter().enumerate() {
        for (o, x) in z.iter_mut().zip(w_u.row(m)) {
            *o += rm * x;
        }
    }
    let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (p, &x) in probs.iter_mut().zip(z.iter()) {
        *p = (x - mx).exp();
        s += *p;
    }
    probs.iter_mut().for_each(|p| *p /= s);
    mx + s.ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (o, v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

fn loss_and_grad(
    w: &LayerWeights,
    db: &Database,
    want_grad: bool,
) -> Result<(LossTerms, Option<LayerWeights>)> {
    check_vocab(w, db)?;
    let cfg = *w.config();
    let n_vocab = cfg.n_vocab;
    let n_heads = cfg.n_heads;
    let mut used = vec![false; n_vocab];
    for t in db.triples() {
        used[t.k] = true;
        used[t.q] = true;
    }
    let cache = precompute(w, &used);
    let (d, dqk, dvo) = (cache.d, cache.dqk, cache.dvo);
    let inv_n = 1.0 / db.len() as f64;

    let mut grad = if want_grad {
        Some(LayerWeights::zeros(cfg)?)
    } else {
        None
    };
    // per-token upstream gradients of the cached vectors
    let mut d_e = vec![0.0; n_vocab * d];
    let mut d_u = vec![vec![0.0; n_vocab * d]; n_heads];
    let mut d_qv = vec![vec![0.0; n_vocab * dqk]; n_heads];
    let mut d_kv = vec![vec![0.0; n_vocab * dqk]; n_heads];

    let mut z = vec![0.0; n_vocab];
    let mut probs = vec![0.0; n_vocab];
    let mut r = vec![0.0; d];
    let mut dr = vec![0.0; d];

    // Position one: depends only on the subject.
    let mut predicate_loss = 0.0;
    let mut targets: Vec<Vec<usize>> = vec![Vec::new(); n_vocab];
    for t in db.triples() {
        targets[t.k].push(t.q);
    }
    for &k in db.subjects() {
        let qs = &targets[k];
        r.copy_from_slice(w.w_e.row(k));
        for h in 0..n_heads {
            axpy(1.0, &cache.u[h][k * d..(k + 1) * d], &mut r);
        }
        let lse = logits_softmax(&w.w_u, &r, &mut z, &mut probs);
        let count = qs.len() as f64;
        predicate_loss += count * lse - qs.iter().map(|&q| z[q]).sum::<f64>();
        if let Some(g) = grad.as_mut() {
            // g_z = (count · softmax − Σ onehot(q)) / N
            let mut gz: Vec<f64> = probs.iter().map(|p| p * count * inv_n).collect();
            for &q in qs {
                gz[q] -= inv_n;
            }
            backprop_unembed(&w.w_u, &mut g.w_u, &r, &gz, &mut dr);
            axpy(1.0, &dr, &mut d_e[k * d..(k + 1) * d]);
            for du in d_u.iter_mut() {
                axpy(1.0, &dr, &mut du[k * d..(k + 1) * d]);
            }
        }
    }

    // Position two: attends over (k, q).
    let mut object_loss = 0.0;
    let mut attn = vec![(0.0, 0.0); n_heads];
    let mut gz = vec![0.0; n_vocab];
    for t in db.triples() {
        let (k, q) = (t.k, t.q);
        r.copy_from_slice(w.w_e.row(q));
        for h in 0..n_heads {
            let qq = &cache.qv[h][q * dqk..(q + 1) * dqk];
            let sk = dot(qq, &cache.kv[h][k * dqk..(k + 1) * dqk]);
            let sq = dot(qq, &cache.kv[h][q * dqk..(q + 1) * dqk]);
            let m = sk.max(sq);
            let (ek, eq) = ((sk - m).exp(), (sq - m).exp());
            let (pk, pq) = (ek / (ek + eq), eq / (ek + eq));
            attn[h] = (pk, pq);
            axpy(pk, &cache.u[h][k * d..(k + 1) * d], &mut r);
            axpy(pq, &cache.u[h][q * d..(q + 1) * d], &mut r);
        }
        let lse = logits_softmax(&w.w_u, &r, &mut z, &mut probs);
        object_loss += lse - z[t.v];
        if let Some(g) = grad.as_mut() {
            for (o, p) in gz.iter_mut().zip(&probs) {
                *o = p * inv_n;
            }
            gz[t.v] -= inv_n;
            backprop_unembed(&w.w_u, &mut g.w_u, &r, &gz, &mut dr);
            axpy(1.0, &dr, &mut d_e[q * d..(q + 1) * d]);
            for h in 0..n_heads {
                let (pk, pq) = attn[h];
                let uk = &cache.u[h][k * d..(k + 1) * d];
                let uq = &cache.u[h][q * d..(q + 1) * d];
                let (dpk, dpq) = (dot(&dr, uk), dot(&dr, uq));
                let mean = pk * dpk + pq * dpq;
                let (dsk, dsq) = (pk * (dpk - mean), pq * (dpq - mean));
                axpy(pk, &dr, &mut d_u[h][k * d..(k + 1) * d]);
                axpy(pq, &dr, &mut d_u[h][q * d..(q + 1) * d]);

                let qq: Vec<f64> = cache.qv[h][q * dqk..(q + 1) * dqk].to_vec();
                let kk: Vec<f64> = cache.kv[h][k * dqk..(k + 1) * dqk].to_vec();
                let kq: Vec<f64> = cache.kv[h][q * dqk..(q + 1) * dqk].to_vec();
                let dq_row = &mut d_qv[h][q * dqk..(q + 1) * dqk];
                axpy(dsk, &kk, dq_row);
                axpy(dsq, &kq, dq_row);
                axpy(dsk, &qq, &mut d_kv[h][k * dqk..(k + 1) * dqk]);
                axpy(dsq, &qq, &mut d_kv[h][q * dqk..(q + 1) * dqk]);
            }
        }
    }

    let terms = LossTerms {
        predicate: predicate_loss * inv_n,
        object: object_loss * inv_n,
    };
    let Some(mut g) = grad else {
        return Ok((terms, None));
    };

    // Chain the per-token gradients back to the weight matrices.
    let mut dval = vec![0.0; dvo];
    for (h, hw) in w.heads.iter().enumerate() {
        let gh = &mut g.heads[h];
        for t in (0..n_vocab).filter(|&t| used[t]) {
            let e = w.w_e.row(t);
            let du = &d_u[h][t * d..(t + 1) * d];
            let val = &cache.val[h][t * dvo..(t + 1) * dvo];
            for a in 0..dvo {
                axpy(val[a], du, gh.w_o.row_mut(a));
                dval[a] = dot(hw.w_o.row(a), du);
            }
            let de = &mut d_e[t * d..(t + 1) * d];
            for m in 0..d {
                let gv = gh.w_v.row_mut(m);
                axpy(e[m], &dval, gv);
                de[m] += dot(hw.w_v.row(m), &dval);
            }
            let dq = &d_qv[h][t * dqk..(t + 1) * dqk];
            let dk = &d_kv[h][t * dqk..(t + 1) * dqk];
            for m in 0..d {
                axpy(e[m], dq, gh.w_q.row_mut(m));
                de[m] += dot(hw.w_q.row(m), dq);
            }
            for b in 0..dqk {
                axpy(dk[b], e, gh.w_k.row_mut(b));
                axpy(dk[b], hw.w_k.row(b), de);
            }
        }
    }
    for t in (0..n_vocab).filter(|&t| used[t]) {
        g.w_e.row_mut(t).copy_from_slice(&d_e[t * d..(t + 1) * d]);
    }
    Ok((terms, Some(g)))
}

/// Accumulates `r ⊗ g_z` into `dW_U` and writes `W_U g_z` into `dr`.
fn backprop_unembed(
    w_u: &crate::tensor::Matrix,
    d_wu: &mut crate::tensor::Matrix,
    r: &[f64],
    gz: &[f64],
    dr: &mut [f64],
) {
    for m in 0..r.len() {
        axpy(r[m], gz, d_wu.row_mut(m));
        dr[m] = dot(w_u.row(m), gz);
    }
}

/// Mean next-token cross-entropy over facts, summed over the two predicted positions.
pub fn loss(w: &LayerWeights, db: &Database) -> Result<f64> {
    Ok(loss_terms(w, db)?.total())
}

pub fn loss_terms(w: &LayerWeights, db: &Database) -> Result<LossTerms> {
    Ok(loss_and_grad(w, db, false)?.0)
}

/// Exact gradient of [`loss`], shaped like the weights.
pub fn gradients(w: &LayerWeights, db: &Database) -> Result<LayerWeights> {
    Ok(loss_and_grad(w, db, true)?.1.expect("gradient requested"))
}

pub fn loss_and_gradients(w: &LayerWeights, db: &Database) -> Result<(f64, LayerWeights)> {
    let (terms, g) = loss_and_grad(w, db, true)?;
    Ok((terms.total(), g.expect("gradient requested")))
}

/// Final-position accuracies read from the layer tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracies {
    pub argmax: f64,
    /// `(τ, accuracy)` pairs in the order requested.
    pub tau: Vec<(f64, f64)>,
}

impl Accuracies {
    pub fn at(&self, tau: f64) -> Option<f64> {
        self.tau.iter().find(|(t, _)| *t == tau).map(|(_, a)| *a)
    }
}

pub fn accuracies(w: &LayerWeights, db: &Database, taus: &[Tau]) -> Result<Accuracies> {
    let bundle = build_bundle(w, db)?;
    Ok(Accuracies {
        argmax: argmax_accuracy(&bundle.l, db)?,
        tau: taus
            .iter()
            .map(|&t| Ok((t.value(), tau_accuracy(&bundle.l, db, t)?)))
            .collect::<Result<_>>()?,
    })
}

/// Accuracies with softmax and argmax over the whole vocabulary rather than
/// the object columns, computed from the forward pass.
pub fn full_vocab_accuracies(w: &LayerWeights, db: &Database, taus: &[Tau]) -> Result<Accuracies> {
    check_vocab(w, db)?;
    let mut argmax = 0usize;
    let mut hits = vec![0usize; taus.len()];
    for t in db.triples() {
        let z = forward(w, &[t.k, t.q])?;
        let row = z.row(1);
        if row
            .iter()
            .enumerate()
            .all(|(j, &x)| j == t.v || x < row[t.v])
        {
            argmax += 1;
        }
        for (h, &tau) in hits.iter_mut().zip(taus) {
            if clears_threshold(row, t.v, tau) {
                *h += 1;
            }
        }
    }
    let n = db.len() as f64;
    Ok(Accuracies {
        argmax: argmax as f64 / n,
        tau: taus
            .iter()
            .zip(hits)
            .map(|(t, h)| (t.value(), h as f64 / n))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub loss: f64,
    pub acc_argmax: f64,
    pub acc_075: f64,
    pub acc_095: f64,
    pub acc_099: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub weights: LayerWeights,
    pub history: Vec<HistoryRow>,
    pub epochs_run: usize,
    pub final_loss: f64,
}

impl TrainReport {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,loss,acc_argmax,acc_075,acc_095,acc_099\n");
        for r in &self.history {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.epoch, r.loss, r.acc_argmax, r.acc_075, r.acc_095, r.acc_099
            );
        }
        s
    }
}

fn history_row(epoch: usize, loss: f64, w: &LayerWeights, db: &Database) -> Result<HistoryRow> {
    let taus = [Tau::new(0.75)?, Tau::new(0.95)?, Tau::new(0.99)?];
    let acc = accuracies(w, db, &taus)?;
    Ok(HistoryRow {
        epoch,
        loss,
        acc_argmax: acc.argmax,
        acc_075: acc.tau[0].1,
        acc_095: acc.tau[1].1,
        acc_099: acc.tau[2].1,
    })
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

/// Runs full-batch optimizer steps starting from `w`. The database is only read.
pub fn train(w: LayerWeights, db: &Database, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_vocab(&w, db)?;
    let mut w = w;
    let sizes: Vec<usize> = w.matrices().iter().map(|m| m.data().len()).collect();
    let mut adam = AdamState {
        m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        t: 0,
    };
    let record_every = cfg.record_every.max(1);
    let mut history = Vec::new();
    let mut epochs_run = 0;
    for epoch in 0..cfg.max_epochs {
        let (loss, g) = loss_and_gradients(&w, db)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        if epoch % record_every == 0 {
            let row = history_row(epoch, loss, &w, db)?;
            let done = cfg.early_stop && row.acc_099 == 1.0;
            history.push(row);
            if done {
                break;
            }
        }
        step(&mut w, &g, cfg, &mut adam);
        epochs_run = epoch + 1;
    }
    let final_loss = loss(&w, db)?;
    if !final_loss.is_finite() || !w.is_finite() {
        return Err(Error::Diverged {
            epoch: epochs_run,
            loss: final_loss,
        });
    }
    if history.last().map_or(true, |r| r.epoch < epochs_run) {
        history.push(history_row(epochs_run, final_loss, &w, db)?);
    }
    Ok(TrainReport {
        weights: w,
        history,
        epochs_run,
        final_loss,
    })
}

/// Initializes weights from `cfg.seed` and trains them.
pub fn train_from_scratch(
    layer: &LayerConfig,
    db: &Database,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train(init_weights(layer, cfg.seed)?, db, cfg)
}

fn step(w: &mut LayerWeights, g: &LayerWeights, cfg: &TrainConfig, adam: &mut AdamState) {
    let lr = cfg.learning_rate;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (p, gm) in w.matrices_mut().into_iter().zip(g.matrices()) {
                for (x, dx) in p.data_mut().iter_mut().zip(gm.data()) {
                    *x -= lr * dx;
                }
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            adam.t += 1;
            let bc1 = 1.0 - beta1.powi(adam.t);
            let bc2 = 1.0 - beta2.powi(adam.t);
            for (i, (p, gm)) in w.matrices_mut().into_iter().zip(g.matrices()).enumerate() {
                let (m, v) = (&mut adam.m[i], &mut adam.v[i]);
                for (j, (x, &dx)) in p.data_mut().iter_mut().zip(gm.data()).enumerate() {
                    m[j] = beta1 * m[j] + (1.0 - beta1) * dx;
                    v[j] = beta2 * v[j] + (1.0 - beta2) * dx * dx;
                    let mh = m[j] / bc1;
                    let vh = v[j] / bc2;
                    *x -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::db::{parse_triples, random_database, DbConfig};
    use crate::fixtures;

    fn layer(
        db: &Database,
        n_heads: usize,
        d_model: usize,
        d_qk: usize,
        d_vo: usize,
    ) -> LayerConfig {
        LayerConfig {
            n_vocab: db.vocab_size().max(d_model),
            n_heads,
            d_model,
            d_head_qk: d_qk,
            d_head_vo: d_vo,
        }
    }

    /// Largest relative error between the analytic gradient and central differences.
    fn gradient_error(w: &LayerWeights, db: &Database) -> f64 {
        let g = gradients(w, db).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let n_mats = w.matrices().len();
        for m in 0..n_mats {
            let len = w.matrices()[m].data().len();
            for i in 0..len {
                let mut p = w.clone();
                p.matrices_mut()[m].data_mut()[i] += h;
                let up = loss(&p, db).unwrap();
                p.matrices_mut()[m].data_mut()[i] -= 2.0 * h;
                let down = loss(&p, db).unwrap();
                let fd = (up - down) / (2.0 * h);
                let an = g.matrices()[m].data()[i];
                worst = worst.max((fd - an).abs() / (fd.abs() + an.abs()).max(1e-6));
            }
        }
        worst
    }

    #[test]
    fn zero_weights_give_uniform_loss() {
        let db = fixtures::countries();
        let w = LayerWeights::zeros(layer(&db, 2, 3, 1, 2)).unwrap();
        let expect = 2.0 * (db.vocab_size() as f64).ln();
        assert!((loss(&w, &db).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn worked_example_object_loss_vanishes_with_scale() {
        let db = fixtures::people_short();
        let small = loss_terms(&fixtures::worked_example_weights(&db, 1.0), &db)
            .unwrap()
            .object;
        let big = loss_terms(&fixtures::worked_example_weights(&db, 40.0), &db)
            .unwrap()
            .object;
        assert!(big < 1e-6 && big < small, "{big} vs {small}");
    }

    #[test]
    fn loss_ignores_triple_order() {
        let a = parse_triples("x p u\ny r v\nx r v\ny p u").unwrap();
        let b = parse_triples("x p u\ny r v\ny p u\nx r v").unwrap();
        // same vocabulary ids in both orders
        assert!(a.tokens().zip(b.tokens()).all(|(s, t)| s == t));
        let w = init_weights(&layer(&a, 2, 3, 2, 2), 1).unwrap();
        assert!((loss(&w, &a).unwrap() - loss(&w, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (i, &(heads, d, dqk, dvo)) in [(1, 2, 1, 1), (2, 3, 2, 1), (3, 4, 2, 3)]
            .iter()
            .enumerate()
        {
            let cfg = DbConfig {
                n_k: 4,
                n_q: 2,
                n_v: 3,
                n_triples: 6,
                shared_tokens: i == 1,
            };
            let db = random_database(&cfg, i as u64).unwrap();
            let w = init_weights(&layer(&db, heads, d, dqk, dvo), 7 + i as u64).unwrap();
            let err = gradient_error(&w, &db);
            assert!(err < 1e-4, "config {i}: relative error {err}");
        }
    }

    #[test]
    fn unused_embedding_rows_get_no_gradient() {
        let db = fixtures::countries();
        let mut c = layer(&db, 1, 3, 2, 2);
        c.n_vocab += 2;
        let g = gradients(&init_weights(&c, 3).unwrap(), &db).unwrap();
        assert!(g.w_e.row(c.n_vocab - 1).iter().all(|&x| x == 0.0));
        assert!(g.w_u.data().iter().any(|&x| x != 0.0));
    }

    #[test]
    fn zero_weights_have_zero_attention_gradients() {
        let db = fixtures::countries();
        let g = gradients(&LayerWeights::zeros(layer(&db, 2, 3, 2, 2)).unwrap(), &db).unwrap();
        for h in &g.heads {
            assert!(h.w_q.data().iter().chain(h.w_k.data()).all(|&x| x == 0.0));
        }
    }

    #[test]
    fn training_is_deterministic_and_descends() {
        let db = fixtures::countries();
        let cfg = TrainConfig {
            max_epochs: 100,
            record_every: 50,
            ..TrainConfig::default()
        };
        let a = train_from_scratch(&layer(&db, 2, 4, 2, 2), &db, &cfg).unwrap();
        let b = train_from_scratch(&layer(&db, 2, 4, 2, 2), &db, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.history, b.history);
        assert_eq!(
            a.history.iter().map(|r| r.epoch).collect::<Vec<_>>(),
            [0, 50, 100]
        );
        assert!(a.final_loss < a.history[0].loss);
        assert!(a
            .history_csv()
            .starts_with("epoch,loss,acc_argmax,acc_075,acc_095,acc_099\n0,"));
    }

    #[test]
    fn fixtures_are_memorized() {
        let cfg = TrainConfig::default();
        let db = fixtures::countries();
        let r = train_from_scratch(&layer(&db, 2, 6, 6, 6), &db, &cfg).unwrap();
        assert_eq!(r.history.last().unwrap().acc_argmax, 1.0);
        // one output for every fact: a rank-one layer suffices
        let db = fixtures::constant_object();
        let r = train_from_scratch(&layer(&db, 1, 1, 1, 1), &db, &cfg).unwrap();
        assert_eq!(r.history.last().unwrap().acc_argmax, 1.0);
    }

    #[test]
    fn full_vocab_scores_never_beat_object_columns() {
        let db = fixtures::countries();
        let w = init_weights(&layer(&db, 2, 4, 2, 2), 6).unwrap();
        let taus = [Tau::new(0.5).unwrap(), Tau::new(0.75).unwrap()];
        let r = train(
            w,
            &db,
            &TrainConfig {
                max_epochs: 200,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let cols = accuracies(&r.weights, &db, &taus).unwrap();
        let full = full_vocab_accuracies(&r.weights, &db, &taus).unwrap();
        assert!(full.argmax <= cols.argmax);
        for ((_, f), (_, c)) in full.tau.iter().zip(&cols.tau) {
            assert!(f <= c);
        }
    }

    #[test]
    fn early_stop_and_config_checks() {
        let db = fixtures::countries();
        let cfg = TrainConfig {
            early_stop: true,
            record_every: 10,
            ..TrainConfig::default()
        };
        let r = train_from_scratch(&layer(&db, 2, 6, 3, 3), &db, &cfg).unwrap();
        assert!(r.epochs_run < 2000);
        assert_eq!(r.history.last().unwrap().acc_099, 1.0);
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        let tiny = LayerWeights::zeros(LayerConfig {
            n_vocab: 3,
            n_heads: 1,
            d_model: 1,
            d_head_qk: 1,
            d_head_vo: 1,
        })
        .unwrap();
        assert!(matches!(
            train(tiny, &db, &cfg),
            Err(Error::TokenOutOfRange { .. })
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let db = fixtures::countries();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            optimizer: Optimizer::Sgd,
            max_epochs: 50,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_from_scratch(&layer(&db, 1, 3, 1, 1), &db, &cfg),
            Err(Error::Diverged { .. })
        ));
    }
}
