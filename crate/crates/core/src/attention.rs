//! Single-layer attention-only decoder without biases, layer norm or
//! positional encodings, and the layer tensor it induces on a database.
//!
//! Logits for a token sequence `x` with one-hot matrix `X` are
//!
//! ```text
//! Z(x) = X W_EU + Σ_h mask(X W_QK^h Xᵀ) X W_VO^h
//! ```
//!
//! where `mask` is the causal row-wise softmax. Restricted to two-token
//! inputs `(k, q)` the final logit row is the fiber `L[k, q, :]` of
//! `L = E + Σ_h A^h V^h`, which [`build_bundle`] assembles directly from the
//! circuits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::db::Database;
use crate::error::{Error, Result};
use crate::tensor::{db_rank_upper_bound, Matrix, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerConfig {
    pub n_vocab: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head_qk: usize,
    pub d_head_vo: usize,
}

impl LayerConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self;
        if c.n_vocab == 0
            || c.n_heads == 0
            || c.d_model == 0
            || c.d_head_qk == 0
            || c.d_head_vo == 0
        {
            return Err(Error::InvalidConfig(format!(
                "all dimensions must be positive: {c:?}"
            )));
        }
        if c.d_head_qk > c.d_model || c.d_head_vo > c.d_model || c.d_model > c.n_vocab {
            return Err(Error::InvalidConfig(format!(
                "need d_head_qk, d_head_vo ≤ d_model ≤ n_vocab, got {c:?}"
            )));
        }
        Ok(())
    }

    /// Non-embedding parameter count `2 · n_heads · d_model · (d_head_vo + d_head_qk)`.
    pub fn n_params(&self) -> usize {
        2 * self.n_heads * self.d_model * (self.d_head_vo + self.d_head_qk)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    /// `d_model × d_head_qk`
    pub w_q: Matrix,
    /// `d_head_qk × d_model`
    pub w_k: Matrix,
    /// `d_model × d_head_vo`
    pub w_v: Matrix,
    /// `d_head_vo × d_model`
    pub w_o: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    config: LayerConfig,
    /// `n_vocab × d_model`
    pub w_e: Matrix,
    /// `d_model × n_vocab`
    pub w_u: Matrix,
    pub heads: Vec<HeadWeights>,
}

impl LayerWeights {
    pub fn from_parts(
        config: LayerConfig,
        w_e: Matrix,
        w_u: Matrix,
        heads: Vec<HeadWeights>,
    ) -> Result<Self> {
        config.validate()?;
        let w = Self {
            config,
            w_e,
            w_u,
            heads,
        };
        w.check()?;
        Ok(w)
    }

    pub fn zeros(config: LayerConfig) -> Result<Self> {
        config.validate()?;
        let LayerConfig {
            n_vocab,
            n_heads,
            d_model: d,
            d_head_qk: dqk,
            d_head_vo: dvo,
        } = config;
        let head = HeadWeights {
            w_q: Matrix::zeros(d, dqk),
            w_k: Matrix::zeros(dqk, d),
            w_v: Matrix::zeros(d, dvo),
            w_o: Matrix::zeros(dvo, d),
        };
        Ok(Self {
            config,
            w_e: Matrix::zeros(n_vocab, d),
            w_u: Matrix::zeros(d, n_vocab),
            heads: vec![head; n_heads],
        })
    }

    fn check(&self) -> Result<()> {
        let LayerConfig {
            n_vocab,
            n_heads,
            d_model: d,
            d_head_qk: dqk,
            d_head_vo: dvo,
        } = self.config;
        let expect = |name: &str, m: &Matrix, shape: (usize, usize)| {
            if m.shape() != shape {
                return Err(Error::Shape(format!(
                    "{name} is {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
            if !m.is_finite() {
                return Err(Error::NonFinite(name.to_string()));
            }
            Ok(())
        };
        expect("W_E", &self.w_e, (n_vocab, d))?;
        expect("W_U", &self.w_u, (d, n_vocab))?;
        if self.heads.len() != n_heads {
            return Err(Error::Shape(format!(
                "{} heads, expected {n_heads}",
                self.heads.len()
            )));
        }
        for h in &self.heads {
            expect("W_Q", &h.w_q, (d, dqk))?;
            expect("W_K", &h.w_k, (dqk, d))?;
            expect("W_V", &h.w_v, (d, dvo))?;
            expect("W_O", &h.w_o, (dvo, d))?;
        }
        Ok(())
    }

    pub fn config(&self) -> &LayerConfig {
        &self.config
    }

    /// All weight matrices in a fixed order: `W_E, W_U`, then per head `W_Q, W_K, W_V, W_O`.
    pub fn matrices(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.w_e, &self.w_u];
        for h in &self.heads {
            out.extend([&h.w_q, &h.w_k, &h.w_v, &h.w_o]);
        }
        out
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.w_e, &mut self.w_u];
        for h in &mut self.heads {
            out.extend([&mut h.w_q, &mut h.w_k, &mut h.w_v, &mut h.w_o]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.matrices().iter().all(|m| m.is_finite())
    }

    /// Serializes to the model JSON format. Every value is written with 17
    /// significant digits, which round-trips `f64` exactly.
    pub fn to_json(&self) -> Result<String> {
        if !self.is_finite() {
            return Err(Error::NonFinite("model weights".into()));
        }
        #[derive(Serialize)]
        struct Head<'a> {
            #[serde(rename = "W_Q")]
            w_q: &'a RawValue,
            #[serde(rename = "W_K")]
            w_k: &'a RawValue,
            #[serde(rename = "W_V")]
            w_v: &'a RawValue,
            #[serde(rename = "W_O")]
            w_o: &'a RawValue,
        }
        #[derive(Serialize)]
        struct Weights<'a> {
            #[serde(rename = "W_E")]
            w_e: &'a RawValue,
            #[serde(rename = "W_U")]
            w_u: &'a RawValue,
            heads: Vec<Head<'a>>,
        }
        #[derive(Serialize)]
        struct File<'a> {
            config: LayerConfig,
            weights: Weights<'a>,
        }
        let raw = |m: &Matrix| -> Result<Box<RawValue>> {
            Ok(RawValue::from_string(f17_array(m.data()))?)
        };
        let (w_e, w_u) = (raw(&self.w_e)?, raw(&self.w_u)?);
        let heads_raw: Vec<[Box<RawValue>; 4]> = self
            .heads
            .iter()
            .map(|h| Ok([raw(&h.w_q)?, raw(&h.w_k)?, raw(&h.w_v)?, raw(&h.w_o)?]))
            .collect::<Result<_>>()?;
        let file = File {
            config: self.config,
            weights: Weights {
                w_e: &w_e,
                w_u: &w_u,
                heads: heads_raw
                    .iter()
                    .map(|[q, k, v, o]| Head {
                        w_q: q,
                        w_k: k,
                        w_v: v,
                        w_o: o,
                    })
                    .collect(),
            },
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Head {
            #[serde(rename = "W_Q")]
            w_q: Vec<f64>,
            #[serde(rename = "W_K")]
            w_k: Vec<f64>,
            #[serde(rename = "W_V")]
            w_v: Vec<f64>,
            #[serde(rename = "W_O")]
            w_o: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Weights {
            #[serde(rename = "W_E")]
            w_e: Vec<f64>,
            #[serde(rename = "W_U")]
            w_u: Vec<f64>,
            heads: Vec<Head>,
        }
        #[derive(Deserialize)]
        struct File {
            config: LayerConfig,
            weights: Weights,
        }
        let f: File = serde_json::from_str(s)?;
        let c = f.config;
        c.validate()?;
        let (d, dqk, dvo) = (c.d_model, c.d_head_qk, c.d_head_vo);
        let heads = f
            .weights
            .heads
            .into_iter()
            .map(|h| {
                Ok(HeadWeights {
                    w_q: Matrix::from_vec(d, dqk, h.w_q)?,
                    w_k: Matrix::from_vec(dqk, d, h.w_k)?,
                    w_v: Matrix::from_vec(d, dvo, h.w_v)?,
                    w_o: Matrix::from_vec(dvo, d, h.w_o)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(
            c,
            Matrix::from_vec(c.n_vocab, d, f.weights.w_e)?,
            Matrix::from_vec(d, c.n_vocab, f.weights.w_u)?,
            heads,
        )
    }
}

fn f17_array(xs: &[f64]) -> String {
    let mut s = String::with_capacity(xs.len() * 24 + 2);
    s.push('[');
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("{x:.16e}"));
    }
    s.push(']');
    s
}

/// I.i.d. `N(0, 1/d_model)` entries, drawn in [`LayerWeights::matrices`] order.
pub fn init_weights(cfg: &LayerConfig, seed: u64) -> Result<LayerWeights> {
    let mut w = LayerWeights::zeros(*cfg)?;
    let normal = Normal::new(0.0, 1.0 / (cfg.d_model as f64).sqrt()).expect("positive std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in w.matrices_mut() {
        for x in m.data_mut() {
            *x = normal.sample(&mut rng);
        }
    }
    Ok(w)
}

/// Vocabulary-by-vocabulary circuits of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSet {
    /// `W_E W_U`
    pub w_eu: Matrix,
    /// `W_E W_Q^h W_K^h W_Eᵀ`
    pub qk: Vec<Matrix>,
    /// `W_E W_V^h W_O^h W_U`
    pub vo: Vec<Matrix>,
}

pub fn circuits(w: &LayerWeights) -> CircuitSet {
    let w_et = w.w_e.transpose();
    CircuitSet {
        w_eu: w.w_e.matmul(&w.w_u),
        qk: w
            .heads
            .iter()
            .map(|h| w.w_e.matmul(&h.w_q).matmul(&h.w_k).matmul(&w_et))
            .collect(),
        vo: w
            .heads
            .iter()
            .map(|h| w.w_e.matmul(&h.w_v).matmul(&h.w_o).matmul(&w.w_u))
            .collect(),
    }
}

/// Causal row-wise softmax: row `i` is normalised over columns `0..=i`,
/// later columns are zero.
pub fn causal_softmax(m: &Matrix) -> Matrix {
    let (n, cols) = m.shape();
    let mut out = Matrix::zeros(n, cols);
    for i in 0..n {
        let width = (i + 1).min(cols);
        let row = &m.row(i)[..width];
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|x| (x - mx).exp()).collect();
        let z: f64 = exps.iter().sum();
        for (j, e) in exps.iter().enumerate() {
            out[(i, j)] = e / z;
        }
    }
    out
}

/// Logits `Z(x)` (`n × n_vocab`) for a token sequence, computed in the
/// residual basis rather than through the vocabulary circuits.
pub fn forward(w: &LayerWeights, tokens: &[usize]) -> Result<Matrix> {
    let n_vocab = w.config.n_vocab;
    if tokens.is_empty() {
        return Err(Error::Precondition(
            "forward needs at least one token".into(),
        ));
    }
    if let Some(&id) = tokens.iter().find(|&&t| t >= n_vocab) {
        return Err(Error::TokenOutOfRange { id, n_vocab });
    }
    let d = w.config.d_model;
    let x = Matrix::from_fn(tokens.len(), d, |i, j| w.w_e[(tokens[i], j)]);
    let mut resid = x.clone();
    for h in &w.heads {
        let q = x.matmul(&h.w_q);
        let k = x.matmul(&h.w_k.transpose());
        let scores = q.matmul(&k.transpose());
        let attn = causal_softmax(&scores);
        let out = attn.matmul(&x).matmul(&h.w_v).matmul(&h.w_o);
        for (r, o) in resid.data_mut().iter_mut().zip(out.data()) {
            *r += o;
        }
    }
    Ok(resid.matmul(&w.w_u))
}

/// Per-head attention and value-output tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTensors {
    /// `A^h ∈ R^{|K|×|Q|×|K∪Q|}`
    pub a: Tensor3,
    /// `V^h ∈ R^{|K∪Q|×|Q|×|V|}`
    pub v: Tensor3,
}

impl HeadTensors {
    /// `(A^h V^h)[k,q,v] = Σ_t A^h[k,q,t] V^h[t,q,v]`, i.e. a matrix product per q-slice.
    pub fn product(&self) -> Tensor3 {
        let [nk, nq, nt] = self.a.dims();
        let nv = self.v.dims()[2];
        let mut out = Tensor3::zeros([nk, nq, nv]);
        for k in 0..nk {
            for q in 0..nq {
                for t in 0..nt {
                    let a = self.a.get(k, q, t);
                    if a == 0.0 {
                        continue;
                    }
                    let vrow = self.v.fiber3(t, q);
                    for (o, x) in out.fiber3_mut(k, q).iter_mut().zip(vrow) {
                        *o += a * x;
                    }
                }
            }
        }
        out
    }
}

/// The tensors `E`, `A^h`, `V^h` and `L` of a layer aligned to a database.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensorBundle {
    /// Token ids along the `K` axis.
    pub k_axis: Vec<usize>,
    /// Token ids along the `Q` axis.
    pub q_axis: Vec<usize>,
    /// Token ids along the `V` axis.
    pub v_axis: Vec<usize>,
    /// Token ids along the attended `K ∪ Q` axis.
    pub t_axis: Vec<usize>,
    pub e: Tensor3,
    pub heads: Vec<HeadTensors>,
    /// `L = E + Σ_h A^h V^h`
    pub l: Tensor3,
}

pub fn build_bundle(w: &LayerWeights, db: &Database) -> Result<LayerTensorBundle> {
    let n_vocab = w.config.n_vocab;
    if db.vocab_size() > n_vocab {
        return Err(Error::TokenOutOfRange {
            id: db.vocab_size() - 1,
            n_vocab,
        });
    }
    let c = circuits(w);
    let k_axis = db.subjects().to_vec();
    let q_axis = db.predicates().to_vec();
    let v_axis = db.objects().to_vec();
    let t_axis = db.attended();
    let (nk, nq, nv, nt) = (k_axis.len(), q_axis.len(), v_axis.len(), t_axis.len());
    let mut t_pos = vec![usize::MAX; db.vocab_size()];
    for (i, &t) in t_axis.iter().enumerate() {
        t_pos[t] = i;
    }

    let e = Tensor3::from_fn([nk, nq, nv], |_, q, v| c.w_eu[(q_axis[q], v_axis[v])]);
    let mut heads = Vec::with_capacity(w.heads.len());
    for h in 0..w.heads.len() {
        let (qk, vo) = (&c.qk[h], &c.vo[h]);
        let v = Tensor3::from_fn([nt, nq, nv], |t, _, j| vo[(t_axis[t], v_axis[j])]);
        let mut a = Tensor3::zeros([nk, nq, nt]);
        for tr in db.triples() {
            let ki = db.k_index(tr.k).expect("subject indexed");
            let qi = db.q_index(tr.q).expect("predicate indexed");
            if tr.k == tr.q {
                // both positions carry the same token
                a.set(ki, qi, t_pos[tr.q], 1.0);
                continue;
            }
            let (sk, sq) = (qk[(tr.q, tr.k)], qk[(tr.q, tr.q)]);
            let m = sk.max(sq);
            let (ek, eq) = ((sk - m).exp(), (sq - m).exp());
            a.set(ki, qi, t_pos[tr.k], ek / (ek + eq));
            a.set(ki, qi, t_pos[tr.q], eq / (ek + eq));
        }
        heads.push(HeadTensors { a, v });
    }
    let mut l = e.clone();
    for h in &heads {
        for (o, x) in l.data_mut().iter_mut().zip(h.product().data()) {
            *o += x;
        }
    }
    Ok(LayerTensorBundle {
        k_axis,
        q_axis,
        v_axis,
        t_axis,
        e,
        heads,
        l,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankBounds {
    /// `d_model + n_heads · d_head_vo`
    pub lower_estimate: usize,
    /// `d_model + n_heads · d_head_vo · |Q|`
    pub upper_bound: usize,
}

pub fn layer_rank_bounds(cfg: &LayerConfig, db: &Database) -> RankBounds {
    let nq = db.predicates().len();
    RankBounds {
        lower_estimate: cfg.d_model + cfg.n_heads * cfg.d_head_vo,
        upper_bound: cfg.d_model + cfg.n_heads * cfg.d_head_vo * nq,
    }
}

/// Whether the database rank bound fits under the layer's lower estimate.
pub fn memorization_condition(cfg: &LayerConfig, db: &Database) -> bool {
    db_rank_upper_bound(db) <= layer_rank_bounds(cfg, db).lower_estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::db::{random_database, DbConfig};
    use crate::fixtures;
    use crate::tensor::matrix_rank;
    use crate::tensor::RankTol;

    fn cfg(
        n_vocab: usize,
        n_heads: usize,
        d_model: usize,
        d_head_qk: usize,
        d_head_vo: usize,
    ) -> LayerConfig {
        LayerConfig {
            n_vocab,
            n_heads,
            d_model,
            d_head_qk,
            d_head_vo,
        }
    }

    /// Value of `t` at `(k, q, v)` looked up by token text.
    fn at(b: &LayerTensorBundle, t: &Tensor3, db: &Database, k: &str, q: &str, v: &str) -> f64 {
        let pos =
            |axis: &[usize], s: &str| axis.iter().position(|&x| x == db.id(s).unwrap()).unwrap();
        t.get(pos(&b.k_axis, k), pos(&b.q_axis, q), pos(&b.v_axis, v))
    }

    #[test]
    fn init_shapes_and_determinism() {
        let c = cfg(11, 3, 5, 2, 4);
        let w = init_weights(&c, 9).unwrap();
        assert_eq!(w.w_e.shape(), (11, 5));
        assert_eq!(w.w_u.shape(), (5, 11));
        assert_eq!(w.heads.len(), 3);
        assert_eq!(w.heads[0].w_q.shape(), (5, 2));
        assert_eq!(w.heads[0].w_k.shape(), (2, 5));
        assert_eq!(w.heads[0].w_v.shape(), (5, 4));
        assert_eq!(w.heads[0].w_o.shape(), (4, 5));
        assert_eq!(w, init_weights(&c, 9).unwrap());
        assert_ne!(w, init_weights(&c, 10).unwrap());
        assert_eq!(c.n_params(), 2 * 3 * 5 * 6);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(init_weights(&cfg(4, 1, 2, 3, 1), 0).is_err());
        assert!(init_weights(&cfg(4, 0, 2, 1, 1), 0).is_err());
        assert!(init_weights(&cfg(0, 1, 2, 1, 1), 0).is_err());
        let w = init_weights(&cfg(4, 1, 2, 1, 1), 0).unwrap();
        assert!(matches!(
            forward(&w, &[4]),
            Err(Error::TokenOutOfRange { id: 4, n_vocab: 4 })
        ));
        assert!(forward(&w, &[]).is_err());
    }

    #[test]
    fn circuit_ranks_capped() {
        let c = cfg(12, 2, 5, 1, 3);
        for seed in 0..10 {
            let cs = circuits(&init_weights(&c, seed).unwrap());
            assert_eq!(cs.w_eu.shape(), (12, 12));
            assert!(matrix_rank(&cs.w_eu, RankTol::Auto).unwrap() <= 5);
            for (qk, vo) in cs.qk.iter().zip(&cs.vo) {
                assert!(matrix_rank(qk, RankTol::Auto).unwrap() <= 1);
                assert!(matrix_rank(vo, RankTol::Auto).unwrap() <= 3);
            }
        }
    }

    #[test]
    fn single_token_forward_is_direct_plus_value_path() {
        let w = init_weights(&cfg(6, 2, 3, 2, 2), 4).unwrap();
        let cs = circuits(&w);
        let z = forward(&w, &[3]).unwrap();
        for v in 0..6 {
            let expect = cs.w_eu[(3, v)] + cs.vo.iter().map(|m| m[(3, v)]).sum::<f64>();
            assert!((z[(0, v)] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_rows_sum_to_one() {
        let m = Matrix::from_fn(4, 4, |i, j| (i as f64) - 2.0 * (j as f64));
        let a = causal_softmax(&m);
        for i in 0..4 {
            let s: f64 = a.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(a.row(i)[i + 1..].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn worked_example_slices() {
        let db = fixtures::people_short();
        let w = fixtures::worked_example_weights(&db, 1.0);
        let b = build_bundle(&w, &db).unwrap();
        let av = b.heads[0].product();
        let expect_beta = [("a", [0.0, 1.0]), ("b", [0.0, 3.0]), ("c", [2.0, 1.0])];
        let expect_lambda = [("a", [1.0, 0.0]), ("b", [1.0, 2.0]), ("c", [3.0, 0.0])];
        for (q, rows) in [("β", expect_beta), ("λ", expect_lambda)] {
            for (k, [m, s]) in rows {
                assert!((at(&b, &av, &db, k, q, "m") - m).abs() < 1e-9, "{k} {q} m");
                assert!((at(&b, &av, &db, k, q, "s") - s).abs() < 1e-9, "{k} {q} s");
            }
        }
        // all-ones QK: every attended pair splits attention evenly
        assert!(b.heads[0].a.data().iter().all(|&x| x == 0.0 || x == 0.5));
        assert_eq!(b.e, Tensor3::zeros(b.e.dims()));
        // logits at (a, β) are (m, s) = (0, 1)
        let z = forward(&w, &[db.id("a").unwrap(), db.id("β").unwrap()]).unwrap();
        assert_eq!(
            (z[(1, db.id("m").unwrap())], z[(1, db.id("s").unwrap())]),
            (0.0, 1.0)
        );
    }

    #[test]
    fn zero_qk_splits_attention_evenly() {
        let db = fixtures::countries();
        let mut w = init_weights(&cfg(db.vocab_size(), 2, 4, 2, 2), 1).unwrap();
        for h in &mut w.heads {
            h.w_q = Matrix::zeros(4, 2);
        }
        let b = build_bundle(&w, &db).unwrap();
        for h in &b.heads {
            let [nk, nq, nt] = h.a.dims();
            for k in 0..nk {
                for q in 0..nq {
                    let s: f64 = (0..nt).map(|t| h.a.get(k, q, t)).sum();
                    if db.lookup(b.k_axis[k], b.q_axis[q]).is_some() {
                        assert!((s - 1.0).abs() < 1e-12);
                        assert!((0..nt).all(|t| [0.0, 0.5].contains(&h.a.get(k, q, t))));
                    } else {
                        assert_eq!(s, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn fibers_match_forward() {
        for seed in 0..5 {
            let db = random_database(
                &DbConfig {
                    n_k: 6,
                    n_q: 3,
                    n_v: 4,
                    n_triples: 10,
                    shared_tokens: seed % 2 == 1,
                },
                seed,
            )
            .unwrap();
            let w = init_weights(&cfg(db.vocab_size(), 3, 4, 2, 3), seed).unwrap();
            let b = build_bundle(&w, &db).unwrap();
            for t in db.triples() {
                let z = forward(&w, &[t.k, t.q]).unwrap();
                let (ki, qi) = (db.k_index(t.k).unwrap(), db.q_index(t.q).unwrap());
                for (vi, &v) in b.v_axis.iter().enumerate() {
                    assert!((b.l.get(ki, qi, vi) - z[(1, v)]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn repeated_token_attends_to_itself() {
        let db = crate::db::parse_triples("t t x\nu t y").unwrap();
        let w = init_weights(&cfg(db.vocab_size(), 1, 3, 2, 2), 3).unwrap();
        let b = build_bundle(&w, &db).unwrap();
        let (k, q) = (
            db.k_index(db.id("t").unwrap()).unwrap(),
            db.q_index(db.id("t").unwrap()).unwrap(),
        );
        let tpos = b
            .t_axis
            .iter()
            .position(|&x| x == db.id("t").unwrap())
            .unwrap();
        assert_eq!(b.heads[0].a.get(k, q, tpos), 1.0);
        let z = forward(&w, &[db.id("t").unwrap(), db.id("t").unwrap()]).unwrap();
        let x = db.id("x").unwrap();
        assert!(
            (b.l.get(k, q, b.v_axis.iter().position(|&v| v == x).unwrap()) - z[(1, x)]).abs()
                < 1e-9
        );
    }

    #[test]
    fn rank_bounds_and_condition() {
        let db = fixtures::countries();
        let c = cfg(db.vocab_size(), 1, 4, 1, 2);
        assert_eq!(
            layer_rank_bounds(&c, &db),
            RankBounds {
                lower_estimate: 6,
                upper_bound: 4 + 2 * 3
            }
        );
        assert!(memorization_condition(&c, &db));
        assert!(!memorization_condition(
            &cfg(db.vocab_size(), 1, 3, 1, 2),
            &db
        ));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let w = init_weights(&cfg(7, 2, 3, 1, 2), 5).unwrap();
        let back = LayerWeights::from_json(&w.to_json().unwrap()).unwrap();
        assert_eq!(back, w);
        assert!(LayerWeights::from_json("{}").is_err());
    }

    #[test]
    fn token_permutation_commutes_with_logits() {
        // relabeling vocabulary ids permutes logit columns the same way
        let c = cfg(5, 2, 3, 2, 2);
        let w = init_weights(&c, 2).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let mut p = w.clone();
        for (old, &new) in perm.iter().enumerate() {
            p.w_e.row_mut(new).copy_from_slice(w.w_e.row(old));
            for r in 0..3 {
                p.w_u[(r, new)] = w.w_u[(r, old)];
            }
        }
        let z = forward(&w, &[1, 4, 2]).unwrap();
        let zp = forward(&p, &[perm[1], perm[4], perm[2]]).unwrap();
        for i in 0..3 {
            for v in 0..5 {
                assert!((z[(i, v)] - zp[(i, perm[v])]).abs() < 1e-12);
            }
        }
    }
}
