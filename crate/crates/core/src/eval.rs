//! Turning logits into predictions: row-wise argmax, softmax, thresholded
//! softmax, and accuracy over a database's facts.
//!
//! Accuracy functions read the fibers `L[k, q, :]` of a layer tensor whose
//! axes follow the database's `K`, `Q` and `V` orders; only pairs `(k, q)` in
//! the database are scored.

use serde::{Deserialize, Serialize};

use crate::db::Database;
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};

/// A probability threshold in `[0.5, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Tau(f64);

impl Tau {
    pub fn new(value: f64) -> Result<Self> {
        if (0.5..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::TauOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Tau {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Tau> for f64 {
    fn from(t: Tau) -> f64 {
        t.0
    }
}

/// Marks every entry equal to its row maximum (ties give several ones).
pub fn argmax_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        let row = m.row(i);
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (o, &x) in out.row_mut(i).iter_mut().zip(row) {
            *o = if x == mx { 1.0 } else { 0.0 };
        }
    }
    out
}

/// Numerically stable softmax of one vector.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - mx).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        out.row_mut(i).copy_from_slice(&softmax(m.row(i)));
    }
    out
}

/// Whether `softmax(row)[j] ≥ τ`. At `τ = 1` this needs every other logit to
/// be `−∞`; the rounded softmax alone would accept large finite margins.
pub fn clears_threshold(row: &[f64], j: usize, tau: Tau) -> bool {
    if tau.0 == 1.0 {
        return row[j] > f64::NEG_INFINITY
            && row
                .iter()
                .enumerate()
                .all(|(i, &x)| i == j || x == f64::NEG_INFINITY);
    }
    softmax(row)[j] >= tau.0
}

/// Indicator of `softmax(M)[i, j] ≥ τ`.
pub fn softmax_threshold(m: &Matrix, tau: Tau) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        let row = m.row(i);
        for j in 0..m.cols() {
            if clears_threshold(row, j, tau) {
                out[(i, j)] = 1.0;
            }
        }
    }
    out
}

fn check_aligned(l: &Tensor3, db: &Database) -> Result<()> {
    let s = db.stats();
    if l.dims() != [s.n_k, s.n_q, s.n_v] {
        return Err(Error::Shape(format!(
            "layer tensor {:?} does not match database axes {:?}",
            l.dims(),
            [s.n_k, s.n_q, s.n_v]
        )));
    }
    Ok(())
}

/// Fibers `(fiber, index of the correct object)` for every fact.
fn scored_fibers<'a>(
    l: &'a Tensor3,
    db: &'a Database,
) -> impl Iterator<Item = (&'a [f64], usize)> + 'a {
    db.triples().iter().map(move |t| {
        let k = db.k_index(t.k).expect("subject indexed");
        let q = db.q_index(t.q).expect("predicate indexed");
        (l.fiber3(k, q), db.v_index(t.v).expect("object indexed"))
    })
}

/// Fraction of facts whose object gets softmax probability at least `τ`
/// (softmax taken along the object axis).
pub fn tau_accuracy(l: &Tensor3, db: &Database, tau: Tau) -> Result<f64> {
    check_aligned(l, db)?;
    let hits = scored_fibers(l, db)
        .filter(|(fiber, v)| clears_threshold(fiber, *v, tau))
        .count();
    Ok(hits as f64 / db.len() as f64)
}

pub fn memorizes(l: &Tensor3, db: &Database, tau: Tau) -> Result<bool> {
    Ok(tau_accuracy(l, db, tau)? == 1.0)
}

/// Fraction of facts whose object is the unique maximum of its fiber. A tied
/// maximum is not a correct recall.
pub fn argmax_accuracy(l: &Tensor3, db: &Database) -> Result<f64> {
    check_aligned(l, db)?;
    let hits = scored_fibers(l, db)
        .filter(|(fiber, v)| {
            let target = fiber[*v];
            fiber
                .iter()
                .enumerate()
                .all(|(j, &x)| j == *v || x < target)
        })
        .count();
    Ok(hits as f64 / db.len() as f64)
}
