//! Dense matrices and 3-tensors, the database tensor, and rank machinery.

mod cp;
mod rank;

pub use cp::{cp_als, tensor_rank_estimate, CpConfig, CpFactors, RankEstimate};
pub use rank::{
    is_binary, matrix_rank, matrix_rank_exact, matrix_rank_svd, singular_values, RankTol,
};

use serde::{Deserialize, Serialize};

use crate::db::Database;
use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Panics on ragged input; intended for literals in tests and fixtures.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Matrix) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (p, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(rhs.row(p)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    /// Submatrix picking the given rows and columns, in that order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Tensor axis used for slicing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    First,
    Second,
    Third,
}

/// Fiber selector: which axis is left free.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fiber {
    /// `T[i, j, :]`
    Third(usize, usize),
    /// `T[i, :, k]`
    Second(usize, usize),
    /// `T[:, j, k]`
    First(usize, usize),
}

/// Dense 3-tensor, row-major with the last index fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "tensor {dims:?} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    /// Outer product `u ⊗ v ⊗ w`.
    pub fn outer(u: &[f64], v: &[f64], w: &[f64]) -> Self {
        Self::from_fn([u.len(), v.len(), w.len()], |i, j, k| u[i] * v[j] * w[k])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, x: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = x;
    }

    pub fn add_at(&mut self, i: usize, j: usize, k: usize, x: f64) {
        let o = self.offset(i, j, k);
        self.data[o] += x;
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Slice with one index fixed: axis `First` gives `T[i, :, :]`, etc.
    pub fn slice(&self, axis: Axis, index: usize) -> Result<Matrix> {
        let [d1, d2, d3] = self.dims;
        let check = |len: usize| {
            if index < len {
                Ok(())
            } else {
                Err(Error::IndexOutOfRange { index, len })
            }
        };
        Ok(match axis {
            Axis::First => {
                check(d1)?;
                Matrix::from_fn(d2, d3, |j, k| self.get(index, j, k))
            }
            Axis::Second => {
                check(d2)?;
                Matrix::from_fn(d1, d3, |i, k| self.get(i, index, k))
            }
            Axis::Third => {
                check(d3)?;
                Matrix::from_fn(d1, d2, |i, j| self.get(i, j, index))
            }
        })
    }

    pub fn fiber(&self, sel: Fiber) -> Result<Vec<f64>> {
        let [d1, d2, d3] = self.dims;
        let check = |index: usize, len: usize| {
            if index < len {
                Ok(())
            } else {
                Err(Error::IndexOutOfRange { index, len })
            }
        };
        Ok(match sel {
            Fiber::Third(i, j) => {
                check(i, d1)?;
                check(j, d2)?;
                let o = self.offset(i, j, 0);
                self.data[o..o + d3].to_vec()
            }
            Fiber::Second(i, k) => {
                check(i, d1)?;
                check(k, d3)?;
                (0..d2).map(|j| self.get(i, j, k)).collect()
            }
            Fiber::First(j, k) => {
                check(j, d2)?;
                check(k, d3)?;
                (0..d1).map(|i| self.get(i, j, k)).collect()
            }
        })
    }

    /// Borrowed view of the `T[i, j, :]` fiber.
    pub fn fiber3(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j, 0);
        &self.data[o..o + self.dims[2]]
    }

    pub fn fiber3_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = self.offset(i, j, 0);
        let d3 = self.dims[2];
        &mut self.data[o..o + d3]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Tensor3 = serde_json::from_str(s)?;
        Self::from_vec(t.dims, t.data)
    }
}

/// The 0/1 database tensor `D ∈ R^{|K|×|Q|×|V|}` with `D[k,q,v] = 1` iff
/// `(k, q, v)` is a fact. Axes follow [`Database::subjects`],
/// [`Database::predicates`] and [`Database::objects`].
pub fn db_tensor(db: &Database) -> Tensor3 {
    let s = db.stats();
    let mut t = Tensor3::zeros([s.n_k, s.n_q, s.n_v]);
    for tr in db.triples() {
        let (k, q, v) = (
            db.k_index(tr.k).expect("subject indexed"),
            db.q_index(tr.q).expect("predicate indexed"),
            db.v_index(tr.v).expect("object indexed"),
        );
        t.set(k, q, v, 1.0);
    }
    t
}

/// `min(Σ_k |V_k|, Σ_q |V_q|)`, an upper bound on the tensor rank of `D`.
pub fn db_rank_upper_bound(db: &Database) -> usize {
    let s = db.stats();
    s.sum_vk.min(s.sum_vq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::db::parse_triples;
    use crate::fixtures;

    fn labeled(db: &Database, names: &[&str]) -> Vec<usize> {
        names
            .iter()
            .map(|n| db.id(n).unwrap_or_else(|| panic!("missing {n}")))
            .collect()
    }

    /// Reorders a slice's rows/columns into the labelled order used when the
    /// matrices are written out by hand.
    fn relabel(m: &Matrix, row_pos: &[usize], col_pos: &[usize]) -> Matrix {
        m.select(row_pos, col_pos)
    }

    #[test]
    fn fig1_slices() {
        let db = fixtures::countries();
        let d = db_tensor(&db);
        assert_eq!(d.dims(), [5, 3, 4]);
        let q_order: Vec<usize> = labeled(&db, &["born_in", "lives_in", "currency"])
            .into_iter()
            .map(|t| db.q_index(t).unwrap())
            .collect();
        let v_order: Vec<usize> = labeled(&db, &["Malaysia", "Singapore", "Ringgit", "Dollar"])
            .into_iter()
            .map(|t| db.v_index(t).unwrap())
            .collect();
        let k_order: Vec<usize> = labeled(
            &db,
            &["Astrid", "Bernard", "Colin", "Malaysia", "Singapore"],
        )
        .into_iter()
        .map(|t| db.k_index(t).unwrap())
        .collect();

        let a = d.slice(Axis::First, k_order[0]).unwrap();
        let expected = Matrix::from_rows(&[[0., 1., 0., 0.], [1., 0., 0., 0.], [0., 0., 0., 0.]]);
        assert_eq!(relabel(&a, &q_order, &v_order), expected);

        let beta = d.slice(Axis::Second, q_order[0]).unwrap();
        let expected = Matrix::from_rows(&[
            [0., 1., 0., 0.],
            [0., 1., 0., 0.],
            [1., 0., 0., 0.],
            [0., 0., 0., 0.],
            [0., 0., 0., 0.],
        ]);
        assert_eq!(relabel(&beta, &k_order, &v_order), expected);

        let lambda = d.slice(Axis::Second, q_order[1]).unwrap();
        let expected = Matrix::from_rows(&[
            [1., 0., 0., 0.],
            [0., 1., 0., 0.],
            [1., 0., 0., 0.],
            [0., 0., 0., 0.],
            [0., 0., 0., 0.],
        ]);
        assert_eq!(relabel(&lambda, &k_order, &v_order), expected);

        let fiber = d.fiber(Fiber::Third(k_order[0], q_order[0])).unwrap();
        let fiber: Vec<f64> = v_order.iter().map(|&p| fiber[p]).collect();
        assert_eq!(fiber, vec![0., 1., 0., 0.]);
    }

    #[test]
    fn fibers_hold_at_most_one_fact() {
        let d = db_tensor(&fixtures::countries());
        let [d1, d2, _] = d.dims();
        for i in 0..d1 {
            for j in 0..d2 {
                assert!(d.fiber3(i, j).iter().sum::<f64>() <= 1.0);
            }
        }
        assert_eq!(d.data().iter().filter(|&&x| x == 1.0).count(), 8);
    }

    #[test]
    fn single_triple_tensor() {
        let d = db_tensor(&parse_triples("a b c").unwrap());
        assert_eq!(d.dims(), [1, 1, 1]);
        assert_eq!(d.data(), &[1.0]);
    }

    #[test]
    fn slice_bounds_and_zero_tensor() {
        let z = Tensor3::zeros([2, 3, 4]);
        assert_eq!(z.slice(Axis::Third, 3).unwrap(), Matrix::zeros(2, 3));
        assert!(matches!(
            z.slice(Axis::First, 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
        assert!(z.fiber(Fiber::Second(0, 4)).is_err());
        assert_eq!(z.fiber(Fiber::First(2, 3)).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn slices_match_row_major_layout() {
        let t = Tensor3::from_fn([2, 3, 4], |i, j, k| (100 * i + 10 * j + k) as f64);
        assert_eq!(t.slice(Axis::Second, 1).unwrap()[(1, 3)], 113.0);
        assert_eq!(t.slice(Axis::Third, 2).unwrap()[(1, 0)], 102.0);
        assert_eq!(
            t.fiber(Fiber::Second(1, 2)).unwrap(),
            vec![102.0, 112.0, 122.0]
        );
    }

    #[test]
    fn rank_bounds() {
        assert_eq!(db_rank_upper_bound(&fixtures::countries()), 6);
        assert_eq!(db_rank_upper_bound(&fixtures::constant_object()), 5);
        assert_eq!(db_rank_upper_bound(&parse_triples("a b c").unwrap()), 1);
    }

    #[test]
    fn tensor_json_round_trip() {
        let t = Tensor3::from_fn([2, 1, 3], |i, _, k| i as f64 * 0.1 + k as f64 / 3.0);
        let s = t.to_json().unwrap();
        assert!(s.starts_with("{\"dims\":[2,1,3],\"data\":["));
        assert_eq!(Tensor3::from_json(&s).unwrap(), t);
        assert!(Tensor3::from_json("{\"dims\":[2,2,2],\"data\":[1.0]}").is_err());
    }
}
