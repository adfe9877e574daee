//! How row-wise argmax and softmax can inflate matrix rank.
//!
//! The Gram matrix of `n` distinct unit vectors in `R^r` has rank `r`, a unit
//! diagonal and off-diagonal entries below one, so its row-wise argmax is the
//! `n × n` identity. Scaling it by a large enough `c` makes `exp(cM)` strictly
//! diagonally dominant row by row, and then `softmax(cM)` is invertible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{argmax_rows, softmax_rows, softmax_threshold, Tau};
use crate::tensor::{matrix_rank, Matrix, RankTol};

const MAX_ATTEMPTS: usize = 1000;
/// Largest exponent `c · max|M|` the scale search will accept.
pub const EXP_GUARD: f64 = 700.0;
pub const SCALE_RESOLUTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SpherePointSet {
    /// `n × r`, one unit vector per row.
    pub points: Matrix,
    /// `min_{i≠j} 1 − ⟨v_i, v_j⟩`
    pub min_pairwise_gap: f64,
}

impl SpherePointSet {
    pub fn n(&self) -> usize {
        self.points.rows()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }
}

fn min_gap(points: &Matrix) -> f64 {
    let n = points.rows();
    let mut gap = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            let ip: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j))
                .map(|(a, b)| a * b)
                .sum();
            gap = gap.min(1.0 - ip);
        }
    }
    gap
}

/// `n` normalized standard-normal draws in `R^r`, resampled until every pair
/// is at least `min_gap` apart and the points span `R^r`.
pub fn sphere_points(
    n: usize,
    r: usize,
    seed: u64,
    min_gap_required: f64,
) -> Result<SpherePointSet> {
    if r < 2 || n < r {
        return Err(Error::Precondition(format!(
            "need n ≥ r ≥ 2, got n = {n}, r = {r}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut pts = Matrix::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng));
        for i in 0..n {
            let norm = pts.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            pts.row_mut(i).iter_mut().for_each(|x| *x /= norm);
        }
        let gap = min_gap(&pts);
        if gap >= min_gap_required && matrix_rank(&pts, RankTol::Auto)? == r {
            return Ok(SpherePointSet {
                points: pts,
                min_pairwise_gap: gap,
            });
        }
    }
    Err(Error::SamplingFailed {
        attempts: MAX_ATTEMPTS,
    })
}

/// The standard basis of `R^n`.
pub fn basis_points(n: usize) -> SpherePointSet {
    SpherePointSet {
        points: Matrix::identity(n),
        min_pairwise_gap: if n > 1 { 1.0 } else { f64::INFINITY },
    }
}

pub fn gram(pts: &SpherePointSet) -> Matrix {
    pts.points.matmul(&pts.points.transpose())
}

fn dominant_at(m: &Matrix, c: f64) -> bool {
    (0..m.rows()).all(|i| {
        let diag = m[(i, i)];
        // e^{c M_ii} > Σ_{j≠i} e^{c M_ij}, divided through by e^{c M_ii}
        let off: f64 = (0..m.cols())
            .filter(|&j| j != i)
            .map(|j| (c * (m[(i, j)] - diag)).exp())
            .sum();
        off < 1.0
    })
}

/// Whether `exp(cM)` is strictly diagonally dominant in every row.
pub fn is_dominant(m: &Matrix, c: f64) -> bool {
    dominant_at(m, c)
}

/// Smallest `c` (to within [`SCALE_RESOLUTION`]) making `exp(cM)` strictly
/// row-diagonally dominant, found by doubling and then bisection.
pub fn dominance_scale(m: &Matrix) -> Result<f64> {
    let n = m.rows();
    if n != m.cols() || n == 0 {
        return Err(Error::Precondition(
            "dominance_scale needs a non-empty square matrix".into(),
        ));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("dominance_scale input".into()));
    }
    for i in 0..n {
        if (0..n).any(|j| j != i && m[(i, j)] >= m[(i, i)]) {
            return Err(Error::Precondition(format!(
                "row {i} is not strictly diagonal-dominant"
            )));
        }
    }
    let max_abs = m.data().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let guard = |c: f64| max_abs > 0.0 && c * max_abs > EXP_GUARD;

    let mut hi = SCALE_RESOLUTION;
    if dominant_at(m, hi) {
        return Ok(hi);
    }
    let mut lo = hi;
    while !dominant_at(m, hi) {
        lo = hi;
        hi *= 2.0;
        if guard(hi) {
            return Err(Error::ScaleUnreachable { c: hi });
        }
    }
    while hi - lo > SCALE_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if dominant_at(m, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankDistortion {
    pub n: usize,
    pub r: usize,
    pub scale: f64,
    pub rank_m: usize,
    pub rank_argmax: usize,
    pub rank_softmax: usize,
    /// `(τ, rank of softmax_{≥τ}(cM))`
    pub rank_threshold: Vec<(f64, usize)>,
}

impl RankDistortion {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("quantity,tau,rank\n");
        s.push_str(&format!(
            "M,,{}\nargmax(M),,{}\nsoftmax(cM),,{}\n",
            self.rank_m, self.rank_argmax, self.rank_softmax
        ));
        for (t, r) in &self.rank_threshold {
            s.push_str(&format!("softmax_threshold(cM),{t},{r}\n"));
        }
        s
    }
}

/// Ranks of a Gram matrix `M` and of argmax/softmax/thresholded softmax
/// applied to it (the latter two at the dominance scale). `n == r` uses the
/// standard basis.
pub fn rank_distortion_report(
    n: usize,
    r: usize,
    taus: &[Tau],
    seed: u64,
) -> Result<RankDistortion> {
    let pts = if n == r {
        basis_points(n)
    } else {
        sphere_points(n, r, seed, 1e-3)?
    };
    if n < r || r < 2 {
        return Err(Error::Precondition(format!(
            "need n ≥ r ≥ 2, got n = {n}, r = {r}"
        )));
    }
    let m = gram(&pts);
    let c = dominance_scale(&m)?;
    let scaled = m.scale(c);
    let rank_threshold = taus
        .iter()
        .map(|&t| {
            Ok((
                t.value(),
                matrix_rank(&softmax_threshold(&scaled, t), RankTol::Auto)?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(RankDistortion {
        n,
        r,
        scale: c,
        rank_m: matrix_rank(&m, RankTol::Auto)?,
        rank_argmax: matrix_rank(&argmax_rows(&m), RankTol::Auto)?,
        rank_softmax: matrix_rank(&softmax_rows(&scaled), RankTol::Auto)?,
        rank_threshold,
    })
}
