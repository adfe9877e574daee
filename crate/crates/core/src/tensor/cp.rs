//! CP decomposition by alternating least squares.
//!
//! `T ≈ Σ_s a_s ⊗ b_s ⊗ c_s`. Each sweep solves three linear least-squares
//! problems exactly (one factor at a time, the other two held fixed), so the
//! residual cannot increase within a restart. Exact tensor rank is NP-hard;
//! [`tensor_rank_estimate`] is a heuristic that reports the smallest rank at
//! which ALS found a near-exact fit.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Matrix, Tensor3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpConfig {
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    pub conv_tol: f64,
    pub fit_tol: f64,
}

impl Default for CpConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            restarts: 20,
            seed: 0,
            conv_tol: 1e-9,
            fit_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    pub rank: usize,
    /// `d1 × r`
    pub a: Matrix,
    /// `d2 × r`
    pub b: Matrix,
    /// `d3 × r`
    pub c: Matrix,
    /// `‖T − reconstruction‖_F / ‖T‖_F`
    pub residual: f64,
    /// Which restart produced these factors.
    pub restart: usize,
    /// Relative residual after each sweep of the winning restart.
    pub trace: Vec<f64>,
}

impl CpFactors {
    pub fn reconstruct(&self) -> Tensor3 {
        let dims = [self.a.rows(), self.b.rows(), self.c.rows()];
        reconstruct(&self.a, &self.b, &self.c, dims)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankEstimate {
    Rank(usize),
    /// No rank up to the limit produced a fit below `fit_tol`.
    ExceedsMax(usize),
}

fn reconstruct(a: &Matrix, b: &Matrix, c: &Matrix, dims: [usize; 3]) -> Tensor3 {
    let r = a.cols();
    let mut out = Tensor3::zeros(dims);
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            let fiber = out.fiber3_mut(i, j);
            for s in 0..r {
                let ab = a[(i, s)] * b[(j, s)];
                if ab == 0.0 {
                    continue;
                }
                for (k, f) in fiber.iter_mut().enumerate() {
                    *f += ab * c[(k, s)];
                }
            }
        }
    }
    out
}

fn relative_residual(t: &Tensor3, a: &Matrix, b: &Matrix, c: &Matrix, norm: f64) -> f64 {
    let rec = reconstruct(a, b, c, t.dims());
    let err: f64 = t
        .data()
        .iter()
        .zip(rec.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    err.sqrt() / norm
}

/// Permutes a tensor so that `mode` becomes the first axis; the remaining
/// axes keep their relative order.
fn unfold_to_first(t: &Tensor3, mode: usize) -> Tensor3 {
    let [d1, d2, d3] = t.dims();
    match mode {
        0 => t.clone(),
        1 => Tensor3::from_fn([d2, d1, d3], |j, i, k| t.get(i, j, k)),
        _ => Tensor3::from_fn([d3, d1, d2], |k, i, j| t.get(i, j, k)),
    }
}

/// Least-squares update of the first-axis factor of `t` given the other two.
fn solve_factor(t: &Tensor3, f2: &Matrix, f3: &Matrix) -> Matrix {
    let [n, d2, _] = t.dims();
    let r = f2.cols();
    // MTTKRP: M[i, s] = Σ_{j,k} T[i,j,k] f2[j,s] f3[k,s]
    let mut m = Matrix::zeros(n, r);
    for i in 0..n {
        for j in 0..d2 {
            let fiber = t.fiber3(i, j);
            for s in 0..r {
                let w = f2[(j, s)];
                if w == 0.0 {
                    continue;
                }
                let dot: f64 = fiber.iter().enumerate().map(|(k, x)| x * f3[(k, s)]).sum();
                m[(i, s)] += w * dot;
            }
        }
    }
    let g2 = f2.transpose().matmul(f2);
    let g3 = f3.transpose().matmul(f3);
    let gram = DMatrix::from_fn(r, r, |p, q| g2[(p, q)] * g3[(p, q)]);
    let svd = gram.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (r as f64) * f64::EPSILON * smax.max(f64::MIN_POSITIVE);
    let pinv = svd.pseudo_inverse(eps).expect("eps is non-negative");
    let mut out = Matrix::zeros(n, r);
    for i in 0..n {
        for q in 0..r {
            out[(i, q)] = (0..r).map(|p| m[(i, p)] * pinv[(p, q)]).sum();
        }
    }
    out
}

fn random_factor(rng: &mut ChaCha8Rng, rows: usize, r: usize) -> Matrix {
    let scale = 1.0 / (r as f64).sqrt();
    Matrix::from_fn(rows, r, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

fn single_run(
    t: &Tensor3,
    unfolded: &[Tensor3; 3],
    r: usize,
    cfg: &CpConfig,
    restart: usize,
    norm: f64,
) -> CpFactors {
    let [d1, d2, d3] = t.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let mut a = random_factor(&mut rng, d1, r);
    let mut b = random_factor(&mut rng, d2, r);
    let mut c = random_factor(&mut rng, d3, r);
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..cfg.max_iters.max(1) {
        a = solve_factor(&unfolded[0], &b, &c);
        b = solve_factor(&unfolded[1], &a, &c);
        c = solve_factor(&unfolded[2], &a, &b);
        let res = relative_residual(t, &a, &b, &c, norm);
        trace.push(res);
        if (prev - res).abs() < cfg.conv_tol || res < 1e-14 {
            break;
        }
        prev = res;
    }
    let residual = *trace.last().expect("at least one sweep");
    CpFactors {
        rank: r,
        a,
        b,
        c,
        residual,
        restart,
        trace,
    }
}

/// Fits a rank-`r` CP model, keeping the lowest-residual restart (ties go to
/// the lower restart index, so the result does not depend on scheduling).
pub fn cp_als(t: &Tensor3, r: usize, cfg: &CpConfig) -> Result<CpFactors> {
    let [d1, d2, d3] = t.dims();
    let norm = t.frobenius();
    if r == 0 {
        if norm > 0.0 {
            return Err(Error::InvalidRank {
                rank: 0,
                reason: "nonzero tensor needs r ≥ 1".into(),
            });
        }
        return Ok(CpFactors {
            rank: 0,
            a: Matrix::zeros(d1, 0),
            b: Matrix::zeros(d2, 0),
            c: Matrix::zeros(d3, 0),
            residual: 0.0,
            restart: 0,
            trace: vec![0.0],
        });
    }
    let cap = (d1 * d2).min(d1 * d3).min(d2 * d3);
    if r > cap {
        return Err(Error::InvalidRank {
            rank: r,
            reason: format!("exceeds min pairwise dim product {cap}"),
        });
    }
    if norm == 0.0 {
        return Ok(CpFactors {
            rank: r,
            a: Matrix::zeros(d1, r),
            b: Matrix::zeros(d2, r),
            c: Matrix::zeros(d3, r),
            residual: 0.0,
            restart: 0,
            trace: vec![0.0],
        });
    }
    let unfolded = [
        unfold_to_first(t, 0),
        unfold_to_first(t, 1),
        unfold_to_first(t, 2),
    ];
    let best = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|i| single_run(t, &unfolded, r, cfg, i, norm))
        .reduce_with(|x, y| {
            if y.residual < x.residual || (y.residual == x.residual && y.restart < x.restart) {
                y
            } else {
                x
            }
        })
        .expect("at least one restart");
    Ok(best)
}

/// Smallest `r ≤ r_max` whose best ALS fit has relative residual below
/// `cfg.fit_tol`. A heuristic: ALS can miss the optimum, so the answer is
/// an upper-bound-style estimate of tensor rank rather than a certificate.
pub fn tensor_rank_estimate(t: &Tensor3, r_max: usize, cfg: &CpConfig) -> Result<RankEstimate> {
    if r_max == 0 {
        return Err(Error::InvalidRank {
            rank: 0,
            reason: "r_max must be at least 1".into(),
        });
    }
    if t.is_zero() {
        return Ok(RankEstimate::Rank(0));
    }
    let [d1, d2, d3] = t.dims();
    let cap = (d1 * d2).min(d1 * d3).min(d2 * d3);
    for r in 1..=r_max.min(cap) {
        if cp_als(t, r, cfg)?.residual < cfg.fit_tol {
            return Ok(RankEstimate::Rank(r));
        }
    }
    Ok(RankEstimate::ExceedsMax(r_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_recovered() {
        let t = Tensor3::outer(&[1.0, -2.0, 0.5], &[3.0, 1.0], &[0.2, 0.4, -1.0, 2.0]);
        let f = cp_als(&t, 1, &CpConfig::default()).unwrap();
        assert!(f.residual < 1e-10, "residual {}", f.residual);
        assert!(f.reconstruct().max_abs_diff(&t) < 1e-9);
    }

    #[test]
    fn residual_matches_reconstruction() {
        let t = Tensor3::from_fn([3, 3, 3], |i, j, k| ((i * 7 + j * 3 + k) % 5) as f64);
        let f = cp_als(
            &t,
            2,
            &CpConfig {
                restarts: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let rec = f.reconstruct();
        let direct: f64 = t
            .data()
            .iter()
            .zip(rec.data())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((direct - f.residual * t.frobenius()).abs() < 1e-9);
    }

    #[test]
    fn residual_trace_is_monotone() {
        let t = Tensor3::from_fn([4, 3, 5], |i, j, k| {
            (((i + 1) * (j + 2) * (k + 3)) % 7) as f64 - 3.0
        });
        let f = cp_als(
            &t,
            3,
            &CpConfig {
                restarts: 4,
                max_iters: 200,
                ..Default::default()
            },
        )
        .unwrap();
        for w in f.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "residual rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_rank_cases() {
        let z = Tensor3::zeros([2, 2, 2]);
        assert_eq!(cp_als(&z, 0, &CpConfig::default()).unwrap().residual, 0.0);
        assert_eq!(
            tensor_rank_estimate(&z, 3, &CpConfig::default()).unwrap(),
            RankEstimate::Rank(0)
        );
        let one = Tensor3::outer(&[1.0], &[1.0], &[1.0]);
        assert!(matches!(
            cp_als(&one, 0, &CpConfig::default()),
            Err(Error::InvalidRank { .. })
        ));
        assert!(matches!(
            cp_als(&one, 2, &CpConfig::default()),
            Err(Error::InvalidRank { .. })
        ));
    }

    #[test]
    fn restart_selection_is_deterministic() {
        let t = Tensor3::from_fn([3, 4, 2], |i, j, k| ((i + 2 * j + 3 * k) % 3) as f64);
        let cfg = CpConfig {
            restarts: 5,
            max_iters: 100,
            seed: 9,
            ..Default::default()
        };
        let x = cp_als(&t, 2, &cfg).unwrap();
        let y = cp_als(&t, 2, &cfg).unwrap();
        assert_eq!(x, y);
    }
}
