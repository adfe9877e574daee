use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::DbRanges;
use super::corpus::LayerShape;
use crate::attention::init_weights;
use crate::db::{random_database, Database, DbConfig};
use crate::error::{Error, Result};
use crate::eval::Tau;
use crate::rng::{derive_seed, stream, Domain};
use crate::tensor::db_rank_upper_bound;
use crate::training::{accuracies, train, TrainConfig};

const MAX_DB_ATTEMPTS: u64 = 10_000;

/// Fixed `d_model` and `n_heads`; every `(d_vo, d_qk)` cell is trained on the
/// same databases with the same seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub master_seed: u64,
    pub d_model: usize,
    pub n_heads: usize,
    pub vo_dims: Vec<usize>,
    pub qk_dims: Vec<usize>,
    pub n_seeds: usize,
    pub n_databases: usize,
    pub db: DbRanges,
    /// Inclusive range for each database's rank upper bound.
    pub db_bound: (usize, usize),
    pub tau: f64,
    pub train: TrainConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            d_model: 4,
            n_heads: 2,
            vo_dims: vec![1, 2, 3, 4],
            qk_dims: vec![1, 2, 3, 4],
            n_seeds: 10,
            n_databases: 4,
            db: DbRanges::default(),
            db_bound: (18, 20),
            tau: 0.95,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub d_vo: usize,
    pub d_qk: usize,
    pub mean_acc: f64,
    pub n_runs: usize,
    pub n_diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub tau: f64,
    pub db_bounds: Vec<usize>,
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn get(&self, d_vo: usize, d_qk: usize) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.d_vo == d_vo && c.d_qk == d_qk)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("d_vo,d_qk,mean_acc,n_runs,n_diverged\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                c.d_vo, c.d_qk, c.mean_acc, c.n_runs, c.n_diverged
            );
        }
        s
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let dims_ok = |d: &[usize]| !d.is_empty() && d.iter().all(|&x| x >= 1 && x <= self.d_model);
        if self.d_model == 0
            || self.n_heads == 0
            || !dims_ok(&self.vo_dims)
            || !dims_ok(&self.qk_dims)
        {
            return Err(Error::InvalidConfig(
                "grid dims must satisfy 1 ≤ d_vo, d_qk ≤ d_model".into(),
            ));
        }
        if self.n_seeds == 0 || self.n_databases == 0 {
            return Err(Error::InvalidConfig(
                "grid needs at least one seed and one database".into(),
            ));
        }
        if self.db_bound.0 > self.db_bound.1 {
            return Err(Error::InvalidConfig("empty db_bound range".into()));
        }
        Tau::new(self.tau)?;
        self.train.validate()
    }

    /// Rejection-samples databases whose rank bound lies in `db_bound`.
    pub fn databases(&self) -> Result<Vec<Database>> {
        let r = &self.db;
        let mut out = Vec::with_capacity(self.n_databases);
        let mut attempt = 0;
        while out.len() < self.n_databases {
            if attempt == MAX_DB_ATTEMPTS {
                return Err(Error::SamplingFailed {
                    attempts: attempt as usize,
                });
            }
            let mut rng = stream(self.master_seed, Domain::Grid, attempt);
            let n_k = rng.gen_range(r.n_k.0..=r.n_k.1);
            let n_q = rng.gen_range(r.n_q.0..=r.n_q.1);
            let n_v = rng.gen_range(r.n_v.0..=r.n_v.1);
            let hi = r.max_triples.min(n_k * n_q);
            let n_triples = rng.gen_range(r.min_triples.min(hi)..=hi);
            let cfg = DbConfig {
                n_k,
                n_q,
                n_v,
                n_triples,
                shared_tokens: r.shared_tokens,
            };
            let db = random_database(&cfg, rng.gen())?;
            let ub = db_rank_upper_bound(&db);
            if (self.db_bound.0..=self.db_bound.1).contains(&ub) {
                out.push(db);
            }
            attempt += 1;
        }
        Ok(out)
    }
}

/// Mean thresholded accuracy for every `(d_vo, d_qk)` cell.
pub fn vo_qk_grid(cfg: &GridConfig) -> Result<GridResult> {
    cfg.validate()?;
    let dbs = cfg.databases()?;
    let tau = Tau::new(cfg.tau)?;
    let mut jobs = Vec::new();
    for &d_vo in &cfg.vo_dims {
        for &d_qk in &cfg.qk_dims {
            for s in 0..cfg.n_seeds {
                for d in 0..dbs.len() {
                    jobs.push((d_vo, d_qk, s, d));
                }
            }
        }
    }
    let outcomes: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(d_vo, d_qk, s, d)| {
            let shape = LayerShape {
                n_heads: cfg.n_heads,
                d_model: cfg.d_model,
                d_vo,
                d_qk,
            };
            let layer = shape.config(dbs[d].vocab_size());
            let seed = derive_seed(cfg.master_seed, Domain::Init, (s * dbs.len() + d) as u64);
            let tc = TrainConfig {
                seed,
                ..cfg.train
            };
            match train(init_weights(&layer, seed)?, &dbs[d], &tc) {
                Ok(t) => Ok(Some(accuracies(&t.weights, &dbs[d], &[tau])?.tau[0].1)),
                Err(Error::Diverged { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let per_cell = cfg.n_seeds * dbs.len();
    let cells = outcomes
        .chunks(per_cell)
        .zip(jobs.chunks(per_cell))
        .map(|(accs, js)| GridCell {
            d_vo: js[0].0,
            d_qk: js[0].1,
            // diverged runs count as zero accuracy
            mean_acc: accs.iter().map(|a| a.unwrap_or(0.0)).sum::<f64>() / per_cell as f64,
            n_runs: per_cell,
            n_diverged: accs.iter().filter(|a| a.is_none()).count(),
        })
        .collect();
    Ok(GridResult {
        tau: cfg.tau,
        db_bounds: dbs.iter().map(db_rank_upper_bound).collect(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GridConfig {
        let mut cfg = GridConfig {
            vo_dims: vec![1],
            qk_dims: vec![2],
            n_seeds: 2,
            n_databases: 1,
            db_bound: (3, 8),
            ..GridConfig::default()
        };
        cfg.db.max_triples = 12;
        cfg.train.max_epochs = 20;
        cfg
    }

    #[test]
    fn single_cell_grid() {
        let g = vo_qk_grid(&tiny()).unwrap();
        assert_eq!(g.cells.len(), 1);
        assert_eq!(g.cells[0].n_runs, 2);
        let csv = g.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("d_vo,d_qk,mean_acc,n_runs,n_diverged\n1,2,"));
        assert!(g.db_bounds.iter().all(|&b| (3..=8).contains(&b)));
    }

    #[test]
    fn deterministic() {
        assert_eq!(vo_qk_grid(&tiny()).unwrap(), vo_qk_grid(&tiny()).unwrap());
    }

    #[test]
    fn rejects_bad_dims() {
        let cfg = GridConfig {
            vo_dims: vec![5],
            ..GridConfig::default()
        };
        assert!(vo_qk_grid(&cfg).is_err());
    }
}
