use std::fmt::Write as _;

use super::corpus::Corpus;
use crate::error::{Error, Result};
use crate::tensor::db_rank_upper_bound;

/// Ordinary least squares `y ≈ intercept + slope · x`, plus the slope of the
/// fit through the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_through_origin: f64,
    pub n: usize,
}

pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Precondition(
            "a linear fit needs at least two points".into(),
        ));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    let xx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let xy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        slope_through_origin: xy / xx,
        n,
    })
}

#[derive(Debug, Clone)]
pub struct ScatterTables {
    /// `db_id,n_triples,db_rank_ub`
    pub databases_csv: String,
    /// `layer_id,n_params,layer_lb`
    pub layers_csv: String,
    /// Fit of `n_triples` against `db_rank_ub`; `None` with fewer than two
    /// distinct bounds.
    pub db_fit: Option<LinearFit>,
}

/// Per-database and per-layer-shape size against rank bound.
pub fn scatter_tables(corpus: &Corpus) -> ScatterTables {
    let mut databases_csv = String::from("db_id,n_triples,db_rank_ub\n");
    let mut pts = Vec::new();
    for d in &corpus.databases {
        let ub = db_rank_upper_bound(&d.db);
        let _ = writeln!(databases_csv, "{},{},{ub}", d.id, d.db.len());
        pts.push((ub as f64, d.db.len() as f64));
    }
    let mut layers_csv = String::from("layer_id,n_params,layer_lb\n");
    for (i, l) in corpus.layers.iter().enumerate() {
        let _ = writeln!(layers_csv, "{i},{},{}", l.n_params(), l.lower_estimate());
    }
    ScatterTables {
        databases_csv,
        layers_csv,
        db_fit: linear_fit(&pts).ok(),
    }
}
