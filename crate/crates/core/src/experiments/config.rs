use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::TrainConfig;

/// Thresholds recorded for every sweep result.
pub const STANDARD_TAUS: [f64; 4] = [0.5, 0.75, 0.95, 0.99];

/// Inclusive ranges for random database shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DbRanges {
    pub n_k: (usize, usize),
    pub n_q: (usize, usize),
    pub n_v: (usize, usize),
    pub min_triples: usize,
    pub max_triples: usize,
    pub shared_tokens: bool,
}

impl Default for DbRanges {
    fn default() -> Self {
        Self {
            n_k: (4, 40),
            n_q: (1, 8),
            n_v: (2, 12),
            min_triples: 4,
            max_triples: 200,
            shared_tokens: false,
        }
    }
}

/// Layer shapes satisfy `1 ≤ d_head_vo, d_head_qk ≤ d_model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayerRanges {
    pub d_model: (usize, usize),
    pub n_heads: (usize, usize),
}

impl Default for LayerRanges {
    fn default() -> Self {
        Self {
            d_model: (1, 6),
            n_heads: (1, 4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub master_seed: u64,
    pub n_databases: usize,
    pub n_layers: usize,
    pub n_pairs: usize,
    pub db: DbRanges,
    pub layer: LayerRanges,
    pub train: TrainConfig,
    /// Allow ranges beyond `d_model ≤ 6`, `n_heads ≤ 4`.
    pub allow_large: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            n_databases: 50,
            n_layers: 40,
            n_pairs: 300,
            db: DbRanges::default(),
            layer: LayerRanges::default(),
            train: TrainConfig::default(),
            allow_large: false,
        }
    }
}

fn check_range(name: &str, (lo, hi): (usize, usize)) -> Result<()> {
    if lo == 0 || lo > hi {
        return Err(Error::InvalidConfig(format!(
            "{name} range ({lo}, {hi}) must satisfy 1 ≤ lo ≤ hi"
        )));
    }
    Ok(())
}

impl SweepConfig {
    /// The corpus sizes used for the published experiments: 548 databases,
    /// every one of the 364 admissible layer shapes, and 3947 pairs.
    pub fn full_scale() -> Self {
        Self {
            n_databases: 548,
            n_layers: 364,
            n_pairs: 3947,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_range("n_k", self.db.n_k)?;
        check_range("n_q", self.db.n_q)?;
        check_range("n_v", self.db.n_v)?;
        check_range("d_model", self.layer.d_model)?;
        check_range("n_heads", self.layer.n_heads)?;
        if !self.allow_large && (self.layer.d_model.1 > 6 || self.layer.n_heads.1 > 4) {
            return Err(Error::InvalidConfig(
                "layer ranges exceed d_model ≤ 6, n_heads ≤ 4; set allow_large".into(),
            ));
        }
        if self.db.min_triples == 0 || self.db.min_triples > self.db.max_triples {
            return Err(Error::InvalidConfig(
                "need 1 ≤ min_triples ≤ max_triples".into(),
            ));
        }
        if self.db.min_triples > self.db.n_k.1 * self.db.n_q.1 {
            return Err(Error::InvalidConfig(
                "min_triples exceeds the largest n_k · n_q".into(),
            ));
        }
        if self.n_databases == 0 || self.n_layers == 0 {
            return Err(Error::InvalidConfig(
                "corpus needs at least one database and one layer".into(),
            ));
        }
        self.train.validate()
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}
