use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::SweepConfig;
use crate::attention::LayerConfig;
use crate::db::{parse_triples, random_database, Database, DbConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, Domain};

/// A layer shape without a vocabulary; the vocabulary comes from the database
/// it is paired with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerShape {
    pub n_heads: usize,
    pub d_model: usize,
    pub d_vo: usize,
    pub d_qk: usize,
}

impl LayerShape {
    pub fn n_params(&self) -> usize {
        2 * self.n_heads * self.d_model * (self.d_vo + self.d_qk)
    }

    /// `d_model + n_heads · d_vo`
    pub fn lower_estimate(&self) -> usize {
        self.d_model + self.n_heads * self.d_vo
    }

    /// Layer config for a database with `n_vocab` tokens. The vocabulary is
    /// never smaller than `d_model`.
    pub fn config(&self, n_vocab: usize) -> LayerConfig {
        LayerConfig {
            n_vocab: n_vocab.max(self.d_model),
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_head_qk: self.d_qk,
            d_head_vo: self.d_vo,
        }
    }
}

/// Every shape with `d_vo, d_qk ≤ d_model` inside the given ranges, in
/// `(n_heads, d_model, d_vo, d_qk)` order.
pub fn all_layer_shapes(d_model: (usize, usize), n_heads: (usize, usize)) -> Vec<LayerShape> {
    let mut out = Vec::new();
    for h in n_heads.0..=n_heads.1 {
        for d in d_model.0..=d_model.1 {
            for vo in 1..=d {
                for qk in 1..=d {
                    out.push(LayerShape {
                        n_heads: h,
                        d_model: d,
                        d_vo: vo,
                        d_qk: qk,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CorpusDb {
    pub id: usize,
    pub config: DbConfig,
    pub db: Database,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    #[serde(rename = "pair_id")]
    pub id: usize,
    pub db_id: usize,
    pub layer_id: usize,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub config: SweepConfig,
    pub databases: Vec<CorpusDb>,
    pub layers: Vec<LayerShape>,
    pub pairs: Vec<Pair>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    master_seed: u64,
    n_databases: usize,
    n_layers: usize,
    n_pairs: usize,
    sha256: String,
    config: SweepConfig,
}

fn random_db_config(cfg: &SweepConfig, index: usize) -> DbConfig {
    let mut rng = stream(cfg.master_seed, Domain::DbShape, index as u64);
    let r = &cfg.db;
    let n_k = rng.gen_range(r.n_k.0..=r.n_k.1);
    let n_q = rng.gen_range(r.n_q.0..=r.n_q.1);
    let n_v = rng.gen_range(r.n_v.0..=r.n_v.1);
    let hi = r.max_triples.min(n_k * n_q);
    let lo = r.min_triples.min(hi);
    let n_triples = rng.gen_range(lo..=hi);
    DbConfig {
        n_k,
        n_q,
        n_v,
        n_triples,
        shared_tokens: r.shared_tokens,
    }
}

/// Samples databases, layer shapes and `(database, layer)` pairings, all
/// keyed by the master seed.
pub fn generate_corpus(cfg: &SweepConfig) -> Result<Corpus> {
    cfg.validate()?;
    let databases = (0..cfg.n_databases)
        .map(|id| {
            let config = random_db_config(cfg, id);
            let db = random_database(
                &config,
                derive_seed(cfg.master_seed, Domain::DbContent, id as u64),
            )?;
            Ok(CorpusDb { id, config, db })
        })
        .collect::<Result<Vec<_>>>()?;

    let shapes = all_layer_shapes(cfg.layer.d_model, cfg.layer.n_heads);
    if cfg.n_layers > shapes.len() {
        return Err(Error::InvalidConfig(format!(
            "{} layer configs requested but only {} shapes are admissible",
            cfg.n_layers,
            shapes.len()
        )));
    }
    let mut picked = sample(
        &mut stream(cfg.master_seed, Domain::Layer, 0),
        shapes.len(),
        cfg.n_layers,
    )
    .into_vec();
    picked.sort_unstable();
    let layers: Vec<LayerShape> = picked.into_iter().map(|i| shapes[i]).collect();

    let total = cfg.n_databases * cfg.n_layers;
    if cfg.n_pairs > total {
        return Err(Error::InvalidConfig(format!(
            "{} pairs requested from {} combinations",
            cfg.n_pairs, total
        )));
    }
    let mut combos = sample(
        &mut stream(cfg.master_seed, Domain::Pairing, 0),
        total,
        cfg.n_pairs,
    )
    .into_vec();
    combos.sort_unstable();
    let pairs = combos
        .into_iter()
        .enumerate()
        .map(|(id, c)| Pair {
            id,
            db_id: c / cfg.n_layers,
            layer_id: c % cfg.n_layers,
        })
        .collect();
    Ok(Corpus {
        config: cfg.clone(),
        databases,
        layers,
        pairs,
    })
}

fn db_file(id: usize) -> String {
    format!("db_{id:05}.txt")
}

#[derive(Serialize, Deserialize)]
struct DbRow {
    db_id: usize,
    n_k: usize,
    n_q: usize,
    n_v: usize,
    n_triples: usize,
    shared_tokens: bool,
}

#[derive(Serialize, Deserialize)]
struct LayerRow {
    layer_id: usize,
    n_heads: usize,
    d_model: usize,
    d_vo: usize,
    d_qk: usize,
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

fn from_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    csv::Reader::from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

impl Corpus {
    pub fn databases_csv(&self) -> String {
        to_csv(self.databases.iter().map(|d| DbRow {
            db_id: d.id,
            n_k: d.config.n_k,
            n_q: d.config.n_q,
            n_v: d.config.n_v,
            n_triples: d.config.n_triples,
            shared_tokens: d.config.shared_tokens,
        }))
    }

    pub fn layers_csv(&self) -> String {
        to_csv(
            self.layers
                .iter()
                .enumerate()
                .map(|(layer_id, s)| LayerRow {
                    layer_id,
                    n_heads: s.n_heads,
                    d_model: s.d_model,
                    d_vo: s.d_vo,
                    d_qk: s.d_qk,
                }),
        )
    }

    pub fn pairs_csv(&self) -> String {
        to_csv(&self.pairs)
    }

    /// SHA-256 over every persisted artifact except the manifest itself.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.databases {
            h.update(db_file(d.id).as_bytes());
            h.update(d.db.serialize().as_bytes());
        }
        h.update(self.databases_csv().as_bytes());
        h.update(self.layers_csv().as_bytes());
        h.update(self.pairs_csv().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn manifest(&self) -> Manifest {
        Manifest {
            master_seed: self.config.master_seed,
            n_databases: self.databases.len(),
            n_layers: self.layers.len(),
            n_pairs: self.pairs.len(),
            sha256: self.hash(),
            config: self.config.clone(),
        }
    }

    pub fn manifest_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.manifest())?)
    }

    /// Writes `manifest.json`, `databases.csv`, `layers.csv`, `pairs.csv` and
    /// one triple file per database under `databases/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let db_dir = dir.join("databases");
        fs::create_dir_all(&db_dir)?;
        for d in &self.databases {
            fs::write(db_dir.join(db_file(d.id)), d.db.serialize())?;
        }
        fs::write(dir.join("databases.csv"), self.databases_csv())?;
        fs::write(dir.join("layers.csv"), self.layers_csv())?;
        fs::write(dir.join("pairs.csv"), self.pairs_csv())?;
        fs::write(dir.join("manifest.json"), self.manifest_json()? + "\n")?;
        Ok(())
    }

    /// Loads a corpus written by [`Corpus::write`], checking the manifest hash.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        let databases = from_csv::<DbRow>(&dir.join("databases.csv"))?
            .into_iter()
            .map(|r| {
                let config = DbConfig {
                    n_k: r.n_k,
                    n_q: r.n_q,
                    n_v: r.n_v,
                    n_triples: r.n_triples,
                    shared_tokens: r.shared_tokens,
                };
                let db = parse_triples(&fs::read_to_string(
                    dir.join("databases").join(db_file(r.db_id)),
                )?)?;
                Ok(CorpusDb {
                    id: r.db_id,
                    config,
                    db,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let layers = from_csv::<LayerRow>(&dir.join("layers.csv"))?
            .into_iter()
            .map(|r| LayerShape {
                n_heads: r.n_heads,
                d_model: r.d_model,
                d_vo: r.d_vo,
                d_qk: r.d_qk,
            })
            .collect();
        let pairs = from_csv(&dir.join("pairs.csv"))?;
        let corpus = Corpus {
            config: manifest.config,
            databases,
            layers,
            pairs,
        };
        if corpus.hash() != manifest.sha256 {
            return Err(Error::Parse(format!(
                "corpus in {} does not match its manifest hash",
                dir.display()
            )));
        }
        Ok(corpus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admissible_shape_count() {
        assert_eq!(all_layer_shapes((1, 6), (1, 4)).len(), 364);
        assert_eq!(
            all_layer_shapes((1, 1), (1, 1)),
            vec![LayerShape {
                n_heads: 1,
                d_model: 1,
                d_vo: 1,
                d_qk: 1
            }]
        );
    }

    #[test]
    fn shape_arithmetic() {
        let l = LayerShape {
            n_heads: 4,
            d_model: 6,
            d_vo: 6,
            d_qk: 6,
        };
        assert_eq!(l.n_params(), 576);
        assert_eq!(l.lower_estimate(), 30);
        assert_eq!(l.config(3).n_vocab, 6);
        assert_eq!(l.config(40).n_vocab, 40);
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let cfg = SweepConfig::default();
        let a = generate_corpus(&cfg).unwrap();
        assert_eq!(
            (a.databases.len(), a.layers.len(), a.pairs.len()),
            (50, 40, 300)
        );
        assert!(a
            .databases
            .iter()
            .all(|d| d.db.len() <= 200 && d.db.len() == d.config.n_triples));
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a.hash(), b.hash());
        let other = generate_corpus(&SweepConfig {
            master_seed: 1,
            ..cfg
        })
        .unwrap();
        assert_ne!(a.hash(), other.hash());
    }

    #[test]
    fn write_then_load() {
        let cfg = SweepConfig {
            n_databases: 3,
            n_layers: 4,
            n_pairs: 5,
            ..SweepConfig::default()
        };
        let c = generate_corpus(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        let back = Corpus::load(dir.path()).unwrap();
        assert_eq!(back.hash(), c.hash());
        assert_eq!(back.pairs, c.pairs);
        fs::write(
            dir.path().join("pairs.csv"),
            "pair_id,db_id,layer_id\n0,0,0\n",
        )
        .unwrap();
        assert!(Corpus::load(dir.path()).is_err());
    }

    #[test]
    fn full_scale_uses_every_shape() {
        let cfg = SweepConfig::full_scale();
        let c = generate_corpus(&cfg).unwrap();
        assert_eq!(
            (c.databases.len(), c.layers.len(), c.pairs.len()),
            (548, 364, 3947)
        );
        assert_eq!(c.layers, all_layer_shapes((1, 6), (1, 4)));
    }
}
