use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::STANDARD_TAUS;
use super::corpus::{Corpus, Pair};
use crate::attention::{init_weights, layer_rank_bounds};
use crate::error::{Error, Result};
use crate::eval::Tau;
use crate::rng::{derive_seed, Domain};
use crate::tensor::db_rank_upper_bound;
use crate::training::{accuracies, train, TrainConfig};

pub const RESULTS_HEADER: &str =
    "pair_id,db_id,n_triples,db_rank_ub,n_heads,d_model,d_vo,d_qk,n_params,\
layer_lb,layer_ub,loss,acc_argmax,acc_050,acc_075,acc_095,acc_099,epochs,seed,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Diverged,
}

/// One trained `(database, layer)` pair. Diverged pairs keep their shape
/// columns, a NaN loss and zero accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub pair_id: usize,
    pub db_id: usize,
    pub n_triples: usize,
    pub db_rank_ub: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_vo: usize,
    pub d_qk: usize,
    pub n_params: usize,
    pub layer_lb: usize,
    pub layer_ub: usize,
    pub loss: f64,
    pub acc_argmax: f64,
    pub acc_050: f64,
    pub acc_075: f64,
    pub acc_095: f64,
    pub acc_099: f64,
    pub epochs: usize,
    pub seed: u64,
    pub status: Status,
}

impl ResultRecord {
    /// Value of a named numeric column.
    pub fn column(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "loss" => self.loss,
            "acc_argmax" => self.acc_argmax,
            "acc_050" => self.acc_050,
            "acc_075" => self.acc_075,
            "acc_095" => self.acc_095,
            "acc_099" => self.acc_099,
            _ => return Err(Error::UnknownColumn(name.to_string())),
        })
    }

    /// `argmax ≥ τ=0.5 ≥ 0.75 ≥ 0.95 ≥ 0.99`
    pub fn tau_chain_holds(&self) -> bool {
        self.acc_argmax >= self.acc_050
            && self.acc_050 >= self.acc_075
            && self.acc_075 >= self.acc_095
            && self.acc_095 >= self.acc_099
    }
}

pub fn results_csv(records: &[ResultRecord]) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(RESULTS_HEADER.split(','))
        .expect("in-memory CSV write");
    for r in records {
        w.serialize(r).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

pub fn read_results_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != RESULTS_HEADER {
        return Err(Error::Parse("results CSV header mismatch".into()));
    }
    rd.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(e.to_string()))
}

/// Trains one pair from its derived seed.
pub fn run_pair(corpus: &Corpus, pair: &Pair) -> Result<ResultRecord> {
    let cdb = corpus
        .databases
        .get(pair.db_id)
        .ok_or(Error::IndexOutOfRange {
            index: pair.db_id,
            len: corpus.databases.len(),
        })?;
    let shape = corpus
        .layers
        .get(pair.layer_id)
        .ok_or(Error::IndexOutOfRange {
            index: pair.layer_id,
            len: corpus.layers.len(),
        })?;
    let db = &cdb.db;
    let layer = shape.config(db.vocab_size());
    let bounds = layer_rank_bounds(&layer, db);
    let seed = derive_seed(corpus.config.master_seed, Domain::Init, pair.id as u64);
    let mut rec = ResultRecord {
        pair_id: pair.id,
        db_id: pair.db_id,
        n_triples: db.len(),
        db_rank_ub: db_rank_upper_bound(db),
        n_heads: shape.n_heads,
        d_model: shape.d_model,
        d_vo: shape.d_vo,
        d_qk: shape.d_qk,
        n_params: layer.n_params(),
        layer_lb: bounds.lower_estimate,
        layer_ub: bounds.upper_bound,
        loss: f64::NAN,
        acc_argmax: 0.0,
        acc_050: 0.0,
        acc_075: 0.0,
        acc_095: 0.0,
        acc_099: 0.0,
        epochs: 0,
        seed,
        status: Status::Diverged,
    };
    let cfg = TrainConfig {
        seed,
        ..corpus.config.train
    };
    let trained = match train(init_weights(&layer, seed)?, db, &cfg) {
        Ok(t) => t,
        Err(Error::Diverged { epoch, loss }) => {
            log::warn!("pair {} diverged at epoch {epoch} (loss {loss})", pair.id);
            rec.epochs = epoch;
            return Ok(rec);
        }
        Err(e) => return Err(e),
    };
    let taus = STANDARD_TAUS.map(|t| Tau::new(t).expect("standard taus are valid"));
    let acc = accuracies(&trained.weights, db, &taus)?;
    rec.loss = trained.final_loss;
    rec.acc_argmax = acc.argmax;
    [rec.acc_050, rec.acc_075, rec.acc_095, rec.acc_099] =
        [acc.tau[0].1, acc.tau[1].1, acc.tau[2].1, acc.tau[3].1];
    rec.epochs = trained.epochs_run;
    rec.status = Status::Ok;
    Ok(rec)
}

/// Trains every pair on `workers` threads; records come back sorted by pair id.
pub fn run_sweep(corpus: &Corpus, workers: usize) -> Result<Vec<ResultRecord>> {
    run_with_journal(corpus, workers, BTreeMap::new(), None)
}

fn run_with_journal(
    corpus: &Corpus,
    workers: usize,
    mut done: BTreeMap<usize, ResultRecord>,
    journal: Option<&Mutex<File>>,
) -> Result<Vec<ResultRecord>> {
    let todo: Vec<&Pair> = corpus
        .pairs
        .iter()
        .filter(|p| !done.contains_key(&p.id))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let fresh: Vec<ResultRecord> = pool.install(|| {
        todo.par_iter()
            .map(|p| {
                let rec = run_pair(corpus, p)?;
                if let Some(j) = journal {
                    let line = serde_json::to_string(&rec)?;
                    let mut f = j.lock().expect("journal lock");
                    writeln!(f, "{line}")?;
                    f.flush()?;
                }
                Ok(rec)
            })
            .collect::<Result<_>>()
    })?;
    for r in fresh {
        done.insert(r.pair_id, r);
    }
    Ok(done.into_values().collect())
}

fn journal_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".journal");
    out.with_file_name(name)
}

/// Completed records from a journal written for this corpus. A torn final
/// line (from an interrupted write) is dropped.
fn read_journal(path: &Path, corpus_hash: &str) -> Result<BTreeMap<usize, ResultRecord>> {
    let mut done = BTreeMap::new();
    let Ok(f) = File::open(path) else {
        return Ok(done);
    };
    let mut lines = BufReader::new(f).lines();
    match lines.next().transpose()? {
        Some(h) if h == format!("corpus {corpus_hash}") => {}
        Some(_) => {
            return Err(Error::Parse(format!(
                "journal {} belongs to another corpus",
                path.display()
            )))
        }
        None => return Ok(done),
    }
    for line in lines {
        match serde_json::from_str::<ResultRecord>(&line?) {
            Ok(r) => {
                done.insert(r.pair_id, r);
            }
            Err(e) => log::warn!("skipping unreadable journal line: {e}"),
        }
    }
    Ok(done)
}

/// Runs the sweep, journaling each finished pair next to `out` so an
/// interrupted run resumes where it stopped, then writes the results CSV.
pub fn run_sweep_to_file(corpus: &Corpus, workers: usize, out: &Path) -> Result<Vec<ResultRecord>> {
    let hash = corpus.hash();
    let jpath = journal_path(out);
    let done = read_journal(&jpath, &hash)?;
    if !done.is_empty() {
        log::info!(
            "resuming: {} of {} pairs already done",
            done.len(),
            corpus.pairs.len()
        );
    }
    // rewrite the journal so a torn tail never merges with new lines
    let mut f = File::create(&jpath)?;
    writeln!(f, "corpus {hash}")?;
    for r in done.values() {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    f.flush()?;
    let journal = Mutex::new(f);
    let records = run_with_journal(corpus, workers, done, Some(&journal))?;
    fs::write(out, results_csv(&records))?;
    Ok(records)
}
