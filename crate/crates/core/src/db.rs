//! Databases of subject–predicate–object facts.
//!
//! A [`Database`] is a finite partial function `K × Q ⇀ V`: every `(k, q)`
//! pair maps to at most one object. Tokens are interned in order of first
//! appearance, and the subject/predicate/object index sets keep the order
//! in which each token first appears in that role.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vocabulary entry. Ids are dense and match the position in the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub id: usize,
    pub text: String,
}

/// A fact `(k, q, v)` stored as vocabulary ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub k: usize,
    pub q: usize,
    pub v: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbStats {
    pub n_triples: usize,
    pub n_k: usize,
    pub n_q: usize,
    pub n_v: usize,
    pub sum_vk: usize,
    pub sum_vq: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Database {
    vocab: Vec<String>,
    lookup: HashMap<String, usize>,
    triples: Vec<Triple>,
    subjects: Vec<usize>,
    predicates: Vec<usize>,
    objects: Vec<usize>,
    // position of a token id along each axis, usize::MAX when absent
    k_pos: Vec<usize>,
    q_pos: Vec<usize>,
    v_pos: Vec<usize>,
    // object index for each (k_pos, q_pos) cell, row-major over |K|×|Q|
    table: Vec<Option<usize>>,
}

const ABSENT: usize = usize::MAX;

impl Database {
    /// Builds a database from textual triples, enforcing functionality.
    /// Each row carries its 1-based source line for error messages.
    fn build<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, &'a str, &'a str, &'a str)>,
    {
        let mut vocab: Vec<String> = Vec::new();
        let mut lookup: HashMap<String, usize> = HashMap::new();
        let mut triples = Vec::new();
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for (line, k, q, v) in rows {
            let t = Triple {
                k: intern(&mut vocab, &mut lookup, k),
                q: intern(&mut vocab, &mut lookup, q),
                v: intern(&mut vocab, &mut lookup, v),
            };
            if let Some(&existing) = seen.get(&(t.k, t.q)) {
                if existing == t.v {
                    return Err(Error::DuplicateTriple {
                        line,
                        k: k.into(),
                        q: q.into(),
                        v: v.into(),
                    });
                }
                return Err(Error::NotFunctional {
                    line,
                    k: k.into(),
                    q: q.into(),
                    existing: vocab[existing].clone(),
                    v: v.into(),
                });
            }
            seen.insert((t.k, t.q), t.v);
            triples.push(t);
        }
        if triples.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        Ok(Self::index(vocab, lookup, triples))
    }

    fn index(vocab: Vec<String>, lookup: HashMap<String, usize>, triples: Vec<Triple>) -> Self {
        let n = vocab.len();
        let mut subjects = Vec::new();
        let mut predicates = Vec::new();
        let mut objects = Vec::new();
        let mut k_pos = vec![ABSENT; n];
        let mut q_pos = vec![ABSENT; n];
        let mut v_pos = vec![ABSENT; n];
        for t in &triples {
            if k_pos[t.k] == ABSENT {
                k_pos[t.k] = subjects.len();
                subjects.push(t.k);
            }
            if q_pos[t.q] == ABSENT {
                q_pos[t.q] = predicates.len();
                predicates.push(t.q);
            }
            if v_pos[t.v] == ABSENT {
                v_pos[t.v] = objects.len();
                objects.push(t.v);
            }
        }
        let mut table = vec![None; subjects.len() * predicates.len()];
        for t in &triples {
            table[k_pos[t.k] * predicates.len() + q_pos[t.q]] = Some(t.v);
        }
        Self {
            vocab,
            lookup,
            triples,
            subjects,
            predicates,
            objects,
            k_pos,
            q_pos,
            v_pos,
            table,
        }
    }

    /// Builds a database from owned string triples.
    pub fn from_text_triples<S: AsRef<str>>(rows: &[(S, S, S)]) -> Result<Self> {
        Self::build(
            rows.iter()
                .enumerate()
                .map(|(i, (k, q, v))| (i + 1, k.as_ref(), q.as_ref(), v.as_ref())),
        )
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn tokens(&self) -> impl Iterator<Item = Token> + '_ {
        self.vocab.iter().enumerate().map(|(id, text)| Token {
            id,
            text: text.clone(),
        })
    }

    pub fn text(&self, id: usize) -> &str {
        &self.vocab[id]
    }

    pub fn id(&self, text: &str) -> Option<usize> {
        self.lookup.get(text).copied()
    }

    /// Subject tokens `K`, in order of first appearance as a subject.
    pub fn subjects(&self) -> &[usize] {
        &self.subjects
    }

    /// Predicate tokens `Q`.
    pub fn predicates(&self) -> &[usize] {
        &self.predicates
    }

    /// Object tokens `V`.
    pub fn objects(&self) -> &[usize] {
        &self.objects
    }

    pub fn k_index(&self, id: usize) -> Option<usize> {
        self.k_pos.get(id).copied().filter(|&p| p != ABSENT)
    }

    pub fn q_index(&self, id: usize) -> Option<usize> {
        self.q_pos.get(id).copied().filter(|&p| p != ABSENT)
    }

    pub fn v_index(&self, id: usize) -> Option<usize> {
        self.v_pos.get(id).copied().filter(|&p| p != ABSENT)
    }

    /// The attended-token axis `K ∪ Q`: subjects first, then predicates not
    /// already present as subjects.
    pub fn attended(&self) -> Vec<usize> {
        let mut out = self.subjects.clone();
        out.extend(
            self.predicates
                .iter()
                .copied()
                .filter(|&q| self.k_pos[q] == ABSENT),
        );
        out
    }

    /// Object of `(k, q)` when the pair is in the domain.
    pub fn lookup(&self, k: usize, q: usize) -> Option<usize> {
        let (kp, qp) = (self.k_index(k)?, self.q_index(q)?);
        self.table[kp * self.predicates.len() + qp]
    }

    /// `V_k`: distinct objects reached from subject `k`, in first-seen order.
    pub fn values_of_subject(&self, k: usize) -> Vec<usize> {
        distinct(self.triples.iter().filter(|t| t.k == k).map(|t| t.v))
    }

    /// `V_q`: distinct objects reached through predicate `q`.
    pub fn values_of_predicate(&self, q: usize) -> Vec<usize> {
        distinct(self.triples.iter().filter(|t| t.q == q).map(|t| t.v))
    }

    /// `Q_k`: predicates defined for subject `k`.
    pub fn predicates_of_subject(&self, k: usize) -> Vec<usize> {
        distinct(self.triples.iter().filter(|t| t.k == k).map(|t| t.q))
    }

    /// `K_q`: subjects on which predicate `q` is defined.
    pub fn subjects_of_predicate(&self, q: usize) -> Vec<usize> {
        distinct(self.triples.iter().filter(|t| t.q == q).map(|t| t.k))
    }

    pub fn stats(&self) -> DbStats {
        let sum_vk = self
            .subjects
            .iter()
            .map(|&k| self.values_of_subject(k).len())
            .sum();
        let sum_vq = self
            .predicates
            .iter()
            .map(|&q| self.values_of_predicate(q).len())
            .sum();
        DbStats {
            n_triples: self.triples.len(),
            n_k: self.subjects.len(),
            n_q: self.predicates.len(),
            n_v: self.objects.len(),
            sum_vk,
            sum_vq,
        }
    }

    /// Renders the database in the line-oriented triple format.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let _ = writeln!(
                out,
                "{} {} {}",
                self.vocab[t.k], self.vocab[t.q], self.vocab[t.v]
            );
        }
        out
    }
}

fn intern(vocab: &mut Vec<String>, lookup: &mut HashMap<String, usize>, s: &str) -> usize {
    if let Some(&id) = lookup.get(s) {
        return id;
    }
    let id = vocab.len();
    vocab.push(s.to_string());
    lookup.insert(s.to_string(), id);
    id
}

fn distinct(it: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for x in it {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Parses one triple per line; blank lines and lines starting with `#` are skipped.
pub fn parse_triples(text: &str) -> Result<Database> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::MalformedLine {
                line: i + 1,
                found: fields.len(),
            });
        }
        rows.push((i + 1, fields[0], fields[1], fields[2]));
    }
    Database::build(rows)
}

pub fn stats(db: &Database) -> DbStats {
    db.stats()
}

/// Shape of a randomly generated database.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbConfig {
    pub n_k: usize,
    pub n_q: usize,
    pub n_v: usize,
    pub n_triples: usize,
    #[serde(default)]
    pub shared_tokens: bool,
}

/// Samples `n_triples` distinct `(k, q)` pairs uniformly and assigns each an
/// object drawn uniformly from the `n_v` object tokens.
///
/// Pools are named `k0.., q0.., v0..` unless `shared_tokens` is set, in which
/// case all three roles draw from one pool `t0..`.
pub fn random_database(cfg: &DbConfig, seed: u64) -> Result<Database> {
    let capacity = cfg.n_k * cfg.n_q;
    if cfg.n_triples > capacity {
        return Err(Error::InfeasibleConfig {
            n_triples: cfg.n_triples,
            capacity,
        });
    }
    if cfg.n_triples == 0 || cfg.n_v == 0 {
        return Err(Error::EmptyDatabase);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = |role: char, i: usize| {
        if cfg.shared_tokens {
            format!("t{i}")
        } else {
            format!("{role}{i}")
        }
    };
    let pairs = sample(&mut rng, capacity, cfg.n_triples);
    let rows: Vec<(String, String, String)> = pairs
        .iter()
        .map(|p| {
            let v = rng.gen_range(0..cfg.n_v);
            (name('k', p / cfg.n_q), name('q', p % cfg.n_q), name('v', v))
        })
        .collect();
    Database::from_text_triples(&rows)
}
