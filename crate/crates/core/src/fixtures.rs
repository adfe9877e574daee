//! Small hand-written databases and weights used in tests, examples and the CLI.

use crate::attention::{LayerConfig, LayerWeights};
use crate::db::{parse_triples, Database};
use crate::tensor::Matrix;

/// Two tables (people and countries) flattened into eight facts.
pub const COUNTRIES: &str = "\
# people
Astrid born_in Singapore
Bernard born_in Singapore
Colin born_in Malaysia
Astrid lives_in Malaysia
Bernard lives_in Singapore
Colin lives_in Malaysia
# countries
Malaysia currency Ringgit
Singapore currency Dollar
";

/// Five unrelated subject/predicate pairs that all map to the same object.
pub const CONSTANT_OBJECT: &str = "\
a f v
b g v
c h v
d i v
e j v
";

/// The `born_in`/`lives_in` facts of [`COUNTRIES`], with single-letter tokens.
pub const PEOPLE_SHORT: &str = "\
a β s
b β s
c β m
a λ m
b λ s
c λ m
";

pub fn countries() -> Database {
    parse_triples(COUNTRIES).expect("fixture parses")
}

pub fn constant_object() -> Database {
    parse_triples(CONSTANT_OBJECT).expect("fixture parses")
}

pub fn people_short() -> Database {
    parse_triples(PEOPLE_SHORT).expect("fixture parses")
}

/// Single-head weights over [`people_short`]'s vocabulary whose circuits are
/// `W_EU = 0`, an all-ones `W_QK` on `{a, b, c, β, λ}`, and a value-output
/// circuit with rows `a:(0,0) b:(0,4) c:(4,0) β:(0,2) λ:(2,0)` on columns
/// `(m, s)`. `scale` multiplies the value-output circuit.
///
/// The embedding puts `a, b, c, β, λ` on coordinates 0..5 and the unembedding
/// reads `m, s` from coordinates 5 and 6, so `W_E W_U` vanishes while
/// `W_E W_V W_O W_U` does not.
pub fn worked_example_weights(db: &Database, scale: f64) -> LayerWeights {
    let n = db.vocab_size();
    let d = 7;
    let cfg = LayerConfig {
        n_vocab: n,
        n_heads: 1,
        d_model: d,
        d_head_qk: 1,
        d_head_vo: 2,
    };
    let id = |s: &str| db.id(s).expect("token in worked example");
    let attended = ["a", "b", "c", "β", "λ"];
    let value_rows = [(0.0, 0.0), (0.0, 4.0), (4.0, 0.0), (0.0, 2.0), (2.0, 0.0)];

    let mut w_e = Matrix::zeros(n, d);
    let mut w_v = Matrix::zeros(d, 2);
    for (coord, tok) in attended.iter().enumerate() {
        w_e[(id(tok), coord)] = 1.0;
        w_v[(coord, 0)] = value_rows[coord].0;
        w_v[(coord, 1)] = value_rows[coord].1;
    }
    let mut w_u = Matrix::zeros(d, n);
    w_u[(5, id("m"))] = 1.0;
    w_u[(6, id("s"))] = 1.0;
    let mut w_o = Matrix::zeros(2, d);
    w_o[(0, 5)] = scale;
    w_o[(1, 6)] = scale;
    let w_q = Matrix::from_fn(d, 1, |i, _| if i < 5 { 1.0 } else { 0.0 });
    let w_k = Matrix::from_fn(1, d, |_, j| if j < 5 { 1.0 } else { 0.0 });
    LayerWeights::from_parts(
        cfg,
        w_e,
        w_u,
        vec![crate::attention::HeadWeights { w_q, w_k, w_v, w_o }],
    )
    .expect("shapes are consistent")
}
