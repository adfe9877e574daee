use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn factrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factrank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = factrank(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_db_then_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db.txt");
    ok(&[
        "gen-db",
        "--n-k",
        "5",
        "--n-q",
        "3",
        "--n-v",
        "4",
        "--n-triples",
        "8",
        "--seed",
        "3",
        "--out",
        p(&db),
    ]);
    assert_eq!(fs::read_to_string(&db).unwrap().lines().count(), 8);
    let out = ok(&[
        "bounds",
        "--db",
        p(&db),
        "--heads",
        "2",
        "--d-model",
        "4",
        "--d-vo",
        "3",
        "--d-qk",
        "1",
    ]);
    assert!(out.contains("layer rank lower estimate 10"), "{out}");
    assert!(out.contains("database rank bound"));
}

#[test]
fn infeasible_db_is_an_error() {
    let out = factrank(&[
        "gen-db",
        "--n-k",
        "2",
        "--n-q",
        "2",
        "--n-v",
        "2",
        "--n-triples",
        "5",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn train_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db.txt");
    fs::write(&db, "a β s\nb β s\nc β m\na λ m\nb λ s\nc λ m\n").unwrap();
    let out = ok(&[
        "train",
        "--db",
        p(&db),
        "--heads",
        "1",
        "--d-model",
        "4",
        "--epochs",
        "50",
        "--tau",
        "0.9",
        "--out",
        p(dir.path()),
    ]);
    assert!(out.contains("tau 0.9 accuracy"), "{out}");
    assert!(dir.path().join("weights.json").exists());
    let hist = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert!(hist.starts_with("epoch,loss,acc_argmax,acc_075,acc_095,acc_099\n"));
}

#[test]
fn corpus_sweep_heatmap_scatter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        "n_databases = 3\nn_layers = 2\nn_pairs = 4\n[db]\nmax_triples = 15\n",
    )
    .unwrap();
    let corpus = dir.path().join("corpus");
    ok(&[
        "gen-corpus",
        "--config",
        p(&cfg),
        "--seed",
        "5",
        "--epochs",
        "20",
        "--out",
        p(&corpus),
    ]);
    assert!(corpus.join("manifest.json").exists());

    let results = dir.path().join("results.csv");
    ok(&[
        "sweep",
        "--corpus",
        p(&corpus),
        "--workers",
        "2",
        "--out",
        p(&results),
    ]);
    let csv = fs::read_to_string(&results).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let svg = dir.path().join("acc.svg");
    ok(&[
        "heatmap",
        "--results",
        p(&results),
        "--tau",
        "0.95",
        "--out",
        p(&svg),
    ]);
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    assert!(fs::read_to_string(dir.path().join("acc.csv"))
        .unwrap()
        .starts_with("layer_bin,db_bin,mean,count"));
    let bad = factrank(&[
        "heatmap",
        "--results",
        p(&results),
        "--column",
        "nope",
        "--out",
        p(&svg),
    ]);
    assert!(!bad.status.success());

    let out = ok(&[
        "scatter",
        "--corpus",
        p(&corpus),
        "--out",
        p(&dir.path().join("scatter")),
    ]);
    assert!(out.contains("n_triples ~") || out.contains("too few"));
    assert_eq!(
        fs::read_to_string(dir.path().join("scatter/layers.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn rank_demo_prints_ranks() {
    let out = ok(&["rank-demo", "--n", "6", "--r", "2", "--tau", "0.75"]);
    assert!(out.contains("M,,2"), "{out}");
    assert!(out.contains("argmax(M),,6"));
    assert!(out.contains("softmax(cM),,6"));
}

#[test]
fn tiny_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    fs::write(&cfg, "vo_dims = [2]\nqk_dims = [1]\nn_seeds = 1\nn_databases = 1\ndb_bound = [3, 10]\n[db]\nmax_triples = 12\n").unwrap();
    let out = ok(&["vo-qk-grid", "--config", p(&cfg), "--epochs", "10"]);
    assert!(
        out.starts_with("d_vo,d_qk,mean_acc,n_runs,n_diverged\n2,1,"),
        "{out}"
    );
}
