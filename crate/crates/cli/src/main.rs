use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use factrank::experiments::{
    bin_heatmap, generate_corpus, read_results_csv, render_heatmap, run_sweep_to_file,
    scatter_tables, vo_qk_grid, Corpus, GridConfig, SweepConfig,
};
use factrank::rank_fx::rank_distortion_report;
use factrank::training::{accuracies, full_vocab_accuracies, train_from_scratch};
use factrank::{
    db_rank_upper_bound, layer_rank_bounds, memorization_condition, parse_triples, random_database,
    DbConfig, LayerConfig, Tau, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "factrank",
    version,
    about = "Database rank and attention-layer memorization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random database in the triple text format
    GenDb(GenDb),
    /// Generate and persist a sweep corpus
    GenCorpus(GenCorpus),
    /// Train one layer on one database
    Train(TrainCmd),
    /// Train every pair of a corpus and write the results CSV
    Sweep(SweepCmd),
    /// Bin sweep results into a heatmap (SVG plus CSV)
    Heatmap(HeatmapCmd),
    /// Database size and layer size against their rank bounds
    Scatter(ScatterCmd),
    /// Mean thresholded accuracy over a grid of head dimensions
    VoQkGrid(GridCmd),
    /// Rank of a Gram matrix before and after argmax/softmax
    RankDemo(RankDemoCmd),
    /// Print the database and layer rank bounds
    Bounds(BoundsCmd),
}

#[derive(Args)]
struct GenDb {
    #[arg(long)]
    n_k: usize,
    #[arg(long)]
    n_q: usize,
    #[arg(long)]
    n_v: usize,
    #[arg(long)]
    n_triples: usize,
    /// Draw subjects, predicates and objects from one token pool
    #[arg(long)]
    shared: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenCorpus {
    /// TOML sweep config; defaults apply to missing keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// 548 databases, all 364 layer shapes, 3947 pairs
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LayerArgs {
    #[arg(long, default_value_t = 1)]
    heads: usize,
    #[arg(long, default_value_t = 4)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    d_vo: usize,
    #[arg(long, default_value_t = 2)]
    d_qk: usize,
}

#[derive(Args)]
struct TrainCmd {
    /// Triple file
    #[arg(long)]
    db: PathBuf,
    #[command(flatten)]
    layer: LayerArgs,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "tau", default_values_t = [0.5, 0.75, 0.95, 0.99])]
    taus: Vec<f64>,
    /// Score against the whole vocabulary instead of the object tokens
    #[arg(long)]
    full_vocab: bool,
    /// Directory for weights.json and history.csv
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCmd {
    /// Corpus directory written by gen-corpus
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Override the corpus's epoch budget
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HeatmapCmd {
    #[arg(long)]
    results: PathBuf,
    /// Threshold column to bin (argmax accuracy if omitted)
    #[arg(long)]
    tau: Option<f64>,
    /// Explicit column name, e.g. acc_095 or loss
    #[arg(long, conflicts_with = "tau")]
    column: Option<String>,
    /// SVG path; the binned CSV is written next to it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScatterCmd {
    #[arg(long)]
    corpus: PathBuf,
    /// Directory for databases.csv and layers.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridCmd {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seeds_per_cell: Option<usize>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankDemoCmd {
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    r: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "tau", default_values_t = [0.5, 0.75, 0.95, 0.99])]
    taus: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsCmd {
    /// Triple file
    #[arg(long)]
    db: PathBuf,
    #[command(flatten)]
    layer: LayerArgs,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn taus(values: &[f64]) -> Result<Vec<Tau>> {
    Ok(values
        .iter()
        .map(|&t| Tau::new(t))
        .collect::<factrank::Result<_>>()?)
}

fn read_db(path: &Path) -> Result<factrank::Database> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_triples(&text).with_context(|| format!("parsing {}", path.display()))
}

fn layer_config(args: &LayerArgs, n_vocab: usize) -> LayerConfig {
    LayerConfig {
        n_vocab: n_vocab.max(args.d_model),
        n_heads: args.heads,
        d_model: args.d_model,
        d_head_qk: args.d_qk,
        d_head_vo: args.d_vo,
    }
}

fn column_for_tau(tau: f64) -> Result<String> {
    let t = Tau::new(tau)?;
    Ok(format!("acc_{:03}", (t.value() * 100.0).round() as u32))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDb(a) => {
            let cfg = DbConfig {
                n_k: a.n_k,
                n_q: a.n_q,
                n_v: a.n_v,
                n_triples: a.n_triples,
                shared_tokens: a.shared,
            };
            emit(
                a.out.as_deref(),
                &random_database(&cfg, a.seed)?.serialize(),
            )
        }
        Command::GenCorpus(a) => {
            let mut cfg = match (&a.config, a.full_scale) {
                (Some(p), _) => SweepConfig::from_toml(&fs::read_to_string(p)?)?,
                (None, true) => SweepConfig::full_scale(),
                (None, false) => SweepConfig::default(),
            };
            if a.full_scale {
                let big = SweepConfig::full_scale();
                (cfg.n_databases, cfg.n_layers, cfg.n_pairs) =
                    (big.n_databases, big.n_layers, big.n_pairs);
            }
            if let Some(s) = a.seed {
                cfg.master_seed = s;
            }
            if let Some(e) = a.epochs {
                cfg.train.max_epochs = e;
            }
            let corpus = generate_corpus(&cfg)?;
            corpus.write(&a.out)?;
            println!(
                "wrote {} databases, {} layers, {} pairs to {} (sha256 {})",
                corpus.databases.len(),
                corpus.layers.len(),
                corpus.pairs.len(),
                a.out.display(),
                corpus.hash()
            );
            Ok(())
        }
        Command::Train(a) => {
            let db = read_db(&a.db)?;
            let layer = layer_config(&a.layer, db.vocab_size());
            let mut cfg = TrainConfig {
                max_epochs: a.epochs,
                seed: a.seed,
                ..TrainConfig::default()
            };
            if let Some(lr) = a.lr {
                cfg.learning_rate = lr;
            }
            let report = train_from_scratch(&layer, &db, &cfg)?;
            let taus = taus(&a.taus)?;
            let acc = if a.full_vocab {
                full_vocab_accuracies(&report.weights, &db, &taus)?
            } else {
                accuracies(&report.weights, &db, &taus)?
            };
            println!(
                "epochs {} loss {:.6} argmax {:.4}",
                report.epochs_run, report.final_loss, acc.argmax
            );
            for (t, v) in &acc.tau {
                println!("tau {t} accuracy {v:.4}");
            }
            if let Some(dir) = a.out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("weights.json"), report.weights.to_json()?)?;
                fs::write(dir.join("history.csv"), report.history_csv())?;
            }
            Ok(())
        }
        Command::Sweep(a) => {
            let mut corpus = Corpus::load(&a.corpus)?;
            if let Some(e) = a.epochs {
                corpus.config.train.max_epochs = e;
            }
            let records = run_sweep_to_file(&corpus, a.workers, &a.out)?;
            let failed = records
                .iter()
                .filter(|r| r.status != factrank::experiments::Status::Ok)
                .count();
            println!(
                "{} pairs written to {} ({failed} diverged)",
                records.len(),
                a.out.display()
            );
            Ok(())
        }
        Command::Heatmap(a) => {
            let column = match (a.column, a.tau) {
                (Some(c), _) => c,
                (None, Some(t)) => column_for_tau(t)?,
                (None, None) => "acc_argmax".to_string(),
            };
            let records = read_results_csv(&fs::read_to_string(&a.results)?)?;
            let grid = bin_heatmap(&records, &column)?;
            render_heatmap(&grid, &a.out)?;
            fs::write(a.out.with_extension("csv"), grid.to_csv())?;
            println!(
                "{} records in {} cells -> {}",
                grid.total_count(),
                grid.cells.len(),
                a.out.display()
            );
            Ok(())
        }
        Command::Scatter(a) => {
            let corpus = Corpus::load(&a.corpus)?;
            let t = scatter_tables(&corpus);
            fs::create_dir_all(&a.out)?;
            fs::write(a.out.join("databases.csv"), &t.databases_csv)?;
            fs::write(a.out.join("layers.csv"), &t.layers_csv)?;
            match t.db_fit {
                Some(f) => println!(
                    "n_triples ~ {:.3} * db_rank_ub + {:.3} (through origin {:.3}, n = {})",
                    f.slope, f.intercept, f.slope_through_origin, f.n
                ),
                None => println!("too few distinct rank bounds for a fit"),
            }
            Ok(())
        }
        Command::VoQkGrid(a) => {
            let mut cfg = match &a.config {
                Some(p) => toml::from_str(&fs::read_to_string(p)?)?,
                None => GridConfig::default(),
            };
            if let Some(s) = a.seed {
                cfg.master_seed = s;
            }
            if let Some(e) = a.epochs {
                cfg.train.max_epochs = e;
            }
            if let Some(t) = a.tau {
                cfg.tau = t;
            }
            if let Some(n) = a.seeds_per_cell {
                cfg.n_seeds = n;
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(a.workers.max(1))
                .build()?;
            let grid = pool.install(|| vo_qk_grid(&cfg))?;
            emit(a.out.as_deref(), &grid.to_csv())
        }
        Command::RankDemo(a) => {
            let report = rank_distortion_report(a.n, a.r, &taus(&a.taus)?, a.seed)?;
            println!("scale c = {}", report.scale);
            emit(a.out.as_deref(), &report.to_csv())
        }
        Command::Bounds(a) => {
            let db = read_db(&a.db)?;
            let layer = layer_config(&a.layer, db.vocab_size());
            layer.validate()?;
            let s = db.stats();
            let b = layer_rank_bounds(&layer, &db);
            println!(
                "triples {}  |K| {}  |Q| {}  |V| {}",
                s.n_triples, s.n_k, s.n_q, s.n_v
            );
            println!("sum |V_k| {}  sum |V_q| {}", s.sum_vk, s.sum_vq);
            println!("database rank bound {}", db_rank_upper_bound(&db));
            println!(
                "layer rank lower estimate {}  upper bound {}",
                b.lower_estimate, b.upper_bound
            );
            println!(
                "memorization condition {}",
                memorization_condition(&layer, &db)
            );
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_columns() {
        assert_eq!(column_for_tau(0.95).unwrap(), "acc_095");
        assert_eq!(column_for_tau(0.5).unwrap(), "acc_050");
        assert!(column_for_tau(0.3).is_err());
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
