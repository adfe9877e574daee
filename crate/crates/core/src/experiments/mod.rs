//! Seeded sweeps over random databases and layer shapes, and the tables and
//! figures summarising them.

mod config;
mod corpus;
mod grid;
mod heatmap;
mod scatter;
mod sweep;

pub use config::{DbRanges, LayerRanges, SweepConfig, STANDARD_TAUS};
pub use corpus::{all_layer_shapes, generate_corpus, Corpus, CorpusDb, LayerShape, Pair};
pub use grid::{vo_qk_grid, GridCell, GridConfig, GridResult};
pub use heatmap::{bin_heatmap, render_heatmap, render_svg, Cell, HeatmapGrid, DB_BIN, LAYER_BIN};
pub use scatter::{linear_fit, scatter_tables, LinearFit, ScatterTables};
pub use sweep::{
    read_results_csv, results_csv, run_pair, run_sweep, run_sweep_to_file, ResultRecord, Status,
    RESULTS_HEADER,
};
