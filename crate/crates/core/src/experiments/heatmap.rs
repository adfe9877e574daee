use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::sweep::{ResultRecord, Status};
use crate::error::{Error, Result};

/// Bin width along the layer-bound axis.
pub const LAYER_BIN: usize = 5;
/// Bin width along the database-bound axis.
pub const DB_BIN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub sum: f64,
    pub count: usize,
}

impl Cell {
    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }
}

/// Mean of one accuracy column per `(layer bin, database bin)`, keyed by the
/// right edges `i` and `j` of the bins `(i − 5, i]` and `(j − 10, j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub column: String,
    pub layer_bin: usize,
    pub db_bin: usize,
    pub cells: BTreeMap<(usize, usize), Cell>,
}

/// Right edge of the width-`w` bin holding `x` (`x = 0` maps to 0).
fn right_edge(x: usize, w: usize) -> usize {
    x.div_ceil(w) * w
}

impl HeatmapGrid {
    pub fn empty(column: &str) -> Self {
        Self {
            column: column.to_string(),
            layer_bin: LAYER_BIN,
            db_bin: DB_BIN,
            cells: BTreeMap::new(),
        }
    }

    pub fn cell_of(&self, layer_bound: usize, db_bound: usize) -> (usize, usize) {
        (
            right_edge(layer_bound, self.layer_bin),
            right_edge(db_bound, self.db_bin),
        )
    }

    pub fn add(&mut self, layer_bound: usize, db_bound: usize, value: f64) {
        let c = self
            .cells
            .entry(self.cell_of(layer_bound, db_bound))
            .or_insert(Cell { sum: 0.0, count: 0 });
        c.sum += value;
        c.count += 1;
    }

    /// `None` for a cell with no records.
    pub fn mean(&self, i: usize, j: usize) -> Option<f64> {
        self.cells.get(&(i, j)).map(Cell::mean)
    }

    pub fn total_count(&self) -> usize {
        self.cells.values().map(|c| c.count).sum()
    }

    /// Right edges spanning the populated cells on each axis.
    pub fn axes(&self) -> (Vec<usize>, Vec<usize>) {
        let span = |vals: Vec<usize>, w: usize| match (vals.iter().min(), vals.iter().max()) {
            (Some(&lo), Some(&hi)) => (lo..=hi).step_by(w).collect(),
            _ => Vec::new(),
        };
        (
            span(self.cells.keys().map(|k| k.0).collect(), self.layer_bin),
            span(self.cells.keys().map(|k| k.1).collect(), self.db_bin),
        )
    }

    /// `layer_bin,db_bin,mean,count`; empty cells inside the span have an empty mean.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer_bin,db_bin,mean,count\n");
        let (is, js) = self.axes();
        for &i in &is {
            for &j in &js {
                match self.cells.get(&(i, j)) {
                    Some(c) => writeln!(s, "{i},{j},{},{}", c.mean(), c.count),
                    None => writeln!(s, "{i},{j},,0"),
                }
                .expect("write to string");
            }
        }
        s
    }
}

/// Bins successful records by `(layer_lb, db_rank_ub)`, averaging `column`.
pub fn bin_heatmap(records: &[ResultRecord], column: &str) -> Result<HeatmapGrid> {
    if records.is_empty() {
        return Err(Error::EmptyGrid("no results to bin".into()));
    }
    let mut grid = HeatmapGrid::empty(column);
    for r in records {
        let v = r.column(column)?;
        if r.status == Status::Ok {
            grid.add(r.layer_lb, r.db_rank_ub, v);
        }
    }
    Ok(grid)
}

const CELL: usize = 28;
const MARGIN_LEFT: usize = 70;
const MARGIN_TOP: usize = 40;
const MARGIN_BOTTOM: usize = 60;

/// White at 0 to dark blue at 1.
fn color(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(255.0, 8.0),
        lerp(255.0, 48.0),
        lerp(255.0, 107.0)
    )
}

/// Self-contained SVG: database bound across, layer bound upwards.
pub fn render_svg(grid: &HeatmapGrid) -> Result<String> {
    if grid.cells.is_empty() {
        return Err(Error::EmptyGrid("nothing to render".into()));
    }
    let (is, js) = grid.axes();
    let width = MARGIN_LEFT + js.len() * CELL + 20;
    let height = MARGIN_TOP + is.len() * CELL + MARGIN_BOTTOM;
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(
        w,
        r##"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)"><rect width="6" height="6" fill="#ffffff"/><line x1="0" y1="0" x2="0" y2="6" stroke="#999999" stroke-width="2"/></pattern></defs>"##
    );
    let _ = writeln!(
        w,
        r#"<text x="{}" y="20" font-size="13">{}</text>"#,
        MARGIN_LEFT, grid.column
    );
    for (row, &i) in is.iter().rev().enumerate() {
        let y = MARGIN_TOP + row * CELL;
        let _ = writeln!(
            w,
            r#"<text x="{}" y="{}" text-anchor="end">{i}</text>"#,
            MARGIN_LEFT - 6,
            y + CELL / 2 + 4
        );
        for (col, &j) in js.iter().enumerate() {
            let x = MARGIN_LEFT + col * CELL;
            let (fill, title) = match grid.cells.get(&(i, j)) {
                Some(c) => (
                    color(c.mean()),
                    format!("layer ≤ {i}, db ≤ {j}: {:.3} (n={})", c.mean(), c.count),
                ),
                None => (
                    "url(#hatch)".to_string(),
                    format!("layer ≤ {i}, db ≤ {j}: empty"),
                ),
            };
            let _ = writeln!(
                w,
                r##"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#ffffff"><title>{title}</title></rect>"##
            );
        }
    }
    let base = MARGIN_TOP + is.len() * CELL;
    for (col, &j) in js.iter().enumerate() {
        let x = MARGIN_LEFT + col * CELL + CELL / 2;
        let _ = writeln!(
            w,
            r#"<text x="{x}" y="{}" text-anchor="middle">{j}</text>"#,
            base + 14
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle">database rank bound</text>"#,
        MARGIN_LEFT + js.len() * CELL / 2,
        base + 36
    );
    let _ = writeln!(
        w,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">layer rank bound</text>"#,
        MARGIN_TOP + is.len() * CELL / 2,
        MARGIN_TOP + is.len() * CELL / 2
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_heatmap(grid: &HeatmapGrid, path: &Path) -> Result<()> {
    fs::write(path, render_svg(grid)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_rule() {
        let g = HeatmapGrid::empty("acc_argmax");
        assert_eq!(g.cell_of(7, 25), (10, 30));
        assert_eq!(g.cell_of(5, 10), (5, 10));
        assert_eq!(g.cell_of(6, 11), (10, 20));
        assert_eq!(g.cell_of(1, 1), (5, 10));
    }

    #[test]
    fn cell_means() {
        let mut g = HeatmapGrid::empty("acc_095");
        g.add(3, 12, 0.4);
        g.add(4, 20, 0.6);
        assert_eq!(g.cells.len(), 1);
        let c = g.cells[&(5, 20)];
        assert_eq!(c.count, 2);
        assert!((c.mean() - 0.5).abs() < 1e-15);
        assert_eq!(g.mean(10, 20), None);
    }

    #[test]
    fn svg_cells_and_determinism() {
        let mut g = HeatmapGrid::empty("acc_argmax");
        g.add(5, 10, 0.0);
        g.add(10, 10, 1.0);
        g.add(5, 20, 0.5);
        g.add(10, 20, 0.25);
        let svg = render_svg(&g).unwrap();
        assert_eq!(svg.matches(r#"class="cell""#).count(), 4);
        assert!(!svg.contains("url(#hatch)\""));
        assert_eq!(svg, render_svg(&g.clone()).unwrap());

        let mut sparse = HeatmapGrid::empty("acc_argmax");
        sparse.add(5, 10, 0.0);
        sparse.add(10, 20, 1.0);
        let svg = render_svg(&sparse).unwrap();
        assert_eq!(svg.matches(r#"class="cell""#).count(), 4);
        assert_eq!(svg.matches("fill=\"url(#hatch)\"").count(), 2);
        assert!(svg.contains(&color(0.0)));
    }

    #[test]
    fn empty_grid_is_an_error() {
        assert!(matches!(
            render_svg(&HeatmapGrid::empty("x")),
            Err(Error::EmptyGrid(_))
        ));
        assert!(bin_heatmap(&[], "acc_argmax").is_err());
    }
}
