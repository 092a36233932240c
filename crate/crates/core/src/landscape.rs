//! Grid scans of the (U, W) domain, critical-region topology and SVG maps.
//!
//! Grids are row-major in (u, w): cell `(i, j)` sits at `u_grid[i]`,
//! `w_grid[j]` and is stored at `i * n_w + j`.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Bounds, ParamPoint};
use crate::objective::{Evaluation, FitnessOracle};

pub const CSV_HEADER: &str = "u,w,k,k_std,flux,flux_std,fitness";
pub const DEFAULT_CRITICAL_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub k: f64,
    pub k_std: f64,
    pub fast_flux: f64,
    pub fast_flux_std: f64,
    pub fitness: f64,
}

impl From<&Evaluation> for Cell {
    fn from(e: &Evaluation) -> Self {
        Self {
            k: e.k,
            k_std: e.k_std,
            fast_flux: e.fast_flux,
            fast_flux_std: e.fast_flux_std,
            fitness: e.fitness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    K,
    FastFlux,
    Fitness,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::K, Field::FastFlux, Field::Fitness];

    pub fn name(self) -> &'static str {
        match self {
            Field::K => "k",
            Field::FastFlux => "flux",
            Field::Fitness => "fitness",
        }
    }

    pub fn of(self, c: &Cell) -> f64 {
        match self {
            Field::K => c.k,
            Field::FastFlux => c.fast_flux,
            Field::Fitness => c.fitness,
        }
    }
}

/// Scan result. A `None` cell failed to evaluate and is ignored by the
/// topology analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeMap {
    pub u_grid: Vec<f64>,
    pub w_grid: Vec<f64>,
    pub cells: Vec<Option<Cell>>,
}

/// `n` evenly spaced points from `lo` to `hi`, both included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect()
}

/// Evaluates every node of an `n_u x n_w` grid spanning the oracle bounds, in
/// one batch.
pub fn grid_scan(oracle: &dyn FitnessOracle, n_u: usize, n_w: usize) -> Result<LandscapeMap> {
    if n_u < 2 || n_w < 2 {
        return Err(Error::InvalidConfig(format!(
            "grid resolution must be at least 2x2, got {n_u}x{n_w}"
        )));
    }
    let b = oracle.bounds();
    let u_grid = linspace(b.u_min, b.u_max, n_u);
    let w_grid = linspace(b.w_min, b.w_max, n_w);
    let points: Vec<ParamPoint> = u_grid
        .iter()
        .flat_map(|&u| w_grid.iter().map(move |&w| ParamPoint::new(u, w)))
        .collect();
    let cells = oracle
        .evaluate_batch(&points)
        .iter()
        .map(|r| r.as_ref().ok().map(Cell::from))
        .collect();
    Ok(LandscapeMap {
        u_grid,
        w_grid,
        cells,
    })
}

impl LandscapeMap {
    pub fn n_u(&self) -> usize {
        self.u_grid.len()
    }

    pub fn n_w(&self) -> usize {
        self.w_grid.len()
    }

    pub fn cell(&self, i: usize, j: usize) -> Option<&Cell> {
        self.cells[i * self.n_w() + j].as_ref()
    }

    pub fn point(&self, i: usize, j: usize) -> ParamPoint {
        ParamPoint::new(self.u_grid[i], self.w_grid[j])
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// Grid index of the largest value of `field`.
    pub fn argmax(&self, field: Field) -> Option<(usize, usize)> {
        let mut best: Option<((usize, usize), f64)> = None;
        for i in 0..self.n_u() {
            for j in 0..self.n_w() {
                if let Some(c) = self.cell(i, j) {
                    let v = field.of(c);
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some(((i, j), v));
                    }
                }
            }
        }
        best.map(|(ij, _)| ij)
    }

    /// Nearest-neighbour fill of a grid from scattered samples, in coordinates
    /// normalized to `bounds`.
    pub fn from_samples(samples: &[Evaluation], bounds: &Bounds, n_u: usize, n_w: usize) -> Result<Self> {
        if samples.is_empty() || n_u < 2 || n_w < 2 {
            return Err(Error::InvalidConfig(
                "nearest-neighbour fill needs samples and at least a 2x2 grid".into(),
            ));
        }
        let u_grid = linspace(bounds.u_min, bounds.u_max, n_u);
        let w_grid = linspace(bounds.w_min, bounds.w_max, n_w);
        let norm: Vec<[f64; 2]> = samples.iter().map(|s| bounds.normalize(s.params)).collect();
        let mut cells = Vec::with_capacity(n_u * n_w);
        for &u in &u_grid {
            for &w in &w_grid {
                let q = bounds.normalize(ParamPoint::new(u, w));
                let nearest = norm
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        let da = (a[0] - q[0]).powi(2) + (a[1] - q[1]).powi(2);
                        let db = (b[0] - q[0]).powi(2) + (b[1] - q[1]).powi(2);
                        da.total_cmp(&db)
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                cells.push(Some(Cell::from(&samples[nearest])));
            }
        }
        Ok(Self {
            u_grid,
            w_grid,
            cells,
        })
    }

    /// CSV text; failed cells have `NaN` in every value column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for i in 0..self.n_u() {
            for j in 0..self.n_w() {
                let (u, w) = (self.u_grid[i], self.w_grid[j]);
                let c = self.cell(i, j).copied().unwrap_or(Cell {
                    k: f64::NAN,
                    k_std: f64::NAN,
                    fast_flux: f64::NAN,
                    fast_flux_std: f64::NAN,
                    fitness: f64::NAN,
                });
                writeln!(
                    out,
                    "{u},{w},{},{},{},{},{}",
                    c.k, c.k_std, c.fast_flux, c.fast_flux_std, c.fitness
                )
                .unwrap();
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidConfig(format!("landscape CSV: {msg}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CSV_HEADER) {
            return Err(bad(format!("expected header '{CSV_HEADER}'")));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("line {}: {e}", n + 2)))?;
            if vals.len() != 7 {
                return Err(bad(format!("line {}: expected 7 columns, got {}", n + 2, vals.len())));
            }
            rows.push(vals);
        }
        let mut u_grid: Vec<f64> = Vec::new();
        for r in &rows {
            if u_grid.last() != Some(&r[0]) {
                u_grid.push(r[0]);
            }
        }
        let n_u = u_grid.len();
        if n_u == 0 || rows.len() % n_u != 0 {
            return Err(bad("rows do not form a rectangular grid".into()));
        }
        let n_w = rows.len() / n_u;
        let w_grid: Vec<f64> = rows[..n_w].iter().map(|r| r[1]).collect();
        for (idx, r) in rows.iter().enumerate() {
            if r[0] != u_grid[idx / n_w] || r[1] != w_grid[idx % n_w] {
                return Err(bad(format!("row {} is out of grid order", idx + 2)));
            }
        }
        let cells = rows
            .iter()
            .map(|r| {
                (!r[2].is_nan()).then_some(Cell {
                    k: r[2],
                    k_std: r[3],
                    fast_flux: r[4],
                    fast_flux_std: r[5],
                    fitness: r[6],
                })
            })
            .collect();
        Ok(Self {
            u_grid,
            w_grid,
            cells,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// A grid cell reported with its coordinates and values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub i: usize,
    pub j: usize,
    pub u: f64,
    pub w: f64,
    #[serde(flatten)]
    pub cell: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub cells: Vec<(usize, usize)>,
    pub best: CellSummary,
    pub w_min: f64,
    pub w_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRegionReport {
    pub tolerance: f64,
    pub component_count: usize,
    /// Ordered by increasing upper W extent.
    pub components: Vec<Component>,
}

/// 4-connected components of the cells with `|k - 1| <= tol`.
pub fn critical_regions(map: &LandscapeMap, tol: f64) -> CriticalRegionReport {
    let (n_u, n_w) = (map.n_u(), map.n_w());
    let critical = |i: usize, j: usize| map.cell(i, j).is_some_and(|c| (c.k - 1.0).abs() <= tol);
    let mut seen = vec![false; n_u * n_w];
    let mut components = Vec::new();
    for i0 in 0..n_u {
        for j0 in 0..n_w {
            if seen[i0 * n_w + j0] || !critical(i0, j0) {
                continue;
            }
            seen[i0 * n_w + j0] = true;
            let mut cells = Vec::new();
            let mut queue = VecDeque::from([(i0, j0)]);
            while let Some((i, j)) = queue.pop_front() {
                cells.push((i, j));
                let mut visit = |a: usize, b: usize| {
                    if !seen[a * n_w + b] && critical(a, b) {
                        seen[a * n_w + b] = true;
                        queue.push_back((a, b));
                    }
                };
                if i > 0 {
                    visit(i - 1, j);
                }
                if i + 1 < n_u {
                    visit(i + 1, j);
                }
                if j > 0 {
                    visit(i, j - 1);
                }
                if j + 1 < n_w {
                    visit(i, j + 1);
                }
            }
            cells.sort_unstable();
            let &(bi, bj) = cells
                .iter()
                .min_by(|a, b| {
                    let fa = map.cell(a.0, a.1).unwrap().fitness;
                    let fb = map.cell(b.0, b.1).unwrap().fitness;
                    fa.total_cmp(&fb).then(a.cmp(b))
                })
                .unwrap();
            let w_min = cells.iter().map(|c| map.w_grid[c.1]).fold(f64::INFINITY, f64::min);
            let w_max = cells.iter().map(|c| map.w_grid[c.1]).fold(f64::NEG_INFINITY, f64::max);
            components.push(Component {
                best: CellSummary {
                    i: bi,
                    j: bj,
                    u: map.u_grid[bi],
                    w: map.w_grid[bj],
                    cell: *map.cell(bi, bj).unwrap(),
                },
                cells,
                w_min,
                w_max,
            });
        }
    }
    components.sort_by(|a, b| a.w_max.total_cmp(&b.w_max).then(a.cells[0].cmp(&b.cells[0])));
    CriticalRegionReport {
        tolerance: tol,
        component_count: components.len(),
        components,
    }
}

/// W boundary between the low-W critical component and the rest: the midpoint
/// between the largest W of the first component and the smallest W of the
/// others. `None` unless there are at least two components separated in W.
pub fn w_split(report: &CriticalRegionReport) -> Option<f64> {
    let (low, rest) = report.components.split_first()?;
    if rest.is_empty() {
        return None;
    }
    let high_min = rest.iter().map(|c| c.w_min).fold(f64::INFINITY, f64::min);
    (high_min > low.w_max).then_some(0.5 * (low.w_max + high_min))
}

// ---------------------------------------------------------------------------
// SVG

const CELL_PX: f64 = 12.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;
const BAR_W: f64 = 16.0;

/// Viridis anchor colours.
const PALETTE: [[u8; 3]; 6] = [
    [68, 1, 84],
    [65, 68, 135],
    [42, 120, 142],
    [34, 168, 132],
    [122, 209, 81],
    [253, 231, 37],
];

fn color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (PALETTE.len() - 1) as f64;
    let k = (x.floor() as usize).min(PALETTE.len() - 2);
    let f = x - k as f64;
    let c: Vec<u8> = (0..3)
        .map(|ch| {
            let a = PALETTE[k][ch] as f64;
            let b = PALETTE[k + 1][ch] as f64;
            (a + f * (b - a)).round() as u8
        })
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapOptions {
    pub field: Field,
    /// Cells with `|k - 1|` at most this are circled; `None` disables markers.
    pub critical_tol: Option<f64>,
    /// Sampled points drawn as crosses.
    pub overlay: Vec<ParamPoint>,
}

impl HeatmapOptions {
    pub fn new(field: Field) -> Self {
        Self {
            field,
            critical_tol: Some(DEFAULT_CRITICAL_TOL),
            overlay: Vec::new(),
        }
    }
}

/// Self-contained SVG heatmap. Flux uses a log10 colour scale, k and fitness a
/// linear one. The output depends only on the map and the options.
pub fn render_heatmap(map: &LandscapeMap, opts: &HeatmapOptions) -> String {
    let (n_u, n_w) = (map.n_u(), map.n_w());
    let log = opts.field == Field::FastFlux;
    let scale = |v: f64| if log { v.max(1e-12).log10() } else { v };
    let values: Vec<f64> = map.cells.iter().flatten().map(|c| scale(opts.field.of(c))).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let plot_w = n_u as f64 * CELL_PX;
    let plot_h = n_w as f64 * CELL_PX;
    let width = MARGIN_L + plot_w + 20.0 + BAR_W + 70.0;
    let height = MARGIN_T + plot_h + MARGIN_B;
    let x_of = |i: usize| MARGIN_L + i as f64 * CELL_PX;
    let y_of = |j: usize| MARGIN_T + (n_w - 1 - j) as f64 * CELL_PX;
    let (u0, u1) = (map.u_grid[0], map.u_grid[n_u - 1]);
    let (w0, w1) = (map.w_grid[0], map.w_grid[n_w - 1]);
    let px = |u: f64| MARGIN_L + 0.5 * CELL_PX + (u - u0) / (u1 - u0) * (n_u - 1) as f64 * CELL_PX;
    let py = |w: f64| MARGIN_T + plot_h - 0.5 * CELL_PX - (w - w0) / (w1 - w0) * (n_w - 1) as f64 * CELL_PX;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        opts.field.name(),
        if log { " (log10)" } else { "" }
    )
    .unwrap();
    for i in 0..n_u {
        for j in 0..n_w {
            let (x, y) = (x_of(i), y_of(j));
            match map.cell(i, j) {
                Some(c) => writeln!(
                    s,
                    r#"<rect class="cell" x="{x}" y="{y}" width="{CELL_PX}" height="{CELL_PX}" fill="{}"/>"#,
                    color((scale(opts.field.of(c)) - lo) / span)
                ),
                None => writeln!(
                    s,
                    r##"<rect class="missing" x="{x}" y="{y}" width="{CELL_PX}" height="{CELL_PX}" fill="#bbbbbb"/>"##
                ),
            }
            .unwrap();
        }
    }
    if let Some(tol) = opts.critical_tol {
        for i in 0..n_u {
            for j in 0..n_w {
                if map.cell(i, j).is_some_and(|c| (c.k - 1.0).abs() <= tol) {
                    writeln!(
                        s,
                        r#"<circle class="critical" cx="{}" cy="{}" r="{}" fill="none" stroke="red" stroke-width="1.5"/>"#,
                        x_of(i) + 0.5 * CELL_PX,
                        y_of(j) + 0.5 * CELL_PX,
                        0.35 * CELL_PX
                    )
                    .unwrap();
                }
            }
        }
    }
    let arm = 0.3 * CELL_PX;
    for p in &opts.overlay {
        let (x, y) = (px(p.u_density), py(p.w_density));
        writeln!(
            s,
            r#"<path class="sample" d="M{} {}L{} {}M{} {}L{} {}" stroke="black" stroke-width="1"/>"#,
            x - arm,
            y - arm,
            x + arm,
            y + arm,
            x - arm,
            y + arm,
            x + arm,
            y - arm
        )
        .unwrap();
    }

    // Axes.
    let base = MARGIN_T + plot_h;
    writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for (frac, anchor) in [(0.0, "start"), (1.0, "end")] {
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="{anchor}">{:.3}</text>"#,
            MARGIN_L + frac * plot_w,
            base + 14.0,
            u0 + frac * (u1 - u0)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
            MARGIN_L - 4.0,
            base - frac * plot_h + if frac == 0.0 { 0.0 } else { 10.0 },
            w0 + frac * (w1 - w0)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">U density (g/cc)</text>"#,
        MARGIN_L + plot_w / 2.0,
        base + 32.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">W density (g/cc)</text>"#,
        MARGIN_T + plot_h / 2.0
    )
    .unwrap();

    // Colour bar.
    let bar_x = MARGIN_L + plot_w + 20.0;
    let steps = 32;
    for k in 0..steps {
        let h = plot_h / steps as f64;
        writeln!(
            s,
            r#"<rect x="{bar_x}" y="{}" width="{BAR_W}" height="{}" fill="{}"/>"#,
            MARGIN_T + plot_h - (k + 1) as f64 * h,
            h,
            color((k as f64 + 0.5) / steps as f64)
        )
        .unwrap();
    }
    let fmt = |v: f64| if v.is_finite() { format!("{v:.4}") } else { "n/a".into() };
    writeln!(
        s,
        r#"<text x="{}" y="{}">{}</text>"#,
        bar_x + BAR_W + 4.0,
        MARGIN_T + 10.0,
        fmt(hi)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}">{}</text>"#,
        bar_x + BAR_W + 4.0,
        base,
        fmt(lo)
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

pub fn write_heatmap(map: &LandscapeMap, opts: &HeatmapOptions, path: &Path) -> Result<()> {
    fs::write(path, render_heatmap(map, opts)).map_err(|e| Error::io(path, e))
}
