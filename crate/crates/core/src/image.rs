//! Real-valued images on a grid (intensities, counts, phase maps) and the
//! rectangle statistics used by the analysis steps.

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use ndarray::Array2;
use std::io::Write;
use std::path::Path;

/// A real scalar map on a [`Grid2D`], shape `(ny, nx)`.
#[derive(Clone, Debug)]
pub struct ScalarImage {
    grid: Grid2D,
    data: Array2<f64>,
}

impl ScalarImage {
    pub fn new(grid: Grid2D, data: Array2<f64>) -> Result<Self> {
        if data.dim() != (grid.ny(), grid.nx()) {
            return Err(Error::GridMismatch(format!(
                "image {:?} does not match grid {}x{}",
                data.dim(),
                grid.nx(),
                grid.ny()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            data: Array2::zeros((grid.ny(), grid.nx())),
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    pub fn total(&self) -> f64 {
        self.data.sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean over a pixel rectangle.
    pub fn mean_over(&self, rect: &Rect) -> Result<f64> {
        let (sum, n) = self.fold_over(rect, (0.0, 0usize), |(s, n), v| (s + v, n + 1))?;
        Ok(sum / n as f64)
    }

    /// Mean and standard deviation over a pixel rectangle.
    pub fn mean_std_over(&self, rect: &Rect) -> Result<(f64, f64)> {
        let mean = self.mean_over(rect)?;
        let (ss, n) = self.fold_over(rect, (0.0, 0usize), |(s, n), v| {
            (s + (v - mean) * (v - mean), n + 1)
        })?;
        Ok((mean, (ss / n as f64).sqrt()))
    }

    fn fold_over<A>(&self, rect: &Rect, init: A, mut f: impl FnMut(A, f64) -> A) -> Result<A> {
        rect.validate(&self.grid)?;
        let mut acc = init;
        for iy in rect.y0..rect.y1 {
            for ix in rect.x0..rect.x1 {
                acc = f(acc, self.data[[iy, ix]]);
            }
        }
        Ok(acc)
    }

    /// Write as CSV: one row per grid row, x fastest.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for row in self.data.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// Rectangle centered on the grid origin with half-widths given in meters.
    pub fn centered(grid: &Grid2D, half_wx: f64, half_wy: f64) -> Self {
        let cx = grid.nx() / 2;
        let cy = grid.ny() / 2;
        let rx = (half_wx / grid.pitch()).floor() as usize;
        let ry = (half_wy / grid.pitch()).floor() as usize;
        Self {
            x0: cx.saturating_sub(rx),
            y0: cy.saturating_sub(ry),
            x1: (cx + rx + 1).min(grid.nx()),
            y1: (cy + ry + 1).min(grid.ny()),
        }
    }

    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        if self.x0 >= self.x1 || self.y0 >= self.y1 {
            return Err(Error::invalid(format!("empty rectangle {self:?}")));
        }
        if self.x1 > grid.nx() || self.y1 > grid.ny() {
            return Err(Error::invalid(format!(
                "rectangle {self:?} outside {}x{} grid",
                grid.nx(),
                grid.ny()
            )));
        }
        Ok(())
    }
}

/// Parse a CSV numeric matrix (rows = grid rows, x fastest).
pub fn read_csv_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        if record.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().map(|s| s.parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Parse(format!("bad number in {path:?}: {e}")))?);
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{path:?} holds no rows")));
    }
    let nx = rows[0].len();
    if rows.iter().any(|r| r.len() != nx) {
        return Err(Error::Parse(format!("{path:?} rows have uneven lengths")));
    }
    let ny = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((ny, nx), flat).map_err(|e| Error::Parse(e.to_string()))
}
