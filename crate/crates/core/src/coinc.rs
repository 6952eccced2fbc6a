//! Coincidence analysis: time clustering, 4D accumulator marginals, and the
//! shift-and-sum correlation image with its factorization diagnostic.

use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::grid::Grid2D;
use crate::image::ScalarImage;
use crate::stats::pearson_correlation;
use ndarray::Array2;
use std::collections::HashMap;
use std::fmt::Write as _;

/// Default coincidence window: 10 ns.
pub const DEFAULT_WINDOW_NS: u64 = 10;

/// A two-photon coincidence. Labels are assigned by arrival order: the
/// earlier event is the signal photon, so `dt = t_idler - t_signal >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoincidencePair {
    pub xi: u16,
    pub yi: u16,
    pub xs: u16,
    pub ys: u16,
    pub dt: i64,
}

/// Single streaming pass over a time-sorted stream. Events are grouped into
/// maximal clusters by transitive closure over gaps <= `window_ns`; clusters
/// of exactly two events yield one pair, all others are discarded
/// (two-photon postselection).
pub fn find_coincidences(stream: &EventStream, window_ns: u64) -> Result<Vec<CoincidencePair>> {
    let events = &stream.events;
    for i in 1..events.len() {
        if events[i].t_ns < events[i - 1].t_ns {
            return Err(Error::UnsortedEvents { index: i });
        }
    }

    let mut pairs = Vec::new();
    let mut start = 0usize;
    for i in 0..events.len() {
        let is_last = i + 1 == events.len();
        let gap_breaks = !is_last && events[i + 1].t_ns - events[i].t_ns > window_ns;
        if is_last || gap_breaks {
            if i - start == 1 {
                let s = &events[start];
                let idl = &events[start + 1];
                pairs.push(CoincidencePair {
                    xi: idl.x,
                    yi: idl.y,
                    xs: s.x,
                    ys: s.y,
                    dt: (idl.t_ns - s.t_ns) as i64,
                });
            }
            start = i + 1;
        }
    }
    Ok(pairs)
}

/// The five coincidence histograms of the Supplementary analysis.
///
/// `gamma_plus` and `gamma_minus` live on the doubled-resolution grid
/// (pitch/2, 2n-1 bins per axis): gamma_plus bins `xi + xs`, gamma_minus bins
/// `xi - xs + (n-1)`. `gamma_t` is the signal-photon coincidence image,
/// `gamma_x`/`gamma_y` are the joint single-axis marginals indexed
/// `[idler, signal]`.
#[derive(Clone, Debug)]
pub struct MarginalImages {
    grid: Grid2D,
    pub pair_count: u64,
    pub gamma_t: Array2<u64>,
    pub gamma_x: Array2<u64>,
    pub gamma_y: Array2<u64>,
    pub gamma_plus: Array2<u64>,
    pub gamma_minus: Array2<u64>,
}

impl MarginalImages {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn doubled_grid(&self) -> Grid2D {
        self.grid.doubled()
    }

    /// Camera-pitch correlation image: centroid pixel `(xi+xs)/2` with odd
    /// sums rounded up. All factorized-model pairs land on even sums, so on
    /// synthetic data this rounding touches only accidentals.
    pub fn gamma_plus_compact(&self) -> Array2<u64> {
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        let mut out = Array2::<u64>::zeros((ny, nx));
        for ((by, bx), &count) in self.gamma_plus.indexed_iter() {
            if count == 0 {
                continue;
            }
            let cx = (bx + 1) / 2;
            let cy = (by + 1) / 2;
            if cx < nx && cy < ny {
                out[[cy, cx]] += count;
            }
        }
        out
    }

    pub fn gamma_t_image(&self) -> ScalarImage {
        ScalarImage::new(self.grid, self.gamma_t.mapv(|v| v as f64)).expect("shape")
    }

    pub fn gamma_plus_image(&self) -> ScalarImage {
        ScalarImage::new(self.doubled_grid(), self.gamma_plus.mapv(|v| v as f64)).expect("shape")
    }

    pub fn gamma_minus_image(&self) -> ScalarImage {
        ScalarImage::new(self.doubled_grid(), self.gamma_minus.mapv(|v| v as f64)).expect("shape")
    }

    pub fn gamma_plus_compact_image(&self) -> ScalarImage {
        ScalarImage::new(self.grid, self.gamma_plus_compact().mapv(|v| v as f64)).expect("shape")
    }
}

/// Fill all five histograms in one pass. Each pair contributes exactly one
/// count per histogram, so every histogram sums to the pair count.
pub fn accumulate_marginals(pairs: &[CoincidencePair], grid: &Grid2D) -> MarginalImages {
    let nx = grid.nx();
    let ny = grid.ny();
    let mut m = MarginalImages {
        grid: *grid,
        pair_count: pairs.len() as u64,
        gamma_t: Array2::zeros((ny, nx)),
        gamma_x: Array2::zeros((nx, nx)),
        gamma_y: Array2::zeros((ny, ny)),
        gamma_plus: Array2::zeros((2 * ny - 1, 2 * nx - 1)),
        gamma_minus: Array2::zeros((2 * ny - 1, 2 * nx - 1)),
    };
    for p in pairs {
        let (xi, yi, xs, ys) = (p.xi as usize, p.yi as usize, p.xs as usize, p.ys as usize);
        m.gamma_t[[ys, xs]] += 1;
        m.gamma_x[[xi, xs]] += 1;
        m.gamma_y[[yi, ys]] += 1;
        m.gamma_plus[[yi + ys, xi + xs]] += 1;
        let bx = (xi as isize - xs as isize + (nx as isize - 1)) as usize;
        let by = (yi as isize - ys as isize + (ny as isize - 1)) as usize;
        m.gamma_minus[[by, bx]] += 1;
    }
    m
}

/// Outcome of the shift-and-sum extraction.
#[derive(Clone, Debug)]
pub struct ShiftSumResult {
    /// Correlation image on the doubled grid, restricted to |shift|_inf <= max_shift.
    pub gamma_plus: Array2<u64>,
    pub report: ConsistencyReport,
}

/// Factorization diagnostic: per-shift populations and the pairwise
/// normalized cross-correlations of the most-populated sub-images.
#[derive(Clone, Debug)]
pub struct ConsistencyReport {
    pub max_shift: usize,
    pub pairs_used: u64,
    /// (shift_x, shift_y, pair count), most populated first.
    pub shifts: Vec<(i32, i32, u64)>,
    /// Pairwise NCC values between the top-K sub-images after displacement
    /// compensation, keyed by the two shifts.
    pub ncc: Vec<((i32, i32), (i32, i32), f64)>,
    pub mean_ncc: f64,
    pub min_ncc: f64,
    pub warnings: Vec<String>,
}

impl ConsistencyReport {
    /// key=value text rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "max_shift={}", self.max_shift);
        let _ = writeln!(s, "pairs_used={}", self.pairs_used);
        let _ = writeln!(s, "shifts_analyzed={}", self.shifts.len());
        for (sx, sy, n) in &self.shifts {
            let _ = writeln!(s, "shift[{sx},{sy}]={n}");
        }
        for ((a, b), (c, d), v) in self
            .ncc
            .iter()
            .map(|(p, q, v)| ((p.0, p.1), (q.0, q.1), v))
        {
            let _ = writeln!(s, "ncc[({a},{b})x({c},{d})]={v:.6}");
        }
        let _ = writeln!(s, "mean_ncc={:.6}", self.mean_ncc);
        let _ = writeln!(s, "min_ncc={:.6}", self.min_ncc);
        for w in &self.warnings {
            let _ = writeln!(s, "warning={w}");
        }
        s
    }
}

/// Build the correlation image by selecting pairs with `Xi = Xs + c` per shift
/// `c`, displacing each signal-position sub-image by `c` in doubled-grid units
/// and summing. Also reports the pairwise NCC between the `top_k`
/// most-populated sub-images as a factorization check.
pub fn correlation_image_shift_sum(
    pairs: &[CoincidencePair],
    grid: &Grid2D,
    max_shift: usize,
    top_k: usize,
) -> ShiftSumResult {
    let nx = grid.nx();
    let ny = grid.ny();
    let ms = max_shift as i32;

    let mut gamma_plus = Array2::<u64>::zeros((2 * ny - 1, 2 * nx - 1));
    let mut shift_counts: HashMap<(i32, i32), u64> = HashMap::new();
    let mut used = 0u64;
    for p in pairs {
        let cx = p.xi as i32 - p.xs as i32;
        let cy = p.yi as i32 - p.ys as i32;
        if cx.abs() > ms || cy.abs() > ms {
            continue;
        }
        used += 1;
        *shift_counts.entry((cx, cy)).or_insert(0) += 1;
        // signal sub-image displaced by c: doubled-grid bin 2*Xs + c = Xi + Xs
        let bx = (2 * p.xs as i32 + cx) as usize;
        let by = (2 * p.ys as i32 + cy) as usize;
        gamma_plus[[by, bx]] += 1;
    }

    let mut shifts: Vec<(i32, i32, u64)> = shift_counts
        .iter()
        .map(|(&(sx, sy), &n)| (sx, sy, n))
        .collect();
    shifts.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut warnings = Vec::new();
    if max_shift == 0 && shift_counts.get(&(0, 0)).copied().unwrap_or(0) == 0 {
        warnings.push("empty image: no pairs at zero shift".into());
    }

    // Materialize the top-K sub-images (signal positions, camera grid).
    let k = top_k.min(shifts.len());
    let mut subs: Vec<((i32, i32), Array2<f64>)> = Vec::with_capacity(k);
    for &(sx, sy, _) in shifts.iter().take(k) {
        subs.push(((sx, sy), Array2::zeros((ny, nx))));
    }
    let index_of: HashMap<(i32, i32), usize> = subs
        .iter()
        .enumerate()
        .map(|(i, (c, _))| (*c, i))
        .collect();
    for p in pairs {
        let c = (p.xi as i32 - p.xs as i32, p.yi as i32 - p.ys as i32);
        if let Some(&i) = index_of.get(&c) {
            subs[i].1[[p.ys as usize, p.xs as usize]] += 1.0;
        }
    }

    // Pairwise NCC after compensating the relative displacement: a pair with
    // shift c images the centroid pattern shifted by c/2 pixels, so sub-image
    // b is aligned to a by the rounded half-shift difference.
    let mut ncc = Vec::new();
    for i in 0..subs.len() {
        for j in (i + 1)..subs.len() {
            let (ca, a) = &subs[i];
            let (cb, b) = &subs[j];
            let dx = rounded_half(cb.0 - ca.0);
            let dy = rounded_half(cb.1 - ca.1);
            if let Some(v) = shifted_ncc(a, b, dx, dy) {
                ncc.push((*ca, *cb, v));
            }
        }
    }
    let mean_ncc = if ncc.is_empty() {
        f64::NAN
    } else {
        ncc.iter().map(|(_, _, v)| v).sum::<f64>() / ncc.len() as f64
    };
    let min_ncc = ncc
        .iter()
        .map(|(_, _, v)| *v)
        .fold(f64::INFINITY, f64::min);

    ShiftSumResult {
        gamma_plus,
        report: ConsistencyReport {
            max_shift,
            pairs_used: used,
            shifts,
            ncc,
            mean_ncc,
            min_ncc,
            warnings,
        },
    }
}

fn rounded_half(d: i32) -> i32 {
    // round-half-away-from-zero of d/2
    if d >= 0 {
        (d + 1) / 2
    } else {
        -((-d + 1) / 2)
    }
}

/// Pearson correlation between `a` and `b` sampled at `b[y + dy, x + dx]`,
/// over the overlap region. None when the overlap is degenerate.
fn shifted_ncc(a: &Array2<f64>, b: &Array2<f64>, dx: i32, dy: i32) -> Option<f64> {
    let (ny, nx) = a.dim();
    let x0 = (-dx).max(0) as usize;
    let y0 = (-dy).max(0) as usize;
    let x1 = (nx as i32 - dx.max(0)) as usize;
    let y1 = (ny as i32 - dy.max(0)) as usize;
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    let mut va = Vec::with_capacity((x1 - x0) * (y1 - y0));
    let mut vb = Vec::with_capacity(va.capacity());
    for y in y0..y1 {
        for x in x0..x1 {
            va.push(a[[y, x]]);
            vb.push(b[[(y as i32 + dy) as usize, (x as i32 + dx) as usize]]);
        }
    }
    pearson_correlation(&va, &vb)
}
