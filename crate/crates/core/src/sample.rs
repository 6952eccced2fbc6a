//! Sample transmittance maps: per-pixel power transmittance T(x) and phase
//! alpha(x), plus the built-in test-target generators.

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::Grid2D;
use crate::image::read_csv_matrix;
use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::path::Path;

/// How a sample acts on a field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    /// Two-photon amplitude: multiply by t^2 = T * exp(i 2 alpha).
    Biphoton,
    /// One-photon amplitude: multiply by t = sqrt(T) * exp(i alpha).
    Classical,
}

/// Complex transmittance t(x) = sqrt(T) * exp(i alpha), stored as (T, alpha).
#[derive(Clone, Debug)]
pub struct SampleTransmittance {
    grid: Grid2D,
    transmittance: Array2<f64>,
    alpha: Array2<f64>,
}

fn wrap_phase(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

impl SampleTransmittance {
    pub fn new(grid: Grid2D, transmittance: Array2<f64>, alpha: Array2<f64>) -> Result<Self> {
        if transmittance.dim() != (grid.ny(), grid.nx()) || alpha.dim() != (grid.ny(), grid.nx()) {
            return Err(Error::GridMismatch(
                "sample arrays do not match the grid".into(),
            ));
        }
        if transmittance.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::invalid(
                "power transmittance must lie in [0, 1] everywhere",
            ));
        }
        Ok(Self {
            grid,
            transmittance,
            alpha: alpha.mapv(wrap_phase),
        })
    }

    /// A fully transparent, flat-phase sample.
    pub fn identity(grid: Grid2D) -> Self {
        Self {
            grid,
            transmittance: Array2::from_elem((grid.ny(), grid.nx()), 1.0),
            alpha: Array2::zeros((grid.ny(), grid.nx())),
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn transmittance(&self) -> &Array2<f64> {
        &self.transmittance
    }

    pub fn alpha(&self) -> &Array2<f64> {
        &self.alpha
    }

    /// The complex factor applied to an amplitude in the given mode.
    pub fn factor(&self, mode: SampleMode) -> ComplexField {
        let values = match mode {
            SampleMode::Classical => ndarray::Zip::from(&self.transmittance)
                .and(&self.alpha)
                .map_collect(|&t, &a| Complex64::from_polar(t.sqrt(), a)),
            SampleMode::Biphoton => ndarray::Zip::from(&self.transmittance)
                .and(&self.alpha)
                .map_collect(|&t, &a| Complex64::from_polar(t, 2.0 * a)),
        };
        ComplexField::new(self.grid, values).expect("shape checked at construction")
    }

    /// Store t(x) as a complex field file.
    pub fn write(&self, path: &Path) -> Result<()> {
        let t = self.factor(SampleMode::Classical);
        crate::field_io::write_field(&t, path)
    }

    /// Load a sample stored as complex t(x); |t|^2 may not exceed 1.
    pub fn read(path: &Path) -> Result<Self> {
        let field = crate::field_io::read_field(path)?;
        let mut transmittance = field.values().mapv(|v| v.norm_sqr());
        if transmittance.iter().any(|&t| t > 1.0 + 1e-9) {
            return Err(Error::invalid(
                "sample file holds |t|^2 > 1; not a passive transmittance",
            ));
        }
        transmittance.mapv_inplace(|t| t.min(1.0));
        let alpha = field.values().mapv(|v| if v.norm() > 0.0 { v.arg() } else { 0.0 });
        Self::new(*field.grid(), transmittance, alpha)
    }

    /// Import from two CSV matrices (power transmittance and phase in rad).
    pub fn from_csv(t_path: &Path, alpha_path: &Path, pitch: f64) -> Result<Self> {
        let t = read_csv_matrix(t_path)?;
        let alpha = read_csv_matrix(alpha_path)?;
        if t.dim() != alpha.dim() {
            return Err(Error::GridMismatch(
                "T and alpha matrices have different shapes".into(),
            ));
        }
        let (ny, nx) = t.dim();
        let grid = Grid2D::new(nx, ny, pitch)?;
        Self::new(grid, t, alpha)
    }
}

/// Thin-sample phase from a height step: alpha = 2 pi (n - 1) d / lambda.
pub fn phase_from_depth(depth: f64, refractive_index: f64, wavelength: f64) -> f64 {
    2.0 * PI * (refractive_index - 1.0) * depth / wavelength
}

/// Separable Gaussian blur of a mask; sigma in pixels. Used to soften target
/// edges the way a finite-resolution imaging system would.
fn gaussian_blur(mask: &Array2<f64>, sigma_px: f64) -> Array2<f64> {
    if sigma_px <= 0.0 {
        return mask.clone();
    }
    let radius = (4.0 * sigma_px).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma_px).powi(2)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();

    let (ny, nx) = mask.dim();
    let mut tmp = Array2::<f64>::zeros((ny, nx));
    for iy in 0..ny {
        for ix in 0..nx {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                let sx = ix as isize + j as isize - radius;
                let sx = sx.clamp(0, nx as isize - 1) as usize;
                acc += k * mask[[iy, sx]];
            }
            tmp[[iy, ix]] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((ny, nx));
    for iy in 0..ny {
        for ix in 0..nx {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                let sy = iy as isize + j as isize - radius;
                let sy = sy.clamp(0, ny as isize - 1) as usize;
                acc += k * tmp[[sy, ix]];
            }
            out[[iy, ix]] = acc;
        }
    }
    out
}

fn centered_square_mask(grid: &Grid2D, side: f64, edge_sigma_px: f64) -> Array2<f64> {
    let mask = Array2::from_shape_fn((grid.ny(), grid.nx()), |(iy, ix)| {
        let x = grid.x(ix);
        let y = grid.y(iy);
        if x.abs() <= side / 2.0 && y.abs() <= side / 2.0 {
            1.0
        } else {
            0.0
        }
    });
    gaussian_blur(&mask, edge_sigma_px)
}

/// Transparent sample with a phase plateau on a centered square.
/// `edge_sigma_px` softens the edges (0 = hard binary edges).
pub fn phase_step_square(
    grid: Grid2D,
    side: f64,
    phase: f64,
    edge_sigma_px: f64,
) -> Result<SampleTransmittance> {
    if side <= 0.0 {
        return Err(Error::invalid("square side must be positive"));
    }
    let mask = centered_square_mask(&grid, side, edge_sigma_px);
    let alpha = mask.mapv(|m| m * phase);
    let t = Array2::from_elem((grid.ny(), grid.nx()), 1.0);
    SampleTransmittance::new(grid, t, alpha)
}

/// Resolution-target style element: three parallel vertical phase bars,
/// each `bar_width` wide and `5 * bar_width` long, separated by `bar_width`.
pub fn three_bar_target(
    grid: Grid2D,
    bar_width: f64,
    phase: f64,
    edge_sigma_px: f64,
) -> Result<SampleTransmittance> {
    if bar_width <= 0.0 {
        return Err(Error::invalid("bar width must be positive"));
    }
    let length = 5.0 * bar_width;
    let mask = Array2::from_shape_fn((grid.ny(), grid.nx()), |(iy, ix)| {
        let x = grid.x(ix);
        let y = grid.y(iy);
        if y.abs() > length / 2.0 {
            return 0.0;
        }
        // bar centers at -2w, 0, +2w
        for c in [-2.0 * bar_width, 0.0, 2.0 * bar_width] {
            if (x - c).abs() <= bar_width / 2.0 {
                return 1.0;
            }
        }
        0.0
    });
    let mask = gaussian_blur(&mask, edge_sigma_px);
    let alpha = mask.mapv(|m| m * phase);
    let t = Array2::from_elem((grid.ny(), grid.nx()), 1.0);
    SampleTransmittance::new(grid, t, alpha)
}

/// Partially absorbing centered square: transmittance `t_in` inside, 1 outside,
/// with an optional phase plateau on the same square.
pub fn amplitude_square(
    grid: Grid2D,
    side: f64,
    t_in: f64,
    phase: f64,
    edge_sigma_px: f64,
) -> Result<SampleTransmittance> {
    if side <= 0.0 {
        return Err(Error::invalid("square side must be positive"));
    }
    if !(0.0..=1.0).contains(&t_in) {
        return Err(Error::invalid("inner transmittance must lie in [0, 1]"));
    }
    let mask = centered_square_mask(&grid, side, edge_sigma_px);
    let t = mask.mapv(|m| 1.0 + m * (t_in - 1.0));
    let alpha = mask.mapv(|m| m * phase);
    SampleTransmittance::new(grid, t, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_wrapping() {
        let grid = Grid2D::square(4, 1e-6).unwrap();
        let alpha = Array2::from_elem((4, 4), 3.0 * PI);
        let t = Array2::from_elem((4, 4), 1.0);
        let s = SampleTransmittance::new(grid, t, alpha).unwrap();
        for &a in s.alpha().iter() {
            assert!((a - PI).abs() < 1e-12);
        }
    }

    #[test]
    fn transmittance_bounds_enforced() {
        let grid = Grid2D::square(4, 1e-6).unwrap();
        let t = Array2::from_elem((4, 4), 1.5);
        let alpha = Array2::zeros((4, 4));
        assert!(SampleTransmittance::new(grid, t, alpha).is_err());
    }

    #[test]
    fn target_phase_value_127nm() {
        // 127 nm step at n = 1.47 probed at 810 nm
        let a = phase_from_depth(127e-9, 1.47, 810e-9);
        assert!((a - 0.46).abs() < 0.01, "alpha = {a}");
    }

    #[test]
    fn phase_square_geometry() {
        let grid = Grid2D::square(32, 1e-4).unwrap();
        let s = phase_step_square(grid, 1e-3, 0.46, 0.0).unwrap();
        assert_eq!(s.alpha()[[16, 16]], 0.46);
        assert_eq!(s.alpha()[[0, 0]], 0.0);
        assert!(s.transmittance().iter().all(|&t| t == 1.0));
    }

    #[test]
    fn amplitude_square_values() {
        let grid = Grid2D::square(32, 1e-4).unwrap();
        let s = amplitude_square(grid, 1e-3, 0.5, 0.0, 0.0).unwrap();
        assert_eq!(s.transmittance()[[16, 16]], 0.5);
        assert_eq!(s.transmittance()[[0, 0]], 1.0);
    }

    #[test]
    fn three_bars_present() {
        let grid = Grid2D::square(64, 1e-4).unwrap();
        let s = three_bar_target(grid, 4e-4, 0.3, 0.0).unwrap();
        let c = 32;
        // center bar and side bars at +-2w = +-8 px
        assert!(s.alpha()[[c, c]] > 0.29);
        assert!(s.alpha()[[c, c + 8]] > 0.29);
        assert!(s.alpha()[[c, c - 8]] > 0.29);
        // gaps at +-1w = +-4 px
        assert!(s.alpha()[[c, c + 4]].abs() < 1e-12);
    }

    #[test]
    fn csv_import() {
        let dir = std::env::temp_dir().join(format!("bpi_sample_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let tp = dir.join("t.csv");
        let ap = dir.join("a.csv");
        std::fs::write(&tp, "1.0,0.5\n0.25,1.0\n").unwrap();
        std::fs::write(&ap, "0.0,0.1\n-0.2,0.3\n").unwrap();
        let s = SampleTransmittance::from_csv(&tp, &ap, 55e-6).unwrap();
        assert_eq!(s.grid().nx(), 2);
        assert_eq!(s.transmittance()[[1, 0]], 0.25);
        assert!((s.alpha()[[0, 1]] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("bpi_sample_rt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.bpfd");
        let grid = Grid2D::square(8, 55e-6).unwrap();
        let s = amplitude_square(grid, 2e-4, 0.5, 0.3, 0.0).unwrap();
        s.write(&path).unwrap();
        let back = SampleTransmittance::read(&path).unwrap();
        for (a, b) in s.transmittance().iter().zip(back.transmittance().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in s.alpha().iter().zip(back.alpha().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
