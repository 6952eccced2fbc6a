//! Uniform square-pixel grids and their spatial-frequency counterparts.

use crate::error::{Error, Result};

/// A uniform 2D grid of square pixels.
///
/// Positions are centered: pixel index `i` along x sits at `(i - nx/2) * pitch`
/// meters, so index `nx/2` is the origin (the usual FFT-shift center).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    pitch: f64,
}

impl Grid2D {
    /// Event-camera geometry: 256x256 pixels, 55 um pitch.
    pub const CAMERA_N: usize = 256;
    pub const CAMERA_PITCH: f64 = 55e-6;

    pub fn new(nx: usize, ny: usize, pitch: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::invalid(format!(
                "grid must be at least 2x2, got {nx}x{ny}"
            )));
        }
        if nx > u16::MAX as usize || ny > u16::MAX as usize {
            return Err(Error::invalid(format!(
                "grid {nx}x{ny} exceeds the u16 pixel-index range"
            )));
        }
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(Error::invalid(format!("pitch must be positive, got {pitch}")));
        }
        Ok(Self { nx, ny, pitch })
    }

    pub fn camera() -> Self {
        Self {
            nx: Self::CAMERA_N,
            ny: Self::CAMERA_N,
            pitch: Self::CAMERA_PITCH,
        }
    }

    /// Square grid with `n` pixels per side.
    pub fn square(n: usize, pitch: f64) -> Result<Self> {
        Self::new(n, n, pitch)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical x coordinate of pixel column `ix` (centered grid).
    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 - (self.nx / 2) as f64) * self.pitch
    }

    /// Physical y coordinate of pixel row `iy` (centered grid).
    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 - (self.ny / 2) as f64) * self.pitch
    }

    pub fn extent_x(&self) -> f64 {
        self.nx as f64 * self.pitch
    }

    pub fn extent_y(&self) -> f64 {
        self.ny as f64 * self.pitch
    }

    /// Centroid grid used for pixel super-resolved coincidence histograms:
    /// half the pitch, `2n - 1` bins per axis.
    pub fn doubled(&self) -> Grid2D {
        Grid2D {
            nx: 2 * self.nx - 1,
            ny: 2 * self.ny - 1,
            pitch: self.pitch / 2.0,
        }
    }

    pub fn frequencies(&self) -> SpatialFrequencyGrid {
        SpatialFrequencyGrid { grid: *self }
    }

    pub(crate) fn require_eq(&self, other: &Grid2D, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {}x{} @ {} m vs {}x{} @ {} m",
                self.nx, self.ny, self.pitch, other.nx, other.ny, other.pitch
            )))
        }
    }
}

/// Angular spatial frequencies (rad/m) of the DFT bins of a [`Grid2D`].
///
/// Bin `(0, 0)` is the zero frequency; bin spacing along x is `2*pi/(nx*pitch)`.
#[derive(Clone, Copy, Debug)]
pub struct SpatialFrequencyGrid {
    grid: Grid2D,
}

impl SpatialFrequencyGrid {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn fft_freq(index: usize, n: usize, pitch: f64) -> f64 {
        let i = index as isize;
        let n_i = n as isize;
        let signed = if i <= (n_i - 1) / 2 { i } else { i - n_i };
        2.0 * std::f64::consts::PI * signed as f64 / (n as f64 * pitch)
    }

    /// kx of DFT bin `ix`, in rad/m.
    pub fn kx(&self, ix: usize) -> f64 {
        Self::fft_freq(ix, self.grid.nx, self.grid.pitch)
    }

    /// ky of DFT bin `iy`, in rad/m.
    pub fn ky(&self, iy: usize) -> f64 {
        Self::fft_freq(iy, self.grid.ny, self.grid.pitch)
    }

    /// |k|^2 of DFT bin `(ix, iy)`.
    pub fn k_squared(&self, ix: usize, iy: usize) -> f64 {
        let kx = self.kx(ix);
        let ky = self.ky(iy);
        kx * kx + ky * ky
    }

    /// Largest |kx| on the grid (the Nyquist frequency pi/pitch for even nx).
    pub fn kx_max(&self) -> f64 {
        (0..self.grid.nx)
            .map(|i| self.kx(i).abs())
            .fold(0.0, f64::max)
    }

    pub fn ky_max(&self) -> f64 {
        (0..self.grid.ny)
            .map(|i| self.ky(i).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid2D::new(1, 8, 1e-6).is_err());
        assert!(Grid2D::new(8, 8, 0.0).is_err());
        assert!(Grid2D::new(8, 8, -1.0).is_err());
        assert!(Grid2D::new(70000, 8, 1e-6).is_err());
    }

    #[test]
    fn camera_defaults() {
        let g = Grid2D::camera();
        assert_eq!(g.nx(), 256);
        assert_eq!(g.ny(), 256);
        assert_eq!(g.pitch(), 55e-6);
    }

    #[test]
    fn centered_coordinates() {
        let g = Grid2D::new(8, 8, 2.0).unwrap();
        assert_eq!(g.x(4), 0.0);
        assert_eq!(g.x(0), -8.0);
        assert_eq!(g.x(7), 6.0);
    }

    #[test]
    fn frequency_spacing_and_ordering() {
        let g = Grid2D::new(8, 4, 0.5).unwrap();
        let f = g.frequencies();
        assert_eq!(f.kx(0), 0.0);
        let dk = 2.0 * std::f64::consts::PI / (8.0 * 0.5);
        assert!((f.kx(1) - dk).abs() < 1e-12);
        assert!((f.kx(7) + dk).abs() < 1e-12);
        // Nyquist bin for even n carries the negative extreme.
        assert!((f.kx(4) + 4.0 * dk).abs() < 1e-12);
        assert!((f.kx_max() - 4.0 * dk).abs() < 1e-12);
    }

    #[test]
    fn doubled_grid() {
        let g = Grid2D::camera().doubled();
        assert_eq!(g.nx(), 511);
        assert_eq!(g.ny(), 511);
        assert_eq!(g.pitch(), 27.5e-6);
    }
}
