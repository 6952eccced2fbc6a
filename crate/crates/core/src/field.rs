//! Complex scalar fields on a grid, discrete Fourier transforms, and the
//! Fresnel propagator.

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::Grid2D;
use ndarray::Array2;
use num_complex::Complex64;

/// A 2D complex amplitude sampled on a [`Grid2D`].
///
/// Values are stored row-major with shape `(ny, nx)`, indexed `[[iy, ix]]`.
/// The `aliased` flag marks fields produced by a propagation step whose
/// transverse spread exceeded the sampling guard; it is advisory and is
/// propagated through further operations.
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: Grid2D,
    values: Array2<Complex64>,
    aliased: bool,
}

impl ComplexField {
    pub fn new(grid: Grid2D, values: Array2<Complex64>) -> Result<Self> {
        if values.dim() != (grid.ny(), grid.nx()) {
            return Err(Error::GridMismatch(format!(
                "value array {:?} does not match grid {}x{}",
                values.dim(),
                grid.nx(),
                grid.ny()
            )));
        }
        Ok(Self {
            grid,
            values,
            aliased: false,
        })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: Array2::from_elem((grid.ny(), grid.nx()), Complex64::ZERO),
            aliased: false,
        }
    }

    /// Build a field from a function of the centered physical coordinates (x, y).
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> Complex64) -> Self {
        let values = Array2::from_shape_fn((grid.ny(), grid.nx()), |(iy, ix)| {
            f(grid.x(ix), grid.y(iy))
        });
        Self {
            grid,
            values,
            aliased: false,
        }
    }

    pub fn uniform(grid: Grid2D, value: Complex64) -> Self {
        Self {
            grid,
            values: Array2::from_elem((grid.ny(), grid.nx()), value),
            aliased: false,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    pub fn aliased(&self) -> bool {
        self.aliased
    }

    pub fn set_aliased(&mut self, flag: bool) {
        self.aliased = flag;
    }

    /// Total power: sum of |v|^2 times the pixel area.
    pub fn power(&self) -> f64 {
        let pa = self.grid.pitch() * self.grid.pitch();
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * pa
    }

    /// Rescale so that `power()` equals `target`.
    pub fn normalize_power(&mut self, target: f64) -> Result<()> {
        let p = self.power();
        if p <= 0.0 {
            return Err(Error::DegenerateDensity);
        }
        let s = (target / p).sqrt();
        self.values.mapv_inplace(|v| v * s);
        Ok(())
    }

    /// Per-pixel intensity |v|^2.
    pub fn intensity(&self) -> Array2<f64> {
        self.values.mapv(|v| v.norm_sqr())
    }

    /// Unitary forward DFT (zero frequency at bin (0, 0)).
    pub fn dft_forward(&self) -> ComplexField {
        let mut values = self.values.clone();
        fft::fft2(&mut values);
        ComplexField {
            grid: self.grid,
            values,
            aliased: self.aliased,
        }
    }

    /// Unitary inverse DFT.
    pub fn dft_inverse(&self) -> ComplexField {
        let mut values = self.values.clone();
        fft::ifft2(&mut values);
        ComplexField {
            grid: self.grid,
            values,
            aliased: self.aliased,
        }
    }

    /// Pointwise product with another field on the same grid.
    pub fn multiply(&self, other: &ComplexField) -> Result<ComplexField> {
        self.grid.require_eq(&other.grid, "field product")?;
        let values = &self.values * &other.values;
        Ok(ComplexField {
            grid: self.grid,
            values,
            aliased: self.aliased || other.aliased,
        })
    }

    /// Intensity-weighted RMS radius about the grid center.
    pub fn rms_radius(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((iy, ix), v) in self.values.indexed_iter() {
            let x = self.grid.x(ix);
            let y = self.grid.y(iy);
            let w = v.norm_sqr();
            num += w * (x * x + y * y);
            den += w;
        }
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            0.0
        }
    }
}

/// Relative RMS difference between two fields, normalized by the RMS of `a`.
pub fn rms_diff(a: &ComplexField, b: &ComplexField) -> f64 {
    let num: f64 = a
        .values()
        .iter()
        .zip(b.values().iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    let den: f64 = a.values().iter().map(|v| v.norm_sqr()).sum();
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// True when propagating over `dz` at `wavelength` would wrap the steepest
/// resolvable ray past half the grid extent: the transverse displacement
/// `wavelength * |dz| * k_max / (2*pi)` exceeds `n * pitch / 2` on some axis.
pub fn fresnel_aliasing(grid: &Grid2D, wavelength: f64, dz: f64) -> bool {
    let spread = wavelength * dz.abs() / (2.0 * grid.pitch());
    spread > grid.extent_x() / 2.0 || spread > grid.extent_y() / 2.0
}

/// Fresnel (paraxial angular-spectrum) propagation over a signed distance.
///
/// Implemented as multiplication of the spatial-frequency spectrum by the
/// unit-modulus transfer function `exp(-i * wavelength * dz * |k|^2 / (4*pi))`,
/// which preserves total power exactly and is exactly invertible (`-dz`).
/// The overall plane-wave carrier phase `exp(i 2 pi dz / wavelength)` is
/// omitted; results are envelopes, defined up to a global phase.
pub fn fresnel_propagate(field: &ComplexField, wavelength: f64, dz: f64) -> Result<ComplexField> {
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(Error::invalid(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    if !dz.is_finite() {
        return Err(Error::invalid("propagation distance must be finite"));
    }

    let grid = *field.grid();
    if dz == 0.0 {
        return Ok(field.clone());
    }

    let freqs = grid.frequencies();
    let mut values = field.values().clone();
    fft::fft2(&mut values);
    let coeff = -wavelength * dz / (4.0 * std::f64::consts::PI);
    for ((iy, ix), v) in values.indexed_iter_mut() {
        let phase = coeff * freqs.k_squared(ix, iy);
        *v *= Complex64::from_polar(1.0, phase);
    }
    fft::ifft2(&mut values);

    let mut out = ComplexField::new(grid, values)?;
    out.set_aliased(field.aliased() || fresnel_aliasing(&grid, wavelength, dz));
    Ok(out)
}
