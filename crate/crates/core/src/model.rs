//! Bi-photon state model: pump field, phase-matching factor, sample action,
//! factorized propagation, the classical reference arm, and the joint
//! coincidence density.
//!
//! Coordinates follow the half-sum / half-difference convention
//! `X+ = (Xi + Xs)/2`, `X- = (Xi - Xs)/2`, under which both the centroid
//! factor E(X+) and the phase-matching factor Phi(X-) propagate with the
//! ordinary Fresnel kernel evaluated at the *pump* wavelength, and the
//! correlation image overlays the sample plane at unit magnification.

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{fresnel_propagate, ComplexField};
use crate::grid::Grid2D;
use crate::sample::{SampleMode, SampleTransmittance};
use ndarray::{Array2, Array4};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Source and grid constants of the degenerate SPDC setup.
#[derive(Clone, Copy, Debug)]
pub struct OpticalConfig {
    /// Pump wavelength (m). Down-converted photons sit at exactly twice this.
    pub lambda_pump: f64,
    /// Nonlinear crystal thickness L (m).
    pub crystal_thickness: f64,
    /// Longitudinal walk-off parameter xi (dimensionless).
    pub xi: f64,
    /// Camera / simulation grid.
    pub grid: Grid2D,
}

impl OpticalConfig {
    pub fn new(lambda_pump: f64, crystal_thickness: f64, xi: f64, grid: Grid2D) -> Result<Self> {
        if !(lambda_pump > 0.0) {
            return Err(Error::invalid("pump wavelength must be positive"));
        }
        if !(crystal_thickness > 0.0) {
            return Err(Error::invalid("crystal thickness must be positive"));
        }
        Ok(Self {
            lambda_pump,
            crystal_thickness,
            xi,
            grid,
        })
    }

    /// 405 nm pump, 1 mm crystal, no walk-off, camera grid.
    pub fn default_camera() -> Self {
        Self {
            lambda_pump: 405e-9,
            crystal_thickness: 1e-3,
            xi: 0.0,
            grid: Grid2D::camera(),
        }
    }

    /// Degenerate down-converted wavelength: exactly 2 * lambda_pump.
    pub fn lambda_spdc(&self) -> f64 {
        2.0 * self.lambda_pump
    }
}

/// sin(x)/x with sinc(0) = 1.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Collimated Gaussian pump amplitude exp(-r^2/w0^2), flat phase, normalized
/// to unit power and then scaled by `amplitude`.
pub fn pump_near_field(config: &OpticalConfig, waist: f64, amplitude: f64) -> Result<ComplexField> {
    if !(waist > 0.0) {
        return Err(Error::invalid("pump waist must be positive"));
    }
    if waist < 3.0 * config.grid.pitch() {
        return Err(Error::invalid(format!(
            "pump waist {waist} m is not resolvable: needs at least 3 pixels ({} m)",
            3.0 * config.grid.pitch()
        )));
    }
    let mut field = ComplexField::from_fn(config.grid, |x, y| {
        Complex64::new((-(x * x + y * y) / (waist * waist)).exp(), 0.0)
    });
    field.normalize_power(1.0)?;
    if amplitude != 1.0 {
        field.values_mut().mapv_inplace(|v| v * amplitude);
    }
    Ok(field)
}

/// Far-field phase-matching factor on the relative-momentum grid:
/// `sinc(L * lambda_p * |k|^2 / (4 pi) + xi)` evaluated per DFT bin
/// (zero frequency at bin (0, 0)).
pub fn phase_matching_far(config: &OpticalConfig) -> ComplexField {
    let freqs = config.grid.frequencies();
    let coeff = config.crystal_thickness * config.lambda_pump / (4.0 * PI);
    let values = Array2::from_shape_fn((config.grid.ny(), config.grid.nx()), |(iy, ix)| {
        Complex64::new(sinc(coeff * freqs.k_squared(ix, iy) + config.xi), 0.0)
    });
    ComplexField::new(config.grid, values).expect("shape matches grid")
}

/// Near-field phase-matching factor Phi_0(X-): centered inverse DFT of the
/// far-field factor, normalized to unit power.
pub fn phase_matching_near(config: &OpticalConfig) -> Result<ComplexField> {
    let far = phase_matching_far(config);
    let mut values = far.into_values();
    fft::ifft2(&mut values);
    let centered = fft::fftshift2(&values);
    let mut field = ComplexField::new(config.grid, centered)?;
    field.normalize_power(1.0)?;
    Ok(field)
}

/// Characteristic near-field width of the phase-matching function,
/// sqrt(L * lambda_p / (4 pi)).
pub fn phase_matching_width_scale(config: &OpticalConfig) -> f64 {
    (config.crystal_thickness * config.lambda_pump / (4.0 * PI)).sqrt()
}

/// Apply a sample to an amplitude: t^2 in biphoton mode, t in classical mode.
pub fn apply_sample(
    field: &ComplexField,
    sample: &SampleTransmittance,
    mode: SampleMode,
) -> Result<ComplexField> {
    field.grid().require_eq(sample.grid(), "apply_sample")?;
    field.multiply(&sample.factor(mode))
}

/// The two factors of the bi-photon wavefunction at plane `z`:
/// `psi_z(Xi, Xs) = Phi_z(X-) * E_z(X+)`.
#[derive(Clone, Debug)]
pub struct BiphotonFactors {
    phi: ComplexField,
    e: ComplexField,
    z: f64,
}

impl BiphotonFactors {
    pub fn new(phi: ComplexField, e: ComplexField, z: f64) -> Result<Self> {
        phi.grid().require_eq(e.grid(), "biphoton factors")?;
        Ok(Self { phi, e, z })
    }

    /// Factors at the sample plane: Phi_0 from the crystal, E_0 = t^2 * pump.
    pub fn at_sample_plane(
        config: &OpticalConfig,
        pump: &ComplexField,
        sample: &SampleTransmittance,
    ) -> Result<Self> {
        let phi = phase_matching_near(config)?;
        let e = apply_sample(pump, sample, SampleMode::Biphoton)?;
        Self::new(phi, e, 0.0)
    }

    pub fn phi(&self) -> &ComplexField {
        &self.phi
    }

    pub fn e(&self) -> &ComplexField {
        &self.e
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn grid(&self) -> &Grid2D {
        self.e.grid()
    }
}

/// Propagate both factors by `dz`. In the half-sum/half-difference coordinates
/// each factor obeys the free-space Fresnel kernel at the pump wavelength.
pub fn propagate_biphoton(
    factors: &BiphotonFactors,
    config: &OpticalConfig,
    dz: f64,
) -> Result<BiphotonFactors> {
    let phi = fresnel_propagate(&factors.phi, config.lambda_pump, dz)?;
    let e = fresnel_propagate(&factors.e, config.lambda_pump, dz)?;
    BiphotonFactors::new(phi, e, factors.z + dz)
}

/// The classical reference arm: apply the sample once (amplitude t) and
/// propagate the probe beam by `dz` at `lambda` (810 nm in the experiment).
pub fn classical_field_at(
    probe: &ComplexField,
    sample: &SampleTransmittance,
    dz: f64,
    lambda: f64,
) -> Result<ComplexField> {
    let after = apply_sample(probe, sample, SampleMode::Classical)?;
    fresnel_propagate(&after, lambda, dz)
}

/// Normalized joint coincidence density over pixel pairs (Xi, Xs), factorized
/// as |Phi(X-)|^2 * |E(X+)|^2 with X+ = (Xi+Xs)/2, X- = (Xi-Xs)/2 and
/// restricted to pairs whose pixels both lie on the camera grid.
///
/// Pixel pairs are reachable only when `ci = c + d - n/2` and
/// `cs = c - d + n/2` are valid indices for some centroid pixel `c` and
/// relative pixel `d`; the mass of pair (i, s) is
/// `p_plus[(i+s)/2] * p_minus[(i-s)/2 + n/2] / Z` (zero when i+s is odd).
#[derive(Clone, Debug)]
pub struct JointDensity {
    grid: Grid2D,
    /// Normalized |E|^2 over centroid pixels (sums to 1 before restriction).
    p_plus: Array2<f64>,
    /// Normalized |Phi|^2 over relative pixels.
    p_minus: Array2<f64>,
    /// Mass kept by the both-pixels-on-grid restriction.
    acceptance: f64,
}

impl JointDensity {
    pub fn from_factors(factors: &BiphotonFactors) -> Result<Self> {
        let grid = *factors.grid();
        let mut p_plus = factors.e.intensity();
        let mut p_minus = factors.phi.intensity();
        let se = p_plus.sum();
        let sp = p_minus.sum();
        if se <= 0.0 || sp <= 0.0 {
            return Err(Error::DegenerateDensity);
        }
        p_plus.mapv_inplace(|v| v / se);
        p_minus.mapv_inplace(|v| v / sp);

        let acceptance = acceptance_mass(&grid, &p_plus, &p_minus);
        if acceptance <= 0.0 {
            return Err(Error::DegenerateDensity);
        }
        Ok(Self {
            grid,
            p_plus,
            p_minus,
            acceptance,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn p_plus(&self) -> &Array2<f64> {
        &self.p_plus
    }

    pub fn p_minus(&self) -> &Array2<f64> {
        &self.p_minus
    }

    /// Fraction of factorized mass whose photon pixels both fall on the grid.
    pub fn acceptance(&self) -> f64 {
        self.acceptance
    }

    /// Probability mass of the pixel pair (idler, signal).
    pub fn mass(&self, xi: usize, yi: usize, xs: usize, ys: usize) -> f64 {
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        if xi >= nx || xs >= nx || yi >= ny || ys >= ny {
            return 0.0;
        }
        if (xi + xs) % 2 != 0 || (yi + ys) % 2 != 0 {
            return 0.0;
        }
        let cx = (xi + xs) / 2;
        let cy = (yi + ys) / 2;
        let dx = (xi as isize - xs as isize) / 2 + (nx / 2) as isize;
        let dy = (yi as isize - ys as isize) / 2 + (ny / 2) as isize;
        if dx < 0 || dy < 0 || dx >= nx as isize || dy >= ny as isize {
            return 0.0;
        }
        self.p_plus[[cy, cx]] * self.p_minus[[dy as usize, dx as usize]] / self.acceptance
    }

    /// Marginal over X-: the centroid distribution of the restricted density.
    pub fn marginal_plus(&self) -> Array2<f64> {
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        let mut out = Array2::<f64>::zeros((ny, nx));
        let prefix = PrefixSum2::new(&self.p_minus);
        for cy in 0..ny {
            for cx in 0..nx {
                let w = prefix.box_sum(valid_d_range(cx, nx), valid_d_range_y(cy, ny));
                out[[cy, cx]] = self.p_plus[[cy, cx]] * w / self.acceptance;
            }
        }
        out
    }

    /// Dense 4D density indexed [yi, xi, ys, xs]; small grids only.
    pub fn to_dense(&self) -> Array4<f64> {
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        let mut out = Array4::<f64>::zeros((ny, nx, ny, nx));
        for yi in 0..ny {
            for xi in 0..nx {
                for ys in 0..ny {
                    for xs in 0..nx {
                        out[[yi, xi, ys, xs]] = self.mass(xi, yi, xs, ys);
                    }
                }
            }
        }
        out
    }
}

/// Range of relative-pixel x indices `dx` keeping both photons on the grid for
/// centroid x index `cx`: requires `0 <= cx + dx - n/2 < n` and
/// `0 <= cx - dx + n/2 < n`.
fn valid_d_range(cx: usize, n: usize) -> (usize, usize) {
    let h = (n / 2) as isize;
    let c = cx as isize;
    let lo = (h - c).max(c - h + 1).max(0);
    let hi = (h - c + n as isize - 1).min(c + h).min(n as isize - 1);
    if lo > hi {
        (1, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

fn valid_d_range_y(cy: usize, n: usize) -> (usize, usize) {
    valid_d_range(cy, n)
}

struct PrefixSum2 {
    cum: Array2<f64>,
}

impl PrefixSum2 {
    fn new(a: &Array2<f64>) -> Self {
        let (ny, nx) = a.dim();
        let mut cum = Array2::<f64>::zeros((ny + 1, nx + 1));
        for iy in 0..ny {
            for ix in 0..nx {
                cum[[iy + 1, ix + 1]] =
                    a[[iy, ix]] + cum[[iy, ix + 1]] + cum[[iy + 1, ix]] - cum[[iy, ix]];
            }
        }
        Self { cum }
    }

    /// Inclusive box sum over x in [x0, x1], y in [y0, y1]; empty if reversed.
    fn box_sum(&self, (x0, x1): (usize, usize), (y0, y1): (usize, usize)) -> f64 {
        if x0 > x1 || y0 > y1 {
            return 0.0;
        }
        self.cum[[y1 + 1, x1 + 1]] - self.cum[[y0, x1 + 1]] - self.cum[[y1 + 1, x0]]
            + self.cum[[y0, x0]]
    }
}

/// Total factorized mass passing the both-photons-on-grid restriction.
fn acceptance_mass(grid: &Grid2D, p_plus: &Array2<f64>, p_minus: &Array2<f64>) -> f64 {
    let nx = grid.nx();
    let ny = grid.ny();
    let prefix = PrefixSum2::new(p_minus);
    let mut total = 0.0;
    for cy in 0..ny {
        for cx in 0..nx {
            let w = p_plus[[cy, cx]];
            if w > 0.0 {
                total += w * prefix.box_sum(valid_d_range(cx, nx), valid_d_range_y(cy, ny));
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pump_normalization_and_waist() {
        let cfg = OpticalConfig::default_camera();
        let pump = pump_near_field(&cfg, 1e-3, 1.0).unwrap();
        assert!((pump.power() - 1.0).abs() < 1e-12);
        // 1/e^2 intensity radius equals the waist within half a pixel:
        // intensity at r = w0 is exp(-2) of the peak.
        let g = cfg.grid;
        let c = g.nx() / 2;
        let peak = pump.values()[[c, c]].norm_sqr();
        let target = peak * (-2.0f64).exp();
        // crossing radius interpolated in (r^2, log I), exact for a Gaussian
        let mut radius = None;
        for ix in c + 1..g.nx() {
            let i1 = pump.values()[[c, ix - 1]].norm_sqr();
            let i2 = pump.values()[[c, ix]].norm_sqr();
            if i2 <= target && i1 > target {
                let (r1, r2) = (g.x(ix - 1), g.x(ix));
                let (l1, l2) = ((i1 / peak).ln(), (i2 / peak).ln());
                let r_sq = r1 * r1 + (r2 * r2 - r1 * r1) * (-2.0 - l1) / (l2 - l1);
                radius = Some(r_sq.sqrt());
                break;
            }
        }
        let r = radius.unwrap();
        assert!((r - 1e-3).abs() <= 0.5 * g.pitch() + 1e-12, "r = {r}");
    }

    #[test]
    fn pump_waist_must_resolve() {
        let cfg = OpticalConfig::default_camera();
        assert!(pump_near_field(&cfg, 2.0 * cfg.grid.pitch(), 1.0).is_err());
    }

    #[test]
    fn huge_waist_is_uniform() {
        let cfg = OpticalConfig::default_camera();
        let pump = pump_near_field(&cfg, 1e3, 1.0).unwrap();
        let first = pump.values()[[0, 0]].re;
        for v in pump.values().iter() {
            assert!((v.re - first).abs() / first < 1e-9);
            assert_eq!(v.im, 0.0);
        }
    }

    #[test]
    fn sinc_values() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(PI).abs() < 1e-12);
        assert!((sinc(PI / 2.0) - 2.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn phase_matching_far_center_and_zero_ring() {
        let cfg = OpticalConfig::default_camera();
        let far = phase_matching_far(&cfg);
        assert!((far.values()[[0, 0]].re - 1.0).abs() < 1e-12);

        // with xi = -pi the k=0 value vanishes (ring-shaped emission)
        let cfg2 = OpticalConfig {
            xi: -PI,
            ..OpticalConfig::default_camera()
        };
        let far2 = phase_matching_far(&cfg2);
        assert!(far2.values()[[0, 0]].re.abs() < 1e-12);
        // and the first maximum ring reaches sinc(0) = 1 where the argument
        // crosses zero: |k|^2 = 4 pi^2 / (L lambda_p) on a fine grid
        let fine = OpticalConfig {
            grid: Grid2D::square(256, 2e-6).unwrap(),
            xi: -PI,
            ..OpticalConfig::default_camera()
        };
        let farf = phase_matching_far(&fine);
        let freqs = fine.grid.frequencies();
        let target_k2 = 4.0 * PI * PI / (fine.crystal_thickness * fine.lambda_pump);
        let mut best = (f64::INFINITY, 0.0);
        for ix in 0..fine.grid.nx() {
            let k2 = freqs.k_squared(ix, 0);
            if (k2 - target_k2).abs() < best.0 {
                best = ((k2 - target_k2).abs(), farf.values()[[0, ix]].re);
            }
        }
        assert!(best.1 > 0.98, "ring value {}", best.1);
    }

    #[test]
    fn phase_matching_near_properties() {
        // grid pitch comparable to the width scale so the transform resolves it
        let cfg = OpticalConfig {
            grid: Grid2D::square(128, 6e-6).unwrap(),
            ..OpticalConfig::default_camera()
        };
        let near = phase_matching_near(&cfg).unwrap();
        assert!((near.power() - 1.0).abs() < 1e-12);

        let scale = phase_matching_width_scale(&cfg);
        assert!((scale - 5.677e-6).abs() < 1e-8);
        let rms = near.rms_radius();
        assert!(rms < 2.0 * scale && rms > 0.5 * scale, "rms = {rms}");

        // real and even under X- -> -X- for xi = 0
        let n = cfg.grid.nx();
        let c = n / 2;
        for v in near.values().iter() {
            assert!(v.im.abs() < 1e-10);
        }
        for off in 1..c {
            let a = near.values()[[c, c + off]].re;
            let b = near.values()[[c, c - off]].re;
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn apply_sample_phase_doubling_and_t_squaring() {
        let grid = Grid2D::square(16, 55e-6).unwrap();
        let field = ComplexField::uniform(grid, Complex64::new(1.0, 0.0));
        let t = Array2::from_elem((16, 16), 0.5);
        let alpha = Array2::from_elem((16, 16), 0.46);
        let s = SampleTransmittance::new(grid, t, alpha).unwrap();

        let b = apply_sample(&field, &s, SampleMode::Biphoton).unwrap();
        let c = apply_sample(&field, &s, SampleMode::Classical).unwrap();
        for v in b.values().iter() {
            assert!((v.norm() - 0.5).abs() < 1e-12); // amplitude T
            assert!((v.arg() - 0.92).abs() < 1e-12); // phase 2 alpha
        }
        for v in c.values().iter() {
            assert!((v.norm() - 0.5f64.sqrt()).abs() < 1e-12);
            assert!((v.arg() - 0.46).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_sample_is_identity() {
        let grid = Grid2D::square(8, 55e-6).unwrap();
        let field = ComplexField::from_fn(grid, |x, y| Complex64::new(x + 1.0, y));
        let s = SampleTransmittance::identity(grid);
        let out = apply_sample(&field, &s, SampleMode::Biphoton).unwrap();
        for (a, b) in field.values().iter().zip(out.values().iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn joint_density_delta_phi_supports_equal_pixels() {
        let grid = Grid2D::square(8, 55e-6).unwrap();
        let mut phi = ComplexField::zeros(grid);
        phi.values_mut()[[4, 4]] = Complex64::new(1.0, 0.0);
        let e = ComplexField::from_fn(grid, |x, y| {
            Complex64::new((-(x * x + y * y) / (1e-4 * 1e-4)).exp(), 0.0)
        });
        let f = BiphotonFactors::new(phi, e, 0.0).unwrap();
        let d = JointDensity::from_factors(&f).unwrap();
        let dense = d.to_dense();
        let mut total = 0.0;
        for yi in 0..8 {
            for xi in 0..8 {
                for ys in 0..8 {
                    for xs in 0..8 {
                        let m = dense[[yi, xi, ys, xs]];
                        if m > 0.0 {
                            assert_eq!((xi, yi), (xs, ys));
                        }
                        total += m;
                    }
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_density_marginal_matches_e() {
        let grid = Grid2D::square(8, 55e-6).unwrap();
        let mut phi = ComplexField::zeros(grid);
        phi.values_mut()[[4, 4]] = Complex64::new(1.0, 0.0);
        let e = ComplexField::from_fn(grid, |x, y| {
            Complex64::new((-(x * x + y * y) / (1e-4 * 1e-4)).exp(), 0.0)
        });
        let ie = e.intensity();
        let norm = ie.sum();
        let f = BiphotonFactors::new(phi, e, 0.0).unwrap();
        let d = JointDensity::from_factors(&f).unwrap();
        let marg = d.marginal_plus();
        for ((iy, ix), m) in marg.indexed_iter() {
            assert!((m - ie[[iy, ix]] / norm).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_density_errors() {
        let grid = Grid2D::square(8, 55e-6).unwrap();
        let phi = ComplexField::zeros(grid);
        let e = ComplexField::uniform(grid, Complex64::new(1.0, 0.0));
        let f = BiphotonFactors::new(phi, e, 0.0).unwrap();
        match JointDensity::from_factors(&f) {
            Err(Error::DegenerateDensity) => {}
            other => panic!("expected DegenerateDensity, got {other:?}"),
        }
    }

    #[test]
    fn factorization_preserved_under_propagation() {
        let cfg = OpticalConfig {
            grid: Grid2D::square(16, 55e-6).unwrap(),
            ..OpticalConfig::default_camera()
        };
        let pump = pump_near_field(&cfg, 1e-3, 1.0).unwrap();
        let sample = SampleTransmittance::identity(cfg.grid);
        let f0 = BiphotonFactors::at_sample_plane(&cfg, &pump, &sample).unwrap();
        let f1 = propagate_biphoton(&f0, &cfg, 0.005).unwrap();
        let d = JointDensity::from_factors(&f1).unwrap();
        // density of each pair equals the product of the independently
        // propagated marginal factors by construction; verify outer-product
        // structure on a few pairs
        let pp = d.p_plus().clone();
        let pm = d.p_minus().clone();
        let n = cfg.grid.nx();
        for (cx, cy, dx, dy) in [(8, 8, 8, 8), (9, 7, 9, 8), (10, 8, 7, 8)] {
            let xi = cx + dx - n / 2;
            let yi = cy + dy - n / 2;
            let xs = cx + n / 2 - dx;
            let ys = cy + n / 2 - dy;
            let m = d.mass(xi, yi, xs, ys);
            let expect = pp[[cy, cx]] * pm[[dy, dx]] / d.acceptance();
            assert!((m - expect).abs() <= 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn classical_matches_biphoton_kernel_scaling() {
        // fresnel at (810 nm, z) equals fresnel at (405 nm, 2z) exactly
        let grid = Grid2D::square(32, 55e-6).unwrap();
        let field = ComplexField::from_fn(grid, |x, y| {
            Complex64::new((-(x * x + y * y) / (4e-4 * 4e-4)).exp(), 0.0)
        });
        let a = fresnel_propagate(&field, 810e-9, 0.01).unwrap();
        let b = fresnel_propagate(&field, 405e-9, 0.02).unwrap();
        assert!(crate::field::rms_diff(&a, &b) < 1e-6);
    }
}
