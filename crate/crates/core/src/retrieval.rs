//! Non-interferometric phase retrieval: regularized TIE inversion with
//! epsilon selection, the Fresnel-propagator Gerchberg-Saxton iteration, and
//! the quantum/classical enhancement comparison.

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{fresnel_propagate, ComplexField};
use crate::image::{Rect, ScalarImage};
use crate::stats::median;
use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::PI;

/// TIE inversion parameters. `epsilon` is in m^-2 (1 cm^-2 = 1e4 m^-2);
/// `lambda_eff` is the propagation wavelength of the images being inverted:
/// the pump wavelength for bi-photon correlation images, the probe wavelength
/// for classical frames.
#[derive(Clone, Copy, Debug)]
pub struct TieConfig {
    pub epsilon: f64,
    pub dz: f64,
    pub lambda_eff: f64,
    /// Relative intensity floor applied before the division by I0.
    pub i_floor: f64,
}

impl TieConfig {
    pub fn new(epsilon: f64, dz: f64, lambda_eff: f64) -> Self {
        Self {
            epsilon,
            dz,
            lambda_eff,
            i_floor: 1e-3,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dz == 0.0 || !self.dz.is_finite() {
            return Err(Error::invalid("TIE requires a nonzero plane separation"));
        }
        if !(self.lambda_eff > 0.0) {
            return Err(Error::invalid("lambda_eff must be positive"));
        }
        if self.epsilon == 0.0 {
            return Err(Error::invalid(
                "epsilon = 0 leaves the kernel singular at k = 0; use epsilon > 0",
            ));
        }
        if self.epsilon < 0.0 {
            return Err(Error::invalid("epsilon must be non-negative"));
        }
        if !(self.i_floor > 0.0 && self.i_floor < 1.0) {
            return Err(Error::invalid("i_floor must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Regularized TIE Green kernel
/// `G_r(k) = -lambda k^2 / ((lambda k^2)^2 / (2 pi) + 2 pi epsilon)`;
/// `G_r -> -2 pi / (lambda k^2)` as epsilon -> 0 and `G_r(0) = 0` for
/// epsilon > 0, which pins the retrieved phase's undetermined mean.
pub fn tie_kernel(k_squared: f64, lambda: f64, epsilon: f64) -> f64 {
    let lk = lambda * k_squared;
    -lk / (lk * lk / (2.0 * PI) + 2.0 * PI * epsilon)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Tie,
    Gs,
}

/// Output of a phase-retrieval run.
#[derive(Clone, Debug)]
pub struct RetrievalResult {
    pub phase: ScalarImage,
    pub amplitude: ScalarImage,
    pub method: Method,
    /// Regularization used (m^-2), TIE only.
    pub epsilon_used: Option<f64>,
    /// Propagation mismatch Err from the epsilon scan, when evaluated.
    pub residual: Option<f64>,
    /// Iterations executed (GS).
    pub iterations: usize,
    pub warnings: Vec<String>,
}

fn support_mask(i0: &Array2<f64>, i_floor: f64) -> (Array2<bool>, f64) {
    let max = i0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let thresh = i_floor * max;
    (i0.mapv(|v| v >= thresh), thresh)
}

fn subtract_support_median(phase: &mut Array2<f64>, support: &Array2<bool>) {
    let vals: Vec<f64> = phase
        .iter()
        .zip(support.iter())
        .filter_map(|(&p, &s)| if s { Some(p) } else { None })
        .collect();
    if !vals.is_empty() {
        let m = median(&vals);
        phase.mapv_inplace(|p| p - m);
    }
}

/// Invert the TIE from the in-focus image `i0` (sample plane) and a defocused
/// image `i1` at signed distance `cfg.dz`.
///
/// The images are count-matched, `i0` is rescaled to unit mean over its
/// support, and the phase is
/// `phi = F^-1[G_r F[(I0 - I1)/dz]] / max(I0, floor)`; the sign matches the
/// angular-spectrum propagator used throughout, under which
/// `dI/dz = -(lambda/2 pi) I lap(phi)` for uniform intensity. The phase
/// offset is gauged by zeroing the support median.
pub fn tie_invert(i0: &ScalarImage, i1: &ScalarImage, cfg: &TieConfig) -> Result<RetrievalResult> {
    cfg.validate()?;
    i0.grid().require_eq(i1.grid(), "tie_invert")?;
    let t1 = i1.total();
    if t1 <= 0.0 || i0.total() <= 0.0 {
        return Err(Error::invalid("TIE input images must hold positive counts"));
    }
    let count_match = i0.total() / t1;
    let di_dz = ndarray::Zip::from(i0.data())
        .and(i1.data())
        .map_collect(|&a, &b| (a - b * count_match) / cfg.dz);
    tie_invert_from_derivative(i0, &di_dz, cfg)
}

/// Shared TIE core taking the longitudinal derivative image directly,
/// in the same count scale as `i0`.
fn tie_invert_from_derivative(
    i0: &ScalarImage,
    di_dz: &Array2<f64>,
    cfg: &TieConfig,
) -> Result<RetrievalResult> {
    let grid = *i0.grid();
    let (support, _) = support_mask(i0.data(), cfg.i_floor);
    let support_mean = {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (&v, &s) in i0.data().iter().zip(support.iter()) {
            if s {
                sum += v;
                n += 1;
            }
        }
        if n == 0 || sum <= 0.0 {
            return Err(Error::invalid("TIE support is empty"));
        }
        sum / n as f64
    };
    let i0n = i0.data().mapv(|v| v / support_mean);

    // our propagator convention flips the sign of dI/dz
    let mut spec = di_dz.mapv(|v| Complex64::new(-v / support_mean, 0.0));
    fft::fft2(&mut spec);
    let freqs = grid.frequencies();
    for ((iy, ix), v) in spec.indexed_iter_mut() {
        *v *= tie_kernel(freqs.k_squared(ix, iy), cfg.lambda_eff, cfg.epsilon);
    }
    fft::ifft2(&mut spec);

    let i0_max = i0n.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = cfg.i_floor * i0_max;
    let mut phase = ndarray::Zip::from(&spec)
        .and(&i0n)
        .map_collect(|s, &i| s.re / i.max(floor));
    subtract_support_median(&mut phase, &support);

    Ok(RetrievalResult {
        phase: ScalarImage::new(grid, phase)?,
        amplitude: ScalarImage::new(grid, i0n.mapv(f64::sqrt))?,
        method: Method::Tie,
        epsilon_used: Some(cfg.epsilon),
        residual: None,
        iterations: 0,
        warnings: Vec::new(),
    })
}

/// TIE from a list of `(image, z)` planes. Requires the sample plane z = 0;
/// uses the generalized central difference between the nearest planes below
/// and above zero when both exist, otherwise the nearest defocused plane.
pub fn tie_invert_planes(
    planes: &[(ScalarImage, f64)],
    cfg: &TieConfig,
) -> Result<RetrievalResult> {
    let i0 = planes
        .iter()
        .find(|(_, z)| *z == 0.0)
        .map(|(img, _)| img)
        .ok_or(Error::MissingPlane(0.0))?;
    let below = planes
        .iter()
        .filter(|(_, z)| *z < 0.0)
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let above = planes
        .iter()
        .filter(|(_, z)| *z > 0.0)
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    match (below, above) {
        (Some((ia, za)), Some((ib, zb))) => {
            i0.grid().require_eq(ia.grid(), "tie planes")?;
            i0.grid().require_eq(ib.grid(), "tie planes")?;
            let (ta, tb) = (ia.total(), ib.total());
            if ta <= 0.0 || tb <= 0.0 || i0.total() <= 0.0 {
                return Err(Error::invalid("TIE input images must hold positive counts"));
            }
            let t0 = i0.total();
            let dz = zb - za;
            let di_dz = ndarray::Zip::from(ib.data())
                .and(ia.data())
                .map_collect(|&b, &a| (b * (t0 / tb) - a * (t0 / ta)) / dz);
            let cfg = TieConfig { dz, ..*cfg };
            tie_invert_from_derivative(i0, &di_dz, &cfg)
        }
        (None, Some((ib, zb))) => tie_invert(i0, ib, &TieConfig { dz: *zb, ..*cfg }),
        (Some((ia, za)), None) => tie_invert(i0, ia, &TieConfig { dz: *za, ..*cfg }),
        (None, None) => Err(Error::invalid("TIE needs at least one defocused plane")),
    }
}

/// Propagated-intensity mismatch `Err = sum |I_exp(z2) - I_TIE(z2)|` with both
/// images normalized to unit total counts.
pub fn propagation_error(
    result: &RetrievalResult,
    i2_exp: &ScalarImage,
    z2: f64,
    lambda_eff: f64,
) -> Result<f64> {
    result.phase.grid().require_eq(i2_exp.grid(), "propagation_error")?;
    let field_values = ndarray::Zip::from(result.amplitude.data())
        .and(result.phase.data())
        .map_collect(|&a, &p| Complex64::from_polar(a, p));
    let field = ComplexField::new(*result.phase.grid(), field_values)?;
    let propagated = fresnel_propagate(&field, lambda_eff, z2)?;
    let i_tie = propagated.intensity();
    let s_tie = i_tie.sum();
    let s_exp = i2_exp.total();
    if s_tie <= 0.0 || s_exp <= 0.0 {
        return Err(Error::invalid("propagation error needs positive intensities"));
    }
    Ok(ndarray::Zip::from(&i_tie)
        .and(i2_exp.data())
        .fold(0.0, |acc, &t, &e| acc + (e / s_exp - t / s_tie).abs()))
}

/// Scan the regularization constant: run the TIE for each epsilon, propagate
/// the reconstructed field to the validation plane `z2`, and keep the epsilon
/// minimizing the propagated-intensity mismatch.
pub fn epsilon_scan(
    i0: &ScalarImage,
    i1: &ScalarImage,
    i2_exp: &ScalarImage,
    z2: f64,
    cfg: &TieConfig,
    epsilons: &[f64],
) -> Result<RetrievalResult> {
    if epsilons.is_empty() {
        return Err(Error::invalid("epsilon list must not be empty"));
    }
    let mut best: Option<(f64, RetrievalResult)> = None;
    for &eps in epsilons {
        let r = tie_invert(i0, i1, &TieConfig { epsilon: eps, ..*cfg })?;
        let err = propagation_error(&r, i2_exp, z2, cfg.lambda_eff)?;
        let better = match &best {
            None => true,
            Some((e, _)) => err < *e,
        };
        if better {
            best = Some((
                err,
                RetrievalResult {
                    residual: Some(err),
                    ..r
                },
            ));
        }
    }
    Ok(best.expect("non-empty scan").1)
}

/// Multi-plane Gerchberg-Saxton with the Fourier transform replaced by the
/// Fresnel propagator.
///
/// Starts from sqrt(I) at the sample plane (the plane nearest z = 0) with
/// zero phase and sweeps the planes cyclically in z order, replacing the
/// amplitude with the measured sqrt(I) at each arrival and keeping the phase.
/// The per-cycle error is the summed squared amplitude mismatch over all
/// arrivals; iteration stops when its relative change drops below `tol`.
pub fn gs_retrieve(
    images: &[(ScalarImage, f64)],
    lambda_eff: f64,
    max_iter: usize,
    tol: f64,
) -> Result<RetrievalResult> {
    if images.len() < 2 {
        return Err(Error::invalid("GS needs at least two planes"));
    }
    if !(lambda_eff > 0.0) {
        return Err(Error::invalid("lambda_eff must be positive"));
    }
    let grid = *images[0].0.grid();
    let mut warnings = Vec::new();

    let mut order: Vec<usize> = (0..images.len()).collect();
    order.sort_by(|&a, &b| images[a].1.partial_cmp(&images[b].1).unwrap());
    for w in order.windows(2) {
        if images[w[0]].1 == images[w[1]].1 {
            return Err(Error::invalid("GS planes must sit at distinct z"));
        }
    }
    // rotate so the sweep starts at the plane nearest z = 0 (the sample plane)
    let start = order
        .iter()
        .position(|&i| {
            images[i].1.abs()
                == order
                    .iter()
                    .map(|&j| images[j].1.abs())
                    .fold(f64::INFINITY, f64::min)
        })
        .unwrap();
    order.rotate_left(start);
    let sample_idx = order[0];

    let mut amps: Vec<Array2<f64>> = Vec::with_capacity(images.len());
    for (img, _) in images {
        img.grid().require_eq(&grid, "gs planes")?;
        let mut clamped = 0usize;
        let a = img.data().mapv(|v| {
            if v < 0.0 {
                clamped += 1;
                0.0
            } else {
                v.sqrt()
            }
        });
        if clamped > 0 {
            warnings.push(format!("clamped {clamped} negative intensities to zero"));
        }
        amps.push(a);
    }

    let mut field = ComplexField::new(grid, amps[sample_idx].mapv(|a| Complex64::new(a, 0.0)))?;
    let mut z_current = images[sample_idx].1;
    let mut prev_err = f64::INFINITY;
    let mut iterations = 0usize;
    let mut phase_at_sample: Array2<f64> =
        Array2::zeros((grid.ny(), grid.nx()));

    for k in 0..max_iter {
        let mut err = 0.0;
        for step in 1..=order.len() {
            let idx = order[step % order.len()];
            let z_next = images[idx].1;
            field = fresnel_propagate(&field, lambda_eff, z_next - z_current)?;
            z_current = z_next;
            let measured = &amps[idx];
            for (v, &a) in field.values().iter().zip(measured.iter()) {
                let d = v.norm() - a;
                err += d * d;
            }
            if idx == sample_idx {
                phase_at_sample = field.values().mapv(|v| v.arg());
            }
            let values = field.values_mut();
            for (v, &a) in values.iter_mut().zip(measured.iter()) {
                *v = Complex64::from_polar(a, v.arg());
            }
        }
        iterations = k + 1;
        let converged =
            prev_err.is_finite() && (prev_err - err).abs() / prev_err.abs().max(1e-300) < tol;
        prev_err = err;
        if converged {
            break;
        }
    }

    let i_sample = &images[sample_idx].0;
    let (support, _) = support_mask(i_sample.data(), 1e-3);
    subtract_support_median(&mut phase_at_sample, &support);

    Ok(RetrievalResult {
        phase: ScalarImage::new(grid, phase_at_sample)?,
        amplitude: ScalarImage::new(grid, amps[sample_idx].clone())?,
        method: Method::Gs,
        epsilon_used: None,
        residual: None,
        iterations,
        warnings,
    })
}

/// Per-cycle amplitude-mismatch errors of a two-plane GS run, exposed for the
/// monotonicity check.
pub fn gs_error_sequence(
    images: &[(ScalarImage, f64)],
    lambda_eff: f64,
    iterations: usize,
) -> Result<Vec<f64>> {
    if images.len() != 2 {
        return Err(Error::invalid("error sequence is defined for two planes"));
    }
    let grid = *images[0].0.grid();
    images[1].0.grid().require_eq(&grid, "gs planes")?;
    let a0 = images[0].0.data().mapv(|v| v.max(0.0).sqrt());
    let a1 = images[1].0.data().mapv(|v| v.max(0.0).sqrt());
    let dz = images[1].1 - images[0].1;
    let mut field = ComplexField::new(grid, a0.mapv(|a| Complex64::new(a, 0.0)))?;
    let mut errs = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut err = 0.0;
        field = fresnel_propagate(&field, lambda_eff, dz)?;
        for (v, &a) in field.values().iter().zip(a1.iter()) {
            let d = v.norm() - a;
            err += d * d;
        }
        for (v, &a) in field.values_mut().iter_mut().zip(a1.iter()) {
            *v = Complex64::from_polar(a, v.arg());
        }
        field = fresnel_propagate(&field, lambda_eff, -dz)?;
        for (v, &a) in field.values().iter().zip(a0.iter()) {
            let d = v.norm() - a;
            err += d * d;
        }
        for (v, &a) in field.values_mut().iter_mut().zip(a0.iter()) {
            *v = Complex64::from_polar(a, v.arg());
        }
        errs.push(err);
    }
    Ok(errs)
}

/// Plateau/background regions used for the quantitative phase comparison.
#[derive(Clone, Copy, Debug)]
pub struct RoiSpec {
    pub plateau: Rect,
    pub background: Rect,
}

/// Enhancement comparison between two retrieved phase maps.
#[derive(Clone, Copy, Debug)]
pub struct EnhancementReport {
    /// Plateau-minus-background phase of the bi-photon map (rad).
    pub step_biphoton: f64,
    pub step_biphoton_std: f64,
    /// Plateau-minus-background phase of the classical map (rad).
    pub step_classical: f64,
    pub step_classical_std: f64,
    pub ratio: f64,
    pub uncertainty: f64,
}

/// Ratio of plateau-minus-background phase steps, with the uncertainty
/// propagated from the per-region standard deviations.
pub fn enhancement_ratio(
    biphoton_phase: &ScalarImage,
    classical_phase: &ScalarImage,
    roi: &RoiSpec,
) -> Result<EnhancementReport> {
    biphoton_phase
        .grid()
        .require_eq(classical_phase.grid(), "enhancement_ratio")?;
    let (bp, bp_s) = biphoton_phase.mean_std_over(&roi.plateau)?;
    let (bb, bb_s) = biphoton_phase.mean_std_over(&roi.background)?;
    let (cp, cp_s) = classical_phase.mean_std_over(&roi.plateau)?;
    let (cb, cb_s) = classical_phase.mean_std_over(&roi.background)?;

    let db = bp - bb;
    let dc = cp - cb;
    let db_s = (bp_s * bp_s + bb_s * bb_s).sqrt();
    let dc_s = (cp_s * cp_s + cb_s * cb_s).sqrt();
    if dc == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    let ratio = db / dc;
    let uncertainty = if db == 0.0 {
        db_s / dc.abs()
    } else {
        ratio.abs() * ((db_s / db).powi(2) + (dc_s / dc).powi(2)).sqrt()
    };
    Ok(EnhancementReport {
        step_biphoton: db,
        step_biphoton_std: db_s,
        step_classical: dc,
        step_classical_std: dc_s,
        ratio,
        uncertainty,
    })
}
