//! Retrieval checks against the forward model: TIE round trips, epsilon-scan
//! argmin consistency, GS error monotonicity and convergence, and the
//! phase-enhancement values of the thin-sample targets.

use biphoton_core::field::{fresnel_propagate, ComplexField};
use biphoton_core::grid::Grid2D;
use biphoton_core::image::{Rect, ScalarImage};
use biphoton_core::retrieval::{
    enhancement_ratio, epsilon_scan, gs_error_sequence, gs_retrieve, tie_invert,
    tie_invert_planes, RoiSpec, TieConfig,
};
use biphoton_core::sample::{amplitude_square, phase_from_depth, phase_step_square, SampleMode};
use num_complex::Complex64;

const CM2: f64 = 1e4; // cm^-2 in m^-2

fn intensity_at(field: &ComplexField, lambda: f64, z: f64) -> ScalarImage {
    let out = fresnel_propagate(field, lambda, z).unwrap();
    ScalarImage::new(*field.grid(), out.intensity()).unwrap()
}

fn phase_rmse(phase: &ScalarImage, truth: &ndarray::Array2<f64>) -> f64 {
    // both gauged to zero median over the full frame
    let med_p = {
        let mut v: Vec<f64> = phase.data().iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let med_t = {
        let mut v: Vec<f64> = truth.iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let mut acc = 0.0;
    for (&p, &t) in phase.data().iter().zip(truth.iter()) {
        let d = (p - med_p) - (t - med_t);
        acc += d * d;
    }
    (acc / truth.len() as f64).sqrt()
}

fn gaussian_bump_field(grid: Grid2D, peak: f64, sigma: f64) -> (ComplexField, ndarray::Array2<f64>) {
    let field = ComplexField::from_fn(grid, |x, y| {
        Complex64::from_polar(1.0, peak * (-(x * x + y * y) / (sigma * sigma)).exp())
    });
    let truth = ndarray::Array2::from_shape_fn((grid.ny(), grid.nx()), |(iy, ix)| {
        let (x, y) = (grid.x(ix), grid.y(iy));
        peak * (-(x * x + y * y) / (sigma * sigma)).exp()
    });
    (field, truth)
}

#[test]
fn tie_round_trip_smooth_phase() {
    // smooth 0.5 rad bump, uniform amplitude, central difference at +-5 mm
    let grid = Grid2D::camera();
    let lambda = 810e-9;
    let (field, truth) = gaussian_bump_field(grid, 0.5, 0.6e-3);
    let dz = 5e-3;
    let planes = vec![
        (intensity_at(&field, lambda, -dz), -dz),
        (intensity_at(&field, lambda, 0.0), 0.0),
        (intensity_at(&field, lambda, dz), dz),
    ];
    let cfg = TieConfig::new(1e-10 * CM2, dz, lambda);
    let r = tie_invert_planes(&planes, &cfg).unwrap();
    let rmse = phase_rmse(&r.phase, &truth);
    assert!(rmse < 0.05, "TIE RMSE = {rmse}");
}

#[test]
fn epsilon_scan_minimum_matches_true_phase_rmse() {
    let grid = Grid2D::camera();
    let lambda = 810e-9;
    let (field, truth) = gaussian_bump_field(grid, 0.5, 0.6e-3);
    let dz = 5e-3;
    let z2 = 0.02;
    let i0 = intensity_at(&field, lambda, 0.0);
    let i1 = intensity_at(&field, lambda, dz);
    let i2 = intensity_at(&field, lambda, z2);

    let epsilons: Vec<f64> = [1e-10, 1e-6, 1e-2, 1.0, 30.0, 1e3]
        .iter()
        .map(|e| e * CM2)
        .collect();
    let cfg = TieConfig::new(epsilons[0], dz, lambda);

    let mut errs = Vec::new();
    let mut rmses = Vec::new();
    for &eps in &epsilons {
        let r = tie_invert(&i0, &i1, &TieConfig { epsilon: eps, ..cfg }).unwrap();
        let err =
            biphoton_core::retrieval::propagation_error(&r, &i2, z2, lambda).unwrap();
        errs.push(err);
        rmses.push(phase_rmse(&r.phase, &truth));
    }
    let argmin_err = errs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let argmin_rmse = rmses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert_eq!(argmin_err, argmin_rmse, "errs {errs:?} rmses {rmses:?}");

    // the scan returns that minimizer
    let best = epsilon_scan(&i0, &i1, &i2, z2, &cfg, &epsilons).unwrap();
    assert_eq!(best.epsilon_used.unwrap(), epsilons[argmin_err]);
    assert!((best.residual.unwrap() - errs[argmin_err]).abs() < 1e-12);
}

#[test]
fn epsilon_scan_covers_reported_regimes() {
    // scanning the experiment's epsilon ranges (20-40 cm^-2 for bi-photon
    // statistics, 70-200 cm^-2 classical) is supported and yields a argmin
    let grid = Grid2D::camera();
    let (field, _) = gaussian_bump_field(grid, 0.5, 0.6e-3);
    for (lambda, list) in [
        (405e-9, vec![20.0 * CM2, 30.0 * CM2, 40.0 * CM2]),
        (810e-9, vec![70.0 * CM2, 100.0 * CM2, 200.0 * CM2]),
    ] {
        let dz = 5e-3;
        let i0 = intensity_at(&field, lambda, 0.0);
        let i1 = intensity_at(&field, lambda, dz);
        let i2 = intensity_at(&field, lambda, 0.02);
        let cfg = TieConfig::new(list[0], dz, lambda);
        let r = epsilon_scan(&i0, &i1, &i2, 0.02, &cfg, &list).unwrap();
        assert!(list.contains(&r.epsilon_used.unwrap()));
        assert!(r.residual.unwrap() >= 0.0);
    }
}

#[test]
fn huge_epsilon_kills_the_phase() {
    let grid = Grid2D::camera();
    let lambda = 810e-9;
    let (field, _) = gaussian_bump_field(grid, 0.5, 0.6e-3);
    let dz = 5e-3;
    let i0 = intensity_at(&field, lambda, 0.0);
    let i1 = intensity_at(&field, lambda, dz);
    let cfg = TieConfig::new(1e6 * CM2, dz, lambda);
    let r = tie_invert(&i0, &i1, &cfg).unwrap();
    for &p in r.phase.data().iter() {
        assert!(p.abs() < 1e-3);
    }
}

#[test]
fn gs_error_sequence_is_monotone() {
    let grid = Grid2D::camera();
    let lambda = 405e-9;
    let sample = phase_step_square(grid, 0.9e-3, 0.9264, 1.5).unwrap();
    let mut beam = ComplexField::from_fn(grid, |x, y| {
        Complex64::new((-(x * x + y * y) / (6e-3f64 * 6e-3)).exp(), 0.0)
    });
    beam.normalize_power(1.0).unwrap();
    let field = biphoton_core::model::apply_sample(&beam, &sample, SampleMode::Biphoton).unwrap();
    let images = vec![
        (intensity_at(&field, lambda, 0.0), 0.0),
        (intensity_at(&field, lambda, 0.0425), 0.0425),
    ];
    let errs = gs_error_sequence(&images, lambda, 500).unwrap();
    for w in errs.windows(2) {
        assert!(w[1] <= w[0] + 1e-10, "error increased: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn gs_two_plane_noiseless_rmse() {
    // smooth bump, far second plane (the two-plane iteration converges
    // only when the planes produce substantial intensity contrast)
    let grid = Grid2D::camera();
    let lambda = 405e-9;
    let (field, truth) = gaussian_bump_field(grid, 0.5, 0.5e-3);
    let images = vec![
        (intensity_at(&field, lambda, 0.0), 0.0),
        (intensity_at(&field, lambda, 1.0), 1.0),
    ];
    let r = gs_retrieve(&images, lambda, 500, 0.0).unwrap();
    assert!(r.iterations <= 500);
    let rmse = phase_rmse(&r.phase, &truth);
    assert!(rmse < 0.05, "GS RMSE = {rmse} after {} iterations", r.iterations);
}

#[test]
fn gs_retrieves_binary_target_plateaus() {
    // 127 nm target (0.4632 rad at 810 nm): classical arm sees alpha, the
    // bi-photon arm sees 2*alpha; distant plane pair per the convergence
    // properties of the two-plane sweep
    let grid = Grid2D::camera();
    let alpha = phase_from_depth(127e-9, 1.47, 810e-9);
    let side = 0.9e-3;
    let mut beam = ComplexField::from_fn(grid, |x, y| {
        Complex64::new((-(x * x + y * y) / (6e-3f64 * 6e-3)).exp(), 0.0)
    });
    beam.normalize_power(1.0).unwrap();

    let plateau = Rect::centered(&grid, side * 0.25, side * 0.25);
    let bg = Rect::new(
        grid.nx() / 2 + (side * 0.9 / grid.pitch()) as usize,
        grid.ny() / 2 - (side * 0.25 / grid.pitch()) as usize,
        grid.nx() / 2 + (side * 1.6 / grid.pitch()) as usize,
        grid.ny() / 2 + (side * 0.25 / grid.pitch()) as usize,
    );

    for (mode, lambda, expect, tol) in [
        (SampleMode::Classical, 810e-9, alpha, 0.05),
        (SampleMode::Biphoton, 405e-9, 2.0 * alpha, 0.1),
    ] {
        let sample = phase_step_square(grid, side, alpha, 1.5).unwrap();
        let field = biphoton_core::model::apply_sample(&beam, &sample, mode).unwrap();
        let images = vec![
            (intensity_at(&field, lambda, 0.0), 0.0),
            (intensity_at(&field, lambda, 1.0), 1.0),
        ];
        let r = gs_retrieve(&images, lambda, 400, 0.0).unwrap();
        let step = r.phase.mean_over(&plateau).unwrap() - r.phase.mean_over(&bg).unwrap();
        assert!(
            (step - expect).abs() < tol,
            "mode {mode:?}: step {step} vs {expect}"
        );
    }
}

#[test]
fn thin_sample_phase_values_350nm() {
    // 350 nm step at n = 1.47: classical 1.276 rad, bi-photon doubled 2.552
    let alpha = phase_from_depth(350e-9, 1.47, 810e-9);
    assert!((alpha - 1.276).abs() < 5e-3, "alpha = {alpha}");

    let grid = Grid2D::camera();
    let mut beam = ComplexField::from_fn(grid, |x, y| {
        Complex64::new((-(x * x + y * y) / (6e-3f64 * 6e-3)).exp(), 0.0)
    });
    beam.normalize_power(1.0).unwrap();
    let side = 0.9e-3;
    let sample = amplitude_square(grid, side, 1.0, alpha, 1.5).unwrap();

    let plateau = Rect::centered(&grid, side * 0.25, side * 0.25);
    let bg = Rect::new(
        grid.nx() / 2 + (side * 0.9 / grid.pitch()) as usize,
        grid.ny() / 2 - (side * 0.25 / grid.pitch()) as usize,
        grid.nx() / 2 + (side * 1.6 / grid.pitch()) as usize,
        grid.ny() / 2 + (side * 0.25 / grid.pitch()) as usize,
    );

    // TIE with central difference on noiseless data recovers both plateaus
    let mut steps = Vec::new();
    for (mode, lambda) in [(SampleMode::Classical, 810e-9), (SampleMode::Biphoton, 405e-9)] {
        let field = biphoton_core::model::apply_sample(&beam, &sample, mode).unwrap();
        let dz = 0.16;
        let planes = vec![
            (intensity_at(&field, lambda, -dz), -dz),
            (intensity_at(&field, lambda, 0.0), 0.0),
            (intensity_at(&field, lambda, dz), dz),
        ];
        let cfg = TieConfig::new(1e-11 * CM2, dz, lambda);
        let r = tie_invert_planes(&planes, &cfg).unwrap();
        let step = r.phase.mean_over(&plateau).unwrap() - r.phase.mean_over(&bg).unwrap();
        steps.push(step);
    }
    assert!((steps[0] - alpha).abs() / alpha < 0.05, "classical {}", steps[0]);
    assert!(
        (steps[1] - 2.0 * alpha).abs() / (2.0 * alpha) < 0.05,
        "biphoton {}",
        steps[1]
    );

    // and the enhancement ratio comes out near 2
    let field_c =
        biphoton_core::model::apply_sample(&beam, &sample, SampleMode::Classical).unwrap();
    let field_b =
        biphoton_core::model::apply_sample(&beam, &sample, SampleMode::Biphoton).unwrap();
    let dz = 0.16;
    let rc = tie_invert_planes(
        &vec![
            (intensity_at(&field_c, 810e-9, -dz), -dz),
            (intensity_at(&field_c, 810e-9, 0.0), 0.0),
            (intensity_at(&field_c, 810e-9, dz), dz),
        ],
        &TieConfig::new(1e-11 * CM2, dz, 810e-9),
    )
    .unwrap();
    let rb = tie_invert_planes(
        &vec![
            (intensity_at(&field_b, 405e-9, -dz), -dz),
            (intensity_at(&field_b, 405e-9, 0.0), 0.0),
            (intensity_at(&field_b, 405e-9, dz), dz),
        ],
        &TieConfig::new(1e-11 * CM2, dz, 405e-9),
    )
    .unwrap();
    let roi = RoiSpec {
        plateau,
        background: bg,
    };
    let rep = enhancement_ratio(&rb.phase, &rc.phase, &roi).unwrap();
    assert!((rep.ratio - 2.0).abs() < 0.2, "ratio {}", rep.ratio);
}
