//! End-to-end orchestration: simulate event data per plane, extract
//! correlation images, run phase retrieval, and compare the two arms.

use crate::config::{PipelineConfig, Resolved};
use crate::error::{CliError, CliResult};
use crate::output::{
    write_csv_atomic, write_events_atomic, write_png_preview, write_scalar_atomic,
    write_text_atomic, z_tag,
};
use biphoton_core::coinc::{
    accumulate_marginals, correlation_image_shift_sum, find_coincidences, MarginalImages,
};
use biphoton_core::error::Error;
use biphoton_core::events::{generate_classical_frames, generate_pair_events, DetectorModel};
use biphoton_core::field_io::read_scalar;
use biphoton_core::image::ScalarImage;
use biphoton_core::model::{classical_field_at, propagate_biphoton, pump_near_field, BiphotonFactors};
use biphoton_core::retrieval::{
    gs_retrieve, propagation_error, tie_invert_planes, EnhancementReport, RetrievalResult,
    TieConfig,
};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::PathBuf;

const CM2: f64 = 1e4; // cm^-2 expressed in m^-2

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-plane, per-arm RNG seed; identical regardless of the order in
/// which plane jobs run.
fn derive_seed(base: u64, arm_salt: u64, plane_idx: usize) -> u64 {
    splitmix64(base ^ splitmix64(arm_salt.wrapping_add(plane_idx as u64)))
}

const ARM_BIPHOTON: u64 = 0xB1;
const ARM_CLASSICAL: u64 = 0xC1;

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub resolved: Resolved,
}

/// In-memory results of the retrieval stage for one arm.
pub struct ArmRetrieval {
    pub tie: RetrievalResult,
    pub gs: RetrievalResult,
}

pub struct CompareOutcome {
    pub tie: EnhancementReport,
    pub gs: EnhancementReport,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> CliResult<Self> {
        let resolved = cfg.resolve()?;
        Ok(Self { cfg, resolved })
    }

    fn dir(&self, sub: &str) -> PathBuf {
        self.cfg.output_dir.join(sub)
    }

    pub fn event_path(&self, z: f64) -> PathBuf {
        self.dir("biphoton").join(format!("events_{}.bpev", z_tag(z)))
    }

    pub fn frame_path(&self, z: f64) -> PathBuf {
        self.dir("classical").join(format!("frame_{}.bpfd", z_tag(z)))
    }

    pub fn gamma_plus_compact_path(&self, z: f64) -> PathBuf {
        self.dir("biphoton")
            .join(format!("gamma_plus_compact_{}.bpfd", z_tag(z)))
    }

    fn detector(&self, seed: u64, pair_rate: f64) -> DetectorModel {
        let d = &self.cfg.detector;
        DetectorModel {
            eta: d.eta,
            dark_rate: d.dark_rate_hz_per_px,
            pair_rate,
            exposure: d.exposure_s,
            jitter_ns: d.jitter_ns,
            seed,
        }
    }

    /// Generate event files (bi-photon arm) and intensity frames (classical
    /// arm) for every configured plane. Deterministic per seed; plane jobs
    /// run in parallel with independently derived seeds.
    pub fn simulate(&self) -> CliResult<()> {
        let optical = &self.resolved.optical;
        let pump = pump_near_field(optical, self.cfg.pump.waist_mm * 1e-3, self.cfg.pump.amplitude)?;
        std::fs::create_dir_all(&self.cfg.output_dir)?;
        self.resolved
            .sample
            .write(&self.cfg.output_dir.join("sample.bpfd"))
            .or_else(|e| match e {
                // file samples may carry a non-integral pitch; skip the copy
                Error::PitchNotRepresentable(_) => Ok(()),
                other => Err(other),
            })?;

        if self.cfg.mode.runs_biphoton() {
            let factors0 = BiphotonFactors::at_sample_plane(optical, &pump, &self.resolved.sample)?;
            self.resolved
                .planes
                .par_iter()
                .enumerate()
                .map(|(idx, &z)| -> CliResult<()> {
                    let factors = propagate_biphoton(&factors0, optical, z)?;
                    let det = self.detector(
                        derive_seed(self.cfg.seed, ARM_BIPHOTON, idx),
                        self.cfg.detector.pair_rate_hz,
                    );
                    let stream = generate_pair_events(&factors, &det)?;
                    write_events_atomic(&stream, &self.event_path(z))
                })
                .collect::<CliResult<Vec<_>>>()?;
        }

        if self.cfg.mode.runs_classical() {
            self.resolved
                .planes
                .par_iter()
                .enumerate()
                .map(|(idx, &z)| -> CliResult<()> {
                    let field =
                        classical_field_at(&pump, &self.resolved.sample, z, optical.lambda_spdc())?;
                    let det = self.detector(
                        derive_seed(self.cfg.seed, ARM_CLASSICAL, idx),
                        self.cfg.detector.classical_rate_hz,
                    );
                    let frame = generate_classical_frames(&field, &det)?;
                    let base = self.dir("classical");
                    write_scalar_atomic(&frame, &base.join(format!("frame_{}.bpfd", z_tag(z))))?;
                    write_csv_atomic(&frame, &base.join(format!("frame_{}.csv", z_tag(z))))?;
                    write_png_preview(&frame, &base.join(format!("frame_{}.png", z_tag(z))))
                })
                .collect::<CliResult<Vec<_>>>()?;
        }
        Ok(())
    }

    /// Shift-and-sum half-width: configured value, or the radius holding
    /// 99.9% of the relative-coordinate histogram mass.
    fn auto_max_shift(&self, m: &MarginalImages) -> usize {
        if let Some(v) = self.cfg.correlator.max_shift_px {
            return v;
        }
        let (ny, nx) = m.gamma_minus.dim();
        let (cy, cx) = ((ny / 2) as isize, (nx / 2) as isize);
        let total: u64 = m.gamma_minus.sum();
        if total == 0 {
            return 0;
        }
        let mut by_radius: Vec<u64> = vec![0; nx.max(ny)];
        for ((by, bx), &v) in m.gamma_minus.indexed_iter() {
            // doubled-grid offset from zero relative coordinate, in camera px
            let r = ((by as isize - cy).abs().max((bx as isize - cx).abs()) + 1) / 2;
            by_radius[r as usize] += v;
        }
        let mut acc = 0u64;
        for (r, &v) in by_radius.iter().enumerate() {
            acc += v;
            if acc as f64 >= 0.999 * total as f64 {
                return r;
            }
        }
        nx / 2
    }

    /// Read event files, find coincidences, and write the marginal images and
    /// the shift-and-sum consistency report for every plane.
    pub fn extract(&self) -> CliResult<()> {
        if !self.cfg.mode.runs_biphoton() {
            return Ok(());
        }
        self.resolved
            .planes
            .par_iter()
            .map(|&z| -> CliResult<()> {
                let path = self.event_path(z);
                if !path.exists() {
                    return Err(CliError::Data(Error::MissingPlane(z)));
                }
                let stream = biphoton_core::event_io::read_events(&path)?;
                let pairs = find_coincidences(&stream, self.cfg.correlator.window_ns)?;
                let grid = stream.header.grid;
                let m = accumulate_marginals(&pairs, &grid);

                let base = self.dir("biphoton");
                let tag = z_tag(z);
                let gt = m.gamma_t_image();
                write_scalar_atomic(&gt, &base.join(format!("gamma_t_{tag}.bpfd")))?;
                write_csv_atomic(&gt, &base.join(format!("gamma_t_{tag}.csv")))?;
                write_png_preview(&gt, &base.join(format!("gamma_t_{tag}.png")))?;

                let gp = m.gamma_plus_image();
                write_scalar_atomic(&gp, &base.join(format!("gamma_plus_{tag}.bpfd")))?;
                write_csv_atomic(&gp, &base.join(format!("gamma_plus_{tag}.csv")))?;
                write_png_preview(&gp, &base.join(format!("gamma_plus_{tag}.png")))?;

                write_scalar_atomic(
                    &m.gamma_plus_compact_image(),
                    &base.join(format!("gamma_plus_compact_{tag}.bpfd")),
                )?;
                write_scalar_atomic(
                    &m.gamma_minus_image(),
                    &base.join(format!("gamma_minus_{tag}.bpfd")),
                )?;

                let gx = ScalarImage::new(
                    biphoton_core::Grid2D::new(grid.nx(), grid.nx(), grid.pitch())?,
                    m.gamma_x.mapv(|v| v as f64),
                )?;
                write_scalar_atomic(&gx, &base.join(format!("gamma_x_{tag}.bpfd")))?;
                let gy = ScalarImage::new(
                    biphoton_core::Grid2D::new(grid.ny(), grid.ny(), grid.pitch())?,
                    m.gamma_y.mapv(|v| v as f64),
                )?;
                write_scalar_atomic(&gy, &base.join(format!("gamma_y_{tag}.bpfd")))?;

                let max_shift = self.auto_max_shift(&m);
                let ss = correlation_image_shift_sum(
                    &pairs,
                    &grid,
                    max_shift,
                    self.cfg.correlator.top_k,
                );
                let mut report = String::new();
                let _ = writeln!(report, "plane_z_m={z}");
                let _ = writeln!(report, "events={}", stream.events.len());
                let _ = writeln!(report, "pair_count={}", m.pair_count);
                let _ = writeln!(
                    report,
                    "shift_sum_total={} direct_total={}",
                    ss.gamma_plus.sum(),
                    m.gamma_plus.sum()
                );
                report.push_str(&ss.report.to_text());
                write_text_atomic(&report, &base.join(format!("consistency_{tag}.txt")))?;
                Ok(())
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(())
    }

    fn load_plane_images(&self, biphoton: bool) -> CliResult<Vec<(ScalarImage, f64)>> {
        self.resolved
            .planes
            .iter()
            .map(|&z| -> CliResult<(ScalarImage, f64)> {
                let path = if biphoton {
                    self.gamma_plus_compact_path(z)
                } else {
                    self.frame_path(z)
                };
                if !path.exists() {
                    return Err(CliError::Data(Error::MissingPlane(z)));
                }
                Ok((read_scalar(&path)?, z))
            })
            .collect()
    }

    /// TIE planes: z = 0 plus the nearest defocused planes; the validation
    /// plane for the epsilon scan is the nearest plane not used by the
    /// finite difference.
    fn split_tie_planes(
        planes: Vec<(ScalarImage, f64)>,
    ) -> (Vec<(ScalarImage, f64)>, Option<(ScalarImage, f64)>) {
        let mut below: Option<f64> = None;
        let mut above: Option<f64> = None;
        for &(_, z) in &planes {
            if z < 0.0 && below.is_none_or(|b| z > b) {
                below = Some(z);
            }
            if z > 0.0 && above.is_none_or(|a| z < a) {
                above = Some(z);
            }
        }
        let mut used: Vec<f64> = vec![0.0];
        match (below, above) {
            (Some(b), Some(a)) => used.extend([b, a]),
            (Some(b), None) => used.push(b),
            (None, Some(a)) => used.push(a),
            (None, None) => {}
        }
        let mut tie = Vec::new();
        let mut rest = Vec::new();
        for (img, z) in planes {
            if used.contains(&z) {
                tie.push((img, z));
            } else {
                rest.push((img, z));
            }
        }
        rest.sort_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap());
        let validation = rest.into_iter().next();
        (tie, validation)
    }

    fn retrieve_arm(&self, biphoton: bool) -> CliResult<ArmRetrieval> {
        let optical = &self.resolved.optical;
        let lambda_eff = if biphoton {
            optical.lambda_pump
        } else {
            optical.lambda_spdc()
        };
        let eps_list_cm2 = if biphoton {
            &self.cfg.retrieval.epsilon_scan_cm2
        } else {
            &self.cfg.retrieval.epsilon_scan_classical_cm2
        };

        let planes = self.load_plane_images(biphoton)?;
        let (tie_planes, validation) = Self::split_tie_planes(planes);

        let base_cfg = TieConfig {
            epsilon: eps_list_cm2[0] * CM2,
            dz: 1.0, // replaced by tie_invert_planes
            lambda_eff,
            i_floor: self.cfg.retrieval.i_floor,
        };

        // epsilon selection by propagated-intensity mismatch when a
        // validation plane exists, otherwise the first listed epsilon
        let tie = match &validation {
            Some((i2, z2)) => {
                let mut best: Option<(f64, RetrievalResult)> = None;
                for &eps_cm2 in eps_list_cm2 {
                    let cfg = TieConfig {
                        epsilon: eps_cm2 * CM2,
                        ..base_cfg
                    };
                    let r = tie_invert_planes(&tie_planes, &cfg)?;
                    let err = propagation_error(&r, i2, *z2, lambda_eff)?;
                    if best.as_ref().is_none_or(|(e, _)| err < *e) {
                        best = Some((
                            err,
                            RetrievalResult {
                                residual: Some(err),
                                ..r
                            },
                        ));
                    }
                }
                best.expect("non-empty epsilon list").1
            }
            None => tie_invert_planes(&tie_planes, &base_cfg)?,
        };

        // GS on the configured plane subset
        let gs_images: Vec<(ScalarImage, f64)> = {
            let mut out = Vec::new();
            for &z in &self.cfg.retrieval.gs_planes_z_m {
                let path = if biphoton {
                    self.gamma_plus_compact_path(z)
                } else {
                    self.frame_path(z)
                };
                if !path.exists() {
                    return Err(CliError::Data(Error::MissingPlane(z)));
                }
                out.push((read_scalar(&path)?, z));
            }
            out
        };
        let gs = gs_retrieve(
            &gs_images,
            lambda_eff,
            self.cfg.retrieval.gs_max_iter,
            self.cfg.retrieval.gs_tol,
        )?;

        let arm = if biphoton { "biphoton" } else { "classical" };
        let dir = self.dir("retrieve");
        for (name, r) in [("tie", &tie), ("gs", &gs)] {
            write_scalar_atomic(&r.phase, &dir.join(format!("{arm}_{name}_phase.bpfd")))?;
            write_csv_atomic(&r.phase, &dir.join(format!("{arm}_{name}_phase.csv")))?;
            let preview = ScalarImage::new(
                *r.phase.grid(),
                r.phase.data().mapv(|v| v - r.phase.data().iter().copied().fold(f64::INFINITY, f64::min)),
            )?;
            write_png_preview(&preview, &dir.join(format!("{arm}_{name}_phase.png")))?;
            write_scalar_atomic(&r.amplitude, &dir.join(format!("{arm}_{name}_amplitude.bpfd")))?;
        }

        let mut report = String::new();
        let _ = writeln!(report, "arm={arm}");
        let _ = writeln!(report, "lambda_eff_nm={}", lambda_eff * 1e9);
        let _ = writeln!(
            report,
            "tie_planes_z_m={:?}",
            tie_planes.iter().map(|p| p.1).collect::<Vec<_>>()
        );
        if let Some((_, z2)) = &validation {
            let _ = writeln!(report, "validation_plane_z_m={z2}");
        }
        let _ = writeln!(
            report,
            "epsilon_used_cm2={}",
            tie.epsilon_used.unwrap_or(f64::NAN) / CM2
        );
        let _ = writeln!(
            report,
            "residual={}",
            tie.residual.map_or("none".into(), |r| format!("{r:.6e}"))
        );
        let _ = writeln!(report, "gs_planes_z_m={:?}", self.cfg.retrieval.gs_planes_z_m);
        let _ = writeln!(report, "gs_iterations={}", gs.iterations);
        for w in tie.warnings.iter().chain(gs.warnings.iter()) {
            let _ = writeln!(report, "warning={w}");
        }
        write_text_atomic(&report, &dir.join(format!("{arm}_report.txt")))?;

        Ok(ArmRetrieval { tie, gs })
    }

    /// Run phase retrieval for the configured arms. Returns the in-memory
    /// results (biphoton, classical) where run.
    pub fn retrieve(&self) -> CliResult<(Option<ArmRetrieval>, Option<ArmRetrieval>)> {
        let b = if self.cfg.mode.runs_biphoton() {
            Some(self.retrieve_arm(true)?)
        } else {
            None
        };
        let c = if self.cfg.mode.runs_classical() {
            Some(self.retrieve_arm(false)?)
        } else {
            None
        };
        Ok((b, c))
    }

    /// Compare the two arms' phase maps over the configured ROI and emit the
    /// enhancement report plus a cross-section CSV.
    pub fn compare(&self) -> CliResult<CompareOutcome> {
        let dir = self.dir("retrieve");
        let load = |name: &str| -> CliResult<ScalarImage> {
            let path = dir.join(name);
            if !path.exists() {
                return Err(CliError::Data(Error::Invalid(format!(
                    "missing retrieval artifact {path:?}; run `retrieve` first"
                ))));
            }
            Ok(read_scalar(&path)?)
        };
        let tie_b = load("biphoton_tie_phase.bpfd")?;
        let tie_c = load("classical_tie_phase.bpfd")?;
        let gs_b = load("biphoton_gs_phase.bpfd")?;
        let gs_c = load("classical_gs_phase.bpfd")?;

        let roi = &self.resolved.roi;
        let tie = biphoton_core::retrieval::enhancement_ratio(&tie_b, &tie_c, roi)?;
        let gs = biphoton_core::retrieval::enhancement_ratio(&gs_b, &gs_c, roi)?;

        let out = self.dir("compare");
        let mut report = String::new();
        for (name, rep) in [("tie", &tie), ("gs", &gs)] {
            let _ = writeln!(report, "{name}_step_biphoton_rad={:.6}", rep.step_biphoton);
            let _ = writeln!(
                report,
                "{name}_step_biphoton_std={:.6}",
                rep.step_biphoton_std
            );
            let _ = writeln!(report, "{name}_step_classical_rad={:.6}", rep.step_classical);
            let _ = writeln!(
                report,
                "{name}_step_classical_std={:.6}",
                rep.step_classical_std
            );
            let _ = writeln!(report, "{name}_ratio={:.6}", rep.ratio);
            let _ = writeln!(report, "{name}_ratio_uncertainty={:.6}", rep.uncertainty);
        }
        write_text_atomic(&report, &out.join("report.txt"))?;

        // averaged cross-section along y within the plateau row band
        let grid = *tie_b.grid();
        let (y0, y1) = (roi.plateau.y0, roi.plateau.y1);
        let mut csv = String::from("x_m,tie_biphoton_rad,tie_classical_rad,gs_biphoton_rad,gs_classical_rad\n");
        for ix in 0..grid.nx() {
            let avg = |img: &ScalarImage| -> f64 {
                let mut s = 0.0;
                for iy in y0..y1 {
                    s += img.data()[[iy, ix]];
                }
                s / (y1 - y0) as f64
            };
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                grid.x(ix),
                avg(&tie_b),
                avg(&tie_c),
                avg(&gs_b),
                avg(&gs_c)
            );
        }
        write_text_atomic(&csv, &out.join("cross_section.csv"))?;

        Ok(CompareOutcome { tie, gs })
    }

    pub fn run_all(&self) -> CliResult<CompareOutcome> {
        self.simulate()?;
        self.extract()?;
        self.retrieve()?;
        self.compare()
    }
}
