//! Pipeline configuration: a TOML file whose keys default to the experiment's
//! published parameters, plus command-line overrides.

use crate::error::{CliError, CliResult};
use biphoton_core::grid::Grid2D;
use biphoton_core::image::Rect;
use biphoton_core::model::OpticalConfig;
use biphoton_core::retrieval::RoiSpec;
use biphoton_core::sample::{self, SampleTransmittance};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Biphoton,
    Classical,
    Both,
}

impl Mode {
    pub fn runs_biphoton(&self) -> bool {
        matches!(self, Mode::Biphoton | Mode::Both)
    }

    pub fn runs_classical(&self) -> bool {
        matches!(self, Mode::Classical | Mode::Both)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub grid: GridSection,
    pub optical: OpticalSection,
    pub pump: PumpSection,
    pub sample: SampleSection,
    pub planes: PlanesSection,
    pub detector: DetectorSection,
    pub correlator: CorrelatorSection,
    pub retrieval: RetrievalSection,
    pub compare: CompareSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            mode: Mode::Both,
            output_dir: PathBuf::from("out"),
            grid: GridSection::default(),
            optical: OpticalSection::default(),
            pump: PumpSection::default(),
            sample: SampleSection::default(),
            planes: PlanesSection::default(),
            detector: DetectorSection::default(),
            correlator: CorrelatorSection::default(),
            retrieval: RetrievalSection::default(),
            compare: CompareSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub pitch_um: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        // TPX3CAM-style sensor: 256x256 pixels of 55 um
        Self {
            nx: 256,
            ny: 256,
            pitch_um: 55.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalSection {
    pub lambda_pump_nm: f64,
    pub crystal_thickness_mm: f64,
    pub xi: f64,
}

impl Default for OpticalSection {
    fn default() -> Self {
        // 405 nm pump on a 1 mm Type-I crystal, no walk-off
        Self {
            lambda_pump_nm: 405.0,
            crystal_thickness_mm: 1.0,
            xi: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpSection {
    pub waist_mm: f64,
    pub amplitude: f64,
}

impl Default for PumpSection {
    fn default() -> Self {
        Self {
            waist_mm: 1.0,
            amplitude: 1.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    /// phase_step_square | three_bar | amplitude_square | field_file | csv
    pub kind: String,
    pub side_mm: f64,
    pub bar_width_mm: f64,
    /// Step height; the phase follows as 2 pi (n - 1) d / lambda_spdc.
    pub depth_nm: f64,
    pub refractive_index: f64,
    /// When set, overrides the depth-derived phase.
    pub phase_rad: Option<f64>,
    /// Inner power transmittance of the amplitude square.
    pub transmittance: f64,
    /// Edge softening of the generated targets, in pixels of Gaussian sigma.
    pub edge_sigma_px: f64,
    /// Path of a stored t(x) field (kind = field_file).
    pub path: Option<PathBuf>,
    /// CSV matrix paths (kind = csv).
    pub t_csv: Option<PathBuf>,
    pub alpha_csv: Option<PathBuf>,
}

impl Default for SampleSection {
    fn default() -> Self {
        // the 127 nm resolution phase target, n ~ 1.47
        Self {
            kind: "phase_step_square".into(),
            side_mm: 2.0,
            bar_width_mm: 0.4,
            depth_nm: 127.0,
            refractive_index: 1.47,
            phase_rad: None,
            transmittance: 0.5,
            edge_sigma_px: 1.5,
            path: None,
            t_csv: None,
            alpha_csv: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanesSection {
    /// Detection planes relative to the sample image plane, in meters.
    pub z_m: Vec<f64>,
}

impl Default for PlanesSection {
    fn default() -> Self {
        Self {
            z_m: vec![0.0, -0.02, 0.025, 0.0425, 0.26],
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub eta: f64,
    pub dark_rate_hz_per_px: f64,
    pub pair_rate_hz: f64,
    pub exposure_s: f64,
    pub jitter_ns: f64,
    /// Photon rate of the classical reference arm.
    pub classical_rate_hz: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        // exposure matches the published 400 s acquisitions; rates and
        // efficiency are placeholders (the experiment does not report them)
        Self {
            eta: 0.1,
            dark_rate_hz_per_px: 10.0,
            pair_rate_hz: 12_500.0,
            exposure_s: 400.0,
            jitter_ns: 2.0,
            classical_rate_hz: 1.0e7,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelatorSection {
    pub window_ns: u64,
    /// Shift-and-sum half-width in pixels; None selects it from the measured
    /// support of the relative-coordinate histogram.
    pub max_shift_px: Option<usize>,
    pub top_k: usize,
}

impl Default for CorrelatorSection {
    fn default() -> Self {
        Self {
            window_ns: 10,
            max_shift_px: None,
            top_k: 6,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    /// Epsilon scan list for bi-photon correlation images (cm^-2).
    pub epsilon_scan_cm2: Vec<f64>,
    /// Epsilon scan list for classical frames (cm^-2).
    pub epsilon_scan_classical_cm2: Vec<f64>,
    pub i_floor: f64,
    /// Planes used by the GS iteration (subset of planes.z_m).
    pub gs_planes_z_m: Vec<f64>,
    pub gs_max_iter: usize,
    pub gs_tol: f64,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        // epsilon ranges follow the published operating regimes
        Self {
            epsilon_scan_cm2: vec![20.0, 30.0, 40.0],
            epsilon_scan_classical_cm2: vec![70.0, 100.0, 200.0],
            i_floor: 1e-3,
            gs_planes_z_m: vec![0.0, 0.26],
            gs_max_iter: 500,
            gs_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    /// Plateau rectangle [x0, y0, x1, y1] in pixels; derived from the sample
    /// geometry when absent.
    pub plateau_px: Option<[usize; 4]>,
    pub background_px: Option<[usize; 4]>,
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {path:?}: {e}")))?;
        let cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("cannot parse {path:?}: {e}")))?;
        Ok(cfg)
    }

    /// Validate and convert into resolved core objects.
    pub fn resolve(&self) -> CliResult<Resolved> {
        let cfgerr = |field: &str, msg: String| CliError::Config(format!("{field}: {msg}"));

        let grid = Grid2D::new(self.grid.nx, self.grid.ny, self.grid.pitch_um * 1e-6)
            .map_err(|e| cfgerr("grid", e.to_string()))?;
        let optical = OpticalConfig::new(
            self.optical.lambda_pump_nm * 1e-9,
            self.optical.crystal_thickness_mm * 1e-3,
            self.optical.xi,
            grid,
        )
        .map_err(|e| cfgerr("optical", e.to_string()))?;

        if self.planes.z_m.is_empty() {
            return Err(cfgerr("planes.z_m", "must not be empty".into()));
        }
        let mut planes = self.planes.z_m.clone();
        planes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        planes.dedup();
        if planes.len() != self.planes.z_m.len() {
            return Err(cfgerr("planes.z_m", "planes must be distinct".into()));
        }
        if !planes.contains(&0.0) {
            return Err(cfgerr(
                "planes.z_m",
                "the sample plane z = 0 must be present".into(),
            ));
        }
        for &z in &self.retrieval.gs_planes_z_m {
            if !planes.contains(&z) {
                return Err(cfgerr(
                    "retrieval.gs_planes_z_m",
                    format!("plane {z} is not in planes.z_m"),
                ));
            }
        }
        if self.retrieval.gs_planes_z_m.len() < 2 {
            return Err(cfgerr(
                "retrieval.gs_planes_z_m",
                "GS needs at least two planes".into(),
            ));
        }
        if self.retrieval.epsilon_scan_cm2.is_empty()
            || self.retrieval.epsilon_scan_classical_cm2.is_empty()
        {
            return Err(cfgerr(
                "retrieval.epsilon_scan_cm2",
                "epsilon scan lists must not be empty".into(),
            ));
        }

        let lambda_spdc = optical.lambda_spdc();
        let sample = self.build_sample(grid, lambda_spdc)?;
        let roi = self.resolve_roi(&grid)?;

        if !(self.detector.eta >= 0.0 && self.detector.eta <= 1.0) {
            return Err(cfgerr("detector.eta", "must lie in [0, 1]".into()));
        }
        if self.detector.exposure_s <= 0.0 {
            return Err(cfgerr("detector.exposure_s", "must be positive".into()));
        }

        Ok(Resolved {
            optical,
            sample,
            planes,
            roi,
        })
    }

    fn build_sample(&self, grid: Grid2D, lambda_spdc: f64) -> CliResult<SampleTransmittance> {
        let s = &self.sample;
        let phase = s.phase_rad.unwrap_or_else(|| {
            sample::phase_from_depth(s.depth_nm * 1e-9, s.refractive_index, lambda_spdc)
        });
        let built = match s.kind.as_str() {
            "phase_step_square" => {
                sample::phase_step_square(grid, s.side_mm * 1e-3, phase, s.edge_sigma_px)
            }
            "three_bar" => {
                sample::three_bar_target(grid, s.bar_width_mm * 1e-3, phase, s.edge_sigma_px)
            }
            "amplitude_square" => sample::amplitude_square(
                grid,
                s.side_mm * 1e-3,
                s.transmittance,
                phase,
                s.edge_sigma_px,
            ),
            "field_file" => {
                let path = s.path.as_ref().ok_or_else(|| {
                    CliError::Config("sample.path: required for kind = field_file".into())
                })?;
                return SampleTransmittance::read(path).map_err(CliError::Data);
            }
            "csv" => {
                let t = s.t_csv.as_ref().ok_or_else(|| {
                    CliError::Config("sample.t_csv: required for kind = csv".into())
                })?;
                let a = s.alpha_csv.as_ref().ok_or_else(|| {
                    CliError::Config("sample.alpha_csv: required for kind = csv".into())
                })?;
                return SampleTransmittance::from_csv(t, a, grid.pitch()).map_err(CliError::Data);
            }
            other => {
                return Err(CliError::Config(format!(
                    "sample.kind: unknown generator '{other}'"
                )))
            }
        };
        built.map_err(|e| CliError::Config(format!("sample: {e}")))
    }

    /// Plateau/background rectangles: explicit from the config, or derived
    /// from the generated target geometry.
    fn resolve_roi(&self, grid: &Grid2D) -> CliResult<RoiSpec> {
        let rect_of = |v: &[usize; 4], name: &str| -> CliResult<Rect> {
            let r = Rect::new(v[0], v[1], v[2], v[3]);
            r.validate(grid)
                .map_err(|e| CliError::Config(format!("compare.{name}: {e}")))?;
            Ok(r)
        };
        match (&self.compare.plateau_px, &self.compare.background_px) {
            (Some(p), Some(b)) => Ok(RoiSpec {
                plateau: rect_of(p, "plateau_px")?,
                background: rect_of(b, "background_px")?,
            }),
            (None, None) => {
                let feature = match self.sample.kind.as_str() {
                    "phase_step_square" | "amplitude_square" => self.sample.side_mm * 1e-3,
                    "three_bar" => self.sample.bar_width_mm * 1e-3,
                    _ => {
                        return Err(CliError::Config(
                            "compare: plateau_px/background_px are required for file samples"
                                .into(),
                        ))
                    }
                };
                let cx = grid.nx() / 2;
                let cy = grid.ny() / 2;
                let px = |m: f64| (m / grid.pitch()).round() as usize;
                let plateau = Rect::centered(grid, feature * 0.25, feature * 0.25);
                let background = Rect::new(
                    cx + px(feature * 0.9),
                    cy.saturating_sub(px(feature * 0.25)),
                    (cx + px(feature * 1.6)).min(grid.nx()),
                    (cy + px(feature * 0.25) + 1).min(grid.ny()),
                );
                plateau
                    .validate(grid)
                    .map_err(|e| CliError::Config(format!("derived plateau ROI: {e}")))?;
                background
                    .validate(grid)
                    .map_err(|e| CliError::Config(format!("derived background ROI: {e}")))?;
                Ok(RoiSpec {
                    plateau,
                    background,
                })
            }
            _ => Err(CliError::Config(
                "compare: plateau_px and background_px must be set together".into(),
            )),
        }
    }
}

/// Core objects resolved from a validated configuration.
pub struct Resolved {
    pub optical: OpticalConfig,
    pub sample: SampleTransmittance,
    pub planes: Vec<f64>,
    pub roi: RoiSpec,
}

/// Parse a `--planes "z1,z2,..."` override (meters).
pub fn parse_planes(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("planes: bad value '{s}': {e}")))
        })
        .collect()
}
