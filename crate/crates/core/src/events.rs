//! Monte Carlo event-camera synthesis: correlated photon-pair streams drawn
//! from the factorized coincidence density, classical intensity frames, and
//! the detector imperfection model.

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::Grid2D;
use crate::image::ScalarImage;
use crate::model::{BiphotonFactors, JointDensity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Normal, Poisson};

/// One timestamped pixel hit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhotonEvent {
    pub x: u16,
    pub y: u16,
    pub t_ns: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamMode {
    Biphoton,
    ClassicalSingles,
}

impl StreamMode {
    pub fn to_u8(self) -> u8 {
        match self {
            StreamMode::Biphoton => 0,
            StreamMode::ClassicalSingles => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(StreamMode::Biphoton),
            1 => Ok(StreamMode::ClassicalSingles),
            other => Err(Error::Parse(format!("unknown stream mode {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StreamHeader {
    pub grid: Grid2D,
    pub exposure_ns: u64,
    pub seed: u64,
    pub mode: StreamMode,
}

/// A time-sorted list of events plus acquisition metadata.
#[derive(Clone, Debug)]
pub struct EventStream {
    pub header: StreamHeader,
    pub events: Vec<PhotonEvent>,
}

impl EventStream {
    /// Check the stream invariants: sorted by timestamp, pixels on the grid.
    pub fn validate(&self) -> Result<()> {
        let nx = self.header.grid.nx();
        let ny = self.header.grid.ny();
        for (i, e) in self.events.iter().enumerate() {
            if (e.x as usize) >= nx || (e.y as usize) >= ny {
                return Err(Error::EventOutOfGrid { index: i, nx, ny });
            }
            if i > 0 && e.t_ns < self.events[i - 1].t_ns {
                return Err(Error::UnsortedEvents { index: i });
            }
        }
        Ok(())
    }
}

/// Detector and acquisition parameters.
#[derive(Clone, Copy, Debug)]
pub struct DetectorModel {
    /// Per-photon detection efficiency.
    pub eta: f64,
    /// Dark counts per pixel per second.
    pub dark_rate: f64,
    /// Generated pairs per second (per unit total power of the centroid factor).
    pub pair_rate: f64,
    /// Acquisition time in seconds.
    pub exposure: f64,
    /// Gaussian timing jitter sigma in nanoseconds (clamped at +-5 sigma).
    pub jitter_ns: f64,
    /// RNG seed; identical inputs and seed give byte-identical streams.
    pub seed: u64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            eta: 0.1,
            dark_rate: 10.0,
            pair_rate: 12_500.0,
            exposure: 400.0,
            jitter_ns: 2.0,
            seed: 0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid("eta must lie in [0, 1]"));
        }
        if self.dark_rate < 0.0 || self.pair_rate < 0.0 || self.jitter_ns < 0.0 {
            return Err(Error::invalid("rates and jitter must be non-negative"));
        }
        if !(self.exposure > 0.0) {
            return Err(Error::invalid("exposure must be positive"));
        }
        Ok(())
    }

    pub fn exposure_ns(&self) -> u64 {
        (self.exposure * 1e9).round() as u64
    }
}

fn poisson_count(rng: &mut ChaCha12Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive mean");
    let draw: f64 = dist.sample(rng);
    draw.max(0.0).round() as u64
}

fn jittered(rng: &mut ChaCha12Rng, t0: u64, normal: &Option<Normal<f64>>, sigma: f64) -> u64 {
    match normal {
        None => t0,
        Some(n) => {
            let j = n.sample(rng).clamp(-5.0 * sigma, 5.0 * sigma);
            let t = t0 as i64 + j.round() as i64;
            t.max(0) as u64
        }
    }
}

/// Draw correlated photon-pair events from the factorized density.
///
/// A pair is born at a centroid pixel `c ~ |E_z|^2` and relative pixel
/// `d ~ |Phi_z|^2`; the photons land at `Xi = X+ + X-` and `Xs = X+ - X-`.
/// Sample absorption is already inside `E_z` (applied once, at t^2), so the
/// expected number of generated pairs is `pair_rate * exposure * power(E_z)`
/// and the engine applies only the detector efficiency per photon. Photons
/// falling off the grid are dropped individually. Both photons share a birth
/// time uniform in the exposure window plus independent timing jitter; dark
/// counts are appended and the result is sorted by (t, x, y).
pub fn generate_pair_events(
    factors: &BiphotonFactors,
    det: &DetectorModel,
) -> Result<EventStream> {
    det.validate()?;
    let grid = *factors.grid();
    let nx = grid.nx() as isize;
    let ny = grid.ny() as isize;

    let density = JointDensity::from_factors(factors)?;
    let transmitted_power = factors.e().power();

    let mut rng = ChaCha12Rng::seed_from_u64(det.seed);
    let exposure_ns = det.exposure_ns();
    let n_pairs = poisson_count(&mut rng, det.pair_rate * det.exposure * transmitted_power);

    let plus_weights: Vec<f64> = density.p_plus().iter().copied().collect();
    let minus_weights: Vec<f64> = density.p_minus().iter().copied().collect();
    let plus_alias = WeightedAliasIndex::new(plus_weights)
        .map_err(|e| Error::invalid(format!("centroid density: {e}")))?;
    let minus_alias = WeightedAliasIndex::new(minus_weights)
        .map_err(|e| Error::invalid(format!("relative density: {e}")))?;

    let normal = if det.jitter_ns > 0.0 {
        Some(Normal::new(0.0, det.jitter_ns).expect("finite sigma"))
    } else {
        None
    };

    let mut events: Vec<PhotonEvent> =
        Vec::with_capacity((n_pairs as usize).saturating_mul(2).min(1 << 28));
    let w = grid.nx();
    for _ in 0..n_pairs {
        let c = plus_alias.sample(&mut rng);
        let d = minus_alias.sample(&mut rng);
        let (cx, cy) = ((c % w) as isize, (c / w) as isize);
        let (dx, dy) = ((d % w) as isize, (d / w) as isize);
        // centered relative offset in pixels
        let (rx, ry) = (dx - nx / 2, dy - ny / 2);
        let idler = (cx + rx, cy + ry);
        let signal = (cx - rx, cy - ry);
        let t0 = rng.random_range(0..exposure_ns);
        for (px, py) in [idler, signal] {
            if px < 0 || py < 0 || px >= nx || py >= ny {
                continue;
            }
            let u: f64 = rng.random();
            if u < det.eta {
                let t = jittered(&mut rng, t0, &normal, det.jitter_ns);
                events.push(PhotonEvent {
                    x: px as u16,
                    y: py as u16,
                    t_ns: t,
                });
            }
        }
    }

    let n_dark = poisson_count(
        &mut rng,
        det.dark_rate * grid.len() as f64 * det.exposure,
    );
    for _ in 0..n_dark {
        let x = rng.random_range(0..grid.nx() as u16);
        let y = rng.random_range(0..grid.ny() as u16);
        let t_ns = rng.random_range(0..exposure_ns);
        events.push(PhotonEvent { x, y, t_ns });
    }

    events.sort_unstable_by_key(|e| (e.t_ns, e.x, e.y));

    Ok(EventStream {
        header: StreamHeader {
            grid,
            exposure_ns,
            seed: det.seed,
            mode: StreamMode::Biphoton,
        },
        events,
    })
}

/// Classical intensity frame: independent per-pixel Poisson counts with mean
/// `pair_rate * exposure * eta * |field|^2 * pixel_area + dark_rate * exposure`.
pub fn generate_classical_frames(field: &ComplexField, det: &DetectorModel) -> Result<ScalarImage> {
    det.validate()?;
    let grid = *field.grid();
    let mut rng = ChaCha12Rng::seed_from_u64(det.seed);
    let pa = grid.pitch() * grid.pitch();
    let dark_mean = det.dark_rate * det.exposure;
    let scale = det.pair_rate * det.exposure * det.eta * pa;

    let mut img = ScalarImage::zeros(grid);
    for (v, out) in field.values().iter().zip(img.data_mut().iter_mut()) {
        let mean = scale * v.norm_sqr() + dark_mean;
        *out = poisson_count(&mut rng, mean) as f64;
    }
    Ok(img)
}
