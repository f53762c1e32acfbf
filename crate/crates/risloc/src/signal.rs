//! Signal-level RIS models: complex received amplitudes, beam codebooks,
//! and received-power maps for beam-sweep localization.
//!
//! The element-wise near-field model sums one spherical-wave ray per RIS
//! element; the far-field model replaces both legs with plane waves and a
//! shared `1/(d1*d2)` amplitude. [`fraunhofer_distance`] gives the usual
//! `2*D^2/lambda` boundary between the two regimes, and the two models
//! converge beyond it.
//!
//! [`make_codebook`] builds steering profiles toward equally spaced
//! azimuths (at elevation 0 in the RIS boresight convention);
//! [`beam_sweep_estimate`] replays a sweep over such codebooks, scores a
//! candidate grid by the per-RIS normalized beam powers, and returns the
//! best cell — the classic two-RIS received-power localization experiment.

use crate::geometry::{boresight_azel, boresight_direction, wrap_angle, AzEl, GeometryError, Vec3};
use crate::scene::{ris_element_positions, RisNode, Scenario, UeState};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use thiserror::Error;

/// Errors from signal-level modeling.
#[derive(Debug, Error)]
pub enum SignalError {
    #[error("unknown node id {id:?}")]
    UnknownNode { id: String },
    #[error("scene has no bs to illuminate the ris")]
    MissingBs,
    #[error("coincident geometry: {what}")]
    CoincidentGeometry { what: String },
    #[error("phase profile has {got} entries, ris has {expected} elements")]
    ProfileLength { expected: usize, got: usize },
    #[error("bad codebook: {0}")]
    BadCodebook(String),
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Per-element phase shifts in radians, ordered like
/// [`RisNode::element_offsets_local`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile {
    pub phases: Vec<f64>,
}

impl PhaseProfile {
    pub fn new(phases: Vec<f64>) -> Self {
        PhaseProfile { phases }
    }

    /// All-zero profile for `n` elements.
    pub fn flat(n: usize) -> Self {
        PhaseProfile { phases: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

/// Uniformly random profiles in `[0, 2*pi)`, seeded (for near-field probing).
pub fn random_profiles(ris: &RisNode, count: usize, seed: u64) -> Vec<PhaseProfile> {
    use rand::Rng;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            PhaseProfile::new(
                (0..ris.element_count()).map(|_| rng.random_range(0.0..2.0 * PI)).collect(),
            )
        })
        .collect()
}

fn find_ris<'a>(s: &'a Scenario, id: &str) -> Result<&'a RisNode, SignalError> {
    s.ris(id).ok_or_else(|| SignalError::UnknownNode { id: id.into() })
}

fn find_bs_pos(s: &Scenario, id: &str) -> Result<Vec3, SignalError> {
    Ok(s.bs(id).ok_or_else(|| SignalError::UnknownNode { id: id.into() })?.position)
}

fn check_profile(ris: &RisNode, phases: &[f64]) -> Result<(), SignalError> {
    if phases.len() != ris.element_count() {
        return Err(SignalError::ProfileLength { expected: ris.element_count(), got: phases.len() });
    }
    Ok(())
}

/// Near-field received amplitude of the BS -> RIS -> UE cascade.
///
/// Sums one spherical-wave ray per element: amplitude `1/(d1 * d2)`, phase
/// `-2*pi*(d1 + d2)/lambda` plus the element's programmed shift.
pub fn nf_received(
    s: &Scenario,
    bs_id: &str,
    ris_id: &str,
    ue_pos: Vec3,
    phases: &[f64],
) -> Result<Complex64, SignalError> {
    let bs = find_bs_pos(s, bs_id)?;
    let ris = find_ris(s, ris_id)?;
    check_profile(ris, phases)?;
    let lambda = s.wavelength();
    let k = 2.0 * PI / lambda;
    let mut sum = Complex64::new(0.0, 0.0);
    for (e, phi) in ris_element_positions(ris).into_iter().zip(phases) {
        let d1 = bs.distance(e);
        let d2 = ue_pos.distance(e);
        if d1 < 1e-9 || d2 < 1e-9 {
            return Err(SignalError::CoincidentGeometry {
                what: format!("bs or ue coincides with an element of {ris_id}"),
            });
        }
        let amp = 1.0 / (d1 * d2);
        sum += Complex64::from_polar(amp, -k * (d1 + d2) + phi);
    }
    Ok(sum)
}

/// Far-field (plane-wave) received amplitude of the same cascade.
///
/// Shared amplitude and carrier phase from the center distances, times the
/// array factor with per-element phase
/// `2*pi/lambda * e . (u_in + u_out) + phi_e`, where `u_in` points from the
/// RIS toward the BS and `u_out` from the RIS toward the UE.
pub fn ff_received(
    s: &Scenario,
    bs_id: &str,
    ris_id: &str,
    ue_pos: Vec3,
    phases: &[f64],
) -> Result<Complex64, SignalError> {
    let bs = find_bs_pos(s, bs_id)?;
    let ris = find_ris(s, ris_id)?;
    check_profile(ris, phases)?;
    let lambda = s.wavelength();
    let k = 2.0 * PI / lambda;
    let d1c = bs.distance(ris.center);
    let d2c = ue_pos.distance(ris.center);
    if d1c < 1e-9 || d2c < 1e-9 {
        return Err(SignalError::CoincidentGeometry {
            what: format!("bs or ue coincides with the center of {ris_id}"),
        });
    }
    let u_in = (bs - ris.center) / d1c;
    let u_out = (ue_pos - ris.center) / d2c;
    let rot = ris.rotation();
    let mut af = Complex64::new(0.0, 0.0);
    for (offset, phi) in ris.element_offsets_local().into_iter().zip(phases) {
        let e_global = rot.apply(offset);
        af += Complex64::from_polar(1.0, k * e_global.dot(u_in + u_out) + phi);
    }
    let common = Complex64::from_polar(1.0 / (d1c * d2c), -k * (d1c + d2c));
    Ok(common * af)
}

/// The `2*D^2/lambda` far-field boundary for a RIS with aperture `D`
/// (lattice diagonal).
pub fn fraunhofer_distance(ris: &RisNode, wavelength: f64) -> f64 {
    let d = ris.aperture();
    2.0 * d * d / wavelength
}

/// One steering entry of a codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    /// Steered azimuth label (boresight convention), radians.
    pub azimuth: f64,
    pub profile: PhaseProfile,
}

/// An ordered set of steering profiles, azimuths strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub beams: Vec<Beam>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    /// Index of the beam whose azimuth label is nearest `az` (wrapped).
    pub fn nearest_beam(&self, az: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, beam) in self.beams.iter().enumerate() {
            let d = wrap_angle(az - beam.azimuth).abs();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// CSV with header `beam,az_rad,phase...` (one phase column per element).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beam,az_rad,phase...\n");
        for (k, beam) in self.beams.iter().enumerate() {
            out.push_str(&format!("{k},{}", beam.azimuth));
            for p in &beam.profile.phases {
                out.push_str(&format!(",{p}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Build a sweep codebook: `n_beams` equally spaced azimuth labels over
/// `az_span` at elevation 0, each profile the far-field steering conjugate
/// toward its label.
///
/// When the feed direction is known, pass `incoming` (global unit vector
/// from the RIS toward the BS) so the profiles also cancel the incident
/// plane-wave phase; without it the profiles steer a normally illuminated
/// surface.
pub fn make_codebook(
    ris: &RisNode,
    wavelength: f64,
    n_beams: usize,
    az_span: (f64, f64),
    incoming: Option<Vec3>,
) -> Result<Codebook, SignalError> {
    if n_beams < 2 {
        return Err(SignalError::BadCodebook("a sweep needs at least 2 beams".into()));
    }
    let (a0, a1) = az_span;
    if !(a0.is_finite() && a1.is_finite() && a1 > a0) {
        return Err(SignalError::BadCodebook(format!("bad azimuth span ({a0}, {a1})")));
    }
    let k = 2.0 * PI / wavelength;
    let rot = ris.rotation();
    let u_in_local = match incoming {
        Some(v) => Some(rot.apply_transpose(v.normalized()?)),
        None => None,
    };
    let offsets = ris.element_offsets_local();
    let beams = (0..n_beams)
        .map(|i| {
            let az = a0 + (a1 - a0) * i as f64 / (n_beams - 1) as f64;
            let u_out_local = boresight_direction(AzEl::new(az, 0.0));
            let steer = match u_in_local {
                Some(u_in) => u_in + u_out_local,
                None => u_out_local,
            };
            let phases =
                offsets.iter().map(|e| (-k * e.dot(steer)).rem_euclid(2.0 * PI)).collect();
            Beam { azimuth: az, profile: PhaseProfile::new(phases) }
        })
        .collect();
    Ok(Codebook { beams })
}

/// A 2D candidate grid in the scene plane `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub step: f64,
    pub z: f64,
}

impl GridSpec {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64, step: f64, z: f64) -> Self {
        GridSpec { x0, y0, x1, y1, step, z }
    }

    fn validate(&self) -> Result<(usize, usize), SignalError> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(SignalError::BadGrid(format!("step {} must be positive", self.step)));
        }
        if !(self.x1 >= self.x0 && self.y1 >= self.y0) {
            return Err(SignalError::BadGrid("grid extents are inverted".into()));
        }
        let nx = ((self.x1 - self.x0) / self.step).floor() as usize + 1;
        let ny = ((self.y1 - self.y0) / self.step).floor() as usize + 1;
        Ok((nx, ny))
    }
}

/// Summed normalized received power over a candidate grid.
///
/// Scores are sums over RISs of per-RIS max-normalized beam powers, so each
/// RIS contributes at most exactly 1 and a cell score lives in
/// `[0, n_ris]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMap {
    pub grid: GridSpec,
    /// Columns (x direction).
    pub nx: usize,
    /// Rows (y direction).
    pub ny: usize,
    /// Row-major scores: `scores[row * nx + col]` with `row` along y.
    pub scores: Vec<f64>,
}

impl PowerMap {
    pub fn cell_center(&self, col: usize, row: usize) -> Vec3 {
        Vec3::new(
            self.grid.x0 + col as f64 * self.grid.step,
            self.grid.y0 + row as f64 * self.grid.step,
            self.grid.z,
        )
    }

    pub fn score(&self, col: usize, row: usize) -> f64 {
        self.scores[row * self.nx + col]
    }

    /// Best cell as `(col, row)`; ties resolve to the lowest row, then the
    /// lowest column.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_score = f64::NEG_INFINITY;
        for row in 0..self.ny {
            for col in 0..self.nx {
                let sc = self.score(col, row);
                if sc > best_score {
                    best_score = sc;
                    best = (col, row);
                }
            }
        }
        best
    }

    /// CSV with header `x,y,score`, rows in row-major order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,score\n");
        for row in 0..self.ny {
            for col in 0..self.nx {
                let c = self.cell_center(col, row);
                out.push_str(&format!("{},{},{}\n", c.x, c.y, self.score(col, row)));
            }
        }
        out
    }
}

/// Result of one beam-sweep localization replay.
#[derive(Debug, Clone)]
pub struct BeamSweepOutcome {
    pub power_map: PowerMap,
    /// Center of the best-scoring grid cell.
    pub estimate: Vec3,
    /// Per-RIS normalized beam powers (max exactly 1), RIS order as in the
    /// scenario.
    pub beam_powers: Vec<Vec<f64>>,
}

/// Replay a two-stage beam-sweep localization:
///
/// 1. For every RIS, measure the received power of each codebook beam at
///    the true UE position (near-field model, first BS as feed), optionally
///    with complex Gaussian noise at `snr_db` relative to the strongest
///    beam, and normalize per RIS.
/// 2. Score every grid cell by summing, per RIS, the normalized power of
///    the beam nearest the cell's azimuth; return the best cell.
///
/// `snr_db = None` is noiseless and ignores the seed.
pub fn beam_sweep_estimate(
    s: &Scenario,
    u: &UeState,
    codebooks: &[Codebook],
    grid: &GridSpec,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<BeamSweepOutcome, SignalError> {
    let bs = s.bss.first().ok_or(SignalError::MissingBs)?;
    if codebooks.len() != s.riss.len() {
        return Err(SignalError::BadCodebook(format!(
            "{} codebooks for {} riss",
            codebooks.len(),
            s.riss.len()
        )));
    }
    for cb in codebooks {
        if cb.is_empty() {
            return Err(SignalError::BadCodebook("empty codebook".into()));
        }
    }
    let (nx, ny) = grid.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // Stage 1: sweep each RIS, normalize powers per RIS.
    let mut beam_powers: Vec<Vec<f64>> = Vec::with_capacity(s.riss.len());
    for (ris, cb) in s.riss.iter().zip(codebooks) {
        let mut amps = Vec::with_capacity(cb.len());
        for beam in &cb.beams {
            amps.push(nf_received(s, &bs.id, &ris.id, u.position, &beam.profile.phases)?);
        }
        let peak = amps.iter().map(|a| a.norm()).fold(0.0_f64, f64::max);
        if peak <= 0.0 {
            return Err(SignalError::CoincidentGeometry {
                what: format!("no power received from {}", ris.id),
            });
        }
        if let Some(snr) = snr_db {
            let sigma = peak * 10f64.powf(-snr / 20.0);
            let comp = sigma / 2f64.sqrt();
            for a in &mut amps {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *a += Complex64::new(comp * re, comp * im);
            }
        }
        let mut powers: Vec<f64> = amps.iter().map(|a| a.norm_sqr()).collect();
        let max = powers.iter().cloned().fold(0.0_f64, f64::max);
        for p in &mut powers {
            *p /= max;
        }
        beam_powers.push(powers);
    }

    // Stage 2: score the grid by nearest-label lookups.
    let mut scores = vec![0.0; nx * ny];
    for row in 0..ny {
        for col in 0..nx {
            let p = Vec3::new(
                grid.x0 + col as f64 * grid.step,
                grid.y0 + row as f64 * grid.step,
                grid.z,
            );
            let mut score = 0.0;
            for ((ris, cb), powers) in s.riss.iter().zip(codebooks).zip(&beam_powers) {
                let local = ris.rotation().apply_transpose(p - ris.center);
                match boresight_azel(local) {
                    Ok(azel) => score += powers[cb.nearest_beam(azel.azimuth)],
                    Err(_) => continue, // cell on the RIS itself scores nothing
                }
            }
            scores[row * nx + col] = score;
        }
    }
    let power_map = PowerMap { grid: *grid, nx, ny, scores };
    let (col, row) = power_map.argmax();
    let estimate = power_map.cell_center(col, row);
    Ok(BeamSweepOutcome { power_map, estimate, beam_powers })
}

/// Simulate near-field complex observations of one BS -> RIS -> UE cascade
/// across several phase profiles, with complex Gaussian noise of standard
/// deviation `sigma` (total, split across re/im). Seeded and deterministic.
pub fn nf_observe(
    s: &Scenario,
    bs_id: &str,
    ris_id: &str,
    ue_pos: Vec3,
    profiles: &[PhaseProfile],
    sigma: f64,
    seed: u64,
) -> Result<Vec<Complex64>, SignalError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let comp = sigma / 2f64.sqrt();
    profiles
        .iter()
        .map(|p| {
            let mut y = nf_received(s, bs_id, ris_id, ue_pos, &p.phases)?;
            if sigma > 0.0 {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                y += Complex64::new(comp * re, comp * im);
            }
            Ok(y)
        })
        .collect()
}
