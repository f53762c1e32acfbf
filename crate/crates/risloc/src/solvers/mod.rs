//! UE state estimation: scene classification, geometric initializers, and
//! Levenberg–Marquardt refinement against the measurement forward models.
//!
//! The measurement mix plus the anchor inventory pick the solve strategy
//! ([`classify`]). Every strategy produces one or more starting states —
//! closed forms where the geometry allows (half-line intersections,
//! bearing-plus-delay substitution, sphere-on-ray), coarse grid searches
//! where it does not — and [`refine`] then polishes each start against the
//! full weighted model. Results keep *every* candidate, sorted by residual,
//! instead of silently picking one: discrete ambiguities (for example the
//! mirror solution of arrival-angle localization with coplanar anchors)
//! stay visible to the caller.
//!
//! Component solvers are exposed on their own for reuse and testing:
//! [`solve_two_halflines`] (common perpendicular of two rays),
//! [`solve_velocity`] (minimum-norm radial-velocity system), and
//! [`solve_orientation`] (orthogonal-Procrustes rotation fit).

mod init;
mod nearfield;
mod refine;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{azel_to_direction, GeometryError, Vec3};
pub use crate::geometry::{EulerZYX, HalfLine};
use crate::identifiability::{ident_report, pack, IdentError, UnknownsMask, Verdict, RANK_TOL};
use crate::measurements::{
    doppler_direction, node_position, path_length, Measurement, MeasurementError, MeasurementSet,
    NodeRef, NoiseSpec, PathRef,
};
use crate::scene::{MeasurementKind, Scenario, UeState};
use crate::signal::SignalError;
use crate::SPEED_OF_LIGHT;

pub use init::aod_half_line;
pub use nearfield::{nf_position_from_curvature, CurvatureSearch};
pub use refine::{refine, MAX_ITERS, STEP_TOL};

use refine::refine_state;

/// Errors from state estimation.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("unsupported scene for automatic solving: {reason}")]
    Unclassified { reason: String },
    #[error("missing measurement: {what}")]
    MissingMeasurement { what: String },
    #[error("insufficient anchors: {what}")]
    InsufficientAnchors { what: String },
    #[error("infeasible geometry: {what}")]
    Infeasible { what: String },
    #[error("non-identifiable geometry: {what}")]
    NonIdentifiable { what: String },
    #[error("orientation is underdetermined: need at least two non-parallel direction pairs")]
    OrientationUnderdetermined,
    #[error("refine needs a starting state: set SolveRequest::initial or call solve")]
    MissingInitialGuess,
    #[error(
        "direct base-station path is blocked, so the bearing-plus-delay closed form does not \
         apply; near-field scenes can recover position from wavefront curvature instead \
         (nf_position_from_curvature)"
    )]
    NeedsCurvature,
    #[error("measurement does not fit this scene: {label}")]
    UnmatchedMeasurement { label: String },
    #[error("bad input: {what}")]
    BadInput { what: String },
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Identifiability(#[from] IdentError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Everything a solve needs: the scene, the observed measurements, which
/// state blocks to estimate, and tuning knobs.
#[derive(Debug, Clone)]
pub struct SolveRequest<'a> {
    pub scenario: &'a Scenario,
    pub measurements: &'a MeasurementSet,
    /// State blocks to estimate. Defaults to the mix policy
    /// ([`UnknownsMask::from_mix`]); a mask that disagrees with the policy
    /// still runs but earns a warning.
    pub mask: UnknownsMask,
    /// Optional starting state. When set, the scenario initializers are
    /// bypassed and this state is refined directly.
    pub initial: Option<UeState>,
    /// Per-kind sigmas used to weight residuals for items that carry
    /// `sigma = 0` (noiseless synthesis); items with a positive sigma use
    /// their own.
    pub weights: NoiseSpec,
    /// Cell size in meters for coarse grid initialization.
    pub grid_cell: f64,
}

impl<'a> SolveRequest<'a> {
    /// Request with the mix-policy mask, default weights, and a 1 m grid.
    pub fn new(scenario: &'a Scenario, measurements: &'a MeasurementSet) -> Self {
        SolveRequest {
            scenario,
            measurements,
            mask: UnknownsMask::from_mix(&scenario.measurement_mix),
            initial: None,
            weights: NoiseSpec::default(),
            grid_cell: 1.0,
        }
    }
}

/// One refined solution hypothesis.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub state: UeState,
    /// Square root of the weighted squared-residual sum.
    pub residual_norm: f64,
    /// Accepted refinement steps.
    pub iterations: usize,
    /// False when refinement stalled without meeting the step tolerance.
    pub converged: bool,
}

/// Solve output: all candidate states plus what the measurements can
/// actually pin down.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub mask: UnknownsMask,
    /// Never empty; sorted by ascending residual norm.
    pub candidates: Vec<Candidate>,
    /// Rank of the Doppler direction matrix at the best position (0 when
    /// velocity is not estimated or no Doppler was measured).
    pub velocity_dim: usize,
    /// Orthonormal basis of the sensed velocity subspace.
    pub velocity_basis: Vec<Vec3>,
    pub warnings: Vec<String>,
}

impl SolveResult {
    /// The lowest-residual candidate.
    pub fn best(&self) -> &Candidate {
        &self.candidates[0]
    }

    /// CSV with header `component,value,residual,converged,candidate_rank`:
    /// one row per estimated component per candidate, best candidate first.
    /// The clock component is reported in meters (`c * bias`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,value,residual,converged,candidate_rank\n");
        let labels = self.mask.labels();
        for (rank, c) in self.candidates.iter().enumerate() {
            let x = pack(&c.state, self.mask);
            for (i, lab) in labels.iter().enumerate() {
                out.push_str(&format!(
                    "{lab},{},{},{},{rank}\n",
                    x[i], c.residual_norm, c.converged
                ));
            }
        }
        out
    }
}

/// Solve strategies, decided by measurement mix and anchor inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneClass {
    /// One-way delays to several single-antenna BSs; clock unknown.
    DelayAnchors,
    /// Round-trip delays to several BSs; no clock unknown.
    RangeAnchors,
    /// One BS plus one RIS: direct and reflected delays plus a RIS bearing.
    HybridDelayBearing,
    /// BS-free echo ranging: RIS round trip plus the RIS bearing.
    EchoBearing,
    /// Two departure bearings (array BS or RIS each): ray intersection.
    TwoBearings,
    /// Arrival bearings only, measured at the UE array, three anchors up.
    ArrivalAngles,
    /// One departure bearing plus arrival bearings at the UE array.
    BearingWithArrivals,
    /// Two departure bearings plus arrival bearings.
    TwoBearingsWithArrivals,
}

/// Decide the solve strategy for a scene.
///
/// Anchor-count preconditions that only affect solvability (not the
/// strategy) are checked by the strategy solvers themselves.
pub fn classify(s: &Scenario) -> Result<SceneClass, SolveError> {
    let has = |k: MeasurementKind| s.has_kind(k);
    let n_vis = s.visible_bss().count();
    let aod_sources =
        s.visible_bss().filter(|b| b.antenna.is_array()).count() + s.riss.len();
    let aoa_nodes = n_vis + s.riss.len();

    if has(MeasurementKind::Aoa) {
        if has(MeasurementKind::Aod) {
            return match aod_sources {
                0 => Err(SolveError::Unclassified {
                    reason: "departure bearings requested but no array BS or RIS provides one"
                        .into(),
                }),
                1 => Ok(SceneClass::BearingWithArrivals),
                _ => Ok(SceneClass::TwoBearingsWithArrivals),
            };
        }
        if aoa_nodes >= 3 {
            return Ok(SceneClass::ArrivalAngles);
        }
        return Err(SolveError::Unclassified {
            reason: format!(
                "arrival-only scene with {aoa_nodes} anchors; position needs at least 3"
            ),
        });
    }
    if has(MeasurementKind::Aod) {
        return match aod_sources {
            0 => Err(SolveError::Unclassified {
                reason: "departure bearings requested but no array BS or RIS provides one".into(),
            }),
            1 => {
                if has(MeasurementKind::Toa) && !s.bss.is_empty() {
                    Ok(SceneClass::HybridDelayBearing)
                } else if has(MeasurementKind::Rtt) && s.bss.is_empty() && s.riss.len() == 1 {
                    Ok(SceneClass::EchoBearing)
                } else {
                    Err(SolveError::Unclassified {
                        reason: "a single bearing pins a ray, not a point; it needs a direct \
                                 delay (toa with a BS) or an echo round trip (rtt, BS-free)"
                            .into(),
                    })
                }
            }
            _ => Ok(SceneClass::TwoBearings),
        };
    }
    if has(MeasurementKind::Toa) || has(MeasurementKind::Tdoa) {
        return Ok(SceneClass::DelayAnchors);
    }
    if has(MeasurementKind::Rtt) && n_vis >= 1 {
        return Ok(SceneClass::RangeAnchors);
    }
    Err(SolveError::Unclassified {
        reason: format!("no position-bearing measurements in mix {:?}", s.measurement_mix),
    })
}

/// Solve a scene end to end: classify, initialize, refine.
pub fn solve(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    match classify(req.scenario)? {
        SceneClass::DelayAnchors | SceneClass::RangeAnchors => solve_tdoa_4bs(req),
        SceneClass::HybridDelayBearing => solve_siso_1ris_1bs(req),
        SceneClass::EchoBearing => solve_siso_1ris_0bs(req),
        SceneClass::TwoBearings | SceneClass::TwoBearingsWithArrivals => solve_two_aod(req),
        SceneClass::ArrivalAngles | SceneClass::BearingWithArrivals => solve_simo_aoa(req),
    }
}

// ---------------------------------------------------------------------------
// Component solvers
// ---------------------------------------------------------------------------

/// Closest-approach point of two rays.
///
/// Minimizes `|a(t1) - b(t2)|^2` over the two ray parameters and returns
/// the midpoint of the connecting segment together with the gap (segment
/// length, 0 for an exact intersection). Symmetric in its arguments.
///
/// Parallel directions never localize a point
/// ([`SolveError::NonIdentifiable`]); a closest approach behind either ray
/// origin is rejected rather than clamped ([`SolveError::Infeasible`]) —
/// clamping would fabricate geometry the bearings do not support.
pub fn solve_two_halflines(a: &HalfLine, b: &HalfLine) -> Result<(Vec3, f64), SolveError> {
    let d = a.direction.dot(b.direction);
    let det = 1.0 - d * d;
    if det < 1e-12 {
        return Err(SolveError::NonIdentifiable {
            what: "parallel bearings: the rays meet nowhere (or everywhere)".into(),
        });
    }
    let w = b.origin - a.origin;
    let r1 = a.direction.dot(w);
    let r2 = b.direction.dot(w);
    let t1 = (r1 - d * r2) / det;
    let t2 = (d * r1 - r2) / det;
    if t1 < 0.0 || t2 < 0.0 {
        return Err(SolveError::Infeasible {
            what: format!(
                "bearing intersection behind an anchor (ray parameters {t1:.3} m and {t2:.3} m)"
            ),
        });
    }
    let q1 = a.point_at(t1);
    let q2 = b.point_at(t2);
    Ok(((q1 + q2) * 0.5, (q1 - q2).norm()))
}

/// One radial-velocity observation: unit direction from the UE toward the
/// sensed anchor, measured shift in Hz, and its noise sigma (values `<= 0`
/// weight as 1).
#[derive(Debug, Clone, Copy)]
pub struct VelocityObs {
    pub direction: Vec3,
    pub hz: f64,
    pub sigma: f64,
}

/// Minimum-norm velocity estimate and the subspace it lives in.
#[derive(Debug, Clone)]
pub struct VelocityEstimate {
    /// Minimum-norm weighted least-squares solution: zero along every
    /// unsensed direction.
    pub velocity: Vec3,
    /// Rank of the direction matrix (relative tolerance [`RANK_TOL`]).
    pub dim: usize,
    /// Orthonormal basis of the sensed subspace, `dim` entries.
    pub basis: Vec<Vec3>,
}

/// Solve the linear radial-projection system `u_i . v = lambda * f_i` for
/// the velocity `v` in the minimum-norm weighted least-squares sense.
///
/// The estimate is invariant to rescaling all sigmas by a common factor;
/// components outside the sensed subspace come back exactly zero.
pub fn solve_velocity(obs: &[VelocityObs], wavelength: f64) -> VelocityEstimate {
    let rows: Vec<&VelocityObs> = obs.iter().filter(|o| o.direction.norm() > 1e-12).collect();
    if rows.is_empty() {
        return VelocityEstimate { velocity: Vec3::ZERO, dim: 0, basis: vec![] };
    }
    let n = rows.len();
    let mut a = DMatrix::zeros(n, 3);
    let mut b = DVector::zeros(n);
    for (i, o) in rows.iter().enumerate() {
        let sig = if o.sigma > 0.0 { o.sigma } else { 1.0 };
        let u = o.direction * (1.0 / o.direction.norm());
        a[(i, 0)] = u.x / (wavelength * sig);
        a[(i, 1)] = u.y / (wavelength * sig);
        a[(i, 2)] = u.z / (wavelength * sig);
        b[i] = o.hz / sig;
    }
    let svd = a.svd(true, true);
    let u_m = svd.u.as_ref().expect("svd with u requested");
    let v_t = svd.v_t.as_ref().expect("svd with v_t requested");
    let sv = &svd.singular_values;
    let max_sv = sv.iter().cloned().fold(0.0, f64::max);
    let tol = RANK_TOL * max_sv;
    let mut x = DVector::zeros(3);
    let mut basis = Vec::new();
    for k in 0..sv.len() {
        if sv[k] > tol {
            let coeff = u_m.column(k).dot(&b) / sv[k];
            for j in 0..3 {
                x[j] += v_t[(k, j)] * coeff;
            }
            basis.push(Vec3::new(v_t[(k, 0)], v_t[(k, 1)], v_t[(k, 2)]));
        }
    }
    VelocityEstimate { velocity: Vec3::new(x[0], x[1], x[2]), dim: basis.len(), basis }
}

/// Best-fit body rotation from direction pairs: each pair is (global
/// direction to an anchor, the same direction measured in the body frame).
///
/// Returns the ZYX Euler angles of the proper rotation `R` minimizing
/// `sum |g_i - R l_i|^2` (orthogonal Procrustes via SVD of the
/// cross-covariance). Needs at least two pairs whose directions are not
/// parallel; the result is exactly orthonormal by construction.
pub fn solve_orientation(pairs: &[(Vec3, Vec3)]) -> Result<EulerZYX, SolveError> {
    if pairs.len() < 2 {
        return Err(SolveError::OrientationUnderdetermined);
    }
    let mut globals = Vec::with_capacity(pairs.len());
    let mut locals = Vec::with_capacity(pairs.len());
    for (g, l) in pairs {
        globals.push(g.normalized()?);
        locals.push(l.normalized()?);
    }
    let mut spread: f64 = 0.0;
    for i in 0..globals.len() {
        for j in (i + 1)..globals.len() {
            spread = spread.max(globals[i].cross(globals[j]).norm());
        }
    }
    if spread < 1e-9 {
        return Err(SolveError::OrientationUnderdetermined);
    }
    // Cross-covariance H = sum l_i g_i^T; R = V diag(1,1,det(VU^T)) U^T
    // with H = U S V^T maximizes sum g_i^T R l_i.
    let mut h = nalgebra::Matrix3::<f64>::zeros();
    for (g, l) in globals.iter().zip(&locals) {
        let lv = nalgebra::Vector3::new(l.x, l.y, l.z);
        let gv = nalgebra::Vector3::new(g.x, g.y, g.z);
        h += lv * gv.transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let v = svd.v_t.expect("svd with v_t requested").transpose();
    let d = (v * u.transpose()).determinant();
    let fix = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, d.signum()));
    let r = v * fix * u.transpose();
    let rot = crate::geometry::Rot3::from_matrix([
        [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
        [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
        [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
    ])?;
    Ok(rot.to_euler_zyx())
}

// ---------------------------------------------------------------------------
// Strategy solvers (one per scene family)
// ---------------------------------------------------------------------------

/// Multilateration from one-way delays (unknown clock, 4 anchors up) or
/// round-trip ranges (no clock, 3 anchors up), grid-initialized.
pub fn solve_tdoa_4bs(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    if let Some(init) = &req.initial {
        return refine_candidates(req, vec![init.clone()]);
    }
    let s = req.scenario;
    let items = &req.measurements.items;

    let toas: Vec<(&PathRef, f64)> = items
        .iter()
        .filter_map(|m| match m {
            Measurement::Toa { path, seconds, .. } => Some((path, *seconds)),
            _ => None,
        })
        .collect();
    let tdoas: Vec<(&PathRef, &PathRef, f64)> = items
        .iter()
        .filter_map(|m| match m {
            Measurement::Tdoa { path, reference, seconds, .. } => Some((path, reference, *seconds)),
            _ => None,
        })
        .collect();
    let rtts: Vec<(&PathRef, f64)> = items
        .iter()
        .filter_map(|m| match m {
            Measurement::Rtt { path, seconds, .. } => Some((path, *seconds)),
            _ => None,
        })
        .collect();

    // The delay-difference cost is clock-free; the range cost comes from
    // round trips. Either pins the position for the grid stage.
    let cost: Box<dyn Fn(Vec3) -> f64> = if !toas.is_empty() || !tdoas.is_empty() {
        let n_paths = if !toas.is_empty() { toas.len() } else { tdoas.len() + 1 };
        if n_paths < 4 {
            return Err(SolveError::InsufficientAnchors {
                what: format!(
                    "one-way delay multilateration with an unknown clock needs 4 anchors \
                     (3 independent differences); got {n_paths}. With round-trip ranging \
                     3 anchors suffice."
                ),
            });
        }
        let pairs: Vec<(PathRef, PathRef, f64)> = if !toas.is_empty() {
            let (ref_path, ref_toa) = (toas[0].0.clone(), toas[0].1);
            toas[1..]
                .iter()
                .map(|(p, t)| ((*p).clone(), ref_path.clone(), SPEED_OF_LIGHT * (t - ref_toa)))
                .collect()
        } else {
            tdoas
                .iter()
                .map(|(p, r, t)| ((*p).clone(), (*r).clone(), SPEED_OF_LIGHT * t))
                .collect()
        };
        Box::new(move |p: Vec3| {
            let mut c = 0.0;
            for (path, reference, dd) in &pairs {
                match (path_length(s, p, path), path_length(s, p, reference)) {
                    (Ok(la), Ok(lb)) => {
                        let e = (la - lb) - dd;
                        c += e * e;
                    }
                    _ => return f64::INFINITY,
                }
            }
            c
        })
    } else if !rtts.is_empty() {
        if rtts.len() < 3 {
            return Err(SolveError::InsufficientAnchors {
                what: format!("round-trip ranging needs 3 anchors; got {}", rtts.len()),
            });
        }
        let ranges: Vec<(PathRef, f64)> = rtts
            .iter()
            .map(|(p, t)| ((*p).clone(), SPEED_OF_LIGHT * t / 2.0))
            .collect();
        Box::new(move |p: Vec3| {
            let mut c = 0.0;
            for (path, rho) in &ranges {
                match path_length(s, p, path) {
                    Ok(l) => {
                        let e = l - rho;
                        c += e * e;
                    }
                    Err(_) => return f64::INFINITY,
                }
            }
            c
        })
    } else {
        return Err(SolveError::MissingMeasurement {
            what: "delay measurements (toa, tdoa, or rtt)".into(),
        });
    };

    // Refine every surviving grid minimum: three round-trip spheres meet
    // in two points (mirrored through the anchor plane), and both must be
    // reported when both fit.
    let starts = init::multistart_minima(s, req.grid_cell, 4, &cost);
    if starts.is_empty() {
        return Err(SolveError::Infeasible {
            what: "grid search found no finite-cost position".into(),
        });
    }
    let mut inits = Vec::with_capacity(starts.len());
    for p in starts {
        inits.push(assemble_state(req, p)?);
    }
    refine_candidates(req, inits)
}

/// One BS plus one RIS: substitute the RIS bearing ray into the
/// reflected-minus-direct delay difference and solve for the range along
/// the ray in closed form; clock from the absolute delays.
pub fn solve_siso_1ris_1bs(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    if let Some(init) = &req.initial {
        return refine_candidates(req, vec![init.clone()]);
    }
    let s = req.scenario;
    let bs = s.bss.first().ok_or_else(|| SolveError::InsufficientAnchors {
        what: "bearing-plus-delay needs one base station".into(),
    })?;
    let ris = s.riss.first().ok_or_else(|| SolveError::InsufficientAnchors {
        what: "bearing-plus-delay needs one reflecting surface".into(),
    })?;
    if s.is_blocked(&bs.id) {
        return Err(SolveError::NeedsCurvature);
    }
    let items = &req.measurements.items;
    let direct = PathRef::Direct { bs: bs.id.clone() };
    let reflected = PathRef::Reflected { bs: bs.id.clone(), ris: ris.id.clone() };
    let toa_of = |want: &PathRef| -> Option<f64> {
        items.iter().find_map(|m| match m {
            Measurement::Toa { path, seconds, .. } if path == want => Some(*seconds),
            _ => None,
        })
    };
    let toa_direct = toa_of(&direct).ok_or_else(|| SolveError::MissingMeasurement {
        what: format!("toa over {direct}"),
    })?;
    let toa_refl = toa_of(&reflected).ok_or_else(|| SolveError::MissingMeasurement {
        what: format!("toa over {reflected}"),
    })?;
    let azel = items
        .iter()
        .find_map(|m| match m {
            Measurement::Aod { node: NodeRef::Ris(id), azel, .. } if *id == ris.id => Some(*azel),
            _ => None,
        })
        .ok_or_else(|| SolveError::MissingMeasurement {
            what: format!("departure bearing from ris:{}", ris.id),
        })?;
    let line = init::aod_half_line(s, &NodeRef::Ris(ris.id.clone()), azel)?;
    let t = init::hybrid_delay_range(bs.position, ris.center, line.direction, toa_refl - toa_direct)?;
    refine_candidates(req, vec![assemble_state(req, line.point_at(t))?])
}

/// BS-free echo ranging: the RIS round trip puts the UE on a sphere, the
/// RIS bearing picks the point on it.
pub fn solve_siso_1ris_0bs(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    if let Some(init) = &req.initial {
        return refine_candidates(req, vec![init.clone()]);
    }
    let s = req.scenario;
    let ris = s.riss.first().ok_or_else(|| SolveError::InsufficientAnchors {
        what: "echo ranging needs one reflecting surface".into(),
    })?;
    let items = &req.measurements.items;
    let echo = PathRef::Echo { ris: ris.id.clone() };
    let rtt = items
        .iter()
        .find_map(|m| match m {
            Measurement::Rtt { path, seconds, .. } if *path == echo => Some(*seconds),
            _ => None,
        })
        .ok_or_else(|| SolveError::MissingMeasurement { what: format!("rtt over {echo}") })?;
    if rtt < 0.0 {
        return Err(SolveError::Infeasible {
            what: format!("negative round-trip time {rtt:.3e} s"),
        });
    }
    let azel = items
        .iter()
        .find_map(|m| match m {
            Measurement::Aod { node: NodeRef::Ris(id), azel, .. } if *id == ris.id => Some(*azel),
            _ => None,
        })
        .ok_or_else(|| SolveError::MissingMeasurement {
            what: format!("departure bearing from ris:{}", ris.id),
        })?;
    let line = init::aod_half_line(s, &NodeRef::Ris(ris.id.clone()), azel)?;
    let range = SPEED_OF_LIGHT * rtt / 2.0;
    refine_candidates(req, vec![assemble_state(req, line.point_at(range))?])
}

/// Two departure bearings: intersect the rays; orientation (when arrival
/// bearings exist) via Procrustes at the intersection.
pub fn solve_two_aod(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    if let Some(init) = &req.initial {
        return refine_candidates(req, vec![init.clone()]);
    }
    let s = req.scenario;
    let aods: Vec<(&NodeRef, crate::geometry::AzEl)> = req
        .measurements
        .items
        .iter()
        .filter_map(|m| match m {
            Measurement::Aod { node, azel, .. } => Some((node, *azel)),
            _ => None,
        })
        .collect();
    if aods.len() < 2 {
        return Err(SolveError::InsufficientAnchors {
            what: format!("ray intersection needs two departure bearings; got {}", aods.len()),
        });
    }
    let l1 = init::aod_half_line(s, aods[0].0, aods[0].1)?;
    let l2 = init::aod_half_line(s, aods[1].0, aods[1].1)?;
    let (p0, _gap) = solve_two_halflines(&l1, &l2)?;
    let mut u0 = assemble_state(req, p0)?;
    if req.mask.orientation {
        u0.orientation = orientation_from_aoas(s, &req.measurements.items, p0)?;
    }
    refine_candidates(req, vec![u0])
}

/// Arrival-bearing localization at the UE array.
///
/// Arrival-only scenes use the orientation-invariant pair-angle
/// constraints `u_i . u_j = l_i . l_j` over a coarse grid with multistart
/// refinement. With one departure bearing, the same pair-angle constraint
/// is scanned along the bearing ray instead. Orientation per candidate
/// via [`solve_orientation`].
///
/// Every symmetric branch of the pair-angle model is kept as a candidate:
/// a branch solution (the classic mirror across the plane of coplanar
/// anchors, or the alternate torus intersection) whose full-model
/// refinement slides into another basin is reinstated unrefined, carrying
/// its full-model residual, so the ranking still shows the ambiguity
/// instead of silently collapsing it.
pub fn solve_simo_aoa(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    if let Some(init) = &req.initial {
        return refine_candidates(req, vec![init.clone()]);
    }
    let s = req.scenario;
    let items = &req.measurements.items;
    let arrivals: Vec<(&NodeRef, Vec3, Vec3)> = items
        .iter()
        .filter_map(|m| match m {
            Measurement::Aoa { node, azel, .. } => {
                let body = azel_to_direction(*azel);
                node_position(s, node).ok().map(|pos| (node, body, pos))
            }
            _ => None,
        })
        .collect();

    // Pairwise separation-angle targets: rotation-invariant, so they
    // constrain position alone. Shared by the grid stage, the ray scan,
    // and branch-eligibility checks.
    let mut targets = Vec::new();
    for i in 0..arrivals.len() {
        for j in (i + 1)..arrivals.len() {
            targets.push((
                arrivals[i].2,
                arrivals[j].2,
                arrivals[i].1.normalized()?.dot(arrivals[j].1.normalized()?),
            ));
        }
    }
    let pair_cost = {
        let targets = targets.clone();
        move |p: Vec3| -> f64 {
            let mut c = 0.0;
            for (ai, aj, target) in &targets {
                let di = *ai - p;
                let dj = *aj - p;
                let ni = di.norm();
                let nj = dj.norm();
                if ni < 1e-9 || nj < 1e-9 {
                    return f64::INFINITY;
                }
                let e = di.dot(dj) / (ni * nj) - target;
                c += e * e;
            }
            c
        }
    };

    let aod = items.iter().find_map(|m| match m {
        Measurement::Aod { node, azel, .. } => Some((node, *azel)),
        _ => None,
    });

    let starts: Vec<Vec3> = if let Some((aod_node, azel)) = aod {
        // Bearing ray + arrival separation angle: scan the ray for ranges
        // where the angle subtended between the ray's own anchor and each
        // other anchor matches the measured one.
        let line = init::aod_half_line(s, aod_node, azel)?;
        let own = arrivals
            .iter()
            .find(|(node, _, _)| *node == aod_node)
            .ok_or_else(|| SolveError::MissingMeasurement {
                what: format!("arrival bearing for {aod_node} to pair with its departure bearing"),
            })?;
        let others: Vec<&(&NodeRef, Vec3, Vec3)> =
            arrivals.iter().filter(|(node, _, _)| *node != aod_node).collect();
        if others.is_empty() {
            return Err(SolveError::InsufficientAnchors {
                what: "ray scanning needs an arrival bearing from a second anchor".into(),
            });
        }
        let (lo, hi) = init::search_box(s);
        let t_max = (hi - lo).norm() * 2.0 + 10.0;
        let mut roots: Vec<f64> = Vec::new();
        for other in &others {
            let cos_target = own.1.normalized()?.dot(other.1.normalized()?);
            roots.extend(init::line_pair_angle_roots(&line, other.2, cos_target, t_max, 4000));
        }
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|a, b| (*a - *b).abs() < 1e-6 * t_max);
        if roots.is_empty() {
            return Err(SolveError::Infeasible {
                what: "no range along the bearing ray matches the measured arrival separation"
                    .into(),
            });
        }
        roots.into_iter().map(|t| line.point_at(t)).collect()
    } else {
        if arrivals.len() < 3 {
            return Err(SolveError::InsufficientAnchors {
                what: format!(
                    "arrival-only localization needs 3 anchors; got {}",
                    arrivals.len()
                ),
            });
        }
        let a0 = arrivals[0].2;
        let scale: f64 = arrivals.iter().map(|(_, _, p)| (*p - a0).norm()).fold(0.0, f64::max);
        let mut planar: f64 = 0.0;
        for i in 1..arrivals.len() {
            for j in (i + 1)..arrivals.len() {
                planar =
                    planar.max((arrivals[i].2 - a0).cross(arrivals[j].2 - a0).norm());
            }
        }
        if planar < 1e-9 * scale * scale {
            return Err(SolveError::NonIdentifiable {
                what: "collinear anchors: every rotation of the UE about their common line \
                       yields the same pair angles"
                    .into(),
            });
        }
        init::multistart_minima(s, req.grid_cell, 6, &pair_cost)
    };

    let mut inits = Vec::new();
    for p in &starts {
        let mut u0 = assemble_state(req, *p)?;
        if req.mask.orientation {
            match orientation_from_aoas(s, items, *p) {
                Ok(e) => u0.orientation = e,
                Err(SolveError::OrientationUnderdetermined) => {}
                Err(e) => return Err(e),
            }
        }
        inits.push(u0);
    }
    let mut result = refine_candidates(req, inits.clone())?;

    // Reinstate symmetric-branch solutions that escaped their basin. A
    // start qualifies as a branch solution when its pair-angle cost ties
    // the best start's (a scan root satisfying only one of several
    // constraints does not); it is orphaned when no surviving candidate
    // refined to its neighborhood.
    let branch_costs: Vec<f64> = starts.iter().map(|p| pair_cost(*p)).collect();
    let c_min = branch_costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let near = (2.0 * req.grid_cell).max(1e-3);
    for (u0, pc) in inits.into_iter().zip(branch_costs) {
        if pc > 4.0 * c_min + 1e-12 {
            continue;
        }
        let represented = result
            .candidates
            .iter()
            .any(|c| (c.state.position - u0.position).norm() < near);
        if represented {
            continue;
        }
        let residual_norm =
            refine::residual_norm_at(s, items, req.mask, &u0, &req.weights)?;
        result.candidates.push(Candidate {
            state: u0,
            residual_norm,
            iterations: 0,
            converged: true,
        });
    }
    result
        .candidates
        .sort_by(|a, b| a.residual_norm.total_cmp(&b.residual_norm));
    result.warnings.retain(|w| !w.contains("distinct candidate"));
    if result.candidates.len() > 1 {
        result.warnings.push(format!(
            "{} distinct candidate solutions; candidates are ranked by residual",
            result.candidates.len()
        ));
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// Shared assembly
// ---------------------------------------------------------------------------

/// Mean clock bias implied by the absolute one-way delays at position `p`.
fn clock_from_toas(s: &Scenario, items: &[Measurement], p: Vec3) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for m in items {
        if let Measurement::Toa { path, seconds, .. } = m {
            if let Ok(len) = path_length(s, p, path) {
                sum += seconds - len / SPEED_OF_LIGHT;
                n += 1;
            }
        }
    }
    if n > 0 {
        Some(sum / n as f64)
    } else {
        None
    }
}

/// Doppler observations with directions evaluated at position `p`.
fn doppler_obs_at(
    s: &Scenario,
    items: &[Measurement],
    p: Vec3,
    weights: &NoiseSpec,
) -> Result<Vec<VelocityObs>, SolveError> {
    let mut obs = Vec::new();
    for m in items {
        if let Measurement::Doppler { path, hz, sigma } = m {
            let direction = doppler_direction(s, p, path)?;
            let sig = if *sigma > 0.0 { *sigma } else { weights.sigma_for(MeasurementKind::Doppler) };
            obs.push(VelocityObs { direction, hz: *hz, sigma: sig });
        }
    }
    Ok(obs)
}

/// Build a starting state at position `p`: clock from the one-way delays,
/// velocity from the radial-velocity system, identity orientation.
fn assemble_state(req: &SolveRequest, p: Vec3) -> Result<UeState, SolveError> {
    let mut u = UeState::at(p);
    if req.mask.clock {
        u.clock_bias = clock_from_toas(req.scenario, &req.measurements.items, p).unwrap_or(0.0);
    }
    if req.mask.velocity {
        let obs = doppler_obs_at(req.scenario, &req.measurements.items, p, &req.weights)?;
        u.velocity = solve_velocity(&obs, req.scenario.wavelength()).velocity;
    }
    Ok(u)
}

/// Best-fit orientation from every arrival bearing, assuming position `p`.
fn orientation_from_aoas(
    s: &Scenario,
    items: &[Measurement],
    p: Vec3,
) -> Result<EulerZYX, SolveError> {
    let mut pairs = Vec::new();
    for m in items {
        if let Measurement::Aoa { node, azel, .. } = m {
            let g = (node_position(s, node)? - p).normalized()?;
            pairs.push((g, azel_to_direction(*azel)));
        }
    }
    solve_orientation(&pairs)
}

/// Effective per-kind noise for information analysis: the first positive
/// item sigma of each kind, else the request's weighting sigma.
fn effective_noise(req: &SolveRequest) -> NoiseSpec {
    let mut n = req.weights.clone();
    for kind in MeasurementKind::ALL {
        if let Some(m) = req
            .measurements
            .items
            .iter()
            .find(|m| m.kind() == kind && m.sigma() > 0.0)
        {
            n.set(kind, m.sigma());
        }
    }
    n
}

/// Distance between two states in the stacked masked coordinates
/// (meters / m/s / radians, clock in meters).
fn state_gap(a: &UeState, b: &UeState, mask: UnknownsMask) -> f64 {
    let xa = pack(a, mask);
    let xb = pack(b, mask);
    let mut g: f64 = 0.0;
    let labels = mask.labels();
    for i in 0..xa.len() {
        let diff = if labels[i] == "alpha" || labels[i] == "gamma" {
            crate::geometry::wrap_angle(xa[i] - xb[i])
        } else {
            xa[i] - xb[i]
        };
        g = g.max(diff.abs());
    }
    g
}

/// Refine every start, sort and deduplicate the outcomes, attach velocity
/// subspace and warnings.
fn refine_candidates(req: &SolveRequest, starts: Vec<UeState>) -> Result<SolveResult, SolveError> {
    if starts.is_empty() {
        return Err(SolveError::Infeasible { what: "no candidate starting states".into() });
    }
    let mut cands: Vec<Candidate> = Vec::with_capacity(starts.len());
    for st in &starts {
        let out = refine_state(req.scenario, &req.measurements.items, req.mask, st, &req.weights)?;
        cands.push(Candidate {
            state: out.state,
            residual_norm: out.residual_norm,
            iterations: out.iterations,
            converged: out.converged,
        });
    }
    cands.sort_by(|a, b| a.residual_norm.total_cmp(&b.residual_norm));
    let mut unique: Vec<Candidate> = Vec::new();
    for c in cands {
        if !unique.iter().any(|u| state_gap(&u.state, &c.state, req.mask) < 1e-6) {
            unique.push(c);
        }
    }

    let best_pos = unique[0].state.position;
    let (velocity_dim, velocity_basis) = if req.mask.velocity {
        let obs = doppler_obs_at(req.scenario, &req.measurements.items, best_pos, &req.weights)?;
        let est = solve_velocity(&obs, req.scenario.wavelength());
        (est.dim, est.basis)
    } else {
        (0, vec![])
    };

    let mut warnings = Vec::new();
    let policy = UnknownsMask::from_mix(&req.scenario.measurement_mix);
    if req.mask != policy {
        warnings.push(format!(
            "requested unknowns [{}] differ from the measurement-mix policy [{}]",
            req.mask.labels().join(" "),
            policy.labels().join(" ")
        ));
    }
    let noise = effective_noise(req);
    match ident_report(req.scenario, &unique[0].state, &noise, req.mask) {
        Ok(rep) => {
            if rep.verdict != Verdict::Identifiable {
                let blocks: Vec<String> = rep
                    .blocks
                    .iter()
                    .map(|b| format!("{} {}/{}", b.block, b.identifiable_dim, b.size))
                    .collect();
                warnings.push(format!(
                    "information rank {} of {} requested unknowns ({}); components outside the \
                     identifiable subspace are reported at their minimum-norm values",
                    rep.total_rank,
                    rep.masked_dim,
                    blocks.join(", ")
                ));
            }
        }
        Err(e) => warnings.push(format!("identifiability audit failed: {e}")),
    }
    if unique.len() > 1 {
        warnings.push(format!(
            "{} distinct candidate solutions; candidates are ranked by residual",
            unique.len()
        ));
    }

    Ok(SolveResult { mask: req.mask, candidates: unique, velocity_dim, velocity_basis, warnings })
}
