//! Geometric measurement synthesis: delays, angles, and Doppler shifts.
//!
//! Every measurement refers to a propagation path ([`PathRef`]) or an anchor
//! node ([`NodeRef`]):
//!
//! * `Direct { bs }` — the one-way BS-UE path,
//! * `Reflected { bs, ris }` — BS to RIS center to UE,
//! * `Echo { ris }` — UE to RIS and back (used when the scene has no BS).
//!
//! Conventions:
//!
//! * ToA is path length over `c` plus the UE clock bias; RTT is twice the
//!   one-way length over `c` and carries no bias; TDoA is the bias-free
//!   difference of two path delays.
//! * AoD is the bearing of the UE as seen from the node, expressed against
//!   the node's boresight (see [`crate::geometry::boresight_azel`]); AoA is
//!   the bearing of the node in the UE body frame, so it rotates with the
//!   UE orientation.
//! * Doppler is positive when the sensed leg is shortening. For reflected
//!   and echo paths the anchors are static, so only the RIS-UE leg moves
//!   and the shift is the radial rate along that leg.
//!
//! [`generate`] walks the scenario's measurement mix and emits one
//! measurement per applicable (kind, path/node) pair, adding seeded
//! Gaussian noise per [`NoiseSpec`]. Equal seeds give bit-identical sets.

use crate::geometry::{
    boresight_azel, direction_to_azel, wrap_angle, AzEl, GeometryError, Vec3,
};
use crate::scene::{MeasurementKind, Scenario, UeState};
use crate::SPEED_OF_LIGHT;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// Errors from measurement synthesis.
#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("unknown node id {id:?}")]
    UnknownNode { id: String },
    #[error("{kind} needs wideband signaling, scene is narrowband")]
    NarrowbandDelay { kind: MeasurementKind },
    #[error("aod from bs {id:?} needs an antenna array")]
    AodNeedsArray { id: String },
    #[error("invalid path for this measurement: {reason}")]
    BadPath { reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A propagation path between the UE and the anchors.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PathRef {
    /// One-way BS to UE.
    Direct { bs: String },
    /// BS to RIS center to UE.
    Reflected { bs: String, ris: String },
    /// UE to RIS and back (no BS involved).
    Echo { ris: String },
}

impl fmt::Display for PathRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathRef::Direct { bs } => write!(f, "direct:{bs}"),
            PathRef::Reflected { bs, ris } => write!(f, "refl:{bs}:{ris}"),
            PathRef::Echo { ris } => write!(f, "echo:{ris}"),
        }
    }
}

/// An anchor node producing or receiving an angle measurement.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeRef {
    Bs(String),
    Ris(String),
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Bs(id) => write!(f, "bs:{id}"),
            NodeRef::Ris(id) => write!(f, "ris:{id}"),
        }
    }
}

/// One synthesized measurement with its noise sigma.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    Toa { path: PathRef, seconds: f64, sigma: f64 },
    Tdoa { path: PathRef, reference: PathRef, seconds: f64, sigma: f64 },
    Rtt { path: PathRef, seconds: f64, sigma: f64 },
    Aod { node: NodeRef, azel: AzEl, sigma: f64 },
    Aoa { node: NodeRef, azel: AzEl, sigma: f64 },
    Doppler { path: PathRef, hz: f64, sigma: f64 },
}

impl Measurement {
    pub fn kind(&self) -> MeasurementKind {
        match self {
            Measurement::Toa { .. } => MeasurementKind::Toa,
            Measurement::Tdoa { .. } => MeasurementKind::Tdoa,
            Measurement::Rtt { .. } => MeasurementKind::Rtt,
            Measurement::Aod { .. } => MeasurementKind::Aod,
            Measurement::Aoa { .. } => MeasurementKind::Aoa,
            Measurement::Doppler { .. } => MeasurementKind::Doppler,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Measurement::Toa { sigma, .. }
            | Measurement::Tdoa { sigma, .. }
            | Measurement::Rtt { sigma, .. }
            | Measurement::Aod { sigma, .. }
            | Measurement::Aoa { sigma, .. }
            | Measurement::Doppler { sigma, .. } => *sigma,
        }
    }

    /// CSV cells `(node, ref_node, value1, value2)`.
    fn csv_cells(&self) -> (String, String, f64, f64) {
        match self {
            Measurement::Toa { path, seconds, .. } => (path.to_string(), String::new(), *seconds, 0.0),
            Measurement::Tdoa { path, reference, seconds, .. } => {
                (path.to_string(), reference.to_string(), *seconds, 0.0)
            }
            Measurement::Rtt { path, seconds, .. } => (path.to_string(), String::new(), *seconds, 0.0),
            Measurement::Aod { node, azel, .. } => {
                (node.to_string(), String::new(), azel.azimuth, azel.elevation)
            }
            Measurement::Aoa { node, azel, .. } => {
                (node.to_string(), String::new(), azel.azimuth, azel.elevation)
            }
            Measurement::Doppler { path, hz, .. } => (path.to_string(), String::new(), *hz, 0.0),
        }
    }
}

/// A batch of measurements from one `generate` call.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub seed: u64,
    pub items: Vec<Measurement>,
}

impl MeasurementSet {
    /// CSV with header `kind,node,ref_node,value1,value2,sigma,seed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,node,ref_node,value1,value2,sigma,seed\n");
        for m in &self.items {
            let (node, ref_node, v1, v2) = m.csv_cells();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                m.kind(),
                node,
                ref_node,
                v1,
                v2,
                m.sigma(),
                self.seed
            ));
        }
        out
    }

    pub fn count_kind(&self, kind: MeasurementKind) -> usize {
        self.items.iter().filter(|m| m.kind() == kind).count()
    }

    pub fn iter_kind(&self, kind: MeasurementKind) -> impl Iterator<Item = &Measurement> {
        self.items.iter().filter(move |m| m.kind() == kind)
    }
}

/// Per-kind noise sigmas: seconds for delays, radians for angles (applied
/// independently to azimuth and elevation), Hz for Doppler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub toa: f64,
    pub tdoa: f64,
    pub rtt: f64,
    pub aod: f64,
    pub aoa: f64,
    pub doppler: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { toa: 1.0e-9, tdoa: 1.0e-9, rtt: 1.0e-9, aod: 2.0e-3, aoa: 2.0e-3, doppler: 2.0 }
    }
}

impl NoiseSpec {
    /// All sigmas zero: exact forward values.
    pub fn noiseless() -> Self {
        NoiseSpec { toa: 0.0, tdoa: 0.0, rtt: 0.0, aod: 0.0, aoa: 0.0, doppler: 0.0 }
    }

    pub fn sigma_for(&self, kind: MeasurementKind) -> f64 {
        match kind {
            MeasurementKind::Toa => self.toa,
            MeasurementKind::Tdoa => self.tdoa,
            MeasurementKind::Rtt => self.rtt,
            MeasurementKind::Aod => self.aod,
            MeasurementKind::Aoa => self.aoa,
            MeasurementKind::Doppler => self.doppler,
        }
    }

    pub fn set(&mut self, kind: MeasurementKind, sigma: f64) {
        match kind {
            MeasurementKind::Toa => self.toa = sigma,
            MeasurementKind::Tdoa => self.tdoa = sigma,
            MeasurementKind::Rtt => self.rtt = sigma,
            MeasurementKind::Aod => self.aod = sigma,
            MeasurementKind::Aoa => self.aoa = sigma,
            MeasurementKind::Doppler => self.doppler = sigma,
        }
    }

    /// Every sigma multiplied by `factor` (for noise ladders).
    pub fn scaled(&self, factor: f64) -> Self {
        NoiseSpec {
            toa: self.toa * factor,
            tdoa: self.tdoa * factor,
            rtt: self.rtt * factor,
            aod: self.aod * factor,
            aoa: self.aoa * factor,
            doppler: self.doppler * factor,
        }
    }
}

fn find_bs<'a>(s: &'a Scenario, id: &str) -> Result<&'a crate::scene::BsNode, MeasurementError> {
    s.bs(id).ok_or_else(|| MeasurementError::UnknownNode { id: id.into() })
}

fn find_ris<'a>(s: &'a Scenario, id: &str) -> Result<&'a crate::scene::RisNode, MeasurementError> {
    s.ris(id).ok_or_else(|| MeasurementError::UnknownNode { id: id.into() })
}

/// Global position of an anchor node.
pub fn node_position(s: &Scenario, node: &NodeRef) -> Result<Vec3, MeasurementError> {
    match node {
        NodeRef::Bs(id) => Ok(find_bs(s, id)?.position),
        NodeRef::Ris(id) => Ok(find_ris(s, id)?.center),
    }
}

/// One-way geometric length of a path, in meters.
///
/// For `Echo` this is the single UE-RIS leg (the round trip doubles it).
pub fn path_length(s: &Scenario, ue_pos: Vec3, path: &PathRef) -> Result<f64, MeasurementError> {
    match path {
        PathRef::Direct { bs } => Ok(find_bs(s, bs)?.position.distance(ue_pos)),
        PathRef::Reflected { bs, ris } => {
            let b = find_bs(s, bs)?.position;
            let r = find_ris(s, ris)?.center;
            Ok(b.distance(r) + r.distance(ue_pos))
        }
        PathRef::Echo { ris } => Ok(find_ris(s, ris)?.center.distance(ue_pos)),
    }
}

/// Unit vector from the UE toward the anchor whose motion the path senses:
/// the BS for direct paths, the RIS for reflected and echo paths.
pub fn doppler_direction(s: &Scenario, ue_pos: Vec3, path: &PathRef) -> Result<Vec3, MeasurementError> {
    let target = match path {
        PathRef::Direct { bs } => find_bs(s, bs)?.position,
        PathRef::Reflected { ris, .. } | PathRef::Echo { ris } => find_ris(s, ris)?.center,
    };
    Ok((target - ue_pos).normalized()?)
}

/// Time of arrival: path length over `c` plus the UE clock bias.
pub fn toa(s: &Scenario, u: &UeState, path: &PathRef) -> Result<f64, MeasurementError> {
    if !s.signaling.is_wideband() {
        return Err(MeasurementError::NarrowbandDelay { kind: MeasurementKind::Toa });
    }
    Ok(path_length(s, u.position, path)? / SPEED_OF_LIGHT + u.clock_bias)
}

/// Round-trip time: twice the one-way length over `c`; the UE clock bias
/// cancels. Only direct and echo paths round-trip.
pub fn rtt(s: &Scenario, u: &UeState, path: &PathRef) -> Result<f64, MeasurementError> {
    if !s.signaling.is_wideband() {
        return Err(MeasurementError::NarrowbandDelay { kind: MeasurementKind::Rtt });
    }
    if matches!(path, PathRef::Reflected { .. }) {
        return Err(MeasurementError::BadPath {
            reason: "rtt runs over a direct or echo path, not a one-way reflection".into(),
        });
    }
    Ok(2.0 * path_length(s, u.position, path)? / SPEED_OF_LIGHT)
}

/// Time difference of arrival between two paths; clock bias cancels.
pub fn tdoa(
    s: &Scenario,
    u: &UeState,
    path: &PathRef,
    reference: &PathRef,
) -> Result<f64, MeasurementError> {
    if !s.signaling.is_wideband() {
        return Err(MeasurementError::NarrowbandDelay { kind: MeasurementKind::Tdoa });
    }
    Ok((path_length(s, u.position, path)? - path_length(s, u.position, reference)?) / SPEED_OF_LIGHT)
}

/// Angle of departure: bearing of the UE from the node, against the node's
/// boresight. BS nodes need an antenna array; any RIS can steer, so any
/// RIS can report a departure bearing.
pub fn aod(s: &Scenario, u: &UeState, node: &NodeRef) -> Result<AzEl, MeasurementError> {
    let (position, rotation) = match node {
        NodeRef::Bs(id) => {
            let bs = find_bs(s, id)?;
            if !bs.antenna.is_array() {
                return Err(MeasurementError::AodNeedsArray { id: id.clone() });
            }
            (bs.position, bs.rotation())
        }
        NodeRef::Ris(id) => {
            let ris = find_ris(s, id)?;
            (ris.center, ris.rotation())
        }
    };
    let local = rotation.apply_transpose(u.position - position);
    Ok(boresight_azel(local)?)
}

/// Angle of arrival: bearing of the node in the UE body frame. Rotating the
/// UE by yaw `alpha` shifts every AoA azimuth by `-alpha`.
pub fn aoa(s: &Scenario, u: &UeState, node: &NodeRef) -> Result<AzEl, MeasurementError> {
    let target = node_position(s, node)?;
    let local = u.rotation().apply_transpose(target - u.position);
    Ok(direction_to_azel(local)?)
}

/// Doppler shift in Hz: positive when the sensed leg is shortening.
///
/// `f = (u_hat . v) / lambda` with `u_hat` from [`doppler_direction`].
pub fn doppler(s: &Scenario, u: &UeState, path: &PathRef) -> Result<f64, MeasurementError> {
    let u_hat = doppler_direction(s, u.position, path)?;
    Ok(u_hat.dot(u.velocity) / s.wavelength())
}

/// The scenario's propagation paths in canonical order: direct paths for
/// unblocked BSs, then one reflection per (BS, RIS) pair, then — only in
/// BS-free scenes — one echo per RIS.
pub fn canonical_paths(s: &Scenario) -> Vec<PathRef> {
    let mut paths = Vec::new();
    for bs in s.visible_bss() {
        paths.push(PathRef::Direct { bs: bs.id.clone() });
    }
    for bs in &s.bss {
        for ris in &s.riss {
            paths.push(PathRef::Reflected { bs: bs.id.clone(), ris: ris.id.clone() });
        }
    }
    if s.bss.is_empty() {
        for ris in &s.riss {
            paths.push(PathRef::Echo { ris: ris.id.clone() });
        }
    }
    paths
}

/// Wrap a noisy bearing back into the canonical ranges, reflecting at the
/// elevation poles.
fn wrap_azel(mut az: f64, mut el: f64) -> AzEl {
    for _ in 0..4 {
        if el > PI / 2.0 {
            el = PI - el;
            az += PI;
        } else if el < -PI / 2.0 {
            el = -PI - el;
            az += PI;
        } else {
            break;
        }
    }
    AzEl::new(wrap_angle(az), el)
}

/// Synthesize every measurement the scenario's mix calls for, with seeded
/// Gaussian noise. `sigma = 0` for a kind gives exact forward values.
pub fn generate(
    s: &Scenario,
    u: &UeState,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<MeasurementSet, MeasurementError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut draw = |sigma: f64| -> f64 {
        if sigma > 0.0 {
            let n: f64 = StandardNormal.sample(&mut rng);
            sigma * n
        } else {
            0.0
        }
    };
    let paths = canonical_paths(s);
    let mut items = Vec::new();
    for kind in &s.measurement_mix {
        let sigma = noise.sigma_for(*kind);
        match kind {
            MeasurementKind::Toa => {
                for path in paths.iter().filter(|p| !matches!(p, PathRef::Echo { .. })) {
                    let seconds = toa(s, u, path)? + draw(sigma);
                    items.push(Measurement::Toa { path: path.clone(), seconds, sigma });
                }
            }
            MeasurementKind::Tdoa => {
                let usable: Vec<&PathRef> =
                    paths.iter().filter(|p| !matches!(p, PathRef::Echo { .. })).collect();
                if let Some((reference, rest)) = usable.split_first() {
                    for path in rest {
                        let seconds = tdoa(s, u, path, reference)? + draw(sigma);
                        items.push(Measurement::Tdoa {
                            path: (*path).clone(),
                            reference: (*reference).clone(),
                            seconds,
                            sigma,
                        });
                    }
                }
            }
            MeasurementKind::Rtt => {
                for path in paths
                    .iter()
                    .filter(|p| matches!(p, PathRef::Direct { .. } | PathRef::Echo { .. }))
                {
                    let seconds = rtt(s, u, path)? + draw(sigma);
                    items.push(Measurement::Rtt { path: path.clone(), seconds, sigma });
                }
            }
            MeasurementKind::Aod => {
                let mut nodes: Vec<NodeRef> = s
                    .visible_bss()
                    .filter(|b| b.antenna.is_array())
                    .map(|b| NodeRef::Bs(b.id.clone()))
                    .collect();
                nodes.extend(s.riss.iter().map(|r| NodeRef::Ris(r.id.clone())));
                for node in nodes {
                    let clean = aod(s, u, &node)?;
                    let azel = wrap_azel(clean.azimuth + draw(sigma), clean.elevation + draw(sigma));
                    items.push(Measurement::Aod { node, azel, sigma });
                }
            }
            MeasurementKind::Aoa => {
                let mut nodes: Vec<NodeRef> =
                    s.visible_bss().map(|b| NodeRef::Bs(b.id.clone())).collect();
                nodes.extend(s.riss.iter().map(|r| NodeRef::Ris(r.id.clone())));
                for node in nodes {
                    let clean = aoa(s, u, &node)?;
                    let azel = wrap_azel(clean.azimuth + draw(sigma), clean.elevation + draw(sigma));
                    items.push(Measurement::Aoa { node, azel, sigma });
                }
            }
            MeasurementKind::Doppler => {
                for path in &paths {
                    let hz = doppler(s, u, path)? + draw(sigma);
                    items.push(Measurement::Doppler { path: path.clone(), hz, sigma });
                }
            }
        }
    }
    Ok(MeasurementSet { seed, items })
}
