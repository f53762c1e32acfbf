//! Scene description: anchor nodes, signaling, measurement mix, and the UE
//! ground truth, plus the TOML scenario-file format.
//!
//! A [`Scenario`] holds everything the forward models need except the UE
//! state: base stations ([`BsNode`]), reconfigurable surfaces ([`RisNode`]),
//! carrier and signaling, the measurement mix, and which direct BS-UE links
//! are blocked. A [`ScenarioFile`] bundles a scenario with the true
//! [`UeState`] and default per-kind noise sigmas so that a single TOML file
//! fully specifies a simulation.
//!
//! Scenario files are canonicalized on load: RIS element spacing defaults to
//! half a wavelength, phase profiles default to all-zero and are wrapped into
//! `[0, 2*pi)`, and the measurement mix is sorted and deduplicated.
//! [`ScenarioFile::save`] followed by [`load`] reproduces the same value.

use crate::geometry::{rot_zyx, EulerZYX, Rot3, Vec3};
use crate::measurements::NoiseSpec;
use crate::SPEED_OF_LIGHT;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Errors from scenario file handling.
#[derive(Debug, Error)]
pub enum SceneError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialize scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("scenario has violations:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  - {x}")).collect::<Vec<_>>().join("\n")
}

/// One broken validation rule, tied to the field that breaks it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Dotted path of the offending field (e.g. `ris[0].spacing`).
    pub field: String,
    /// Human-readable rule that failed.
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation { field: field.into(), rule: rule.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// The UE state being estimated: where it is, how it moves, how its clock
/// is offset, and how it is oriented.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeState {
    pub position: Vec3,
    /// Velocity in m/s.
    pub velocity: Vec3,
    /// Clock bias in seconds (adds to every one-way ToA).
    pub clock_bias: f64,
    /// UE body orientation (ZYX Euler).
    pub orientation: EulerZYX,
}

impl UeState {
    pub fn new(position: Vec3, velocity: Vec3, clock_bias: f64, orientation: EulerZYX) -> Self {
        UeState { position, velocity, clock_bias, orientation }
    }

    /// A static UE at `position` with zero bias and identity orientation.
    pub fn at(position: Vec3) -> Self {
        UeState::new(position, Vec3::ZERO, 0.0, EulerZYX::IDENTITY)
    }

    /// Local-to-global rotation of the UE body frame.
    pub fn rotation(&self) -> Rot3 {
        rot_zyx(self.orientation)
    }
}

/// Antenna fitted to a BS or to the UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Antenna {
    /// One isotropic element; no angle measurements originate here.
    Single,
    /// Planar array in the local xy-plane, boresight along local +z.
    Array { nx: usize, ny: usize, spacing: f64 },
}

impl Antenna {
    pub fn is_array(&self) -> bool {
        matches!(self, Antenna::Array { .. })
    }
}

/// A fixed base station.
#[derive(Debug, Clone, PartialEq)]
pub struct BsNode {
    pub id: String,
    pub position: Vec3,
    pub orientation: EulerZYX,
    pub antenna: Antenna,
}

impl BsNode {
    pub fn rotation(&self) -> Rot3 {
        rot_zyx(self.orientation)
    }
}

/// A reconfigurable intelligent surface: a planar lattice of phase-shifting
/// elements in the local xy-plane, boresight along local +z.
#[derive(Debug, Clone, PartialEq)]
pub struct RisNode {
    pub id: String,
    /// Geometric center of the lattice.
    pub center: Vec3,
    pub orientation: EulerZYX,
    /// Element counts along the local x and y axes.
    pub nx: usize,
    pub ny: usize,
    /// Element pitch in meters.
    pub spacing: f64,
    /// Per-element phase shifts in `[0, 2*pi)`, indexed `i * ny + j` for
    /// lattice cell `(i, j)`.
    pub phase_profile: Vec<f64>,
}

impl RisNode {
    pub fn rotation(&self) -> Rot3 {
        rot_zyx(self.orientation)
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Boresight direction in global coordinates (unit vector).
    pub fn boresight(&self) -> Vec3 {
        self.rotation().apply(Vec3::new(0.0, 0.0, 1.0))
    }

    /// Element offsets from the center, in the local frame (z = 0).
    ///
    /// Ordering is row-major over `(i, j)` with `i` along local x.
    pub fn element_offsets_local(&self) -> Vec<Vec3> {
        let cx = (self.nx as f64 - 1.0) / 2.0;
        let cy = (self.ny as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(self.element_count());
        for i in 0..self.nx {
            for j in 0..self.ny {
                out.push(Vec3::new(
                    (i as f64 - cx) * self.spacing,
                    (j as f64 - cy) * self.spacing,
                    0.0,
                ));
            }
        }
        out
    }

    /// Largest extent of the lattice (diagonal), in meters.
    pub fn aperture(&self) -> f64 {
        let dx = (self.nx.saturating_sub(1)) as f64 * self.spacing;
        let dy = (self.ny.saturating_sub(1)) as f64 * self.spacing;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Global positions of every RIS element, same ordering as
/// [`RisNode::element_offsets_local`].
pub fn ris_element_positions(ris: &RisNode) -> Vec<Vec3> {
    let r = ris.rotation();
    ris.element_offsets_local()
        .into_iter()
        .map(|o| ris.center + r.apply(o))
        .collect()
}

/// Signaling regime: wideband enables delay measurements, narrowband
/// restricts the scene to angles and Doppler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Signaling {
    Wideband { bandwidth_hz: f64 },
    Narrowband,
}

impl Signaling {
    pub fn is_wideband(&self) -> bool {
        matches!(self, Signaling::Wideband { .. })
    }
}

/// Kinds of geometric measurements the scene can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Toa,
    Tdoa,
    Rtt,
    Aod,
    Aoa,
    Doppler,
}

impl MeasurementKind {
    pub const ALL: [MeasurementKind; 6] = [
        MeasurementKind::Toa,
        MeasurementKind::Tdoa,
        MeasurementKind::Rtt,
        MeasurementKind::Aod,
        MeasurementKind::Aoa,
        MeasurementKind::Doppler,
    ];

    /// Delay-class kinds need wideband signaling.
    pub fn needs_wideband(&self) -> bool {
        matches!(self, MeasurementKind::Toa | MeasurementKind::Tdoa | MeasurementKind::Rtt)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MeasurementKind::Toa => "toa",
            MeasurementKind::Tdoa => "tdoa",
            MeasurementKind::Rtt => "rtt",
            MeasurementKind::Aod => "aod",
            MeasurementKind::Aoa => "aoa",
            MeasurementKind::Doppler => "doppler",
        }
    }
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A localization scene: anchors, signaling, and what gets measured.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Carrier frequency in Hz.
    pub carrier_hz: f64,
    pub signaling: Signaling,
    pub bss: Vec<BsNode>,
    pub riss: Vec<RisNode>,
    /// Antenna at the UE; AoA needs an array here.
    pub ue_antenna: Antenna,
    /// Which measurement kinds the scene produces (sorted, deduplicated).
    pub measurement_mix: Vec<MeasurementKind>,
    /// BS ids whose direct BS-UE link is blocked. Paths through a RIS are
    /// never blocked.
    pub los_blocked: Vec<String>,
}

impl Scenario {
    /// Carrier wavelength in meters.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn bs(&self, id: &str) -> Option<&BsNode> {
        self.bss.iter().find(|b| b.id == id)
    }

    pub fn ris(&self, id: &str) -> Option<&RisNode> {
        self.riss.iter().find(|r| r.id == id)
    }

    pub fn has_kind(&self, kind: MeasurementKind) -> bool {
        self.measurement_mix.contains(&kind)
    }

    /// True when the direct BS-UE link for `bs_id` is blocked.
    pub fn is_blocked(&self, bs_id: &str) -> bool {
        self.los_blocked.iter().any(|b| b == bs_id)
    }

    /// BSs whose direct link to the UE is usable.
    pub fn visible_bss(&self) -> impl Iterator<Item = &BsNode> {
        self.bss.iter().filter(|b| !self.is_blocked(&b.id))
    }

    /// Axis-aligned bounding box over all anchor positions.
    pub fn anchor_bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let points: Vec<Vec3> = self
            .bss
            .iter()
            .map(|b| b.position)
            .chain(self.riss.iter().map(|r| r.center))
            .collect();
        let first = *points.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in points {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        Some((lo, hi))
    }

    /// Sort and deduplicate the measurement mix in enum order.
    pub fn canonicalize_mix(&mut self) {
        self.measurement_mix.sort();
        self.measurement_mix.dedup();
    }

    /// Check every scene rule; an empty list means the scene is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.bss.is_empty() && self.riss.is_empty() {
            v.push(Violation::new("bs/ris", "scene needs at least one anchor node"));
        }
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            v.push(Violation::new("carrier_hz", "carrier frequency must be finite and positive"));
        }
        match self.signaling {
            Signaling::Wideband { bandwidth_hz } => {
                if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
                    v.push(Violation::new(
                        "signaling.bandwidth_hz",
                        "wideband signaling needs a finite positive bandwidth",
                    ));
                }
            }
            Signaling::Narrowband => {
                for kind in &self.measurement_mix {
                    if kind.needs_wideband() {
                        v.push(Violation::new(
                            "measurement_mix",
                            format!("{kind} needs wideband signaling, scene is narrowband"),
                        ));
                    }
                }
            }
        }
        if self.has_kind(MeasurementKind::Aoa) && !self.ue_antenna.is_array() {
            v.push(Violation::new("ue_antenna", "aoa needs an antenna array at the ue"));
        }
        if self.has_kind(MeasurementKind::Aod)
            && self.riss.is_empty()
            && !self.bss.iter().any(|b| b.antenna.is_array())
        {
            v.push(Violation::new(
                "measurement_mix",
                "aod needs a ris or a bs with an antenna array",
            ));
        }
        self.check_antenna("ue_antenna", &self.ue_antenna, &mut v);
        let mut ids: Vec<&str> = Vec::new();
        for (i, bs) in self.bss.iter().enumerate() {
            let field = format!("bs[{i}]");
            if !bs.position.is_finite() || !bs.orientation.is_finite() {
                v.push(Violation::new(&field, "position and orientation must be finite"));
            }
            self.check_antenna(&format!("{field}.antenna"), &bs.antenna, &mut v);
            if ids.contains(&bs.id.as_str()) {
                v.push(Violation::new(format!("{field}.id"), format!("duplicate node id {:?}", bs.id)));
            }
            ids.push(&bs.id);
        }
        for (i, ris) in self.riss.iter().enumerate() {
            let field = format!("ris[{i}]");
            if !ris.center.is_finite() || !ris.orientation.is_finite() {
                v.push(Violation::new(&field, "center and orientation must be finite"));
            }
            if ris.nx < 1 || ris.ny < 1 {
                v.push(Violation::new(format!("{field}.grid"), "element grid must be at least 1x1"));
            }
            if !(ris.spacing.is_finite() && ris.spacing > 0.0) {
                v.push(Violation::new(
                    format!("{field}.spacing"),
                    "element spacing must be finite and positive",
                ));
            }
            if ris.phase_profile.len() != ris.element_count() {
                v.push(Violation::new(
                    format!("{field}.phase_profile"),
                    format!(
                        "phase profile has {} entries for {} elements",
                        ris.phase_profile.len(),
                        ris.element_count()
                    ),
                ));
            }
            if ris.phase_profile.iter().any(|p| !p.is_finite()) {
                v.push(Violation::new(format!("{field}.phase_profile"), "phases must be finite"));
            }
            if ids.contains(&ris.id.as_str()) {
                v.push(Violation::new(format!("{field}.id"), format!("duplicate node id {:?}", ris.id)));
            }
            ids.push(&ris.id);
        }
        for (i, blocked) in self.los_blocked.iter().enumerate() {
            if self.bs(blocked).is_none() {
                v.push(Violation::new(
                    format!("los_blocked[{i}]"),
                    format!("no bs with id {blocked:?}"),
                ));
            }
        }
        v
    }

    fn check_antenna(&self, field: &str, antenna: &Antenna, v: &mut Vec<Violation>) {
        if let Antenna::Array { nx, ny, spacing } = antenna {
            if *nx < 1 || *ny < 1 {
                v.push(Violation::new(field, "array dimensions must be at least 1x1"));
            }
            if !(spacing.is_finite() && *spacing > 0.0) {
                v.push(Violation::new(field, "array spacing must be finite and positive"));
            }
        }
    }
}

/// A scenario plus the simulation inputs that belong with it on disk: the
/// true UE state and default per-kind noise sigmas.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub ue: UeState,
    pub noise: NoiseSpec,
}

impl ScenarioFile {
    /// Validate the embedded scenario plus the UE truth.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = self.scenario.validate();
        if !self.ue.position.is_finite()
            || !self.ue.velocity.is_finite()
            || !self.ue.clock_bias.is_finite()
            || !self.ue.orientation.is_finite()
        {
            v.push(Violation::new("ue", "ue state must be finite"));
        }
        if self.ue.orientation.is_finite() && !self.ue.orientation.in_canonical_ranges() {
            v.push(Violation::new(
                "ue.orientation",
                "euler angles must lie in (-pi, pi] x [-pi/2, pi/2] x (-pi, pi]",
            ));
        }
        v
    }

    /// Serialize to the canonical TOML layout.
    pub fn to_toml_string(&self) -> Result<String, SceneError> {
        Ok(toml::to_string_pretty(&doc::File::from_value(self))?)
    }

    /// Parse from TOML and canonicalize (fill defaults, wrap phases,
    /// sort the mix).
    pub fn from_toml_str(text: &str) -> Result<ScenarioFile, SceneError> {
        let doc: doc::File = toml::from_str(text)?;
        Ok(doc.into_value())
    }

    /// Write the canonical TOML to `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SceneError> {
        let path = path.as_ref();
        let text = self.to_toml_string()?;
        std::fs::write(path, text)
            .map_err(|source| SceneError::Write { path: path.display().to_string(), source })
    }
}

/// Load a scenario file from disk.
pub fn load(path: impl AsRef<Path>) -> Result<ScenarioFile, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| SceneError::Read { path: path.display().to_string(), source })?;
    ScenarioFile::from_toml_str(&text)
}

/// Serde mirror of the on-disk layout. Kept separate from the public types
/// so loading can canonicalize (default spacing, zero profiles, sorted mix)
/// and so the file format stays explicit.
mod doc {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub(super) struct File {
        pub carrier_hz: f64,
        pub signaling: SignalingDoc,
        #[serde(default)]
        pub measurement_mix: Vec<MeasurementKind>,
        #[serde(default)]
        pub los_blocked: Vec<String>,
        pub ue_antenna: AntennaDoc,
        pub ue: UeDoc,
        #[serde(default)]
        pub noise: NoiseSpec,
        #[serde(default, rename = "bs")]
        pub bss: Vec<BsDoc>,
        #[serde(default, rename = "ris")]
        pub riss: Vec<RisDoc>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
    pub(super) enum SignalingDoc {
        Wideband { bandwidth_hz: f64 },
        Narrowband,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
    pub(super) enum AntennaDoc {
        Single,
        Array { nx: usize, ny: usize, spacing: f64 },
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub(super) struct UeDoc {
        pub position: Vec3,
        #[serde(default)]
        pub velocity: Vec3,
        #[serde(default)]
        pub clock_bias: f64,
        #[serde(default)]
        pub orientation: EulerZYX,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub(super) struct BsDoc {
        pub id: String,
        pub position: Vec3,
        #[serde(default)]
        pub orientation: EulerZYX,
        pub antenna: AntennaDoc,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub(super) struct RisDoc {
        pub id: String,
        pub center: Vec3,
        #[serde(default)]
        pub orientation: EulerZYX,
        /// `[nx, ny]` element counts.
        pub grid: [usize; 2],
        /// Defaults to half the carrier wavelength.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub spacing: Option<f64>,
        /// Defaults to all zeros; wrapped into `[0, 2*pi)` on load.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub phase_profile: Option<Vec<f64>>,
    }

    impl File {
        pub(super) fn from_value(sf: &ScenarioFile) -> File {
            let s = &sf.scenario;
            File {
                carrier_hz: s.carrier_hz,
                signaling: match s.signaling {
                    Signaling::Wideband { bandwidth_hz } => SignalingDoc::Wideband { bandwidth_hz },
                    Signaling::Narrowband => SignalingDoc::Narrowband,
                },
                measurement_mix: s.measurement_mix.clone(),
                los_blocked: s.los_blocked.clone(),
                ue_antenna: AntennaDoc::from_value(&s.ue_antenna),
                ue: UeDoc {
                    position: sf.ue.position,
                    velocity: sf.ue.velocity,
                    clock_bias: sf.ue.clock_bias,
                    orientation: sf.ue.orientation,
                },
                noise: sf.noise.clone(),
                bss: s
                    .bss
                    .iter()
                    .map(|b| BsDoc {
                        id: b.id.clone(),
                        position: b.position,
                        orientation: b.orientation,
                        antenna: AntennaDoc::from_value(&b.antenna),
                    })
                    .collect(),
                riss: s
                    .riss
                    .iter()
                    .map(|r| RisDoc {
                        id: r.id.clone(),
                        center: r.center,
                        orientation: r.orientation,
                        grid: [r.nx, r.ny],
                        spacing: Some(r.spacing),
                        phase_profile: Some(r.phase_profile.clone()),
                    })
                    .collect(),
            }
        }

        pub(super) fn into_value(self) -> ScenarioFile {
            let default_spacing = SPEED_OF_LIGHT / self.carrier_hz / 2.0;
            let mut scenario = Scenario {
                carrier_hz: self.carrier_hz,
                signaling: match self.signaling {
                    SignalingDoc::Wideband { bandwidth_hz } => Signaling::Wideband { bandwidth_hz },
                    SignalingDoc::Narrowband => Signaling::Narrowband,
                },
                bss: self
                    .bss
                    .into_iter()
                    .map(|b| BsNode {
                        id: b.id,
                        position: b.position,
                        orientation: b.orientation,
                        antenna: b.antenna.into_value(),
                    })
                    .collect(),
                riss: self
                    .riss
                    .into_iter()
                    .map(|r| {
                        let count = r.grid[0] * r.grid[1];
                        RisNode {
                            id: r.id,
                            center: r.center,
                            orientation: r.orientation,
                            nx: r.grid[0],
                            ny: r.grid[1],
                            spacing: r.spacing.unwrap_or(default_spacing),
                            phase_profile: r
                                .phase_profile
                                .map(|p| p.iter().map(|x| x.rem_euclid(2.0 * PI)).collect())
                                .unwrap_or_else(|| vec![0.0; count]),
                        }
                    })
                    .collect(),
                ue_antenna: self.ue_antenna.into_value(),
                measurement_mix: self.measurement_mix,
                los_blocked: self.los_blocked,
            };
            scenario.canonicalize_mix();
            ScenarioFile {
                scenario,
                ue: UeState {
                    position: self.ue.position,
                    velocity: self.ue.velocity,
                    clock_bias: self.ue.clock_bias,
                    orientation: self.ue.orientation,
                },
                noise: self.noise,
            }
        }
    }

    impl AntennaDoc {
        fn from_value(a: &Antenna) -> AntennaDoc {
            match a {
                Antenna::Single => AntennaDoc::Single,
                Antenna::Array { nx, ny, spacing } => {
                    AntennaDoc::Array { nx: *nx, ny: *ny, spacing: *spacing }
                }
            }
        }

        fn into_value(self) -> Antenna {
            match self {
                AntennaDoc::Single => Antenna::Single,
                AntennaDoc::Array { nx, ny, spacing } => Antenna::Array { nx, ny, spacing },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scenario() -> ScenarioFile {
        ScenarioFile {
            scenario: Scenario {
                carrier_hz: 3.5e9,
                signaling: Signaling::Wideband { bandwidth_hz: 1.0e8 },
                bss: vec![BsNode {
                    id: "bs1".into(),
                    position: Vec3::new(-20.0, 5.0, 10.0),
                    orientation: EulerZYX::IDENTITY,
                    antenna: Antenna::Single,
                }],
                riss: vec![RisNode {
                    id: "ris1".into(),
                    center: Vec3::new(10.0, -3.0, 4.0),
                    orientation: EulerZYX::new(0.4, 0.1, -0.2),
                    nx: 8,
                    ny: 3,
                    spacing: 0.0025,
                    phase_profile: vec![0.0; 24],
                }],
                ue_antenna: Antenna::Single,
                measurement_mix: vec![MeasurementKind::Toa, MeasurementKind::Doppler],
                los_blocked: vec![],
            },
            ue: UeState::new(
                Vec3::new(4.0, 8.0, 1.5),
                Vec3::new(0.7, -0.4, 0.1),
                2.0e-8,
                EulerZYX::new(0.3, -0.1, 0.2),
            ),
            noise: NoiseSpec::default(),
        }
    }

    #[test]
    fn element_lattice_is_centered_on_the_node() {
        let sf = small_scenario();
        let ris = &sf.scenario.riss[0];
        let positions = ris_element_positions(ris);
        assert_eq!(positions.len(), 24);
        let centroid = positions.iter().fold(Vec3::ZERO, |acc, p| acc + *p) / 24.0;
        assert!((centroid - ris.center).norm() < 1e-12);
        // Neighbor pitch along the fast (j) axis equals the spacing.
        assert!((positions[0].distance(positions[1]) - ris.spacing).abs() < 1e-12);
    }

    #[test]
    fn element_lattice_lies_in_the_rotated_plane() {
        let sf = small_scenario();
        let ris = &sf.scenario.riss[0];
        let normal = ris.boresight();
        for p in ris_element_positions(ris) {
            assert!((p - ris.center).dot(normal).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_lattice_matches_hand_computed_offsets() {
        let ris = RisNode {
            id: "r".into(),
            center: Vec3::new(1.0, 2.0, 3.0),
            orientation: EulerZYX::IDENTITY,
            nx: 2,
            ny: 2,
            spacing: 0.5,
            phase_profile: vec![0.0; 4],
        };
        let p = ris_element_positions(&ris);
        assert_eq!(p[0], Vec3::new(0.75, 1.75, 3.0));
        assert_eq!(p[1], Vec3::new(0.75, 2.25, 3.0));
        assert_eq!(p[2], Vec3::new(1.25, 1.75, 3.0));
        assert_eq!(p[3], Vec3::new(1.25, 2.25, 3.0));
    }

    #[test]
    fn valid_scene_reports_no_violations() {
        assert_eq!(small_scenario().validate(), vec![]);
    }

    #[test]
    fn narrowband_with_delay_measurement_is_flagged() {
        let mut sf = small_scenario();
        sf.scenario.signaling = Signaling::Narrowband;
        sf.scenario.measurement_mix = vec![MeasurementKind::Tdoa];
        let v = sf.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.contains("wideband"), "got: {}", v[0]);
    }

    #[test]
    fn aoa_without_ue_array_is_flagged() {
        let mut sf = small_scenario();
        sf.scenario.signaling = Signaling::Narrowband;
        sf.scenario.measurement_mix = vec![MeasurementKind::Aoa];
        let v = sf.validate();
        assert!(v.iter().any(|x| x.field == "ue_antenna"), "got: {v:?}");
    }

    #[test]
    fn aod_needs_some_array_anchor() {
        let mut sf = small_scenario();
        sf.scenario.riss.clear();
        sf.scenario.signaling = Signaling::Narrowband;
        sf.scenario.measurement_mix = vec![MeasurementKind::Aod];
        let v = sf.validate();
        assert!(v.iter().any(|x| x.rule.contains("aod")), "got: {v:?}");
    }

    #[test]
    fn empty_scene_and_bad_blocked_id_are_flagged() {
        let mut sf = small_scenario();
        sf.scenario.bss.clear();
        sf.scenario.riss.clear();
        sf.scenario.measurement_mix.clear();
        sf.scenario.los_blocked = vec!["ghost".into()];
        let v = sf.validate();
        assert!(v.iter().any(|x| x.rule.contains("anchor")));
        assert!(v.iter().any(|x| x.field.starts_with("los_blocked")));
    }

    #[test]
    fn mismatched_phase_profile_is_flagged() {
        let mut sf = small_scenario();
        sf.scenario.riss[0].phase_profile = vec![0.0; 5];
        let v = sf.validate();
        assert!(v.iter().any(|x| x.field.contains("phase_profile")));
    }

    #[test]
    fn toml_round_trip_preserves_the_value() {
        let sf = small_scenario();
        let text = sf.to_toml_string().unwrap();
        let back = ScenarioFile::from_toml_str(&text).unwrap();
        assert_eq!(back, sf);
        // And a second cycle is bit-stable.
        assert_eq!(back.to_toml_string().unwrap(), text);
    }

    #[test]
    fn save_and_load_round_trip_through_disk() {
        let sf = small_scenario();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.toml");
        sf.save(&path).unwrap();
        assert_eq!(load(&path).unwrap(), sf);
    }

    #[test]
    fn missing_carrier_is_named_in_the_parse_error() {
        let err = ScenarioFile::from_toml_str(
            "[signaling]\nkind = \"narrowband\"\n[ue_antenna]\nkind = \"single\"\n[ue]\nposition = [0.0, 0.0, 0.0]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("carrier_hz"), "got: {err}");
    }

    #[test]
    fn unknown_measurement_kind_is_rejected() {
        let text = "carrier_hz = 1e9\nmeasurement_mix = [\"sonar\"]\n[signaling]\nkind = \"narrowband\"\n[ue_antenna]\nkind = \"single\"\n[ue]\nposition = [0.0, 0.0, 0.0]\n";
        let err = ScenarioFile::from_toml_str(text).unwrap_err();
        assert!(err.to_string().contains("sonar") || err.to_string().contains("variant"), "got: {err}");
    }

    #[test]
    fn load_fills_spacing_and_profile_defaults() {
        let text = "carrier_hz = 3e8\n[signaling]\nkind = \"narrowband\"\n[ue_antenna]\nkind = \"single\"\n[ue]\nposition = [1.0, 0.0, 0.0]\n[[ris]]\nid = \"r1\"\ncenter = [0.0, 0.0, 0.0]\ngrid = [2, 3]\nphase_profile = [0.0, 1.0, 2.0, 3.0, 4.0, 10.0]\n";
        let sf = ScenarioFile::from_toml_str(text).unwrap();
        let ris = &sf.scenario.riss[0];
        // Half a wavelength at 3e8 Hz is 0.4996... m.
        assert!((ris.spacing - SPEED_OF_LIGHT / 3e8 / 2.0).abs() < 1e-12);
        // Phases wrapped into [0, 2*pi).
        assert!((ris.phase_profile[5] - (10.0 - 2.0 * PI)).abs() < 1e-12);
        assert!(ris.phase_profile.iter().all(|p| (0.0..2.0 * PI).contains(p)));
    }

    #[test]
    fn mix_is_sorted_and_deduplicated_on_load() {
        let text = "carrier_hz = 1e9\nmeasurement_mix = [\"doppler\", \"toa\", \"toa\"]\n[signaling]\nkind = \"wideband\"\nbandwidth_hz = 1e8\n[ue_antenna]\nkind = \"single\"\n[ue]\nposition = [0.0, 0.0, 0.0]\n[[bs]]\nid = \"b\"\nposition = [1.0, 1.0, 1.0]\n[bs.antenna]\nkind = \"single\"\n";
        let sf = ScenarioFile::from_toml_str(text).unwrap();
        assert_eq!(
            sf.scenario.measurement_mix,
            vec![MeasurementKind::Toa, MeasurementKind::Doppler]
        );
    }

    #[test]
    fn every_shipped_scenario_loads_and_validates_clean() {
        let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
        let mut checked = 0;
        for entry in std::fs::read_dir(&dir).expect("scenario gallery directory") {
            let path = entry.unwrap().path();
            if path.extension().and_then(|e| e.to_str()) != Some("toml") {
                continue;
            }
            let sf =
                load(&path).unwrap_or_else(|e| panic!("{} fails to load: {e}", path.display()));
            let violations = sf.validate();
            assert!(
                violations.is_empty(),
                "{} has violations: {violations:?}",
                path.display()
            );
            checked += 1;
        }
        assert!(checked >= 12, "expected the full gallery, found {checked} files");
    }
}
