//! Euclidean primitives: vectors, ZYX Euler rotations, bearing angles, and
//! half-lines.
//!
//! Conventions used by the whole crate:
//!
//! * Rotations compose as `R = Rz(alpha) * Ry(beta) * Rx(gamma)` (yaw, then
//!   pitch, then roll). `R` maps local coordinates to global; its transpose
//!   maps global to local.
//! * Azimuth is measured in the xy-plane from +x toward +y and reported in
//!   `(-pi, pi]`; elevation is measured from the xy-plane toward +z and
//!   lives in `[-pi/2, pi/2]`.
//! * At the elevation poles (`el = +/-pi/2`) azimuth is undefined; it is
//!   canonicalized to 0 there.
//!
//! # Example
//!
//! ```
//! use risloc::geometry::{azel_to_direction, direction_to_azel, rot_zyx, EulerZYX, Vec3};
//!
//! let r = rot_zyx(EulerZYX::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
//! let v = r.apply(Vec3::new(1.0, 0.0, 0.0));
//! assert!((v - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
//!
//! let azel = direction_to_azel(Vec3::new(1.0, 1.0, 0.0)).unwrap();
//! assert!((azel.azimuth - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
//! let back = azel_to_direction(azel);
//! assert!((back - Vec3::new(1.0, 1.0, 0.0).normalized().unwrap()).norm() < 1e-12);
//! ```

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use thiserror::Error;

/// Directions shorter than this are treated as degenerate (no bearing).
pub const DIRECTION_EPS: f64 = 1e-12;

/// Errors raised by geometric operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    /// A direction vector was too short to define a bearing.
    #[error("degenerate direction: vector norm {norm:.3e} is below {DIRECTION_EPS:.0e}")]
    DegenerateDirection {
        /// Norm of the offending vector.
        norm: f64,
    },
    /// A matrix offered as a rotation was not orthonormal and proper.
    #[error("not a rotation: orthonormality defect {defect:.3e}, determinant {det:.6}")]
    NotARotation {
        /// Largest entry of `|R^T R - I|`.
        defect: f64,
        /// Determinant of the matrix.
        det: f64,
    },
}

/// A 3-vector in meters (or any consistent unit).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", from = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Euclidean distance to `other`.
    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Unit vector along `self`, or an error for (near-)zero vectors.
    pub fn normalized(self) -> Result<Vec3, GeometryError> {
        let n = self.norm();
        if n < DIRECTION_EPS {
            return Err(GeometryError::DegenerateDirection { norm: n });
        }
        Ok(self / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.x, self.y, self.z)
    }
}

/// ZYX Euler angles in radians: yaw `alpha` about z, pitch `beta` about y,
/// roll `gamma` about x, applied in that order (z first).
///
/// Canonical ranges: `alpha, gamma` in `(-pi, pi]`, `beta` in `[-pi/2, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", from = "[f64; 3]")]
pub struct EulerZYX {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerZYX {
    pub const IDENTITY: EulerZYX = EulerZYX { alpha: 0.0, beta: 0.0, gamma: 0.0 };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        EulerZYX { alpha, beta, gamma }
    }

    /// True when all three angles sit inside the canonical ranges.
    pub fn in_canonical_ranges(&self) -> bool {
        self.alpha > -PI
            && self.alpha <= PI
            && self.beta >= -PI / 2.0
            && self.beta <= PI / 2.0
            && self.gamma > -PI
            && self.gamma <= PI
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite()
    }
}

impl From<[f64; 3]> for EulerZYX {
    fn from(a: [f64; 3]) -> Self {
        EulerZYX::new(a[0], a[1], a[2])
    }
}

impl From<EulerZYX> for [f64; 3] {
    fn from(e: EulerZYX) -> Self {
        [e.alpha, e.beta, e.gamma]
    }
}

/// Azimuth/elevation bearing in radians.
///
/// Azimuth in `(-pi, pi]` measured from +x toward +y; elevation in
/// `[-pi/2, pi/2]` measured from the xy-plane toward +z.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AzEl {
    pub azimuth: f64,
    pub elevation: f64,
}

impl AzEl {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        AzEl { azimuth, elevation }
    }
}

impl fmt::Display for AzEl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "az {:.4} rad, el {:.4} rad", self.azimuth, self.elevation)
    }
}

/// A 3x3 rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot3 {
    m: [[f64; 3]; 3],
}

impl Rot3 {
    pub const IDENTITY: Rot3 = Rot3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Rotation about +x by `g` radians.
    pub fn rx(g: f64) -> Rot3 {
        let (s, c) = g.sin_cos();
        Rot3 { m: [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]] }
    }

    /// Rotation about +y by `b` radians.
    pub fn ry(b: f64) -> Rot3 {
        let (s, c) = b.sin_cos();
        Rot3 { m: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]] }
    }

    /// Rotation about +z by `a` radians.
    pub fn rz(a: f64) -> Rot3 {
        let (s, c) = a.sin_cos();
        Rot3 { m: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]] }
    }

    /// Build from a raw row-major matrix, verifying it is a proper
    /// rotation: `R^T R = I` within `1e-9` and `det R > 0`.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Rot3, GeometryError> {
        let r = Rot3 { m };
        let rt_r = r.transpose() * r;
        let mut defect: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((rt_r.at(i, j) - target).abs());
            }
        }
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        if defect > 1e-9 || det <= 0.0 {
            return Err(GeometryError::NotARotation { defect, det });
        }
        Ok(r)
    }

    /// Matrix entry at `row`, `col`.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.m[row][col]
    }

    pub fn transpose(&self) -> Rot3 {
        let m = &self.m;
        Rot3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    /// Apply the rotation to a vector (local -> global for a node frame).
    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// Apply the inverse rotation (global -> local for a node frame).
    pub fn apply_transpose(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }

    /// Decompose into canonical ZYX Euler angles.
    ///
    /// At the gimbal poles (`|beta| = pi/2`) only `alpha - gamma` (or
    /// `alpha + gamma`) is determined; the convention here is `gamma = 0`.
    pub fn to_euler_zyx(&self) -> EulerZYX {
        let m = &self.m;
        let s_beta = (-m[2][0]).clamp(-1.0, 1.0);
        let beta = s_beta.asin();
        // cos(beta) ~ 0 means yaw and roll share an axis.
        if s_beta.abs() > 1.0 - 1e-12 {
            let alpha = wrap_angle((-m[0][1]).atan2(m[1][1]));
            EulerZYX::new(alpha, beta, 0.0)
        } else {
            let alpha = wrap_angle(m[1][0].atan2(m[0][0]));
            let gamma = wrap_angle(m[2][1].atan2(m[2][2]));
            EulerZYX::new(alpha, beta, gamma)
        }
    }
}

impl Mul for Rot3 {
    type Output = Rot3;
    fn mul(self, o: Rot3) -> Rot3 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        Rot3 { m }
    }
}

/// Build the rotation `Rz(alpha) * Ry(beta) * Rx(gamma)`.
pub fn rot_zyx(e: EulerZYX) -> Rot3 {
    Rot3::rz(e.alpha) * Rot3::ry(e.beta) * Rot3::rx(e.gamma)
}

/// Express a global vector in the local frame of a node with rotation `r`.
pub fn global_to_local(r: &Rot3, v: Vec3) -> Vec3 {
    r.apply_transpose(v)
}

/// Express a local vector in global coordinates.
pub fn local_to_global(r: &Rot3, v: Vec3) -> Vec3 {
    r.apply(v)
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(2.0 * PI); // [0, 2*pi)
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Convert a direction vector to azimuth/elevation.
///
/// Returns an error for (near-)zero vectors. At the elevation poles the
/// azimuth is canonicalized to 0; the `-pi` azimuth branch is reported
/// as `+pi`.
pub fn direction_to_azel(u: Vec3) -> Result<AzEl, GeometryError> {
    let n = u.norm();
    if n < DIRECTION_EPS {
        return Err(GeometryError::DegenerateDirection { norm: n });
    }
    let azimuth = if u.x == 0.0 && u.y == 0.0 {
        0.0
    } else {
        let a = u.y.atan2(u.x);
        if a <= -PI {
            PI
        } else {
            a
        }
    };
    let elevation = (u.z / n).clamp(-1.0, 1.0).asin();
    Ok(AzEl { azimuth, elevation })
}

/// Convert azimuth/elevation to the corresponding unit direction.
pub fn azel_to_direction(a: AzEl) -> Vec3 {
    let (saz, caz) = a.azimuth.sin_cos();
    let (sel, cel) = a.elevation.sin_cos();
    Vec3::new(cel * caz, cel * saz, sel)
}

/// Unsigned angle between two vectors, in `[0, pi]`.
pub fn angle_between(u: Vec3, v: Vec3) -> Result<f64, GeometryError> {
    let nu = u.norm();
    let nv = v.norm();
    if nu < DIRECTION_EPS {
        return Err(GeometryError::DegenerateDirection { norm: nu });
    }
    if nv < DIRECTION_EPS {
        return Err(GeometryError::DegenerateDirection { norm: nv });
    }
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0).acos())
}

/// Bearing of a direction relative to a planar-array boresight.
///
/// Array nodes keep their elements in the local xy-plane with boresight
/// along local +z. The boresight bearing maps local +z to
/// `(az 0, el 0)`; azimuth opens toward local +y and elevation toward
/// local +x (so a direction along local +x sits at the `el = pi/2` pole,
/// where azimuth canonicalizes to 0).
pub fn boresight_azel(local: Vec3) -> Result<AzEl, GeometryError> {
    direction_to_azel(Vec3::new(local.z, local.y, local.x))
}

/// Inverse of [`boresight_azel`]: unit direction in node-local coordinates.
pub fn boresight_direction(a: AzEl) -> Vec3 {
    let d = azel_to_direction(a);
    Vec3::new(d.z, d.y, d.x)
}

/// A ray: origin plus non-negative multiples of a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfLine {
    pub origin: Vec3,
    /// Unit direction.
    pub direction: Vec3,
}

impl HalfLine {
    /// Build a half-line, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<HalfLine, GeometryError> {
        Ok(HalfLine { origin, direction: direction.normalized()? })
    }

    /// Point at parameter `t` (meters along the ray).
    pub fn point_at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}
