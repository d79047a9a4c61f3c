//! Timestamps, rotations and rigid transforms.
//!
//! Rotations are unit quaternions kept in the canonical hemisphere `w >= 0`,
//! so that `q` and `-q` compare equal and slerp always takes the short arc.

use std::fmt;
use std::ops::Sub;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

/// Quaternion dot products below this magnitude are treated as antipodal
/// rotations (180 degrees apart), for which slerp has no unique path.
pub const ANTIPODAL_DOT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("slerp endpoints are 180 degrees apart (|q0.q1| = {0:e})")]
    Antipodal(f64),
    #[error("interpolation factor {0} outside [0, 1]")]
    FactorOutOfRange(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Seconds since the start of a run.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Timestamp(pub f64);

impl Timestamp {
    pub fn seconds(self) -> f64 {
        self.0
    }
}

impl Sub for Timestamp {
    type Output = f64;
    fn sub(self, rhs: Self) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A 3D rotation stored as a canonical unit quaternion (`w >= 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Builds a rotation from raw `(w, x, y, z)` components, normalizing and
    /// flipping into the `w >= 0` hemisphere.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::from_quaternion(Quaternion::new(w, x, y, z))
    }

    pub fn from_quaternion(q: Quaternion<f64>) -> Self {
        if q.norm() == 0.0 {
            return Self::identity();
        }
        Self::canonical(UnitQuaternion::new_unchecked(q))
    }

    pub fn from_unit(q: UnitQuaternion<f64>) -> Self {
        Self::canonical(q)
    }

    fn canonical(q: UnitQuaternion<f64>) -> Self {
        // Products of unit quaternions drift off the unit sphere; values that
        // are already unit to within a few ulps keep their exact bits.
        let mut raw = q.into_inner();
        let n = raw.norm();
        if (n - 1.0).abs() > 4.0 * f64::EPSILON {
            raw /= n;
        }
        if raw.w < 0.0 {
            raw = -raw;
        }
        Rotation(UnitQuaternion::new_unchecked(raw))
    }

    /// Rotation about +z by `yaw` radians.
    pub fn from_yaw(yaw: f64) -> Self {
        Self::from_axis_angle(Vector3::z(), yaw)
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        Self::from_unit(UnitQuaternion::from_scaled_axis(axis / n * angle))
    }

    /// SO(3) exponential of a rotation vector.
    pub fn exp(omega: &Vector3<f64>) -> Self {
        Self::from_unit(UnitQuaternion::from_scaled_axis(*omega))
    }

    /// SO(3) logarithm: the rotation vector with angle in `[0, pi]`.
    pub fn log(&self) -> Vector3<f64> {
        self.0.scaled_axis()
    }

    pub fn angle(&self) -> f64 {
        self.0.angle()
    }

    /// Yaw of the rotation's x axis projected on the xy plane.
    pub fn yaw(&self) -> f64 {
        let x = self.0 * Vector3::x();
        x.y.atan2(x.x)
    }

    pub fn w(&self) -> f64 {
        self.0.w
    }
    pub fn x(&self) -> f64 {
        self.0.i
    }
    pub fn y(&self) -> f64 {
        self.0.j
    }
    pub fn z(&self) -> f64 {
        self.0.k
    }

    pub fn unit_quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Self::canonical(self.0.inverse())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Self::canonical(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn dot(&self, other: &Rotation) -> f64 {
        self.0.coords.dot(&other.0.coords)
    }

    /// Angle of `self^-1 * other`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.inverse().compose(other).angle()
    }

    /// Spherical linear interpolation along the shorter arc: `u = 0` gives
    /// `self`, `u = 1` gives `other`.
    pub fn slerp(&self, other: &Rotation, u: f64) -> Result<Rotation, GeometryError> {
        if !(0.0..=1.0).contains(&u) {
            return Err(GeometryError::FactorOutOfRange(u));
        }
        let q0 = self.0.coords;
        let mut q1 = other.0.coords;
        let mut d = q0.dot(&q1);
        if d.abs() < ANTIPODAL_DOT {
            return Err(GeometryError::Antipodal(d));
        }
        if d < 0.0 {
            q1 = -q1;
            d = -d;
        }
        if u == 0.0 {
            return Ok(*self);
        }
        if u == 1.0 {
            return Ok(*other);
        }
        let d = d.min(1.0);
        let theta = d.acos();
        let out = if theta < 1e-12 {
            q0 * (1.0 - u) + q1 * u
        } else {
            let s = theta.sin();
            q0 * (((1.0 - u) * theta).sin() / s) + q1 * ((u * theta).sin() / s)
        };
        Ok(Self::from_quaternion(Quaternion::from(out)))
    }
}

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose::default()
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose::new(Rotation::identity(), Vector3::new(x, y, z))
    }

    pub fn from_rotation(rotation: Rotation) -> Self {
        Pose::new(rotation, Vector3::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && [
                self.rotation.w(),
                self.rotation.x(),
                self.rotation.y(),
                self.rotation.z(),
            ]
            .iter()
            .all(|v| v.is_finite())
    }

    /// `self * other`: apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -inv.rotate(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    /// Applies a tangent-space increment `[dt; dtheta]`: translation is
    /// shifted additively, rotation is right-multiplied by `exp(dtheta)`.
    /// This is the parameterization the optimizer's Jacobians are taken in.
    pub fn retract(&self, delta: &Vector6<f64>) -> Pose {
        let dt = delta.fixed_rows::<3>(0).into_owned();
        let dr = delta.fixed_rows::<3>(3).into_owned();
        Pose {
            rotation: self.rotation.compose(&Rotation::exp(&dr)),
            translation: self.translation + dt,
        }
    }

    /// Linear interpolation of translation and slerp of rotation.
    pub fn interpolate(&self, other: &Pose, u: f64) -> Result<Pose, GeometryError> {
        let rotation = self.rotation.slerp(&other.rotation, u)?;
        Ok(Pose {
            rotation,
            translation: interpolate_translation(&self.translation, &other.translation, u),
        })
    }
}

/// `(1 - u) * a + u * b`, returning the endpoints exactly at `u = 0` and `u = 1`.
pub fn interpolate_translation(a: &Vector3<f64>, b: &Vector3<f64>, u: f64) -> Vector3<f64> {
    if u == 0.0 {
        *a
    } else if u == 1.0 {
        *b
    } else {
        a * (1.0 - u) + b * u
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn inverse(p: &Pose) -> Pose {
    p.inverse()
}

pub fn slerp(q0: &Rotation, q1: &Rotation, u: f64) -> Result<Rotation, GeometryError> {
    q0.slerp(q1, u)
}

pub fn interpolate_pose(p0: &Pose, p1: &Pose, u: f64) -> Result<Pose, GeometryError> {
    p0.interpolate(p1, u)
}

/// Skew-symmetric cross-product matrix `[v]x`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of the right Jacobian of SO(3) at rotation vector `phi`.
pub fn so3_right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < 1e-6 {
        return Matrix3::identity() + 0.5 * k + (1.0 / 12.0) * k * k;
    }
    let coeff = 1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin());
    Matrix3::identity() + 0.5 * k + coeff * k * k
}

/// CSV header for timestamped poses.
pub const POSE_CSV_HEADER: &str = "t,px,py,pz,qw,qx,qy,qz";

/// Formats one `t, px, py, pz, qw, qx, qy, qz` row. `f64` Display prints the
/// shortest representation that parses back to the same bits.
pub fn pose_csv_row(t: Timestamp, p: &Pose) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        t.0,
        p.translation.x,
        p.translation.y,
        p.translation.z,
        p.rotation.w(),
        p.rotation.x(),
        p.rotation.y(),
        p.rotation.z()
    )
}

pub fn parse_pose_csv_row(line: &str) -> Option<(Timestamp, Pose)> {
    let v: Vec<f64> = line
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .ok()?;
    if v.len() != 8 {
        return None;
    }
    let rotation = Rotation::from_wxyz(v[4], v[5], v[6], v[7]);
    Some((
        Timestamp(v[0]),
        Pose::new(rotation, Vector3::new(v[1], v[2], v[3])),
    ))
}
