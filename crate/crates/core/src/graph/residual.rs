//! Residuals, GPS weighting schemes, robust loss and analytic Jacobians.
//!
//! All Jacobians are taken with respect to the tangent increment
//! `[dt; dtheta]` of [`Pose::retract`]: additive translation and
//! right-multiplicative rotation.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};

use super::{GpsConstraint, RelativeConstraint};
use crate::geometry::{interpolate_translation, skew, so3_right_jacobian_inv, Pose, Rotation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingMode {
    /// `diag(sigma)^-1 * res`.
    InverseDiagonal,
    /// `res / max(sigma)`, the same weight on every axis.
    IsotropicMax,
    /// `(a * diag(sigma)^-1 + b * I) * res`.
    Affine,
}

impl WeightingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightingMode::InverseDiagonal => "inverse_diagonal",
            WeightingMode::IsotropicMax => "isotropic_max",
            WeightingMode::Affine => "affine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inverse_diagonal" => Some(WeightingMode::InverseDiagonal),
            "isotropic_max" => Some(WeightingMode::IsotropicMax),
            "affine" => Some(WeightingMode::Affine),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsWeighting {
    pub mode: WeightingMode,
    pub a: f64,
    pub b: f64,
    pub huber_delta: Option<f64>,
    /// Per-axis enable mask (east, north, up). Disabled axes contribute no cost.
    pub axis_mask: [bool; 3],
}

impl Default for GpsWeighting {
    fn default() -> Self {
        GpsWeighting {
            mode: WeightingMode::IsotropicMax,
            a: 1.0,
            b: 0.0,
            huber_delta: Some(1.0),
            axis_mask: [true; 3],
        }
    }
}

impl GpsWeighting {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(format!("gps.weighting.a must be >= 0, got {}", self.a));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(format!("gps.weighting.b must be >= 0, got {}", self.b));
        }
        if self.mode == WeightingMode::Affine && self.a == 0.0 && self.b == 0.0 {
            return Err("gps.weighting.a and gps.weighting.b cannot both be 0".into());
        }
        if let Some(d) = self.huber_delta {
            if !(d.is_finite() && d > 0.0) {
                return Err(format!("gps.huber_delta must be > 0, got {d}"));
            }
        }
        Ok(())
    }

    /// Diagonal of the weighting matrix for measurement deviations `sigma`,
    /// with masked axes zeroed.
    pub fn diagonal(&self, sigma: &Vector3<f64>) -> Vector3<f64> {
        let mut w = match self.mode {
            WeightingMode::InverseDiagonal => sigma.map(|s| 1.0 / s),
            WeightingMode::IsotropicMax => Vector3::repeat(1.0 / sigma.max()),
            WeightingMode::Affine => sigma.map(|s| self.a / s + self.b),
        };
        for (i, on) in self.axis_mask.iter().enumerate() {
            if !on {
                w[i] = 0.0;
            }
        }
        w
    }
}

/// Weighted GPS cost vector. The axis mask is ignored here; it applies when
/// residuals enter the optimizer.
pub fn gps_weighted_cost(
    residual: &Vector3<f64>,
    sigma: &Vector3<f64>,
    w: &GpsWeighting,
) -> Vector3<f64> {
    let unmasked = GpsWeighting {
        axis_mask: [true; 3],
        ..*w
    };
    unmasked.diagonal(sigma).component_mul(residual)
}

/// Huber loss on a squared norm `s = r^2`. Returns `rho(s)` and `d rho / d s`:
/// `rho = s` for `r <= delta`, `2 delta r - delta^2` beyond.
pub fn huber_loss(squared_norm: f64, delta: f64) -> (f64, f64) {
    let r = squared_norm.sqrt();
    if r <= delta {
        (squared_norm, 1.0)
    } else {
        (2.0 * delta * r - delta * delta, delta / r)
    }
}

/// Interpolated trajectory position minus the GPS position, in ENU axes.
pub fn gps_residual(pose_n: &Pose, pose_n1: &Pose, c: &GpsConstraint) -> Vector3<f64> {
    // Rotation does not affect the interpolated position, so only the
    // translations are interpolated.
    interpolate_translation(&pose_n.translation, &pose_n1.translation, c.beta)
        - c.measurement.position_enu
}

/// Residual plus Jacobians with respect to both bracketing poses.
pub fn gps_residual_jacobian(
    pose_n: &Pose,
    pose_n1: &Pose,
    c: &GpsConstraint,
) -> (Vector3<f64>, Matrix3x6<f64>, Matrix3x6<f64>) {
    let r = gps_residual(pose_n, pose_n1, c);
    let mut jn = Matrix3x6::zeros();
    let mut jn1 = Matrix3x6::zeros();
    jn.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(Matrix3::identity() * (1.0 - c.beta)));
    jn1.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(Matrix3::identity() * c.beta));
    (r, jn, jn1)
}

/// Weighted error of `inverse(pose_i) * pose_j` against the measured
/// relative pose: `[tw * (R_i^T (t_j - t_i) - t_m); rw * log(R_m^T R_i^T R_j)]`.
pub fn relative_residual(pose_i: &Pose, pose_j: &Pose, c: &RelativeConstraint) -> Vector6<f64> {
    relative_residual_jacobian(pose_i, pose_j, c).0
}

pub fn relative_residual_jacobian(
    pose_i: &Pose,
    pose_j: &Pose,
    c: &RelativeConstraint,
) -> (Vector6<f64>, Matrix6<f64>, Matrix6<f64>) {
    let ri_t = pose_i.rotation.inverse();
    let dt_world = pose_j.translation - pose_i.translation;
    let dt_local = ri_t.rotate(&dt_world);
    let rel_rot = ri_t.compose(&pose_j.rotation);
    let err_rot = c.measured.rotation.inverse().compose(&rel_rot);
    let phi = err_rot.log();

    let tw = c.translation_weight;
    let rw = c.rotation_weight;
    let mut r = Vector6::zeros();
    r.fixed_rows_mut::<3>(0)
        .copy_from(&((dt_local - c.measured.translation) * tw));
    r.fixed_rows_mut::<3>(3).copy_from(&(phi * rw));

    let ri_t_m = ri_t.matrix();
    let jr_inv = so3_right_jacobian_inv(&phi);
    let a_t = rel_rot.matrix().transpose();

    let mut ji = Matrix6::zeros();
    ji.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-ri_t_m * tw));
    ji.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(skew(&dt_local) * tw));
    ji.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(-jr_inv * a_t * rw));

    let mut jj = Matrix6::zeros();
    jj.fixed_view_mut::<3, 3>(0, 0).copy_from(&(ri_t_m * tw));
    jj.fixed_view_mut::<3, 3>(3, 3).copy_from(&(jr_inv * rw));
    (r, ji, jj)
}

/// Absolute orientation prior: `w * log(target^-1 R)`.
pub fn orientation_prior_residual(
    pose: &Pose,
    target: &Rotation,
    weight: f64,
) -> (Vector3<f64>, Matrix3x6<f64>) {
    let phi = target.inverse().compose(&pose.rotation).log();
    let mut j = Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(so3_right_jacobian_inv(&phi) * weight));
    (phi * weight, j)
}

/// Absolute position prior: `w * (t - target)`.
pub fn position_prior_residual(
    pose: &Pose,
    target: &Vector3<f64>,
    weight: f64,
) -> (Vector3<f64>, Matrix3x6<f64>) {
    let mut j = Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(Matrix3::identity() * weight));
    ((pose.translation - target) * weight, j)
}
