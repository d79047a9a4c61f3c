//! Smoothing of the map-to-local correction after pose-graph optimizations.
//!
//! Each optimization produces a new map-to-local correction. Instead of
//! switching to it at once, the published correction blends the previous
//! output into the new value with a logistic weight
//! `alpha(t) = 1 / (1 + s * exp(t - t_x))`, where `t` is the time since the
//! optimization event. The local (odometric) pose is never filtered; only the
//! correction is.

use std::sync::Arc;

use arc_swap::ArcSwap;
use thiserror::Error;

use crate::geometry::{interpolate_translation, Pose, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmootherError {
    #[error("smoother slope s must be positive and finite, got {0}")]
    Slope(f64),
    #[error("smoother midpoint t_x must be positive and finite, got {0}")]
    Midpoint(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherParams {
    /// Slope constant `s`.
    pub s: f64,
    /// Midpoint offset `t_x` in seconds.
    pub t_x: f64,
}

impl Default for SmootherParams {
    fn default() -> Self {
        SmootherParams { s: 1.5, t_x: 3.0 }
    }
}

impl SmootherParams {
    pub fn new(s: f64, t_x: f64) -> Result<Self, SmootherError> {
        let p = SmootherParams { s, t_x };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SmootherError> {
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(SmootherError::Slope(self.s));
        }
        if !(self.t_x.is_finite() && self.t_x > 0.0) {
            return Err(SmootherError::Midpoint(self.t_x));
        }
        Ok(())
    }
}

/// Weight of the old correction `t` seconds after an optimization event.
/// Strictly decreasing, in `(0, 1)` for all `t >= 0`.
pub fn alpha(t: f64, params: &SmootherParams) -> f64 {
    let t = t.max(0.0);
    1.0 / (1.0 + params.s * (t - params.t_x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherState {
    pub correction_old: Pose,
    pub correction_new: Pose,
    pub event_time: Timestamp,
    pub params: SmootherParams,
    pub active: bool,
}

impl SmootherState {
    /// An inactive smoother holding `correction`.
    pub fn new(correction: Pose, params: SmootherParams) -> Self {
        SmootherState {
            correction_old: correction,
            correction_new: correction,
            event_time: Timestamp(0.0),
            params,
            active: false,
        }
    }

    /// Starts a new transition toward `new_correction` at `now`. The old
    /// endpoint is the correction currently being output, so a second event
    /// arriving mid-transition does not make the output jump.
    pub fn on_optimization_event(&self, new_correction: Pose, now: Timestamp) -> SmootherState {
        let current = self.smoothed_correction(now);
        let mut next = SmootherState {
            correction_old: current,
            correction_new: new_correction,
            event_time: now,
            params: self.params,
            active: true,
        };
        // Slerp between rotations 180 degrees apart is undefined; snap instead.
        if current.rotation.slerp(&new_correction.rotation, 0.5).is_err() {
            next.correction_old = new_correction;
            next.active = false;
        }
        next
    }

    pub fn smoothed_correction(&self, now: Timestamp) -> Pose {
        if !self.active {
            return self.correction_new;
        }
        let a = alpha(now - self.event_time, &self.params);
        let translation = interpolate_translation(
            &self.correction_new.translation,
            &self.correction_old.translation,
            a,
        );
        // The endpoints were checked for slerp-ability when the event started.
        let rotation = self
            .correction_new
            .rotation
            .slerp(&self.correction_old.rotation, a)
            .unwrap_or(self.correction_new.rotation);
        Pose::new(rotation, translation)
    }

    /// `smoothed_correction(now) * local_pose`.
    pub fn global_pose(&self, local_pose: &Pose, now: Timestamp) -> Pose {
        self.smoothed_correction(now).compose(local_pose)
    }
}

pub fn on_optimization_event(
    state: &SmootherState,
    new_correction: Pose,
    now: Timestamp,
) -> SmootherState {
    state.on_optimization_event(new_correction, now)
}

pub fn smoothed_correction(state: &SmootherState, now: Timestamp) -> Pose {
    state.smoothed_correction(now)
}

pub fn global_pose(state: &SmootherState, local_pose: &Pose, now: Timestamp) -> Pose {
    state.global_pose(local_pose, now)
}

/// Smoother shared between the optimizer (single writer) and any number of
/// pose readers. Readers load an immutable snapshot and never block.
#[derive(Debug)]
pub struct SharedSmoother {
    state: ArcSwap<SmootherState>,
}

impl SharedSmoother {
    pub fn new(state: SmootherState) -> Self {
        SharedSmoother {
            state: ArcSwap::from_pointee(state),
        }
    }

    pub fn snapshot(&self) -> Arc<SmootherState> {
        self.state.load_full()
    }

    pub fn on_optimization_event(&self, new_correction: Pose, now: Timestamp) {
        self.state
            .rcu(|s| s.on_optimization_event(new_correction, now));
    }

    pub fn global_pose(&self, local_pose: &Pose, now: Timestamp) -> Pose {
        self.state.load().global_pose(local_pose, now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use nalgebra::Vector3;

    fn step_state() -> SmootherState {
        SmootherState::new(Pose::identity(), SmootherParams::default())
            .on_optimization_event(Pose::from_translation(0.0, 0.0, 1.0), Timestamp(0.0))
    }

    #[test]
    fn alpha_at_midpoint() {
        let p = SmootherParams::default();
        assert!((alpha(3.0, &p) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn alpha_monotone_and_bounded() {
        let p = SmootherParams::default();
        let mut prev = alpha(0.0, &p);
        for i in 1..400 {
            let a = alpha(i as f64 * 0.05, &p);
            assert!(a < prev && a > 0.0 && a < 1.0);
            prev = a;
        }
    }

    #[test]
    fn params_validation() {
        assert!(SmootherParams::new(0.0, 3.0).is_err());
        assert!(SmootherParams::new(1.5, -1.0).is_err());
        assert!(SmootherParams::new(1.5, f64::NAN).is_err());
        assert!(SmootherParams::new(1.5, 3.0).is_ok());
    }

    #[test]
    fn inactive_state_returns_new_correction() {
        let c = Pose::from_translation(1.0, 2.0, 3.0);
        let s = SmootherState::new(c, SmootherParams::default());
        assert_eq!(s.smoothed_correction(Timestamp(100.0)), c);
        let local = Pose::from_translation(0.5, 0.0, 0.0);
        assert_eq!(
            s.global_pose(&local, Timestamp(1.0)).translation,
            Vector3::new(1.5, 2.0, 3.0)
        );
    }

    #[test]
    fn event_from_inactive_state() {
        let s = step_state();
        assert!(s.active);
        assert_eq!(s.correction_old, Pose::identity());
        assert_eq!(s.correction_new, Pose::from_translation(0.0, 0.0, 1.0));
        assert_eq!(s.event_time, Timestamp(0.0));
    }

    #[test]
    fn step_profile() {
        let s = step_state();
        let a0 = alpha(0.0, &SmootherParams::default());
        let z0 = s.smoothed_correction(Timestamp(0.0)).translation.z;
        assert!((z0 - (1.0 - a0)).abs() < 1e-15);
        let z3 = s
            .global_pose(&Pose::identity(), Timestamp(3.0))
            .translation
            .z;
        assert!((z3 - 0.6).abs() < 1e-12);
        let z20 = s.smoothed_correction(Timestamp(20.0)).translation.z;
        assert!((1.0 - z20).abs() < 6e-8);
    }

    #[test]
    fn equal_endpoints_stay_constant() {
        let c = Pose::new(Rotation::from_yaw(0.3), Vector3::new(1.0, 1.0, 1.0));
        let s = SmootherState::new(c, SmootherParams::default())
            .on_optimization_event(c, Timestamp(5.0));
        for i in 0..50 {
            let out = s.smoothed_correction(Timestamp(5.0 + i as f64 * 0.3));
            assert!((out.translation - c.translation).norm() < 1e-15);
            assert!(out.rotation.angle_to(&c.rotation) < 1e-12);
        }
    }

    #[test]
    fn second_event_mid_window_is_continuous() {
        let s = step_state();
        let t = Timestamp(2.0);
        let before = s.smoothed_correction(t);
        let s2 = s.on_optimization_event(Pose::from_translation(0.0, 0.0, -2.0), t);
        assert_eq!(s2.correction_old, before);
        let after = s2.smoothed_correction(t);
        let a0 = alpha(0.0, &s.params);
        // The jump at the second event is bounded by (1 - alpha(0)) of the
        // distance between the current output and the new target.
        let bound = (1.0 - a0) * (before.translation.z + 2.0) + 1e-12;
        assert!((after.translation.z - before.translation.z).abs() <= bound);
    }

    #[test]
    fn rotation_blends_with_same_weight() {
        let s = SmootherState::new(Pose::identity(), SmootherParams::default())
            .on_optimization_event(Pose::from_rotation(Rotation::from_yaw(1.0)), Timestamp(0.0));
        let out = s.smoothed_correction(Timestamp(3.0));
        assert!((out.rotation.yaw() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn antipodal_event_snaps() {
        let s = SmootherState::new(Pose::identity(), SmootherParams::default())
            .on_optimization_event(
                Pose::from_rotation(Rotation::from_yaw(std::f64::consts::PI)),
                Timestamp(0.0),
            );
        assert!(!s.active);
        assert_eq!(s.smoothed_correction(Timestamp(0.0)), s.correction_new);
    }

    #[test]
    fn shared_smoother_readers_see_whole_states() {
        let shared = std::sync::Arc::new(SharedSmoother::new(SmootherState::new(
            Pose::identity(),
            SmootherParams::default(),
        )));
        let reader = {
            let shared = shared.clone();
            std::thread::spawn(move || {
                for _ in 0..2000 {
                    let s = shared.snapshot();
                    // Inactive snapshots must have matching endpoints.
                    if !s.active {
                        assert_eq!(s.correction_old, s.correction_new);
                    }
                }
            })
        };
        for i in 0..200 {
            shared.on_optimization_event(
                Pose::from_translation(0.0, 0.0, i as f64),
                Timestamp(i as f64),
            );
        }
        reader.join().unwrap();
        assert_eq!(shared.snapshot().event_time, Timestamp(199.0));
    }
}
