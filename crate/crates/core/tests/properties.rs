use flightgraph::geodesy::{EnuFrame, GeoPoint};
use flightgraph::graph::{gps_weighted_cost, huber_loss, GpsWeighting, WeightingMode};
use flightgraph::mapping::{OccupancyOctree, OctreeParams, SubmapCloud};
use flightgraph::smoothing::{alpha, SmootherParams, SmootherState};
use flightgraph::{Pose, Rotation, Timestamp};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Rotation> {
    (vec3(1.0), 0.0..std::f64::consts::PI).prop_map(|(axis, angle)| {
        let axis = if axis.norm() < 1e-3 { Vector3::z() } else { axis };
        Rotation::from_axis_angle(axis, angle)
    })
}

fn pose() -> impl Strategy<Value = Pose> {
    (rotation(), vec3(50.0)).prop_map(|(r, t)| Pose::new(r, t))
}

fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
    (a.translation - b.translation).norm() < tol && a.rotation.angle_to(&b.rotation) < tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn composition_is_associative(a in pose(), b in pose(), c in pose()) {
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        prop_assert!(close(&left, &right, 1e-9));
    }

    #[test]
    fn inverse_cancels(a in pose()) {
        prop_assert!(close(&a.compose(&a.inverse()), &Pose::identity(), 1e-9));
        prop_assert!(close(&a.inverse().compose(&a), &Pose::identity(), 1e-9));
    }

    #[test]
    fn quaternions_stay_canonical(a in rotation(), b in rotation()) {
        let q = a.compose(&b);
        prop_assert!(q.w() >= 0.0);
        let n = (q.w() * q.w() + q.x() * q.x() + q.y() * q.y() + q.z() * q.z()).sqrt();
        prop_assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slerp_moves_proportionally(a in rotation(), b in rotation(), u in 0.0..1.0f64) {
        let total = a.angle_to(&b);
        if let Ok(q) = a.slerp(&b, u) {
            prop_assert!((a.angle_to(&q) - u * total).abs() < 1e-9);
            prop_assert!((q.angle_to(&b) - (1.0 - u) * total).abs() < 1e-9);
        }
    }

    #[test]
    fn isotropic_cost_is_rotation_invariant(r in vec3(10.0), q in rotation(), s in vec3(1.0)) {
        let sigma = s.map(|v| v.abs() + 0.01);
        let w = GpsWeighting { mode: WeightingMode::IsotropicMax, ..Default::default() };
        let before = gps_weighted_cost(&r, &sigma, &w).norm();
        let after = gps_weighted_cost(&q.rotate(&r), &sigma, &w).norm();
        prop_assert!((before - after).abs() <= 1e-12 * before.max(1.0));
    }

    #[test]
    fn affine_with_unit_a_matches_inverse_diagonal(r in vec3(10.0), s in vec3(1.0)) {
        let sigma = s.map(|v| v.abs() + 0.01);
        let affine = GpsWeighting { mode: WeightingMode::Affine, a: 1.0, b: 0.0, ..Default::default() };
        let inv = GpsWeighting { mode: WeightingMode::InverseDiagonal, ..Default::default() };
        let d = gps_weighted_cost(&r, &sigma, &affine) - gps_weighted_cost(&r, &sigma, &inv);
        prop_assert!(d.amax() <= 1e-12);
    }

    #[test]
    fn huber_is_below_squared_and_monotone(r in 0.0..10.0f64, dr in 0.0..1.0f64, delta in 0.1..5.0f64) {
        let (rho, _) = huber_loss(r * r, delta);
        let (rho2, _) = huber_loss((r + dr) * (r + dr), delta);
        prop_assert!(rho <= r * r + 1e-12);
        prop_assert!(rho2 >= rho);
    }

    #[test]
    fn alpha_decreases_within_unit_interval(t in 0.0..30.0f64, dt in 1e-3..5.0f64) {
        let p = SmootherParams::default();
        let (a, b) = (alpha(t, &p), alpha(t + dt, &p));
        prop_assert!(a > 0.0 && a < 1.0);
        prop_assert!(b < a);
    }

    #[test]
    fn smoothing_starts_at_old_and_ends_at_new(old in pose(), new in pose(), t0 in 0.0..100.0f64) {
        let s = SmootherState::new(old, SmootherParams::default())
            .on_optimization_event(new, Timestamp(t0));
        let late = s.smoothed_correction(Timestamp(t0 + 60.0));
        prop_assert!(close(&late, &new, 1e-6));
    }

    #[test]
    fn enu_round_trip(lat in -80.0..80.0f64, lon in -179.0..179.0f64, e in vec3(5000.0)) {
        let frame = EnuFrame::new(GeoPoint::new(lat, lon, 100.0).unwrap());
        let back = frame.enu_of(&frame.geodetic_of(&e));
        prop_assert!((back - e).norm() < 1e-6);
    }

    #[test]
    fn prune_preserves_queries(points in prop::collection::vec(vec3(4.0), 1..60), probes in prop::collection::vec(vec3(5.0), 50)) {
        let mut tree = OccupancyOctree::new(OctreeParams { resolution: 0.5, ..Default::default() });
        tree.insert_cloud(&SubmapCloud { submap_id: 0, points }, &Vector3::zeros());
        tree.update_box(&Vector3::new(-2.0, -2.0, -2.0), &Vector3::new(0.0, 0.0, 0.0), true);
        let before: Vec<_> = probes.iter().map(|p| tree.query(p)).collect();
        tree.prune();
        let after: Vec<_> = probes.iter().map(|p| tree.query(p)).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn binary_round_trip(points in prop::collection::vec(vec3(6.0), 1..80)) {
        let params = OctreeParams { resolution: 0.3, ..Default::default() };
        let mut tree = OccupancyOctree::new(params);
        tree.insert_cloud(&SubmapCloud { submap_id: 0, points }, &Vector3::new(0.1, 0.2, 0.3));
        tree.prune();
        let back = OccupancyOctree::from_bytes(&tree.to_bytes(), params).unwrap();
        prop_assert_eq!(back.to_bytes(), tree.to_bytes());
    }

    #[test]
    fn hit_only_insertion_ignores_order(clouds in prop::collection::vec(prop::collection::vec(vec3(3.0), 1..20), 2..8), seed in any::<u64>()) {
        let params = OctreeParams { resolution: 0.25, carve_free_space: false, ..Default::default() };
        let clouds: Vec<SubmapCloud> = clouds.into_iter().enumerate()
            .map(|(i, points)| SubmapCloud { submap_id: i, points }).collect();
        let build = |order: &[SubmapCloud]| {
            let mut t = OccupancyOctree::new(params);
            for c in order {
                t.insert_cloud(c, &Vector3::zeros());
            }
            t.prune();
            t.to_bytes()
        };
        let reference = build(&clouds);
        let mut shuffled = clouds.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(build(&shuffled), reference);
    }
}
