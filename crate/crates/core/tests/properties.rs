use dqmotion::algebra::{DualQuaternion, Point3, Quaternion, RigidTransform};
use dqmotion::metrics::{mse, prediction_gain};
use dqmotion::seqmodels::{decode_pose, encode_pose, PoseFrame, NUM_JOINTS};
use proptest::prelude::*;

fn point(r: f64) -> impl Strategy<Value = Point3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn quat() -> impl Strategy<Value = Quaternion> {
    (-3.0..3.0, -3.0..3.0, -3.0..3.0, -3.0..3.0).prop_map(|(w, x, y, z)| Quaternion::new(w, x, y, z))
}

fn motion() -> impl Strategy<Value = DualQuaternion> {
    (point(1.0), 0.0..std::f64::consts::TAU, point(20.0)).prop_filter_map("degenerate axis", |(a, theta, d)| {
        let n = a.norm();
        (n > 1e-3).then(|| {
            let rotation = Quaternion::from_axis_angle(a.scale(1.0 / n), theta).unwrap();
            DualQuaternion::from_rigid(&RigidTransform { rotation, translation: d }).unwrap()
        })
    })
}

fn frame() -> impl Strategy<Value = PoseFrame> {
    (point(5.0), prop::collection::vec(point(5.0), NUM_JOINTS)).prop_map(|(center, js)| {
        let mut joints = [Point3::ZERO; NUM_JOINTS];
        joints.copy_from_slice(&js);
        PoseFrame { center, joints }
    })
}

proptest! {
    #[test]
    fn quaternion_norm_is_multiplicative(a in quat(), b in quat()) {
        let lhs = (a * b).norm();
        prop_assert!((lhs - a.norm() * b.norm()).abs() <= 1e-12 * (1.0 + lhs));
    }

    #[test]
    fn unit_products_stay_unit(g in motion(), f in motion()) {
        prop_assert!((g * f).is_unit());
    }

    #[test]
    fn composition_matches_sequential_application(g in motion(), f in motion(), p in point(10.0)) {
        let lhs = (g * f).transform_point(p).unwrap();
        let rhs = g.transform_point(f.transform_point(p).unwrap()).unwrap();
        prop_assert!(lhs.distance(rhs) < 1e-9);
    }

    #[test]
    fn conjugate_undoes_the_motion(g in motion(), p in point(10.0)) {
        let back = g.conj().transform_point(g.transform_point(p).unwrap()).unwrap();
        prop_assert!(back.distance(p) < 1e-10);
    }

    #[test]
    fn rigid_motions_preserve_distances(g in motion(), p in point(10.0), q in point(10.0)) {
        let (gp, gq) = (g.transform_point(p).unwrap(), g.transform_point(q).unwrap());
        prop_assert!((gp.distance(gq) - p.distance(q)).abs() < 1e-9);
    }

    #[test]
    fn pose_encoding_round_trips_and_splits_translation(f in frame(), d in point(10.0)) {
        let back = decode_pose(&encode_pose(&f));
        prop_assert!(back.center.distance(f.center) < 1e-12);
        let a = encode_pose(&f);
        let b = encode_pose(&f.translated(d));
        for (x, y) in a.entries.iter().zip(&b.entries) {
            prop_assert!(((y.primal.vector() - x.primal.vector()) - d).norm() < 1e-9);
            prop_assert!(y.dual.vector().distance(x.dual.vector()) < 1e-9);
        }
    }

    #[test]
    fn mse_and_gain_ignore_a_shared_rigid_motion(
        g in motion(),
        truth in prop::collection::vec(point(5.0), 4..20),
        noise in prop::collection::vec(point(0.5), 20),
    ) {
        let pred: Vec<Point3> = truth.iter().zip(&noise).map(|(t, n)| *t + *n).collect();
        let mv = |v: &[Point3]| v.iter().map(|p| g.transform_point(*p).unwrap()).collect::<Vec<_>>();
        let (tp, tt) = (mv(&pred), mv(&truth));
        prop_assert!((mse(&pred, &truth).unwrap() - mse(&tp, &tt).unwrap()).abs() < 1e-9);
        let err = |p: &[Point3], t: &[Point3]| p.iter().zip(t).map(|(a, b)| *a - *b).collect::<Vec<_>>();
        let g0 = prediction_gain(&truth, &err(&pred, &truth));
        let g1 = prediction_gain(&tt, &err(&tp, &tt));
        if let (Ok(a), Ok(b)) = (g0, g1) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}
