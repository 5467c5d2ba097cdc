use glove_teleop::grasp::{build_grasp_matrix, force_decompose, select_interaction_forces, Contact, Wrench};
use glove_teleop::hand::HandProfile;
use glove_teleop::plant::quantize;
use glove_teleop::predictor::{lstm_forward, make_windows, LstmParams};
use glove_teleop::se3::{pseudoinverse, rodrigues_exp, rotation_log, screw_between_poses, Pose};
use glove_teleop::signal::{best_lag, decimate};
use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-range..range).prop_map(Vector3::from)
}

fn rotation_vector() -> impl Strategy<Value = Vector3<f64>> {
    (vec3(1.0), 1e-6..std::f64::consts::PI - 1e-3).prop_filter_map("direction", |(d, angle)| {
        let n = d.norm();
        (n > 1e-3).then(|| d / n * angle)
    })
}

fn matrix(max_dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(m, n)| {
        prop::collection::vec(-10.0..10.0f64, m * n).prop_map(move |v| DMatrix::from_vec(m, n, v))
    })
}

/// Three contacts spread around a sphere-like object, normals pointing inward.
fn three_contacts() -> impl Strategy<Value = Vec<Contact>> {
    (0.0..std::f64::consts::TAU, 0.5..1.5f64, 0.5..1.5f64, -0.3..0.3f64).prop_map(|(a0, d1, d2, lift)| {
        [a0, a0 + 1.5 + 0.2 * d1, a0 + 3.5 + 0.2 * d2]
            .iter()
            .map(|a| {
                let r = Vector3::new(0.03 * a.cos(), 0.03 * a.sin(), 0.01 * (lift + a.sin() * 0.3));
                Contact::new(r, -r.normalize()).unwrap()
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn log_inverts_exp(v in rotation_vector()) {
        let back = rotation_log(&rodrigues_exp(&v)).unwrap();
        prop_assert!((back - v).norm() <= 1e-9);
    }

    #[test]
    fn exp_is_a_rotation(v in vec3(10.0)) {
        let r = rodrigues_exp(&v);
        prop_assert!((r.transpose() * r - nalgebra::Matrix3::identity()).amax() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pose_inverse_composes_to_identity(rv in rotation_vector(), p in vec3(1.0)) {
        let pose = Pose::new(rodrigues_exp(&rv), p);
        let id = pose.compose(&pose.inverse());
        prop_assert!((id.rotation - nalgebra::Matrix3::identity()).amax() < 1e-12);
        prop_assert!(id.origin.amax() < 1e-12);
    }

    #[test]
    fn screw_between_poses_reaches_the_target(rv in rotation_vector(), p in vec3(0.5), dt in 0.1..5.0f64) {
        let from = Pose::new(rodrigues_exp(&Vector3::new(0.1, -0.2, 0.3)), Vector3::new(0.01, 0.0, 0.02));
        let to = Pose::new(rodrigues_exp(&rv) * from.rotation, p);
        let tw = screw_between_poses(&from, &to, dt).unwrap();
        let reached = rodrigues_exp(&(tw.angular * dt)) * from.rotation;
        prop_assert!((reached - to.rotation).amax() < 1e-9);
    }

    #[test]
    fn pseudoinverse_satisfies_penrose(a in matrix(7)) {
        let p = pseudoinverse(&a);
        let scale = a.norm().max(1e-12);
        let ap = &a * &p;
        let pa = &p * &a;
        prop_assert!((&ap * &a - &a).norm() <= 1e-9 * scale);
        prop_assert!((&pa * &p - &p).norm() <= 1e-9 * p.norm().max(1e-12));
        prop_assert!((&ap - ap.transpose()).norm() <= 1e-9 * ap.norm().max(1.0));
        prop_assert!((&pa - pa.transpose()).norm() <= 1e-9 * pa.norm().max(1.0));
    }

    #[test]
    fn interaction_forces_stay_in_the_null_space(contacts in three_contacts(), f in vec3(2.0), m in vec3(0.05), f_min in 0.1..3.0f64) {
        let g = build_grasp_matrix(&contacts).unwrap();
        let wrench = Wrench::new(f, m);
        let base = force_decompose(&g, &wrench);
        prop_assert_eq!(base.null_basis.len(), 3);
        let sol = select_interaction_forces(&base, &contacts, f_min).unwrap();
        let net = g.wrench(&sol.total_stacked()).to_vector() - wrench.to_vector();
        prop_assert!(net.norm() <= 1e-9 * (1.0 + wrench.to_vector().norm()));
        prop_assert!((&g.g * sol.interaction_stacked()).norm() <= 1e-9 * (1.0 + sol.interaction_stacked().norm()));
    }

    #[test]
    fn clamping_is_idempotent_and_in_range(raw in prop::collection::vec(-4.0..4.0f64, 16)) {
        let hand = HandProfile::allegro_like();
        let q = DVector::from_vec(raw);
        let once = hand.clamp_to_limits(&q);
        prop_assert_eq!(hand.clamp_to_limits(&once), once.clone());
        for (v, (lo, hi)) in once.iter().zip(hand.joint_limits_rad()) {
            prop_assert!(*v >= lo && *v <= hi);
        }
    }

    #[test]
    fn quantization_error_is_at_most_half_a_step(raw in prop::collection::vec(-3.0..3.0f64, 1..20), res in 1e-4..0.1f64) {
        let q = DVector::from_vec(raw);
        let err = (quantize(&q, res) - &q).amax();
        prop_assert!(err <= 0.5 * res * (1.0 + 1e-12));
    }

    #[test]
    fn windows_overlap_by_one_sample(len in 12usize..80, r in 1usize..8, m in 1usize..5) {
        let series: Vec<f64> = (0..len).map(|i| i as f64 * 0.5).collect();
        let ds = make_windows(&series, r, m).unwrap();
        prop_assert_eq!(ds.len(), len - r - m + 1);
        for i in 0..ds.len() {
            prop_assert_eq!(ds.window(i), &series[i..i + r]);
            prop_assert_eq!(ds.target(i), series[i + r - 1 + m]);
            if i + 1 < ds.len() {
                prop_assert_eq!(&ds.window(i)[1..], &ds.window(i + 1)[..r - 1]);
            }
        }
    }

    #[test]
    fn lstm_gates_stay_bounded(seed in 0u64..1000, window in prop::collection::vec(-1e3..1e3f64, 1..25)) {
        let params = LstmParams::init(6, seed);
        let (y, cache) = lstm_forward(&params, &window).unwrap();
        prop_assert!(y.is_finite());
        for t in 0..window.len() {
            let (g, i, f, o) = cache.gates_at(t);
            prop_assert!(g.iter().all(|v| v.abs() <= 1.0));
            for gate in [i, f, o] {
                prop_assert!(gate.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
        prop_assert!(cache.hidden_state().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn lstm_forward_is_deterministic(seed in 0u64..1000, window in prop::collection::vec(-5.0..5.0f64, 1..20)) {
        let a = lstm_forward(&LstmParams::init(8, seed), &window).unwrap().0;
        let b = lstm_forward(&LstmParams::init(8, seed), &window).unwrap().0;
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn decimation_keeps_every_kth_sample(len in 0usize..200, k in 1usize..20) {
        let v: Vec<usize> = (0..len).collect();
        let d = decimate(&v, k);
        prop_assert_eq!(d.len(), len.div_ceil(k));
        prop_assert!(d.iter().enumerate().all(|(i, &x)| x == i * k));
    }

    #[test]
    fn best_lag_recovers_a_pure_delay(delay in -8i64..=8, phase in 0.0..6.0f64) {
        let f = |t: f64| (0.13 * t + phase).sin() + 0.5 * (0.31 * t).cos();
        let reference: Vec<f64> = (0..300).map(|i| f(i as f64)).collect();
        let delayed: Vec<f64> = (0..300).map(|i| f(i as f64 - delay as f64)).collect();
        prop_assert_eq!(best_lag(&reference, &delayed, 20).unwrap(), delay);
    }
}
