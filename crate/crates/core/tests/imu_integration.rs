use nalgebra::{Vector3, Vector6};
use proptest::prelude::*;
use viswf::imu::{
    direct_error, preint_error, propagate_one_step, propagate_recursive, propagate_with_jacobians, rmi_integrate,
    rmi_predicted, ImuMeasurement, NoiseParams,
};
use viswf::linalg::min_eigenvalue;
use viswf::state::{ImuState, Parameterization};
use viswf::{ExtendedPose, Rotation};

fn g() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.81)
}

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-r..r).prop_map(|a| Vector3::new(a[0], a[1], a[2]))
}

fn param() -> impl Strategy<Value = Parameterization> {
    prop_oneof![Just(Parameterization::Separate), Just(Parameterization::Grouped)]
}

fn state() -> impl Strategy<Value = ImuState> {
    (param(), vec3(3.0), vec3(3.0), vec3(10.0), vec3(0.05), vec3(0.2)).prop_map(|(p, phi, v, r, bg, ba)| {
        ImuState::new(
            p,
            ExtendedPose::new(Rotation::exp(&phi), v, r),
            Vector6::new(bg.x, bg.y, bg.z, ba.x, ba.y, ba.z),
        )
    })
}

fn samples() -> impl Strategy<Value = Vec<ImuMeasurement>> {
    (prop::collection::vec((vec3(1.5), vec3(4.0)), 1..40), 0.001..0.02f64).prop_map(|(raw, dt)| {
        raw.into_iter()
            .enumerate()
            .map(|(k, (w, a))| ImuMeasurement {
                gyro: w,
                accel: a + Vector3::new(0.0, 0.0, 9.81),
                stamp: k as f64 * dt,
                dt,
            })
            .collect()
    })
}

fn noise() -> NoiseParams {
    NoiseParams::isotropic(0.01, 0.02, 0.001, 0.002, 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn measured_increment_equals_predicted_on_noise_free_data(x in state(), seq in samples()) {
        let x_j = propagate_recursive(&x, &seq, &g()).unwrap();
        let dt: f64 = seq.iter().map(|u| u.dt).sum();
        let measured = rmi_integrate(&seq, &x.bias, x.param, &NoiseParams::zero()).unwrap();
        let predicted = rmi_predicted(&x, &x_j, dt, &g());
        let scale = 1.0 + predicted.delta.to_matrix().amax();
        prop_assert!((measured.delta.to_matrix() - predicted.delta.to_matrix()).amax() <= 1e-9 * scale);
        prop_assert!(predicted.delta_b.amax() == 0.0);
    }

    #[test]
    fn recursive_propagation_is_repeated_one_step(x in state(), seq in samples()) {
        let stepped = seq.iter().fold(x, |s, u| propagate_one_step(&s, u, u.dt, &g()).unwrap());
        let rec = propagate_recursive(&x, &seq, &g()).unwrap();
        prop_assert!(rec.eta(&stepped).unwrap().amax() < 1e-12);
    }

    #[test]
    fn errors_vanish_at_the_propagated_state(x in state(), seq in samples(), approx in any::<bool>()) {
        let x_j = propagate_recursive(&x, &seq, &g()).unwrap();
        let d = direct_error(&x, &x_j, &seq, &g(), &noise(), approx).unwrap();
        prop_assert!(d.value.amax() < 1e-9);
        let rmi = rmi_integrate(&seq, &x.bias, x.param, &noise()).unwrap();
        let p = preint_error(&x, &x_j, &rmi, &g(), approx).unwrap();
        prop_assert!(p.value.amax() < 1e-9);
    }

    #[test]
    fn propagated_covariances_are_positive_semidefinite(x in state(), seq in samples()) {
        let (_, _, cov) = propagate_with_jacobians(&x, &seq, &g(), &noise()).unwrap();
        let d = nalgebra::DMatrix::from_column_slice(15, 15, cov.as_slice());
        prop_assert!((cov - cov.transpose()).amax() <= 1e-12 * cov.amax());
        // One sample injects no noise straight into position: semi-definite only.
        prop_assert!(min_eigenvalue(&d) >= -1e-12 * d.amax());
        let rmi = rmi_integrate(&seq, &x.bias, x.param, &noise()).unwrap();
        let d = nalgebra::DMatrix::from_column_slice(15, 15, rmi.cov.as_slice());
        prop_assert!(min_eigenvalue(&d) >= -1e-12 * d.amax());
    }

    #[test]
    fn separate_and_grouped_propagate_the_same_motion(x in state(), seq in samples()) {
        let a = propagate_recursive(&x.with_param(Parameterization::Separate), &seq, &g()).unwrap();
        let b = propagate_recursive(&x.with_param(Parameterization::Grouped), &seq, &g()).unwrap();
        prop_assert!((a.pose.to_matrix() - b.pose.to_matrix()).amax() < 1e-12 * (1.0 + a.pose.to_matrix().amax()));
    }
}

#[test]
fn empty_and_nonpositive_steps_are_rejected() {
    let x = ImuState::new(Parameterization::Grouped, ExtendedPose::identity(), Vector6::zeros());
    assert!(rmi_integrate(&[], &x.bias, x.param, &noise()).is_err());
    assert!(propagate_with_jacobians(&x, &[], &g(), &noise()).is_err());
    let u = ImuMeasurement {
        gyro: Vector3::zeros(),
        accel: Vector3::zeros(),
        stamp: 0.0,
        dt: 0.0,
    };
    assert!(propagate_one_step(&x, &u, 0.0, &g()).is_err());
}

#[test]
fn free_fall_from_rest() {
    // Zero specific force: the body falls under gravity.
    let x = ImuState::new(Parameterization::Grouped, ExtendedPose::identity(), Vector6::zeros());
    let u = ImuMeasurement {
        gyro: Vector3::zeros(),
        accel: Vector3::zeros(),
        stamp: 0.0,
        dt: 0.01,
    };
    let y = propagate_recursive(&x, &vec![u; 100], &g()).unwrap();
    assert!((y.velocity() - g()).amax() < 1e-12);
    assert!((y.position() - g() * 0.5).amax() < 1e-12);
}
