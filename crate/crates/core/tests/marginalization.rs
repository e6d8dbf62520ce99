//! Marginalization against closed forms on problems that are exactly linear
//! in the error coordinates: separate-tag states whose rotations never move,
//! tied together by Gaussian priors.

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viswf::linalg::min_eigenvalue;
use viswf::sim::ScenarioConfig;
use viswf::solver::{Context, Factor, Prior, Window, WindowConfig};
use viswf::state::{ImuState, Parameterization, SlamState, StateId};
use viswf::{ExtendedPose, Rotation};

fn ctx() -> Context {
    let c = ScenarioConfig::default();
    Context {
        gravity: c.gravity,
        rig: c.rig,
        noise: c.noise,
    }
}

fn vec3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-s..s))
}

/// Identity rotation, random everything else.
fn random_state(rng: &mut ChaCha8Rng) -> ImuState {
    let (b, a) = (vec3(rng, 0.1), vec3(rng, 0.1));
    ImuState::new(
        Parameterization::Separate,
        ExtendedPose::new(Rotation::identity(), vec3(rng, 2.0), vec3(rng, 5.0)),
        Vector6::new(b.x, b.y, b.z, a.x, a.y, a.z),
    )
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

/// Information over `states` 15-blocks: identity on the rotation rows (which
/// stay at zero error), `core` spread over the remaining 12 rows of each.
fn embed(core: &DMatrix<f64>, states: usize) -> DMatrix<f64> {
    let n = 15 * states;
    let mut info = DMatrix::zeros(n, n);
    let idx: Vec<usize> = (0..states).flat_map(|s| (3..15).map(move |k| 15 * s + k)).collect();
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            info[(a, b)] = core[(i, j)];
        }
    }
    for s in 0..states {
        for k in 0..3 {
            info[(15 * s + k, 15 * s + k)] = 1.0;
        }
    }
    info
}

fn offset(rng: &mut ChaCha8Rng, states: usize) -> DVector<f64> {
    DVector::from_fn(15 * states, |i, _| if i % 15 < 3 { 0.0 } else { rng.random_range(-0.5..0.5) })
}

fn unary(rng: &mut ChaCha8Rng, id: StateId) -> Factor {
    let mut point = SlamState::new(Parameterization::Separate);
    point.insert_imu(id, random_state(rng)).unwrap();
    Factor::Prior(Prior {
        info: embed(&random_spd(rng, 12), 1),
        offset: offset(rng, 1),
        point,
    })
}

/// Relative constraint: information `[B −B; −B B]` plus a weak absolute part.
fn between(rng: &mut ChaCha8Rng, a: StateId, b: StateId) -> Factor {
    let mut point = SlamState::new(Parameterization::Separate);
    point.insert_imu(a, random_state(rng)).unwrap();
    point.insert_imu(b, random_state(rng)).unwrap();
    let blk = random_spd(rng, 12);
    let mut core = DMatrix::zeros(24, 24);
    core.view_mut((0, 0), (12, 12)).copy_from(&blk);
    core.view_mut((12, 12), (12, 12)).copy_from(&blk);
    core.view_mut((0, 12), (12, 12)).copy_from(&-&blk);
    core.view_mut((12, 0), (12, 12)).copy_from(&-&blk);
    core += DMatrix::identity(24, 24) * 0.01;
    Factor::Prior(Prior {
        info: embed(&core, 2),
        offset: offset(rng, 2),
        point,
    })
}

fn window_of(states: &[(StateId, ImuState)], factors: &[Factor]) -> Window {
    let mut s = SlamState::new(Parameterization::Separate);
    for (id, x) in states {
        s.insert_imu(*id, *x).unwrap();
    }
    let mut w = Window::new(s, WindowConfig::default(), ctx());
    w.factors = factors.to_vec();
    w
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

#[test]
fn schur_prior_equals_gaussian_marginal_on_two_state_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let (s0, s1) = (StateId(0), StateId(1));
        let factors = vec![unary(&mut rng, s0), between(&mut rng, s0, s1)];
        let mut w = window_of(&[(s0, random_state(&mut rng)), (s1, random_state(&mut rng))], &factors);
        w.gauss_newton().unwrap();

        let joint = w.normal_equations_at(&w.state.clone()).unwrap().lambda;
        let sigma = joint.clone().try_inverse().unwrap();
        let marginal = sigma.view((15, 15), (15, 15)).into_owned();

        let prior = w.marginalize(&[s0]).unwrap();
        let cov = prior.info.clone().try_inverse().unwrap();
        assert!(rel(&cov, &marginal) <= 1e-10, "{:e}", rel(&cov, &marginal));
        // At the joint optimum the prior is centred on the retained estimate.
        let mean = prior.mean().unwrap();
        assert!(mean.eta(&w.state).unwrap().amax() < 1e-9);
    }
}

#[test]
fn sliding_window_matches_receding_horizon_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..5 {
        let ids: Vec<StateId> = (0..4).map(StateId).collect();
        let init: Vec<(StateId, ImuState)> = ids.iter().map(|&i| (i, random_state(&mut rng))).collect();
        let mut factors = vec![unary(&mut rng, ids[0])];
        for k in 0..3 {
            factors.push(between(&mut rng, ids[k], ids[k + 1]));
        }

        let mut sliding = window_of(&init[..2], &factors[..2]);
        for k in 1..4 {
            if k > 1 {
                sliding.marginalize(&[ids[k - 2]]).unwrap();
                sliding.state.insert_imu(ids[k], init[k].1).unwrap();
                sliding.factors.push(factors[k].clone());
            }
            let sol = sliding.gauss_newton().unwrap();

            // Every factor up to state k, solved jointly.
            let mut batch = window_of(&init[..=k], &factors[..=k]);
            let full = batch.gauss_newton().unwrap();

            let diff = sol.state.imu_state(ids[k]).unwrap().eta(full.state.imu_state(ids[k]).unwrap()).unwrap();
            assert!(diff.amax() <= 1e-8, "state {k}: {:e}", diff.amax());
            let (a, b) = (sol.state_covariance(ids[k]).unwrap(), full.state_covariance(ids[k]).unwrap());
            assert!(rel(&a, &b) <= 1e-8, "cov {k}: {:e}", rel(&a, &b));
            assert!(min_eigenvalue(&a) > 0.0);
        }
    }
}

#[test]
fn marginalizing_an_unknown_state_fails() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut w = window_of(&[(StateId(0), random_state(&mut rng))], &[unary(&mut rng, StateId(0))]);
    assert!(w.marginalize(&[StateId(9)]).is_err());
}
