use mass_core::physics::{euler_lagrange_accel, sample_batch, PhasePoint, SystemId};
use mass_core::seed::derived_rng;
use mass_core::sim::{analytic_field, energy_drift, rk4_rollout};

const ORACLE_SYSTEMS: [SystemId; 6] = [
    SystemId::Sho,
    SystemId::Pendulum,
    SystemId::Kepler,
    SystemId::Relativistic,
    SystemId::Alpha,
    SystemId::Beta,
];

#[test]
fn euler_lagrange_matches_hand_force_laws() {
    for sys in [SystemId::Sho, SystemId::Pendulum, SystemId::Kepler] {
        let spec = sys.spec();
        let b = sample_batch(&spec, 200, &mut derived_rng(11, "physics-test", sys.index() as u64)).unwrap();
        for i in 0..b.len() {
            let el = euler_lagrange_accel(&spec, b.x_row(i), b.y_row(i)).unwrap();
            let hand = b.ydot_row(i);
            let err = (el[0] - hand[0]).abs() / hand[0].abs().max(1.0);
            assert!(err < 1e-10, "{sys} at {:?}: {} vs {}", b.x_row(i), el[0], hand[0]);
        }
    }
}

#[test]
fn fine_rk4_conserves_energy() {
    for sys in ORACLE_SYSTEMS.into_iter().chain([SystemId::DoublePendulum]) {
        let spec = sys.spec();
        let (x, y) = spec.default_initial_condition();
        let traj = rk4_rollout(analytic_field(&spec), &PhasePoint::new(x, y), 1e-3, 10_000, Some(&spec)).unwrap();
        assert_eq!(traj.blowup, None, "{sys}");
        let e = traj.energies.as_ref().unwrap();
        let scale = e[0].abs().max(1e-12);
        let worst = e.iter().map(|v| (v - e[0]).abs() / scale).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{sys}: relative energy error {worst:e}");
        let d = energy_drift(&traj, 100);
        assert!(d.drift < 1e-7, "{sys}: drift {:e}", d.drift);
    }
}

#[test]
fn relativistic_speed_stays_subluminal() {
    let spec = SystemId::Relativistic.spec();
    let traj = rk4_rollout(
        analytic_field(&spec),
        &PhasePoint::new(vec![3.0], vec![0.0]),
        1e-2,
        5_000,
        Some(&spec),
    )
    .unwrap();
    assert_eq!(traj.blowup, None);
    assert!((0..traj.len()).all(|k| traj.y(k)[0].abs() < 1.0));
}

#[test]
fn sampled_batches_are_reproducible() {
    for sys in SystemId::ALL {
        let spec = sys.spec();
        let a = sample_batch(&spec, 64, &mut derived_rng(5, "physics-test", 0)).unwrap();
        let b = sample_batch(&spec, 64, &mut derived_rng(5, "physics-test", 0)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv(), "{sys}");
    }
}
