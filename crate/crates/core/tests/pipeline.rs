//! Trains a few tiny runs and checks the analyses end to end, including
//! that analyses of a reloaded run match the in-memory run.

use std::sync::OnceLock;

use mass_core::analysis::{
    activation_strip, correlation_cluster, distill_table, pca_agreement, reference_curve,
    theory_census, ActivationMatrix,
};
use mass_core::physics::{PhasePoint, SystemId};
use mass_core::sim::{rk4_rollout, MassField};
use mass_core::store::{load_run, save_run};
use mass_core::train::{sweep, RunRecord, TrainConfig};

fn config() -> TrainConfig {
    TrainConfig {
        steps_per_phase: 150,
        batch: 64,
        eval_samples: 128,
        analysis_samples: 96,
        width: 10,
        hidden: 2,
        // Loose enough that every seed counts as correct.
        loss_threshold: 1e300,
        curriculum: vec![SystemId::Sho, SystemId::Relativistic],
        ..TrainConfig::default()
    }
}

fn runs() -> &'static [RunRecord] {
    static RUNS: OnceLock<Vec<RunRecord>> = OnceLock::new();
    RUNS.get_or_init(|| {
        sweep(&config(), &[0, 1, 2])
            .unwrap()
            .into_iter()
            .map(|e| e.result.unwrap())
            .collect()
    })
}

#[test]
fn correlation_matrix_is_a_correlation_matrix() {
    let acts = ActivationMatrix::from_run(&runs()[0], 0, SystemId::Sho).unwrap();
    assert_eq!(acts.rows, 96);
    let c = correlation_cluster(&acts, 0.99).unwrap();
    let n = c.len();
    assert!(n >= 1);
    for i in 0..n {
        assert_eq!(c.corr_at(i, i), 1.0);
        for j in 0..n {
            assert!((c.corr_at(i, j) - c.corr_at(j, i)).abs() < 1e-12);
            assert!(c.corr_at(i, j).abs() <= 1.0 + 1e-12);
        }
    }
    let mut cols = c.columns.clone();
    cols.sort_unstable();
    cols.dedup();
    assert_eq!(cols.len(), n, "leaf order is a permutation");
}

#[test]
fn cross_seed_tables_are_consistent() {
    let runs = runs();
    let a = pca_agreement(runs, 1, SystemId::Relativistic).unwrap();
    assert_eq!(a.seeds.len() + a.excluded.len(), 3);
    for i in 0..a.seeds.len() {
        assert!((a.corr_at(i, i) - 1.0).abs() < 1e-12);
    }
    let s = activation_strip(runs, 0, SystemId::Sho).unwrap();
    assert_eq!(s.seeds, vec![0, 1, 2]);
    assert_eq!(s.values.len(), 3 * s.cols);

    let census = theory_census(runs).unwrap();
    assert_eq!(census.fractions.len(), 2);
    assert_eq!(census.fractions[1].system, SystemId::Relativistic);
    for f in &census.fractions {
        assert_eq!(f.correct_seeds, 3);
        assert!(f.hamiltonian + f.lagrangian <= 1.0 + 1e-12);
    }
    let curve = reference_curve(runs).unwrap();
    assert_eq!(curve.len(), 2);
    assert!(curve.iter().all(|p| p.r2_lagrangian.0.is_finite() && p.r2_hamiltonian.0.is_finite()));

    let t = distill_table(runs, 1, SystemId::Relativistic, 3).unwrap();
    assert_eq!(t.rows.len() + t.skipped.len(), 3);
    assert!(t.rows.iter().all(|r| r.controls.len() == 3));
    let rate = t.control_failure_rate();
    assert!((0.0..=1.0).contains(&rate));
}

#[test]
fn reloaded_runs_give_identical_analyses() {
    let dir = tempfile::tempdir().unwrap();
    let mut back = Vec::new();
    for r in runs() {
        let p = save_run(r, dir.path().join(format!("seed_{}", r.seed))).unwrap();
        back.push(load_run(p).unwrap());
    }
    assert_eq!(theory_census(runs()).unwrap(), theory_census(&back).unwrap());
    assert_eq!(reference_curve(runs()).unwrap(), reference_curve(&back).unwrap());
    assert_eq!(
        distill_table(runs(), 1, SystemId::Relativistic, 2).unwrap(),
        distill_table(&back, 1, SystemId::Relativistic, 2).unwrap()
    );
}

#[test]
fn learned_rollouts_are_deterministic() {
    let rec = &runs()[1].phases[1];
    let net = rec.net(SystemId::Sho).unwrap();
    let start = PhasePoint::new(vec![0.8], vec![0.0]);
    let spec = SystemId::Sho.spec();
    let roll = || {
        let mut f = MassField::new(net, &rec.head);
        rk4_rollout(f.as_fn(), &start, 0.05, 200, Some(&spec)).unwrap()
    };
    let (a, b) = (roll(), roll());
    assert_eq!(a.states, b.states);
    assert_eq!(a.energies, b.energies);
}
