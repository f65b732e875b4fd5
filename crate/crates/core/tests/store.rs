use std::fs;

use mass_core::physics::SystemId;
use mass_core::store::{list_runs, load_run, manifest_hash, run_dir_name, save_run, sha256_hex};
use mass_core::train::{evaluate_mse, heldout_batch, run_curriculum, TrainConfig};
use mass_core::MassError;

fn tiny() -> TrainConfig {
    TrainConfig {
        batch: 16,
        steps_per_phase: 6,
        warmup: 2,
        eval_samples: 64,
        analysis_samples: 16,
        width: 6,
        hidden: 2,
        curriculum: vec![SystemId::Sho, SystemId::DoublePendulum],
        ..TrainConfig::default()
    }
}

#[test]
fn save_then_load_is_identity() {
    let rec = run_curriculum(&tiny(), 11).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let a = save_run(&rec, tmp.path().join("a")).unwrap();
    let b = save_run(&rec, tmp.path().join("b")).unwrap();
    assert_eq!(load_run(&a).unwrap(), rec);
    assert_eq!(manifest_hash(&a).unwrap(), manifest_hash(&b).unwrap());
    // Saving over an existing run replaces it.
    save_run(&rec, &a).unwrap();
    assert_eq!(load_run(&a).unwrap(), rec);
}

#[test]
fn reloaded_snapshot_reproduces_held_out_mse() {
    let rec = run_curriculum(&tiny(), 2).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let back = load_run(save_run(&rec, tmp.path().join("r")).unwrap()).unwrap();
    let last = back.last_phase().unwrap();
    for (i, sys) in last.systems().iter().enumerate() {
        let batch = heldout_batch(back.seed, *sys, back.config.eval_samples).unwrap();
        let mse = evaluate_mse(&last.nets[i], &last.head, &batch);
        assert!((mse - rec.last_phase().unwrap().metrics.eval_mse[i]).abs() <= 1e-9);
    }
}

#[test]
fn tampering_is_detected() {
    let rec = run_curriculum(&tiny(), 3).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dir = save_run(&rec, tmp.path().join("r")).unwrap();
    let file = dir.join("phase_001/net_double_pendulum.f64");
    let mut bytes = fs::read(&file).unwrap();
    bytes[10] ^= 1;
    fs::write(&file, bytes).unwrap();
    match load_run(&dir) {
        Err(MassError::HashMismatch { file }) => assert_eq!(file, "phase_001/net_double_pendulum.f64"),
        other => panic!("expected a hash mismatch, got {other:?}"),
    }
}

#[test]
fn missing_files_and_empty_dirs() {
    let rec = run_curriculum(&tiny(), 4).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dir = save_run(&rec, tmp.path().join("r")).unwrap();
    fs::remove_file(dir.join("phase_001/terms_sho.f64")).unwrap();
    match load_run(&dir) {
        Err(MassError::MissingArtifact { phase, artifact }) => {
            assert_eq!(phase, 1);
            assert!(artifact.contains("terms_sho"));
        }
        other => panic!("expected a missing artifact, got {other:?}"),
    }
    fs::remove_dir_all(dir.join("phase_001")).unwrap();
    assert!(matches!(load_run(&dir), Err(MassError::MissingArtifact { phase: 1, .. })));

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert!(matches!(load_run(&empty), Err(MassError::NotARunRecord(_))));
}

#[test]
fn foreign_catalog_is_rejected() {
    let rec = run_curriculum(&tiny(), 5).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dir = save_run(&rec, tmp.path().join("r")).unwrap();
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).unwrap();
    let edited = text.replace(&rec.catalog_hash, &"0".repeat(64));
    fs::write(&path, &edited).unwrap();
    assert!(matches!(load_run(&dir), Err(MassError::HashMismatch { .. })));
    // Re-signed, the manifest passes integrity checks but not compatibility.
    let body: String = edited.lines().filter(|l| !l.starts_with("manifest.sha256")).map(|l| format!("{l}\n")).collect();
    fs::write(&path, format!("{body}manifest.sha256 = {}\n", sha256_hex(body.as_bytes()))).unwrap();
    assert!(matches!(load_run(&dir), Err(MassError::IncompatibleRecord(_))));
}

#[test]
fn sweep_listing_is_seed_ordered() {
    let cfg = TrainConfig {
        curriculum: vec![SystemId::Sho],
        ..tiny()
    };
    let tmp = tempfile::tempdir().unwrap();
    for seed in [12, 3, 7] {
        save_run(&run_curriculum(&cfg, seed).unwrap(), tmp.path().join(run_dir_name(seed))).unwrap();
    }
    let seeds: Vec<u64> = list_runs(tmp.path())
        .unwrap()
        .iter()
        .map(|p| load_run(p).unwrap().seed)
        .collect();
    assert_eq!(seeds, vec![3, 7, 12]);
}
