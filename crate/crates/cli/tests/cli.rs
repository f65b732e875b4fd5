use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mass_core::physics::SystemId;
use mass_core::store::save_run;
use mass_core::train::{run_curriculum, TrainConfig};

fn mass(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mass"))
        .current_dir(dir)
        .env_remove("MASS_OUT")
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .expect("spawn mass")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"
name = "tiny"
seed_range = [0, 5]
[train]
steps_per_phase = 20
batch = 16
eval_samples = 32
analysis_samples = 32
width = 8
hidden = 2
curriculum = ["sho"]
"#;

#[test]
fn generate_writes_identical_csvs() {
    let t = tempfile::tempdir().unwrap();
    let o = mass(t.path(), &["generate", "--systems", "sho", "-n", "512", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let f = t.path().join("mass_out/data/sho_seed3_n512.csv");
    let first = fs::read(&f).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 513);
    mass(t.path(), &["generate", "--systems", "sho", "-n", "512", "--seed", "3"]);
    assert_eq!(fs::read(&f).unwrap(), first);
}

#[test]
fn bad_system_name_lists_valid_ids() {
    let t = tempfile::tempdir().unwrap();
    let o = mass(t.path(), &["generate", "--systems", "sho,harmonica"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("double_pendulum"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&mass(t.path(), &["frobnicate"])), 1);
    assert_eq!(code(&mass(t.path(), &["--help"])), 0);
    fs::write(t.path().join("bad.toml"), "[train]\nlearning_rate = 0.1\n").unwrap();
    let o = mass(t.path(), &["-c", "bad.toml", "sweep"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
    fs::write(t.path().join("empty.toml"), "seeds = []\n").unwrap();
    assert_eq!(code(&mass(t.path(), &["-c", "empty.toml", "sweep"])), 1);
    assert_eq!(code(&mass(t.path(), &["sweep", "--seed-range", "3..3"])), 1);
    assert_eq!(code(&mass(t.path(), &["simulate", "--system", "sho", "--dt", "0"])), 1);
    assert_eq!(code(&mass(t.path(), &["simulate", "--system", "sho", "--dt", "-0.1"])), 1);
}

#[test]
fn sweep_is_reproducible_and_honours_mass_out() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("tiny.toml"), TINY).unwrap();
    let root = t.path().join("elsewhere");
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_mass"))
            .current_dir(t.path())
            .env("MASS_OUT", &root)
            .args(["-c", "tiny.toml", "sweep"])
            .output()
            .unwrap()
    };
    let o = run();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = root.join("sweeps/tiny");
    for s in 0..5 {
        assert!(dir.join(format!("seed_{s:06}/manifest.txt")).is_file());
    }
    assert!(!t.path().join("mass_out").exists());
    let summary = fs::read(dir.join("summary.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&summary).lines().count(), 2);
    let manifest = fs::read(dir.join("seed_000003/manifest.txt")).unwrap();
    let config = fs::read(dir.join("config.toml")).unwrap();
    assert_eq!(code(&run()), 0);
    assert_eq!(fs::read(dir.join("summary.csv")).unwrap(), summary);
    assert_eq!(fs::read(dir.join("seed_000003/manifest.txt")).unwrap(), manifest);
    // The written config is itself a valid input.
    let again = mass(t.path(), &["-c", dir.join("config.toml").to_str().unwrap(), "--out", "o2", "sweep"]);
    assert_eq!(code(&again), 0, "{}", stderr(&again));
    assert_eq!(fs::read(t.path().join("o2/sweeps/tiny/config.toml")).unwrap(), config);
    assert_eq!(fs::read(t.path().join("o2/sweeps/tiny/summary.csv")).unwrap(), summary);
}

#[test]
fn theory_fractions_have_one_row_per_phase() {
    let t = tempfile::tempdir().unwrap();
    // A loose threshold marks every seed correct so the fractions are defined.
    let cfg = TINY.replace("curriculum = [\"sho\"]", "curriculum = [\"sho\", \"pendulum\"]\nloss_threshold = 1e9");
    fs::write(t.path().join("c.toml"), cfg).unwrap();
    assert_eq!(code(&mass(t.path(), &["-c", "c.toml", "sweep"])), 0);
    let o = mass(t.path(), &["analyze", "tiny", "--analyses", "theory,reference"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let analysis = t.path().join("mass_out/sweeps/tiny/analysis");
    let frac = fs::read_dir(&analysis)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("theory_fraction_") && p.extension().unwrap() == "csv")
        .expect("fraction table");
    let text = fs::read_to_string(frac).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for (k, r) in rows.iter().enumerate() {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[0], k.to_string());
        assert_eq!(f[2], "5");
        let (h, l): (f64, f64) = (f[3].parse().unwrap(), f[4].parse().unwrap());
        assert!(h >= 0.0 && l >= 0.0 && h + l <= 1.0 + 1e-12, "{r}");
    }
    let report = mass(t.path(), &["report", "tiny"]);
    assert_eq!(code(&report), 0);
    assert!(t.path().join("mass_out/sweeps/tiny/report.md").is_file());
}

#[test]
fn analyze_errors_are_data_errors() {
    let t = tempfile::tempdir().unwrap();
    fs::create_dir(t.path().join("empty")).unwrap();
    let o = mass(t.path(), &["analyze", "empty"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no runs"), "{}", stderr(&o));
    assert_eq!(code(&mass(t.path(), &["analyze", "empty", "--analyses", "vibes"])), 1);

    fs::write(t.path().join("tiny.toml"), TINY.replace("[0, 5]", "[0, 2]")).unwrap();
    assert_eq!(code(&mass(t.path(), &["-c", "tiny.toml", "sweep"])), 0);
    fs::remove_file(t.path().join("mass_out/sweeps/tiny/seed_000001/phase_000/terms_sho.f64")).unwrap();
    let o = mass(t.path(), &["analyze", "tiny"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("terms_sho.f64"), "{}", stderr(&o));
}

#[test]
fn analytic_sho_rollout_matches_cosine() {
    let t = tempfile::tempdir().unwrap();
    let o = mass(
        t.path(),
        &["simulate", "--system", "sho", "--x", "1", "--y", "0", "--dt", "0.01", "--steps", "629"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(t.path().join("mass_out/sim/sho_analytic.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x0,y0,E");
    let mut n = 0;
    for l in lines {
        let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[1] - v[0].cos()).abs() < 1e-4, "{l}");
        n += 1;
    }
    assert_eq!(n, 630);
    assert!(t.path().join("mass_out/sim/sho_analytic.svg").is_file());
}

#[test]
fn diverging_learned_field_reports_blowup() {
    let t = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        steps_per_phase: 5,
        batch: 8,
        eval_samples: 16,
        analysis_samples: 16,
        width: 6,
        hidden: 2,
        curriculum: vec![SystemId::Sho],
        ..TrainConfig::default()
    };
    let mut rec = run_curriculum(&cfg, 0).unwrap();
    for w in &mut rec.phases[0].head.ydot {
        *w *= 1e200;
    }
    let dir = t.path().join("broken");
    save_run(&rec, &dir).unwrap();
    let o = mass(t.path(), &["simulate", "--system", "sho", "--run", "broken", "--steps", "500"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("blew up at step"), "{}", stderr(&o));
    assert!(t.path().join("mass_out/sim/sho_mass_seed_000000_p0.csv").is_file());
}
