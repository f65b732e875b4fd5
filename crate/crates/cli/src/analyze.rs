use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context as _, Result};
use log::warn;
use mass_core::analysis::{
    activation_strip, correlation_cluster, distill_table, newest_system, pca_agreement,
    reference_curve, reference_curve_csv, theory_census, ActivationMatrix,
};
use mass_core::model::TermCatalog;
use mass_core::physics::SystemId;
use mass_core::plot::{heatmap, line_chart, Series};
use mass_core::store::{list_runs, load_run};
use mass_core::train::RunRecord;
use mass_core::MassError;

use crate::config::resolve_analyses;
use crate::exit::{exit_code, usage, NUMERICAL};
use crate::output::{seed_set_tag, thin, Outputs};
use crate::{AnalyzeArgs, Context};

const DEFAULT_CONTROLS: usize = 5;

/// Every run of a sweep, in seed order.
pub fn load_sweep(dir: &Path) -> Result<Vec<RunRecord>> {
    if !dir.is_dir() {
        return Err(MassError::NotARunRecord(dir.to_path_buf()))
            .with_context(|| format!("{} is not a sweep directory", dir.display()));
    }
    let mut runs = Vec::new();
    for p in list_runs(dir)? {
        runs.push(load_run(&p).with_context(|| format!("loading {}", p.display()))?);
    }
    if runs.is_empty() {
        return Err(MassError::NoRuns).with_context(|| format!("sweep {}", dir.display()));
    }
    Ok(runs)
}

/// Numerical trouble in one item is logged and skipped; anything else
/// (missing artifacts, I/O) aborts.
fn soft<T>(what: &str, r: mass_core::Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) => {
            let e = anyhow::Error::from(e);
            if exit_code(&e) == NUMERICAL {
                warn!("{what}: skipped ({e})");
                Ok(None)
            } else {
                Err(e.context(what.to_string()))
            }
        }
    }
}

fn correct_at(runs: &[RunRecord], phase: usize) -> Vec<RunRecord> {
    runs.iter()
        .filter(|r| r.phases.get(phase).is_some_and(|p| p.correct))
        .cloned()
        .collect()
}

/// `(phase, systems)` of the longest curriculum in the sweep.
fn phases(runs: &[RunRecord]) -> Vec<(usize, Vec<SystemId>)> {
    let longest = runs.iter().max_by_key(|r| r.phases.len()).expect("nonempty sweep");
    longest
        .phases
        .iter()
        .map(|p| (p.phase, p.systems().to_vec()))
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| x.is_finite());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn significance(out: &mut Outputs, runs: &[RunRecord], tag: &str, points: usize) -> Result<()> {
    let mut csv = String::from("seed,phase,step,significant\n");
    for r in runs {
        for p in &r.phases {
            for (step, c) in p.metrics.significant_trace.iter().enumerate() {
                writeln!(csv, "{},{},{step},{c}", r.seed, p.phase).expect("write to string");
            }
        }
    }
    out.csv(&format!("significance_{tag}"), &csv)?;
    let mut series = Vec::new();
    let mut offset = 0usize;
    for (phase, systems) in phases(runs) {
        let traces: Vec<&Vec<usize>> = runs
            .iter()
            .filter_map(|r| r.phases.get(phase))
            .map(|p| &p.metrics.significant_trace)
            .collect();
        let len = traces.iter().map(|t| t.len()).min().unwrap_or(0);
        let idx = thin(len, points);
        series.push(Series {
            label: format!("+{}", systems.last().expect("phase has a system")),
            x: idx.iter().map(|i| (offset + i) as f64).collect(),
            y: idx
                .iter()
                .map(|i| traces.iter().map(|t| t[*i] as f64).sum::<f64>() / traces.len() as f64)
                .collect(),
            ..Series::default()
        });
        offset += len;
    }
    out.svg(&format!("significance_{tag}"), || {
        line_chart("Significant head weights (seed mean)", "step", "terms", &series, false)
    })
}

fn correlation(out: &mut Outputs, run: &RunRecord, names: &[String]) -> Result<()> {
    for p in &run.phases {
        for &sys in p.systems() {
            let what = format!("correlation seed {} phase {} {sys}", run.seed, p.phase);
            let Some(acts) = soft(&what, ActivationMatrix::from_run(run, p.phase, sys))? else {
                continue;
            };
            let Some(c) = soft(&what, correlation_cluster(&acts, 0.99))? else {
                continue;
            };
            for w in &c.warnings {
                warn!("{what}: {w:?}");
            }
            let labels: Vec<String> = c.columns.iter().map(|i| names[*i].clone()).collect();
            let mut csv = format!("term,{}\n", labels.join(","));
            for (i, l) in labels.iter().enumerate() {
                let row: Vec<String> = (0..c.len()).map(|j| c.corr_at(i, j).to_string()).collect();
                writeln!(csv, "{l},{}", row.join(",")).expect("write to string");
            }
            let name = format!("correlation_{sys}_p{}_seed{}", p.phase, run.seed);
            out.csv(&name, &csv)?;
            out.svg(&name, || {
                heatmap(
                    &format!("Activation correlation, {sys}, phase {}, seed {}", p.phase, run.seed),
                    &labels,
                    &labels,
                    &c.corr,
                    -1.0,
                    1.0,
                )
            })?;
        }
    }
    Ok(())
}

fn strips(out: &mut Outputs, runs: &[RunRecord], tag: &str, names: &[String]) -> Result<()> {
    let mut summary = String::from("phase,system,seeds,mean_jaccard,min_jaccard\n");
    for (phase, systems) in phases(runs) {
        let ok = correct_at(runs, phase);
        for sys in systems {
            let what = format!("strip phase {phase} {sys}");
            if ok.len() < 2 {
                warn!("{what}: fewer than two correct seeds");
                continue;
            }
            let Some(s) = soft(&what, activation_strip(&ok, phase, sys))? else {
                continue;
            };
            let mut csv = format!("seed,{}\n", names.join(","));
            for (i, seed) in s.seeds.iter().enumerate() {
                let row: Vec<String> = s.row(i).iter().map(|v| format!("{v:e}")).collect();
                writeln!(csv, "{seed},{}", row.join(",")).expect("write to string");
            }
            let name = format!("strip_{sys}_p{phase}_{tag}");
            out.csv(&name, &csv)?;
            let rows: Vec<String> = s.seeds.iter().map(|s| format!("seed {s}")).collect();
            let hi = s.values.iter().copied().fold(0.0, f64::max);
            out.svg(&name, || {
                heatmap(&format!("Mean |activation|, {sys}, phase {phase}"), &rows, names, &s.values, -hi, hi)
            })?;
            let j = s.pairwise_jaccard(0.99)?;
            let mean = j.iter().sum::<f64>() / j.len().max(1) as f64;
            let min = j.iter().copied().fold(f64::INFINITY, f64::min);
            writeln!(summary, "{phase},{sys},{},{mean},{min}", s.seeds.len()).expect("write to string");
        }
    }
    out.csv(&format!("strip_summary_{tag}"), &summary)
}

fn pca(out: &mut Outputs, runs: &[RunRecord], tag: &str) -> Result<()> {
    let mut summary = String::from("phase,system,seeds,excluded,frac_explained_above_0.8,median_abs_cross_corr\n");
    for (phase, systems) in phases(runs) {
        let ok = correct_at(runs, phase);
        for sys in systems {
            let what = format!("pca phase {phase} {sys}");
            if ok.is_empty() {
                warn!("{what}: no correct seeds");
                continue;
            }
            let Some(a) = soft(&what, pca_agreement(&ok, phase, sys))? else {
                continue;
            };
            for (seed, why) in &a.excluded {
                warn!("{what}: seed {seed} excluded ({why})");
            }
            let n = a.seeds.len();
            let mut csv = String::from("seed,explained_first\n");
            for (s, e) in a.seeds.iter().zip(&a.explained_first) {
                writeln!(csv, "{s},{e}").expect("write to string");
            }
            out.csv(&format!("pca_{sys}_p{phase}_{tag}"), &csv)?;
            let mut proj = format!(
                "sample,{}\n",
                a.seeds.iter().map(|s| format!("seed{s}")).collect::<Vec<_>>().join(",")
            );
            let len = a.projections.first().map_or(0, Vec::len);
            for i in 0..len {
                let row: Vec<String> = a.projections.iter().map(|p| format!("{:e}", p[i])).collect();
                writeln!(proj, "{i},{}", row.join(",")).expect("write to string");
            }
            out.csv(&format!("pca_projections_{sys}_p{phase}_{tag}"), &proj)?;
            let labels: Vec<String> = a.seeds.iter().map(|s| format!("seed {s}")).collect();
            out.svg(&format!("pca_{sys}_p{phase}_{tag}"), || {
                heatmap(
                    &format!("First-PC projection correlation, {sys}, phase {phase}"),
                    &labels,
                    &labels,
                    &a.cross_corr,
                    -1.0,
                    1.0,
                )
            })?;
            let above = a.explained_first.iter().filter(|e| **e > 0.8).count() as f64 / n.max(1) as f64;
            writeln!(
                summary,
                "{phase},{sys},{n},{},{above},{}",
                a.excluded.len(),
                median(a.pairwise_abs())
            )
            .expect("write to string");
        }
    }
    out.csv(&format!("pca_summary_{tag}"), &summary)
}

fn theory(out: &mut Outputs, runs: &[RunRecord], tag: &str) -> Result<()> {
    let c = theory_census(runs)?;
    out.csv(&format!("theory_{tag}"), &c.rows_csv())?;
    out.csv(&format!("theory_fraction_{tag}"), &c.fractions_csv())?;
    let x: Vec<f64> = c.fractions.iter().map(|f| (f.phase + 1) as f64).collect();
    out.svg(&format!("theory_fraction_{tag}"), || {
        line_chart(
            "Theory labels among correct seeds",
            "systems learned",
            "fraction",
            &[
                Series {
                    label: "hamiltonian".into(),
                    x: x.clone(),
                    y: c.fractions.iter().map(|f| f.hamiltonian).collect(),
                    ..Series::default()
                },
                Series {
                    label: "lagrangian".into(),
                    x: x.clone(),
                    y: c.fractions.iter().map(|f| f.lagrangian).collect(),
                    dashed: true,
                    ..Series::default()
                },
            ],
            false,
        )
    })?;
    print!("{}", c.fractions_csv());
    Ok(())
}

fn reference(out: &mut Outputs, runs: &[RunRecord], tag: &str) -> Result<()> {
    let pts = reference_curve(runs)?;
    out.csv(&format!("reference_{tag}"), &reference_curve_csv(&pts))?;
    let x: Vec<f64> = pts.iter().map(|p| (p.phase + 1) as f64).collect();
    out.svg(&format!("reference_{tag}"), || {
        line_chart(
            "Reference-fit R² (mean ± sd over correct seeds)",
            "systems learned",
            "R²",
            &[
                Series {
                    label: "lagrangian".into(),
                    x: x.clone(),
                    y: pts.iter().map(|p| p.r2_lagrangian.0).collect(),
                    err: Some(pts.iter().map(|p| p.r2_lagrangian.1).collect()),
                    ..Series::default()
                },
                Series {
                    label: "hamiltonian".into(),
                    x: x.clone(),
                    y: pts.iter().map(|p| p.r2_hamiltonian.0).collect(),
                    err: Some(pts.iter().map(|p| p.r2_hamiltonian.1).collect()),
                    dashed: true,
                },
            ],
            false,
        )
    })?;
    print!("{}", reference_curve_csv(&pts));
    Ok(())
}

fn distill(out: &mut Outputs, runs: &[RunRecord], tag: &str, controls: usize) -> Result<()> {
    let mut summary = String::from(
        "phase,system,seeds,skipped,mean_r2_train,mean_r2_test,mean_r2_reference_l,mean_r2_reference_h,control_failure_rate\n",
    );
    for (phase, _) in phases(runs) {
        let Some(sys) = runs.iter().find_map(|r| newest_system(r, phase)) else {
            continue;
        };
        if sys.dim() != 1 {
            continue;
        }
        let t = distill_table(runs, phase, sys, controls)?;
        for (seed, why) in &t.skipped {
            warn!("distill phase {phase} {sys}: seed {seed} skipped ({why})");
        }
        out.csv(&format!("distill_{sys}_p{phase}_{tag}"), &t.to_csv())?;
        let (rl, rh) = t.mean_reference();
        writeln!(
            summary,
            "{phase},{sys},{},{},{},{},{rl},{rh},{}",
            t.rows.len(),
            t.skipped.len(),
            t.mean_r2_train(),
            t.mean_r2_test(),
            t.control_failure_rate()
        )
        .expect("write to string");
    }
    out.csv(&format!("distill_summary_{tag}"), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn run(ctx: &mut Context, args: AnalyzeArgs) -> Result<()> {
    if !args.analyses.is_empty() {
        ctx.config.analyses = args.analyses.clone();
    }
    let analyses = resolve_analyses(&ctx.config.analyses)?;
    let controls = args.controls.or(ctx.config.controls).unwrap_or(DEFAULT_CONTROLS);
    let dir = ctx.sweep_dir(&args.sweep);
    let runs = load_sweep(&dir)?;
    let seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    let tag = seed_set_tag(&seeds);
    let single = match args.seed {
        Some(s) => runs
            .iter()
            .find(|r| r.seed == s)
            .ok_or_else(|| usage(format!("seed {s} is not in the sweep (have {seeds:?})")))?,
        None => &runs[0],
    };
    let names = TermCatalog::standard().names();
    let mut out = Outputs::new(dir.join("analysis"), ctx.plots);
    for a in analyses {
        log::info!("analysis {a}");
        match a {
            "significance" => significance(&mut out, &runs, &tag, ctx.config.plots.trace_points)?,
            "correlation" => correlation(&mut out, single, &names)?,
            "strip" => strips(&mut out, &runs, &tag, &names)?,
            "pca" => pca(&mut out, &runs, &tag)?,
            "theory" => theory(&mut out, &runs, &tag)?,
            "reference" => reference(&mut out, &runs, &tag)?,
            "distill" => distill(&mut out, &runs, &tag, controls)?,
            _ => unreachable!("resolved analysis names"),
        }
    }
    println!("{} files in {}", out.written.len(), out.dir.display());
    Ok(())
}
