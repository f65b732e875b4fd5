use std::fmt::Write as _;
use std::fs;

use anyhow::{Context as _, Result};
use log::warn;
use mass_core::plot::{line_chart, Series};
use mass_core::store::{list_runs, run_dir_name, save_run};
use mass_core::train::{self, RunRecord, SweepSummary};

use crate::config::{parse_range, parse_systems};
use crate::exit::usage;
use crate::output::{write, Outputs};
use crate::{Context, SweepArgs};

fn apply_flags(ctx: &mut Context, args: &SweepArgs) -> Result<()> {
    let c = &mut ctx.config;
    if let Some(s) = &args.seeds {
        c.seeds = Some(s.clone());
        c.seed_range = None;
    }
    if let Some(r) = &args.seed_range {
        c.seed_range = Some(parse_range(r)?);
        c.seeds = None;
    }
    if !args.curriculum.is_empty() {
        c.train.curriculum = parse_systems(&args.curriculum)?;
    }
    if let Some(n) = args.steps {
        c.train.steps_per_phase = n;
    }
    if let Some(n) = args.batch {
        c.train.batch = n;
    }
    if let Some(n) = &args.name {
        c.name = Some(n.clone());
    }
    Ok(())
}

/// The resolved config as a file that `--config` accepts again.
fn resolved_toml(ctx: &Context, seeds: &[u64]) -> Result<String> {
    let mut c = ctx.config.clone();
    c.seeds = Some(seeds.to_vec());
    c.seed_range = None;
    c.output = None;
    c.jobs = None;
    let mut table = toml::Table::try_from(&c).context("serializing config")?;
    if let Some(t) = table.get_mut("train").and_then(|t| t.as_table_mut()) {
        t.remove("seeds");
    }
    Ok(toml::to_string(&table).context("serializing config")?)
}

fn per_seed_csv(runs: &[RunRecord]) -> String {
    let mut out = String::from("seed,phase,systems,correct,consistently_correct,failed_at,max_eval_mse\n");
    for r in runs {
        for p in &r.phases {
            let systems: Vec<&str> = p.systems().iter().map(|s| s.name()).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{:e}",
                r.seed,
                p.phase,
                systems.join("+"),
                p.correct,
                p.consistently_correct,
                p.metrics.failed_at.map(|s| s.to_string()).unwrap_or_default(),
                p.metrics.max_eval_mse()
            )
            .expect("write to string");
        }
    }
    out
}

pub fn summary_figures(out: &mut Outputs, summary: &SweepSummary) -> Result<()> {
    let x: Vec<f64> = summary.phases.iter().map(|p| (p.phase + 1) as f64).collect();
    out.svg("correct", || {
        line_chart(
            "Fraction of seeds correct per phase",
            "systems learned",
            "fraction",
            &[
                Series {
                    label: "correct".into(),
                    x: x.clone(),
                    y: summary.phases.iter().map(|p| p.frac_correct).collect(),
                    ..Series::default()
                },
                Series {
                    label: "consistently correct".into(),
                    x: x.clone(),
                    y: summary.phases.iter().map(|p| p.frac_consistently_correct).collect(),
                    dashed: true,
                    ..Series::default()
                },
            ],
            false,
        )
    })?;
    out.svg("significant", || {
        line_chart(
            "Mean significant terms per phase",
            "systems learned",
            "terms",
            &[
                Series {
                    label: "99%".into(),
                    x: x.clone(),
                    y: summary.phases.iter().map(|p| p.mean_significant_99).collect(),
                    ..Series::default()
                },
                Series {
                    label: "95%".into(),
                    x: x.clone(),
                    y: summary.phases.iter().map(|p| p.mean_significant_95).collect(),
                    dashed: true,
                    ..Series::default()
                },
            ],
            false,
        )
    })
}

pub fn run(ctx: &mut Context, args: SweepArgs) -> Result<()> {
    apply_flags(ctx, &args)?;
    let cfg = ctx.config.train_config()?;
    let name = ctx.config.name.clone().unwrap_or_else(|| "sweep".into());
    if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(usage(format!("bad sweep name `{name}`")));
    }
    let dir = ctx.out.join("sweeps").join(&name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let wanted: Vec<String> = cfg.seeds.iter().map(|s| run_dir_name(*s)).collect();
    for stale in list_runs(&dir)? {
        let n = stale.file_name().unwrap_or_default().to_string_lossy().to_string();
        if !wanted.contains(&n) {
            warn!("{} holds a run outside this seed list; analyze will include it", stale.display());
        }
    }

    log::info!("training {} seeds on {:?}", cfg.seeds.len(), cfg.curriculum);
    let entries = train::sweep(&cfg, &cfg.seeds)?;
    let mut runs = Vec::new();
    let mut failures = String::from("seed,error\n");
    for e in entries {
        match e.result {
            Ok(rec) => {
                save_run(&rec, dir.join(run_dir_name(e.seed)))?;
                runs.push(rec);
            }
            Err(msg) => {
                warn!("seed {} failed: {msg}", e.seed);
                writeln!(failures, "{},\"{}\"", e.seed, msg.replace('"', "'")).expect("write to string");
            }
        }
    }

    write(&dir.join("config.toml"), &resolved_toml(ctx, &cfg.seeds)?)?;
    let summary = SweepSummary::from_records(&runs);
    let mut out = Outputs::new(dir.clone(), ctx.plots);
    out.csv("summary", &summary.to_csv())?;
    out.csv("seeds", &per_seed_csv(&runs))?;
    out.csv("failures", &failures)?;
    summary_figures(&mut out, &summary)?;

    println!("sweep {} ({} of {} seeds trained)", dir.display(), runs.len(), cfg.seeds.len());
    print!("{}", summary.to_csv());
    Ok(())
}
