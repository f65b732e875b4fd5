use anyhow::{Context as _, Result};
use mass_core::physics::{PhasePoint, SystemId};
use mass_core::plot::{line_chart, Series};
use mass_core::sim::{analytic_field, energy_drift, rk4_rollout, MassField, Trajectory};
use mass_core::store::{load_run, run_dir_name};

use crate::exit::{numerical, usage};
use crate::output::Outputs;
use crate::{Context, Field, SimulateArgs};

const DRIFT_WINDOW: usize = 100;

fn position_series(traj: &Trajectory, label: &str, dashed: bool) -> Vec<Series> {
    (0..traj.dim)
        .map(|i| Series {
            label: format!("{label} x{i}"),
            x: traj.times.clone(),
            y: (0..traj.len()).map(|k| traj.x(k)[i]).collect(),
            dashed,
            ..Series::default()
        })
        .collect()
}

pub fn run(ctx: &Context, args: SimulateArgs) -> Result<()> {
    let sys: SystemId = args.system.parse().map_err(|e: mass_core::MassError| usage(e.to_string()))?;
    if !(args.dt > 0.0 && args.dt.is_finite()) {
        return Err(usage(format!("--dt must be positive, got {}", args.dt)));
    }
    if args.steps == 0 {
        return Err(usage("--steps must be at least 1"));
    }
    let field = args
        .field
        .unwrap_or(if args.run.is_some() { Field::Mass } else { Field::Analytic });
    if field == Field::Mass && args.run.is_none() {
        return Err(usage("--field mass needs --run"));
    }
    let spec = sys.spec();
    let (x0, y0) = spec.default_initial_condition();
    let x = args.x.clone().unwrap_or(x0);
    let y = args.y.clone().unwrap_or(y0);
    if x.len() != sys.dim() || y.len() != sys.dim() {
        return Err(usage(format!(
            "{sys} needs {} position and {} velocity values",
            sys.dim(),
            sys.dim()
        )));
    }
    spec.check_domain(&x, &y)?;
    let start = PhasePoint::new(x, y);

    let reference = rk4_rollout(analytic_field(&spec), &start, args.dt, args.steps, Some(&spec))?;
    let (traj, stem) = match field {
        Field::Analytic => (reference.clone(), format!("{sys}_analytic")),
        Field::Mass => {
            let dir = args.run.as_ref().expect("checked above");
            let run = load_run(dir).with_context(|| format!("loading {}", dir.display()))?;
            let phase = match args.phase {
                Some(p) => p,
                None => run
                    .phases
                    .iter()
                    .rev()
                    .find(|p| p.systems().contains(&sys))
                    .map(|p| p.phase)
                    .ok_or_else(|| usage(format!("run {} never trained on {sys}", run.seed)))?,
            };
            let rec = run.phase(phase)?;
            let net = rec.net(sys)?;
            let mut mf = MassField::new(net, &rec.head);
            let traj = rk4_rollout(mf.as_fn(), &start, args.dt, args.steps, Some(&spec))?;
            (traj, format!("{sys}_mass_{}_p{phase}", run_dir_name(run.seed)))
        }
    };

    let mut out = Outputs::new(ctx.out.join("sim"), ctx.plots);
    out.csv(&stem, &traj.to_csv())?;
    let mut series = position_series(&traj, if field == Field::Mass { "mass" } else { "analytic" }, false);
    if field == Field::Mass {
        series.extend(position_series(&reference, "analytic", true));
    }
    out.svg(&stem, || {
        line_chart(&format!("{sys} rollout, dt = {}", args.dt), "t", "x", &series, false)
    })?;
    if let Some(e) = &traj.energies {
        let energy = vec![Series {
            label: "energy".into(),
            x: traj.times.clone(),
            y: e.clone(),
            ..Series::default()
        }];
        out.svg(&format!("{stem}_energy"), || {
            line_chart(&format!("{sys} energy"), "t", "E", &energy, false)
        })?;
    }

    let drift = energy_drift(&traj, DRIFT_WINDOW);
    let kind = if drift.absolute { "absolute" } else { "relative" };
    println!(
        "{}: {} steps, energy drift per {DRIFT_WINDOW} steps {:e} ({kind}, {} windows)",
        out.dir.join(format!("{stem}.csv")).display(),
        traj.len() - 1,
        drift.drift,
        drift.windows
    );
    if let Some(k) = traj.blowup {
        return Err(numerical(format!("rollout blew up at step {k} of {}", args.steps)));
    }
    Ok(())
}
