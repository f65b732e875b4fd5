use anyhow::{Context as _, Result};
use mass_core::physics::{sample_batch, SystemId};
use mass_core::seed::derived_rng;

use crate::config::parse_systems;
use crate::exit::usage;
use crate::output::write;
use crate::{Context, GenerateArgs};

pub fn run(ctx: &mut Context, args: GenerateArgs) -> Result<()> {
    let g = &mut ctx.config.generate;
    if !args.systems.is_empty() {
        g.systems = parse_systems(&args.systems)?;
    }
    if let Some(n) = args.samples {
        g.samples = n;
    }
    if let Some(s) = args.seed {
        g.seed = s;
    }
    if g.samples == 0 {
        return Err(usage("samples must be at least 1"));
    }
    let systems = if g.systems.is_empty() {
        SystemId::ALL.to_vec()
    } else {
        g.systems.clone()
    };
    let dir = ctx.out.join("data");
    for sys in systems {
        let mut rng = derived_rng(g.seed, "generate", sys.index() as u64);
        let batch = sample_batch(&sys.spec(), g.samples, &mut rng).with_context(|| format!("sampling {sys}"))?;
        let path = dir.join(format!("{sys}_seed{}_n{}.csv", g.seed, g.samples));
        write(&path, &batch.to_csv())?;
        println!("{}", path.display());
    }
    Ok(())
}
