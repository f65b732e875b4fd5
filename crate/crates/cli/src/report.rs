use std::fmt::Write as _;
use std::fs;

use anyhow::Result;
use mass_core::train::SweepSummary;

use crate::analyze::load_sweep;
use crate::output::write;
use crate::{Context, ReportArgs};

/// CSV as a Markdown table.
fn table(csv: &str) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        writeln!(out, "| {} |", cells.join(" | ")).expect("write to string");
        if i == 0 {
            writeln!(out, "|{}", "---|".repeat(cells.len())).expect("write to string");
        }
    }
    out
}

pub fn run(ctx: &Context, args: ReportArgs) -> Result<()> {
    let dir = ctx.sweep_dir(&args.sweep);
    let runs = load_sweep(&dir)?;
    let summary = SweepSummary::from_records(&runs);
    let mut md = String::new();
    writeln!(md, "# Sweep {}\n", dir.file_name().unwrap_or_default().to_string_lossy()).expect("write");
    writeln!(md, "{} runs.\n\n## Phases\n", runs.len()).expect("write");
    md.push_str(&table(&summary.to_csv()));

    md.push_str("\n## Seeds\n\n| seed | correct by phase | consistently correct at end | revival |\n|---|---|---|---|\n");
    for r in &runs {
        let flags: String = r.correct_flags().iter().map(|c| if *c { 'Y' } else { '.' }).collect();
        let consistent = r.last_phase().is_some_and(|p| p.consistently_correct);
        writeln!(md, "| {} | `{flags}` | {consistent} | {} |", r.seed, r.has_revival()).expect("write");
    }
    let revivals = runs.iter().filter(|r| r.has_revival()).count();
    writeln!(md, "\nSeeds with a revival: {revivals}.").expect("write");

    let analysis = dir.join("analysis");
    if analysis.is_dir() {
        let mut files: Vec<_> = fs::read_dir(&analysis)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        files.sort();
        let tables = ["theory_fraction_", "reference_", "pca_summary_", "strip_summary_", "distill_summary_"];
        for f in &files {
            let name = f.file_name().unwrap_or_default().to_string_lossy().to_string();
            if name.ends_with(".csv") && tables.iter().any(|t| name.starts_with(t)) {
                writeln!(md, "\n## {}\n", name.trim_end_matches(".csv")).expect("write");
                md.push_str(&table(&fs::read_to_string(f)?));
            }
        }
        let figures: Vec<String> = files
            .iter()
            .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().to_string()))
            .filter(|n| n.ends_with(".svg"))
            .collect();
        if !figures.is_empty() {
            md.push_str("\n## Figures\n\n");
            for f in figures {
                writeln!(md, "- [{f}](analysis/{f})").expect("write");
            }
        }
    } else {
        md.push_str("\nNo analysis outputs yet; run `mass analyze` first.\n");
    }
    write(&dir.join("report.md"), &md)?;
    print!("{md}");
    Ok(())
}
