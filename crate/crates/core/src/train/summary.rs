use std::fmt::Write as _;

use super::record::RunRecord;
use crate::analysis::significant_count;

/// Cross-seed statistics of one phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSummary {
    pub phase: usize,
    pub systems: String,
    pub runs: usize,
    pub frac_correct: f64,
    pub frac_consistently_correct: f64,
    pub mean_significant_99: f64,
    pub mean_significant_95: f64,
}

/// Aggregate table of a sweep, one row per phase.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub phases: Vec<PhaseSummary>,
}

impl SweepSummary {
    /// Aggregates runs; independent of their order.
    pub fn from_records(runs: &[RunRecord]) -> SweepSummary {
        let n_phases = runs.iter().map(|r| r.phases.len()).max().unwrap_or(0);
        let mut phases = Vec::with_capacity(n_phases);
        for k in 0..n_phases {
            let recs: Vec<_> = runs.iter().filter_map(|r| r.phases.get(k)).collect();
            let n = recs.len() as f64;
            let frac = |f: &dyn Fn(&super::record::PhaseRecord) -> bool| {
                recs.iter().filter(|p| f(p)).count() as f64 / n
            };
            let mean_sig = |fraction: f64| {
                // Sum in a canonical order so the mean is order independent.
                let mut counts: Vec<usize> = recs
                    .iter()
                    .map(|p| significant_count(&p.head.ydot, fraction).unwrap_or(0))
                    .collect();
                counts.sort_unstable();
                counts.iter().sum::<usize>() as f64 / n
            };
            let systems = recs
                .first()
                .map(|p| {
                    p.systems()
                        .iter()
                        .map(|s| s.name())
                        .collect::<Vec<_>>()
                        .join("+")
                })
                .unwrap_or_default();
            phases.push(PhaseSummary {
                phase: k,
                systems,
                runs: recs.len(),
                frac_correct: frac(&|p| p.correct),
                frac_consistently_correct: frac(&|p| p.consistently_correct),
                mean_significant_99: mean_sig(0.99),
                mean_significant_95: mean_sig(0.95),
            });
        }
        SweepSummary { phases }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "phase,systems,runs,frac_correct,frac_consistently_correct,mean_significant_99,mean_significant_95\n",
        );
        for p in &self.phases {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.phase,
                p.systems,
                p.runs,
                p.frac_correct,
                p.frac_consistently_correct,
                p.mean_significant_99,
                p.mean_significant_95
            )
            .expect("write to string");
        }
        out
    }
}
