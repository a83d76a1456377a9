//! Plot-data emitters. Each report is CSV; with more than one result every
//! row is prefixed by `scheduler,seed` so the output is long-format.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scheduler::Phase;
use crate::simulator::campaign::CampaignResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    Energy,
    Phases,
    Growth,
}

impl FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(ReportKind::Energy),
            "phases" => Ok(ReportKind::Phases),
            "growth" => Ok(ReportKind::Growth),
            other => Err(Error::Config(format!(
                "unknown report kind `{other}` (expected energy, phases or growth)"
            ))),
        }
    }
}

/// `rank,hits` over all targets, hits descending, ranks from 1.
pub fn energy_rows(result: &CampaignResult) -> Vec<(usize, u64)> {
    let mut hits: Vec<u64> = result.targets.iter().map(|t| t.hits).collect();
    hits.sort_unstable_by(|a, b| b.cmp(a));
    hits.into_iter().enumerate().map(|(i, h)| (i + 1, h)).collect()
}

/// Contiguous `(start, end, phase)` bands covering `[0, duration]`.
pub fn phase_bands(result: &CampaignResult) -> Vec<(u64, u64, Phase)> {
    let mut bands: Vec<(u64, u64, Phase)> = Vec::new();
    let mut current = result.timeline.first().map_or(Phase::InterExplore, |e| e.phase);
    let mut start = 0;
    for e in &result.timeline {
        if e.phase != current {
            bands.push((start, e.time, current));
            start = e.time;
            current = e.phase;
        }
    }
    bands.push((start, result.duration, current));
    bands
}

/// `(time, coverage, reached, triggered)` samples.
pub fn growth_rows(result: &CampaignResult) -> Vec<(u64, usize, usize, usize)> {
    result
        .series
        .iter()
        .map(|p| (p.time, p.coverage, p.reached, p.triggered))
        .collect()
}

/// The raw phase log: `virtual_time,phase,event`, one row per timeline entry.
pub fn timeline_csv(result: &CampaignResult) -> String {
    let mut out = String::from("virtual_time,phase,event\n");
    for e in &result.timeline {
        let _ = writeln!(out, "{},{},{}", e.time, e.phase, e.event.as_str());
    }
    out
}

pub fn render(kind: ReportKind, results: &[CampaignResult]) -> Result<String> {
    if results.is_empty() {
        return Err(Error::Config("report needs at least one result".into()));
    }
    let long = results.len() > 1;
    let header = match kind {
        ReportKind::Energy => "rank,hits",
        ReportKind::Phases => "start,end,phase",
        ReportKind::Growth => "time,cov,reach,trig",
    };
    let mut out = String::new();
    if long {
        out.push_str("scheduler,seed,");
    }
    out.push_str(header);
    out.push('\n');
    for r in results {
        let prefix = if long {
            format!("{},{},", r.scheduler, r.rng_seed)
        } else {
            String::new()
        };
        match kind {
            ReportKind::Energy => {
                for (rank, hits) in energy_rows(r) {
                    let _ = writeln!(out, "{prefix}{rank},{hits}");
                }
            }
            ReportKind::Phases => {
                for (start, end, phase) in phase_bands(r) {
                    let _ = writeln!(out, "{prefix}{start},{end},{phase}");
                }
            }
            ReportKind::Growth => {
                for (t, c, re, tr) in growth_rows(r) {
                    let _ = writeln!(out, "{prefix}{t},{c},{re},{tr}");
                }
            }
        }
    }
    Ok(out)
}
