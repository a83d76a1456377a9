//! Cross-scheduler comparison: aggregates, hit-histogram inequality, and
//! exact rank-sum tests across rng seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::campaign::CampaignResult;

/// Above this many rank assignments the rank-sum test uses the normal
/// approximation instead of enumerating.
const EXACT_LIMIT: u128 = 200_000;

/// Gini coefficient of a histogram: mean absolute difference over twice the
/// mean. Empty or all-zero histograms have Gini 0.
pub fn gini(values: &[u64]) -> f64 {
    let n = values.len();
    let total: u128 = values.iter().map(|&v| u128::from(v)).sum();
    if n == 0 || total == 0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    // Sum over i of (2i - n - 1) * x_i, with 1-based i.
    let mut acc: i128 = 0;
    for (i, &x) in sorted.iter().enumerate() {
        acc += (2 * (i as i128 + 1) - n as i128 - 1) * i128::from(x);
    }
    acc as f64 / (n as f64 * total as f64)
}

fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pooled[idx[j + 1]] == pooled[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Two-sided Mann-Whitney rank-sum p-value with midranks for ties. Exact by
/// enumeration of all rank assignments when feasible, otherwise a normal
/// approximation with tie correction. Empty groups give 1.0.
pub fn rank_sum_p_value(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return 1.0;
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let n = n1 + n2;
    let mean = n1 as f64 * (n as f64 + 1.0) / 2.0;
    let observed: f64 = ranks[..n1].iter().sum();
    let dev = (observed - mean).abs() - 1e-9;

    if binomial(n, n1) <= EXACT_LIMIT {
        let mut extreme: u64 = 0;
        let mut total: u64 = 0;
        let mut combo: Vec<usize> = (0..n1).collect();
        loop {
            let w: f64 = combo.iter().map(|&i| ranks[i]).sum();
            total += 1;
            if (w - mean).abs() >= dev {
                extreme += 1;
            }
            // Next combination in lexicographic order.
            let mut i = n1;
            while i > 0 && combo[i - 1] == n - n1 + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for j in i..n1 {
                combo[j] = combo[j - 1] + 1;
            }
        }
        return extreme as f64 / total as f64;
    }

    let mut tie_term = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((observed - mean).abs() - 0.5).max(0.0) / var.sqrt();
    (2.0 * (1.0 - standard_normal_cdf(z))).clamp(0.0, 1.0)
}

fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Abramowitz-Stegun 7.1.26, absolute error below 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592 + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    sign * (1.0 - poly * (-x * x).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub campaigns: usize,
    pub mean_coverage: f64,
    pub mean_reached: f64,
    pub mean_triggered: f64,
    pub mean_never_hit: f64,
    pub mean_gini: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    /// `a - b` differences of group means.
    pub delta_coverage: f64,
    pub delta_reached: f64,
    pub delta_triggered: f64,
    pub p_coverage: f64,
    pub p_reached: f64,
    pub p_triggered: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub graph_hash: String,
    pub groups: Vec<GroupSummary>,
    pub pairs: Vec<PairComparison>,
}

struct Metrics {
    coverage: Vec<f64>,
    reached: Vec<f64>,
    triggered: Vec<f64>,
    never_hit: Vec<f64>,
    gini: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Compare results grouped by scheduler name.
pub fn compare_campaigns(results: &[CampaignResult]) -> Result<ComparisonReport> {
    let labeled: Vec<(String, &CampaignResult)> =
        results.iter().map(|r| (r.scheduler.to_string(), r)).collect();
    compare_labeled(&labeled)
}

/// Compare results grouped by caller-chosen labels. Groups appear in label
/// order; every unordered pair of groups gets a rank-sum comparison.
pub fn compare_labeled(results: &[(String, &CampaignResult)]) -> Result<ComparisonReport> {
    if results.len() < 2 {
        return Err(Error::Mismatch("at least two results are required".into()));
    }
    let hash = &results[0].1.graph_hash;
    if let Some((_, r)) = results.iter().find(|(_, r)| &r.graph_hash != hash) {
        return Err(Error::Mismatch(format!(
            "results come from different graphs ({hash} and {})",
            r.graph_hash
        )));
    }
    let mut groups: BTreeMap<&str, Vec<&CampaignResult>> = BTreeMap::new();
    for (label, r) in results {
        groups.entry(label.as_str()).or_default().push(r);
    }
    let metrics: Vec<(&str, Metrics)> = groups
        .iter()
        .map(|(label, rs)| {
            let mut rs = rs.clone();
            rs.sort_by_key(|r| r.rng_seed);
            let m = Metrics {
                coverage: rs.iter().map(|r| r.coverage() as f64).collect(),
                reached: rs.iter().map(|r| r.reached() as f64).collect(),
                triggered: rs.iter().map(|r| r.triggered() as f64).collect(),
                never_hit: rs.iter().map(|r| r.never_hit() as f64).collect(),
                gini: rs.iter().map(|r| gini(&r.reachable_hits())).collect(),
            };
            (*label, m)
        })
        .collect();

    let summaries = metrics
        .iter()
        .map(|(label, m)| GroupSummary {
            label: label.to_string(),
            campaigns: m.coverage.len(),
            mean_coverage: mean(&m.coverage),
            mean_reached: mean(&m.reached),
            mean_triggered: mean(&m.triggered),
            mean_never_hit: mean(&m.never_hit),
            mean_gini: mean(&m.gini),
        })
        .collect();

    let mut pairs = Vec::new();
    for i in 0..metrics.len() {
        for j in i + 1..metrics.len() {
            let (la, a) = &metrics[i];
            let (lb, b) = &metrics[j];
            pairs.push(PairComparison {
                a: la.to_string(),
                b: lb.to_string(),
                delta_coverage: mean(&a.coverage) - mean(&b.coverage),
                delta_reached: mean(&a.reached) - mean(&b.reached),
                delta_triggered: mean(&a.triggered) - mean(&b.triggered),
                p_coverage: rank_sum_p_value(&a.coverage, &b.coverage),
                p_reached: rank_sum_p_value(&a.reached, &b.reached),
                p_triggered: rank_sum_p_value(&a.triggered, &b.triggered),
            });
        }
    }
    Ok(ComparisonReport {
        graph_hash: hash.clone(),
        groups: summaries,
        pairs,
    })
}

impl ComparisonReport {
    pub fn group(&self, label: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.label == label)
    }

    /// Group aggregates followed by pairwise tests, as two CSV sections.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheduler,campaigns,coverage,reached,triggered,never_hit,gini\n");
        for g in &self.groups {
            let _ = writeln!(
                out,
                "{},{},{:.3},{:.3},{:.3},{:.3},{:.6}",
                g.label, g.campaigns, g.mean_coverage, g.mean_reached, g.mean_triggered, g.mean_never_hit, g.mean_gini
            );
        }
        out.push_str("\na,b,delta_coverage,delta_reached,delta_triggered,p_coverage,p_reached,p_triggered\n");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{},{},{:.3},{:.3},{:.3},{:.6},{:.6},{:.6}",
                p.a, p.b, p.delta_coverage, p.delta_reached, p.delta_triggered, p.p_coverage, p.p_reached, p.p_triggered
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:>5} {:>10} {:>9} {:>9} {:>9} {:>7}",
            "scheduler", "runs", "cov", "reach", "trig", "no-hit", "gini"
        );
        for g in &self.groups {
            let _ = writeln!(
                out,
                "{:<18} {:>5} {:>10.1} {:>9.2} {:>9.2} {:>9.2} {:>7.3}",
                g.label, g.campaigns, g.mean_coverage, g.mean_reached, g.mean_triggered, g.mean_never_hit, g.mean_gini
            );
        }
        if !self.pairs.is_empty() {
            out.push('\n');
            let _ = writeln!(
                out,
                "{:<37} {:>9} {:>9} {:>9} {:>8}",
                "pair", "d-cov", "d-reach", "d-trig", "p-reach"
            );
            for p in &self.pairs {
                let _ = writeln!(
                    out,
                    "{:<37} {:>+9.1} {:>+9.2} {:>+9.2} {:>8.4}",
                    format!("{} vs {}", p.a, p.b),
                    p.delta_coverage,
                    p.delta_reached,
                    p.delta_triggered,
                    p.p_reached
                );
            }
        }
        out
    }
}
