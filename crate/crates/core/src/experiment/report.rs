use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::Decision;
use crate::error::{Error, Result};
use crate::sim::{run_trial, SimConfig, TrialResult};
use crate::stats::Summary;
use crate::strategy::StrategyKind;

/// One trial of a batch, as written to `rows.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub run: usize,
    pub pattern_seed: u64,
    pub robot_seed: u64,
    pub strategy: String,
    pub eta: Option<f64>,
    pub fill_ratio: f64,
    pub decision_time_s: f64,
    pub accuracy: f64,
    pub completed: bool,
    pub correct_decision: Decision,
    pub samples: u64,
    pub messages_sent: u64,
    pub messages_delivered: u64,
}

/// One robot of one trial, as written to `robots.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRow {
    pub run: usize,
    pub strategy: String,
    pub eta: Option<f64>,
    pub fill_ratio: f64,
    pub robot_id: usize,
    pub decision: Decision,
    pub decision_time_s: Option<f64>,
    pub terminal_belief: f64,
    pub observation_count: u64,
    pub received_count: u64,
    pub alpha: f64,
    pub beta: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub fill_ratio: f64,
    pub strategy: String,
    pub eta: Option<f64>,
    pub runs: usize,
    pub completed: usize,
    pub decision_time_s: Summary,
    pub accuracy: Summary,
}

/// How `candidate` compares with `baseline` at one fill ratio. Positive
/// values favour the candidate for time and the baseline for accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub fill_ratio: f64,
    pub baseline: String,
    pub baseline_eta: Option<f64>,
    pub candidate: String,
    pub candidate_eta: Option<f64>,
    /// `(baseline - candidate) / baseline` of the mean decision time.
    pub time_reduction: f64,
    /// Accuracy loss in percentage points.
    pub accuracy_loss_pp: f64,
    /// `(baseline - candidate) / baseline` of the mean accuracy.
    pub accuracy_loss_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub groups: Vec<GroupSummary>,
    pub deltas: Vec<Delta>,
    #[serde(skip)]
    pub rows: Vec<TrialRow>,
    #[serde(skip)]
    pub robots: Vec<RobotRow>,
    #[serde(skip)]
    pub results: Vec<TrialResult>,
}

impl BatchReport {
    pub fn group(&self, fill_ratio: f64, strategy: &str) -> Option<&GroupSummary> {
        self.groups
            .iter()
            .find(|g| g.fill_ratio == fill_ratio && g.strategy == strategy)
    }

    pub fn delta(&self, fill_ratio: f64, baseline: &str, candidate: &str) -> Option<&Delta> {
        self.deltas.iter().find(|d| {
            d.fill_ratio == fill_ratio && d.baseline == baseline && d.candidate == candidate
        })
    }
}

fn trial_row(run: usize, r: &TrialResult) -> TrialRow {
    TrialRow {
        run,
        pattern_seed: r.pattern_seed,
        robot_seed: r.robot_seed,
        strategy: r.strategy.clone(),
        eta: r.eta,
        fill_ratio: r.fill_ratio,
        decision_time_s: r.decision_time_ms / 1000.0,
        accuracy: r.accuracy,
        completed: r.completed,
        correct_decision: r.correct_decision,
        samples: r.samples,
        messages_sent: r.messages_sent,
        messages_delivered: r.messages_delivered,
    }
}

fn robot_rows(run: usize, r: &TrialResult) -> impl Iterator<Item = RobotRow> + '_ {
    r.robots.iter().map(move |o| RobotRow {
        run,
        strategy: r.strategy.clone(),
        eta: r.eta,
        fill_ratio: r.fill_ratio,
        robot_id: o.id,
        decision: o.decision,
        decision_time_s: o.decision_time_ms.map(|t| t / 1000.0),
        terminal_belief: o.terminal_belief,
        observation_count: o.observation_count,
        received_count: o.received_count,
        alpha: o.alpha,
        beta: o.beta,
        estimate: o.estimate,
    })
}

fn same_group(row: &TrialRow, g: &GroupSummary) -> bool {
    row.fill_ratio == g.fill_ratio && row.strategy == g.strategy && row.eta == g.eta
}

/// Groups rows by `(fill_ratio, strategy, eta)` in order of first appearance.
pub fn summarize(rows: &[TrialRow]) -> Vec<GroupSummary> {
    let mut groups: Vec<GroupSummary> = Vec::new();
    for row in rows {
        if groups.iter().any(|g| same_group(row, g)) {
            continue;
        }
        let members: Vec<&TrialRow> = rows
            .iter()
            .filter(|r| r.fill_ratio == row.fill_ratio && r.strategy == row.strategy && r.eta == row.eta)
            .collect();
        let times: Vec<f64> = members.iter().map(|r| r.decision_time_s).collect();
        let acc: Vec<f64> = members.iter().map(|r| r.accuracy).collect();
        groups.push(GroupSummary {
            fill_ratio: row.fill_ratio,
            strategy: row.strategy.clone(),
            eta: row.eta,
            runs: members.len(),
            completed: members.iter().filter(|r| r.completed).count(),
            decision_time_s: Summary::of(&times),
            accuracy: Summary::of(&acc),
        });
    }
    groups
}

/// Every ordered pair of distinct groups sharing a fill ratio.
pub fn compare(groups: &[GroupSummary]) -> Vec<Delta> {
    let mut out = Vec::new();
    for b in groups {
        for c in groups {
            if b.fill_ratio != c.fill_ratio || (b.strategy == c.strategy && b.eta == c.eta) {
                continue;
            }
            let (bt, ct) = (b.decision_time_s.mean, c.decision_time_s.mean);
            let (ba, ca) = (b.accuracy.mean, c.accuracy.mean);
            out.push(Delta {
                fill_ratio: b.fill_ratio,
                baseline: b.strategy.clone(),
                baseline_eta: b.eta,
                candidate: c.strategy.clone(),
                candidate_eta: c.eta,
                time_reduction: (bt - ct) / bt,
                accuracy_loss_pp: (ba - ca) * 100.0,
                accuracy_loss_rel: (ba - ca) / ba,
            });
        }
    }
    out
}

/// Runs every seed under every strategy at every fill ratio. The seed list is
/// identical across strategies, so run `i` sees the same pattern and start
/// poses whatever the strategy. Rows are ordered by fill ratio, strategy and
/// seed, independent of scheduling.
pub fn run_batch(
    sim: &SimConfig,
    strategies: &[StrategyKind],
    fill_values: &[f64],
    seeds: &[u64],
    config_hash: &str,
) -> Result<BatchReport> {
    if strategies.is_empty() || fill_values.is_empty() || seeds.is_empty() {
        return Err(Error::Config(
            "a batch needs at least one strategy, fill ratio and seed".into(),
        ));
    }
    let mut results = Vec::with_capacity(strategies.len() * fill_values.len() * seeds.len());
    for &f in fill_values {
        for &s in strategies {
            let cfg = SimConfig {
                fill_ratio: f,
                strategy: s,
                ..sim.clone()
            };
            cfg.validate()?;
            let batch: Vec<TrialResult> = seeds
                .par_iter()
                .map(|&seed| run_trial(&cfg, seed, seed))
                .collect::<Result<_>>()?;
            results.extend(batch);
        }
    }

    let n = seeds.len();
    let rows: Vec<TrialRow> = results
        .iter()
        .enumerate()
        .map(|(i, r)| trial_row(i % n, r))
        .collect();
    let robots: Vec<RobotRow> = results
        .iter()
        .enumerate()
        .flat_map(|(i, r)| robot_rows(i % n, r))
        .collect();
    let groups = summarize(&rows);
    let deltas = compare(&groups);
    Ok(BatchReport {
        config_hash: config_hash.to_string(),
        seeds: seeds.to_vec(),
        groups,
        deltas,
        rows,
        robots,
        results,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `config.toml`, `rows.csv`, `robots.csv` and `summary.json` into `dir`.
pub fn write_report(dir: &Path, report: &BatchReport, config_toml: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), config_toml)?;
    write_csv(&dir.join("rows.csv"), &report.rows)?;
    write_csv(&dir.join("robots.csv"), &report.robots)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;
    Ok(())
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<TrialRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        let row: TrialRow = rec.map_err(|e| Error::Parse {
            line: i as u64 + 2,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs()) || (a.is_nan() && b.is_nan())
}

fn summary_close(a: &Summary, b: &Summary) -> bool {
    a.n == b.n && close(a.mean, b.mean) && close(a.std, b.std) && close(a.min, b.min) && close(a.max, b.max)
}

/// Recomputes groups and deltas from the rows and compares them with the
/// stored ones. Returns the number of groups and deltas checked.
pub fn audit_report(report: &BatchReport) -> Result<(usize, usize)> {
    let groups = summarize(&report.rows);
    if groups.len() != report.groups.len() {
        return Err(Error::Audit(format!(
            "{} groups in rows, {} in summary",
            groups.len(),
            report.groups.len()
        )));
    }
    for (got, want) in groups.iter().zip(&report.groups) {
        let same = got.fill_ratio == want.fill_ratio
            && got.strategy == want.strategy
            && got.eta == want.eta
            && got.runs == want.runs
            && got.completed == want.completed
            && summary_close(&got.decision_time_s, &want.decision_time_s)
            && summary_close(&got.accuracy, &want.accuracy);
        if !same {
            return Err(Error::Audit(format!(
                "group {} at f = {} does not match its rows",
                want.strategy, want.fill_ratio
            )));
        }
    }
    let deltas = compare(&groups);
    if deltas.len() != report.deltas.len() {
        return Err(Error::Audit("delta count differs".into()));
    }
    for (got, want) in deltas.iter().zip(&report.deltas) {
        let same = got.fill_ratio == want.fill_ratio
            && got.baseline == want.baseline
            && got.candidate == want.candidate
            && close(got.time_reduction, want.time_reduction)
            && close(got.accuracy_loss_pp, want.accuracy_loss_pp)
            && close(got.accuracy_loss_rel, want.accuracy_loss_rel);
        if !same {
            return Err(Error::Audit(format!(
                "delta {} vs {} at f = {} does not match",
                want.candidate, want.baseline, want.fill_ratio
            )));
        }
    }
    let seeds_ok = report
        .rows
        .iter()
        .all(|r| report.seeds.get(r.run) == Some(&r.pattern_seed));
    if !seeds_ok {
        return Err(Error::Audit("row seeds do not follow the seed list".into()));
    }
    Ok((groups.len(), deltas.len()))
}

/// Audits a report directory written by [`write_report`].
pub fn audit_dir(dir: &Path) -> Result<(usize, usize)> {
    let rows = read_rows_csv(&dir.join("rows.csv"))?;
    let text = fs::read_to_string(dir.join("summary.json"))?;
    let mut report: BatchReport = serde_json::from_str(&text)?;
    report.rows = rows;
    audit_report(&report)
}
