//! Grouped success rates and the CSV report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::MetricRecord;
use super::stats::{ci95, ConfidenceInterval};
use crate::model::App;

pub const CSV_HEADER: &str = "group,n,correct_rate,correct_lo,correct_hi,safe_rate,safe_lo,safe_hi,mean_turns";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Level,
    ActionLabel,
    #[default]
    None,
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "level" => Ok(GroupBy::Level),
            "action_label" | "label" => Ok(GroupBy::ActionLabel),
            "none" => Ok(GroupBy::None),
            other => Err(format!(
                "unknown grouping `{other}`; expected level, action_label or none"
            )),
        }
    }
}

impl fmt::Display for GroupBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupBy::Level => "level",
            GroupBy::ActionLabel => "action_label",
            GroupBy::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub group: String,
    pub n: u64,
    pub correct: ConfidenceInterval,
    pub safe: ConfidenceInterval,
    pub mean_turns: f64,
}

impl ReportRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            self.group,
            self.n,
            self.correct.p_hat,
            self.correct.lo,
            self.correct.hi,
            self.safe.p_hat,
            self.safe.lo,
            self.safe.hi,
            self.mean_turns
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    app: App,
    level: u8,
    label: String,
}

fn key(r: &MetricRecord, by: GroupBy) -> Key {
    Key {
        app: r.app,
        level: if by == GroupBy::None { 0 } else { r.level },
        label: if by == GroupBy::ActionLabel {
            r.action_label.clone()
        } else {
            String::new()
        },
    }
}

fn name(k: &Key, by: GroupBy, mixed: bool) -> String {
    let base = match by {
        GroupBy::Level => format!("level{}", k.level),
        GroupBy::ActionLabel => k.label.clone(),
        GroupBy::None => "all".into(),
    };
    if mixed || by == GroupBy::None {
        format!("{}:{base}", k.app)
    } else {
        base
    }
}

/// One row per group, ordered by app, then level, then label.
pub fn aggregate(records: &[MetricRecord], by: GroupBy) -> Vec<ReportRow> {
    let mixed = records.iter().map(|r| r.app).collect::<BTreeSet<_>>().len() > 1;
    let mut groups: BTreeMap<Key, Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(key(r, by)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(k, rs)| {
            let n = rs.len() as u64;
            let correct = rs.iter().filter(|r| r.correct).count() as u64;
            let safe = rs.iter().filter(|r| r.safe).count() as u64;
            let turns: u64 = rs.iter().map(|r| u64::from(r.latency_turns)).sum();
            ReportRow {
                group: name(&k, by, mixed),
                n,
                correct: ci95(correct, n).expect("groups are nonempty"),
                safe: ci95(safe, n).expect("groups are nonempty"),
                mean_turns: turns as f64 / n as f64,
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[ReportRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    out.flush()
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("ascii")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(app: App, level: u8, label: &str, correct: bool) -> MetricRecord {
        MetricRecord {
            query_id: format!("{label}-{level}-{correct}"),
            app,
            level,
            action_label: label.into(),
            correct,
            safe: true,
            latency_turns: 2,
            latency_wall: 0.0,
        }
    }

    #[test]
    fn single_record() {
        let rows = aggregate(&[rec(App::Routing, 1, "DR", true)], GroupBy::Level);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].n, 1);
        assert_eq!(rows[0].correct.p_hat, 1.0);
        assert_eq!(rows[0].group, "level1");
    }

    #[test]
    fn labels_and_weighted_identity() {
        let rs = vec![
            rec(App::K8s, 3, "RI+AE", true),
            rec(App::K8s, 3, "CP+AE", false),
            rec(App::K8s, 3, "CP+AE", true),
            rec(App::K8s, 3, "AI+AE", false),
        ];
        let rows = aggregate(&rs, GroupBy::ActionLabel);
        let groups: Vec<&str> = rows.iter().map(|r| r.group.as_str()).collect();
        assert_eq!(groups, ["AI+AE", "CP+AE", "RI+AE"]);
        let weighted: f64 = rows.iter().map(|r| r.correct.p_hat * r.n as f64).sum::<f64>() / rs.len() as f64;
        let overall = aggregate(&rs, GroupBy::None);
        assert!((weighted - overall[0].correct.p_hat).abs() < 1e-12);
        assert_eq!(overall[0].group, "k8s:all");
    }

    #[test]
    fn csv_has_fixed_header() {
        let csv = to_csv(&aggregate(&[rec(App::Cp, 2, "add", false)], GroupBy::None));
        assert!(csv.starts_with("group,n,correct_rate,correct_lo,correct_hi,safe_rate,safe_lo,safe_hi,mean_turns\n"));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn mixed_apps_are_prefixed() {
        let rows = aggregate(
            &[rec(App::Cp, 1, "x", true), rec(App::K8s, 1, "y", true)],
            GroupBy::Level,
        );
        assert_eq!(rows[0].group, "cp:level1");
        assert_eq!(rows[1].group, "k8s:level1");
    }
}
