//! Scoring, confidence intervals, grouped reports and reward shaping.

pub mod aggregate;
pub mod metrics;
pub mod report;
pub mod stats;

pub use aggregate::{aggregate, to_csv, write_csv, GroupBy, ReportRow, CSV_HEADER};
pub use metrics::{episode_reward, reward, score_episode, AppMismatch, MetricRecord};
pub use report::{emit_reports, RECORDS_FILE, REPORT_FILE};
pub use stats::{ci95, ConfidenceInterval, StatsError};
