//! Report files: metric records as JSONL, aggregates as CSV.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::aggregate::{aggregate, write_csv, GroupBy};
use super::metrics::MetricRecord;
use crate::generate::write_jsonl;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const REPORT_FILE: &str = "report.csv";

/// Writes `records.jsonl` and `report.csv` under `dir` and returns both paths.
pub fn emit_reports(records: &[MetricRecord], by: GroupBy, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let jsonl = dir.join(RECORDS_FILE);
    write_jsonl(records, BufWriter::new(File::create(&jsonl)?))?;
    let csv = dir.join(REPORT_FILE);
    write_csv(&aggregate(records, by), BufWriter::new(File::create(&csv)?))?;
    Ok(vec![jsonl, csv])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::read_jsonl;
    use crate::model::App;

    #[test]
    fn ten_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<MetricRecord> = (0..10)
            .map(|i| MetricRecord {
                query_id: format!("q{i}"),
                app: App::Routing,
                level: 1 + (i % 3) as u8,
                action_label: "DR".into(),
                correct: i % 2 == 0,
                safe: i % 3 != 0,
                latency_turns: i + 1,
                latency_wall: 0.0,
            })
            .collect();
        let files = emit_reports(&records, GroupBy::Level, dir.path()).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text.lines().count(), 10);
        let back: Vec<MetricRecord> = read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(aggregate(&back, GroupBy::Level), aggregate(&records, GroupBy::Level));
        let csv = std::fs::read_to_string(&files[1]).unwrap();
        assert_eq!(csv.lines().count(), 4);
    }
}
