//! Supervised fine-tuning export.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::model::{ActionSpec, GroundTruth, QuerySpec, TruthKind};

#[derive(Serialize)]
struct SftRecord<'a> {
    prompt: &'a str,
    program: &'a [ActionSpec],
}

#[derive(Debug, thiserror::Error)]
pub enum SftError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("query {0} is not constructive")]
    NotConstructive(String),
}

/// Writes one `{prompt, program}` JSON line per pair and returns the count.
pub fn export_sft_records<'a, I>(pairs: I, path: &Path) -> Result<usize, SftError>
where
    I: IntoIterator<Item = (&'a QuerySpec, &'a GroundTruth)>,
{
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut n = 0;
    for (query, truth) in pairs {
        if truth.kind != TruthKind::ActionProgram {
            return Err(SftError::NotConstructive(query.id.clone()));
        }
        let record = SftRecord {
            prompt: &query.prompt_text,
            program: &truth.program,
        };
        serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::{generate_cp_query, generate_topology, TopologySpec};

    #[test]
    fn writes_one_line_per_pair() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sft.jsonl");
        let g = generate_topology(&TopologySpec::desk_scale(), 1);
        let pairs: Vec<_> = (0..25).map(|s| generate_cp_query(&g, 1, s).unwrap()).collect();
        let n = export_sft_records(pairs.iter().map(|(q, t)| (q, t)), &path).unwrap();
        assert_eq!(n, 25);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 25);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert!(first.get("prompt").is_some() && first.get("program").is_some());
    }

    #[test]
    fn empty_stream_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sft.jsonl");
        assert_eq!(export_sft_records(std::iter::empty(), &path).unwrap(), 0);
    }
}
