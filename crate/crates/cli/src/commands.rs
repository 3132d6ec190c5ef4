use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use netbench::agents::{agent_from_spec, Agent};
use netbench::eval::{aggregate, score_episode, write_csv, GroupBy, MetricRecord};
use netbench::generate::{build_environment, generate_batch, read_jsonl, write_jsonl, GenerateError};
use netbench::{run_episode, BenchmarkConfig, BenchmarkItem, EpisodeOptions, EpisodeResult};
use rayon::prelude::*;

use crate::error::CliError;
use crate::manifest::{now_unix, QueryStatus, RunManifest};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

pub struct GenerateArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub queries: Option<usize>,
    pub parallelism: Option<usize>,
}

pub struct RunArgs {
    pub queries: PathBuf,
    pub out: PathBuf,
    pub agent: Option<String>,
    pub config: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub max_turns: Option<usize>,
    pub seed: Option<u64>,
}

pub struct ReportArgs {
    pub records: PathBuf,
    pub group_by: GroupBy,
    pub out: Option<PathBuf>,
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e)),
        _ => Ok(()),
    }
}

fn write_lines<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_jsonl(items, BufWriter::new(file)).map_err(|e| CliError::io(path, e))
}

fn append_lines<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    write_jsonl(items, BufWriter::new(file)).map_err(|e| CliError::io(path, e))
}

fn apply_overrides(
    cfg: &mut BenchmarkConfig,
    seed: Option<u64>,
    queries: Option<usize>,
    parallelism: Option<usize>,
) -> Result<(), CliError> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = queries {
        cfg.num_queries = n;
    }
    if let Some(p) = parallelism {
        cfg.parallelism = p;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))
}

pub fn cmd_generate(args: GenerateArgs) -> Result<String, CliError> {
    let mut cfg = BenchmarkConfig::load(&args.config).map_err(|e| CliError::Config(e.to_string()))?;
    apply_overrides(&mut cfg, args.seed, args.queries, args.parallelism)?;
    let mut manifest = RunManifest::new(cfg.clone());
    let items = generate_batch(&cfg).map_err(|e| match e {
        GenerateError::Config(c) => CliError::Config(c.to_string()),
        other => CliError::Generation(other.to_string()),
    })?;
    create_parent(&args.out)?;
    write_lines(&args.out, &items)?;
    manifest.queries = items
        .iter()
        .map(|i| (i.query.id.clone(), QueryStatus::Generated))
        .collect();
    manifest.finished_unix = Some(now_unix());
    manifest.save(&manifest_path_for(&args.out))?;
    Ok(format!(
        "wrote {} {} queries to {}",
        items.len(),
        cfg.app,
        args.out.display()
    ))
}

fn read_items(path: &PathBuf) -> Result<Vec<BenchmarkItem>, CliError> {
    let file = File::open(path).map_err(|e| CliError::unreadable(path, e))?;
    let items: Vec<BenchmarkItem> = read_jsonl(BufReader::new(file)).map_err(|e| CliError::unreadable(path, e))?;
    if items.is_empty() {
        return Err(CliError::Config(format!("{}: no queries", path.display())));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = items.iter().find(|i| !seen.insert(i.query.id.as_str())) {
        return Err(CliError::Config(format!(
            "{}: duplicate query id {}",
            path.display(),
            dup.query.id
        )));
    }
    Ok(items)
}

/// Results already on disk for ids the manifest marks terminal.
fn load_previous<T: serde::de::DeserializeOwned>(
    path: &Path,
    id_of: impl Fn(&T) -> &str,
    done: &HashSet<String>,
) -> Result<BTreeMap<String, T>, CliError> {
    let Ok(file) = File::open(path) else {
        return Ok(BTreeMap::new());
    };
    let rows: Vec<T> = read_jsonl(BufReader::new(file)).map_err(|e| CliError::unreadable(path, e))?;
    let mut out = BTreeMap::new();
    for r in rows {
        let id = id_of(&r).to_string();
        if done.contains(&id) {
            out.entry(id).or_insert(r);
        }
    }
    Ok(out)
}

fn in_query_order<T>(items: &[BenchmarkItem], mut by_id: BTreeMap<String, T>) -> Vec<T> {
    items.iter().filter_map(|i| by_id.remove(&i.query.id)).collect()
}

enum Outcome {
    Scored(MetricRecord, Box<EpisodeResult>),
    EnvFailure(String),
}

fn run_one(item: &BenchmarkItem, agent: &dyn Agent, cfg: &BenchmarkConfig) -> Outcome {
    let mut env = match build_environment(item, cfg.env) {
        Ok(e) => e,
        Err(e) => return Outcome::EnvFailure(e.to_string()),
    };
    let opts = EpisodeOptions {
        max_turns: cfg.max_turns as u32,
        transcript_cap_bytes: cfg.env.transcript_cap_bytes,
    };
    let result = run_episode(env.as_mut(), agent, item, opts);
    match score_episode(&result, &item.truth) {
        Ok(record) => Outcome::Scored(record, Box::new(result)),
        Err(e) => Outcome::EnvFailure(e.to_string()),
    }
}

pub fn cmd_run(args: RunArgs) -> Result<String, CliError> {
    let items = read_items(&args.queries)?;
    let mut cfg = match &args.config {
        Some(p) => BenchmarkConfig::load(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => BenchmarkConfig::new(items[0].query.app),
    };
    if let Some(t) = args.max_turns {
        cfg.max_turns = t;
    }
    if let Some(a) = &args.agent {
        cfg.agent = a.clone();
    }
    apply_overrides(&mut cfg, args.seed, None, args.parallelism)?;
    let agent = agent_from_spec(&cfg.agent, cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let manifest_path = args.out.join(MANIFEST_FILE);
    let records_path = args.out.join(RECORDS_FILE);
    let transcripts_path = args.out.join(TRANSCRIPTS_FILE);

    let mut manifest = RunManifest::load(&manifest_path)?.unwrap_or_else(|| RunManifest::new(cfg.clone()));
    manifest.config = cfg.clone();
    manifest.finished_unix = None;
    for item in &items {
        manifest
            .queries
            .entry(item.query.id.clone())
            .or_insert(QueryStatus::Pending);
    }
    let done: HashSet<String> = manifest
        .queries
        .iter()
        .filter(|(_, s)| s.is_terminal())
        .map(|(id, _)| id.clone())
        .collect();
    let mut records = load_previous(&records_path, |r: &MetricRecord| &r.query_id, &done)?;
    let mut transcripts = load_previous(&transcripts_path, |r: &EpisodeResult| &r.query_id, &done)?;
    manifest.save(&manifest_path)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let pending: Vec<&BenchmarkItem> = items.iter().filter(|i| !done.contains(&i.query.id)).collect();
    let mut internal_failures = Vec::new();
    let mut transport_failures = 0usize;
    for chunk in pending.chunks(cfg.parallelism * 4) {
        let outcomes: Vec<Outcome> =
            pool.install(|| chunk.par_iter().map(|i| run_one(i, agent.as_ref(), &cfg)).collect());
        let mut new_records = Vec::new();
        let mut new_transcripts = Vec::new();
        for (item, outcome) in chunk.iter().zip(outcomes) {
            let id = item.query.id.clone();
            match outcome {
                Outcome::Scored(record, result) => {
                    let status = if result.error.is_some() {
                        QueryStatus::Failed
                    } else {
                        QueryStatus::Completed
                    };
                    if result.transport_failure {
                        transport_failures += 1;
                    }
                    manifest.queries.insert(id.clone(), status);
                    new_records.push(record.clone());
                    new_transcripts.push((*result).clone());
                    records.insert(id.clone(), record);
                    transcripts.insert(id, *result);
                }
                Outcome::EnvFailure(reason) => {
                    manifest.queries.insert(id.clone(), QueryStatus::Failed);
                    internal_failures.push(format!("{id}: {reason}"));
                }
            }
        }
        append_lines(&records_path, &new_records)?;
        append_lines(&transcripts_path, &new_transcripts)?;
        manifest.save(&manifest_path)?;
    }

    // Final files follow the order of the queries file and hold one line per id.
    let records: Vec<MetricRecord> = in_query_order(&items, records);
    let transcripts: Vec<EpisodeResult> = in_query_order(&items, transcripts);
    write_lines(&records_path, &records)?;
    write_lines(&transcripts_path, &transcripts)?;
    manifest.finished_unix = Some(now_unix());
    manifest.save(&manifest_path)?;

    if let Some(first) = internal_failures.first() {
        return Err(CliError::Internal(format!(
            "{} episode(s) could not run; first: {first}",
            internal_failures.len()
        )));
    }
    if transport_failures > 0 {
        return Err(CliError::Transport(format!(
            "{transport_failures} episode(s) lost their agent connection"
        )));
    }
    let correct = records.iter().filter(|r| r.correct).count();
    let safe = records.iter().filter(|r| r.safe).count();
    Ok(format!(
        "{} episodes with agent {}: {correct} correct, {safe} safe",
        records.len(),
        agent.name()
    ))
}

pub fn cmd_report(args: ReportArgs) -> Result<String, CliError> {
    let file = File::open(&args.records).map_err(|e| CliError::unreadable(&args.records, e))?;
    let records: Vec<MetricRecord> =
        read_jsonl(BufReader::new(file)).map_err(|e| CliError::unreadable(&args.records, e))?;
    if records.is_empty() {
        return Err(CliError::Config(format!("{}: no records", args.records.display())));
    }
    let rows = aggregate(&records, args.group_by);
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).map_err(|e| CliError::Internal(e.to_string()))?;
    if let Some(out) = &args.out {
        create_parent(out)?;
        let mut f = File::create(out).map_err(|e| CliError::io(out, e))?;
        f.write_all(&buf).map_err(|e| CliError::io(out, e))?;
    }
    Ok(String::from_utf8(buf).expect("csv is utf-8").trim_end().to_string())
}
