//! `run` and `report`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use striplab::io::ResultsStore;
use striplab::lyapunov::ReferenceCache;
use striplab::model::SCHEMA_VERSION;

use crate::analysis::{evaluate, plots, tables, Check, Table};
use crate::config::ExperimentConfig;
use crate::experiments::{compute_references, execute, plan, validate_with_references};
use crate::records::{parse_line, Record, RecordKind};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_OUTPUT_DIR: &str = "striplab-out";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output_dir` of the config.
    pub out: Option<PathBuf>,
    /// Worker threads; rayon's default when absent.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub index: usize,
    pub seed: u64,
    pub energy: Option<f64>,
    pub size: Option<usize>,
    pub replica: Option<u64>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// An output file with its digest and, for line-oriented files, one digest
/// per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub line_sha256: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub threads: usize,
    pub reference_seed: Option<u64>,
    pub tasks: Vec<TaskEntry>,
    pub files: Vec<FileEntry>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub output_dir: PathBuf,
}

impl RunOutcome {
    /// 0 iff every task succeeded and every bundled check passed.
    pub fn exit_code(&self) -> i32 {
        if self.manifest.passed {
            0
        } else {
            1
        }
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Lower-case hex SHA-256.
pub fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest(dir: &Path, name: &str, per_line: bool) -> anyhow::Result<FileEntry> {
    let bytes = fs::read(dir.join(name)).with_context(|| format!("reading {name}"))?;
    let line_sha256 = if per_line { bytes.split_inclusive(|&b| b == b'\n').map(hex).collect() } else { Vec::new() };
    Ok(FileEntry { path: name.into(), sha256: hex(&bytes), line_sha256 })
}

fn write_csv(dir: &Path, table: &Table) -> anyhow::Result<String> {
    let name = format!("{}.csv", table.name);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_path(dir.join(&name))?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(name)
}

fn write_results(dir: &Path, records: &[Record]) -> anyhow::Result<()> {
    let path = dir.join(RESULTS_FILE);
    if path.exists() {
        fs::remove_file(&path)?;
    }
    let mut store = ResultsStore::open(&path)?;
    for r in records {
        store.append(r)?;
    }
    store.flush()?;
    Ok(())
}

/// Execute the experiment and write results, tables, plots and manifest.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<RunOutcome> {
    cfg.validate()?;
    let dir = opts.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| DEFAULT_OUTPUT_DIR.into());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build()?;
    let started = now();
    let hash = cfg.hash();

    let cache = ReferenceCache::new();
    let refs = pool.install(|| compute_references(cfg, &cache))?;
    validate_with_references(cfg, &refs)?;

    let tasks = plan(cfg);
    log::info!("{}: {} tasks on {} threads", cfg.experiment.name(), tasks.len(), pool.current_num_threads());
    let task_records: Vec<Record> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| {
                let outcome = execute(cfg, &refs, t).map_err(|e| format!("{e:#}"));
                if let Err(e) = &outcome {
                    log::warn!("task {} failed: {e}", t.index);
                }
                Record::task(cfg.experiment, &hash, t, outcome)
            })
            .collect()
    });
    let mut records = Record::references(cfg.experiment, &hash, &refs);
    records.extend(task_records);

    write_results(&dir, &records)?;
    let mut files = vec![digest(&dir, RESULTS_FILE, true)?];
    let tabs = tables(cfg, &records)?;
    for t in &tabs {
        let name = write_csv(&dir, t)?;
        files.push(digest(&dir, &name, true)?);
    }
    for (name, plot) in plots(cfg, &tabs) {
        let name = format!("{name}.svg");
        fs::write(dir.join(&name), plot.render())?;
        files.push(digest(&dir, &name, false)?);
    }
    let checks = evaluate(cfg, &records)?;
    let passed = checks.iter().all(|c| c.passed);
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: hash,
        config: cfg.clone(),
        started,
        finished: now(),
        threads: pool.current_num_threads(),
        reference_seed: cfg.experiment.needs_reference().then_some(refs.seed),
        tasks: records
            .iter()
            .filter(|r| r.kind == RecordKind::Task)
            .map(|r| TaskEntry {
                index: r.index,
                seed: r.seed,
                energy: r.energy,
                size: r.size,
                replica: r.replica,
                ok: r.ok,
                error: r.error.clone(),
            })
            .collect(),
        files,
        checks,
        passed,
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(RunOutcome { manifest, manifest_path, output_dir: dir })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub passed: bool,
}

/// Verify every recorded checksum, then recompute the bundled checks from
/// the stored records.
pub fn report(manifest_path: &Path) -> anyhow::Result<Report> {
    let text = fs::read_to_string(manifest_path)
        .with_context(|| format!("integrity error: cannot read manifest {}", manifest_path.display()))?;
    let manifest: RunManifest = serde_json::from_str(&text).context("integrity error: malformed manifest")?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));

    let results = dir.join(RESULTS_FILE);
    let body = fs::read(&results).with_context(|| format!("integrity error: missing {}", results.display()))?;
    let mut out = String::new();
    let _ = writeln!(out, "experiment: {} (config {})", manifest.config.experiment.name(), &manifest.config_hash[..12]);
    if body.iter().all(u8::is_ascii_whitespace) {
        let _ = writeln!(out, "verdict: FAIL (no records in {RESULTS_FILE})");
        return Ok(Report { text: out, passed: false });
    }

    for f in &manifest.files {
        let bytes = fs::read(dir.join(&f.path)).with_context(|| format!("integrity error: missing {}", f.path))?;
        if !f.line_sha256.is_empty() {
            let lines: Vec<&[u8]> = bytes.split_inclusive(|&b| b == b'\n').collect();
            for (k, expected) in f.line_sha256.iter().enumerate() {
                match lines.get(k) {
                    Some(l) if hex(l) == *expected => {}
                    Some(_) => bail!("integrity error: {} line {} does not match its checksum", f.path, k + 1),
                    None => bail!("integrity error: {} line {} is missing", f.path, k + 1),
                }
            }
            if lines.len() > f.line_sha256.len() {
                bail!("integrity error: {} line {} was not recorded", f.path, f.line_sha256.len() + 1);
            }
        }
        if hex(&bytes) != f.sha256 {
            bail!("integrity error: {} does not match its checksum", f.path);
        }
    }

    let mut records = Vec::new();
    for (k, line) in String::from_utf8(body)?.lines().enumerate() {
        let r = parse_line(line).with_context(|| format!("integrity error: {RESULTS_FILE} line {} is malformed", k + 1))?;
        if r.schema_version != SCHEMA_VERSION || r.config_hash != manifest.config_hash {
            bail!("integrity error: {RESULTS_FILE} line {} has a foreign schema or config hash", k + 1);
        }
        records.push(r);
    }
    if manifest.config.hash() != manifest.config_hash {
        bail!("integrity error: manifest config does not match its hash");
    }

    let tasks = records.iter().filter(|r| r.kind == RecordKind::Task).count();
    let _ = writeln!(out, "records: {} ({} tasks, {} reference)", records.len(), tasks, records.len() - tasks);
    let checks = evaluate(&manifest.config, &records)?;
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "[{tag}] {}: {}", c.name, c.detail);
        let _ = writeln!(out, "       threshold: {}", c.threshold);
    }
    let passed = checks.iter().all(|c| c.passed);
    let _ = writeln!(out, "verdict: {}", if passed { "PASS" } else { "FAIL" });
    Ok(Report { text: out, passed })
}
