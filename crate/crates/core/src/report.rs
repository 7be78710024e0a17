//! Output files: CSV tables with 17 significant digits, JSON reports tagged
//! by `kind`, and a manifest with per-stage timings and SHA-256 digests.
//! `validate` re-reads all three.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

/// One CSV cell.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        // "inf", "-inf", "NaN" all parse back as f64
        format!("{x}")
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::InvalidInput(format!("{}: row {i} has {} fields, header {}", path.display(), row.len(), header.len())));
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes `body` with a leading `kind` tag and a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<()> {
    let mut map = Map::new();
    map.insert("kind".into(), Value::String(kind.into()));
    match serde_json::to_value(body)? {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("data".into(), other);
        }
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(map))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub config: Value,
    pub stages: Vec<StageTime>,
    pub files: Vec<FileDigest>,
    pub pass: bool,
}

/// Collects stage timings and written files for one command.
pub struct Recorder {
    pub dir: PathBuf,
    stages: Vec<StageTime>,
    files: Vec<PathBuf>,
    clock: Instant,
}

impl Recorder {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), stages: Vec::new(), files: Vec::new(), clock: Instant::now() })
    }

    /// Closes the current stage.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.stages.push(StageTime { stage: name.into(), seconds: (now - self.clock).as_secs_f64() });
        self.clock = now;
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.dir.join(name);
        write_csv(&path, header, rows)?;
        self.files.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, kind: &str, body: &T) -> Result<()> {
        let path = self.dir.join(name);
        write_json(&path, kind, body)?;
        self.files.push(path);
        Ok(())
    }

    pub fn finish<C: Serialize>(self, command: &str, seed: u64, config: &C, pass: bool) -> Result<PathBuf> {
        let mut files = Vec::with_capacity(self.files.len());
        for f in &self.files {
            let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            files.push(FileDigest { path: name, sha256: sha256_file(f)? });
        }
        let manifest = RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            threads: rayon::current_num_threads(),
            config: serde_json::to_value(config)?,
            stages: self.stages,
            files,
            pass,
        };
        let path = self.dir.join(MANIFEST);
        write_json(&path, "manifest", &manifest)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checked: Vec<String>,
    pub problems: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

fn check_json(path: &Path) -> std::result::Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let v: Value = serde_json::from_str(&text).map_err(|e| format!("not JSON: {e}"))?;
    match v.get("kind") {
        Some(Value::String(_)) => Ok(v),
        _ => Err("missing string field `kind`".into()),
    }
}

/// Cells are numbers or lowercase identifiers (flags, stage names, booleans).
fn check_csv(path: &Path) -> std::result::Result<(), String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let width = r.headers().map_err(|e| e.to_string())?.len();
    if width == 0 {
        return Err("empty header".into());
    }
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format!("row {i}: {e}"))?;
        if rec.len() != width {
            return Err(format!("row {i} has {} fields, header {width}", rec.len()));
        }
        for cell in rec.iter() {
            let word = !cell.is_empty() && cell.chars().all(|c| c.is_ascii_lowercase() || c == '_' || c == '-');
            if cell.parse::<f64>().is_err() && !word {
                return Err(format!("row {i}: unreadable cell {cell:?}"));
            }
        }
    }
    Ok(())
}

/// Validates one file, or every CSV/JSON file of a directory plus the digests
/// of its manifest.
pub fn validate(path: &Path) -> Result<ValidationReport> {
    let mut report = ValidationReport { checked: Vec::new(), problems: Vec::new() };
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        v.sort();
        v
    } else if path.exists() {
        vec![path.to_path_buf()]
    } else {
        return Err(Error::InvalidInput(format!("{} does not exist", path.display())));
    };
    for f in files {
        let shown = f.display().to_string();
        let result = match f.extension().and_then(|e| e.to_str()) {
            Some("csv") => check_csv(&f),
            Some("json") => check_json(&f).and_then(|v| {
                if v["kind"] == "manifest" {
                    check_digests(&f, &v)
                } else {
                    Ok(())
                }
            }),
            _ => continue,
        };
        if let Err(why) = result {
            report.problems.push(format!("{shown}: {why}"));
        }
        report.checked.push(shown);
    }
    Ok(report)
}

fn check_digests(manifest: &Path, v: &Value) -> std::result::Result<(), String> {
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let files = v["files"].as_array().ok_or("manifest without `files`")?;
    for f in files {
        let (Some(name), Some(digest)) = (f["path"].as_str(), f["sha256"].as_str()) else {
            return Err("malformed file entry".into());
        };
        let actual = sha256_file(&dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if actual != digest {
            return Err(format!("{name}: digest mismatch"));
        }
    }
    Ok(())
}
