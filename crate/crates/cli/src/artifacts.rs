//! Output files: atomic writes, CSV tables, JSON-lines traces and the
//! hash manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use damp_core::diagnostics::NormalityReport;
use damp_core::recovery::RecoveryTrace;
use damp_core::signal::{write_pgm, Signal};
use damp_core::state_evolution::SeTrace;
use damp_core::MeasurementMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

/// Write via a sibling temp file and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let tmp = tmp_path(path);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// CSV with a header row; floats use the shortest round-trip form.
pub struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Table { w }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.w.into_inner().expect("in-memory flush")
    }

    pub fn write(self, path: &Path) -> CliResult<()> {
        write_atomic(path, &self.into_bytes())
    }
}

/// Shortest round-trip form, scientific outside [1e-4, 1e15).
pub fn fmt(v: f64) -> String {
    if v != 0.0 && v.is_finite() && (v.abs() < 1e-4 || v.abs() >= 1e15) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn write_values(path: &Path, values: &[f64]) -> CliResult<()> {
    let mut out = String::with_capacity(values.len() * 20);
    for v in values {
        out.push_str(&fmt(*v));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// CSV values always; a PGM next to it for grid signals.
pub fn write_signal(path: &Path, sig: &Signal) -> CliResult<Vec<PathBuf>> {
    write_values(path, sig.values())?;
    let mut written = vec![path.to_path_buf()];
    if sig.is_grid() {
        let pgm = path.with_extension("pgm");
        let tmp = tmp_path(&pgm);
        write_pgm(&tmp, sig)?;
        fs::rename(&tmp, &pgm).map_err(|e| CliError::io(&pgm, e))?;
        written.push(pgm);
    }
    Ok(written)
}

pub fn write_matrix(path: &Path, a: &MeasurementMatrix) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let tmp = tmp_path(path);
    a.write(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// One JSON object per iteration; snapshot iterations carry the effective noise.
pub fn trace_jsonl(trace: &RecoveryTrace) -> Vec<u8> {
    let mut out = Vec::new();
    for rec in &trace.records {
        let mut v = serde_json::to_value(rec).expect("record serializes");
        if let (Some(obj), Some(snap)) = (v.as_object_mut(), trace.snapshot(rec.iter)) {
            obj.insert("effective_noise".into(), json!(snap.v));
        }
        serde_json::to_writer(&mut out, &v).expect("in-memory write");
        out.push(b'\n');
    }
    out
}

/// Effective noise stored at iteration `iter` of a JSON-lines trace.
pub fn read_snapshot(path: &Path, iter: usize) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line)
            .map_err(|e| CliError::invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if v.get("iter").and_then(Value::as_u64) != Some(iter as u64) {
            continue;
        }
        let noise = v.get("effective_noise").and_then(Value::as_array).ok_or_else(|| {
            CliError::invalid(format!(
                "{}: iteration {iter} has no effective noise (record it with a snapshot iteration)",
                path.display()
            ))
        })?;
        return noise
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| CliError::invalid(format!("{}: non-numeric noise entry", path.display()))))
            .collect();
    }
    Err(CliError::invalid(format!("{}: no record for iteration {iter}", path.display())))
}

pub fn se_table(se: &SeTrace) -> Table {
    let mut t = Table::new(&["iter", "theta", "sigma"]);
    for (i, (th, s)) in se.theta.iter().zip(&se.sigma).enumerate() {
        t.row([i.to_string(), fmt(*th), fmt(*s)]);
    }
    t
}

pub fn qq_table(report: &NormalityReport) -> Table {
    let mut t = Table::new(&["theoretical", "empirical"]);
    for (q, e) in &report.qq {
        t.row([fmt(*q), fmt(*e)]);
    }
    t
}

/// The normality report without its QQ pairs.
pub fn normality_json(report: &NormalityReport) -> Value {
    json!({
        "n": report.n,
        "mean": report.mean,
        "std": report.std,
        "excess_kurtosis": report.excess_kurtosis,
        "skewness": report.skewness,
        "anderson_darling": report.anderson_darling,
    })
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub command: String,
    pub created_unix: u64,
    /// Files read from outside the artifact directory, by the path given.
    pub inputs: BTreeMap<String, FileEntry>,
    /// Every file in the artifact directory except the manifest itself.
    pub files: BTreeMap<String, FileEntry>,
    /// SHA-256 over the sorted "path sha256" lines of inputs and files.
    pub digest: String,
}

fn entry(path: &Path) -> CliResult<FileEntry> {
    let bytes = fs::metadata(path).map_err(|e| CliError::io(path, e))?.len();
    Ok(FileEntry { bytes, sha256: sha256_file(path)? })
}

fn walk(dir: &Path, root: &Path, out: &mut Vec<String>) -> CliResult<()> {
    for e in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let p = e.map_err(|e| CliError::io(dir, e))?.path();
        if p.is_dir() {
            walk(&p, root, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            if rel != MANIFEST {
                out.push(rel);
            }
        }
    }
    Ok(())
}

fn digest(inputs: &BTreeMap<String, FileEntry>, files: &BTreeMap<String, FileEntry>) -> String {
    let mut h = Sha256::new();
    for (tag, map) in [("input", inputs), ("file", files)] {
        for (p, e) in map {
            h.update(format!("{tag} {p} {}\n", e.sha256));
        }
    }
    hex(&h.finalize())
}

/// Hash every file under `dir` plus the named inputs and write the manifest.
pub fn write_manifest(dir: &Path, experiment: &str, command: &str, inputs: &[PathBuf]) -> CliResult<Manifest> {
    let mut names = Vec::new();
    walk(dir, dir, &mut names)?;
    let mut files = BTreeMap::new();
    for n in names {
        files.insert(n.clone(), entry(&dir.join(&n))?);
    }
    let mut ins = BTreeMap::new();
    for p in inputs {
        ins.insert(p.display().to_string(), entry(p)?);
    }
    let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: experiment.into(),
        command: command.into(),
        created_unix,
        digest: digest(&ins, &files),
        inputs: ins,
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST), text.as_bytes())?;
    Ok(manifest)
}

/// Recompute every hash; lists each missing, altered or unlisted file.
pub fn verify(dir: &Path) -> CliResult<usize> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let mut problems = Vec::new();
    if digest(&m.inputs, &m.files) != m.digest {
        problems.push("manifest digest does not match its entries".to_string());
    }
    let mut check = |label: &str, p: &Path, want: &FileEntry| match entry(p) {
        Ok(got) if &got == want => {}
        Ok(_) => problems.push(format!("{label} {} changed", p.display())),
        Err(_) => problems.push(format!("{label} {} missing", p.display())),
    };
    for (name, want) in &m.files {
        check("file", &dir.join(name), want);
    }
    for (name, want) in &m.inputs {
        check("input", Path::new(name), want);
    }
    let mut present = Vec::new();
    walk(dir, dir, &mut present)?;
    for p in present.iter().filter(|p| !m.files.contains_key(*p)) {
        problems.push(format!("file {p} not in manifest"));
    }
    if problems.is_empty() {
        Ok(m.files.len() + m.inputs.len())
    } else {
        Err(CliError::Tampered(problems))
    }
}
