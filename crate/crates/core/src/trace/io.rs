//! Newline-delimited JSON streams and the manifest document.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{InferenceTrace, PowerSample, TokenEvent, TraceError, TraceManifest};
use crate::fsutil::atomic_write;

fn open(path: &Path) -> Result<BufReader<File>, TraceError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn read_ndjson<T: DeserializeOwned, R: BufRead>(
    reader: R,
    label: &Path,
) -> Result<Vec<T>, TraceError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| TraceError::Io {
            path: label.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| TraceError::MalformedRecord {
            path: label.to_path_buf(),
            line: n + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_power_stream(path: &Path) -> Result<Vec<PowerSample>, TraceError> {
    read_ndjson(open(path)?, path)
}

pub fn read_token_stream(path: &Path) -> Result<Vec<TokenEvent>, TraceError> {
    read_ndjson(open(path)?, path)
}

/// Parses a token stream from any reader; `label` is used in diagnostics.
pub fn parse_token_stream<R: BufRead>(
    reader: R,
    label: &Path,
) -> Result<Vec<TokenEvent>, TraceError> {
    read_ndjson(reader, label)
}

pub fn read_manifest(path: &Path) -> Result<TraceManifest, TraceError> {
    let reader = open(path)?;
    serde_json::from_reader(reader).map_err(|e| TraceError::MalformedRecord {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads a manifest and both streams it references, then validates the
/// assembled trace.
pub fn parse_trace(manifest_path: &Path) -> Result<InferenceTrace, TraceError> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let samples = read_power_stream(&resolve(base, &manifest.samples_path))?;
    let tokens = read_token_stream(&resolve(base, &manifest.tokens_path))?;
    InferenceTrace::new(manifest, samples, tokens)
}

fn write_ndjson<T: Serialize, W: Write>(mut w: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_power_stream<W: Write>(w: W, samples: &[PowerSample]) -> std::io::Result<()> {
    write_ndjson(w, samples)
}

pub fn write_token_stream<W: Write>(w: W, tokens: &[TokenEvent]) -> std::io::Result<()> {
    write_ndjson(w, tokens)
}

/// Writes the manifest as `<dir>/<trace_id>.manifest.json` and both streams
/// at the manifest's (dir-relative) stream paths. Returns the manifest path.
pub fn write_trace(trace: &InferenceTrace, dir: &Path) -> std::io::Result<PathBuf> {
    let m = &trace.manifest;

    let mut buf = Vec::new();
    write_power_stream(&mut buf, &trace.samples)?;
    atomic_write(&resolve(dir, &m.samples_path), &buf)?;

    buf.clear();
    write_token_stream(&mut buf, &trace.tokens)?;
    atomic_write(&resolve(dir, &m.tokens_path), &buf)?;

    let mut doc = serde_json::to_vec_pretty(m)?;
    doc.push(b'\n');
    let manifest_path = dir.join(format!("{}.manifest.json", m.trace_id));
    atomic_write(&manifest_path, &doc)?;
    Ok(manifest_path)
}
