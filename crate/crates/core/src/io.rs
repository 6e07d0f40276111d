//! Run persistence: `t,re,im` series, schema-versioned JSON and the run
//! manifest listing every file a run wrote.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::forward::Measurement;
use crate::grid::Grid1D;

pub const SCHEMA_VERSION: u32 = 1;
pub const COMPLEX_COLUMNS: [&str; 3] = ["t", "re", "im"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexRow {
    pub t: f64,
    pub re: f64,
    pub im: f64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map(|p| format!(" (row {})", p.line())).unwrap_or_default();
    Error::Parse(format!("{}{row}: {e}", path.display()))
}

/// Writes records with a header row taken from the record's field names.
pub fn write_csv<S: Serialize>(path: &Path, records: impl IntoIterator<Item = S>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records after checking the header against `columns`.
pub fn read_csv<D: DeserializeOwned>(path: &Path, columns: &[&str]) -> Result<Vec<D>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    for (k, want) in columns.iter().enumerate() {
        match header.get(k) {
            Some(found) if found.trim() == *want => {}
            found => {
                return Err(Error::Parse(format!(
                    "{}: column {} should be `{want}`, found `{}`",
                    path.display(),
                    k + 1,
                    found.unwrap_or("")
                )))
            }
        }
    }
    if header.len() != columns.len() {
        return Err(Error::Parse(format!(
            "{}: expected {} columns, found {}",
            path.display(),
            columns.len(),
            header.len()
        )));
    }
    r.deserialize().map(|rec| rec.map_err(|e| csv_error(path, e))).collect()
}

pub fn write_complex_series(path: &Path, times: &[f64], values: &[Complex64]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::Shape { what: "series times".into(), expected: values.len(), found: times.len() });
    }
    write_csv(path, times.iter().zip(values).map(|(t, v)| ComplexRow { t: *t, re: v.re, im: v.im }))
}

pub fn read_complex_series(path: &Path) -> Result<(Vec<f64>, Vec<Complex64>)> {
    let rows: Vec<ComplexRow> = read_csv(path, &COMPLEX_COLUMNS)?;
    if let Some(k) = rows.iter().position(|r| !(r.t.is_finite() && r.re.is_finite() && r.im.is_finite())) {
        return Err(Error::Parse(format!("{}: non-finite value in data row {}", path.display(), k + 1)));
    }
    Ok(rows.iter().map(|r| (r.t, Complex64::new(r.re, r.im))).unzip())
}

pub fn write_measurement(path: &Path, m: &Measurement) -> Result<()> {
    write_complex_series(path, &m.times, &m.flux)
}

/// Reads a flux series and checks it against the forward window of `grid`.
pub fn read_measurement(path: &Path, grid: &Grid1D, sigma: f64, seed: u64) -> Result<Measurement> {
    let (times, flux) = read_complex_series(path)?;
    let expected = grid.forward_ts();
    if times.len() != expected.len() {
        return Err(Error::Shape { what: "measurement rows".into(), expected: expected.len(), found: times.len() });
    }
    let tol = 1e-9 * grid.horizon().max(1.0);
    if let Some(k) = times.iter().zip(&expected).position(|(t, e)| (t - e).abs() > tol) {
        return Err(Error::Parse(format!(
            "{}: data row {} has t = {}, grid expects {}",
            path.display(),
            k + 1,
            times[k],
            expected[k]
        )));
    }
    let m = Measurement { times, flux, sigma, seed };
    m.check_grid(grid)?;
    Ok(m)
}

/// `{"schema": kind, "schema_version": N, "data": value}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema: String,
    pub schema_version: u32,
    pub data: T,
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, data: &T) -> Result<()> {
    let doc = Versioned { schema: kind.to_string(), schema_version: SCHEMA_VERSION, data };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let doc: Versioned<serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if doc.schema != kind || doc.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "{}: schema {} v{} where {kind} v{SCHEMA_VERSION} was expected",
            path.display(),
            doc.schema,
            doc.schema_version
        )));
    }
    serde_json::from_value(doc.data).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    /// Absent for files that record timings.
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config_hash: String,
    pub config: RunConfig,
    pub versions: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
    pub wall_time_seconds: f64,
}

impl Manifest {
    /// Everything except the wall-time field.
    pub fn reproducible_part(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("wall_time_seconds");
        }
        v
    }
}

/// Collects the files of one run in an output directory; every write goes
/// through here so the manifest lists them all.
pub struct RunWriter {
    dir: PathBuf,
    files: Vec<(String, bool)>,
    started: Instant,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), started: Instant::now() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn track(&mut self, name: &str, volatile: bool) -> PathBuf {
        match self.files.iter_mut().find(|f| f.0 == name) {
            Some(f) => f.1 = volatile,
            None => self.files.push((name.to_string(), volatile)),
        }
        self.dir.join(name)
    }

    pub fn csv<S: Serialize>(&mut self, name: &str, records: impl IntoIterator<Item = S>) -> Result<()> {
        let path = self.track(name, false);
        write_csv(&path, records)
    }

    pub fn series(&mut self, name: &str, times: &[f64], values: &[Complex64]) -> Result<()> {
        let path = self.track(name, false);
        write_complex_series(&path, times, values)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, kind: &str, data: &T) -> Result<()> {
        let path = self.track(name, false);
        write_json(&path, kind, data)
    }

    /// JSON carrying wall-clock timings; listed without a hash.
    pub fn json_timed<T: Serialize>(&mut self, name: &str, kind: &str, data: &T) -> Result<()> {
        let path = self.track(name, true);
        write_json(&path, kind, data)
    }

    /// Writes `manifest.json` with hashes of every tracked file.
    pub fn finish(
        self,
        command: &str,
        config: &RunConfig,
        threads: Option<usize>,
        versions: BTreeMap<String, String>,
    ) -> Result<Manifest> {
        let mut files = Vec::with_capacity(self.files.len());
        for (name, volatile) in &self.files {
            let bytes = std::fs::read(self.dir.join(name))?;
            files.push(FileEntry {
                name: name.clone(),
                sha256: (!volatile).then(|| hex::encode(Sha256::digest(&bytes))),
            });
        }
        let manifest = Manifest {
            command: command.to_string(),
            seed: config.seed,
            threads,
            config_hash: config.hash(),
            config: config.clone(),
            versions,
            files,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&self.dir.join("manifest.json"), "cbrec.manifest", &manifest)?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join("manifest.json"), "cbrec.manifest")
}
