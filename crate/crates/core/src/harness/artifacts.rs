use std::fs;
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::format::real;
use crate::optimizer::{RunTrace, Snapshot};
use crate::Scalar;

pub const TRACE_HEADER: [&str; 5] = ["n", "cumulative_cost", "dist", "dist_sq", "gamma_n"];
pub const SUMMARY_FILE: &str = "summary.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// A file produced by an experiment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArtifactFile {
    pub path: PathBuf,
    pub role: String,
}

/// Files written by an experiment plus its summary key-values.
#[derive(Clone, Debug, Default)]
pub struct ExperimentArtifacts {
    pub out_dir: PathBuf,
    pub files: Vec<ArtifactFile>,
    pub summary: Vec<(String, String)>,
}

impl ExperimentArtifacts {
    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Parses a summary value as `f64`.
    pub fn summary_f64(&self, key: &str) -> Option<f64> {
        self.summary_value(key)?.parse().ok()
    }

    pub fn file_with_role<'a>(
        &'a self,
        role: &'a str,
    ) -> impl Iterator<Item = &'a ArtifactFile> + 'a {
        self.files.iter().filter(move |f| f.role == role)
    }
}

/// In-memory staging area; nothing touches the disk until [`Staging::finalize`].
#[derive(Debug, Default)]
pub(crate) struct Staging {
    files: Vec<(String, String, Vec<u8>)>,
    summary: Vec<(String, String)>,
}

impl Staging {
    pub(crate) fn file(&mut self, name: impl Into<String>, role: &str, bytes: Vec<u8>) {
        self.files.push((name.into(), role.to_string(), bytes));
    }

    pub(crate) fn put(&mut self, key: impl Into<String>, value: impl ToString) {
        self.summary.push((key.into(), value.to_string()));
    }

    pub(crate) fn put_real<T: Scalar>(&mut self, key: impl Into<String>, value: T) {
        self.put(key, real(value));
    }

    /// Writes every staged file, `summary.txt` and `manifest.txt` into
    /// `out_dir`. On failure the files written so far are removed.
    pub(crate) fn finalize(self, out_dir: &Path) -> Result<ExperimentArtifacts, HarnessError> {
        fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
        let mut summary_text = String::new();
        for (k, v) in &self.summary {
            summary_text.push_str(&format!("{k} = {v}\n"));
        }
        let mut files = Vec::with_capacity(self.files.len() + 2);
        let mut manifest = String::new();
        let mut pending: Vec<(PathBuf, &[u8])> = Vec::new();
        for (name, role, bytes) in &self.files {
            let path = out_dir.join(name);
            manifest.push_str(&format!("{role}\t{name}\n"));
            files.push(ArtifactFile {
                path: path.clone(),
                role: role.clone(),
            });
            pending.push((path, bytes));
        }
        manifest.push_str(&format!("summary\t{SUMMARY_FILE}\n"));
        let summary_path = out_dir.join(SUMMARY_FILE);
        let manifest_path = out_dir.join(MANIFEST_FILE);
        files.push(ArtifactFile {
            path: summary_path.clone(),
            role: "summary".into(),
        });
        files.push(ArtifactFile {
            path: manifest_path.clone(),
            role: "manifest".into(),
        });
        pending.push((summary_path, summary_text.as_bytes()));
        pending.push((manifest_path, manifest.as_bytes()));

        let mut written: Vec<&Path> = Vec::new();
        for (path, bytes) in &pending {
            if let Err(e) = fs::write(path, bytes) {
                for p in written {
                    let _ = fs::remove_file(p);
                }
                let _ = fs::remove_file(path);
                return Err(HarnessError::io(path, e));
            }
            written.push(path);
        }
        Ok(ExperimentArtifacts {
            out_dir: out_dir.to_path_buf(),
            files,
            summary: self.summary,
        })
    }
}

/// Builds a CSV document in memory from string rows.
pub(crate) fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>, HarnessError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))
}

pub(crate) fn trace_csv_bytes<T: Scalar>(trace: &RunTrace<T>) -> Result<Vec<u8>, HarnessError> {
    csv_bytes(
        &TRACE_HEADER,
        trace.snapshots.iter().map(|s| {
            vec![
                s.n.to_string(),
                s.cumulative_cost.to_string(),
                real(s.dist),
                real(s.dist_sq),
                real(s.gamma),
            ]
        }),
    )
}

/// Writes one row per snapshot under the header
/// `n,cumulative_cost,dist,dist_sq,gamma_n`, reals with 17 significant
/// digits.
pub fn emit_trace_csv<T: Scalar>(trace: &RunTrace<T>, path: &Path) -> Result<(), HarnessError> {
    let bytes = trace_csv_bytes(trace)?;
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Reads a file written by [`emit_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<Vec<Snapshot<f64>>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(HarnessError::Csv(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<&str, HarnessError> {
            rec.get(i)
                .ok_or_else(|| HarnessError::Csv(format!("{}: short row", path.display())))
        };
        let num = |i: usize| -> Result<f64, HarnessError> {
            field(i)?
                .parse()
                .map_err(|e| HarnessError::Csv(format!("{}: {e}", path.display())))
        };
        let int = |i: usize| -> Result<u64, HarnessError> {
            field(i)?
                .parse()
                .map_err(|e| HarnessError::Csv(format!("{}: {e}", path.display())))
        };
        out.push(Snapshot {
            n: int(0)?,
            cumulative_cost: int(1)?,
            dist: num(2)?,
            dist_sq: num(3)?,
            gamma: num(4)?,
        });
    }
    Ok(out)
}
