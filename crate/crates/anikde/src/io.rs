//! File formats and the run directory.
//!
//! CSV is comma separated with LF line endings and floats printed with 17
//! significant digits, which round-trips every `f64`. Every file is written
//! to a sibling temporary and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Shortest-safe text for a float: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// CSV text from a header and rows of already formatted cells.
pub fn csv_text<I, R>(header: &[String], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.as_ref().join(","));
        out.push('\n');
    }
    out
}

/// Whitespace-separated plot data with a `#` comment header.
pub fn dat_text(columns: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", columns.join(" "));
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

/// Parses comma-separated points. Blank lines are skipped; every other line
/// must hold the same number of finite numbers. Returns `(dim, flattened)`.
pub fn parse_points(path: &Path, text: &str, header: bool) -> CliResult<(usize, Vec<f64>)> {
    let mut dim = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if header && i == 0 {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |reason: String| CliError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let mut count = 0;
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("not a number: {:?}", cell.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value {v}")));
            }
            out.push(v);
            count += 1;
        }
        match dim {
            None => dim = Some(count),
            Some(d) if d != count => return Err(parse_err(format!("expected {d} columns, found {count}"))),
            _ => {}
        }
    }
    match dim {
        Some(d) => Ok((d, out)),
        None => Err(CliError::Parse {
            path: path.to_path_buf(),
            line: text.lines().count(),
            reason: "no data rows".into(),
        }),
    }
}

pub fn read_points(path: &Path, header: bool) -> CliResult<(usize, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_points(path, &text, header)
}

/// One file written by a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Path relative to the run directory, `/` separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// A run directory that records every file it writes.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    outputs: Vec<OutputRecord>,
}

impl RunDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        atomic_write(&self.root.join(rel), bytes)?;
        self.outputs.retain(|o| o.path != rel);
        self.outputs.push(OutputRecord {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn write_json(&mut self, rel: &str, value: &serde_json::Value) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn outputs(&self) -> &[OutputRecord] {
        &self.outputs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn points_parse_with_line_numbers() {
        let p = Path::new("data.csv");
        let (d, v) = parse_points(p, "x,y\n1,2\n\n3, 4\n", true).unwrap();
        assert_eq!((d, v), (2, vec![1.0, 2.0, 3.0, 4.0]));
        let e = parse_points(p, "1,2\n3\n", false).unwrap_err();
        assert!(e.to_string().contains("data.csv:2:"), "{e}");
        assert_eq!(e.exit_code(), 1);
        let e = parse_points(p, "1,2\n3,abc\n", false).unwrap_err();
        assert!(e.to_string().contains(":2:") && e.to_string().contains("abc"), "{e}");
        let e = parse_points(p, "1,nan\n", false).unwrap_err();
        assert!(e.to_string().contains(":1:"), "{e}");
        assert!(parse_points(p, "\n\n", false).is_err());
    }

    #[test]
    fn run_dir_records_hashes() {
        let tmp = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(tmp.path()).unwrap();
        run.write("a/b.csv", b"x\n").unwrap();
        run.write("a/b.csv", b"y\n").unwrap();
        assert_eq!(run.outputs().len(), 1);
        assert_eq!(run.outputs()[0].sha256, sha256_hex(b"y\n"));
        assert_eq!(fs::read(tmp.path().join("a/b.csv")).unwrap(), b"y\n");
        assert!(!tmp.path().join("a/b.csv.tmp").exists());
    }

    #[test]
    fn csv_layout() {
        let text = csv_text(&["a".into(), "b".into()], [vec!["1".to_string(), "2".to_string()]]);
        assert_eq!(text, "a,b\n1,2\n");
        assert_eq!(dat_text(&["x", "y"], &[vec![1.0, 2.0]]), "# x y\n1.0000000000000000e0 2.0000000000000000e0\n");
    }
}
