//! Line-delimited JSON helpers and atomic file writes.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Key of the optional first-line header record in stage outputs.
pub const HEADER_KEY: &str = "header";

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

impl JsonlError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        JsonlError::Io { path: path.to_path_buf(), source }
    }
}

/// One parsed line with its 1-based line number.
pub type Located<T> = (usize, Result<T, String>);

/// Read every non-blank record of a JSONL file. Header lines are skipped.
/// Per-line parse failures are returned in place so callers can count them.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<Located<T>>, JsonlError> {
    let file = File::open(path).map_err(|e| JsonlError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| JsonlError::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || is_header(trimmed) {
            continue;
        }
        out.push((idx + 1, serde_json::from_str(trimmed).map_err(|e| e.to_string())));
    }
    Ok(out)
}

/// Read a JSONL file, failing on the first malformed record.
pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    read_records(path)?
        .into_iter()
        .map(|(line, r)| r.map_err(|message| JsonlError::Parse { path: path.to_path_buf(), line, message }))
        .collect()
}

fn is_header(line: &str) -> bool {
    line.starts_with("{\"header\"")
}

/// Serialize records to `path` through a temp file and rename.
pub fn write_all<T: Serialize>(
    path: &Path,
    header: Option<&serde_json::Value>,
    records: impl IntoIterator<Item = T>,
) -> Result<(), JsonlError> {
    atomic_write_with(path, |w| {
        if let Some(h) = header {
            let line = serde_json::json!({ HEADER_KEY: h });
            serde_json::to_writer(&mut *w, &line).map_err(io::Error::other)?;
            w.write_all(b"\n")?;
        }
        for r in records {
            serde_json::to_writer(&mut *w, &r).map_err(io::Error::other)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

/// Pretty JSON document written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), JsonlError> {
    atomic_write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
        w.write_all(b"\n")
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, JsonlError> {
    let bytes = fs::read(path).map_err(|e| JsonlError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| JsonlError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Write via `<path>.tmp-<pid>-<n>` then rename, so concurrent writers never
/// expose a partial file.
pub fn atomic_write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), JsonlError> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| JsonlError::io(parent, e))?;
        }
    }
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp-{}-{n}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        drop(w);
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| JsonlError::io(path, e))
}

/// Append-only line log. Each `append` is flushed before returning so an
/// interrupted run loses at most the record being written.
pub struct AppendLog {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl AppendLog {
    pub fn open(path: &Path, truncate: bool) -> Result<Self, JsonlError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| JsonlError::io(parent, e))?;
            }
        }
        if !truncate && path.exists() {
            drop_torn_tail(path)?;
        }
        let mut opts = OpenOptions::new();
        opts.create(true);
        if truncate {
            opts.write(true).truncate(true);
        } else {
            opts.append(true);
        }
        let file = opts.open(path).map_err(|e| JsonlError::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), writer: BufWriter::new(file) })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<(), JsonlError> {
        let path = self.path.clone();
        let mut line = serde_json::to_vec(record).map_err(|e| JsonlError::io(&path, io::Error::other(e)))?;
        line.push(b'\n');
        self.writer.write_all(&line).map_err(|e| JsonlError::io(&path, e))?;
        self.writer.flush().map_err(|e| JsonlError::io(&path, e))
    }
}

/// Cut a partial last line so the next append starts on a fresh line.
fn drop_torn_tail(path: &Path) -> Result<(), JsonlError> {
    let bytes = fs::read(path).map_err(|e| JsonlError::io(path, e))?;
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    if keep < bytes.len() {
        let f = OpenOptions::new().write(true).open(path).map_err(|e| JsonlError::io(path, e))?;
        f.set_len(keep as u64).map_err(|e| JsonlError::io(path, e))?;
    }
    Ok(())
}

/// Read a possibly torn append log: a final line without a trailing newline
/// or that fails to parse is ignored.
pub fn read_log<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| JsonlError::io(path, e))?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    Ok(complete.lines().filter(|l| !l.trim().is_empty()).filter_map(|l| serde_json::from_str(l).ok()).collect())
}
