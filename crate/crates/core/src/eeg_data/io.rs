//! NEEG binary records, the debug CSV record format, and annotation files.
//!
//! NEEG layout (little-endian):
//!
//! ```text
//! "NEEG" | version u16 = 1 | n_channels u16 | sample_rate f32 | n_samples u64
//! n_channels × (name_len u16 | UTF-8 name)
//! n_channels × n_samples × f32 microvolts, channel-major
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{AnnotationSet, EegRecord};
use crate::error::{Error, Result};

pub const NEEG_MAGIC: &[u8; 4] = b"NEEG";
pub const NEEG_VERSION: u16 = 1;

/// Loads a record, choosing the format from the file contents: NEEG when the
/// magic matches, the CSV debug format otherwise. The subject id is the file
/// stem.
pub fn load_record(path: impl AsRef<Path>) -> Result<EegRecord> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let subject = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
    if bytes.is_empty() {
        return Err(Error::Format(format!("{} is empty", path.display())));
    }
    if bytes.starts_with(NEEG_MAGIC) {
        read_neeg(&mut bytes.as_slice(), subject)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Format("not NEEG and not UTF-8 CSV".into()))?;
        record_from_csv(&text, subject)
    }
}

/// Writes NEEG unless the path ends in `.csv`.
pub fn write_record(record: &EegRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        record_to_csv(record).into_bytes()
    } else {
        let mut buf = Vec::with_capacity(neeg_size(record));
        write_neeg(record, &mut buf).map_err(|e| Error::io(path, e))?;
        buf
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn neeg_size(record: &EegRecord) -> usize {
    20 + record.channel_names().iter().map(|n| 2 + n.len()).sum::<usize>() + record.data().len() * 4
}

pub fn write_neeg(record: &EegRecord, out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(NEEG_MAGIC)?;
    out.write_all(&NEEG_VERSION.to_le_bytes())?;
    out.write_all(&(record.n_channels() as u16).to_le_bytes())?;
    out.write_all(&record.sample_rate_f32().to_le_bytes())?;
    out.write_all(&(record.n_samples() as u64).to_le_bytes())?;
    for name in record.channel_names() {
        out.write_all(&(name.len() as u16).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
    }
    let mut payload = Vec::with_capacity(record.data().len() * 4);
    for v in record.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&payload)
}

pub fn read_neeg(input: &mut impl Read, subject_id: impl Into<String>) -> Result<EegRecord> {
    let truncated = |what: &str| Error::Format(format!("truncated NEEG header ({what})"));
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
    if &magic != NEEG_MAGIC {
        return Err(Error::Format("bad NEEG magic".into()));
    }
    let version = read_u16(input).map_err(|_| truncated("version"))?;
    if version != NEEG_VERSION {
        return Err(Error::Format(format!("unsupported NEEG version {version}")));
    }
    let n_channels = read_u16(input).map_err(|_| truncated("channel count"))? as usize;
    let mut rate = [0u8; 4];
    input.read_exact(&mut rate).map_err(|_| truncated("sample rate"))?;
    let sample_rate = f32::from_le_bytes(rate);
    let mut ns = [0u8; 8];
    input.read_exact(&mut ns).map_err(|_| truncated("sample count"))?;
    let n_samples = usize::try_from(u64::from_le_bytes(ns)).map_err(|_| Error::Format("sample count overflows".into()))?;
    if n_channels == 0 {
        return Err(Error::Format("NEEG header declares zero channels".into()));
    }
    let mut names = Vec::with_capacity(n_channels);
    for i in 0..n_channels {
        let len = read_u16(input).map_err(|_| truncated("channel name"))? as usize;
        let mut raw = vec![0u8; len];
        input.read_exact(&mut raw).map_err(|_| truncated("channel name"))?;
        names.push(String::from_utf8(raw).map_err(|_| Error::Format(format!("channel name {i} is not UTF-8")))?);
    }
    let n_values = n_channels
        .checked_mul(n_samples)
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let mut payload = Vec::new();
    input.read_to_end(&mut payload).map_err(|e| Error::Format(e.to_string()))?;
    if payload.len() != n_values * 4 {
        return Err(Error::Shape(format!(
            "payload holds {} bytes, header requires {n_channels} x {n_samples} f32 ({} bytes)",
            payload.len(),
            n_values * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    EegRecord::from_flat(subject_id, sample_rate, names, n_samples, data)
}

fn read_u16(input: &mut impl Read) -> std::io::Result<u16> {
    let mut b = [0u8; 2];
    input.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

/// Debug format: `# sample_rate=<Hz>`, a header of channel names, then one
/// row per sample with one column per channel.
pub fn record_to_csv(record: &EegRecord) -> String {
    let mut out = format!("# sample_rate={}\n{}\n", record.sample_rate_f32(), record.channel_names().join(","));
    for i in 0..record.n_samples() {
        let row: Vec<String> = record.channels().map(|c| c[i].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn record_from_csv(text: &str, subject_id: impl Into<String>) -> Result<EegRecord> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let rate_line = lines.next().ok_or_else(|| Error::Format("empty CSV record".into()))?;
    let sample_rate: f32 = rate_line
        .trim()
        .strip_prefix("# sample_rate=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("expected '# sample_rate=<Hz>', found '{rate_line}'")))?;
    let header = lines.next().ok_or_else(|| Error::Format("CSV record has no header".into()))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut channels = vec![Vec::new(); names.len()];
    for (row_idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::Shape(format!(
                "CSV row {row_idx} has {} columns, header has {}",
                fields.len(),
                names.len()
            )));
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f32 = f
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad value '{f}' at (channel {c}, sample {row_idx})")))?;
            channels[c].push(v);
        }
    }
    EegRecord::new(subject_id, sample_rate, names, channels)
}

/// Loads an annotation CSV; `n_channels` bounds strong-event channels.
pub fn load_annotations(path: impl AsRef<Path>, n_channels: Option<usize>) -> Result<AnnotationSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let subject = path
        .file_name()
        .and_then(|s| s.to_str())
        .map(|s| s.split('.').next().unwrap_or(s).to_string())
        .unwrap_or_default();
    AnnotationSet::from_csv_str(subject, &text, n_channels)
}

pub fn write_annotations(set: &AnnotationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, set.to_csv_string()).map_err(|e| Error::io(path, e))
}

/// Annotation file paired with a record: `<dir>/<subject>.annotations.csv`.
pub fn annotation_path(record_path: &Path) -> std::path::PathBuf {
    let stem = record_path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    record_path.with_file_name(format!("{stem}.annotations.csv"))
}

/// Loads every `<subject>.neeg` in `dir` (sorted by name) together with its
/// annotation file.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<(EegRecord, AnnotationSet)>> {
    let dir = dir.as_ref();
    let mut paths: Vec<std::path::PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "neeg"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Format(format!("no .neeg records in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let record = load_record(p)?;
            let ann = load_annotations(annotation_path(p), Some(record.n_channels()))?;
            ann.check_duration(record.duration())?;
            Ok((record, ann))
        })
        .collect()
}

/// Writes `<subject>.neeg` and `<subject>.annotations.csv` per subject.
pub fn write_dataset(dir: impl AsRef<Path>, subjects: &[(EegRecord, AnnotationSet)]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (record, ann) in subjects {
        let path = dir.join(format!("{}.neeg", record.subject_id));
        write_record(record, &path)?;
        write_annotations(ann, annotation_path(&path))?;
    }
    Ok(())
}
