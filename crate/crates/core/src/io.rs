//! Native file formats.
//!
//! **Recording** (`<stem>.json` + `<stem>.bin` + `<stem>.events.csv`): a JSON
//! sidecar with rate, channel names, units and the names of the two data
//! files; a payload of little-endian `f32` samples, channel-major (all of
//! channel 0, then channel 1, …); and an events table with header
//! `sample_index,label,block_id,task_id`. Samples are stored as `f32`, so
//! values that are not exactly representable are rounded once on write.
//!
//! **Epochs** (single binary file, little-endian):
//!
//! ```text
//! magic "RSVPEPO\0" | version u32 | n u64 | N_c u32 | N_t u32
//! | rate f64 | window start f64 | window end f64
//! | N_c × (name length u32, UTF-8 name)
//! | n × N_c × N_t f64 samples (epoch-major, then channel-major)
//! | n label bytes (1 = target, 0 = standard)
//! | n × (block u32, task u32, onset u64)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{ContinuousRecording, EpochSet, Event, Label, Provenance};

pub const RECORDING_FORMAT: &str = "rsvp-recording";
pub const RECORDING_VERSION: u32 = 1;
pub const EPOCH_MAGIC: &[u8; 8] = b"RSVPEPO\0";
pub const EPOCH_VERSION: u32 = 1;
pub const EVENTS_HEADER: [&str; 4] = ["sample_index", "label", "block_id", "task_id"];

/// JSON sidecar of a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingHeader {
    pub format: String,
    pub version: u32,
    pub rate: f64,
    pub units: String,
    pub channels: Vec<String>,
    pub samples: u64,
    pub payload: String,
    pub dtype: String,
    pub layout: String,
    pub events: String,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Writes the sidecar at `path` and the payload and events next to it.
pub fn write_recording(rec: &ContinuousRecording, path: impl AsRef<Path>) -> Result<()> {
    rec.validate()?;
    let path = path.as_ref();
    let bin = sibling(path, ".bin");
    let csv_path = sibling(path, ".events.csv");
    let header = RecordingHeader {
        format: RECORDING_FORMAT.into(),
        version: RECORDING_VERSION,
        rate: rec.rate,
        units: "uV".into(),
        channels: rec.channels.clone(),
        samples: rec.len() as u64,
        payload: file_name(&bin),
        dtype: "f32le".into(),
        layout: "channel-major".into(),
        events: file_name(&csv_path),
    };
    let mut payload = Vec::with_capacity(rec.n_channels() * rec.len() * 4);
    for row in rec.data.row_iter() {
        for &v in row.iter() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(&bin, payload)?;
    write_events(&rec.events, &csv_path)?;
    fs::write(path, serde_json::to_string_pretty(&header)? + "\n")?;
    Ok(())
}

fn byte_offset(text: &str, line: usize, column: usize) -> u64 {
    let before: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (before + column.saturating_sub(1)) as u64
}

pub fn read_recording(path: impl AsRef<Path>) -> Result<ContinuousRecording> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let header: RecordingHeader = serde_json::from_str(&text).map_err(|e| Error::Format {
        offset: byte_offset(&text, e.line(), e.column()),
        message: format!("malformed recording header: {e}"),
    })?;
    let field = |name: &str| text.find(&format!("\"{name}\"")).unwrap_or(0) as u64;
    if header.format != RECORDING_FORMAT {
        return Err(Error::Format {
            offset: field("format"),
            message: format!("not a recording header (format {:?})", header.format),
        });
    }
    if header.version == 0 || header.version > RECORDING_VERSION {
        return Err(Error::Format {
            offset: field("version"),
            message: format!("unsupported recording version {} (this reader handles {RECORDING_VERSION})", header.version),
        });
    }
    if header.dtype != "f32le" || header.layout != "channel-major" {
        return Err(Error::Format {
            offset: field("dtype"),
            message: format!("unsupported payload encoding {} / {}", header.dtype, header.layout),
        });
    }
    let bytes = fs::read(path.with_file_name(&header.payload))?;
    let n_c = header.channels.len();
    let len = header.samples as usize;
    let expected = n_c * len * 4;
    if bytes.len() != expected {
        return Err(Error::Format {
            offset: bytes.len().min(expected) as u64,
            message: format!(
                "payload {} has {} bytes, expected {expected} ({n_c} channels × {len} samples × 4)",
                header.payload,
                bytes.len()
            ),
        });
    }
    let mut data = DMatrix::zeros(n_c, len);
    for (k, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        data[(k / len.max(1), k % len.max(1))] = v as f64;
    }
    let events = read_events(path.with_file_name(&header.events), len)?;
    ContinuousRecording::new(header.rate, header.channels, data, events)
}

pub fn write_events(events: &[Event], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(EVENTS_HEADER).map_err(csv_error)?;
    for e in events {
        w.write_record([
            e.sample.to_string(),
            e.label.as_str().to_string(),
            e.block.to_string(),
            e.task.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Reads an events table; `samples` bounds the sample indices.
pub fn read_events(path: impl AsRef<Path>, samples: usize) -> Result<Vec<Event>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_error)?;
    let mut events = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut first = true;
    while r.read_record(&mut record).map_err(csv_error)? {
        let line = record.position().map_or(0, |p| p.line());
        if first {
            first = false;
            let header: Vec<&str> = record.iter().map(str::trim).collect();
            if header != EVENTS_HEADER {
                return Err(Error::Parse {
                    line,
                    message: format!("events header {header:?}, expected {}", EVENTS_HEADER.join(",")),
                });
            }
            continue;
        }
        let parse_err = |message: String| Error::Parse { line, message };
        if record.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, found {}", record.len())));
        }
        let num = |i: usize| -> Result<u64> {
            record[i]
                .trim()
                .parse::<u64>()
                .map_err(|e| parse_err(format!("{}: {e} ({:?})", EVENTS_HEADER[i], &record[i])))
        };
        let sample = num(0)? as usize;
        if sample >= samples {
            return Err(parse_err(format!("sample_index {sample} beyond the {samples}-sample payload")));
        }
        let label: Label = record[1].trim().parse().map_err(parse_err)?;
        let to_u32 = |i: usize| -> Result<u32> {
            u32::try_from(num(i)?).map_err(|_| parse_err(format!("{} out of range", EVENTS_HEADER[i])))
        };
        events.push(Event {
            sample,
            label,
            block: to_u32(2)?,
            task: to_u32(3)?,
        });
    }
    if first {
        return Err(Error::Parse {
            line: 1,
            message: "events file is empty (missing header)".into(),
        });
    }
    Ok(events)
}

// ---------------------------------------------------------------------------
// Epochs
// ---------------------------------------------------------------------------

pub fn encode_epochs(set: &EpochSet) -> Result<Vec<u8>> {
    set.validate()?;
    let (n, n_c, n_t) = (set.len(), set.n_channels(), set.n_times());
    let mut out = Vec::with_capacity(64 + n * (n_c * n_t * 8 + 17));
    out.extend_from_slice(EPOCH_MAGIC);
    out.extend_from_slice(&EPOCH_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(n_c as u32).to_le_bytes());
    out.extend_from_slice(&(n_t as u32).to_le_bytes());
    for v in [set.rate, set.window.0, set.window.1] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for name in &set.channels {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for ep in &set.epochs {
        for row in ep.row_iter() {
            for &v in row.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out.extend(set.labels.iter().map(|l| l.is_target() as u8));
    for p in &set.provenance {
        out.extend_from_slice(&p.block.to_le_bytes());
        out.extend_from_slice(&p.task.to_le_bytes());
        out.extend_from_slice(&(p.onset as u64).to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!(
                    "truncated while reading {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_epochs(bytes: &[u8]) -> Result<EpochSet> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8, "magic")? != EPOCH_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not an epoch file (bad magic)".into(),
        });
    }
    let version = c.u32("version")?;
    if version == 0 || version > EPOCH_VERSION {
        return Err(Error::Format {
            offset: 8,
            message: format!("unsupported epoch file version {version} (this reader handles {EPOCH_VERSION})"),
        });
    }
    let n = c.u64("epoch count")? as usize;
    let n_c = c.u32("channel count")? as usize;
    let n_t = c.u32("sample count")? as usize;
    let rate = c.f64("rate")?;
    let window = (c.f64("window start")?, c.f64("window end")?);
    let mut channels = Vec::with_capacity(n_c.min(4096));
    for i in 0..n_c {
        let len = c.u32("channel name length")? as usize;
        let at = c.pos;
        let raw = c.take(len, "channel name")?;
        channels.push(String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            offset: at as u64,
            message: format!("channel name {i} is not UTF-8"),
        })?);
    }
    let body = n
        .checked_mul(n_c * n_t * 8 + 1 + 16)
        .ok_or_else(|| Error::Format {
            offset: 12,
            message: format!("epoch count {n} is implausibly large"),
        })?;
    let remaining = bytes.len() - c.pos;
    if remaining != body {
        return Err(Error::Format {
            offset: (c.pos + remaining.min(body)) as u64,
            message: format!(
                "header declares {n} epochs of {n_c}×{n_t} ({body} payload bytes) but {remaining} bytes follow the header"
            ),
        });
    }
    let mut epochs = Vec::with_capacity(n);
    for _ in 0..n {
        let raw = c.take(n_c * n_t * 8, "epoch samples")?;
        let mut m = DMatrix::zeros(n_c, n_t);
        for (k, chunk) in raw.chunks_exact(8).enumerate() {
            m[(k / n_t, k % n_t)] = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        epochs.push(m);
    }
    let label_start = c.pos;
    let labels = c
        .take(n, "labels")?
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            1 => Ok(Label::Target),
            0 => Ok(Label::Standard),
            other => Err(Error::Format {
                offset: (label_start + i) as u64,
                message: format!("label byte {other} is neither 0 nor 1"),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut provenance = Vec::with_capacity(n);
    for _ in 0..n {
        provenance.push(Provenance {
            block: c.u32("block")?,
            task: c.u32("task")?,
            onset: c.u64("onset")? as usize,
        });
    }
    Ok(EpochSet {
        epochs,
        labels,
        rate,
        window,
        provenance,
        channels,
    })
}

pub fn write_epochs(set: &EpochSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_epochs(set)?)?;
    Ok(())
}

/// Reads an epoch file; an empty set is allowed for inspection.
pub fn read_epochs(path: impl AsRef<Path>) -> Result<EpochSet> {
    decode_epochs(&fs::read(path)?)
}

/// Reads an epoch file for fitting: it must hold both classes.
pub fn read_training_epochs(path: impl AsRef<Path>) -> Result<EpochSet> {
    let set = read_epochs(path)?;
    if set.is_empty() {
        return Err(Error::EmptySet("epoch file holds no epochs".into()));
    }
    set.require_both_classes()?;
    Ok(set)
}
