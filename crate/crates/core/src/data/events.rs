use std::collections::HashSet;
use std::path::Path;

use super::{io_err, DataError, Result};

const MAGIC: &[u8; 4] = b"EVT0";
/// Name of the `filename,label` manifest inside an event dataset directory.
pub const MANIFEST: &str = "labels.csv";
pub const EVENT_CLASSES: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventShape {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl EventShape {
    /// Two polarity channels at 32 x 32.
    pub fn dvs(frames: usize) -> Self {
        Self {
            frames,
            channels: 2,
            height: 32,
            width: 32,
        }
    }

    pub fn features(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.frames * self.features()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Event counts, `frames x channels x height x width`, frame-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSample {
    pub shape: EventShape,
    pub counts: Vec<u8>,
}

impl EventSample {
    pub fn zeros(shape: EventShape) -> Self {
        Self {
            shape,
            counts: vec![0; shape.len()],
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.counts.len());
        out.extend_from_slice(MAGIC);
        let s = self.shape;
        for d in [s.frames, s.channels, s.height, s.width] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.counts);
        out
    }
}

pub fn read_evt0(bytes: &[u8]) -> Result<EventSample> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(DataError::BadMagic(format!(
            "expected EVT0, found {:?}",
            &bytes[..bytes.len().min(4)]
        )));
    }
    if bytes.len() < 20 {
        return Err(DataError::TruncatedFile {
            expected: 20,
            found: bytes.len(),
        });
    }
    let d: Vec<usize> = bytes[4..20]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let shape = EventShape {
        frames: d[0],
        channels: d[1],
        height: d[2],
        width: d[3],
    };
    let expected = 20 + shape.len();
    if bytes.len() < expected {
        return Err(DataError::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    Ok(EventSample {
        shape,
        counts: bytes[20..expected].to_vec(),
    })
}

pub fn write_evt0(path: &Path, sample: &EventSample) -> Result<()> {
    std::fs::write(path, sample.to_bytes()).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventDataset {
    pub shape: EventShape,
    pub samples: Vec<EventSample>,
    pub labels: Vec<usize>,
    pub names: Vec<String>,
}

impl EventDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn parse_manifest(text: &str) -> Result<Vec<(String, usize)>> {
    let mut entries = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, label) = line.split_once(',').ok_or_else(|| DataError::Manifest {
            line: k + 1,
            text: line.to_string(),
        })?;
        let name = name.trim().to_string();
        let label = label.trim();
        if label.is_empty() {
            return Err(DataError::MissingLabel(name));
        }
        let label: usize = label.parse().map_err(|_| DataError::Manifest {
            line: k + 1,
            text: line.to_string(),
        })?;
        if label >= EVENT_CLASSES {
            return Err(DataError::InvalidLabel {
                label,
                classes: EVENT_CLASSES,
            });
        }
        entries.push((name, label));
    }
    Ok(entries)
}

/// Load every sample listed in `<dir>/labels.csv`, in manifest order. Each
/// sample must be 2 x 32 x 32 with `frames` time bins. An `.evt` file in
/// the directory that the manifest does not list is a [`DataError::MissingLabel`].
pub fn load_events(dir: &Path, frames: usize) -> Result<EventDataset> {
    let manifest_path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let entries = parse_manifest(&text)?;
    let listed: HashSet<&str> = entries.iter().map(|(n, _)| n.as_str()).collect();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".evt") && !listed.contains(name.as_str()) {
            return Err(DataError::MissingLabel(name));
        }
    }

    let shape = EventShape::dvs(frames);
    let mut ds = EventDataset {
        shape,
        samples: Vec::with_capacity(entries.len()),
        labels: Vec::with_capacity(entries.len()),
        names: Vec::with_capacity(entries.len()),
    };
    for (name, label) in entries {
        let path = dir.join(&name);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        let sample = read_evt0(&bytes)?;
        if sample.shape != shape {
            return Err(DataError::ShapeMismatch(format!(
                "{name}: {:?}, expected {:?}",
                sample.shape, shape
            )));
        }
        ds.samples.push(sample);
        ds.labels.push(label);
        ds.names.push(name);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let mut s = EventSample::zeros(EventShape::dvs(3));
        s.counts[17] = 4;
        s.counts[2047 + 2048] = 255;
        assert_eq!(read_evt0(&s.to_bytes()).unwrap(), s);

        let mut bad = s.to_bytes();
        bad[3] = b'1';
        assert!(matches!(read_evt0(&bad), Err(DataError::BadMagic(_))));
        let mut short = s.to_bytes();
        short.truncate(100);
        assert!(matches!(read_evt0(&short), Err(DataError::TruncatedFile { .. })));
    }

    #[test]
    fn manifest_labels() {
        let ok: String = (0..11).map(|k| format!("s{k}.evt,{k}\n")).collect();
        assert_eq!(parse_manifest(&ok).unwrap().len(), 11);
        assert!(matches!(
            parse_manifest("a.evt,11\n"),
            Err(DataError::InvalidLabel { label: 11, .. })
        ));
        assert!(matches!(parse_manifest("a.evt,\n"), Err(DataError::MissingLabel(_))));
        assert!(matches!(parse_manifest("a.evt\n"), Err(DataError::Manifest { .. })));
    }
}
