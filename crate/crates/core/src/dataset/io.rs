use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, SegmentSample};

pub const DATASET_FORMAT: &str = "stent-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

/// One JSON header line followed by one JSON record per segment. Markers
/// are arrays of five `[x, y, z]` points in marker order.
pub fn write_dataset(samples: &[SegmentSample], out: impl Write) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(out);
    let header = Header {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
    };
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    writeln!(w)?;
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(std::io::Error::from)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(input: impl Read) -> Result<Vec<SegmentSample>, DatasetError> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();
    let header_line = loop {
        match lines.next() {
            None => {
                return Err(DatasetError::Parse {
                    line: 1,
                    message: "empty file: expected a dataset header".into(),
                })
            }
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
        }
    };
    let header: Header = serde_json::from_str(&header_line).map_err(|e| DatasetError::Parse {
        line: 1,
        message: format!("invalid header: {e}"),
    })?;
    if header.format != DATASET_FORMAT {
        return Err(DatasetError::Parse {
            line: 1,
            message: format!("expected format `{DATASET_FORMAT}`, found `{}`", header.format),
        });
    }
    if header.version != DATASET_VERSION {
        return Err(DatasetError::SchemaVersionMismatch {
            found: header.version,
            expected: DATASET_VERSION,
        });
    }
    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let sample: SegmentSample = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: lineno,
            message: format!("record {}: {e}", samples.len() + 1),
        })?;
        sample.validate().map_err(|e| DatasetError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn save_dataset(samples: &[SegmentSample], path: &Path) -> Result<(), DatasetError> {
    write_dataset(samples, File::create(path)?)
}

pub fn load_dataset(path: &Path) -> Result<Vec<SegmentSample>, DatasetError> {
    read_dataset(File::open(path)?)
}
