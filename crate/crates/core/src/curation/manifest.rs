//! JSON Lines manifest I/O.

use std::io::{self, BufRead, Write};

use super::ImageMetaRecord;

/// One non-blank manifest line, numbered from 1.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifestLine {
    Record { line: usize, record: ImageMetaRecord },
    Malformed { line: usize, raw: String, message: String },
}

impl ManifestLine {
    pub fn line(&self) -> usize {
        match self {
            ManifestLine::Record { line, .. } | ManifestLine::Malformed { line, .. } => *line,
        }
    }
}

/// Parses every line independently so one bad row does not sink the batch.
/// Blank lines are skipped. Only read errors are fatal.
pub fn read_manifest(reader: impl BufRead) -> io::Result<Vec<ManifestLine>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let raw = line?;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        out.push(match serde_json::from_str::<ImageMetaRecord>(trimmed) {
            Ok(record) => ManifestLine::Record {
                line: line_no,
                record,
            },
            Err(e) => ManifestLine::Malformed {
                line: line_no,
                raw,
                message: e.to_string(),
            },
        });
    }
    Ok(out)
}

pub fn write_manifest<'a>(
    mut writer: impl Write,
    records: impl IntoIterator<Item = &'a ImageMetaRecord>,
) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}
