//! Event file interchange and voxel-grid export.
//!
//! Two formats are supported:
//!
//! * `EVS1` binary, little-endian: magic `EVS1`, `u16` width, `u16` height,
//!   `u64` event count, then fixed 16-byte records
//!   `u64 t | u16 x | u16 y | i8 p | 3 zero bytes`.
//! * CSV text: a `# width=<W> height=<H>` header line followed by `t,x,y,p`
//!   rows.
//!
//! Readers validate every record and report the byte offset (binary) or line
//! number (text) of the first problem.

mod csv;
mod evs1;
mod voxel;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Position, RecordErrorKind, Result};
use crate::event::{check_event, Event, EventStream, StreamGeometry, ViolationKind};

pub use self::csv::{read_csv, write_csv};
pub use self::evs1::{read_evs1, write_evs1, EVS1_HEADER_LEN, EVS1_MAGIC, EVS1_RECORD_LEN};
pub use self::voxel::{to_voxel_grid, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Evs1Binary,
    CsvText,
}

impl FileFormat {
    /// `.csv` maps to CSV, everything else to EVS1.
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::CsvText,
            _ => FileFormat::Evs1Binary,
        }
    }
}

/// Source id used for seed derivation: the file stem.
pub fn source_id_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn read_events(path: &Path, format: FileFormat) -> Result<EventStream> {
    let reader = BufReader::new(File::open(path)?);
    let source_id = source_id_for(path);
    match format {
        FileFormat::Evs1Binary => read_evs1(reader, source_id),
        FileFormat::CsvText => read_csv(reader, source_id),
    }
}

pub fn write_events(stream: &EventStream, path: &Path, format: FileFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        FileFormat::Evs1Binary => write_evs1(stream, &mut w)?,
        FileFormat::CsvText => write_csv(stream, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

/// Shared record validation for both readers.
fn check_record(
    geometry: &StreamGeometry,
    e: &Event,
    prev_t: Option<u64>,
    position: Position,
) -> Result<()> {
    match check_event(geometry, e, prev_t).next() {
        None => Ok(()),
        Some(kind) => {
            let (kind, detail) = match kind {
                ViolationKind::OutOfBounds => (
                    RecordErrorKind::OutOfBounds,
                    format!(
                        "({}, {}) outside {}x{}",
                        e.x, e.y, geometry.width, geometry.height
                    ),
                ),
                ViolationKind::InvalidPolarity => {
                    (RecordErrorKind::InvalidPolarity, format!("p = {}", e.p))
                }
                ViolationKind::TimestampInversion => (
                    RecordErrorKind::TimestampInversion,
                    format!("t = {} after t = {}", e.t, prev_t.unwrap_or_default()),
                ),
            };
            Err(Error::Record {
                kind,
                position,
                detail,
            })
        }
    }
}
