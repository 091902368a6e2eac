use std::io::{self, BufRead, Write};

use super::check_record;
use crate::error::{Error, Position, RecordErrorKind, Result};
use crate::event::{Event, EventStream, StreamGeometry};

pub fn write_csv<W: Write>(stream: &EventStream, w: &mut W) -> io::Result<()> {
    writeln!(
        w,
        "# width={} height={}",
        stream.geometry.width, stream.geometry.height
    )?;
    for e in &stream.events {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.p)?;
    }
    Ok(())
}

/// Parses `# width=W height=H`. The leading `#` is optional and the two
/// fields may be separated by whitespace or a comma.
fn parse_header(line: &str) -> Result<StreamGeometry> {
    let body = line.trim().trim_start_matches('#');
    let mut width = None;
    let mut height = None;
    for field in body.split(|c: char| c == ',' || c.is_whitespace()) {
        let Some((key, value)) = field.split_once('=') else {
            continue;
        };
        let parsed = value.trim().parse::<u16>().map_err(|_| {
            Error::MalformedHeader(format!("line 1: bad value for {key}: {value:?}"))
        })?;
        match key.trim() {
            "width" => width = Some(parsed),
            "height" => height = Some(parsed),
            _ => {}
        }
    }
    match (width, height) {
        (Some(w), Some(h)) if w > 0 && h > 0 => Ok(StreamGeometry::new(w, h)),
        (Some(w), Some(h)) => Err(Error::MalformedHeader(format!(
            "line 1: degenerate geometry {w}x{h}"
        ))),
        _ => Err(Error::MalformedHeader(
            "line 1: expected `# width=<W> height=<H>`".into(),
        )),
    }
}

fn parse_row(line: &str, line_no: usize) -> Result<Event> {
    let malformed = |detail: String| Error::Record {
        kind: RecordErrorKind::Malformed,
        position: Position::Line(line_no),
        detail,
    };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(malformed(format!("expected 4 fields `t,x,y,p`, got {}", fields.len())));
    }
    let t = fields[0]
        .parse::<u64>()
        .map_err(|_| malformed(format!("bad timestamp {:?}", fields[0])))?;
    let x = fields[1]
        .parse::<u16>()
        .map_err(|_| malformed(format!("bad x {:?}", fields[1])))?;
    let y = fields[2]
        .parse::<u16>()
        .map_err(|_| malformed(format!("bad y {:?}", fields[2])))?;
    let p = fields[3]
        .parse::<i8>()
        .map_err(|_| malformed(format!("bad polarity {:?}", fields[3])))?;
    Ok(Event { x, y, t, p })
}

pub fn read_csv<R: BufRead>(r: R, source_id: impl Into<String>) -> Result<EventStream> {
    let mut lines = r.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::MalformedHeader("empty file".into())),
    };
    let geometry = parse_header(&header)?;
    let mut events = Vec::new();
    let mut prev_t = None;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line_no = i + 2;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let e = parse_row(trimmed, line_no)?;
        check_record(&geometry, &e, prev_t, Position::Line(line_no))?;
        prev_t = Some(e.t);
        events.push(e);
    }
    Ok(EventStream::new(geometry, events, source_id))
}
