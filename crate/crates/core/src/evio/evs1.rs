use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::check_record;
use crate::error::{Error, Position, RecordErrorKind, Result};
use crate::event::{Event, EventStream, StreamGeometry};

pub const EVS1_MAGIC: &[u8; 4] = b"EVS1";
pub const EVS1_HEADER_LEN: u64 = 16;
pub const EVS1_RECORD_LEN: u64 = 16;

pub fn write_evs1<W: Write>(stream: &EventStream, w: &mut W) -> io::Result<()> {
    w.write_all(EVS1_MAGIC)?;
    w.write_u16::<LittleEndian>(stream.geometry.width)?;
    w.write_u16::<LittleEndian>(stream.geometry.height)?;
    w.write_u64::<LittleEndian>(stream.events.len() as u64)?;
    for e in &stream.events {
        w.write_u64::<LittleEndian>(e.t)?;
        w.write_u16::<LittleEndian>(e.x)?;
        w.write_u16::<LittleEndian>(e.y)?;
        w.write_i8(e.p)?;
        w.write_all(&[0u8; 3])?;
    }
    Ok(())
}

pub fn read_evs1<R: Read>(mut r: R, source_id: impl Into<String>) -> Result<EventStream> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::MalformedHeader("file shorter than the 16-byte header".into()))?;
    if &magic != EVS1_MAGIC {
        return Err(Error::MalformedHeader(format!("bad magic {magic:?}")));
    }
    let header = (|| -> io::Result<(u16, u16, u64)> {
        Ok((
            r.read_u16::<LittleEndian>()?,
            r.read_u16::<LittleEndian>()?,
            r.read_u64::<LittleEndian>()?,
        ))
    })();
    let (width, height, count) =
        header.map_err(|_| Error::MalformedHeader("file shorter than the 16-byte header".into()))?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "degenerate geometry {width}x{height}"
        )));
    }
    let geometry = StreamGeometry::new(width, height);

    // The declared count is untrusted, so cap the preallocation.
    let mut events = Vec::with_capacity(count.min(1 << 20) as usize);
    let mut record = [0u8; EVS1_RECORD_LEN as usize];
    let mut prev_t = None;
    for i in 0..count {
        let offset = EVS1_HEADER_LEN + i * EVS1_RECORD_LEN;
        read_record(&mut r, &mut record).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Record {
                kind: RecordErrorKind::Truncated,
                position: Position::Byte(offset),
                detail: format!("record {i} of {count} declared"),
            },
            _ => Error::Io(e),
        })?;
        let mut cur = &record[..];
        let t = cur.read_u64::<LittleEndian>()?;
        let x = cur.read_u16::<LittleEndian>()?;
        let y = cur.read_u16::<LittleEndian>()?;
        let p = cur.read_i8()?;
        if cur.iter().any(|&b| b != 0) {
            return Err(Error::Record {
                kind: RecordErrorKind::Malformed,
                position: Position::Byte(offset + 13),
                detail: format!("non-zero padding bytes {cur:?}"),
            });
        }
        let e = Event { x, y, t, p };
        check_record(&geometry, &e, prev_t, Position::Byte(offset))?;
        prev_t = Some(t);
        events.push(e);
    }

    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Record {
            kind: RecordErrorKind::Malformed,
            position: Position::Byte(EVS1_HEADER_LEN + count * EVS1_RECORD_LEN),
            detail: "trailing bytes after the declared records".into(),
        });
    }
    Ok(EventStream::new(geometry, events, source_id))
}

fn read_record<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<()> {
    r.read_exact(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EventStream {
        EventStream::new(
            StreamGeometry::new(4, 3),
            vec![Event::new(1, 2, 10, -1), Event::new(3, 0, 11, 1)],
            "s",
        )
    }

    fn encode(s: &EventStream) -> Vec<u8> {
        let mut buf = Vec::new();
        write_evs1(s, &mut buf).unwrap();
        buf
    }

    #[test]
    fn layout_is_bit_exact() {
        let buf = encode(&sample());
        assert_eq!(buf.len(), 16 + 2 * 16);
        assert_eq!(&buf[..4], b"EVS1");
        assert_eq!(&buf[4..8], &[4, 0, 3, 0]);
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &10u64.to_le_bytes());
        assert_eq!(&buf[24..32], &[1, 0, 2, 0, 0xff, 0, 0, 0]);
    }

    #[test]
    fn two_event_round_trip() {
        let s = sample();
        let back = read_evs1(&encode(&s)[..], "s").unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn empty_stream_has_zero_count() {
        let s = EventStream::empty(StreamGeometry::new(5, 5), "e");
        let buf = encode(&s);
        assert_eq!(buf.len(), 16);
        assert_eq!(read_evs1(&buf[..], "e").unwrap(), s);
    }

    #[test]
    fn u16_boundary_round_trip() {
        let s = EventStream::new(
            StreamGeometry::new(65535, 65535),
            vec![Event::new(65534, 65534, u64::MAX, 1), Event::new(0, 65534, u64::MAX, -1)],
            "b",
        );
        assert_eq!(read_evs1(&encode(&s)[..], "b").unwrap(), s);
    }

    #[test]
    fn short_file_is_truncated_error() {
        let s = EventStream::new(
            StreamGeometry::new(4, 3),
            (0..4).map(|i| Event::new(1, 1, i, 1)).collect(),
            "s",
        );
        let mut buf = encode(&s);
        buf[8..16].copy_from_slice(&5u64.to_le_bytes());
        match read_evs1(&buf[..], "s") {
            Err(Error::Record {
                kind: RecordErrorKind::Truncated,
                position: Position::Byte(off),
                ..
            }) => assert_eq!(off, 16 + 4 * 16),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let mut buf = encode(&sample());
        buf[0] = b'X';
        assert!(matches!(read_evs1(&buf[..], "s"), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn out_of_bounds_record_rejected_with_offset() {
        let mut buf = encode(&sample());
        // x of record 1 := 4 (width is 4)
        buf[16 + 16 + 8] = 4;
        match read_evs1(&buf[..], "s") {
            Err(Error::Record {
                kind: RecordErrorKind::OutOfBounds,
                position: Position::Byte(32),
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverted_timestamps_rejected() {
        let s = EventStream::new(
            StreamGeometry::new(4, 3),
            vec![Event::new(1, 2, 10, -1), Event::new(3, 0, 9, 1)],
            "s",
        );
        assert!(matches!(
            read_evs1(&encode(&s)[..], "s"),
            Err(Error::Record {
                kind: RecordErrorKind::TimestampInversion,
                ..
            })
        ));
    }

    #[test]
    fn nonzero_padding_rejected() {
        let mut buf = encode(&sample());
        buf[31] = 1;
        assert!(read_evs1(&buf[..], "s").is_err());
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut buf = encode(&sample());
        buf.push(0);
        assert!(read_evs1(&buf[..], "s").is_err());
    }
}
