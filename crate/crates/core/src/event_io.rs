//! Binary event file format.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    [u8; 4]  = "BPEV"
//! version  u16      = 1
//! nx       u16
//! ny       u16
//! pitch    u32      pixel pitch in whole nanometers
//! exposure u64      nanoseconds
//! seed     u64
//! mode     u8       0 = biphoton, 1 = classical singles
//! count    u64
//! payload  count records of (x u16, y u16, t_ns u64)
//! ```

use crate::error::{Error, Result};
use crate::events::{EventStream, PhotonEvent, StreamHeader, StreamMode};
use crate::grid::Grid2D;
use std::io::{Read, Write};
use std::path::Path;

pub const EVENT_MAGIC: [u8; 4] = *b"BPEV";
pub const EVENT_VERSION: u16 = 1;

pub fn write_events(stream: &EventStream, path: &Path) -> Result<()> {
    let h = &stream.header;
    let pitch_nm = (h.grid.pitch() * 1e9).round();
    if (h.grid.pitch() * 1e9 - pitch_nm).abs() > 1e-3 || pitch_nm < 1.0 {
        return Err(Error::PitchNotRepresentable(h.grid.pitch()));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&EVENT_MAGIC)?;
    out.write_all(&EVENT_VERSION.to_le_bytes())?;
    out.write_all(&(h.grid.nx() as u16).to_le_bytes())?;
    out.write_all(&(h.grid.ny() as u16).to_le_bytes())?;
    out.write_all(&(pitch_nm as u32).to_le_bytes())?;
    out.write_all(&h.exposure_ns.to_le_bytes())?;
    out.write_all(&h.seed.to_le_bytes())?;
    out.write_all(&[h.mode.to_u8()])?;
    out.write_all(&(stream.events.len() as u64).to_le_bytes())?;
    for e in &stream.events {
        out.write_all(&e.x.to_le_bytes())?;
        out.write_all(&e.y.to_le_bytes())?;
        out.write_all(&e.t_ns.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_events(path: &Path) -> Result<EventStream> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);

    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| Error::Truncated("header shorter than magic".into()))?;
    if magic != EVENT_MAGIC {
        return Err(Error::MagicMismatch {
            expected: EVENT_MAGIC,
            found: magic,
        });
    }
    let version = read_u16(&mut file)?;
    if version != EVENT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let nx = read_u16(&mut file)? as usize;
    let ny = read_u16(&mut file)? as usize;
    let pitch_nm = read_u32(&mut file)?;
    let exposure_ns = read_u64(&mut file)?;
    let seed = read_u64(&mut file)?;
    let mut mode_byte = [0u8; 1];
    file.read_exact(&mut mode_byte)
        .map_err(|_| Error::Truncated("header ends before mode byte".into()))?;
    let mode = StreamMode::from_u8(mode_byte[0])?;
    let count = read_u64(&mut file)?;

    let grid = Grid2D::new(nx, ny, pitch_nm as f64 * 1e-9)?;
    let mut events = Vec::with_capacity(count.min(1 << 28) as usize);
    let mut buf = [0u8; 12];
    for i in 0..count {
        file.read_exact(&mut buf)
            .map_err(|_| Error::Truncated(format!("payload ends at record {i} of {count}")))?;
        events.push(PhotonEvent {
            x: u16::from_le_bytes(buf[0..2].try_into().unwrap()),
            y: u16::from_le_bytes(buf[2..4].try_into().unwrap()),
            t_ns: u64::from_le_bytes(buf[4..12].try_into().unwrap()),
        });
    }
    // count must match the payload exactly
    let mut trailing = [0u8; 1];
    let extra = file.read(&mut trailing)?;
    if extra != 0 {
        return Err(Error::CountMismatch {
            header: count,
            payload: count + 1,
        });
    }

    let stream = EventStream {
        header: StreamHeader {
            grid,
            exposure_ns,
            seed,
            mode,
        },
        events,
    };
    stream.validate()?;
    Ok(stream)
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)
        .map_err(|_| Error::Truncated("header ends inside a u16".into()))?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Truncated("header ends inside a u32".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Truncated("header ends inside a u64".into()))?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_stream() -> EventStream {
        EventStream {
            header: StreamHeader {
                grid: Grid2D::square(16, 55e-6).unwrap(),
                exposure_ns: 1_000_000,
                seed: 42,
                mode: StreamMode::Biphoton,
            },
            events: vec![
                PhotonEvent { x: 3, y: 4, t_ns: 10 },
                PhotonEvent { x: 5, y: 4, t_ns: 12 },
                PhotonEvent { x: 0, y: 15, t_ns: 999 },
            ],
        }
    }

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("bpev_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_exact() {
        let s = sample_stream();
        let path = tmp("rt.bpev");
        write_events(&s, &path).unwrap();
        let back = read_events(&path).unwrap();
        assert_eq!(back.events, s.events);
        assert_eq!(back.header.exposure_ns, s.header.exposure_ns);
        assert_eq!(back.header.seed, s.header.seed);
        assert_eq!(back.header.mode, s.header.mode);
        assert_eq!(back.header.grid, s.header.grid);
        // byte-identical rewrite
        let path2 = tmp("rt2.bpev");
        write_events(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn unsorted_payload_rejected() {
        let mut s = sample_stream();
        s.events.swap(0, 2);
        let path = tmp("unsorted.bpev");
        write_events(&s, &path).unwrap();
        assert!(matches!(
            read_events(&path),
            Err(Error::UnsortedEvents { .. })
        ));
    }

    #[test]
    fn count_mismatch_detected() {
        let s = sample_stream();
        let path = tmp("count.bpev");
        write_events(&s, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // shrink the count field by one: payload now holds an extra record
        let count_off = 4 + 2 + 2 + 2 + 4 + 8 + 8 + 1;
        bytes[count_off] = 2;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_events(&path),
            Err(Error::CountMismatch { .. })
        ));
    }

    #[test]
    fn truncated_payload_detected() {
        let s = sample_stream();
        let path = tmp("trunc.bpev");
        write_events(&s, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_events(&path), Err(Error::Truncated(_))));
    }

    #[test]
    fn bad_magic_detected() {
        let path = tmp("magic.bpev");
        std::fs::write(&path, b"EVNT").unwrap();
        assert!(matches!(
            read_events(&path),
            Err(Error::MagicMismatch { .. })
        ));
    }

    #[test]
    fn out_of_grid_event_rejected() {
        let mut s = sample_stream();
        s.events[2].x = 16; // grid is 16 wide: valid x are 0..=15
        s.events[2].t_ns = 2000;
        let path = tmp("oob.bpev");
        write_events(&s, &path).unwrap();
        assert!(matches!(
            read_events(&path),
            Err(Error::EventOutOfGrid { .. })
        ));
    }
}
