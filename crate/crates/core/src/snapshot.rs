//! Binary trajectory snapshots: each record is the sample time, the grid
//! size, and the complex samples as little-endian 64-bit float pairs.
//! Callers keep grid and parameter metadata in a JSON sidecar next to the
//! data file.

use std::io::{self, Read, Write};

use crate::grid::C64;

const MAGIC: &[u8; 8] = b"CGLSNAP1";

/// Append one record to `w`.
pub fn write_record<W: Write>(w: &mut W, t: f64, values: &[C64]) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&t.to_le_bytes())?;
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Read the next record, or `None` at a clean end of stream.
pub fn read_record<R: Read>(r: &mut R) -> io::Result<Option<(f64, Vec<C64>)>> {
    let mut magic = [0u8; 8];
    match r.read_exact(&mut magic) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    if &magic != MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad snapshot record header"));
    }
    let t = read_f64(r)?;
    let mut nbuf = [0u8; 8];
    r.read_exact(&mut nbuf)?;
    let n = u64::from_le_bytes(nbuf);
    if n > (1 << 32) {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "implausible snapshot length"));
    }
    let mut values = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        values.push(C64::new(re, im));
    }
    Ok(Some((t, values)))
}

/// Read every record in the stream.
pub fn read_all<R: Read>(r: &mut R) -> io::Result<Vec<(f64, Vec<C64>)>> {
    let mut out = Vec::new();
    while let Some(rec) = read_record(r)? {
        out.push(rec);
    }
    Ok(out)
}
