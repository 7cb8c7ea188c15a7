//! Little-endian primitives shared by the binary file formats.

use std::io::{self, Read, Write};

use crate::{Error, Result};

pub(crate) fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4], what: &'static str) -> Result<()> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    if &buf != magic {
        return Err(Error::format(
            what,
            format!("bad magic {:?}, expected {:?}", buf, magic),
        ));
    }
    Ok(())
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::format(what, "truncated file"),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u8<R: Read>(r: &mut R, what: &'static str) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b, what)?;
    Ok(b[0])
}

pub(crate) fn read_u32<R: Read>(r: &mut R, what: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R, what: &'static str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f32<R: Read>(r: &mut R, what: &'static str) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(f32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R, what: &'static str) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(f64::from_le_bytes(b))
}

/// Rejects trailing bytes after the last record.
pub(crate) fn expect_eof<R: Read>(r: &mut R, what: &'static str) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(Error::format(what, "trailing bytes after last record")),
    }
}

pub(crate) fn u32_field(value: usize, what: &'static str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::format(what, format!("{value} does not fit in u32")))
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
