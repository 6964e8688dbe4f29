//! Small helpers shared by the binary file formats.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub(crate) fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], version: u32) -> io::Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(version)
}

pub(crate) fn read_header<R: Read>(
    r: &mut R,
    magic: &[u8; 4],
    version: u32,
    what: &'static str,
) -> Result<()> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got).map_err(|e| eof_as_format(e, what))?;
    if &got != magic {
        return Err(Error::format(what, format!("bad magic {got:?}")));
    }
    let v = r
        .read_u32::<LittleEndian>()
        .map_err(|e| eof_as_format(e, what))?;
    if v != version {
        return Err(Error::format(what, format!("unsupported version {v}")));
    }
    Ok(())
}

/// Truncated input is a format problem, not an I/O failure.
pub(crate) fn eof_as_format(e: io::Error, what: &'static str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::format(what, "unexpected end of input")
    } else {
        Error::Io(e)
    }
}
