//! Field dumps: a small little-endian binary format and a per-cell CSV.
//!
//! Binary layout: magic `ISMF`, `u8` dim, `u8` components, `u16` reserved
//! (zero), then one `u32` cell count per axis, zero-padded to at least 16
//! header bytes, followed by the row-major `f64` values.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const MAGIC: &[u8; 4] = b"ISMF";

pub fn header_len(dim: usize) -> usize {
    (8 + 4 * dim).max(16)
}

pub fn write_binary<W: Write>(field: &Field, mut w: W) -> Result<()> {
    let g = field.grid();
    let mut header = Vec::with_capacity(header_len(g.dim()));
    header.extend_from_slice(MAGIC);
    header.push(g.dim() as u8);
    header.push(field.ncomp() as u8);
    header.extend_from_slice(&0u16.to_le_bytes());
    for &n in g.cells() {
        header.extend_from_slice(&(n as u32).to_le_bytes());
    }
    header.resize(header_len(g.dim()), 0);
    w.write_all(&header)?;
    for x in field.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Read a dump back; the caller supplies the box extents, which the format
/// does not carry.
pub fn read_binary<R: Read>(mut r: R, extents: &[f64]) -> Result<Field> {
    let mut fixed = [0u8; 8];
    r.read_exact(&mut fixed)?;
    if &fixed[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let dim = fixed[4] as usize;
    let ncomp = fixed[5] as usize;
    if dim != extents.len() {
        return Err(Error::shape(format!("{} axes", extents.len()), format!("{dim} axes")));
    }
    let mut rest = vec![0u8; header_len(dim) - 8];
    r.read_exact(&mut rest)?;
    let cells: Vec<usize> = rest
        .chunks_exact(4)
        .take(dim)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .collect();
    let grid = Grid::new(extents, &cells)?;
    let mut bytes = vec![0u8; grid.len() * ncomp * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Field::from_data(grid, ncomp, data)
}

pub fn save_binary(field: &Field, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_binary(field, std::io::BufWriter::new(f))
}

/// One row per cell: `x[,y[,z]],c0[,c1,...]`.
pub fn write_csv<W: Write>(field: &Field, w: W) -> Result<()> {
    let g = field.grid();
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["x", "y", "z"][..g.dim()].iter().map(|s| s.to_string()).collect();
    header.extend((0..field.ncomp()).map(|c| format!("c{c}")));
    out.write_record(&header)?;
    for ix in 0..g.len() {
        let x = g.center(ix);
        let row: Vec<String> = x[..g.dim()]
            .iter()
            .chain(field.at(ix))
            .map(|v| v.to_string())
            .collect();
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_sixteen_bytes_in_2d() {
        let g = Grid::new(&[1.0, 2.0], &[4, 6]).unwrap();
        let f = Field::from_fn(g, 3, |x, o| {
            o[0] = x[0];
            o[1] = x[1];
            o[2] = -1.5;
        });
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"ISMF");
        assert_eq!(buf[4], 2);
        assert_eq!(buf[5], 3);
        assert_eq!(&buf[6..8], &[0, 0]);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 6);
        assert_eq!(buf.len(), 16 + 24 * 3 * 8);
        let back = read_binary(&buf[..], &[1.0, 2.0]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn one_and_three_dimensional_headers() {
        assert_eq!(header_len(1), 16);
        assert_eq!(header_len(3), 20);
        let g = Grid::new(&[1.0, 1.0, 1.0], &[4, 4, 5]).unwrap();
        let f = Field::constant(g, &[0.25]);
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        assert_eq!(read_binary(&buf[..], &[1.0, 1.0, 1.0]).unwrap(), f);
        assert!(read_binary(&b"NOPE0000000000000000"[..], &[1.0]).is_err());
    }

    #[test]
    fn csv_columns() {
        let g = Grid::new(&[1.0, 1.0], &[4, 4]).unwrap();
        let f = Field::constant(g, &[0.0, 0.0, 1.0]);
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,y,c0,c1,c2");
        assert_eq!(lines.next().unwrap(), "0.125,0.125,0,0,1");
        assert_eq!(text.lines().count(), 17);
    }
}
