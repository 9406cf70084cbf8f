//! `CHNL1` binary field snapshots and their CSV export.
//!
//! Layout: the ASCII line `CHNL1`, the ASCII line `d n L t`, then `n^d`
//! little-endian `f64` values in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{TorusField, TorusGrid};

pub const MAGIC: &str = "CHNL1";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: TorusField,
    pub t: f64,
}

pub fn encode(field: &TorusField, t: f64) -> Vec<u8> {
    let g = field.grid();
    let mut out = format!("{MAGIC}\n{} {} {} {}\n", g.dim(), g.n(), g.length(), t).into_bytes();
    out.reserve(8 * g.len());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn next_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| Error::Format("header is not ASCII".into()))
}

pub fn decode(bytes: &[u8]) -> Result<Snapshot> {
    let mut pos = 0;
    if next_line(bytes, &mut pos)? != MAGIC {
        return Err(Error::Format(format!("missing {MAGIC} magic line")));
    }
    let header = next_line(bytes, &mut pos)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(Error::Format(format!("header needs `d n L t`, got `{header}`")));
    }
    let bad = |what: &str| Error::Format(format!("cannot parse {what} in header `{header}`"));
    let d: usize = parts[0].parse().map_err(|_| bad("d"))?;
    let n: usize = parts[1].parse().map_err(|_| bad("n"))?;
    let l: f64 = parts[2].parse().map_err(|_| bad("L"))?;
    let t: f64 = parts[3].parse().map_err(|_| bad("t"))?;
    let grid = TorusGrid::new(d, n, l)?;
    let payload = &bytes[pos..];
    if payload.len() != 8 * grid.len() {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            8 * grid.len(),
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Snapshot {
        field: TorusField::new(grid, values)?,
        t,
    })
}

pub fn write(path: &Path, field: &TorusField, t: f64) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(field, t))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Snapshot> {
    decode(&fs::read(path)?)
}

/// CSV with header `x,u` (1D) or `x,y,u` (2D) and one row per node.
pub fn to_plot_csv(field: &TorusField) -> String {
    let g = field.grid();
    let mut out = String::with_capacity(32 * g.len());
    out.push_str(if g.dim() == 1 { "x,u\n" } else { "x,y,u\n" });
    for (i, v) in field.values().iter().enumerate() {
        let x = g.coords(i);
        let _ = if g.dim() == 1 {
            writeln!(out, "{},{}", x[0], v)
        } else {
            writeln!(out, "{},{},{}", x[0], x[1], v)
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = TorusGrid::new(2, 8, 1.5).unwrap();
        let f = TorusField::from_fn(g, |x| (x[0] * 3.1).sin() + x[1] / 7.0);
        let bytes = encode(&f, 0.1 + 0.2);
        let s = decode(&bytes).unwrap();
        assert_eq!(s.field, f);
        assert_eq!(s.t, 0.1 + 0.2);
        assert!(bytes.starts_with(b"CHNL1\n2 8 1.5 0.30000000000000004\n"));
    }

    #[test]
    fn rejects_corrupt_input() {
        let g = TorusGrid::new(1, 8, 1.0).unwrap();
        let mut bytes = encode(&TorusField::zeros(g), 0.0);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
        assert!(decode(b"CHNL1\n1 7 1 0\n").is_err());
    }

    #[test]
    fn plot_csv_has_one_row_per_node() {
        let g = TorusGrid::new(2, 8, 1.0).unwrap();
        let csv = to_plot_csv(&TorusField::zeros(g));
        assert_eq!(csv.lines().count(), 1 + 64);
        assert!(csv.starts_with("x,y,u\n"));
    }
}
