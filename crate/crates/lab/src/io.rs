//! Output formats: CSV tables and the flat binary array layout.
//!
//! Flat binary layout, all little-endian:
//!
//! ```text
//! magic  b"RGNSFLAT"
//! u64    format version (1)
//! u64    number of dims, then one u64 per dim
//! u64    number of grid params, then one f64 per param
//! f64    payload, row-major (last dim fastest)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

const MAGIC: &[u8; 8] = b"RGNSFLAT";
const VERSION: u64 = 1;

/// A table with a fixed header order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| LabError::Format(e.to_string()))
    }
}

/// Reads a CSV written by [`Table::to_csv`].
pub fn read_csv(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Table { name, header, rows })
}

/// Stable text form of a float for tables: plain notation in a readable
/// range, scientific outside it.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e7).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// An n-dimensional array of `f64` with grid parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatArray {
    pub dims: Vec<u64>,
    /// Grid parameters, e.g. `[t0, t1, half_width]`.
    pub params: Vec<f64>,
    pub data: Vec<f64>,
}

impl FlatArray {
    pub fn new(dims: Vec<u64>, params: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        let len: u64 = dims.iter().product();
        if len as usize != data.len() {
            return Err(LabError::Format(format!("dims {dims:?} hold {len} values, payload has {}", data.len())));
        }
        Ok(Self { dims, params, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (4 + self.dims.len() + self.params.len() + self.data.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u64).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut bytes, &mut magic)?;
        if &magic != MAGIC {
            return Err(LabError::Format("bad magic".into()));
        }
        if read_u64(&mut bytes)? != VERSION {
            return Err(LabError::Format("unsupported version".into()));
        }
        let nd = read_u64(&mut bytes)?;
        if nd > 16 {
            return Err(LabError::Format(format!("implausible dimension count {nd}")));
        }
        let dims = (0..nd).map(|_| read_u64(&mut bytes)).collect::<Result<Vec<_>>>()?;
        let np = read_u64(&mut bytes)?;
        if np > 1024 {
            return Err(LabError::Format(format!("implausible parameter count {np}")));
        }
        let params = (0..np).map(|_| read_u64(&mut bytes).map(f64::from_bits)).collect::<Result<Vec<_>>>()?;
        let len = dims
            .iter()
            .try_fold(1u64, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| LabError::Format("size overflow".into()))?;
        if bytes.len() as u64 != len * 8 {
            return Err(LabError::Format(format!("payload has {} bytes, expected {}", bytes.len(), len * 8)));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Self { dims, params, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|source| LabError::Read { path: path.to_owned(), source })?;
        Self::from_bytes(&buf)
    }
}

fn read_exact(bytes: &mut &[u8], out: &mut [u8]) -> Result<()> {
    bytes.read_exact(out).map_err(|_| LabError::Format("truncated header".into()))
}

fn read_u64(bytes: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(bytes, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|source| LabError::Write { path: path.to_owned(), source })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let a = FlatArray::new(vec![2, 3], vec![-1.0, 1.0], (0..6).map(|i| i as f64 * 0.5).collect()).unwrap();
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2);
        assert_eq!(FlatArray::from_bytes(&bytes).unwrap(), a);
        assert!(FlatArray::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(FlatArray::new(vec![2, 2], vec![], vec![0.0; 3]).is_err());
    }

    #[test]
    fn numbers_are_stable() {
        assert_eq!(num(0.5), "0.5");
        assert_eq!(num(0.0), "0");
        assert_eq!(num(1.5e-9), "1.5e-9");
        assert_eq!(num(f64::NAN), "NaN");
    }

    #[test]
    fn csv_has_header_first() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        assert_eq!(String::from_utf8(t.to_csv().unwrap()).unwrap(), "a,b\n1,2\n");
    }
}
